#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <limits>

#include "qaft/errors.hpp"
#include "qaft/inference.hpp"
#include "qaft/io.hpp"
#include "qaft/modelcheck.hpp"
#include "qaft/sampler.hpp"
#include "qaft/simulate.hpp"

namespace py = pybind11;
using namespace qaft;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

// Parsed configuration plus data-resolved model.
struct PyModel {
  io::RunConfig cfg;
};

struct PyData {
  ModelSpec model;
  std::vector<SubjectRecord> records;
};

struct PyFit {
  ModelSpec model;
  std::vector<SubjectRecord> data;
  PriorSpec priors;
  SamplerConfig sampler;
  PosteriorDraws draws;
};

py::dict loo_dict(const LooResult& r) {
  py::dict d;
  d["elpd"] = r.elpd;
  d["elpd_se"] = r.elpd_se;
  d["minus2elpd"] = r.minus2elpd;
  d["lpd"] = r.lpd;
  d["p_loo"] = r.p_loo;
  d["elpd_i"] = r.elpd_i;
  d["khat"] = r.khat;
  d["warnings"] = r.warnings;
  return d;
}

py::dict curve_dict(const CurveTable& t) {
  std::vector<double> a, mean, median, lo, hi;
  std::vector<std::string> group;
  std::vector<bool> extra;
  for (const auto& r : t.rows) {
    a.push_back(r.abscissa);
    group.push_back(r.group);
    mean.push_back(r.mean);
    median.push_back(r.median);
    lo.push_back(r.lo95);
    hi.push_back(r.hi95);
    extra.push_back(r.extrapolated);
  }
  py::dict d;
  d["abscissa"] = py::array_t<double>(a.size(), a.data());
  d["group"] = group;
  d["mean"] = py::array_t<double>(mean.size(), mean.data());
  d["median"] = py::array_t<double>(median.size(), median.data());
  d["lo95"] = py::array_t<double>(lo.size(), lo.data());
  d["hi95"] = py::array_t<double>(hi.size(), hi.data());
  d["extrapolated"] = extra;
  return d;
}

int covariate_index(const ModelSpec& m, const std::string& name) {
  for (int j = 0; j < m.num_covariates(); ++j)
    if (m.covariates[j] == name) return j;
  throw ValidationError("unknown covariate '" + name + "'");
}

py::array_t<double> column(const std::vector<SubjectRecord>& recs, double SubjectRecord::*field) {
  py::array_t<double> out(recs.size());
  auto v = out.mutable_unchecked<1>();
  for (std::size_t i = 0; i < recs.size(); ++i) v(i) = recs[i].*field;
  return out;
}

}  // namespace

PYBIND11_MODULE(_qaft, m) {
  m.doc() = "Bayesian quantile-varying accelerated failure time models";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<PyData>(m, "Dataset")
      .def("__len__", [](const PyData& d) { return d.records.size(); })
      .def_property_readonly("y_l", [](const PyData& d) { return column(d.records, &SubjectRecord::y_lower); })
      .def_property_readonly("y_u", [](const PyData& d) { return column(d.records, &SubjectRecord::y_upper); })
      .def_property_readonly("trunc", [](const PyData& d) { return column(d.records, &SubjectRecord::truncation); })
      .def_property_readonly("tx_time", [](const PyData& d) { return column(d.records, &SubjectRecord::onset); })
      .def_property_readonly("delta",
                             [](const PyData& d) {
                               py::array_t<int> out(d.records.size());
                               auto v = out.mutable_unchecked<1>();
                               for (std::size_t i = 0; i < d.records.size(); ++i) v(i) = d.records[i].event;
                               return out;
                             })
      .def_property_readonly("x",
                             [](const PyData& d) {
                               Eigen::MatrixXd x(d.records.size(), d.model.num_covariates());
                               for (std::size_t i = 0; i < d.records.size(); ++i)
                                 for (int j = 0; j < d.model.num_covariates(); ++j) x(i, j) = d.records[i].x[j];
                               return x;
                             })
      .def("to_csv", [](const PyData& d) { return io::format_data_csv(d.records, d.model); });

  py::class_<PyModel>(m, "Model")
      .def(py::init([](const std::string& config_json) {
             return PyModel{io::parse_config(io::json::parse(config_json))};
           }),
           py::arg("config_json"))
      .def_property_readonly("parameter_names",
                             [](const PyModel& pm) { return ParameterLayout(pm.cfg.model).names(); })
      .def(
          "read_csv",
          [](const PyModel& pm, const std::string& path) {
            return PyData{pm.cfg.model, io::read_data_csv(path, pm.cfg.model)};
          },
          py::arg("path"))
      .def(
          "parse_csv",
          [](const PyModel& pm, const std::string& text) {
            return PyData{pm.cfg.model, io::parse_data_csv(text, pm.cfg.model)};
          },
          py::arg("text"))
      .def(
          "simulate",
          [](const PyModel& pm, std::optional<std::uint64_t> seed) {
            if (!pm.cfg.has_simulation) throw ValidationError("config: simulate section required");
            SimConfig sim = pm.cfg.simulation;
            if (seed) sim.seed = *seed;
            py::gil_scoped_release release;
            return PyData{sim.model, simulate_dataset(sim)};
          },
          py::arg("seed") = py::none())
      .def(
          "loglik",
          [](const PyModel& pm, const PyData& d) {
            if (!pm.cfg.has_parameters) throw ValidationError("config: parameters section required");
            return loglik_total(pm.cfg.model, pm.cfg.parameters, d.records);
          },
          py::arg("data"))
      .def(
          "acceleration_factor",
          [](const PyModel& pm, const std::vector<double>& p, const std::string& covariate, double exposed,
             double reference, double onset) {
            if (!pm.cfg.has_parameters) throw ValidationError("config: parameters section required");
            const ModelSpec& mm = pm.cfg.model;
            std::vector<double> x(mm.num_covariates(), 0.0), x_ref(mm.num_covariates(), 0.0);
            if (!covariate.empty()) {
              const int j = covariate_index(mm, covariate);
              x[j] = exposed;
              x_ref[j] = reference;
            }
            std::vector<double> out;
            for (double pj : p) out.push_back(acceleration_factor(mm, pm.cfg.parameters, pj, x, onset, x_ref, kInf));
            return out;
          },
          py::arg("p"), py::arg("covariate") = "", py::arg("exposed") = 1.0, py::arg("reference") = 0.0,
          py::arg("onset") = kInf)
      .def(
          "fit",
          [](const PyModel& pm, const PyData& d, std::optional<std::uint64_t> seed, int threads) {
            const auto data = pm.cfg.interval_midpoints ? intervals_to_midpoints(d.records) : d.records;
            PyFit f;
            f.model = io::resolve_model(pm.cfg, data);
            f.data = data;
            f.priors = pm.cfg.priors;
            f.sampler = pm.cfg.sampler;
            if (seed) f.sampler.seed = *seed;
            f.sampler.threads = threads;
            py::gil_scoped_release release;
            f.draws = run_chains(f.model, f.data, f.priors, f.sampler);
            return f;
          },
          py::arg("data"), py::arg("seed") = py::none(), py::arg("threads") = 1);

  py::class_<PyFit>(m, "Fit")
      .def_property_readonly("names", [](const PyFit& f) { return f.draws.names; })
      .def_property_readonly("draws", [](const PyFit& f) { return f.draws.constrained; })
      .def_property_readonly("chain", [](const PyFit& f) { return f.draws.chain; })
      .def_property_readonly("divergent", [](const PyFit& f) { return f.draws.num_divergent(); })
      .def_property_readonly("knots", [](const PyFit& f) { return f.model.effect.knots; })
      .def("draws_csv", [](const PyFit& f) { return io::format_draws_csv(f.draws); })
      .def("summary",
           [](const PyFit& f) {
             py::list out;
             for (const auto& s : summarize(f.draws)) {
               py::dict d;
               d["name"] = s.name;
               d["mean"] = s.mean;
               d["sd"] = s.sd;
               d["median"] = s.median;
               d["lo95"] = s.lo95;
               d["hi95"] = s.hi95;
               d["rhat"] = s.rhat;
               d["ess"] = s.ess;
               out.append(d);
             }
             return out;
           })
      .def("pointwise_loglik",
           [](const PyFit& f, int threads) { return pointwise_loglik(f.model, f.draws, f.data, threads); },
           py::arg("threads") = 1)
      .def("loo", [](const PyFit& f) { return loo_dict(psis_loo(pointwise_loglik(f.model, f.draws, f.data))); })
      .def(
          "standardized_af",
          [](const PyFit& f, const std::string& covariate, double exposed, double reference, double onset,
             std::optional<std::vector<double>> p, int threads) {
            Exposure e, r;
            if (f.model.time_varying) {
              e.onset = onset;
            } else {
              e.covariate = r.covariate = covariate_index(f.model, covariate);
              e.level = exposed;
              r.level = reference;
            }
            const auto grid = p ? *p : default_p_grid();
            py::gil_scoped_release release;
            auto res = standardized_af(f.model, f.draws, f.data, e, r, grid, "af", threads);
            py::gil_scoped_acquire acquire;
            return curve_dict(res.table);
          },
          py::arg("covariate") = "", py::arg("exposed") = 1.0, py::arg("reference") = 0.0, py::arg("onset") = kInf,
          py::arg("p") = py::none(), py::arg("threads") = 1)
      .def(
          "standardized_survivor",
          [](const PyFit& f, const std::string& covariate, const std::vector<double>& levels,
             const std::vector<double>& times, int threads) {
            std::vector<Exposure> groups;
            for (double v : levels) {
              Exposure e;
              if (f.model.time_varying) {
                e.onset = v;
                e.label = format_onset(v);
              } else {
                e.covariate = covariate_index(f.model, covariate);
                e.level = v;
                e.label = covariate + "=" + io::format_double(v);
              }
              groups.push_back(e);
            }
            return curve_dict(standardized_survivor_curves(f.model, f.draws, f.data, groups, times, threads));
          },
          py::arg("covariate"), py::arg("levels"), py::arg("times"), py::arg("threads") = 1)
      .def(
          "af_surface",
          [](const PyFit& f, const std::vector<double>& onsets, std::optional<std::vector<double>> p, int threads) {
            const auto grid = p ? *p : default_p_grid();
            return curve_dict(af_surface(f.model, f.draws, f.data, onsets, grid, threads));
          },
          py::arg("onsets"), py::arg("p") = py::none(), py::arg("threads") = 1);

  m.def(
      "baseline_survivor",
      [](const std::string& family, double mu, double sigma, const std::vector<double>& t,
         std::optional<std::vector<double>> w, const std::string& centering) {
        BaselineSpec spec;
        const io::json j = {{"covariates", io::json::array()},
                            {"baseline", {{"family", family}, {"centering", centering}, {"K", w ? w->size() : 0}}}};
        spec = io::parse_config(j).model.baseline;
        const Baseline base = w ? Baseline(spec, {mu, sigma}, *w) : Baseline(spec, {mu, sigma});
        std::vector<double> out;
        for (double v : t) out.push_back(base.survivor(v));
        return out;
      },
      py::arg("family"), py::arg("mu"), py::arg("sigma"), py::arg("t"), py::arg("w") = py::none(),
      py::arg("centering") = "weibull");
  m.def(
      "psis_loo", [](const Eigen::MatrixXd& ll) { return loo_dict(psis_loo(ll)); }, py::arg("loglik"));
  m.def(
      "rhat",
      [](const Eigen::MatrixXd& chains) {
        std::vector<Eigen::VectorXd> c;
        for (Eigen::Index k = 0; k < chains.rows(); ++k) c.push_back(chains.row(k).transpose());
        return rhat(c);
      },
      py::arg("chains"), "Split R-hat of a (chains x draws) array.");
  m.def(
      "ess",
      [](const Eigen::MatrixXd& chains) {
        std::vector<Eigen::VectorXd> c;
        for (Eigen::Index k = 0; k < chains.rows(); ++k) c.push_back(chains.row(k).transpose());
        return ess(c);
      },
      py::arg("chains"), "Effective sample size of a (chains x draws) array.");
}
