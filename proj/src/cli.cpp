#include "qaft/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>

#include "qaft/errors.hpp"
#include "qaft/inference.hpp"
#include "qaft/io.hpp"
#include "qaft/modelcheck.hpp"
#include "qaft/sampler.hpp"
#include "qaft/simulate.hpp"

namespace qaft {

namespace {

namespace fs = std::filesystem;
using io::json;

const double kInf = std::numeric_limits<double>::infinity();

struct Options {
  std::string data, config, out, fit;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
  // contrasts and grids
  std::string covariate;
  double exposed = 1.0, reference = 0.0;
  std::string levels = "0,1";
  std::string onsets;
  std::string p_grid;
  std::string t_grid;
  int points = 50;
  int thin = 10;
  bool analytic = false;
  bool refit = false;
  std::vector<std::string> loo_dirs;
};

int thread_count(const Options& o) {
  if (o.threads > 0) return o.threads;
  if (const char* env = std::getenv("QAFT_THREADS")) {
    const double v = io::parse_double(env, "QAFT_THREADS");
    if (!(v >= 1) || v != std::floor(v)) throw ValidationError("QAFT_THREADS: expected a positive integer");
    return static_cast<int>(v);
  }
  return 1;
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "never")
      out.push_back(kInf);
    else
      out.push_back(io::parse_double(item, what));
  }
  if (out.empty()) throw ValidationError(what + ": empty list");
  return out;
}

std::vector<double> p_grid_of(const Options& o) {
  if (o.p_grid.empty()) return default_p_grid();
  auto p = parse_list(o.p_grid, "--p-grid");
  for (double v : p)
    if (!(v > 0.0 && v < 1.0)) throw ValidationError("--p-grid: probabilities must lie in (0, 1)");
  return p;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ValidationError(std::string("missing required option ") + flag);
}

struct FitArtifacts {
  ModelSpec model;
  PriorSpec priors;
  SamplerConfig sampler;
  bool interval_midpoints = false;
  std::string fingerprint;
  json meta;
  PosteriorDraws draws;
};

fs::path artifact(const fs::path& dir, const char* name) {
  const fs::path p = dir / name;
  if (!fs::exists(p)) throw ValidationError("missing fit artifact " + p.string());
  return p;
}

FitArtifacts load_fit(const fs::path& dir) {
  FitArtifacts f;
  try {
    f.meta = json::parse(io::read_file(artifact(dir, "fit.json")));
    f.model = io::model_from_json(f.meta.at("model"));
    const json& p = f.meta.at("priors");
    f.priors = {p.at("a_sigma"), p.at("b_sigma"), p.at("a_theta"), p.at("b_theta")};
    const json& s = f.meta.at("sampler");
    f.sampler.chains = s.at("chains");
    f.sampler.warmup = s.at("warmup");
    f.sampler.iters = s.at("iters");
    f.sampler.seed = s.at("seed");
    f.sampler.target_accept = s.at("target_accept");
    f.sampler.thin = s.at("thin");
    f.sampler.max_tree_depth = s.at("max_tree_depth");
    f.interval_midpoints = f.meta.at("interval_midpoints");
    f.fingerprint = f.meta.at("data_fingerprint");
  } catch (const json::exception& e) {
    throw ValidationError("fit.json: " + std::string(e.what()));
  }
  f.draws = io::parse_draws_csv(io::read_file(artifact(dir, "draws.csv")), f.model, "draws.csv");
  return f;
}

// Reads the data and checks they are the ones the fit used.
std::vector<SubjectRecord> fit_data(const FitArtifacts& f, const Options& o) {
  require(o.data, "--data");
  auto data = io::read_data_csv(o.data, f.model);
  if (io::data_fingerprint(data) != f.fingerprint)
    throw ValidationError("data file does not match the data the fit was run on");
  if (f.interval_midpoints) data = intervals_to_midpoints(data);
  return data;
}

fs::path out_dir(const Options& o, bool fallback_to_fit) {
  if (!o.out.empty()) return o.out;
  if (fallback_to_fit && !o.fit.empty()) return o.fit;
  throw ValidationError("missing required option --out");
}

int covariate_index(const ModelSpec& m, const std::string& name) {
  if (name.empty()) {
    if (m.covariates.empty()) throw ValidationError("model has no covariates");
    return m.effect.kind == EffectKind::Constant ? 0 : m.effect.flexible_covariate;
  }
  for (int j = 0; j < m.num_covariates(); ++j)
    if (m.covariates[j] == name) return j;
  throw ValidationError("--covariate: '" + name + "' is not a model covariate");
}

void print_summary(std::ostream& out, const std::vector<ParamSummary>& summary) {
  out << std::left << std::setw(16) << "parameter" << std::right << std::setw(12) << "median" << std::setw(12) << "lo95"
      << std::setw(12) << "hi95" << std::setw(9) << "rhat" << std::setw(9) << "ess" << '\n';
  for (const auto& s : summary) {
    out << std::left << std::setw(16) << s.name << std::right << std::fixed << std::setprecision(4) << std::setw(12)
        << s.median << std::setw(12) << s.lo95 << std::setw(12) << s.hi95 << std::setw(9) << std::setprecision(3)
        << s.rhat << std::setw(9) << std::setprecision(0) << s.ess << '\n';
  }
  out.unsetf(std::ios::floatfield);
  out << std::setprecision(6);
}

int cmd_simulate(const Options& o, std::ostream& out) {
  require(o.config, "--config");
  const io::RunConfig cfg = io::load_config(o.config);
  if (!cfg.has_simulation) throw ValidationError("config: simulate section required");
  SimConfig sim = cfg.simulation;
  if (o.seed_set) sim.seed = o.seed;
  const auto data = simulate_dataset(sim);
  const fs::path dir = out_dir(o, false);
  io::write_file_atomic(dir / "data.csv", io::format_data_csv(data, sim.model));
  json truth;
  truth["model"] = io::model_to_json(sim.model);
  truth["parameters"] = io::parameters_to_json(sim.model, sim.psi);
  truth["seed"] = sim.seed;
  truth["n"] = sim.n;
  io::write_file_atomic(dir / "truth.json", truth.dump(2) + "\n");
  out << "wrote " << data.size() << " records to " << (dir / "data.csv").string() << '\n';
  return kExitOk;
}

int cmd_fit(const Options& o, std::ostream& out) {
  require(o.config, "--config");
  require(o.data, "--data");
  const io::RunConfig cfg = io::load_config(o.config);
  const auto raw = io::read_data_csv(o.data, cfg.model);
  if (raw.empty()) throw ValidationError("data file has no records");
  const auto data = cfg.interval_midpoints ? intervals_to_midpoints(raw) : raw;
  const ModelSpec model = io::resolve_model(cfg, data);
  validate_dataset(model, data);
  SamplerConfig sc = cfg.sampler;
  if (o.seed_set) sc.seed = o.seed;
  sc.threads = thread_count(o);
  const PosteriorDraws draws = run_chains(model, data, cfg.priors, sc);
  const auto summary = summarize(draws);

  const fs::path dir = out_dir(o, false);
  io::write_file_atomic(dir / "draws.csv", io::format_draws_csv(draws));
  io::write_file_atomic(dir / "summary.json", io::summary_to_json(summary).dump(2) + "\n");
  io::write_file_atomic(dir / "diagnostics.json", io::diagnostics_to_json(draws, summary).dump(2) + "\n");
  json meta;
  meta["model"] = io::model_to_json(model);
  meta["priors"] = {{"a_sigma", cfg.priors.a_sigma}, {"b_sigma", cfg.priors.b_sigma},
                    {"a_theta", cfg.priors.a_theta}, {"b_theta", cfg.priors.b_theta}};
  meta["sampler"] = {{"chains", sc.chains}, {"warmup", sc.warmup}, {"iters", sc.iters}, {"seed", sc.seed},
                     {"target_accept", sc.target_accept}, {"thin", sc.thin}, {"max_tree_depth", sc.max_tree_depth}};
  meta["interval_midpoints"] = cfg.interval_midpoints;
  meta["knot_rule"] = cfg.knots.text;
  meta["data_fingerprint"] = io::data_fingerprint(raw);
  meta["n"] = raw.size();
  meta["config"] = cfg.raw;
  io::write_file_atomic(dir / "fit.json", meta.dump(2) + "\n");

  print_summary(out, summary);
  out << "divergent transitions: " << draws.num_divergent() << '\n';
  return kExitOk;
}

int cmd_summarize(const Options& o, std::ostream& out) {
  require(o.fit, "--fit");
  const FitArtifacts f = load_fit(o.fit);
  const auto summary = summarize(f.draws);
  io::write_file_atomic(out_dir(o, true) / "summary.json", io::summary_to_json(summary).dump(2) + "\n");
  print_summary(out, summary);
  return kExitOk;
}

std::vector<Exposure> groups_of(const ModelSpec& m, const Options& o) {
  std::vector<Exposure> groups;
  if (m.time_varying) {
    const auto onsets = parse_list(o.onsets.empty() ? "never" : o.onsets, "--onsets");
    for (double t : onsets) {
      Exposure e;
      e.onset = t;
      e.label = t == kInf ? "never" : "onset=" + format_onset(t);
      groups.push_back(e);
    }
  } else {
    const int cov = covariate_index(m, o.covariate);
    for (double v : parse_list(o.levels, "--levels")) {
      Exposure e;
      e.covariate = cov;
      e.level = v;
      e.label = m.covariates[cov] + "=" + io::format_double(v);
      groups.push_back(e);
    }
  }
  return groups;
}

std::vector<double> time_grid(const Options& o, std::span<const SubjectRecord> data) {
  if (!o.t_grid.empty()) {
    auto t = parse_list(o.t_grid, "--t-grid");
    for (double v : t)
      if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("--t-grid: times must be finite and non-negative");
    return t;
  }
  if (o.points < 2) throw ValidationError("--points must be at least 2");
  double t_max = 0.0;
  for (const auto& r : data) t_max = std::max(t_max, r.follow_up());
  std::vector<double> t;
  for (int i = 0; i < o.points; ++i) t.push_back(t_max * i / (o.points - 1));
  return t;
}

int cmd_standardize(const Options& o, std::ostream& out) {
  require(o.fit, "--fit");
  const FitArtifacts f = load_fit(o.fit);
  const auto data = fit_data(f, o);
  const auto groups = groups_of(f.model, o);
  const auto t = time_grid(o, data);
  const CurveTable table = standardized_survivor_curves(f.model, f.draws, data, groups, t, thread_count(o));
  const fs::path path = out_dir(o, true) / "survivor.csv";
  io::write_file_atomic(path, io::format_curve_csv(table));
  out << "wrote " << table.rows.size() << " rows to " << path.string() << '\n';
  return kExitOk;
}

int cmd_af(const Options& o, std::ostream& out) {
  const auto p = p_grid_of(o);
  CurveTable table;
  if (o.analytic) {
    require(o.config, "--config");
    const io::RunConfig cfg = io::load_config(o.config);
    if (!cfg.has_parameters) throw ValidationError("config: parameters section required for --analytic");
    const ModelSpec& m = cfg.model;
    std::vector<double> x(m.num_covariates(), 0.0), x_ref(m.num_covariates(), 0.0);
    double onset = kInf;
    if (m.time_varying) {
      const auto onsets = parse_list(o.onsets.empty() ? "never" : o.onsets, "--onsets");
      if (onsets.size() != 1) throw ValidationError("--onsets: --analytic takes a single onset");
      onset = onsets[0];
    } else {
      const int cov = covariate_index(m, o.covariate);
      x[cov] = o.exposed;
      x_ref[cov] = o.reference;
    }
    for (double pj : p) {
      const double af = acceleration_factor(m, cfg.parameters, pj, x, onset, x_ref, kInf);
      table.rows.push_back({pj, "af", af, af, af, af, false});
    }
  } else {
    require(o.fit, "--fit");
    const FitArtifacts f = load_fit(o.fit);
    const auto data = fit_data(f, o);
    Exposure exposed, reference;
    if (f.model.time_varying) {
      const auto onsets = parse_list(o.onsets.empty() ? "never" : o.onsets, "--onsets");
      if (onsets.size() != 1) throw ValidationError("--onsets: af takes a single onset");
      exposed.onset = onsets[0];
    } else {
      exposed.covariate = reference.covariate = covariate_index(f.model, o.covariate);
      exposed.level = o.exposed;
      reference.level = o.reference;
    }
    table = standardized_af(f.model, f.draws, data, exposed, reference, p, "af", thread_count(o)).table;
  }
  const fs::path path = out_dir(o, true) / "af.csv";
  io::write_file_atomic(path, io::format_curve_csv(table));
  out << "wrote " << table.rows.size() << " rows to " << path.string() << '\n';
  return kExitOk;
}

int cmd_surface(const Options& o, std::ostream& out) {
  require(o.fit, "--fit");
  const FitArtifacts f = load_fit(o.fit);
  if (!f.model.time_varying) throw ValidationError("surface: the fitted model has no time-varying covariate");
  const auto data = fit_data(f, o);
  const auto onsets = o.onsets.empty() ? default_onset_grid(data) : parse_list(o.onsets, "--onsets");
  for (double t : onsets)
    if (!(t > 0.0) || !std::isfinite(t)) throw ValidationError("--onsets: surface onsets must be positive and finite");
  // Coarser defaults than af: p every 0.02 and every 10th draw.
  std::vector<double> p_grid;
  if (o.p_grid.empty())
    for (int i = 0; i < 50; ++i) p_grid.push_back(0.01 + 0.02 * i);
  else
    p_grid = p_grid_of(o);
  const PosteriorDraws draws = o.thin > 1 ? f.draws.thinned(o.thin) : f.draws;
  const CurveTable table = af_surface(f.model, draws, data, onsets, p_grid, thread_count(o));
  const fs::path path = out_dir(o, true) / "surface.csv";
  io::write_file_atomic(path, io::format_curve_csv(table));
  out << "wrote " << table.rows.size() << " rows to " << path.string() << '\n';
  return kExitOk;
}

int cmd_loo(const Options& o, std::ostream& out) {
  require(o.fit, "--fit");
  const FitArtifacts f = load_fit(o.fit);
  const auto data = fit_data(f, o);
  const int threads = thread_count(o);
  LooResult r = psis_loo(pointwise_loglik(f.model, f.draws, data, threads));
  if (o.refit) {
    SamplerConfig sc = f.sampler;
    sc.threads = threads;
    refit_high_khat(r, f.model, data, f.priors, sc);
  }
  const fs::path dir = out_dir(o, true);
  const std::string report = io::format_loo_report(r);
  io::write_file_atomic(dir / "loo_report.txt", report);
  io::write_file_atomic(dir / "loo_pointwise.csv", io::format_loo_pointwise(r));
  out << report;
  return kExitOk;
}

int cmd_compare(const Options& o, std::ostream& out) {
  if (o.loo_dirs.size() < 2) throw ValidationError("compare: give at least two --loo directories");
  std::vector<LooResult> results;
  for (const auto& d : o.loo_dirs)
    results.push_back(io::parse_loo(io::read_file(artifact(d, "loo_report.txt")),
                                    io::read_file(artifact(d, "loo_pointwise.csv"))));
  std::ostringstream csv;
  csv << "model,elpd,elpd_diff,se_diff,minus2elpd\n";
  for (const auto& row : compare(results)) {
    csv << o.loo_dirs[row.index] << ',' << io::format_double(row.elpd) << ',' << io::format_double(row.elpd_diff)
        << ',' << io::format_double(row.se_diff) << ',' << io::format_double(-2.0 * row.elpd) << '\n';
  }
  if (!o.out.empty()) io::write_file_atomic(fs::path(o.out) / "compare.csv", csv.str());
  out << csv.str();
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian quantile-varying accelerated failure time models"};
  app.require_subcommand(1);
  Options o;
  auto seed_opt = [&](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t& s) { o.seed = s; o.seed_set = true; }, "override the configured seed");
  };
  auto threads_opt = [&](CLI::App* sub) {
    sub->add_option("--threads", o.threads, "worker threads (default: QAFT_THREADS or 1)")->check(CLI::PositiveNumber);
  };
  auto fit_opts = [&](CLI::App* sub) {
    sub->add_option("--fit", o.fit, "fit output directory");
    sub->add_option("--data", o.data, "data CSV the fit was run on");
    sub->add_option("--out", o.out, "output directory (default: the fit directory)");
    threads_opt(sub);
  };

  auto* sim = app.add_subcommand("simulate", "simulate a data set from the config's simulate section");
  sim->add_option("--config", o.config, "JSON config");
  sim->add_option("--out", o.out, "output directory");
  seed_opt(sim);

  auto* fit = app.add_subcommand("fit", "fit a model by NUTS");
  fit->add_option("--data", o.data, "data CSV");
  fit->add_option("--config", o.config, "JSON config");
  fit->add_option("--out", o.out, "output directory");
  seed_opt(fit);
  threads_opt(fit);

  auto* summ = app.add_subcommand("summarize", "posterior medians, 95% intervals, R-hat and ESS");
  summ->add_option("--fit", o.fit, "fit output directory");
  summ->add_option("--out", o.out, "output directory (default: the fit directory)");

  auto* stdz = app.add_subcommand("standardize", "regression-standardized survivor curves");
  fit_opts(stdz);
  stdz->add_option("--covariate", o.covariate, "exposure covariate");
  stdz->add_option("--levels", o.levels, "comma-separated exposure levels");
  stdz->add_option("--onsets", o.onsets, "comma-separated onset times ('never' allowed)");
  stdz->add_option("--t-grid", o.t_grid, "comma-separated times");
  stdz->add_option("--points", o.points, "number of grid times up to the largest follow-up");

  auto* af = app.add_subcommand("af", "standardized acceleration factor over p");
  fit_opts(af);
  af->add_option("--config", o.config, "JSON config with parameters (--analytic)");
  af->add_option("--covariate", o.covariate, "exposure covariate");
  af->add_option("--exposed", o.exposed, "exposed level");
  af->add_option("--reference", o.reference, "reference level");
  af->add_option("--onsets", o.onsets, "onset time of the exposed group (time-varying models)");
  af->add_option("--p-grid", o.p_grid, "comma-separated survival probabilities");
  af->add_flag("--analytic", o.analytic, "evaluate the conditional AF at the config's parameters");

  auto* surf = app.add_subcommand("surface", "acceleration factor surface over onset time and p");
  fit_opts(surf);
  surf->add_option("--onsets", o.onsets, "comma-separated onset times");
  surf->add_option("--p-grid", o.p_grid, "comma-separated survival probabilities (default 0.01, 0.03, ..., 0.99)");
  surf->add_option("--thin", o.thin, "use every n-th draw")->check(CLI::PositiveNumber);

  auto* loo = app.add_subcommand("loo", "PSIS leave-one-out predictive accuracy");
  fit_opts(loo);
  loo->add_flag("--refit-high-khat", o.refit, "refit subjects with khat > 0.7 exactly");

  auto* cmp = app.add_subcommand("compare", "compare loo results");
  cmp->add_option("--loo", o.loo_dirs, "loo output directories")->expected(2, -1);
  cmp->add_option("--out", o.out, "write compare.csv here");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*sim) return cmd_simulate(o, out);
    if (*fit) return cmd_fit(o, out);
    if (*summ) return cmd_summarize(o, out);
    if (*stdz) return cmd_standardize(o, out);
    if (*af) return cmd_af(o, out);
    if (*surf) return cmd_surface(o, out);
    if (*loo) return cmd_loo(o, out);
    if (*cmp) return cmd_compare(o, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 1;
  }
  return kExitInput;
}

}  // namespace qaft
