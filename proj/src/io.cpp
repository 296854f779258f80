#include "qaft/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unistd.h>

#include "qaft/errors.hpp"
#include "qaft/numerics.hpp"

namespace qaft::io {

using numerics::kInf;
using numerics::kNaN;

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) { throw ValidationError(where + ": " + what); }

std::string path_key(const std::string& where, const std::string& key) { return where.empty() ? key : where + "." + key; }

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) fail(where.empty() ? "config" : where, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return it.key() == a; }))
      fail(path_key(where, it.key()), "unknown key");
  }
}

double get_number(const json& j, const char* key, const std::string& where, double fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "inf" || s == "Inf") return kInf;
  }
  if (!v.is_number()) fail(path_key(where, key), "expected a number");
  return v.get<double>();
}

double require_number(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) fail(path_key(where, key), "required");
  return get_number(j, key, where, 0.0);
}

int get_int(const json& j, const char* key, const std::string& where, int fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer()) fail(path_key(where, key), "expected an integer");
  return v.get<int>();
}

bool get_bool(const json& j, const char* key, const std::string& where, bool fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_boolean()) fail(path_key(where, key), "expected true or false");
  return j.at(key).get<bool>();
}

std::string get_string(const json& j, const char* key, const std::string& where, const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_string()) fail(path_key(where, key), "expected a string");
  return j.at(key).get<std::string>();
}

std::vector<double> get_numbers(const json& j, const char* key, const std::string& where) {
  const json& v = j.at(key);
  if (!v.is_array()) fail(path_key(where, key), "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) fail(path_key(where, key) + "[" + std::to_string(i) + "]", "expected a number");
    out.push_back(v[i].get<double>());
  }
  return out;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  if (line.empty()) out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

BaselineFamily parse_family(const std::string& s, const std::string& where) {
  if (s == "weibull") return BaselineFamily::Weibull;
  if (s == "lognormal") return BaselineFamily::LogNormal;
  if (s == "tbp") return BaselineFamily::Tbp;
  fail(where, "unknown baseline family '" + s + "' (weibull, lognormal, tbp)");
}

Centering parse_centering(const std::string& s, const std::string& where) {
  if (s == "weibull") return Centering::Weibull;
  if (s == "lognormal") return Centering::LogNormal;
  fail(where, "unknown centering '" + s + "' (weibull, lognormal)");
}

EffectKind parse_effect(const std::string& s, const std::string& where) {
  if (s == "constant") return EffectKind::Constant;
  if (s == "piecewise") return EffectKind::PiecewiseLinear;
  if (s == "spline") return EffectKind::NaturalCubicSpline;
  fail(where, "unknown effect kind '" + s + "' (constant, piecewise, spline)");
}

CovariateGenerator parse_generator(const json& j, const std::string& where) {
  const std::string dist = get_string(j, "dist", where, "");
  CovariateGenerator g;
  if (dist == "bernoulli") {
    check_keys(j, {"dist", "p"}, where);
    g = {CovariateGenerator::Kind::Bernoulli, get_number(j, "p", where, 0.5), 0.0};
  } else if (dist == "normal") {
    check_keys(j, {"dist", "mean", "sd"}, where);
    g = {CovariateGenerator::Kind::Normal, get_number(j, "mean", where, 0.0), get_number(j, "sd", where, 1.0)};
  } else if (dist == "uniform") {
    check_keys(j, {"dist", "lower", "upper"}, where);
    g = {CovariateGenerator::Kind::Uniform, get_number(j, "lower", where, 0.0), get_number(j, "upper", where, 1.0)};
  } else if (dist == "constant") {
    check_keys(j, {"dist", "value"}, where);
    g = {CovariateGenerator::Kind::Constant, require_number(j, "value", where), 0.0};
  } else {
    fail(path_key(where, "dist"), "expected bernoulli, normal, uniform or constant");
  }
  try {
    g.validate();
  } catch (const ValidationError& e) {
    fail(where, e.what());
  }
  return g;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

void write_file_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw ValidationError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& field, const std::string& where) {
  const std::string s = trim(field);
  if (s.empty()) fail(where, "empty numeric field");
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) fail(where, "not a number: '" + s + "'");
  return v;
}

int CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

CsvTable parse_csv(const std::string& text, const std::string& source) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.find('"') != std::string::npos) fail(source + ": line " + std::to_string(line_no), "quoted fields are not supported");
    auto fields = split(line, ',');
    for (auto& f : fields) f = trim(f);
    if (t.header.empty()) {
      t.header = fields;
      std::set<std::string> seen;
      for (const auto& h : t.header)
        if (!seen.insert(h).second) fail(source + ": header", "duplicate column '" + h + "'");
      continue;
    }
    if (fields.size() != t.header.size())
      fail(source + ": line " + std::to_string(line_no),
           "expected " + std::to_string(t.header.size()) + " fields, found " + std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
  }
  if (t.header.empty()) fail(source, "missing header row");
  return t;
}

std::vector<SubjectRecord> parse_data_csv(const std::string& text, const ModelSpec& model, const std::string& source) {
  const CsvTable t = parse_csv(text, source);
  auto need = [&](const std::string& name) {
    const int c = t.column(name);
    if (c < 0) fail(source, "missing column '" + name + "'");
    return c;
  };
  const int c_yl = need("y_l"), c_yu = need("y_u"), c_delta = need("delta"), c_trunc = need("trunc");
  std::vector<int> c_x;
  for (const auto& name : model.covariates) c_x.push_back(need(name));
  const int c_tx = model.time_varying ? need("tx_time") : -1;

  std::vector<SubjectRecord> data;
  data.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = source + ": row " + std::to_string(r + 1);
    SubjectRecord rec;
    rec.y_lower = parse_double(row[c_yl], where + ", y_l");
    if (row[c_delta] == "1") {
      rec.event = true;
    } else if (row[c_delta] != "0") {
      fail(where + ", delta", "expected 0 or 1");
    }
    const std::string& yu = row[c_yu];
    if (yu.empty() || yu == "inf" || yu == "Inf")
      rec.y_upper = rec.event ? rec.y_lower : kInf;
    else
      rec.y_upper = parse_double(yu, where + ", y_u");
    rec.truncation = parse_double(row[c_trunc], where + ", trunc");
    for (std::size_t j = 0; j < c_x.size(); ++j)
      rec.x.push_back(parse_double(row[c_x[j]], where + ", " + model.covariates[j]));
    if (c_tx >= 0) {
      const std::string& tx = row[c_tx];
      rec.onset = (tx.empty() || tx == "inf" || tx == "Inf") ? kInf : parse_double(tx, where + ", tx_time");
    }
    try {
      rec.validate(model);
    } catch (const ValidationError& e) {
      fail(where, e.what());
    }
    data.push_back(std::move(rec));
  }
  return data;
}

std::vector<SubjectRecord> read_data_csv(const fs::path& path, const ModelSpec& model) {
  return parse_data_csv(read_file(path), model, path.filename().string());
}

std::string format_data_csv(std::span<const SubjectRecord> data, const ModelSpec& model) {
  std::ostringstream out;
  out << "y_l,y_u,delta,trunc";
  for (const auto& name : model.covariates) out << ',' << name;
  if (model.time_varying) out << ",tx_time";
  out << '\n';
  for (const auto& r : data) {
    out << format_double(r.y_lower) << ',' << format_double(r.y_upper) << ',' << (r.event ? 1 : 0) << ','
        << format_double(r.truncation);
    for (double v : r.x) out << ',' << format_double(v);
    if (model.time_varying) out << ',' << format_double(r.onset);
    out << '\n';
  }
  return out.str();
}

std::string data_fingerprint(std::span<const SubjectRecord> data) {
  std::ostringstream canon;
  for (const auto& r : data) {
    canon << format_double(r.y_lower) << ',' << format_double(r.y_upper) << ',' << r.event << ','
          << format_double(r.truncation) << ',' << format_double(r.onset);
    for (double v : r.x) canon << ',' << format_double(v);
    canon << ';';
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, "%zu:%016llx", data.size(), static_cast<unsigned long long>(fnv1a(canon.str())));
  return buf;
}

KnotRule parse_knot_rule(const std::string& rule, const std::string& where) {
  KnotRule k;
  k.text = rule;
  const auto colon = rule.find(':');
  const std::string name = rule.substr(0, colon);
  const std::string args = colon == std::string::npos ? "" : rule.substr(colon + 1);
  if (name == "quantiles") {
    k.kind = KnotRule::Kind::Quantiles;
    const auto parts = split(args, ',');
    if (parts.empty() || parts.size() > 2) fail(where, "expected quantiles:<count>[,log]");
    int count = 0;
    const auto [ptr, ec] = std::from_chars(parts[0].data(), parts[0].data() + parts[0].size(), count);
    if (ec != std::errc() || ptr != parts[0].data() + parts[0].size() || count < 1)
      fail(where, "quantile knot count must be a positive integer");
    k.count = count;
    if (parts.size() == 2) {
      if (parts[1] != "log") fail(where, "unknown quantile option '" + parts[1] + "'");
      k.log_scale = true;
    }
  } else if (name == "interval") {
    k.kind = KnotRule::Kind::Interval;
    k.width = parse_double(args, where);
    if (!(k.width > 0.0) || !std::isfinite(k.width)) fail(where, "interval width must be positive");
  } else {
    fail(where, "unknown placement rule '" + rule + "' (quantiles:<k>[,log] or interval:<width>)");
  }
  return k;
}

std::vector<double> knot_source_times(std::span<const SubjectRecord> data, const ModelSpec& model) {
  std::vector<double> out;
  for (const auto& r : data) {
    double t;
    if (r.event)
      t = r.y_lower;
    else if (!r.right_censored())
      t = 0.5 * (r.y_lower + r.y_upper);
    else
      continue;
    if (model.time_varying) {
      if (!(r.onset < t)) continue;
      t -= r.onset;
    }
    if (t > 0.0) out.push_back(t);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<double> place_knots(const KnotRule& rule, const ModelSpec& model, std::span<const SubjectRecord> data) {
  const bool spline = model.effect.kind == EffectKind::NaturalCubicSpline;
  std::vector<double> time_knots;
  switch (rule.kind) {
    case KnotRule::Kind::None:
      return {};
    case KnotRule::Kind::Explicit:
      time_knots = rule.knots;
      break;
    case KnotRule::Kind::Quantiles: {
      const std::vector<double> t = knot_source_times(data, model);
      if (static_cast<int>(t.size()) < rule.count + 2)
        throw ValidationError("effect.placement: too few observed event times for " + rule.text);
      std::vector<double> axis = t;
      if (rule.log_scale)
        for (double& v : axis) v = std::log(v);
      if (spline) time_knots.push_back(t.front());
      for (int j = 1; j <= rule.count; ++j) {
        const double q = numerics::quantile_sorted(axis, static_cast<double>(j) / (rule.count + 1));
        time_knots.push_back(rule.log_scale ? std::exp(q) : q);
      }
      if (spline) time_knots.push_back(t.back());
      break;
    }
    case KnotRule::Kind::Interval: {
      const std::vector<double> t = knot_source_times(data, model);
      if (t.empty()) throw ValidationError("effect.placement: no observed event times");
      for (double k = rule.width; k < t.back(); k += rule.width) time_knots.push_back(k);
      break;
    }
  }
  std::vector<double> knots;
  if (spline) {
    for (double k : time_knots) {
      if (!(k > 0.0)) throw ValidationError("effect.knots: spline knots must be positive times");
      knots.push_back(std::log(k));
    }
  } else {
    if (time_knots.empty() || time_knots.front() != 0.0) knots.push_back(0.0);
    knots.insert(knots.end(), time_knots.begin(), time_knots.end());
  }
  return knots;
}

json model_to_json(const ModelSpec& m) {
  json j;
  j["covariates"] = m.covariates;
  j["time_varying"] = m.time_varying;
  j["baseline"] = {{"family", to_string(m.baseline.family)}, {"centering", to_string(m.baseline.centering)}, {"K", m.baseline.K}};
  j["effect"] = {{"kind", to_string(m.effect.kind)}, {"flexible_covariate", m.effect.flexible_covariate}, {"knots", m.effect.knots}};
  return j;
}

ModelSpec model_from_json(const json& j) {
  const std::string where = "model";
  check_keys(j, {"covariates", "time_varying", "baseline", "effect"}, where);
  ModelSpec m;
  for (const auto& c : j.at("covariates")) m.covariates.push_back(c.get<std::string>());
  m.time_varying = get_bool(j, "time_varying", where, false);
  const json& b = j.at("baseline");
  m.baseline.family = parse_family(get_string(b, "family", "model.baseline", ""), "model.baseline.family");
  m.baseline.centering = parse_centering(get_string(b, "centering", "model.baseline", "weibull"), "model.baseline.centering");
  m.baseline.K = get_int(b, "K", "model.baseline", 0);
  const json& e = j.at("effect");
  m.effect.kind = parse_effect(get_string(e, "kind", "model.effect", "constant"), "model.effect.kind");
  m.effect.flexible_covariate = get_int(e, "flexible_covariate", "model.effect", 0);
  m.effect.knots = get_numbers(e, "knots", "model.effect");
  m.validate();
  return m;
}

json parameters_to_json(const ModelSpec& model, const ParameterVector& psi) {
  json j;
  j["beta"] = std::vector<double>(psi.beta.data(), psi.beta.data() + psi.beta.size());
  j["alpha"] = std::vector<double>(psi.alpha.data(), psi.alpha.data() + psi.alpha.size());
  j["mu"] = psi.mu;
  j["sigma"] = psi.sigma;
  if (model.baseline.is_tbp()) {
    j["w"] = std::vector<double>(psi.w.data(), psi.w.data() + psi.w.size());
    j["theta"] = psi.theta;
  }
  return j;
}

ParameterVector parameters_from_json(const ModelSpec& model, const json& j, const std::string& where) {
  check_keys(j, {"beta", "alpha", "mu", "sigma", "w", "theta"}, where);
  ParameterVector psi;
  auto vec = [&](const char* key, int size, double fill) {
    if (!j.contains(key)) {
      if (size > 0 && fill != fill) fail(path_key(where, key), "required");
      return Eigen::VectorXd::Constant(size, fill).eval();
    }
    const auto v = get_numbers(j, key, where);
    if (static_cast<int>(v.size()) != size)
      fail(path_key(where, key), "expected " + std::to_string(size) + " values, found " + std::to_string(v.size()));
    return to_vector(v);
  };
  psi.beta = vec("beta", model.num_beta(), kNaN);
  psi.alpha = vec("alpha", model.num_alpha(), 0.0);
  psi.mu = require_number(j, "mu", where);
  psi.sigma = require_number(j, "sigma", where);
  if (model.baseline.is_tbp()) {
    psi.w = vec("w", model.baseline.K, 1.0 / std::max(1, model.baseline.K));
    psi.theta = get_number(j, "theta", where, 1.0);
  }
  try {
    psi.validate(model);
  } catch (const std::exception& e) {
    fail(where, e.what());
  }
  return psi;
}

RunConfig parse_config(const json& j) {
  check_keys(j, {"covariates", "time_varying", "baseline", "effect", "priors", "sampler", "interval_midpoints",
                 "parameters", "simulate"},
             "");
  RunConfig cfg;
  cfg.raw = j;
  ModelSpec& m = cfg.model;
  if (!j.contains("covariates") || !j.at("covariates").is_array()) fail("covariates", "required array of names");
  for (std::size_t i = 0; i < j.at("covariates").size(); ++i) {
    const json& c = j.at("covariates")[i];
    if (!c.is_string()) fail("covariates[" + std::to_string(i) + "]", "expected a string");
    m.covariates.push_back(c.get<std::string>());
  }
  m.time_varying = get_bool(j, "time_varying", "", false);

  if (!j.contains("baseline")) fail("baseline", "required");
  const json& b = j.at("baseline");
  check_keys(b, {"family", "centering", "K"}, "baseline");
  m.baseline.family = parse_family(get_string(b, "family", "baseline", ""), "baseline.family");
  m.baseline.centering = parse_centering(get_string(b, "centering", "baseline", "weibull"), "baseline.centering");
  m.baseline.K = get_int(b, "K", "baseline", m.baseline.is_tbp() ? 5 : 0);

  if (j.contains("effect")) {
    const json& e = j.at("effect");
    check_keys(e, {"kind", "flexible_covariate", "knots", "placement"}, "effect");
    m.effect.kind = parse_effect(get_string(e, "kind", "effect", "constant"), "effect.kind");
    if (e.contains("flexible_covariate")) {
      const std::string name = get_string(e, "flexible_covariate", "effect", "");
      const auto it = std::find(m.covariates.begin(), m.covariates.end(), name);
      if (it == m.covariates.end()) fail("effect.flexible_covariate", "'" + name + "' is not a listed covariate");
      m.effect.flexible_covariate = static_cast<int>(it - m.covariates.begin());
    }
    if (e.contains("knots") && e.contains("placement")) fail("effect", "give either knots or placement, not both");
    if (e.contains("knots")) {
      cfg.knots.kind = KnotRule::Kind::Explicit;
      cfg.knots.knots = get_numbers(e, "knots", "effect");
      for (std::size_t i = 0; i < cfg.knots.knots.size(); ++i)
        if (!(cfg.knots.knots[i] >= 0.0) || !std::isfinite(cfg.knots.knots[i]))
          fail("effect.knots[" + std::to_string(i) + "]", "knots are non-negative times");
    } else if (e.contains("placement")) {
      cfg.knots = parse_knot_rule(get_string(e, "placement", "effect", ""), "effect.placement");
    }
  }
  if (m.effect.kind == EffectKind::Constant && cfg.knots.kind != KnotRule::Kind::None)
    fail("effect", "knots are only used by piecewise and spline effects");
  if (m.effect.kind != EffectKind::Constant && cfg.knots.kind == KnotRule::Kind::None)
    fail("effect", "piecewise and spline effects need knots or a placement rule");
  if (cfg.knots.kind == KnotRule::Kind::Explicit) {
    m.effect.knots = place_knots(cfg.knots, m, {});
  } else if (m.effect.kind != EffectKind::Constant) {
    // placeholder knots until the data are read; the interval rule's knot count is data dependent
    const int J = cfg.knots.kind == KnotRule::Kind::Quantiles ? cfg.knots.count : 1;
    m.effect.knots.clear();
    for (int i = 0; i <= J; ++i) m.effect.knots.push_back(static_cast<double>(i));
    if (m.effect.kind == EffectKind::NaturalCubicSpline) m.effect.knots.push_back(J + 1.0);
  }
  if (!m.time_varying && m.effect.kind != EffectKind::Constant && m.covariates.empty())
    fail("effect", "a flexible effect needs at least one covariate");
  try {
    m.validate();
  } catch (const ValidationError& e) {
    fail("model", e.what());
  }

  if (j.contains("priors")) {
    const json& p = j.at("priors");
    check_keys(p, {"a_sigma", "b_sigma", "a_theta", "b_theta"}, "priors");
    cfg.priors.a_sigma = get_number(p, "a_sigma", "priors", cfg.priors.a_sigma);
    cfg.priors.b_sigma = get_number(p, "b_sigma", "priors", cfg.priors.b_sigma);
    cfg.priors.a_theta = get_number(p, "a_theta", "priors", cfg.priors.a_theta);
    cfg.priors.b_theta = get_number(p, "b_theta", "priors", cfg.priors.b_theta);
    try {
      cfg.priors.validate();
    } catch (const ValidationError& e) {
      fail("priors", e.what());
    }
  }

  if (j.contains("sampler")) {
    const json& s = j.at("sampler");
    check_keys(s, {"chains", "warmup", "iters", "seed", "target_accept", "thin", "max_tree_depth"}, "sampler");
    SamplerConfig& sc = cfg.sampler;
    sc.chains = get_int(s, "chains", "sampler", sc.chains);
    sc.warmup = get_int(s, "warmup", "sampler", sc.warmup);
    sc.iters = get_int(s, "iters", "sampler", sc.iters);
    if (s.contains("seed")) {
      if (!s.at("seed").is_number_unsigned()) fail("sampler.seed", "expected a non-negative integer");
      sc.seed = s.at("seed").get<std::uint64_t>();
    }
    sc.target_accept = get_number(s, "target_accept", "sampler", sc.target_accept);
    sc.thin = get_int(s, "thin", "sampler", sc.thin);
    sc.max_tree_depth = get_int(s, "max_tree_depth", "sampler", sc.max_tree_depth);
    try {
      sc.validate();
    } catch (const ValidationError& e) {
      fail("sampler", e.what());
    }
  }

  cfg.interval_midpoints = get_bool(j, "interval_midpoints", "", false);

  if (j.contains("parameters")) {
    if (cfg.knots.kind == KnotRule::Kind::Quantiles || cfg.knots.kind == KnotRule::Kind::Interval)
      fail("parameters", "fixed parameter values need explicit knots");
    cfg.has_parameters = true;
    cfg.parameters = parameters_from_json(m, j.at("parameters"), "parameters");
  }

  if (j.contains("simulate")) {
    const json& s = j.at("simulate");
    const std::string w = "simulate";
    check_keys(s, {"n", "seed", "covariates", "entry_max", "admin_censor", "censor_rate", "visit_interval",
                   "onset_rate", "onset_never"},
               w);
    if (!cfg.has_parameters) fail("parameters", "required by the simulate section");
    SimConfig& sim = cfg.simulation;
    sim.model = m;
    sim.psi = cfg.parameters;
    sim.n = get_int(s, "n", w, sim.n);
    if (s.contains("seed")) {
      if (!s.at("seed").is_number_unsigned()) fail("simulate.seed", "expected a non-negative integer");
      sim.seed = s.at("seed").get<std::uint64_t>();
    }
    sim.entry_max = get_number(s, "entry_max", w, sim.entry_max);
    sim.admin_censor = get_number(s, "admin_censor", w, sim.admin_censor);
    sim.censor_rate = get_number(s, "censor_rate", w, sim.censor_rate);
    sim.visit_interval = get_number(s, "visit_interval", w, sim.visit_interval);
    sim.onset_rate = get_number(s, "onset_rate", w, sim.onset_rate);
    sim.onset_never = get_number(s, "onset_never", w, sim.onset_never);
    const json gens = s.contains("covariates") ? s.at("covariates") : json::object();
    if (!gens.is_object()) fail("simulate.covariates", "expected an object keyed by covariate name");
    for (const auto& name : m.covariates) {
      if (!gens.contains(name)) {
        sim.covariates.push_back({});
        continue;
      }
      sim.covariates.push_back(parse_generator(gens.at(name), "simulate.covariates." + name));
    }
    for (auto it = gens.begin(); it != gens.end(); ++it)
      if (std::find(m.covariates.begin(), m.covariates.end(), it.key()) == m.covariates.end())
        fail("simulate.covariates." + it.key(), "not a listed covariate");
    try {
      sim.validate();
    } catch (const ValidationError& e) {
      fail("simulate", e.what());
    }
    cfg.has_simulation = true;
  }
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError(path.filename().string() + ": " + e.what());
  }
  return parse_config(j);
}

ModelSpec resolve_model(const RunConfig& cfg, std::span<const SubjectRecord> data) {
  ModelSpec m = cfg.model;
  if (cfg.knots.kind != KnotRule::Kind::None) m.effect.knots = place_knots(cfg.knots, m, data);
  try {
    m.validate();
  } catch (const ValidationError& e) {
    fail("effect", std::string("resolved knots are invalid: ") + e.what());
  }
  return m;
}

std::string format_draws_csv(const PosteriorDraws& d) {
  std::ostringstream out;
  out << "chain,iter";
  for (const auto& n : d.names) out << ',' << n;
  out << ",divergent,energy\n";
  for (int r = 0; r < d.rows(); ++r) {
    out << d.chain[r] << ',' << d.iter[r];
    for (Eigen::Index c = 0; c < d.constrained.cols(); ++c) out << ',' << format_double(d.constrained(r, c));
    out << ',' << (d.divergent[r] ? 1 : 0) << ',' << format_double(d.energy[r]) << '\n';
  }
  return out.str();
}

PosteriorDraws parse_draws_csv(const std::string& text, const ModelSpec& model, const std::string& source) {
  const ParameterLayout layout(model);
  const CsvTable t = parse_csv(text, source);
  std::vector<std::string> expected{"chain", "iter"};
  for (const auto& n : layout.names()) expected.push_back(n);
  expected.push_back("divergent");
  expected.push_back("energy");
  if (t.header != expected) fail(source, "header does not match the fitted model");
  if (t.rows.empty()) fail(source, "no draws");
  PosteriorDraws d;
  d.names = layout.names();
  d.unconstrained_names = layout.unconstrained_names();
  const int M = static_cast<int>(t.rows.size());
  const int P = layout.flat_dim();
  d.constrained.resize(M, P);
  d.unconstrained.resize(M, layout.dim());
  int max_chain = -1;
  for (int r = 0; r < M; ++r) {
    const auto& row = t.rows[r];
    const std::string where = source + ": row " + std::to_string(r + 1);
    const double chain = parse_double(row[0], where + ", chain");
    const double iter = parse_double(row[1], where + ", iter");
    if (chain < 0 || chain != std::floor(chain) || iter < 0 || iter != std::floor(iter))
      fail(where, "chain and iter must be non-negative integers");
    d.chain.push_back(static_cast<int>(chain));
    d.iter.push_back(static_cast<int>(iter));
    max_chain = std::max(max_chain, d.chain.back());
    for (int c = 0; c < P; ++c) d.constrained(r, c) = parse_double(row[2 + c], where + ", " + expected[2 + c]);
    if (row[2 + P] != "0" && row[2 + P] != "1") fail(where + ", divergent", "expected 0 or 1");
    d.divergent.push_back(row[2 + P] == "1");
    d.energy.push_back(parse_double(row[3 + P], where + ", energy"));
    const Eigen::VectorXd flat = d.constrained.row(r).transpose();
    const ParameterVector psi = layout.unflatten({flat.data(), static_cast<std::size_t>(P)});
    try {
      psi.validate(model);
    } catch (const std::exception& e) {
      fail(where, e.what());
    }
    d.unconstrained.row(r) = layout.unconstrain(psi).transpose();
    if (r > 0 && (d.chain[r] < d.chain[r - 1] || (d.chain[r] == d.chain[r - 1] && d.iter[r] <= d.iter[r - 1])))
      fail(where, "draws must be ordered by chain and iteration");
  }
  d.num_chains = max_chain + 1;
  d.log_density.assign(M, kNaN);
  d.accept_stat.assign(M, kNaN);
  d.tree_depth.assign(M, 0);
  return d;
}

json summary_to_json(std::span<const ParamSummary> summary) {
  json params = json::array();
  for (const auto& s : summary) {
    json p;
    p["name"] = s.name;
    p["median"] = s.median;
    p["lo95"] = s.lo95;
    p["hi95"] = s.hi95;
    p["mean"] = s.mean;
    p["sd"] = s.sd;
    p["rhat"] = std::isfinite(s.rhat) ? json(s.rhat) : json(nullptr);
    p["ess"] = s.ess;
    params.push_back(p);
  }
  return {{"parameters", params}};
}

json diagnostics_to_json(const PosteriorDraws& draws, std::span<const ParamSummary> summary) {
  json j;
  j["num_chains"] = draws.num_chains;
  j["num_draws"] = draws.rows();
  j["divergent"] = draws.num_divergent();
  double max_rhat = kNaN, min_ess = kInf;
  json per = json::array();
  for (const auto& s : summary) {
    if (std::isfinite(s.rhat) && !(s.rhat <= max_rhat)) max_rhat = s.rhat;
    min_ess = std::min(min_ess, s.ess);
    per.push_back({{"name", s.name}, {"rhat", std::isfinite(s.rhat) ? json(s.rhat) : json(nullptr)}, {"ess", s.ess}});
  }
  j["max_rhat"] = std::isfinite(max_rhat) ? json(max_rhat) : json(nullptr);
  j["min_ess"] = std::isfinite(min_ess) ? json(min_ess) : json(nullptr);
  j["parameters"] = per;
  json chains = json::array();
  for (const auto& c : draws.chain_info) {
    chains.push_back({{"step_size", c.step_size},
                      {"warmup_divergences", c.warmup_divergences},
                      {"init_attempts", c.init_attempts},
                      {"inv_metric", std::vector<double>(c.inv_metric.data(), c.inv_metric.data() + c.inv_metric.size())}});
  }
  j["chains"] = chains;
  return j;
}

std::string format_curve_csv(const CurveTable& table) {
  std::ostringstream out;
  out << CurveTable::header() << '\n';
  for (const auto& r : table.rows) {
    if (r.group.find_first_of(",\n\"") != std::string::npos) throw ValidationError("curve group label contains a separator");
    out << format_double(r.abscissa) << ',' << r.group << ',' << format_double(r.mean) << ',' << format_double(r.median)
        << ',' << format_double(r.lo95) << ',' << format_double(r.hi95) << ',' << (r.extrapolated ? 1 : 0) << '\n';
  }
  return out.str();
}

CurveTable parse_curve_csv(const std::string& text, const std::string& source) {
  const CsvTable t = parse_csv(text, source);
  if (t.header != split(CurveTable::header(), ',')) fail(source, "unexpected header");
  CurveTable table;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = source + ": row " + std::to_string(r + 1);
    CurveRow c;
    c.abscissa = parse_double(row[0], where);
    c.group = row[1];
    c.mean = parse_double(row[2], where);
    c.median = parse_double(row[3], where);
    c.lo95 = parse_double(row[4], where);
    c.hi95 = parse_double(row[5], where);
    if (row[6] != "0" && row[6] != "1") fail(where + ", extrapolated", "expected 0 or 1");
    c.extrapolated = row[6] == "1";
    table.rows.push_back(c);
  }
  return table;
}

std::string format_loo_report(const LooResult& r) {
  std::ostringstream out;
  out << "elpd = " << format_double(r.elpd) << '\n';
  out << "elpd_se = " << format_double(r.elpd_se) << '\n';
  out << "minus2elpd = " << format_double(r.minus2elpd) << '\n';
  out << "lpd = " << format_double(r.lpd) << '\n';
  out << "p_loo = " << format_double(r.p_loo) << '\n';
  out << "n = " << r.n() << '\n';
  out << "num_draws = " << r.num_draws << '\n';
  out << "khat_above_threshold = " << (r.khat.array() > kKhatThreshold).count() << '\n';
  for (const auto& w : r.warnings) out << "warning = " << w << '\n';
  return out.str();
}

std::string format_loo_pointwise(const LooResult& r) {
  std::ostringstream out;
  out << "subject,elpd_i,khat\n";
  for (int i = 0; i < r.n(); ++i) out << i << ',' << format_double(r.elpd_i(i)) << ',' << format_double(r.khat(i)) << '\n';
  return out.str();
}

LooResult parse_loo(const std::string& report, const std::string& pointwise) {
  LooResult r;
  std::istringstream in(report);
  std::string line;
  int n = -1;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) fail("loo report", "malformed line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 3);
    if (key == "warning") {
      r.warnings.push_back(value);
      continue;
    }
    if (!seen.insert(key).second) fail("loo report", "duplicate key " + key);
    const double v = parse_double(value, "loo report: " + key);
    if (key == "elpd") r.elpd = v;
    else if (key == "elpd_se") r.elpd_se = v;
    else if (key == "minus2elpd") r.minus2elpd = v;
    else if (key == "lpd") r.lpd = v;
    else if (key == "p_loo") r.p_loo = v;
    else if (key == "n") n = static_cast<int>(v);
    else if (key == "num_draws") r.num_draws = static_cast<int>(v);
    else if (key != "khat_above_threshold") fail("loo report", "unknown key " + key);
  }
  const CsvTable t = parse_csv(pointwise, "loo pointwise");
  if (t.header != std::vector<std::string>{"subject", "elpd_i", "khat"}) fail("loo pointwise", "unexpected header");
  if (static_cast<int>(t.rows.size()) != n) fail("loo pointwise", "row count does not match the report");
  r.elpd_i.resize(n);
  r.khat.resize(n);
  for (int i = 0; i < n; ++i) {
    if (t.rows[i][0] != std::to_string(i)) fail("loo pointwise", "subjects must be numbered 0..n-1 in order");
    r.elpd_i(i) = parse_double(t.rows[i][1], "loo pointwise: elpd_i");
    r.khat(i) = parse_double(t.rows[i][2], "loo pointwise: khat");
  }
  return r;
}

}  // namespace qaft::io
