#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qaft/inference.hpp"
#include "qaft/likelihood.hpp"
#include "qaft/modelcheck.hpp"
#include "qaft/sampler.hpp"
#include "qaft/simulate.hpp"

namespace qaft::io {

namespace fs = std::filesystem;
using nlohmann::json;

// Writes to a temporary sibling and renames it into place.
void write_file_atomic(const fs::path& path, const std::string& contents);
std::string read_file(const fs::path& path);

std::string format_double(double v);  // 17 significant digits, "inf"/"-inf"/"nan"
double parse_double(const std::string& field, const std::string& where);

// Strict comma-separated table: one header row, no quoting, every row with the header's width.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  int column(const std::string& name) const;  // -1 when absent
};
CsvTable parse_csv(const std::string& text, const std::string& source);

// Data files: y_l, y_u, delta, trunc, the model covariates by name, and tx_time for
// time-varying models. Empty or "inf" y_u means right censoring; empty or "inf" tx_time means
// the covariate never switches on. Records are validated with row numbers in the messages.
std::vector<SubjectRecord> read_data_csv(const fs::path& path, const ModelSpec& model);
std::vector<SubjectRecord> parse_data_csv(const std::string& text, const ModelSpec& model,
                                          const std::string& source = "data");
std::string format_data_csv(std::span<const SubjectRecord> data, const ModelSpec& model);
std::string data_fingerprint(std::span<const SubjectRecord> data);

// Knot placement for the flexible effect. Explicit knots are on the time axis (the time since
// onset for time-varying models); spline knots are converted to log time.
struct KnotRule {
  enum class Kind { None, Explicit, Quantiles, Interval };
  Kind kind = Kind::None;
  std::vector<double> knots;  // Explicit
  int count = 0;              // Quantiles: number of internal knots
  bool log_scale = false;     // Quantiles: take quantiles of log times
  double width = 0.0;         // Interval
  std::string text;
};
KnotRule parse_knot_rule(const std::string& rule, const std::string& where);
// Times the rule places knots from: exact event times and midpoints of finite intervals,
// measured from onset for time-varying models.
std::vector<double> knot_source_times(std::span<const SubjectRecord> data, const ModelSpec& model);
std::vector<double> place_knots(const KnotRule& rule, const ModelSpec& model, std::span<const SubjectRecord> data);

struct RunConfig {
  ModelSpec model;
  KnotRule knots;
  PriorSpec priors;
  SamplerConfig sampler;
  bool interval_midpoints = false;
  bool has_parameters = false;
  ParameterVector parameters;
  bool has_simulation = false;
  SimConfig simulation;  // model and psi filled from the sections above
  json raw;
};
RunConfig parse_config(const json& j);
RunConfig load_config(const fs::path& path);
// Resolves a rule-based knot placement against data and validates the model.
ModelSpec resolve_model(const RunConfig& cfg, std::span<const SubjectRecord> data);

json model_to_json(const ModelSpec& model);
ModelSpec model_from_json(const json& j);
json parameters_to_json(const ModelSpec& model, const ParameterVector& psi);
ParameterVector parameters_from_json(const ModelSpec& model, const json& j, const std::string& where);

// draws.csv: chain,iter,<constrained names>,divergent,energy
std::string format_draws_csv(const PosteriorDraws& draws);
PosteriorDraws parse_draws_csv(const std::string& text, const ModelSpec& model, const std::string& source = "draws");

json summary_to_json(std::span<const ParamSummary> summary);
json diagnostics_to_json(const PosteriorDraws& draws, std::span<const ParamSummary> summary);

std::string format_curve_csv(const CurveTable& table);
CurveTable parse_curve_csv(const std::string& text, const std::string& source = "curve");

// Flat "key = value" report and per-subject CSV (subject,elpd_i,khat).
std::string format_loo_report(const LooResult& r);
std::string format_loo_pointwise(const LooResult& r);
LooResult parse_loo(const std::string& report, const std::string& pointwise);

}  // namespace qaft::io
