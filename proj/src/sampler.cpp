#include "qaft/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <sstream>
#include <thread>

#include "qaft/errors.hpp"
#include "qaft/numerics.hpp"

namespace qaft {

using numerics::kInf;

void SamplerConfig::validate() const {
  if (chains < 1) throw ValidationError("sampler: chains must be >= 1");
  if (warmup < 0) throw ValidationError("sampler: warmup must be >= 0");
  if (iters < 1) throw ValidationError("sampler: iters must be >= 1");
  if (thin < 1) throw ValidationError("sampler: thin must be >= 1");
  if (iters % thin != 0) throw ValidationError("sampler: thin must divide iters");
  if (!(target_accept > 0.0 && target_accept < 1.0)) throw ValidationError("sampler: target_accept must lie in (0, 1)");
  if (max_tree_depth < 1) throw ValidationError("sampler: max_tree_depth must be >= 1");
  if (threads < 1) throw ValidationError("sampler: threads must be >= 1");
  if (init_attempts < 1) throw ValidationError("sampler: init_attempts must be >= 1");
  if (!(init_radius > 0.0)) throw ValidationError("sampler: init_radius must be positive");
}

DensityModel make_density_model(const Posterior& posterior) {
  DensityModel m;
  m.dim = posterior.dim();
  m.log_density_gradient = [&posterior](std::span<const double> z, Eigen::VectorXd& grad) {
    return posterior.log_density_gradient(z, grad);
  };
  const ParameterLayout& layout = posterior.layout();
  m.init_at_zero.push_back(layout.log_sigma_offset());
  if (layout.tbp()) m.init_at_zero.push_back(layout.log_theta_offset());
  m.names = layout.unconstrained_names();
  return m;
}

double hamiltonian(const HmcState& s, const Eigen::VectorXd& inv_metric) {
  return -s.log_density + 0.5 * (s.p.array().square() * inv_metric.array()).sum();
}

namespace {

double evaluate(const DensityModel& target, HmcState& s) {
  const double lp = target.log_density_gradient({s.q.data(), static_cast<std::size_t>(s.q.size())}, s.grad);
  s.log_density = std::isnan(lp) ? -kInf : lp;
  if (s.log_density == -kInf || !s.grad.allFinite()) {
    s.log_density = -kInf;
    s.grad.setZero(s.q.size());
  }
  return s.log_density;
}

}  // namespace

void leapfrog(const DensityModel& target, const Eigen::VectorXd& inv_metric, double step, HmcState& s) {
  s.p += 0.5 * step * s.grad;
  s.q += step * inv_metric.cwiseProduct(s.p);
  evaluate(target, s);
  s.p += 0.5 * step * s.grad;
}

namespace {

constexpr double kMaxDeltaH = 1000.0;

// Dual averaging of log step size toward a target acceptance statistic.
class StepSizeAdaptation {
 public:
  explicit StepSizeAdaptation(double delta) : delta_(delta) {}
  void set_mu(double mu) { mu_ = mu; }
  void restart() {
    counter_ = 0;
    s_bar_ = 0.0;
    x_bar_ = 0.0;
  }
  void learn(double& epsilon, double accept_stat) {
    ++counter_;
    accept_stat = std::min(1.0, accept_stat);
    const double eta = 1.0 / (counter_ + kT0);
    s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta_ - accept_stat);
    const double x = mu_ - s_bar_ * std::sqrt(static_cast<double>(counter_)) / kGamma;
    const double x_eta = std::pow(static_cast<double>(counter_), -kKappa);
    x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
    epsilon = std::exp(x);
  }
  double final_step() const { return std::exp(x_bar_); }

 private:
  static constexpr double kGamma = 0.05;
  static constexpr double kKappa = 0.75;
  static constexpr double kT0 = 10.0;
  double delta_;
  double mu_ = 0.0;
  long counter_ = 0;
  double s_bar_ = 0.0;
  double x_bar_ = 0.0;
};

// Windowed estimation of the diagonal inverse metric: an initial fast buffer, doubling slow
// windows, and a terminal fast buffer.
class MetricAdaptation {
 public:
  MetricAdaptation(int num_warmup, int dim) : num_warmup_(num_warmup), dim_(dim) {
    if (num_warmup < 20) {
      enabled_ = false;
      return;
    }
    if (init_buffer_ + base_window_ + term_buffer_ > num_warmup) {
      init_buffer_ = static_cast<int>(0.15 * num_warmup);
      term_buffer_ = static_cast<int>(0.1 * num_warmup);
      base_window_ = num_warmup - (init_buffer_ + term_buffer_);
    }
    window_size_ = base_window_;
    next_window_ = init_buffer_ + window_size_ - 1;
    reset_estimator();
  }

  // Returns true when a window closed and `inv_metric` was updated.
  bool learn(Eigen::VectorXd& inv_metric, const Eigen::VectorXd& q) {
    if (!enabled_) return false;
    if (in_window()) add_sample(q);
    if (end_of_window()) {
      compute_next_window();
      const double n = static_cast<double>(count_);
      Eigen::VectorXd var = m2_ / (n - 1.0);
      inv_metric = (n / (n + 5.0)) * var + Eigen::VectorXd::Constant(dim_, 1e-3 * (5.0 / (n + 5.0)));
      reset_estimator();
      ++counter_;
      return true;
    }
    ++counter_;
    return false;
  }

 private:
  bool in_window() const {
    return counter_ >= init_buffer_ && counter_ < num_warmup_ - term_buffer_ && counter_ != num_warmup_;
  }
  bool end_of_window() const { return counter_ == next_window_ && counter_ != num_warmup_; }
  void compute_next_window() {
    if (next_window_ == num_warmup_ - term_buffer_ - 1) return;
    window_size_ *= 2;
    next_window_ = counter_ + window_size_;
    if (next_window_ != num_warmup_ - term_buffer_ - 1) {
      const int boundary = next_window_ + 2 * window_size_;
      if (boundary >= num_warmup_ - term_buffer_) next_window_ = num_warmup_ - term_buffer_ - 1;
    }
  }
  void add_sample(const Eigen::VectorXd& q) {
    ++count_;
    const Eigen::VectorXd delta = q - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta.cwiseProduct(q - mean_);
  }
  void reset_estimator() {
    count_ = 0;
    mean_ = Eigen::VectorXd::Zero(dim_);
    m2_ = Eigen::VectorXd::Zero(dim_);
  }

  int num_warmup_;
  int dim_;
  bool enabled_ = true;
  int init_buffer_ = 75;
  int term_buffer_ = 50;
  int base_window_ = 25;
  int window_size_ = 0;
  int next_window_ = 0;
  int counter_ = 0;
  long count_ = 0;
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
};

struct Transition {
  double accept_stat = 0.0;
  int depth = 0;
  bool divergent = false;
  double energy = 0.0;
};

// Multinomial NUTS transition with the generalized no-U-turn criterion, following the
// recursive tree construction used by Stan.
class Nuts {
 public:
  Nuts(const DensityModel& target, int max_depth) : target_(target), max_depth_(max_depth) {}

  Eigen::VectorXd inv_metric;
  double step = 1.0;

  Transition transition(HmcState& current, Rng& rng) {
    rng_ = &rng;
    divergent_ = false;
    const int d = target_.dim;
    for (int i = 0; i < d; ++i) current.p(i) = rng.normal() / std::sqrt(inv_metric(i));

    HmcState z_fwd = current, z_bck = current, z_sample = current, z_propose = current;
    Eigen::VectorXd p_fwd_fwd = current.p, p_fwd_bck = current.p, p_bck_fwd = current.p, p_bck_bck = current.p;
    Eigen::VectorXd ps_fwd_fwd = inv_metric.cwiseProduct(current.p);
    Eigen::VectorXd ps_fwd_bck = ps_fwd_fwd, ps_bck_fwd = ps_fwd_fwd, ps_bck_bck = ps_fwd_fwd;
    Eigen::VectorXd rho = current.p;
    double log_sum_weight = 0.0;
    const double H0 = hamiltonian(current, inv_metric);
    int n_leapfrog = 0;
    double sum_metro_prob = 0.0;
    int depth = 0;

    while (depth < max_depth_) {
      Eigen::VectorXd rho_fwd = Eigen::VectorXd::Zero(d), rho_bck = Eigen::VectorXd::Zero(d);
      bool valid = false;
      double log_sum_weight_subtree = -kInf;
      if (rng.uniform() > 0.5) {
        z_ = z_fwd;
        rho_bck = rho;
        p_bck_fwd = p_fwd_bck;
        ps_bck_fwd = ps_fwd_bck;
        valid = build_tree(depth, z_propose, ps_fwd_bck, ps_fwd_fwd, rho_fwd, p_fwd_bck, p_fwd_fwd, H0, 1.0, n_leapfrog,
                           log_sum_weight_subtree, sum_metro_prob);
        z_fwd = z_;
      } else {
        z_ = z_bck;
        rho_fwd = rho;
        p_fwd_bck = p_bck_fwd;
        ps_fwd_bck = ps_bck_fwd;
        valid = build_tree(depth, z_propose, ps_bck_fwd, ps_bck_bck, rho_bck, p_bck_fwd, p_bck_bck, H0, -1.0, n_leapfrog,
                           log_sum_weight_subtree, sum_metro_prob);
        z_bck = z_;
      }
      if (!valid) break;
      ++depth;
      if (log_sum_weight_subtree > log_sum_weight) {
        z_sample = z_propose;
      } else if (rng.uniform() < std::exp(log_sum_weight_subtree - log_sum_weight)) {
        z_sample = z_propose;
      }
      log_sum_weight = numerics::log_sum_exp(log_sum_weight, log_sum_weight_subtree);
      rho = rho_bck + rho_fwd;
      bool persist = criterion(ps_bck_bck, ps_fwd_fwd, rho);
      persist = persist && criterion(ps_bck_bck, ps_fwd_bck, rho_bck + p_fwd_bck);
      persist = persist && criterion(ps_bck_fwd, ps_fwd_fwd, rho_fwd + p_bck_fwd);
      if (!persist) break;
    }

    Transition t;
    t.depth = depth;
    t.divergent = divergent_;
    t.accept_stat = n_leapfrog > 0 ? sum_metro_prob / n_leapfrog : 0.0;
    current = z_sample;
    t.energy = hamiltonian(current, inv_metric);
    return t;
  }

  // Doubles or halves the step until the one-step acceptance crosses 0.8.
  void init_step(const HmcState& start, Rng& rng) {
    if (step == 0.0 || step > 1e7 || std::isnan(step)) return;
    const int d = target_.dim;
    auto delta_h = [&]() {
      HmcState z = start;
      for (int i = 0; i < d; ++i) z.p(i) = rng.normal() / std::sqrt(inv_metric(i));
      const double h0 = hamiltonian(z, inv_metric);
      leapfrog(target_, inv_metric, step, z);
      double h = hamiltonian(z, inv_metric);
      if (std::isnan(h)) h = kInf;
      return h0 - h;
    };
    const double threshold = std::log(0.8);
    const int direction = delta_h() > threshold ? 1 : -1;
    while (true) {
      const double dh = delta_h();
      if (direction == 1 && !(dh > threshold)) break;
      if (direction == -1 && !(dh < threshold)) break;
      step = direction == 1 ? 2.0 * step : 0.5 * step;
      if (step > 1e7) throw NumericalError("sampler: step size diverged; the posterior may be improper");
      if (step == 0.0) throw NumericalError("sampler: no acceptably small step size");
    }
  }

 private:
  static bool criterion(const Eigen::VectorXd& ps_minus, const Eigen::VectorXd& ps_plus, const Eigen::VectorXd& rho) {
    return ps_plus.dot(rho) > 0.0 && ps_minus.dot(rho) > 0.0;
  }

  bool build_tree(int depth, HmcState& z_propose, Eigen::VectorXd& ps_beg, Eigen::VectorXd& ps_end, Eigen::VectorXd& rho,
                  Eigen::VectorXd& p_beg, Eigen::VectorXd& p_end, double H0, double sign, int& n_leapfrog,
                  double& log_sum_weight, double& sum_metro_prob) {
    if (depth == 0) {
      leapfrog(target_, inv_metric, sign * step, z_);
      ++n_leapfrog;
      double h = hamiltonian(z_, inv_metric);
      if (std::isnan(h)) h = kInf;
      if (h - H0 > kMaxDeltaH) divergent_ = true;
      log_sum_weight = numerics::log_sum_exp(log_sum_weight, H0 - h);
      sum_metro_prob += H0 - h > 0.0 ? 1.0 : std::exp(H0 - h);
      z_propose = z_;
      ps_beg = inv_metric.cwiseProduct(z_.p);
      ps_end = ps_beg;
      rho += z_.p;
      p_beg = z_.p;
      p_end = p_beg;
      return !divergent_;
    }
    const int d = target_.dim;

    double log_sum_weight_init = -kInf;
    Eigen::VectorXd p_init_end(d), ps_init_end(d), rho_init = Eigen::VectorXd::Zero(d);
    if (!build_tree(depth - 1, z_propose, ps_beg, ps_init_end, rho_init, p_beg, p_init_end, H0, sign, n_leapfrog,
                    log_sum_weight_init, sum_metro_prob))
      return false;

    HmcState z_propose_final = z_;
    double log_sum_weight_final = -kInf;
    Eigen::VectorXd p_final_beg(d), ps_final_beg(d), rho_final = Eigen::VectorXd::Zero(d);
    if (!build_tree(depth - 1, z_propose_final, ps_final_beg, ps_end, rho_final, p_final_beg, p_end, H0, sign,
                    n_leapfrog, log_sum_weight_final, sum_metro_prob))
      return false;

    const double log_sum_weight_subtree = numerics::log_sum_exp(log_sum_weight_init, log_sum_weight_final);
    log_sum_weight = numerics::log_sum_exp(log_sum_weight, log_sum_weight_subtree);
    if (log_sum_weight_final > log_sum_weight_subtree) {
      z_propose = z_propose_final;
    } else if (rng_->uniform() < std::exp(log_sum_weight_final - log_sum_weight_subtree)) {
      z_propose = z_propose_final;
    }

    const Eigen::VectorXd rho_subtree = rho_init + rho_final;
    rho += rho_subtree;
    bool persist = criterion(ps_beg, ps_end, rho_subtree);
    persist = persist && criterion(ps_beg, ps_final_beg, rho_init + p_final_beg);
    persist = persist && criterion(ps_init_end, ps_end, rho_final + p_init_end);
    return persist;
  }

  const DensityModel& target_;
  int max_depth_;
  HmcState z_;
  Rng* rng_ = nullptr;
  bool divergent_ = false;
};

struct ChainResult {
  std::vector<Eigen::VectorXd> q;
  std::vector<int> iter;
  std::vector<char> divergent;
  std::vector<double> energy, log_density, accept_stat;
  std::vector<int> depth;
  ChainInfo info;
};

// Stream ids for the per-chain generators; warmup and sampling iterations share the
// iteration counter, initialization uses ids counting down from the top.
constexpr std::uint64_t kInitStream = ~0ULL;
constexpr std::uint64_t kStepInitStream = ~0ULL - 1000000ULL;

ChainResult run_chain(const DensityModel& target, const SamplerConfig& cfg, int chain) {
  const int d = target.dim;
  ChainResult out;
  HmcState state;
  state.q = Eigen::VectorXd::Zero(d);
  state.p = Eigen::VectorXd::Zero(d);
  state.grad = Eigen::VectorXd::Zero(d);

  bool ok = false;
  for (int attempt = 0; attempt < cfg.init_attempts && !ok; ++attempt) {
    Rng rng(cfg.seed, static_cast<std::uint64_t>(chain), kInitStream - attempt);
    for (int i = 0; i < d; ++i) state.q(i) = rng.uniform(-cfg.init_radius, cfg.init_radius);
    for (int i : target.init_at_zero) state.q(i) = 0.0;
    out.info.init_attempts = attempt + 1;
    ok = std::isfinite(evaluate(target, state));
  }
  if (!ok) {
    std::ostringstream msg;
    msg << "sampler: chain " << chain << " found no initial point with finite log density after " << cfg.init_attempts
        << " attempts";
    throw NumericalError(msg.str());
  }

  Nuts nuts(target, cfg.max_tree_depth);
  nuts.inv_metric = Eigen::VectorXd::Ones(d);
  nuts.step = 1.0;
  std::uint64_t step_init_calls = 0;
  {
    Rng rng(cfg.seed, static_cast<std::uint64_t>(chain), kStepInitStream - step_init_calls++);
    nuts.init_step(state, rng);
  }
  StepSizeAdaptation step_adapt(cfg.target_accept);
  step_adapt.set_mu(std::log(10.0 * nuts.step));
  step_adapt.restart();
  MetricAdaptation metric_adapt(cfg.warmup, d);

  for (int it = 0; it < cfg.warmup; ++it) {
    Rng rng(cfg.seed, static_cast<std::uint64_t>(chain), static_cast<std::uint64_t>(it));
    const Transition t = nuts.transition(state, rng);
    if (t.divergent) ++out.info.warmup_divergences;
    step_adapt.learn(nuts.step, t.accept_stat);
    if (metric_adapt.learn(nuts.inv_metric, state.q)) {
      Rng step_rng(cfg.seed, static_cast<std::uint64_t>(chain), kStepInitStream - step_init_calls++);
      nuts.init_step(state, step_rng);
      step_adapt.set_mu(std::log(10.0 * nuts.step));
      step_adapt.restart();
    }
  }
  if (cfg.warmup > 0) {
    if (out.info.warmup_divergences == cfg.warmup) {
      std::ostringstream msg;
      msg << "sampler: every warmup transition of chain " << chain << " diverged";
      throw NumericalError(msg.str());
    }
    nuts.step = step_adapt.final_step();
  }
  out.info.step_size = nuts.step;
  out.info.inv_metric = nuts.inv_metric;

  for (int it = 0; it < cfg.iters; ++it) {
    Rng rng(cfg.seed, static_cast<std::uint64_t>(chain), static_cast<std::uint64_t>(cfg.warmup + it));
    const Transition t = nuts.transition(state, rng);
    if (!std::isfinite(state.log_density)) throw NumericalError("sampler: retained state has non-finite log density");
    if (it % cfg.thin != 0) continue;
    out.q.push_back(state.q);
    out.iter.push_back(it);
    out.divergent.push_back(t.divergent ? 1 : 0);
    out.energy.push_back(t.energy);
    out.log_density.push_back(state.log_density);
    out.accept_stat.push_back(t.accept_stat);
    out.depth.push_back(t.depth);
  }
  return out;
}

}  // namespace

PosteriorDraws run_nuts(const DensityModel& target, const SamplerConfig& cfg) {
  cfg.validate();
  if (target.dim < 1) throw ValidationError("sampler: target dimension must be >= 1");
  std::vector<ChainResult> results(cfg.chains);
  std::vector<std::exception_ptr> errors(cfg.chains);
  const int workers = std::min(cfg.threads, cfg.chains);
  if (workers <= 1) {
    for (int c = 0; c < cfg.chains; ++c) results[c] = run_chain(target, cfg, c);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w]() {
        for (int c = w; c < cfg.chains; c += workers) {
          try {
            results[c] = run_chain(target, cfg, c);
          } catch (...) {
            errors[c] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  PosteriorDraws draws;
  draws.num_chains = cfg.chains;
  draws.unconstrained_names = target.names;
  if (draws.unconstrained_names.empty())
    for (int i = 0; i < target.dim; ++i) draws.unconstrained_names.push_back("z[" + std::to_string(i + 1) + "]");
  const int per_chain = cfg.retained_per_chain();
  draws.unconstrained.resize(static_cast<Eigen::Index>(cfg.chains) * per_chain, target.dim);
  int row = 0;
  for (int c = 0; c < cfg.chains; ++c) {
    ChainResult& r = results[c];
    for (std::size_t k = 0; k < r.q.size(); ++k, ++row) {
      draws.unconstrained.row(row) = r.q[k].transpose();
      draws.chain.push_back(c);
      draws.iter.push_back(r.iter[k]);
      draws.divergent.push_back(r.divergent[k]);
      draws.energy.push_back(r.energy[k]);
      draws.log_density.push_back(r.log_density[k]);
      draws.accept_stat.push_back(r.accept_stat[k]);
      draws.tree_depth.push_back(r.depth[k]);
    }
    draws.chain_info.push_back(r.info);
  }
  return draws;
}

void attach_constrained(const ParameterLayout& layout, PosteriorDraws& draws) {
  draws.names = layout.names();
  draws.constrained.resize(draws.unconstrained.rows(), layout.flat_dim());
  for (Eigen::Index r = 0; r < draws.unconstrained.rows(); ++r) {
    const Eigen::VectorXd z = draws.unconstrained.row(r).transpose();
    const ParameterVector psi = layout.constrain({z.data(), static_cast<std::size_t>(z.size())});
    draws.constrained.row(r) = layout.flatten(psi).transpose();
  }
}

PosteriorDraws draws_from_parameters(const ParameterLayout& layout, std::span<const ParameterVector> values) {
  PosteriorDraws draws;
  draws.num_chains = 1;
  draws.names = layout.names();
  draws.unconstrained_names = layout.unconstrained_names();
  const int M = static_cast<int>(values.size());
  draws.constrained.resize(M, layout.flat_dim());
  draws.unconstrained.resize(M, layout.dim());
  for (int m = 0; m < M; ++m) {
    draws.constrained.row(m) = layout.flatten(values[m]).transpose();
    draws.unconstrained.row(m) = layout.unconstrain(values[m]).transpose();
    draws.chain.push_back(0);
    draws.iter.push_back(m);
    draws.divergent.push_back(0);
    draws.energy.push_back(numerics::kNaN);
    draws.log_density.push_back(numerics::kNaN);
    draws.accept_stat.push_back(numerics::kNaN);
    draws.tree_depth.push_back(0);
  }
  draws.chain_info.push_back(ChainInfo{});
  return draws;
}

PosteriorDraws run_chains(const Posterior& posterior, const SamplerConfig& cfg) {
  PosteriorDraws draws = run_nuts(make_density_model(posterior), cfg);
  attach_constrained(posterior.layout(), draws);
  return draws;
}

PosteriorDraws run_chains(const ModelSpec& model, std::vector<SubjectRecord> data, const PriorSpec& priors,
                          const SamplerConfig& cfg) {
  const Posterior posterior(model, std::move(data), priors);
  return run_chains(posterior, cfg);
}

int PosteriorDraws::num_divergent() const {
  return static_cast<int>(std::count(divergent.begin(), divergent.end(), 1));
}

int PosteriorDraws::column(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

std::vector<Eigen::VectorXd> PosteriorDraws::by_chain(int col, bool use_constrained) const {
  const Eigen::MatrixXd& m = use_constrained ? constrained : unconstrained;
  if (col < 0 || col >= m.cols()) throw ValidationError("draws: column index out of range");
  std::vector<std::vector<double>> values(num_chains);
  for (int r = 0; r < rows(); ++r) values[chain[r]].push_back(m(r, col));
  std::vector<Eigen::VectorXd> out;
  for (auto& v : values)
    if (!v.empty()) out.push_back(Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  return out;
}

ParameterVector PosteriorDraws::parameters(const ParameterLayout& layout, int row) const {
  if (constrained.cols() != layout.flat_dim()) throw ValidationError("draws: constrained view does not match the model");
  const Eigen::VectorXd flat = constrained.row(row).transpose();
  return layout.unflatten({flat.data(), static_cast<std::size_t>(flat.size())});
}

PosteriorDraws PosteriorDraws::subset(std::span<const int> rows_wanted) const {
  PosteriorDraws out;
  out.unconstrained_names = unconstrained_names;
  out.names = names;
  out.num_chains = num_chains;
  out.chain_info = chain_info;
  out.unconstrained.resize(static_cast<Eigen::Index>(rows_wanted.size()), unconstrained.cols());
  out.constrained.resize(static_cast<Eigen::Index>(rows_wanted.size()), constrained.cols());
  for (std::size_t k = 0; k < rows_wanted.size(); ++k) {
    const int r = rows_wanted[k];
    if (r < 0 || r >= rows()) throw ValidationError("draws: row index out of range");
    out.unconstrained.row(k) = unconstrained.row(r);
    if (constrained.cols() > 0) out.constrained.row(k) = constrained.row(r);
    out.chain.push_back(chain[r]);
    out.iter.push_back(iter[r]);
    out.divergent.push_back(divergent[r]);
    out.energy.push_back(energy[r]);
    out.log_density.push_back(log_density[r]);
    out.accept_stat.push_back(accept_stat[r]);
    out.tree_depth.push_back(tree_depth[r]);
  }
  return out;
}

PosteriorDraws PosteriorDraws::thinned(int every) const {
  if (every < 1) throw ValidationError("draws: thinning factor must be >= 1");
  std::vector<int> keep;
  std::vector<int> seen(num_chains, 0);
  for (int r = 0; r < rows(); ++r)
    if (seen[chain[r]]++ % every == 0) keep.push_back(r);
  return subset(keep);
}

double rhat(std::span<const Eigen::VectorXd> chains) {
  if (chains.size() < 2) throw ValidationError("rhat: at least 2 chains are required");
  std::size_t n = chains[0].size();
  for (const auto& c : chains) n = std::min<std::size_t>(n, c.size());
  if (n < 100) throw ValidationError("rhat: at least 100 draws per chain are required");
  const Eigen::Index half = static_cast<Eigen::Index>(n / 2);
  std::vector<Eigen::VectorXd> split;
  for (const auto& c : chains) {
    split.push_back(c.head(half));
    split.push_back(c.segment(half, half));
  }
  const double m = static_cast<double>(split.size());
  const double len = static_cast<double>(half);
  Eigen::VectorXd means(split.size()), vars(split.size());
  for (std::size_t j = 0; j < split.size(); ++j) {
    means(j) = split[j].mean();
    vars(j) = (split[j].array() - means(j)).square().sum() / (len - 1.0);
  }
  const double W = vars.mean();
  const double B = len * (means.array() - means.mean()).square().sum() / (m - 1.0);
  if (W == 0.0) return B == 0.0 ? 1.0 : kInf;
  const double var_plus = (len - 1.0) / len * W + B / len;
  return std::sqrt(var_plus / W);
}

double ess(std::span<const Eigen::VectorXd> chains) {
  if (chains.empty()) return 0.0;
  std::size_t n = chains[0].size();
  for (const auto& c : chains) n = std::min<std::size_t>(n, c.size());
  if (n < 4) return 0.0;
  const int m = static_cast<int>(chains.size());
  const double len = static_cast<double>(n);
  Eigen::VectorXd means(m), vars(m);
  std::vector<Eigen::VectorXd> centered;
  for (int j = 0; j < m; ++j) {
    const Eigen::VectorXd c = chains[j].head(static_cast<Eigen::Index>(n));
    means(j) = c.mean();
    centered.push_back((c.array() - means(j)).matrix());
    vars(j) = centered.back().squaredNorm() / (len - 1.0);
  }
  const double W = vars.mean();
  const double B_over_n = m > 1 ? (means.array() - means.mean()).square().sum() / (m - 1.0) : 0.0;
  const double var_plus = (len - 1.0) / len * W + B_over_n;
  if (!(var_plus > 0.0) || !(W > 0.0)) return 0.0;

  auto rho = [&](std::size_t lag) {
    double acov = 0.0;
    for (int j = 0; j < m; ++j) {
      const Eigen::VectorXd& c = centered[j];
      const Eigen::Index k = static_cast<Eigen::Index>(n - lag);
      acov += c.head(k).dot(c.segment(static_cast<Eigen::Index>(lag), k)) / len;
    }
    acov /= m;
    return 1.0 - (W - acov) / var_plus;
  };
  // Geyer: sum positive pair sums, forced monotone.
  double tau = -1.0;
  double previous_pair = kInf;
  for (std::size_t t = 0; t + 1 < n; t += 2) {
    double pair = (t == 0 ? 1.0 : rho(t)) + rho(t + 1);
    if (!(pair > 0.0)) break;
    pair = std::min(pair, previous_pair);
    tau += 2.0 * pair;
    previous_pair = pair;
  }
  tau = std::max(tau, 1.0 / std::log10(m * len));
  return m * len / tau;
}

double rhat(const PosteriorDraws& draws, int col, bool constrained) {
  const auto chains = draws.by_chain(col, constrained);
  return rhat(chains);
}

double ess(const PosteriorDraws& draws, int col, bool constrained) {
  const auto chains = draws.by_chain(col, constrained);
  return ess(chains);
}

std::vector<ParamSummary> summarize(const PosteriorDraws& draws) {
  const bool use_constrained = draws.constrained.cols() > 0;
  const Eigen::MatrixXd& m = use_constrained ? draws.constrained : draws.unconstrained;
  const auto& names = use_constrained ? draws.names : draws.unconstrained_names;
  std::vector<ParamSummary> out;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    ParamSummary s;
    s.name = names[j];
    std::vector<double> v(m.rows());
    for (Eigen::Index r = 0; r < m.rows(); ++r) v[r] = m(r, j);
    s.mean = numerics::mean(v);
    s.sd = std::sqrt(numerics::variance(v));
    std::sort(v.begin(), v.end());
    s.median = numerics::quantile_sorted(v, 0.5);
    s.lo95 = numerics::quantile_sorted(v, 0.025);
    s.hi95 = numerics::quantile_sorted(v, 0.975);
    const auto chains = draws.by_chain(static_cast<int>(j), use_constrained);
    bool rhat_ok = chains.size() >= 2;
    for (const auto& c : chains) rhat_ok = rhat_ok && c.size() >= 100;
    s.rhat = rhat_ok ? rhat(chains) : numerics::kNaN;
    s.ess = ess(chains);
    out.push_back(s);
  }
  return out;
}

}  // namespace qaft
