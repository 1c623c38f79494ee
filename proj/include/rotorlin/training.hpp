#pragma once

// Fitting gadgets and baselines to (input, target) pairs with Adam.

#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rotorlin/gadget.hpp"

namespace rotorlin {

struct TrainConfig {
  double learning_rate = 0.05;
  int batch_size = 64;
  int steps = 1000;
  double weight_decay = 0.0;
  bool cosine_annealing = true;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int eval_every = 50;

  static TrainConfig rotor_defaults() { return {}; }
  static TrainConfig baseline_defaults() {
    TrainConfig c;
    c.learning_rate = 0.01;
    c.batch_size = 256;
    return c;
  }

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (steps < 0) throw ConfigError("train.steps must be >= 0");
    if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
    if (eval_every < 1) throw ConfigError("train.eval_every must be >= 1");
  }
};

struct Dataset {
  int d_in = 0;
  int d_out = 0;
  std::vector<double> inputs;   // row-major, size() x d_in
  std::vector<double> targets;  // row-major, size() x d_out

  std::size_t size() const { return d_in > 0 ? inputs.size() / d_in : 0; }
  std::span<const double> input(std::size_t i) const { return {inputs.data() + i * d_in, static_cast<std::size_t>(d_in)}; }
  std::span<const double> target(std::size_t i) const {
    return {targets.data() + i * d_out, static_cast<std::size_t>(d_out)};
  }

  void validate() const {
    if (d_in < 1 || d_out < 1) throw InvalidArgument("dataset: dimensions must be positive");
    if (inputs.size() % d_in != 0 || targets.size() % d_out != 0 || inputs.size() / d_in != targets.size() / d_out)
      throw InvalidArgument("dataset: inputs and targets disagree on the sample count");
    if (size() == 0) throw InvalidArgument("dataset: no samples");
    for (double v : inputs)
      if (!std::isfinite(v)) throw NumericError("dataset: non-finite input");
    for (double v : targets)
      if (!std::isfinite(v)) throw NumericError("dataset: non-finite target");
  }

  double second_moment() const {
    double s = 0.0;
    for (double v : targets) s += v * v;
    return s / static_cast<double>(targets.size());
  }
};

// Mean over batch and coordinates of the squared difference.
inline double mse_loss(const std::vector<std::vector<double>>& pred, const std::vector<std::vector<double>>& target) {
  if (pred.size() != target.size() || pred.empty()) throw InvalidArgument("mse_loss: batch size mismatch");
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t b = 0; b < pred.size(); ++b) {
    if (pred[b].size() != target[b].size()) throw InvalidArgument("mse_loss: vector length mismatch");
    for (std::size_t k = 0; k < pred[b].size(); ++k) {
      const double d = pred[b][k] - target[b][k];
      s += d * d;
    }
    count += pred[b].size();
  }
  return s / static_cast<double>(count);
}

// Running sum of squared errors on the tape, one node per sample.
class SquaredErrorSum {
 public:
  void add(std::span<const Var> pred, std::span<const double> target) {
    if (pred.size() != target.size()) throw InvalidArgument("mse: vector length mismatch");
    ad::ProductSum s;
    for (std::size_t k = 0; k < pred.size(); ++k) {
      const Var d = pred[k] - target[k];
      s.add(1.0, d, d);
    }
    terms_.push_back(s.finish());
    count_ += pred.size();
  }
  Var mean() const {
    ad::ProductSum s;
    for (const auto& t : terms_) s.add(1.0 / static_cast<double>(count_), t);
    return s.finish();
  }

 private:
  std::vector<Var> terms_;
  std::size_t count_ = 0;
};

inline double cosine_lr(const TrainConfig& cfg, int step) {
  if (!cfg.cosine_annealing || cfg.steps <= 0) return cfg.learning_rate;
  return cfg.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * step / cfg.steps));
}

class Adam {
 public:
  explicit Adam(std::size_t n = 0) : m_(n, 0.0), v_(n, 0.0) {}

  // Bias-corrected update at 0-based `step`; returns the applied step.
  std::vector<double> step(std::vector<double>& params, std::span<const double> grads, const TrainConfig& cfg,
                           int step) {
    if (m_.size() != params.size()) {
      m_.assign(params.size(), 0.0);
      v_.assign(params.size(), 0.0);
    }
    if (grads.size() != params.size()) throw InvalidArgument("adam: gradient length mismatch");
    const double lr = cosine_lr(cfg, step);
    const int t = step + 1;
    const double c1 = 1.0 - std::pow(cfg.adam_beta1, t);
    const double c2 = 1.0 - std::pow(cfg.adam_beta2, t);
    std::vector<double> delta(params.size(), 0.0);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = cfg.adam_beta1 * m_[i] + (1.0 - cfg.adam_beta1) * grads[i];
      v_[i] = cfg.adam_beta2 * v_[i] + (1.0 - cfg.adam_beta2) * grads[i] * grads[i];
      const double mhat = m_[i] / c1;
      const double vhat = v_[i] / c2;
      delta[i] = -lr * mhat / (std::sqrt(vhat) + cfg.adam_eps) - lr * cfg.weight_decay * params[i];
      params[i] += delta[i];
    }
    return delta;
  }

 private:
  std::vector<double> m_, v_;
};

// Central differences, untracked.
inline std::vector<double> finite_difference_gradients(const std::function<double(std::span<const double>)>& f,
                                                       std::vector<double> params, double h) {
  if (!(h > 0.0)) throw InvalidArgument("finite differences: h must be > 0");
  std::vector<double> g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double p = params[i];
    params[i] = p + h;
    const double fp = f(params);
    params[i] = p - h;
    const double fm = f(params);
    params[i] = p;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("finite differences: non-finite evaluation at parameter " + std::to_string(i));
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Baselines.

// X (d_out x r) then Y (r x d_in), both row-major.
struct LowRankLayer {
  int d_in = 0;
  int d_out = 0;
  int rank = 0;
  std::vector<double> params;

  std::size_t parameter_count() const { return static_cast<std::size_t>(rank) * (d_in + d_out); }
};

inline std::size_t lowrank_parameter_count(int d_in, int d_out, int rank) {
  return static_cast<std::size_t>(rank) * (d_in + d_out);
}

inline LowRankLayer make_lowrank(int d_in, int d_out, int rank, std::uint64_t seed) {
  if (rank < 1) throw ConfigError("lr.rank must be >= 1");
  if (d_in < 1 || d_out < 1) throw ConfigError("low-rank layer: dimensions must be positive");
  LowRankLayer l{d_in, d_out, rank, {}};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(d_in)));
  l.params.resize(l.parameter_count());
  for (auto& p : l.params) p = dist(rng);
  return l;
}

template <class T>
std::vector<T> lowrank_forward(const LowRankLayer& l, std::span<const T> params, std::span<const double> x) {
  if (x.size() != static_cast<std::size_t>(l.d_in)) throw InvalidArgument("low-rank forward: input length mismatch");
  if (params.size() != l.parameter_count()) throw InvalidArgument("low-rank forward: parameter count mismatch");
  const T* X = params.data();
  const T* Y = params.data() + static_cast<std::size_t>(l.d_out) * l.rank;
  std::vector<T> z(l.rank);
  ProductSum<T> sum;
  for (int a = 0; a < l.rank; ++a) {
    for (int j = 0; j < l.d_in; ++j) sum.add(x[j], Y[static_cast<std::size_t>(a) * l.d_in + j]);
    z[a] = sum.finish();
  }
  std::vector<T> y(l.d_out);
  for (int i = 0; i < l.d_out; ++i) {
    for (int a = 0; a < l.rank; ++a) sum.add(1.0, X[static_cast<std::size_t>(i) * l.rank + a], z[a]);
    y[i] = sum.finish();
  }
  return y;
}

inline std::vector<double> lowrank_forward(const LowRankLayer& l, std::span<const double> x) {
  return lowrank_forward<double>(l, l.params, x);
}

// In-place unnormalized Walsh-Hadamard transform (Sylvester order).
inline void fwht(std::span<double> a) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw ConfigError("fwht: length must be a power of two");
  for (std::size_t h = 1; h < n; h <<= 1)
    for (std::size_t i = 0; i < n; i += 2 * h)
      for (std::size_t j = i; j < i + h; ++j) {
        const double x = a[j], y = a[j + h];
        a[j] = x + y;
        a[j + h] = x - y;
      }
}

// W ~ B H with H the orthonormal Hadamard matrix and B block diagonal with
// n_blocks blocks of (d_out / n_blocks) x (d_in / n_blocks), row-major per
// block.
struct BlockHadamardLayer {
  int d_in = 0;
  int d_out = 0;
  int n_blocks = 0;
  std::vector<double> params;

  int block_rows() const { return d_out / n_blocks; }
  int block_cols() const { return d_in / n_blocks; }
  std::size_t parameter_count() const {
    return static_cast<std::size_t>(n_blocks) * block_rows() * block_cols();
  }

  void validate() const {
    if (d_in < 1 || (d_in & (d_in - 1)) != 0)
      throw ConfigError("block-Hadamard layer: d_in = " + std::to_string(d_in) + " is not a power of two");
    if (n_blocks < 1 || d_in % n_blocks != 0 || d_out % n_blocks != 0)
      throw ConfigError("bh.blocks = " + std::to_string(n_blocks) + " must divide d_in = " + std::to_string(d_in) +
                        " and d_out = " + std::to_string(d_out));
  }
};

inline std::size_t block_hadamard_parameter_count(int d_in, int d_out, int n_blocks) {
  return static_cast<std::size_t>(n_blocks) * (d_out / n_blocks) * (d_in / n_blocks);
}

inline BlockHadamardLayer make_block_hadamard(int d_in, int d_out, int n_blocks, std::uint64_t seed) {
  BlockHadamardLayer l{d_in, d_out, n_blocks, {}};
  l.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(d_in)));
  l.params.resize(l.parameter_count());
  for (auto& p : l.params) p = dist(rng);
  return l;
}

inline std::vector<double> hadamard_transform(std::span<const double> x) {
  std::vector<double> hx(x.begin(), x.end());
  fwht(hx);
  const double s = 1.0 / std::sqrt(static_cast<double>(hx.size()));
  for (auto& v : hx) v *= s;
  return hx;
}

template <class T>
std::vector<T> block_hadamard_forward(const BlockHadamardLayer& l, std::span<const T> params,
                                      std::span<const double> x) {
  l.validate();
  if (x.size() != static_cast<std::size_t>(l.d_in)) throw InvalidArgument("block-Hadamard forward: input length");
  if (params.size() != l.parameter_count()) throw InvalidArgument("block-Hadamard forward: parameter count");
  const auto hx = hadamard_transform(x);
  const int h = l.block_rows(), w = l.block_cols();
  std::vector<T> y(l.d_out);
  ProductSum<T> sum;
  for (int b = 0; b < l.n_blocks; ++b)
    for (int i = 0; i < h; ++i) {
      const std::size_t row = (static_cast<std::size_t>(b) * h + i) * w;
      for (int j = 0; j < w; ++j) sum.add(hx[b * w + j], params[row + j]);
      y[b * h + i] = sum.finish();
    }
  return y;
}

inline std::vector<double> block_hadamard_forward(const BlockHadamardLayer& l, std::span<const double> x) {
  return block_hadamard_forward<double>(l, l.params, x);
}

// ---------------------------------------------------------------------------
// Fitting.

struct CurvePoint {
  int step = 0;
  double mse = 0.0;
};

struct FitReport {
  std::string method;
  int steps = 0;
  double initial_mse = 0.0;
  double final_mse = 0.0;
  std::vector<CurvePoint> curve;
  ParameterBreakdown params;
  // Mean power iterations per projection in each tenth of training.
  std::vector<double> iteration_stats;
  // Mean power iterations per projection at every step (rotor only).
  std::vector<double> iteration_trace;
  double wall_seconds = 0.0;
  std::uint64_t train_seed = 0;
  std::uint64_t init_seed = 0;
  int degeneracy_retries = 0;
};

struct FitOptions {
  PowerIterConfig power;
  std::uint64_t init_seed = 0;
  // Called after every optimizer step with (step, batch loss).
  std::function<void(int, double)> on_step;
};

namespace detail {

class BatchSampler {
 public:
  BatchSampler(std::size_t count, std::uint64_t seed) : order_(count), rng_(seed) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng_);
  }

  std::vector<std::size_t> next(std::size_t batch) {
    batch = std::min(batch, order_.size());
    if (pos_ + batch > order_.size()) {
      std::shuffle(order_.begin(), order_.end(), rng_);
      pos_ = 0;
    }
    std::vector<std::size_t> out(order_.begin() + pos_, order_.begin() + pos_ + batch);
    pos_ += batch;
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  std::mt19937_64 rng_;
  std::size_t pos_ = 0;
};

// Generic Adam loop. `grad(batch, params, step)` returns loss and gradient
// for the batch; `eval(params)` returns the full-data MSE; `after(delta)` sees
// every applied step.
template <class Grad, class Eval, class After>
void adam_loop(std::vector<double>& params, const Dataset& data, const TrainConfig& cfg, FitReport& report, Grad grad,
               Eval eval, After after, const FitOptions& opts) {
  cfg.validate();
  data.validate();
  const auto start = std::chrono::steady_clock::now();
  BatchSampler sampler(data.size(), cfg.seed);
  Adam adam(params.size());
  report.steps = cfg.steps;
  report.train_seed = cfg.seed;
  report.initial_mse = eval(params);
  report.curve.push_back({0, report.initial_mse});
  for (int step = 0; step < cfg.steps; ++step) {
    const auto batch = sampler.next(static_cast<std::size_t>(cfg.batch_size));
    auto [loss, g] = grad(batch, params, step);
    if (!std::isfinite(loss)) throw NumericError("fit: non-finite loss at step " + std::to_string(step));
    const auto delta = adam.step(params, g, cfg, step);
    after(delta);
    if (opts.on_step) opts.on_step(step, loss);
    const int done = step + 1;
    if (done % cfg.eval_every == 0 || done == cfg.steps) report.curve.push_back({done, eval(params)});
  }
  report.final_mse = report.curve.back().mse;
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

inline std::vector<double> phase_means(const std::vector<double>& trace, int phases = 10) {
  std::vector<double> out;
  if (trace.empty()) return out;
  const std::size_t n = trace.size();
  for (int p = 0; p < phases; ++p) {
    const std::size_t lo = n * p / phases, hi = n * (p + 1) / phases;
    if (hi <= lo) continue;
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += trace[i];
    out.push_back(s / static_cast<double>(hi - lo));
  }
  return out;
}

}  // namespace detail

inline double dataset_mse(const Dataset& data, const std::function<std::vector<double>(std::span<const double>)>& f) {
  double s = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto y = f(data.input(i));
    const auto t = data.target(i);
    for (int k = 0; k < data.d_out; ++k) s += (y[k] - t[k]) * (y[k] - t[k]);
  }
  return s / static_cast<double>(data.size() * data.d_out);
}

// Tracked loss of a gadget on a batch. `warm` must be fresh for g.params().
inline std::pair<double, std::vector<double>> gadget_loss_gradient(const RotorGadget& g, const Dataset& data,
                                                                   std::span<const std::size_t> batch,
                                                                   const WarmStore& warm, const PowerIterConfig& power) {
  ad::Tape tape;
  const auto vars = tape.variables(g.params());
  const auto maps = gadget_maps_tracked(g, vars, warm, power);
  SquaredErrorSum sse;
  for (std::size_t idx : batch) {
    const auto x = data.input(idx);
    const std::vector<Var> xv(x.begin(), x.end());
    const auto y = gadget_forward(g, maps, xv);
    sse.add(y, data.target(idx));
  }
  const Var loss = sse.mean();
  return {loss.value(), ad::backward_gradients(tape, loss, vars)};
}

inline FitReport fit(RotorGadget& g, const Dataset& data, const TrainConfig& cfg, const FitOptions& opts = {}) {
  if (data.d_in != g.config().d_in || data.d_out != g.config().d_out)
    throw InvalidArgument("fit: dataset shape does not match the gadget");
  FitReport report;
  report.method = "rotor";
  report.params = g.parameter_count();
  report.init_seed = opts.init_seed;
  const PowerIterConfig& power = opts.power;
  WarmStore warm;
  WarmStore eval_warm;
  std::mt19937_64 jitter_rng(cfg.seed ^ 0x5bd1e995ULL);
  const std::size_t m = pair_count(g.config().n);

  auto eval = [&](const std::vector<double>& params) {
    g.params() = params;
    const auto maps = gadget_maps(g, power, &eval_warm);
    return dataset_mse(data, [&](std::span<const double> x) { return gadget_forward(g, maps, x); });
  };

  auto solve = [&](std::vector<double>& params) {
    IterationCounter counter;
    for (int attempt = 0;; ++attempt) {
      try {
        g.params() = params;
        refresh_warm(g, power, warm, &counter);
        break;
      } catch (const DegeneracyError& e) {
        if (attempt >= 1)
          throw DegeneracyError(std::string("fit: decomposition stayed degenerate after a jittered retry: ") + e.what(),
                                e.residual());
        std::normal_distribution<double> jitter(0.0, 1e-8);
        for (std::size_t k = 0; k < g.rotor_param_count(); ++k) params[k] += jitter(jitter_rng);
        ++report.degeneracy_retries;
      }
    }
    report.iteration_trace.push_back(counter.projections > 0 ? static_cast<double>(counter.iterations) /
                                                                    static_cast<double>(counter.projections)
                                                              : 0.0);
  };

  auto grad = [&](const std::vector<std::size_t>& batch, std::vector<double>& params, int) {
    solve(params);
    try {
      return gadget_loss_gradient(g, data, batch, warm, power);
    } catch (const StaleWarmStart&) {
      warm.reset(g.config().slot_count());
      g.params() = params;
      refresh_warm(g, power, warm);
      return gadget_loss_gradient(g, data, batch, warm, power);
    }
  };

  auto after = [&](const std::vector<double>& delta) {
    // Stale-warm-start guard: drop vectors of slots that moved far.
    for (std::size_t slot = 0; slot < warm.slots.size(); ++slot) {
      double s = 0.0;
      for (std::size_t k = slot * m; k < (slot + 1) * m; ++k) s += delta[k] * delta[k];
      if (std::sqrt(s) > 0.5) warm.slots[slot].clear();
    }
  };

  std::vector<double> params = g.params();
  detail::adam_loop(params, data, cfg, report, grad, eval, after, opts);
  g.params() = params;
  report.iteration_stats = detail::phase_means(report.iteration_trace);
  return report;
}

template <class Forward>
FitReport fit_baseline(const char* method, std::vector<double>& layer_params, ParameterBreakdown count,
                       const Dataset& data, const TrainConfig& cfg, const FitOptions& opts, Forward forward) {
  FitReport report;
  report.method = method;
  report.params = count;
  report.init_seed = opts.init_seed;
  auto eval = [&](const std::vector<double>& params) {
    return dataset_mse(data, [&](std::span<const double> x) { return forward(std::span<const double>(params), x); });
  };
  auto grad = [&](const std::vector<std::size_t>& batch, std::vector<double>& params, int) {
    ad::Tape tape;
    const auto vars = tape.variables(params);
    SquaredErrorSum sse;
    for (std::size_t idx : batch) sse.add(forward(std::span<const Var>(vars), data.input(idx)), data.target(idx));
    const Var loss = sse.mean();
    return std::pair<double, std::vector<double>>{loss.value(), ad::backward_gradients(tape, loss, vars)};
  };
  detail::adam_loop(layer_params, data, cfg, report, grad, eval, [](const std::vector<double>&) {}, opts);
  return report;
}

inline FitReport fit(LowRankLayer& l, const Dataset& data, const TrainConfig& cfg, const FitOptions& opts = {}) {
  if (data.d_in != l.d_in || data.d_out != l.d_out) throw InvalidArgument("fit: dataset shape does not match layer");
  ParameterBreakdown count{l.parameter_count(), 0, l.parameter_count()};
  return fit_baseline("lr", l.params, count, data, cfg, opts, [&](auto params, std::span<const double> x) {
    using T = typename decltype(params)::element_type;
    return lowrank_forward<std::remove_const_t<T>>(l, params, x);
  });
}

inline FitReport fit(BlockHadamardLayer& l, const Dataset& data, const TrainConfig& cfg, const FitOptions& opts = {}) {
  l.validate();
  if (data.d_in != l.d_in || data.d_out != l.d_out) throw InvalidArgument("fit: dataset shape does not match layer");
  ParameterBreakdown count{l.parameter_count(), 0, l.parameter_count()};
  return fit_baseline("bh", l.params, count, data, cfg, opts, [&](auto params, std::span<const double> x) {
    using T = typename decltype(params)::element_type;
    return block_hadamard_forward<std::remove_const_t<T>>(l, params, x);
  });
}

// ---------------------------------------------------------------------------
// Synthetic tasks.

enum class TaskKind { teacher_gadget, random_dense, random_rotation_bivector };

inline const char* to_string(TaskKind k) {
  switch (k) {
    case TaskKind::teacher_gadget: return "teacher_gadget";
    case TaskKind::random_dense: return "random_dense";
    case TaskKind::random_rotation_bivector: return "random_rotation_bivector";
  }
  return "?";
}

struct TaskShape {
  int d_in = 0;
  int d_out = 0;
  std::size_t samples = 256;
  // teacher_gadget: teacher architecture (d_in/d_out are taken from above).
  GadgetConfig teacher;
  // Teacher bivector coefficients are uniform in [-teacher_scale, teacher_scale].
  double teacher_scale = 1.0;
};

struct SyntheticTask {
  Dataset data;
  std::vector<double> teacher_params;
  Bivector<double> rotation{AlgebraDim(1)};
};

// Frozen random gadget with bivector coefficients uniform in [-scale, scale].
inline RotorGadget make_teacher_gadget(const GadgetConfig& config, std::uint64_t seed, double scale = 1.0) {
  RotorGadget teacher = build_gadget(config, seed ^ 0x7e57ULL);
  std::mt19937_64 rng(seed ^ 0x3c6ef372fe94f82bULL);
  std::uniform_real_distribution<double> coeff(-scale, scale);
  for (std::size_t k = 0; k < teacher.rotor_param_count(); ++k) teacher.params()[k] = coeff(rng);
  return teacher;
}

// Teacher outputs for every input of `data`, row-major.
inline std::vector<double> teacher_targets(const RotorGadget& teacher, const Dataset& data,
                                           const PowerIterConfig& power = {}) {
  if (data.d_in != teacher.config().d_in) throw ConfigError("teacher: input width does not match the gadget");
  const auto maps = gadget_maps(teacher, power);
  std::vector<double> out;
  out.reserve(data.size() * teacher.config().d_out);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto y = gadget_forward(teacher, maps, data.input(i));
    out.insert(out.end(), y.begin(), y.end());
  }
  return out;
}

inline SyntheticTask make_synthetic_task(TaskKind kind, const TaskShape& shape, std::uint64_t seed,
                                         const PowerIterConfig& power = {}) {
  if (shape.d_in < 1 || shape.d_out < 1 || shape.samples < 1) throw ConfigError("synthetic task: invalid shape");
  SyntheticTask task;
  Dataset& d = task.data;
  d.d_in = shape.d_in;
  d.d_out = shape.d_out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  d.inputs.resize(shape.samples * shape.d_in);
  for (auto& v : d.inputs) v = normal(rng);
  d.targets.resize(shape.samples * shape.d_out);

  switch (kind) {
    case TaskKind::teacher_gadget: {
      GadgetConfig c = shape.teacher;
      c.d_in = shape.d_in;
      c.d_out = shape.d_out;
      const RotorGadget teacher = make_teacher_gadget(c, seed, shape.teacher_scale);
      d.targets = teacher_targets(teacher, d, power);
      task.teacher_params = teacher.params();
      break;
    }
    case TaskKind::random_dense: {
      std::normal_distribution<double> w(0.0, 1.0 / std::sqrt(static_cast<double>(shape.d_in)));
      DenseMatrix W(shape.d_out, shape.d_in);
      for (auto& v : W.data()) v = w(rng);
      for (std::size_t i = 0; i < d.size(); ++i) {
        const auto y = W * d.input(i);
        std::copy(y.begin(), y.end(), d.targets.begin() + i * d.d_out);
      }
      break;
    }
    case TaskKind::random_rotation_bivector: {
      const int dim = shape.d_in;
      if (dim != shape.d_out || dim < 2 || (dim & (dim - 1)) != 0)
        throw ConfigError("random_rotation_bivector: d_in = d_out must be a power of two >= 2");
      const AlgebraDim ad(std::countr_zero(static_cast<unsigned>(dim)));
      task.rotation = random_bivector(ad, rng);
      const auto r = rotor_from_bivector(task.rotation, power);
      const auto n = sandwich_matrix(r, r);
      for (std::size_t i = 0; i < d.size(); ++i) {
        const auto x = d.input(i);
        for (int k = 0; k < dim; ++k) {
          double s = 0.0;
          for (int j = 0; j < dim; ++j) s += x[j] * n[static_cast<std::size_t>(j) * dim + k];
          d.targets[i * dim + k] = s;
        }
      }
      break;
    }
  }
  return task;
}

}  // namespace rotorlin
