#pragma once

// Diagnostics and sweeps shared by the CLI and the acceptance runner.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

#include "rotorlin/training.hpp"

namespace rotorlin {

// Worker cap: ROTORLIN_THREADS if set, else the hardware count.
inline int worker_threads() {
  if (const char* env = std::getenv("ROTORLIN_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

// fn(i) for i in [0, count) on up to `threads` workers; results keep index
// order and the first exception is rethrown.
template <class Fn>
auto parallel_map(std::size_t count, Fn fn, int threads = worker_threads()) {
  using R = decltype(fn(std::size_t{0}));
  std::vector<R> out(count);
  const auto workers = static_cast<std::size_t>(std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(count, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          out[i] = fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

// ---------------------------------------------------------------------------
// Decomposition diagnostics.

struct ComponentDiagnostics {
  double norm = 0.0;
  double simplicity = 0.0;  // ||b_i ^ b_i|| / ||b||^2
  int iterations = 0;
};

struct DecompositionDiagnostics {
  int n = 0;
  double norm = 0.0;
  std::vector<ComponentDiagnostics> components;
  double reconstruction = 0.0;  // ||sum b_i - b|| / ||b||
  double simplicity = 0.0;
  double commutation = 0.0;    // max ||b_i b_j - b_j b_i|| / ||b||^2
  double orthogonality = 0.0;  // max ||B_i B_j||_F / (||B_i||_F ||B_j||_F)
  double exp_product = 0.0;    // ||prod exp(b_i) - exp(b)|| against the series

  double worst() const { return std::max({reconstruction, simplicity, commutation, orthogonality, exp_product}); }
  bool passed(double tol) const { return worst() <= tol; }
};

namespace detail {

inline DenseMatrix skew_product(const Bivector<double>& a, const Bivector<double>& b) {
  return skew_from_bivector(a) * skew_from_bivector(b);
}

}  // namespace detail

inline DecompositionDiagnostics diagnose_decomposition(const Bivector<double>& b, const InvariantDecomposition& d,
                                                       double tol_simple = 1e-8) {
  DecompositionDiagnostics out;
  out.n = b.n();
  out.norm = norm(b);
  const double n2 = std::max(out.norm * out.norm, 1e-300);
  Bivector<double> sum(b.dim());
  for (std::size_t i = 0; i < d.components.size(); ++i) {
    const auto& c = d.components[i];
    ComponentDiagnostics cd;
    cd.norm = norm(c);
    cd.simplicity = simplicity_residual(c) / n2;
    cd.iterations = i < d.iterations_used.size() ? d.iterations_used[i] : 0;
    out.simplicity = std::max(out.simplicity, cd.simplicity);
    out.components.push_back(cd);
    sum += c;
  }
  out.reconstruction = norm(sum - b) / std::max(out.norm, 1e-300);
  for (std::size_t i = 0; i < d.components.size(); ++i)
    for (std::size_t j = i + 1; j < d.components.size(); ++j) {
      const auto bi = to_multivector(d.components[i]);
      const auto bj = to_multivector(d.components[j]);
      out.commutation = std::max(out.commutation, norm(bi * bj - bj * bi) / n2);
      const double scale = std::max(2.0 * norm(d.components[i]) * norm(d.components[j]), 1e-300);
      const auto p = detail::skew_product(d.components[i], d.components[j]);
      double f = 0.0;
      for (double x : p.data()) f += x * x;
      out.orthogonality = std::max(out.orthogonality, std::sqrt(f) / scale);
    }
  if (out.norm > 0.0) {
    const auto r = rotor_from_components(b.dim(), d.components, tol_simple);
    const auto e = exp_series(to_multivector(b));
    out.exp_product = norm(r.value() - e) / std::max(norm(e), 1e-300);
  }
  return out;
}

inline std::string to_text(const DecompositionDiagnostics& d) {
  std::ostringstream s;
  s << "n: " << d.n << "\n";
  s << "norm: " << format_real(d.norm) << "\n";
  s << "components: " << d.components.size() << "\n";
  for (std::size_t i = 0; i < d.components.size(); ++i) {
    const auto& c = d.components[i];
    s << "component " << i << ": norm " << format_real(c.norm) << " simplicity " << format_real(c.simplicity)
      << " iterations " << c.iterations << "\n";
  }
  s << "reconstruction: " << format_real(d.reconstruction) << "\n";
  s << "simplicity: " << format_real(d.simplicity) << "\n";
  s << "commutation: " << format_real(d.commutation) << "\n";
  s << "orthogonality: " << format_real(d.orthogonality) << "\n";
  s << "exp_product: " << format_real(d.exp_product) << "\n";
  return s.str();
}

// ---------------------------------------------------------------------------
// Gradient checks.

struct GradcheckOptions {
  double h = 1e-5;
  std::size_t batch = 8;
  double param_scale = 0.5;
  PowerIterConfig power;
};

struct GradcheckReport {
  double worst_r = 0.0;
  double worst_s = 0.0;
  double worst_slope = 0.0;
  std::size_t worst_index = 0;
  std::size_t parameters = 0;

  double worst() const { return std::max({worst_r, worst_s, worst_slope}); }
};

inline double gradient_relative_error(double ad, double fd) { return std::abs(ad - fd) / std::max(std::abs(fd), 1e-6); }

struct GradcheckState {
  RotorGadget gadget;
  Dataset batch;
};

// Random parameters, slopes and a small batch with normal inputs and targets.
inline GradcheckState random_gradcheck_state(const GadgetConfig& config, std::uint64_t seed,
                                             const GradcheckOptions& opts = {}) {
  RotorGadget g = build_gadget(config, seed);
  std::mt19937_64 rng(seed ^ 0x1b873593ULL);
  std::uniform_real_distribution<double> coeff(-opts.param_scale, opts.param_scale);
  std::uniform_real_distribution<double> slope(0.1, 0.5);
  const auto count = g.parameter_count();
  for (std::size_t k = 0; k < count.rotor_params; ++k) g.params()[k] = coeff(rng);
  for (std::size_t k = count.rotor_params; k < count.total; ++k) g.params()[k] = slope(rng);
  Dataset d;
  d.d_in = g.config().d_in;
  d.d_out = g.config().d_out;
  std::normal_distribution<double> normal;
  d.inputs.resize(opts.batch * d.d_in);
  d.targets.resize(opts.batch * d.d_out);
  for (auto& v : d.inputs) v = normal(rng);
  for (auto& v : d.targets) v = normal(rng);
  return {std::move(g), std::move(d)};
}

inline GradcheckReport gradcheck(const GradcheckState& state, const GradcheckOptions& opts = {}) {
  RotorGadget g = state.gadget;
  const Dataset& data = state.batch;
  std::vector<std::size_t> batch(data.size());
  std::iota(batch.begin(), batch.end(), std::size_t{0});

  WarmStore warm;
  refresh_warm(g, opts.power, warm);
  const auto [loss, ad] = gadget_loss_gradient(g, data, batch, warm, opts.power);

  auto f = [&](std::span<const double> p) {
    RotorGadget probe = g;
    probe.params().assign(p.begin(), p.end());
    WarmStore w = warm;
    const auto maps = gadget_maps(probe, opts.power, &w);
    return dataset_mse(data, [&](std::span<const double> x) { return gadget_forward(probe, maps, x); });
  };
  const auto fd = finite_difference_gradients(f, g.params(), opts.h);

  GradcheckReport r;
  r.parameters = ad.size();
  const auto& c = g.config();
  const std::size_t m = pair_count(c.n);
  const std::size_t rotor = g.rotor_param_count();
  double worst = -1.0;
  for (std::size_t k = 0; k < ad.size(); ++k) {
    const double e = gradient_relative_error(ad[k], fd[k]);
    if (k >= rotor) r.worst_slope = std::max(r.worst_slope, e);
    else if ((k / m) % 2 == 0) r.worst_r = std::max(r.worst_r, e);
    else r.worst_s = std::max(r.worst_s, e);
    if (e > worst) {
      worst = e;
      r.worst_index = k;
    }
  }
  return r;
}

// Node count of one tracked forward over `data` (maps plus samples).
inline std::size_t tracked_node_count(const RotorGadget& g, const Dataset& data, const PowerIterConfig& power,
                                      int* iterations = nullptr) {
  WarmStore warm;
  IterationCounter counter;
  refresh_warm(g, power, warm, &counter);
  if (iterations) *iterations = static_cast<int>(counter.iterations);
  ad::Tape tape;
  const auto vars = tape.variables(g.params());
  const auto maps = gadget_maps_tracked(g, vars, warm, power);
  SquaredErrorSum sse;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.input(i);
    sse.add(gadget_forward(g, maps, std::vector<Var>(x.begin(), x.end())), data.target(i));
  }
  (void)sse.mean();
  return tape.node_count();
}

// ---------------------------------------------------------------------------
// Width/depth sweep.

struct SweepPoint {
  int width = 0;
  int depth = 0;
  std::vector<double> final_mse;
  double median_mse = 0.0;
};

// Fits `seeds` students of the given shape to one dataset.
inline SweepPoint sweep_point(const Dataset& data, GadgetConfig base, int width, int depth, int seeds,
                              const TrainConfig& train, const PowerIterConfig& power, int threads = worker_threads()) {
  if (seeds < 1) throw ConfigError("sweep: seeds must be >= 1");
  base.width = width;
  base.depth = depth;
  base.c1 = base.c2 = 0;
  SweepPoint p;
  p.width = width;
  p.depth = depth;
  p.final_mse = parallel_map(
      static_cast<std::size_t>(seeds),
      [&](std::size_t s) {
        RotorGadget g = build_gadget(base, 1000 + s);
        TrainConfig t = train;
        t.seed = train.seed + s;
        FitOptions opts;
        opts.power = power;
        opts.init_seed = 1000 + s;
        return fit(g, data, t, opts).final_mse;
      },
      threads);
  p.median_mse = median(p.final_mse);
  return p;
}

// ---------------------------------------------------------------------------
// Warm-start study: a single two-rotor map (c1 = c2 = 1, width = depth = 1)
// fitted to the rotation of a random bivector.

struct WarmstartStudy {
  int dim = 0;
  int runs = 0;
  std::vector<double> mean_trace;  // per step, averaged over runs
  double first_mean = 0.0;         // steps in the first 10%, cold solve excluded
  double last_mean = 0.0;          // steps in the final 10%
};

inline std::vector<double> warmstart_trace(int dim, std::uint64_t seed, std::size_t samples, const TrainConfig& train,
                                           const PowerIterConfig& power) {
  if (dim < 4 || (dim & (dim - 1)) != 0) throw ConfigError("warmstart: dim must be a power of two >= 4");
  TaskShape shape;
  shape.d_in = shape.d_out = dim;
  shape.samples = samples;
  const auto task = make_synthetic_task(TaskKind::random_rotation_bivector, shape, seed, power);
  GadgetConfig c;
  c.d_in = c.d_out = dim;
  c.n = std::countr_zero(static_cast<unsigned>(dim));
  c.width = c.depth = 1;
  RotorGadget g = build_gadget(c, seed + 17);
  TrainConfig t = train;
  t.seed = seed;
  FitOptions opts;
  opts.power = power;
  opts.init_seed = seed + 17;
  return fit(g, task.data, t, opts).iteration_trace;
}

inline WarmstartStudy warmstart_study(int dim, int runs, std::size_t samples, const TrainConfig& train,
                                      const PowerIterConfig& power, std::uint64_t seed = 0,
                                      int threads = worker_threads()) {
  if (runs < 1) throw ConfigError("warmstart: runs must be >= 1");
  if (train.steps < 2) throw ConfigError("warmstart: at least 2 steps are needed");
  const auto traces = parallel_map(
      static_cast<std::size_t>(runs), [&](std::size_t r) { return warmstart_trace(dim, seed + r, samples, train, power); },
      threads);
  WarmstartStudy s;
  s.dim = dim;
  s.runs = runs;
  const std::size_t steps = traces.front().size();
  s.mean_trace.assign(steps, 0.0);
  for (const auto& t : traces)
    for (std::size_t i = 0; i < steps; ++i) s.mean_trace[i] += t[i] / runs;
  // Index 0 is the cold solve before any warm vectors exist.
  const std::size_t warm_steps = steps - 1;
  const std::size_t tenth = std::max<std::size_t>(1, warm_steps / 10);
  for (std::size_t i = 0; i < tenth; ++i) {
    s.first_mean += s.mean_trace[1 + i] / tenth;
    s.last_mean += s.mean_trace[steps - 1 - i] / tenth;
  }
  return s;
}

}  // namespace rotorlin
