#pragma once

// Invariant decomposition of a bivector into commuting, orthogonal, simple
// components by repeated power iteration on S = b _| (b _| .).
//
// Plain power iteration stops at ||v + v_prev|| <= epsilon, which leaves the
// components accurate only to about epsilon. A refinement pass then applies
// the spectral filter
//
//   p_i(S) = S * prod_{j > i} (S + sigma_j^2 I)
//
// to each converged vector, with the sigma_j taken as constants from the
// previous pass. p_i annihilates every invariant plane except plane i, so one
// or two passes reach working precision. The same pass is what the tracked
// (differentiable) path records: at a converged vector its Jacobian with
// respect to the input vector vanishes, so derivatives flow only through b and
// the recorded graph has a fixed size that does not depend on how many
// iterations the untracked solve needed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rotorlin/bivector.hpp"

namespace rotorlin {

struct PowerIterConfig {
  double epsilon = 1e-6;
  int max_iters = 10000;
  std::uint64_t seed = 0;
  double tol_simple = 1e-8;

  void validate() const {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw InvalidArgument("power iteration: epsilon must be > 0");
    if (max_iters < 1) throw InvalidArgument("power iteration: max_iters must be >= 1");
    if (!(tol_simple > 0.0)) throw InvalidArgument("power iteration: tol_simple must be > 0");
  }
};

struct SimpleBivector {
  Bivector<double> base;
  double simplicity_residual = 0.0;
};

// Components relative to ||b|| below this are dropped.
inline constexpr double kDropRelative = 1e-12;
// Spectral values closer than this (relative to the largest) are one cluster.
inline constexpr double kTieRelative = 1e-9;

template <class T>
struct Decomposition {
  std::vector<Bivector<T>> components;
  // One converged vector per extraction round; the last component, when it is
  // the residual, has no vector.
  std::vector<VectorR> singular_vectors;
  // Power iterations per component (0 for the residual and tracked passes).
  std::vector<int> iterations_used;

  Bivector<T> sum(AlgebraDim dim) const {
    Bivector<T> s(dim);
    for (const auto& c : components) s += c;
    return s;
  }
};

using InvariantDecomposition = Decomposition<double>;

struct ProjectionResult {
  SimpleBivector simple;
  VectorR v;
  int iterations = 0;
};

inline bool simple_enough(const Bivector<double>& b, double tol) {
  const double n2 = norm_squared(b);
  return simplicity_residual(b) <= tol * std::max(n2, 1e-300);
}

// Dominant simple component of b.
inline ProjectionResult project_simple(const Bivector<double>& b, std::span<const double> v0,
                                       const PowerIterConfig& cfg) {
  cfg.validate();
  const int n = b.n();
  const double nb = norm(b);
  if (nb == 0.0) throw InvalidArgument("project_simple: bivector is zero");
  if (v0.size() != static_cast<std::size_t>(n)) throw InvalidArgument("project_simple: v0 length must equal n");
  if (vector_norm(v0) == 0.0) throw InvalidArgument("project_simple: v0 is zero");

  VectorR v = normalized(VectorR(v0.begin(), v0.end()));
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  int restarts = 0;
  int it = 0;
  double residual = 0.0;
  bool converged = false;
  while (it < cfg.max_iters) {
    ++it;
    VectorR w = contract(b, contract(b, v));
    const double len = vector_norm(w);
    if (len <= 1e-14 * nb * nb) {
      // v sits in the null space of b; start again elsewhere.
      if (++restarts > 3) throw ConvergenceError("project_simple: iterate vanished repeatedly", it, 1.0);
      v = random_unit_vector(n, rng);
      continue;
    }
    for (auto& x : w) x /= len;
    residual = 0.0;
    for (int i = 0; i < n; ++i) residual += (w[i] + v[i]) * (w[i] + v[i]);
    residual = std::sqrt(residual);
    v = std::move(w);
    if (residual <= cfg.epsilon) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw ConvergenceError("power iteration did not converge in " + std::to_string(cfg.max_iters) +
                               " iterations (last residual " + std::to_string(residual) + ")",
                           it, residual);

  const VectorR su = contract(b, v);
  ProjectionResult out{{wedge(su, v, b.dim()), 0.0}, v, it};
  out.simple.simplicity_residual = simplicity_residual(out.simple.base);
  return out;
}

inline ProjectionResult project_simple(const Bivector<double>& b, const VectorR& v0, const PowerIterConfig& cfg) {
  return project_simple(b, std::span<const double>(v0), cfg);
}

namespace detail {

template <class T>
std::vector<T> apply_s(const Bivector<T>& b, const std::vector<T>& v) {
  return contract(b, contract(b, v));
}

// normalize(p(S) v) with p(S) = S prod (S + shift I); rescaled after every
// factor so large spectra cannot overflow.
template <class T>
std::vector<T> filtered_direction(const Bivector<T>& b, std::vector<T> v, std::span<const double> shifts) {
  for (double s : shifts) {
    auto sv = apply_s(b, v);
    for (std::size_t i = 0; i < v.size(); ++i) sv[i] = sv[i] + s * v[i];
    v = normalized(std::move(sv));
  }
  return normalized(apply_s(b, v));
}

template <class T>
struct PassResult {
  std::vector<Bivector<T>> components;
  std::vector<std::vector<T>> vectors;
};

// One extract-and-subtract sweep seeded with `seeds`. With shifts == nullptr
// the seeds are used as-is (value-level spectrum estimate).
template <class T>
PassResult<T> extraction_pass(const Bivector<T>& b, const std::vector<VectorR>& seeds,
                              const std::vector<std::vector<double>>* shifts, bool keep_residual) {
  PassResult<T> out;
  Bivector<T> residual = b;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    std::vector<T> v(seeds[i].begin(), seeds[i].end());
    v = shifts ? filtered_direction(residual, std::move(v), (*shifts)[i]) : normalized(std::move(v));
    const auto su = contract(residual, v);
    auto bs = wedge(su, v, b.dim());
    residual -= bs;
    out.components.push_back(std::move(bs));
    out.vectors.push_back(std::move(v));
  }
  if (keep_residual) out.components.push_back(std::move(residual));
  return out;
}

// Shifts sigma_j^2 for every later component j not tied with round i.
inline std::vector<std::vector<double>> filter_shifts(const std::vector<double>& sigma, std::size_t rounds) {
  const double top = sigma.empty() ? 0.0 : *std::max_element(sigma.begin(), sigma.end());
  std::vector<std::vector<double>> shifts(rounds);
  for (std::size_t i = 0; i < rounds; ++i)
    for (std::size_t j = i + 1; j < sigma.size(); ++j) {
      if (sigma[j] <= kDropRelative * top) continue;
      if (std::abs(sigma[j] - sigma[i]) <= kTieRelative * top) continue;
      shifts[i].push_back(sigma[j] * sigma[j]);
    }
  return shifts;
}

inline std::vector<double> component_norms(const std::vector<Bivector<double>>& comps) {
  std::vector<double> s;
  for (const auto& c : comps) s.push_back(norm(c));
  return s;
}

inline double sign_free_distance(std::span<const double> a, std::span<const double> b) {
  double dm = 0.0, dp = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dm += (a[i] - b[i]) * (a[i] - b[i]);
    dp += (a[i] + b[i]) * (a[i] + b[i]);
  }
  return std::sqrt(std::min(dm, dp));
}

inline void check_residual_simple(const Decomposition<double>& d, bool has_residual, double tol) {
  if (!has_residual || d.components.empty()) return;
  const auto& r = d.components.back();
  if (!simple_enough(r, tol)) {
    const double res = simplicity_residual(r);
    throw DegeneracyError("invariant decomposition: residual component is not simple (||r^r|| = " +
                              std::to_string(res) + ", ||r|| = " + std::to_string(norm(r)) +
                              "); spectral values are tied or nearly tied",
                          res);
  }
}

}  // namespace detail

// Untracked decomposition. `warm` optionally seeds each round; missing or
// zero entries fall back to seeded random vectors.
inline InvariantDecomposition invariant_decompose(const Bivector<double>& b, const std::vector<VectorR>& warm,
                                                  const PowerIterConfig& cfg) {
  cfg.validate();
  InvariantDecomposition out;
  const int n = b.n();
  const int k = n / 2;
  const double nb = norm(b);
  if (nb == 0.0) return out;
  if (k <= 1) {
    out.components.push_back(b);
    out.iterations_used.push_back(0);
    return out;
  }

  std::mt19937_64 rng(cfg.seed);
  Bivector<double> residual = b;
  for (int round = 0; round < k - 1; ++round) {
    if (norm(residual) <= kDropRelative * nb) break;
    VectorR v0;
    if (round < static_cast<int>(warm.size()) && warm[round].size() == static_cast<std::size_t>(n) &&
        vector_norm(warm[round]) > 0.0)
      v0 = warm[round];
    else
      v0 = random_unit_vector(n, rng);
    PowerIterConfig round_cfg = cfg;
    round_cfg.seed = cfg.seed + 1000003ULL * (round + 1);
    auto pr = project_simple(residual, v0, round_cfg);
    residual -= pr.simple.base;
    out.components.push_back(std::move(pr.simple.base));
    out.singular_vectors.push_back(std::move(pr.v));
    out.iterations_used.push_back(pr.iterations);
  }
  const bool keep_residual = norm(residual) > kDropRelative * nb;
  if (keep_residual) {
    out.components.push_back(residual);
    out.iterations_used.push_back(0);
  }

  // Refinement.
  for (int pass = 0; pass < 4 && !out.singular_vectors.empty(); ++pass) {
    const auto shifts = detail::filter_shifts(detail::component_norms(out.components), out.singular_vectors.size());
    auto refined = detail::extraction_pass<double>(b, out.singular_vectors, &shifts, keep_residual);
    double change = 0.0;
    for (std::size_t i = 0; i < refined.vectors.size(); ++i)
      change = std::max(change, detail::sign_free_distance(refined.vectors[i], out.singular_vectors[i]));
    out.components = std::move(refined.components);
    out.singular_vectors = std::move(refined.vectors);
    if (change < 1e-14) break;
  }

  detail::check_residual_simple(out, keep_residual, cfg.tol_simple);
  return out;
}

inline InvariantDecomposition invariant_decompose(const Bivector<double>& b, const PowerIterConfig& cfg = {}) {
  return invariant_decompose(b, {}, cfg);
}

// Differentiable pass seeded by vectors from a converged untracked solve of
// the same b. The residual is always kept so that b stays connected to the
// graph even when it is (nearly) zero.
inline Decomposition<Var> decompose_tracked(const Bivector<Var>& b, const std::vector<VectorR>& warm,
                                            const PowerIterConfig& cfg) {
  cfg.validate();
  Decomposition<Var> out;
  const int n = b.n();
  for (const auto& w : warm)
    if (w.size() != static_cast<std::size_t>(n)) throw InvalidArgument("decompose_tracked: warm vector length");
  if (static_cast<int>(warm.size()) > std::max(0, n / 2 - 1))
    throw InvalidArgument("decompose_tracked: more warm vectors than extraction rounds");

  const Bivector<double> bv = values(b);
  const auto estimate = detail::extraction_pass<double>(bv, warm, nullptr, true);
  const auto shifts = detail::filter_shifts(detail::component_norms(estimate.components), warm.size());
  auto tracked = detail::extraction_pass<Var>(b, warm, &shifts, true);

  for (std::size_t i = 0; i < warm.size(); ++i) {
    VectorR v(n);
    for (int j = 0; j < n; ++j) v[j] = tracked.vectors[i][j].value();
    const double drift = detail::sign_free_distance(v, warm[i]);
    if (drift > 10.0 * cfg.epsilon)
      throw StaleWarmStart("decompose_tracked: warm vector " + std::to_string(i) + " moved by " +
                               std::to_string(drift) + " in the tracked pass",
                           drift);
    out.singular_vectors.push_back(std::move(v));
  }
  out.components = std::move(tracked.components);
  out.iterations_used.assign(out.components.size(), 0);
  return out;
}

// Component norms, largest first: the distinct singular values of B.
inline std::vector<double> spectral_values(const InvariantDecomposition& d) {
  auto s = detail::component_norms(d.components);
  std::sort(s.rbegin(), s.rend());
  return s;
}

}  // namespace rotorlin
