#pragma once

// Rotor gadget: a map R^{d_in} -> R^{d_out} built from two-rotor sandwiches.
//
// Inputs are cut into c1 contiguous chunks and outputs into c2 chunks, each
// of `chunk` coordinates (2^n when all blades carry data, n when only the
// grade-1 blades do); the last chunk is zero-padded. For every width lane and
// every input/output chunk pair (i, j) a branch applies `depth` maps
// x -> r x s~ in sequence. Between consecutive maps the branch state is RMS
// normalized, passed through the nonlinearity and permuted by a fixed
// permutation (one per depth boundary, shared by all branches). Output chunk
// j pools the branches (lane, i, j) by mean or sum.
//
// Parameter layout: bivector coefficients for slot
//   ((((layer * width + lane) * c1 + i) * c2 + j) * 2 + side)
// at offset slot * C(n,2), side 0 = r, side 1 = s; PReLU slopes (one per depth
// boundary) follow the rotor block.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rotorlin/matrix.hpp"

namespace rotorlin {

enum class Pooling { mean, sum };
enum class Nonlinearity { none, leaky, prelu };
enum class Embedding { all_grades, vectors };

inline const char* to_string(Pooling p) { return p == Pooling::mean ? "mean" : "sum"; }
inline const char* to_string(Nonlinearity n) {
  switch (n) {
    case Nonlinearity::none: return "none";
    case Nonlinearity::leaky: return "leaky";
    case Nonlinearity::prelu: return "prelu";
  }
  return "?";
}
inline const char* to_string(Embedding e) { return e == Embedding::all_grades ? "all_grades" : "vectors"; }

struct GadgetConfig {
  int d_in = 0;
  int d_out = 0;
  int n = 0;
  int c1 = 0;  // 0: derive from d_in
  int c2 = 0;  // 0: derive from d_out
  int width = 1;
  int depth = 1;
  Pooling pooling = Pooling::mean;
  Nonlinearity nonlinearity = Nonlinearity::prelu;
  double slope = 0.25;  // leaky slope, or initial PReLU slope
  bool use_normalization = true;
  bool use_permutations = true;
  Embedding embedding = Embedding::all_grades;
  std::uint64_t permutation_seed = 0;

  int chunk() const { return embedding == Embedding::all_grades ? (1 << n) : n; }

  // Fills c1/c2 when zero and checks the cover. Throws ConfigError.
  void resolve() {
    if (n < 1 || n > AlgebraDim::kMaxGenerators) throw ConfigError("gadget.n must be in [1, 16]");
    if (d_in < 1) throw ConfigError("gadget.d_in must be positive");
    if (d_out < 1) throw ConfigError("gadget.d_out must be positive");
    if (width < 1) throw ConfigError("gadget.width must be positive");
    if (depth < 1) throw ConfigError("gadget.depth must be positive");
    if (!std::isfinite(slope)) throw ConfigError("gadget.slope must be finite");
    const int c = chunk();
    if (embedding == Embedding::all_grades && c > std::min(d_in, d_out))
      throw ConfigError("gadget: chunk 2^n = " + std::to_string(c) + " exceeds min(d_in, d_out) = " +
                        std::to_string(std::min(d_in, d_out)));
    const int need1 = (d_in + c - 1) / c;
    const int need2 = (d_out + c - 1) / c;
    if (c1 == 0) c1 = need1;
    if (c2 == 0) c2 = need2;
    if (c1 != need1)
      throw ConfigError("gadget.c1 = " + std::to_string(c1) + " does not cover the input: " + std::to_string(need1) +
                        " chunks of " + std::to_string(c) + " are needed (chunk " + std::to_string(c1 - 1) +
                        " would cover [" + std::to_string((c1 - 1) * c) + ", " + std::to_string(c1 * c) +
                        ") against d_in = " + std::to_string(d_in) + ")");
    if (c2 != need2)
      throw ConfigError("gadget.c2 = " + std::to_string(c2) + " does not cover the output: " + std::to_string(need2) +
                        " chunks of " + std::to_string(c) + " are needed (chunk " + std::to_string(c2 - 1) +
                        " would cover [" + std::to_string((c2 - 1) * c) + ", " + std::to_string(c2 * c) +
                        ") against d_out = " + std::to_string(d_out) + ")");
  }

  std::size_t branch_count() const { return static_cast<std::size_t>(width) * c1 * c2; }
  std::size_t slot_count() const { return 2 * static_cast<std::size_t>(depth) * branch_count(); }
  std::size_t slot(int layer, int lane, int i, int j, int side) const {
    return ((((static_cast<std::size_t>(layer) * width + lane) * c1 + i) * c2 + j) * 2 + side);
  }
};

struct ParameterBreakdown {
  std::size_t rotor_params = 0;
  std::size_t nonlinearity_params = 0;
  std::size_t total = 0;
};

inline ParameterBreakdown gadget_parameter_count(const GadgetConfig& c) {
  ParameterBreakdown p;
  p.rotor_params = c.slot_count() * pair_count(c.n);
  p.nonlinearity_params = c.nonlinearity == Nonlinearity::prelu ? static_cast<std::size_t>(c.depth - 1) : 0;
  p.total = p.rotor_params + p.nonlinearity_params;
  return p;
}

using Permutation = std::vector<std::uint32_t>;

inline Permutation inverse(const Permutation& p) {
  Permutation inv(p.size());
  for (std::uint32_t k = 0; k < p.size(); ++k) inv[p[k]] = k;
  return inv;
}

// y[k] = x[p[k]]
template <class T>
std::vector<T> apply_permutation(const Permutation& p, const std::vector<T>& x) {
  std::vector<T> y(x.size());
  for (std::size_t k = 0; k < p.size(); ++k) y[k] = x[p[k]];
  return y;
}

class RotorGadget {
 public:
  RotorGadget() = default;
  RotorGadget(GadgetConfig config, std::vector<double> params) : config_(std::move(config)), params_(std::move(params)) {
    config_.resolve();
    if (params_.size() != gadget_parameter_count(config_).total)
      throw ConfigError("gadget: expected " + std::to_string(gadget_parameter_count(config_).total) +
                        " parameters, got " + std::to_string(params_.size()));
    build_permutations();
  }

  const GadgetConfig& config() const { return config_; }
  AlgebraDim dim() const { return AlgebraDim(config_.n); }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  const std::vector<Permutation>& permutations() const { return permutations_; }
  ParameterBreakdown parameter_count() const { return gadget_parameter_count(config_); }

  std::size_t rotor_param_count() const { return config_.slot_count() * pair_count(config_.n); }

  Bivector<double> bivector(std::size_t slot) const {
    const std::size_t m = pair_count(config_.n);
    return Bivector<double>(dim(), std::vector<double>(params_.begin() + slot * m, params_.begin() + (slot + 1) * m));
  }

 private:
  void build_permutations() {
    permutations_.clear();
    std::mt19937_64 rng(config_.permutation_seed);
    for (int b = 0; b + 1 < config_.depth; ++b) {
      Permutation p(config_.chunk());
      std::iota(p.begin(), p.end(), 0u);
      if (config_.use_permutations) std::shuffle(p.begin(), p.end(), rng);
      permutations_.push_back(std::move(p));
    }
  }

  GadgetConfig config_;
  std::vector<double> params_;
  std::vector<Permutation> permutations_;
};

inline RotorGadget build_gadget(GadgetConfig config, std::uint64_t init_seed) {
  config.resolve();
  const auto count = gadget_parameter_count(config);
  std::vector<double> params(count.total);
  const double scale = config.n >= 2 ? 0.1 / static_cast<double>(pair_count(config.n)) : 0.0;
  std::mt19937_64 rng(init_seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (std::size_t k = 0; k < count.rotor_params; ++k) params[k] = dist(rng);
  for (std::size_t k = count.rotor_params; k < count.total; ++k) params[k] = config.slope;
  return RotorGadget(std::move(config), std::move(params));
}

// Per-slot singular vectors carried between solves.
struct WarmStore {
  std::vector<std::vector<VectorR>> slots;
  void reset(std::size_t n) { slots.assign(n, {}); }
};

struct IterationCounter {
  long long projections = 0;
  long long iterations = 0;
  void add(const InvariantDecomposition& d) {
    for (std::size_t i = 0; i < d.singular_vectors.size(); ++i) {
      ++projections;
      iterations += d.iterations_used[i];
    }
  }
};

// Sandwich matrices per branch map, restricted to the embedded coordinates;
// row-major chunk x chunk, y = x * N.
template <class T>
struct GadgetMaps {
  std::vector<std::vector<T>> maps;  // index: slot / 2
  std::vector<T> slopes;
};

namespace detail {

inline std::vector<BladeMask> embedded_masks(const GadgetConfig& c) {
  std::vector<BladeMask> masks;
  if (c.embedding == Embedding::all_grades) {
    for (BladeMask m = 0; m < (BladeMask{1} << c.n); ++m) masks.push_back(m);
  } else {
    for (int i = 0; i < c.n; ++i) masks.push_back(BladeMask{1} << i);
  }
  return masks;
}

template <class T>
std::vector<T> restrict_map(const std::vector<T>& full, const GadgetConfig& c) {
  if (c.embedding == Embedding::all_grades) return full;
  const auto masks = embedded_masks(c);
  const std::size_t size = std::size_t{1} << c.n;
  std::vector<T> out;
  out.reserve(masks.size() * masks.size());
  for (BladeMask J : masks)
    for (BladeMask I : masks) out.push_back(full[J * size + I]);
  return out;
}

}  // namespace detail

// Untracked solves for every slot, refreshing the warm store.
inline void refresh_warm(const RotorGadget& g, const PowerIterConfig& cfg, WarmStore& warm,
                         IterationCounter* counter = nullptr) {
  const auto& c = g.config();
  if (warm.slots.size() != c.slot_count()) warm.reset(c.slot_count());
  for (std::size_t slot = 0; slot < c.slot_count(); ++slot) {
    auto d = invariant_decompose(g.bivector(slot), warm.slots[slot], cfg);
    if (counter) counter->add(d);
    warm.slots[slot] = std::move(d.singular_vectors);
  }
}

// Untracked maps; warm vectors are read and refreshed when a store is given.
inline GadgetMaps<double> gadget_maps(const RotorGadget& g, const PowerIterConfig& cfg, WarmStore* warm = nullptr,
                                      IterationCounter* counter = nullptr) {
  const auto& c = g.config();
  GadgetMaps<double> out;
  if (warm && warm->slots.size() != c.slot_count()) warm->reset(c.slot_count());
  std::vector<Rotor<double>> rotors;
  for (std::size_t slot = 0; slot < c.slot_count(); ++slot) {
    const auto b = g.bivector(slot);
    const std::vector<VectorR> none;
    auto d = invariant_decompose(b, warm ? warm->slots[slot] : none, cfg);
    if (counter) counter->add(d);
    if (warm) warm->slots[slot] = d.singular_vectors;
    rotors.push_back(rotor_from_components(g.dim(), d.components, cfg.tol_simple));
  }
  for (std::size_t k = 0; k < c.slot_count(); k += 2)
    out.maps.push_back(detail::restrict_map(sandwich_matrix(rotors[k], rotors[k + 1]), c));
  const auto count = g.parameter_count();
  out.slopes.assign(g.params().begin() + count.rotor_params, g.params().end());
  return out;
}

// Tracked maps from parameter variables. `warm` must hold converged vectors
// for the current parameter values (see gadget_maps).
inline GadgetMaps<Var> gadget_maps_tracked(const RotorGadget& g, std::span<const Var> params, const WarmStore& warm,
                                           const PowerIterConfig& cfg) {
  const auto& c = g.config();
  if (params.size() != g.params().size()) throw InvalidArgument("gadget_maps_tracked: parameter count mismatch");
  if (warm.slots.size() != c.slot_count()) throw InvalidArgument("gadget_maps_tracked: warm store is not populated");
  const std::size_t m = pair_count(c.n);
  GadgetMaps<Var> out;
  std::vector<Rotor<Var>> rotors;
  for (std::size_t slot = 0; slot < c.slot_count(); ++slot) {
    Bivector<Var> b(g.dim(), std::vector<Var>(params.begin() + slot * m, params.begin() + (slot + 1) * m));
    const auto d = decompose_tracked(b, warm.slots[slot], cfg);
    rotors.push_back(rotor_from_components(g.dim(), d.components, cfg.tol_simple));
  }
  for (std::size_t k = 0; k < c.slot_count(); k += 2)
    out.maps.push_back(detail::restrict_map(sandwich_matrix(rotors[k], rotors[k + 1]), c));
  const auto count = g.parameter_count();
  out.slopes.assign(params.begin() + count.rotor_params, params.end());
  return out;
}

namespace detail {

template <class T>
std::vector<T> apply_map(const std::vector<T>& n, const std::vector<T>& x) {
  const std::size_t size = x.size();
  std::vector<T> y(size, T(0.0));
  ProductSum<T> sum;
  for (std::size_t i = 0; i < size; ++i) {
    for (std::size_t j = 0; j < size; ++j) {
      if (is_structural_zero(x[j]) || is_structural_zero(n[j * size + i])) continue;
      sum.add(1.0, x[j], n[j * size + i]);
    }
    y[i] = sum.finish();
  }
  return y;
}

template <class T>
void rms_normalize(std::vector<T>& y) {
  using std::sqrt;
  ProductSum<T> sum;
  for (const auto& v : y) sum.add(1.0 / static_cast<double>(y.size()), v, v);
  const T inv = T(1.0) / sqrt(sum.finish() + 1e-12);
  for (auto& v : y) v = v * inv;
}

inline void check_finite(double v, int layer) {
  if (!std::isfinite(v)) throw NumericError("gadget forward: non-finite value after layer " + std::to_string(layer));
}

}  // namespace detail

template <class T>
std::vector<T> gadget_forward(const RotorGadget& g, const GadgetMaps<T>& maps, std::span<const T> x) {
  const auto& c = g.config();
  if (x.size() != static_cast<std::size_t>(c.d_in))
    throw InvalidArgument("gadget forward: input length " + std::to_string(x.size()) + " != d_in " +
                          std::to_string(c.d_in));
  const int chunk = c.chunk();
  std::vector<std::vector<T>> acc(c.c2, std::vector<T>(chunk, T(0.0)));
  std::vector<std::vector<T>> inputs(c.c1, std::vector<T>(chunk, T(0.0)));
  for (int i = 0; i < c.c1; ++i)
    for (int k = 0; k < chunk && i * chunk + k < c.d_in; ++k) inputs[i][k] = x[i * chunk + k];

  for (int lane = 0; lane < c.width; ++lane)
    for (int i = 0; i < c.c1; ++i)
      for (int j = 0; j < c.c2; ++j) {
        std::vector<T> y = inputs[i];
        for (int layer = 0; layer < c.depth; ++layer) {
          y = detail::apply_map(maps.maps[c.slot(layer, lane, i, j, 0) / 2], y);
          for (const auto& v : y) detail::check_finite(value_of(v), layer);
          if (layer + 1 == c.depth) break;
          if (c.use_normalization) detail::rms_normalize(y);
          if (c.nonlinearity == Nonlinearity::leaky)
            for (auto& v : y) v = value_of(v) > 0.0 ? v : v * c.slope;
          else if (c.nonlinearity == Nonlinearity::prelu)
            for (auto& v : y) v = prelu(v, maps.slopes[layer]);
          y = apply_permutation(g.permutations()[layer], y);
        }
        for (int k = 0; k < chunk; ++k) acc[j][k] = acc[j][k] + y[k];
      }

  const double pool = c.pooling == Pooling::mean ? 1.0 / static_cast<double>(c.width * c.c1) : 1.0;
  std::vector<T> out(c.d_out);
  for (int j = 0; j < c.c2; ++j)
    for (int k = 0; k < chunk && j * chunk + k < c.d_out; ++k) out[j * chunk + k] = acc[j][k] * pool;
  return out;
}

template <class T>
std::vector<T> gadget_forward(const RotorGadget& g, const GadgetMaps<T>& maps, const std::vector<T>& x) {
  return gadget_forward(g, maps, std::span<const T>(x));
}

inline std::vector<double> gadget_forward(const RotorGadget& g, std::span<const double> x,
                                          const PowerIterConfig& cfg = {}) {
  return gadget_forward(g, gadget_maps(g, cfg), x);
}

// ---------------------------------------------------------------------------
// Text and binary forms.

inline std::string to_config_text(const GadgetConfig& c) {
  std::ostringstream os;
  os << "gadget.d_in = " << c.d_in << "\n"
     << "gadget.d_out = " << c.d_out << "\n"
     << "gadget.n = " << c.n << "\n"
     << "gadget.c1 = " << c.c1 << "\n"
     << "gadget.c2 = " << c.c2 << "\n"
     << "gadget.width = " << c.width << "\n"
     << "gadget.depth = " << c.depth << "\n"
     << "gadget.pooling = " << to_string(c.pooling) << "\n"
     << "gadget.nonlinearity = " << to_string(c.nonlinearity) << "\n"
     << "gadget.slope = " << detail::format_real(c.slope) << "\n"
     << "gadget.normalization = " << (c.use_normalization ? "true" : "false") << "\n"
     << "gadget.permutations = " << (c.use_permutations ? "true" : "false") << "\n"
     << "gadget.embedding = " << to_string(c.embedding) << "\n"
     << "gadget.permutation_seed = " << c.permutation_seed << "\n";
  return os.str();
}

namespace detail {

inline void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& s, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& s, double v) { put_u64(s, std::bit_cast<std::uint64_t>(v)); }

class ByteReader {
 public:
  ByteReader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}
  std::uint64_t uint(int bytes) {
    if (pos_ + bytes > data_.size()) throw FormatError(what_ + ": truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += bytes;
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::uint64_t u64() { return uint(8); }
  double f64() { return std::bit_cast<double>(uint(8)); }
  std::string_view bytes(std::size_t n) {
    if (pos_ + n > data_.size()) throw FormatError(what_ + ": truncated");
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::string_view data_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline constexpr std::uint32_t kGadgetFormatVersion = 1;

// RGAD container: magic, u32 version, config block (u32 d_in d_out n c1 c2
// width depth pooling nonlinearity, f64 slope, u32 normalization permutations
// embedding, u64 permutation_seed), u64 parameter count, then the parameters
// as little-endian f64 in layout order.
inline std::string serialize_gadget(const RotorGadget& g) {
  const auto& c = g.config();
  std::string s = "RGAD";
  detail::put_u32(s, kGadgetFormatVersion);
  for (int v : {c.d_in, c.d_out, c.n, c.c1, c.c2, c.width, c.depth}) detail::put_u32(s, static_cast<std::uint32_t>(v));
  detail::put_u32(s, static_cast<std::uint32_t>(c.pooling));
  detail::put_u32(s, static_cast<std::uint32_t>(c.nonlinearity));
  detail::put_f64(s, c.slope);
  detail::put_u32(s, c.use_normalization);
  detail::put_u32(s, c.use_permutations);
  detail::put_u32(s, static_cast<std::uint32_t>(c.embedding));
  detail::put_u64(s, c.permutation_seed);
  detail::put_u64(s, g.params().size());
  for (double p : g.params()) detail::put_f64(s, p);
  return s;
}

inline RotorGadget deserialize_gadget(std::string_view data) {
  detail::ByteReader in(data, "RGAD");
  if (in.bytes(4) != "RGAD") throw FormatError("RGAD: bad magic");
  const auto version = in.u32();
  if (version != kGadgetFormatVersion) throw FormatError("RGAD: unsupported version " + std::to_string(version));
  GadgetConfig c;
  int* ints[] = {&c.d_in, &c.d_out, &c.n, &c.c1, &c.c2, &c.width, &c.depth};
  for (int* p : ints) *p = static_cast<int>(in.u32());
  const auto pooling = in.u32();
  const auto nonlin = in.u32();
  if (pooling > 1 || nonlin > 2) throw FormatError("RGAD: bad enum value");
  c.pooling = static_cast<Pooling>(pooling);
  c.nonlinearity = static_cast<Nonlinearity>(nonlin);
  c.slope = in.f64();
  c.use_normalization = in.u32() != 0;
  c.use_permutations = in.u32() != 0;
  const auto emb = in.u32();
  if (emb > 1) throw FormatError("RGAD: bad embedding");
  c.embedding = static_cast<Embedding>(emb);
  c.permutation_seed = in.u64();
  const auto count = in.u64();
  if (count > (data.size() / 8)) throw FormatError("RGAD: parameter count exceeds payload");
  std::vector<double> params(count);
  for (auto& p : params) p = in.f64();
  if (!in.done()) throw FormatError("RGAD: trailing bytes");
  return RotorGadget(c, std::move(params));
}

}  // namespace rotorlin
