#include <gtest/gtest.h>

#include <random>
#include <set>

#include "rotorlin/experiments.hpp"

using namespace rotorlin;

namespace {

GadgetConfig plain(int d_in, int d_out, int n) {
  GadgetConfig c;
  c.d_in = d_in;
  c.d_out = d_out;
  c.n = n;
  c.pooling = Pooling::sum;
  c.nonlinearity = Nonlinearity::none;
  c.use_normalization = false;
  c.use_permutations = false;
  return c;
}

RotorGadget zero_gadget(GadgetConfig c) {
  RotorGadget g = build_gadget(c, 0);
  std::fill(g.params().begin(), g.params().end(), 0.0);
  return g;
}

std::vector<double> random_input(int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  std::vector<double> x(d);
  for (auto& v : x) v = n(rng);
  return x;
}

}  // namespace

TEST(GadgetConfig, ChunkCover) {
  GadgetConfig c = plain(40, 20, 3);
  c.resolve();
  EXPECT_EQ(c.c1, 5);
  EXPECT_EQ(c.c2, 3);
  GadgetConfig bad = plain(40, 20, 3);
  bad.c1 = 4;
  EXPECT_THROW(bad.resolve(), ConfigError);
  GadgetConfig big = plain(8, 8, 4);
  EXPECT_THROW(big.resolve(), ConfigError);
  GadgetConfig vec = plain(10, 10, 4);
  vec.embedding = Embedding::vectors;
  vec.resolve();
  EXPECT_EQ(vec.chunk(), 4);
  EXPECT_EQ(vec.c1, 3);
}

TEST(GadgetParameters, ClosedForm) {
  std::mt19937_64 rng(51);
  std::uniform_int_distribution<int> n_dist(2, 6), w_dist(1, 3), d_dist(1, 3), size(1, 200);
  for (int t = 0; t < 50; ++t) {
    GadgetConfig c = plain(0, 0, n_dist(rng));
    c.d_in = std::max(size(rng), c.chunk());
    c.d_out = std::max(size(rng), c.chunk());
    c.width = w_dist(rng);
    c.depth = d_dist(rng);
    c.nonlinearity = Nonlinearity::prelu;
    c.resolve();
    const auto p = gadget_parameter_count(c);
    EXPECT_EQ(p.rotor_params, 2u * c.width * c.depth * c.c1 * c.c2 * pair_count(c.n));
    EXPECT_EQ(p.nonlinearity_params, static_cast<std::size_t>(c.depth - 1));
    EXPECT_EQ(build_gadget(c, 1).params().size(), p.total);
  }
}

TEST(GadgetParameters, KnownShapes) {
  GadgetConfig fig = plain(24, 16, 3);
  fig.resolve();
  EXPECT_EQ(fig.c1 * fig.c2, 6);
  EXPECT_EQ(gadget_parameter_count(fig).rotor_params, 36u);
  GadgetConfig big = plain(2048, 2048, 11);
  big.resolve();
  EXPECT_EQ(pair_count(11), 55u);
  EXPECT_LE(gadget_parameter_count(big).total, 896u);
}

TEST(GadgetBuild, Deterministic) {
  GadgetConfig c = plain(32, 32, 4);
  c.depth = 3;
  c.use_permutations = true;
  const auto a = build_gadget(c, 9), b = build_gadget(c, 9);
  EXPECT_EQ(a.params(), b.params());
  EXPECT_EQ(a.permutations(), b.permutations());
  EXPECT_EQ(serialize_gadget(a), serialize_gadget(b));
  for (const auto& p : a.permutations()) {
    std::set<std::uint32_t> seen(p.begin(), p.end());
    EXPECT_EQ(seen.size(), p.size());
    EXPECT_EQ(apply_permutation(inverse(p), apply_permutation(p, std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15})),
              (std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15}));
  }
}

TEST(GadgetForward, ZeroBivectorsAreIdentity) {
  const auto g = zero_gadget(plain(16, 16, 4));
  const auto x = random_input(16, 1);
  const auto y = gadget_forward(g, x);
  for (int k = 0; k < 16; ++k) EXPECT_NEAR(y[k], x[k], 1e-15);
}

TEST(GadgetForward, SumPoolingAddsChunks) {
  const auto g = zero_gadget(plain(8, 4, 2));
  const auto x = random_input(8, 2);
  const auto y = gadget_forward(g, x);
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(y[k], x[k] + x[4 + k], 1e-15);
}

TEST(GadgetForward, NearZeroInitIsNearIdentityUnderMeanPooling) {
  GadgetConfig c = plain(16, 16, 4);
  c.pooling = Pooling::mean;
  const auto g = build_gadget(c, 3);
  const auto x = random_input(16, 3);
  const auto y = gadget_forward(g, x);
  for (int k = 0; k < 16; ++k) EXPECT_NEAR(y[k], x[k], 0.2);
}

TEST(GadgetForward, HalfTurnRotatesVectorsByPi) {
  auto g = zero_gadget(plain(4, 4, 2));
  g.params()[0] = M_PI / 2;
  g.params()[1] = M_PI / 2;
  // blade order (1, e1, e2, e12)
  const auto y = gadget_forward(g, std::vector<double>{0.0, 0.3, -0.7, 0.0});
  EXPECT_NEAR(y[1], -0.3, 1e-15);
  EXPECT_NEAR(y[2], 0.7, 1e-15);
}

TEST(GadgetForward, PaddedChunks) {
  GadgetConfig c = plain(10, 6, 2);
  const auto g = zero_gadget(c);
  const auto x = random_input(10, 4);
  const auto y = gadget_forward(g, x);
  // chunks [0,4), [4,8), [8,10)+pad summed into both output chunks
  for (int k = 0; k < 4; ++k) {
    const double want = x[k] + x[4 + k] + (k < 2 ? x[8 + k] : 0.0);
    EXPECT_NEAR(y[k], want, 1e-15);
    if (k < 2) EXPECT_NEAR(y[4 + k], want, 1e-15);
  }
}

TEST(GadgetForward, VectorEmbedding) {
  GadgetConfig c = plain(5, 5, 5);
  c.embedding = Embedding::vectors;
  auto g = build_gadget(c, 5);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& p : g.params()) p = u(rng);
  const auto x = random_input(5, 5);
  auto sq = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double a : v) s += a * a;
    return s;
  };
  // r x s~ leaks into other grades, which the embedding drops
  EXPECT_LE(sq(gadget_forward(g, x)), sq(x) + 1e-12);
  // with r = s the map is a rotation of the vectors
  const std::size_t m = pair_count(5);
  std::copy(g.params().begin(), g.params().begin() + m, g.params().begin() + m);
  EXPECT_NEAR(sq(gadget_forward(g, x)), sq(x), 1e-12);
}

TEST(GadgetForward, TrackedMatchesUntracked) {
  GadgetConfig c = plain(20, 12, 3);
  c.width = 2;
  c.depth = 2;
  c.nonlinearity = Nonlinearity::prelu;
  c.use_normalization = true;
  c.use_permutations = true;
  c.pooling = Pooling::mean;
  const auto state = random_gradcheck_state(c, 6);
  const auto& g = state.gadget;
  WarmStore warm;
  refresh_warm(g, {}, warm);
  ad::Tape tape;
  const auto vars = tape.variables(g.params());
  const auto maps = gadget_maps_tracked(g, vars, warm, {});
  const auto x = state.batch.input(0);
  const auto yt = gadget_forward(g, maps, std::vector<Var>(x.begin(), x.end()));
  const auto y = gadget_forward(g, x);
  for (std::size_t k = 0; k < y.size(); ++k) EXPECT_NEAR(yt[k].value(), y[k], 1e-12);
}

TEST(GadgetGradients, MatchFiniteDifferences) {
  for (auto [w, d] : std::vector<std::pair<int, int>>{{1, 1}, {2, 2}, {1, 3}}) {
    GadgetConfig c;
    c.d_in = 12;
    c.d_out = 20;
    c.n = 3;
    c.width = w;
    c.depth = d;
    c.resolve();
    for (int s = 0; s < 3; ++s) {
      const auto r = gradcheck(random_gradcheck_state(c, s));
      EXPECT_LT(r.worst(), 1e-4) << w << "x" << d << " seed " << s;
    }
  }
  GadgetConfig tiny;
  tiny.d_in = tiny.d_out = 4;
  tiny.n = 2;
  EXPECT_LT(gradcheck(random_gradcheck_state(tiny, 0)).worst(), 1e-4);
}

TEST(GadgetGradients, TapeSizeIgnoresIterationCounts) {
  GadgetConfig c;
  c.d_in = c.d_out = 16;
  c.n = 4;
  c.depth = 2;
  c.resolve();
  const auto state = random_gradcheck_state(c, 7);
  PowerIterConfig loose, tight;
  loose.epsilon = 1e-2;
  tight.epsilon = 1e-12;
  int it_loose = 0, it_tight = 0;
  const auto a = tracked_node_count(state.gadget, state.batch, loose, &it_loose);
  const auto b = tracked_node_count(state.gadget, state.batch, tight, &it_tight);
  EXPECT_LT(it_loose, it_tight);
  EXPECT_EQ(a, b);
}

TEST(GadgetSerialization, RoundTrip) {
  GadgetConfig c = plain(24, 40, 3);
  c.width = 2;
  c.depth = 2;
  c.nonlinearity = Nonlinearity::prelu;
  c.embedding = Embedding::all_grades;
  c.permutation_seed = 77;
  const auto g = build_gadget(c, 8);
  const auto bytes = serialize_gadget(g);
  const auto h = deserialize_gadget(bytes);
  EXPECT_EQ(h.params(), g.params());
  EXPECT_EQ(h.permutations(), g.permutations());
  EXPECT_EQ(to_config_text(h.config()), to_config_text(g.config()));
  EXPECT_THROW(deserialize_gadget("XXXX" + bytes.substr(4)), FormatError);
  EXPECT_THROW(deserialize_gadget(bytes.substr(0, bytes.size() - 3)), FormatError);
}
