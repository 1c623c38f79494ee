#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "rotorlin/cli.hpp"

using namespace rotorlin;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "rotorlin");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

int line_count(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("rotorlin_test_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write(const std::string& name, const std::string& text) const {
    write_file_atomic(path(name), text);
    return path(name);
  }

  std::string random_matrix(const std::string& name, std::size_t rows, std::size_t cols, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n;
    DenseMatrix m(rows, cols);
    for (auto& v : m.data()) v = n(rng);
    write_matrix(path(name), m);
    return path(name);
  }

  std::filesystem::path dir_;
};

}  // namespace

TEST_F(CliTest, UsageErrors) {
  auto r = invoke({});
  EXPECT_EQ(r.code, cli::kConfig);
  r = invoke({"fly"});
  EXPECT_EQ(r.code, cli::kConfig);
  r = invoke({"verify-rep"});
  EXPECT_EQ(r.code, cli::kConfig);
  EXPECT_EQ(line_count(r.err), 1);
  r = invoke({"fit", "--method", "svd", "--config", "x", "--inputs", "y", "--out", "z"});
  EXPECT_EQ(r.code, cli::kConfig);
}

TEST_F(CliTest, FitAllMethods) {
  const auto cfg = write("run.cfg", "gadget.n = 3\ntrain.steps = 20\nbh.blocks = 2\n");
  const auto x = random_matrix("x.rlmx", 32, 8, 1);
  const auto y = random_matrix("y.rlmx", 32, 8, 2);
  for (const std::string method : {"rotor", "lr", "bh"}) {
    const auto r = invoke({"fit", "--method", method, "--config", cfg, "--inputs", x, "--targets", y, "--out",
                           path(method + ".json")});
    EXPECT_EQ(r.code, cli::kOk) << method << ": " << r.err;
    const auto j = nlohmann::json::parse(read_file(path(method + ".json")));
    EXPECT_EQ(j["method"], method);
    EXPECT_EQ(j["steps"], 20);
  }
}

TEST_F(CliTest, FitWithTeacherWritesTargets) {
  const auto cfg = write("run.cfg", "gadget.n = 3\ntrain.steps = 5\n");
  const auto x = random_matrix("x.rlmx", 16, 8, 1);
  auto r = invoke({"fit", "--method", "rotor", "--config", cfg, "--inputs", x, "--targets", path("t.rlmx"),
                   "--teacher-seed", "4", "--out", path("r.json")});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const auto t = read_matrix(path("t.rlmx"));
  EXPECT_EQ(t.rows(), 16u);
  EXPECT_EQ(t.cols(), 8u);
  r = invoke({"fit", "--method", "rotor", "--config", cfg, "--inputs", x, "--out", path("r.json")});
  EXPECT_EQ(r.code, cli::kConfig);
}

TEST_F(CliTest, FitConfigErrors) {
  const auto x = random_matrix("x.rlmx", 8, 8, 1);
  const auto y = random_matrix("y.rlmx", 8, 8, 2);
  auto r = invoke({"fit", "--method", "rotor", "--config", write("a.cfg", "gadget.width = 2\n"), "--inputs", x,
                   "--targets", y, "--out", path("r.json")});
  EXPECT_EQ(r.code, cli::kConfig);
  EXPECT_NE(r.err.find("gadget.n"), std::string::npos);
  EXPECT_EQ(line_count(r.err), 1);
  r = invoke({"fit", "--method", "rotor", "--config", write("b.cfg", "gadget.n = 3\nfoo = 1\n"), "--inputs", x,
              "--targets", y, "--out", path("r.json")});
  EXPECT_EQ(r.code, cli::kConfig);
  EXPECT_NE(r.err.find("foo"), std::string::npos);
  const auto bad = write("bad.rlmx", "RLMX garbage");
  r = invoke({"fit", "--method", "lr", "--config", write("c.cfg", "gadget.n = 3\n"), "--inputs", bad, "--targets", y,
              "--out", path("r.json")});
  EXPECT_EQ(r.code, cli::kConfig);
  EXPECT_FALSE(std::filesystem::exists(path("r.json")));
}

TEST_F(CliTest, FitNonFiniteInputIsNumericFailure) {
  DenseMatrix x(4, 8, 1.0);
  x(0, 0) = std::numeric_limits<double>::quiet_NaN();
  write_matrix(path("x.rlmx"), x);
  const auto y = random_matrix("y.rlmx", 4, 8, 2);
  const auto r = invoke({"fit", "--method", "rotor", "--config", write("a.cfg", "gadget.n = 3\ntrain.steps = 2\n"),
                         "--inputs", path("x.rlmx"), "--targets", y, "--out", path("r.json")});
  EXPECT_EQ(r.code, cli::kNumeric);
  EXPECT_EQ(line_count(r.err), 1);
}

TEST_F(CliTest, Decompose) {
  auto r = invoke({"decompose", "--n", "6", "--random", "3"});
  EXPECT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_FALSE(r.out.empty());
  DenseMatrix b(1, 6, std::vector<double>{0.5, 0.0, 0.0, 0.0, 0.0, 0.3});
  write_matrix(path("b.rlmx"), b);
  r = invoke({"decompose", "--n", "4", "--bivector", path("b.rlmx"), "--out", path("d.txt")});
  EXPECT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_NE(r.out.find("components 2"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(path("d.txt")));
  r = invoke({"decompose", "--n", "5", "--bivector", path("b.rlmx")});
  EXPECT_EQ(r.code, cli::kConfig);
  r = invoke({"decompose", "--n", "4", "--random", "1", "--epsilon", "0"});
  EXPECT_EQ(r.code, cli::kConfig);
}

TEST_F(CliTest, VerifyRep) {
  auto r = invoke({"verify-rep", "--n", "4", "--seeds", "3"});
  EXPECT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_EQ(line_count(r.out), 4);
  r = invoke({"verify-rep", "--n", "1"});
  EXPECT_EQ(r.code, cli::kConfig);
  r = invoke({"verify-rep", "--n", "4", "--seeds", "2", "--tol", "0"});
  EXPECT_EQ(r.code, cli::kVerifyFailed);
  EXPECT_EQ(line_count(r.err), 1);
  EXPECT_NE(r.err.find("seed 0"), std::string::npos);
}

TEST_F(CliTest, Gradcheck) {
  const auto cfg = write("g.cfg", "gadget.n = 3\ngadget.depth = 2\n");
  auto r = invoke({"gradcheck", "--config", cfg, "--seeds", "2"});
  EXPECT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_NE(r.out.find("worst,"), std::string::npos);
  r = invoke({"gradcheck", "--config", cfg, "--seeds", "1", "--tol", "1e-14"});
  EXPECT_EQ(r.code, cli::kTolerance);
  r = invoke({"gradcheck", "--config", cfg, "--seeds", "0"});
  EXPECT_EQ(r.code, cli::kConfig);
}

TEST_F(CliTest, ReportWidthSweep) {
  const auto cfg = write("s.cfg",
                         "gadget.n = 3\ntask.d_in = 8\ntask.d_out = 8\ntask.samples = 32\n"
                         "train.steps = 10\nsweep.widths = 1, 2\nsweep.depth = 1\nsweep.seeds = 2\n");
  auto r = invoke({"report", "--sweep", "width", "--config", cfg, "--out", path("w.csv")});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const auto csv = read_file(path("w.csv"));
  EXPECT_EQ(csv.rfind("width,depth,median_final_mse\n", 0), 0u);
  EXPECT_EQ(line_count(csv), 3);
  r = invoke({"report", "--sweep", "width", "--config", write("e.cfg", "gadget.n = 3\nsweep.widths =\n"), "--out",
              path("e.csv")});
  EXPECT_EQ(r.code, cli::kConfig);
}

TEST_F(CliTest, ReportChunkWarning) {
  const auto cfg = write("s.cfg",
                         "gadget.n = 3\ngadget.chunk = 2048\ntask.d_in = 8\ntask.d_out = 8\ntask.samples = 16\n"
                         "train.steps = 2\nsweep.depths = 1\nsweep.seeds = 1\n");
  const auto r = invoke({"report", "--sweep", "depth", "--config", cfg, "--out", path("d.csv")});
  EXPECT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_NE(r.err.find("warning: gadget.chunk"), std::string::npos);
}

TEST(CliGuard, ExceptionsMapToExitCodes) {
  std::ostringstream err;
  EXPECT_EQ(cli::detail::guarded([]() -> int { throw MissingGradient("p", 3); }, err), cli::kMissingGradient);
  EXPECT_EQ(cli::detail::guarded([]() -> int { throw DegeneracyError("tie", 1e-3); }, err), cli::kDegeneracy);
  EXPECT_EQ(cli::detail::guarded([]() -> int { throw NumericError("nan"); }, err), cli::kNumeric);
  EXPECT_EQ(cli::detail::guarded([]() -> int { throw ConfigError("bad\nkey"); }, err), cli::kConfig);
  EXPECT_EQ(line_count(err.str()), 4);
}
