// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance            all criteria
//   acceptance 1 3 9      a subset

#include <Eigen/Dense>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "rotorlin/cli.hpp"
#include "rotorlin/rotorlin.hpp"

using namespace rotorlin;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", x);
  return buf;
}

std::string fixed(double x, int digits = 2) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. closed-form exponential against the series

Outcome closed_form_exponential() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> pick_n(2, 8);
  std::uniform_real_distribution<double> magnitude(0.0, std::numbers::pi);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const AlgebraDim dim(pick_n(rng));
    const auto b = random_simple_bivector(dim, rng, magnitude(rng));
    const auto closed = clexp_simple(b).value();
    const auto series = exp_series(to_multivector(b), 50);
    worst = std::max(worst, norm(closed - series) / norm(series));
  }
  return {worst <= 1e-12, "worst rel diff " + sci(worst) + " (tol 1e-12)"};
}

// ---------------------------------------------------------------------------
// 2. invariant decomposition against a dense SVD

struct Spectrum {
  std::vector<double> sigma;  // one per rotation plane, descending
  Eigen::MatrixXd vectors;    // right singular vectors, columns in pairs
};

Spectrum svd_oracle(const Eigen::MatrixXd& B) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(B, Eigen::ComputeFullV);
  Spectrum s;
  s.vectors = svd.matrixV();
  const auto& sv = svd.singularValues();
  for (int k = 0; k + 1 < sv.size(); k += 2) s.sigma.push_back(0.5 * (sv(k) + sv(k + 1)));
  return s;
}

Eigen::MatrixXd to_eigen(const DenseMatrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return e;
}

// Smallest gap between distinct plane values, including the last one and 0.
double spectral_gap(const std::vector<double>& sigma) {
  double gap = sigma.back();
  for (std::size_t k = 0; k + 1 < sigma.size(); ++k) gap = std::min(gap, sigma[k] - sigma[k + 1]);
  return gap;
}

Outcome decomposition_suite() {
  std::mt19937_64 rng(202);
  DecompositionDiagnostics worst;
  double worst_oracle = 0.0;
  int skipped = 0, failures = 0;
  for (int n : {4, 6, 8}) {
    const AlgebraDim dim(n);
    for (int accepted = 0; accepted < 100;) {
      const auto b = random_bivector(dim, rng);
      const Eigen::MatrixXd B = to_eigen(skew_from_bivector(b));
      const auto oracle = svd_oracle(B);
      if (spectral_gap(oracle.sigma) < 1e-3 * oracle.sigma.front()) {
        ++skipped;
        continue;
      }
      ++accepted;
      const auto d = invariant_decompose(b);
      const auto diag = diagnose_decomposition(b, d);
      worst.reconstruction = std::max(worst.reconstruction, diag.reconstruction);
      worst.simplicity = std::max(worst.simplicity, diag.simplicity);
      worst.commutation = std::max(worst.commutation, diag.commutation);
      worst.orthogonality = std::max(worst.orthogonality, diag.orthogonality);
      worst.exp_product = std::max(worst.exp_product, diag.exp_product);

      // Each oracle plane gives B P_k with P_k the projector on its pair of
      // singular vectors; components are matched by nearest norm.
      std::vector<Eigen::MatrixXd> planes;
      for (std::size_t k = 0; k < oracle.sigma.size(); ++k) {
        const Eigen::MatrixXd V = oracle.vectors.middleCols(2 * k, 2);
        planes.push_back(B * V * V.transpose());
      }
      if (d.components.size() != planes.size()) {
        ++failures;
        worst_oracle = std::max(worst_oracle, 1.0);
        continue;
      }
      std::vector<bool> used(planes.size(), false);
      for (const auto& c : d.components) {
        const Eigen::MatrixXd C = to_eigen(skew_from_bivector(c));
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_k = 0;
        for (std::size_t k = 0; k < planes.size(); ++k) {
          if (used[k]) continue;
          const double e = (C - planes[k]).norm();
          if (e < best) best = e, best_k = k;
        }
        used[best_k] = true;
        worst_oracle = std::max(worst_oracle, best / B.norm());
      }
    }
  }
  const bool pass = failures == 0 && worst.reconstruction <= 1e-6 && worst.simplicity <= 1e-8 &&
                    worst.commutation <= 1e-8 && worst.orthogonality <= 1e-8 && worst.exp_product <= 1e-8 &&
                    worst_oracle <= 1e-6;
  return {pass, "300 bivectors (" + std::to_string(skipped) + " gap-filtered): reconstruction " +
                    sci(worst.reconstruction) + " (1e-6), simplicity " + sci(worst.simplicity) + ", commutation " +
                    sci(worst.commutation) + ", orthogonality " + sci(worst.orthogonality) + ", exp product " +
                    sci(worst.exp_product) + " (1e-8), svd oracle " + sci(worst_oracle) + " (1e-6)"};
}

// ---------------------------------------------------------------------------
// 3. sandwich matrix against compound matrices

Outcome representation() {
  std::mt19937_64 rng(303);
  double diff = 0.0, untransposed = 0.0, ortho = 0.0;
  bool sparse = true;
  for (int n = 2; n <= 6; ++n)
    for (int t = 0; t < 50; ++t) {
      const auto rep = verify_representation(random_bivector(AlgebraDim(n), rng), 1e-8);
      diff = std::max(diff, rep.max_diff);
      untransposed = std::max(untransposed, rep.max_diff_untransposed);
      ortho = std::max(ortho, rep.worst_orthogonality());
      sparse = sparse && rep.nonzeros <= rep.nonzero_budget;
    }
  return {diff <= 1e-8 && ortho <= 1e-8 && sparse,
          "250 bivectors: max|N_r - diag(C_k)^T| " + sci(diff) + " (tol 1e-8; untransposed " + sci(untransposed) +
              "), block orthogonality " + sci(ortho) + ", nonzeros within C(2n,n): " + (sparse ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 4. gradients

Outcome differentiability() {
  std::mt19937_64 rng(404);
  const std::vector<std::pair<int, int>> shapes{{1, 1}, {1, 2}, {2, 1}, {2, 2}, {1, 3}, {3, 1}, {1, 4}, {4, 1}};
  std::uniform_int_distribution<int> pick_n(2, 4), pick_shape(0, static_cast<int>(shapes.size()) - 1);
  std::uniform_int_distribution<int> pick_chunks(1, 2);
  std::uniform_int_distribution<int> pick_nl(0, 2);
  double worst = 0.0;
  bool nodes_equal = true;
  int iterations_differ = 0;
  for (int s = 0; s < 20; ++s) {
    GadgetConfig c;
    c.n = pick_n(rng);
    std::tie(c.width, c.depth) = shapes[pick_shape(rng)];
    c.d_in = c.chunk() * pick_chunks(rng);
    c.d_out = c.chunk() * pick_chunks(rng);
    c.nonlinearity = static_cast<Nonlinearity>(pick_nl(rng));
    c.resolve();
    GradcheckOptions opts;
    opts.h = 1e-5;
    const auto state = random_gradcheck_state(c, 5000 + s, opts);
    worst = std::max(worst, gradcheck(state, opts).worst());
    PowerIterConfig loose, tight;
    loose.epsilon = 1e-2;
    tight.epsilon = 1e-12;
    int it_loose = 0, it_tight = 0;
    const auto a = tracked_node_count(state.gadget, state.batch, loose, &it_loose);
    const auto b = tracked_node_count(state.gadget, state.batch, tight, &it_tight);
    nodes_equal = nodes_equal && a == b;
    if (it_loose != it_tight) ++iterations_differ;
  }
  return {worst <= 1e-4 && nodes_equal,
          "20 states: worst rel error " + sci(worst) + " (tol 1e-4); tape nodes equal at eps 1e-2 and 1e-12: " +
              (nodes_equal ? "yes" : "no") + " (iteration counts differed in " + std::to_string(iterations_differ) +
              "/20)"};
}

// ---------------------------------------------------------------------------
// 5. parameter accounting

Outcome parameter_accounting() {
  std::mt19937_64 rng(505);
  std::uniform_int_distribution<int> pick_n(2, 7), small(1, 4), size(1, 300);
  int mismatches = 0;
  for (int t = 0; t < 50; ++t) {
    GadgetConfig c;
    c.n = pick_n(rng);
    c.width = small(rng);
    c.depth = small(rng);
    c.d_in = std::max(size(rng), c.chunk());
    c.d_out = std::max(size(rng), c.chunk());
    c.nonlinearity = Nonlinearity::none;
    const long long c1 = (c.d_in + c.chunk() - 1) / c.chunk(), c2 = (c.d_out + c.chunk() - 1) / c.chunk();
    const long long expected = 2LL * c.width * c.depth * c1 * c2 * (c.n * (c.n - 1) / 2);
    const auto g = build_gadget(c, t);
    if (static_cast<long long>(g.params().size()) != expected) ++mismatches;
  }
  GadgetConfig big;
  big.d_in = big.d_out = 2048;
  big.n = 11;
  big.resolve();
  const auto per_bivector = pair_count(11);
  const auto lr1 = lowrank_parameter_count(2048, 2048, 1), lr4 = lowrank_parameter_count(2048, 2048, 4);
  const bool pass = mismatches == 0 && per_bivector == 55 && lr1 == 4096 && lr4 == 16384;
  return {pass, "50 configs, " + std::to_string(mismatches) + " mismatches; C(11,2) = " +
                    std::to_string(per_bivector) + "; 2048->2048 n=11 w=d=1 total " +
                    std::to_string(gadget_parameter_count(big).total) + "; LR1 " + std::to_string(lr1) + ", LR4 " +
                    std::to_string(lr4)};
}

// ---------------------------------------------------------------------------
// 6. teacher-student fit

GadgetConfig student_config(int d, int n, int width, int depth) {
  GadgetConfig c;
  c.d_in = c.d_out = d;
  c.n = n;
  c.width = width;
  c.depth = depth;
  c.resolve();
  return c;
}

Outcome teacher_student() {
  TaskShape shape;
  shape.d_in = shape.d_out = 32;
  shape.samples = 256;
  shape.teacher = student_config(32, 4, 1, 1);
  const auto task = make_synthetic_task(TaskKind::teacher_gadget, shape, 606);
  const double moment = task.data.second_moment();
  TrainConfig train;
  train.steps = 5000;
  const auto p = sweep_point(task.data, shape.teacher, 1, 1, 5, train, {});
  std::string all;
  for (double m : p.final_mse) all += (all.empty() ? "" : " ") + sci(m / moment);
  return {p.median_mse <= 1e-3 * moment, "d=32 n=4 w=d=1, 5000 steps: median MSE / second moment " +
                                             sci(p.median_mse / moment) + " (tol 1e-3); seeds: " + all};
}

// ---------------------------------------------------------------------------
// 7. width and depth trend

Outcome width_depth_trend() {
  TaskShape shape;
  shape.d_in = shape.d_out = 32;
  shape.samples = 256;
  shape.teacher = student_config(32, 4, 3, 2);
  const auto task = make_synthetic_task(TaskKind::teacher_gadget, shape, 707);
  const auto base = student_config(32, 4, 1, 1);
  TrainConfig train;
  train.steps = 500;
  std::vector<double> widths, depths;
  for (int w = 1; w <= 3; ++w) widths.push_back(sweep_point(task.data, base, w, 2, 5, train, {}).median_mse);
  depths.push_back(sweep_point(task.data, base, 2, 1, 5, train, {}).median_mse);
  depths.push_back(widths[1]);
  const bool pass = widths[1] <= widths[0] && widths[2] <= widths[1] && depths[1] <= depths[0];
  return {pass, "median MSE at depth 2, width 1/2/3: " + sci(widths[0]) + " / " + sci(widths[1]) + " / " +
                    sci(widths[2]) + "; at width 2, depth 1/2: " + sci(depths[0]) + " / " + sci(depths[1])};
}

// ---------------------------------------------------------------------------
// 8. warm start

Outcome warm_start() {
  TrainConfig train;
  train.steps = 50;
  train.batch_size = 32;
  PowerIterConfig power;
  power.epsilon = 1e-3;
  bool pass = true;
  std::string detail;
  for (int dim : {64, 128}) {
    const auto s = warmstart_study(dim, 20, 256, train, power, 808);
    pass = pass && s.last_mean < s.first_mean;
    detail += (detail.empty() ? "" : "; ") + std::string("dim ") + std::to_string(dim) + ": first 10% " +
              fixed(s.first_mean) + ", last 10% " + fixed(s.last_mean) + " iterations (cold solve " +
              fixed(s.mean_trace.front()) + ")";
  }
  return {pass, "20 runs, 50 steps, eps 1e-3; " + detail};
}

// ---------------------------------------------------------------------------
// 9. CLI smoke

Outcome cli_smoke() {
  const auto dir = std::filesystem::temp_directory_path() / "rotorlin_acceptance";
  std::filesystem::create_directories(dir);
  const auto path = [&](const char* name) { return (dir / name).string(); };
  std::mt19937_64 rng(909);
  std::normal_distribution<double> normal;
  DenseMatrix x(256, 32);
  for (auto& v : x.data()) v = normal(rng);
  write_matrix(path("x.rlmx"), x);
  write_file_atomic(path("run.cfg"),
                    "gadget.n = 4\n"
                    "train.steps = 300\n"
                    "lr.rank = 1\n"
                    "bh.blocks = 4\n");

  std::vector<std::string> lines;
  std::map<std::string, std::size_t> params;
  bool ok = true;
  for (const std::string method : {"rotor", "lr", "bh"}) {
    std::vector<std::string> args{"rotorlin", "fit", "--method", method, "--config", path("run.cfg"), "--inputs",
                                  path("x.rlmx"), "--targets", path("y.rlmx"), "--out",
                                  (dir / (method + ".json")).string()};
    if (method == "rotor") args.insert(args.end(), {"--teacher-seed", "9"});
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    if (code != 0) {
      ok = false;
      lines.push_back(method + " exit " + std::to_string(code) + ": " + err.str());
      continue;
    }
    const auto j = nlohmann::json::parse(read_file(dir / (method + ".json")));
    params[method] = j["params"]["total"].get<std::size_t>();
    lines.push_back(method + " " + std::to_string(params[method]));
  }
  std::filesystem::remove_all(dir);
  ok = ok && params["rotor"] < params["lr"] && params["lr"] < params["bh"];
  std::string detail = "32->32 exit codes 0, params";
  for (const auto& l : lines) detail += " " + l;
  return {ok, detail};
}

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;
  Outcome (*run)();
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  app.add_option("criteria", only, "criterion numbers to run (default: all)");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria{
      {1, "closed-form exponential", 10, closed_form_exponential},
      {2, "invariant decomposition", 60, decomposition_suite},
      {3, "representation", 120, representation},
      {4, "differentiability", 60, differentiability},
      {5, "parameter accounting", 1, parameter_accounting},
      {6, "teacher-student fit", 600, teacher_student},
      {7, "width/depth trend", 1200, width_depth_trend},
      {8, "warm start", 600, warm_start},
      {9, "cli smoke", 300, cli_smoke},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto start = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
    const bool pass = o.pass && seconds < c.limit_seconds;
    if (!pass) ++failed;
    std::cout << "criterion " << c.id << " " << (pass ? "PASS" : "FAIL") << " " << c.name << ": " << o.detail << "; "
              << fixed(seconds, 1) << " s (limit " << c.limit_seconds << " s)" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
