#pragma once

// The `rotorlin` command line. run() never throws: every failure maps to an
// exit code and a single line on `err`.
//
//   0 ok, 1 tolerance not met, 2 configuration, 3 numeric failure,
//   4 degeneracy, 5 verification failure, 6 missing gradient

#include <iomanip>
#include <iostream>
#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "rotorlin/experiments.hpp"
#include "rotorlin/io.hpp"

namespace rotorlin::cli {

enum ExitCode : int {
  kOk = 0,
  kTolerance = 1,
  kConfig = 2,
  kNumeric = 3,
  kDegeneracy = 4,
  kVerifyFailed = 5,
  kMissingGradient = 6,
};

namespace detail {

inline std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

inline std::string sci(double x) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(3) << x;
  return s.str();
}

struct FitArgs {
  std::string method, config, inputs, targets, out;
  std::optional<std::uint64_t> teacher_seed, seed;
};

struct DecomposeArgs {
  int n = 0;
  std::string bivector, out;
  std::optional<std::uint64_t> random;
  double epsilon = 1e-6;
};

struct VerifyArgs {
  int n = 0;
  int seeds = 20;
  double tol = 1e-8;
  std::uint64_t seed = 0;
};

struct GradcheckArgs {
  std::string config;
  double h = 1e-5;
  double tol = 1e-4;
  int seeds = 20;
  std::optional<std::uint64_t> seed;
};

struct ReportArgs {
  std::string sweep, config, out;
  std::optional<std::uint64_t> seed;
};

inline void emit_warnings(const RunConfig& cfg, std::ostream& err) {
  for (const auto& w : cfg.warnings) err << "warning: " << w << "\n";
}

inline int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig cfg = load_run_config(a.config);
  if (a.seed) {
    cfg.train.seed = *a.seed;
    cfg.init_seed = *a.seed;
  }
  const DenseMatrix inputs = read_matrix(a.inputs);
  DenseMatrix targets;
  if (a.teacher_seed) {
    // Targets come from a frozen teacher gadget applied to the inputs.
    const int d_in = static_cast<int>(inputs.cols());
    const int d_out = cfg.has("gadget.d_out") ? cfg.gadget.d_out : d_in;
    RunConfig tcfg = cfg;
    if (cfg.task.teacher_width > 0) tcfg.gadget.width = cfg.task.teacher_width;
    if (cfg.task.teacher_depth > 0) tcfg.gadget.depth = cfg.task.teacher_depth;
    tcfg.gadget.c1 = tcfg.gadget.c2 = 0;
    const RotorGadget teacher = make_teacher_gadget(tcfg.gadget_for(d_in, d_out), *a.teacher_seed, cfg.task.teacher_scale);
    Dataset probe;
    probe.d_in = d_in;
    probe.d_out = d_out;
    probe.inputs = inputs.data();
    probe.targets.assign(inputs.rows() * static_cast<std::size_t>(d_out), 0.0);
    targets = DenseMatrix(inputs.rows(), d_out, teacher_targets(teacher, probe, cfg.power));
    if (!a.targets.empty()) write_matrix(a.targets, targets);
  } else {
    if (a.targets.empty()) throw ConfigError("fit: --targets is required without --teacher-seed");
    targets = read_matrix(a.targets);
  }
  const Dataset data = dataset_from_matrices(inputs, targets);
  const TrainConfig train = cfg.train_for(a.method);
  FitOptions opts;
  opts.power = cfg.power;
  opts.init_seed = cfg.init_seed;

  FitReport report;
  if (a.method == "rotor") {
    RotorGadget g = build_gadget(cfg.gadget_for(data.d_in, data.d_out), cfg.init_seed);
    emit_warnings(cfg, err);
    report = fit(g, data, train, opts);
  } else if (a.method == "lr") {
    LowRankLayer l = make_lowrank(data.d_in, data.d_out, cfg.lr_rank, cfg.init_seed);
    report = fit(l, data, train, opts);
  } else {
    BlockHadamardLayer l = make_block_hadamard(data.d_in, data.d_out, cfg.bh_blocks, cfg.init_seed);
    report = fit(l, data, train, opts);
  }
  write_file_atomic(a.out, to_json(report).dump(2) + "\n");
  out << "method " << report.method << " steps " << report.steps << " params " << report.params.total
      << " initial_mse " << sci(report.initial_mse) << " final_mse " << sci(report.final_mse) << "\n";
  return kOk;
}

inline int cmd_decompose(const DecomposeArgs& a, std::ostream& out, std::ostream& err) {
  if (a.n < 2 || a.n > AlgebraDim::kMaxGenerators) throw ConfigError("decompose: --n must be in [2, 16]");
  PowerIterConfig power;
  power.epsilon = a.epsilon;
  try {
    power.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  const AlgebraDim dim(a.n);
  Bivector<double> b(dim);
  if (a.random) {
    std::mt19937_64 rng(*a.random);
    b = random_bivector(dim, rng);
  } else {
    const DenseMatrix m = read_matrix(a.bivector);
    if (m.rows() != 1 || m.cols() != dim.bivector_count())
      throw ConfigError("decompose: " + a.bivector + " must be 1 x " + std::to_string(dim.bivector_count()) +
                        " for n = " + std::to_string(a.n) + ", got " + std::to_string(m.rows()) + " x " +
                        std::to_string(m.cols()));
    b = Bivector<double>(dim, m.data());
  }
  const auto d = invariant_decompose(b, {}, power);
  const auto diag = diagnose_decomposition(b, d, power.tol_simple);
  const std::string text = to_text(diag);
  if (a.out.empty()) out << text;
  else {
    write_file_atomic(a.out, text);
    out << "components " << diag.components.size() << " worst_residual " << sci(diag.worst()) << "\n";
  }
  if (!diag.passed(1e-6)) {
    err << "decompose: invariant residual " << sci(diag.worst()) << " exceeds 1e-6\n";
    return kTolerance;
  }
  return kOk;
}

inline int cmd_verify_rep(const VerifyArgs& a, std::ostream& out, std::ostream& err) {
  if (a.n < 2 || a.n > 8) throw ConfigError("verify-rep: --n must be in [2, 8], got " + std::to_string(a.n));
  if (a.seeds < 1) throw ConfigError("verify-rep: --seeds must be >= 1");
  if (!(a.tol >= 0.0)) throw ConfigError("verify-rep: --tol must be >= 0");
  out << "seed,max_diff,block_orthogonality,det_residual,nonzeros,budget,status\n";
  int failures = 0;
  std::string first;
  for (int k = 0; k < a.seeds; ++k) {
    const std::uint64_t seed = a.seed + static_cast<std::uint64_t>(k);
    std::mt19937_64 rng(seed);
    const auto b = random_bivector(AlgebraDim(a.n), rng);
    const auto rep = verify_representation(b, a.tol);
    out << seed << "," << sci(rep.max_diff) << "," << sci(rep.worst_orthogonality()) << ","
        << sci(rep.worst_det_residual()) << "," << rep.nonzeros << "," << rep.nonzero_budget << ","
        << (rep.passed ? "pass" : "fail") << "\n";
    if (!rep.passed) {
      if (failures == 0) first = "seed " + std::to_string(seed) + " (" + rep.failed_properties() + ")";
      ++failures;
    }
  }
  if (failures > 0) {
    err << "verify-rep: " << failures << " of " << a.seeds << " seeds failed at tol " << sci(a.tol) << "; first: "
        << first << "\n";
    return kVerifyFailed;
  }
  return kOk;
}

inline GadgetConfig gradcheck_gadget(RunConfig& cfg) {
  GadgetConfig g = cfg.gadget;
  if (!cfg.has("gadget.n")) g.n = 4;
  const int c = g.chunk();
  if (!cfg.has("gadget.d_in")) g.d_in = c;
  if (!cfg.has("gadget.d_out")) g.d_out = c;
  cfg.gadget = g;
  cfg.present.insert("gadget.n");
  return cfg.gadget_for(g.d_in, g.d_out);
}

inline int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream& err) {
  if (a.seeds < 1) throw ConfigError("gradcheck: --seeds must be >= 1");
  if (!(a.h > 0.0)) throw ConfigError("gradcheck: --h must be > 0");
  if (!(a.tol >= 0.0)) throw ConfigError("gradcheck: --tol must be >= 0");
  RunConfig cfg = load_run_config(a.config);
  const GadgetConfig g = gradcheck_gadget(cfg);
  emit_warnings(cfg, err);
  GradcheckOptions opts;
  opts.h = a.h;
  opts.power = cfg.power;
  const std::uint64_t base = a.seed.value_or(cfg.train.seed);
  out << "seed,r_side,s_side,slopes\n";
  GradcheckReport worst;
  std::uint64_t worst_seed = base;
  for (int k = 0; k < a.seeds; ++k) {
    const std::uint64_t seed = base + static_cast<std::uint64_t>(k);
    const auto r = gradcheck(random_gradcheck_state(g, seed, opts), opts);
    out << seed << "," << sci(r.worst_r) << "," << sci(r.worst_s) << "," << sci(r.worst_slope) << "\n";
    if (r.worst() > worst.worst()) worst_seed = seed;
    worst.worst_r = std::max(worst.worst_r, r.worst_r);
    worst.worst_s = std::max(worst.worst_s, r.worst_s);
    worst.worst_slope = std::max(worst.worst_slope, r.worst_slope);
    if (r.worst() >= worst.worst()) worst.worst_index = r.worst_index;
  }
  out << "worst," << sci(worst.worst_r) << "," << sci(worst.worst_s) << "," << sci(worst.worst_slope) << "\n";
  if (worst.worst() > a.tol) {
    err << "gradcheck: worst relative error " << sci(worst.worst()) << " exceeds tol " << sci(a.tol) << " (parameter "
        << worst.worst_index << ", seed " << worst_seed << ")\n";
    return kTolerance;
  }
  return kOk;
}

inline int cmd_report(const ReportArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig cfg = load_run_config(a.config);
  if (a.seed) {
    cfg.task.seed = *a.seed;
    cfg.train.seed = *a.seed;
  }
  std::ostringstream csv;
  if (a.sweep == "warmstart") {
    if (cfg.sweep.dims.empty()) throw ConfigError("report: sweep.dims is empty");
    if (cfg.sweep.runs < 1) throw ConfigError("report: sweep.runs must be >= 1");
    const TrainConfig train = cfg.train_for("rotor");
    csv << "dim,step,mean_iterations\n";
    for (int dim : cfg.sweep.dims) {
      const auto s = warmstart_study(dim, cfg.sweep.runs, cfg.task.samples, train, cfg.power, cfg.task.seed);
      for (std::size_t i = 0; i < s.mean_trace.size(); ++i) csv << dim << "," << i << "," << s.mean_trace[i] << "\n";
      out << "dim " << dim << " first_10pct " << sci(s.first_mean) << " last_10pct " << sci(s.last_mean) << "\n";
    }
  } else {
    std::vector<std::pair<int, int>> grid;
    if (a.sweep == "width")
      for (int w : cfg.sweep.widths) grid.emplace_back(w, cfg.sweep.depth);
    else
      for (int d : cfg.sweep.depths) grid.emplace_back(cfg.sweep.width, d);
    if (grid.empty()) throw ConfigError("report: the " + a.sweep + " grid is empty");
    if (cfg.sweep.seeds < 1) throw ConfigError("report: sweep.seeds must be >= 1");
    const int d_in = cfg.has("task.d_in") ? cfg.task.d_in : (cfg.has("gadget.d_in") ? cfg.gadget.d_in : cfg.task.d_in);
    const int d_out =
        cfg.has("task.d_out") ? cfg.task.d_out : (cfg.has("gadget.d_out") ? cfg.gadget.d_out : cfg.task.d_out);
    const GadgetConfig base = cfg.gadget_for(d_in, d_out);
    emit_warnings(cfg, err);
    TaskShape shape;
    shape.d_in = d_in;
    shape.d_out = d_out;
    shape.samples = cfg.task.samples;
    shape.teacher = base;
    if (cfg.task.teacher_width > 0) shape.teacher.width = cfg.task.teacher_width;
    if (cfg.task.teacher_depth > 0) shape.teacher.depth = cfg.task.teacher_depth;
    shape.teacher.c1 = shape.teacher.c2 = 0;
    shape.teacher_scale = cfg.task.teacher_scale;
    const auto task = make_synthetic_task(cfg.task.kind, shape, cfg.task.seed, cfg.power);
    const TrainConfig train = cfg.train_for("rotor");
    csv << "width,depth,median_final_mse\n";
    for (auto [w, d] : grid) {
      const auto p = sweep_point(task.data, base, w, d, cfg.sweep.seeds, train, cfg.power);
      csv << w << "," << d << "," << p.median_mse << "\n";
      out << "width " << w << " depth " << d << " median_final_mse " << sci(p.median_mse) << "\n";
    }
  }
  write_file_atomic(a.out, csv.str());
  return kOk;
}

template <class Fn>
int guarded(Fn fn, std::ostream& err) {
  try {
    return fn();
  } catch (const MissingGradient& e) {
    err << "missing gradient: " << one_line(e.what()) << "\n";
    return kMissingGradient;
  } catch (const DegeneracyError& e) {
    err << "degenerate decomposition: " << one_line(e.what()) << " (residual " << sci(e.residual()) << ")\n";
    return kDegeneracy;
  } catch (const ConfigError& e) {
    err << "config error: " << one_line(e.what()) << "\n";
    return kConfig;
  } catch (const FormatError& e) {
    err << "format error: " << one_line(e.what()) << "\n";
    return kConfig;
  } catch (const InvalidArgument& e) {
    err << "invalid argument: " << one_line(e.what()) << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    err << "numeric failure: " << one_line(e.what()) << "\n";
    return kNumeric;
  }
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Rotor-based linear layer toolkit", "rotorlin"};
  app.require_subcommand(1);

  detail::FitArgs fa;
  auto* fit_cmd = app.add_subcommand("fit", "fit a rotor gadget or a baseline to (inputs, targets)");
  fit_cmd->add_option("--method", fa.method, "rotor, lr or bh")->required()->check(CLI::IsMember({"rotor", "lr", "bh"}));
  fit_cmd->add_option("--config", fa.config, "run configuration")->required();
  fit_cmd->add_option("--inputs", fa.inputs, "RLMX inputs, one sample per row")->required();
  fit_cmd->add_option("--targets", fa.targets, "RLMX targets (written instead when --teacher-seed is set)");
  fit_cmd->add_option("--out", fa.out, "report path (JSON)")->required();
  fit_cmd->add_option("--teacher-seed", fa.teacher_seed, "generate targets with a frozen teacher gadget");
  fit_cmd->add_option("--seed", fa.seed, "override train and init seeds");

  detail::DecomposeArgs da;
  auto* dec_cmd = app.add_subcommand("decompose", "invariant decomposition of one bivector");
  dec_cmd->add_option("--n", da.n, "number of generators")->required();
  auto* biv = dec_cmd->add_option("--bivector", da.bivector, "RLMX file, 1 x C(n,2)");
  auto* rnd = dec_cmd->add_option("--random", da.random, "seed for a random bivector");
  biv->excludes(rnd);
  dec_cmd->add_option("--epsilon", da.epsilon, "power iteration threshold");
  dec_cmd->add_option("--out", da.out, "dump path (text)");

  detail::VerifyArgs va;
  auto* ver_cmd = app.add_subcommand("verify-rep", "check the sandwich matrix against compound matrices");
  ver_cmd->add_option("--n", va.n, "number of generators (2..8)")->required();
  ver_cmd->add_option("--seeds", va.seeds, "random bivectors to test");
  ver_cmd->add_option("--tol", va.tol, "tolerance");
  ver_cmd->add_option("--seed", va.seed, "first seed");

  detail::GradcheckArgs ga;
  auto* grad_cmd = app.add_subcommand("gradcheck", "autodiff against central differences");
  grad_cmd->set_help_flag("--help", "print this help message and exit");
  grad_cmd->add_option("--config", ga.config, "run configuration")->required();
  grad_cmd->add_option("--h", ga.h, "finite-difference step");
  grad_cmd->add_option("--tol", ga.tol, "relative error tolerance");
  grad_cmd->add_option("--seeds", ga.seeds, "random states");
  grad_cmd->add_option("--seed", ga.seed, "first seed");

  detail::ReportArgs ra;
  auto* rep_cmd = app.add_subcommand("report", "width/depth or warm-start sweeps as CSV");
  rep_cmd->add_option("--sweep", ra.sweep, "width, depth or warmstart")
      ->required()
      ->check(CLI::IsMember({"width", "depth", "warmstart"}));
  rep_cmd->add_option("--config", ra.config, "run configuration")->required();
  rep_cmd->add_option("--out", ra.out, "CSV path")->required();
  rep_cmd->add_option("--seed", ra.seed, "override task and train seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << detail::one_line(e.what()) << "\n";
    return kConfig;
  }

  if (*dec_cmd && !da.random && da.bivector.empty()) {
    err << "usage error: decompose needs --bivector or --random\n";
    return kConfig;
  }

  return detail::guarded(
      [&] {
        if (*fit_cmd) return detail::cmd_fit(fa, out, err);
        if (*dec_cmd) return detail::cmd_decompose(da, out, err);
        if (*ver_cmd) return detail::cmd_verify_rep(va, out, err);
        if (*grad_cmd) return detail::cmd_gradcheck(ga, out, err);
        return detail::cmd_report(ra, out, err);
      },
      err);
}

}  // namespace rotorlin::cli
