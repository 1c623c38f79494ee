#pragma once

// File formats: RLMX matrices, `key = value` run configs, JSON fit reports.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rotorlin/training.hpp"

namespace rotorlin {

// Writes to a sibling temp file and renames it over `path`.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw ConfigError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw ConfigError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// RLMX: "RLMX", u32 version (1), u32 rows, u32 cols, rows*cols f64 row-major,
// all little-endian.

inline constexpr std::uint32_t kMatrixFormatVersion = 1;

inline std::string encode_matrix(const DenseMatrix& m) {
  std::string s = "RLMX";
  detail::put_u32(s, kMatrixFormatVersion);
  detail::put_u32(s, static_cast<std::uint32_t>(m.rows()));
  detail::put_u32(s, static_cast<std::uint32_t>(m.cols()));
  for (double v : m.data()) detail::put_f64(s, v);
  return s;
}

inline DenseMatrix decode_matrix(std::string_view data) {
  detail::ByteReader in(data, "RLMX");
  if (in.bytes(4) != "RLMX") throw FormatError("RLMX: bad magic");
  const auto version = in.u32();
  if (version != kMatrixFormatVersion) throw FormatError("RLMX: unsupported version " + std::to_string(version));
  const std::size_t rows = in.u32(), cols = in.u32();
  if (rows * cols * 8 != data.size() - 16)
    throw FormatError("RLMX: payload holds " + std::to_string((data.size() - 16) / 8) + " values, header says " +
                      std::to_string(rows * cols));
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = in.f64();
  return DenseMatrix(rows, cols, std::move(v));
}

inline void write_matrix(const std::filesystem::path& path, const DenseMatrix& m) {
  write_file_atomic(path, encode_matrix(m));
}

inline DenseMatrix read_matrix(const std::filesystem::path& path) {
  try {
    return decode_matrix(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// Samples are stored one per row.
inline Dataset dataset_from_matrices(const DenseMatrix& inputs, const DenseMatrix& targets) {
  if (inputs.rows() != targets.rows())
    throw ConfigError("inputs have " + std::to_string(inputs.rows()) + " rows but targets have " +
                      std::to_string(targets.rows()));
  Dataset d;
  d.d_in = static_cast<int>(inputs.cols());
  d.d_out = static_cast<int>(targets.cols());
  d.inputs = inputs.data();
  d.targets = targets.data();
  return d;
}

inline DenseMatrix inputs_matrix(const Dataset& d) { return DenseMatrix(d.size(), d.d_in, d.inputs); }
inline DenseMatrix targets_matrix(const Dataset& d) { return DenseMatrix(d.size(), d.d_out, d.targets); }

// ---------------------------------------------------------------------------
// Run configuration.

struct SweepConfig {
  std::vector<int> widths{1, 2, 3};
  std::vector<int> depths{1, 2, 3};
  int width = 2;  // fixed width for depth sweeps
  int depth = 2;  // fixed depth for width sweeps
  int seeds = 5;
  std::vector<int> dims{64, 128};
  int runs = 20;
};

struct TaskConfig {
  TaskKind kind = TaskKind::teacher_gadget;
  int d_in = 32;
  int d_out = 32;
  std::size_t samples = 256;
  std::uint64_t seed = 0;
  int teacher_width = 0;  // 0: same as the gadget
  int teacher_depth = 0;
  double teacher_scale = 1.0;
};

struct RunConfig {
  GadgetConfig gadget;
  std::optional<int> chunk;
  std::uint64_t init_seed = 0;
  TrainConfig train;
  PowerIterConfig power;
  int lr_rank = 1;
  int bh_blocks = 64;
  SweepConfig sweep;
  TaskConfig task;
  std::set<std::string> present;
  std::vector<std::string> warnings;

  bool has(const std::string& key) const { return present.count(key) > 0; }

  void require(const std::string& key) const {
    if (!has(key)) throw ConfigError("missing required key '" + key + "'");
  }

  // Train config with the per-method defaults for keys left unset.
  TrainConfig train_for(const std::string& method) const {
    TrainConfig t = train;
    const TrainConfig base = method == "rotor" ? TrainConfig::rotor_defaults() : TrainConfig::baseline_defaults();
    if (!has("train.learning_rate")) t.learning_rate = base.learning_rate;
    if (!has("train.batch_size")) t.batch_size = base.batch_size;
    return t;
  }

  // Gadget config for a data shape; clamps the chunk key and checks it.
  GadgetConfig gadget_for(int d_in, int d_out) {
    require("gadget.n");
    GadgetConfig g = gadget;
    if (has("gadget.d_in") && g.d_in != d_in)
      throw ConfigError("gadget.d_in = " + std::to_string(g.d_in) + " but the data has " + std::to_string(d_in));
    if (has("gadget.d_out") && g.d_out != d_out)
      throw ConfigError("gadget.d_out = " + std::to_string(g.d_out) + " but the data has " + std::to_string(d_out));
    g.d_in = d_in;
    g.d_out = d_out;
    if (chunk) {
      int c = *chunk;
      if (c > std::min(d_in, d_out)) {
        c = std::min(d_in, d_out);
        warnings.push_back("gadget.chunk = " + std::to_string(*chunk) + " clamped to min(d_in, d_out) = " +
                           std::to_string(c));
      }
      // The key caps the chunk; the chunk itself follows from gadget.n.
      if (g.chunk() > c)
        throw ConfigError("gadget.chunk = " + std::to_string(c) + " is smaller than the chunk implied by gadget.n (" +
                          std::to_string(g.chunk()) + ")");
    }
    g.resolve();
    return g;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  std::from_chars_result res;
  if constexpr (std::is_floating_point_v<T>) {
    res = std::from_chars(first, last, out);
  } else {
    res = std::from_chars(first, last, out);
  }
  if (res.ec != std::errc() || res.ptr != last) throw ConfigError("key '" + key + "': cannot parse '" + value + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError("key '" + key + "': expected a boolean, got '" + value + "'");
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(parse_number<int>(key, item));
  }
  return out;
}

}  // namespace detail

inline RunConfig parse_run_config(std::string_view text) {
  using namespace detail;
  RunConfig c;
  std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters;
  auto integer = [](int& dst) { return [&dst](const std::string& k, const std::string& v) { dst = parse_number<int>(k, v); }; };
  auto u64 = [](std::uint64_t& dst) {
    return [&dst](const std::string& k, const std::string& v) { dst = parse_number<std::uint64_t>(k, v); };
  };
  auto real = [](double& dst) {
    return [&dst](const std::string& k, const std::string& v) { dst = parse_number<double>(k, v); };
  };
  auto boolean = [](bool& dst) { return [&dst](const std::string& k, const std::string& v) { dst = parse_bool(k, v); }; };
  auto list = [](std::vector<int>& dst) {
    return [&dst](const std::string& k, const std::string& v) { dst = parse_int_list(k, v); };
  };

  GadgetConfig& g = c.gadget;
  setters["gadget.d_in"] = integer(g.d_in);
  setters["gadget.d_out"] = integer(g.d_out);
  setters["gadget.n"] = integer(g.n);
  setters["gadget.c1"] = integer(g.c1);
  setters["gadget.c2"] = integer(g.c2);
  setters["gadget.width"] = integer(g.width);
  setters["gadget.depth"] = integer(g.depth);
  setters["gadget.slope"] = real(g.slope);
  setters["gadget.normalization"] = boolean(g.use_normalization);
  setters["gadget.permutations"] = boolean(g.use_permutations);
  setters["gadget.permutation_seed"] = u64(g.permutation_seed);
  setters["gadget.init_seed"] = u64(c.init_seed);
  setters["gadget.chunk"] = [&c](const std::string& k, const std::string& v) {
    c.chunk = parse_number<int>(k, v);
    if (*c.chunk < 1) throw ConfigError("key 'gadget.chunk' must be positive");
  };
  setters["gadget.pooling"] = [&g](const std::string& k, const std::string& v) {
    if (v == "mean") g.pooling = Pooling::mean;
    else if (v == "sum") g.pooling = Pooling::sum;
    else throw ConfigError("key '" + k + "': expected mean or sum, got '" + v + "'");
  };
  setters["gadget.nonlinearity"] = [&g](const std::string& k, const std::string& v) {
    if (v == "none") g.nonlinearity = Nonlinearity::none;
    else if (v == "leaky") g.nonlinearity = Nonlinearity::leaky;
    else if (v == "prelu") g.nonlinearity = Nonlinearity::prelu;
    else throw ConfigError("key '" + k + "': expected none, leaky or prelu, got '" + v + "'");
  };
  setters["gadget.embedding"] = [&g](const std::string& k, const std::string& v) {
    if (v == "all_grades") g.embedding = Embedding::all_grades;
    else if (v == "vectors") g.embedding = Embedding::vectors;
    else throw ConfigError("key '" + k + "': expected all_grades or vectors, got '" + v + "'");
  };

  TrainConfig& t = c.train;
  setters["train.learning_rate"] = real(t.learning_rate);
  setters["train.batch_size"] = integer(t.batch_size);
  setters["train.steps"] = integer(t.steps);
  setters["train.weight_decay"] = real(t.weight_decay);
  setters["train.cosine_annealing"] = boolean(t.cosine_annealing);
  setters["train.seed"] = u64(t.seed);
  setters["train.adam_beta1"] = real(t.adam_beta1);
  setters["train.adam_beta2"] = real(t.adam_beta2);
  setters["train.adam_eps"] = real(t.adam_eps);
  setters["train.eval_every"] = integer(t.eval_every);

  PowerIterConfig& p = c.power;
  setters["power.epsilon"] = real(p.epsilon);
  setters["power.max_iters"] = integer(p.max_iters);
  setters["power.seed"] = u64(p.seed);
  setters["power.tol_simple"] = real(p.tol_simple);

  setters["lr.rank"] = integer(c.lr_rank);
  setters["bh.blocks"] = integer(c.bh_blocks);

  SweepConfig& s = c.sweep;
  setters["sweep.widths"] = list(s.widths);
  setters["sweep.depths"] = list(s.depths);
  setters["sweep.width"] = integer(s.width);
  setters["sweep.depth"] = integer(s.depth);
  setters["sweep.seeds"] = integer(s.seeds);
  setters["sweep.dims"] = list(s.dims);
  setters["sweep.runs"] = integer(s.runs);

  TaskConfig& k = c.task;
  setters["task.kind"] = [&k](const std::string& key, const std::string& v) {
    if (v == "teacher_gadget") k.kind = TaskKind::teacher_gadget;
    else if (v == "random_dense") k.kind = TaskKind::random_dense;
    else if (v == "random_rotation_bivector") k.kind = TaskKind::random_rotation_bivector;
    else throw ConfigError("key '" + key + "': unknown task kind '" + v + "'");
  };
  setters["task.d_in"] = integer(k.d_in);
  setters["task.d_out"] = integer(k.d_out);
  setters["task.samples"] = [&k](const std::string& key, const std::string& v) {
    k.samples = parse_number<std::size_t>(key, v);
  };
  setters["task.seed"] = u64(k.seed);
  setters["task.teacher_width"] = integer(k.teacher_width);
  setters["task.teacher_depth"] = integer(k.teacher_depth);
  setters["task.teacher_scale"] = real(k.teacher_scale);

  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown key '" + key + "' on line " + std::to_string(lineno));
    const bool list_key = key == "sweep.widths" || key == "sweep.depths" || key == "sweep.dims";
    if (value.empty() && !list_key) throw ConfigError("key '" + key + "' has no value");
    it->second(key, value);
    c.present.insert(key);
  }

  if (c.has("power.epsilon") || c.has("power.max_iters") || c.has("power.tol_simple")) {
    try {
      c.power.validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
  }
  if (c.lr_rank < 1) throw ConfigError("key 'lr.rank' must be >= 1");
  if (c.bh_blocks < 1) throw ConfigError("key 'bh.blocks' must be >= 1");
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) { return parse_run_config(read_file(path)); }

// ---------------------------------------------------------------------------
// Fit report JSON.

inline nlohmann::json to_json(const FitReport& r) {
  nlohmann::json j;
  j["method"] = r.method;
  j["steps"] = r.steps;
  j["initial_mse"] = r.initial_mse;
  j["final_mse"] = r.final_mse;
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& p : r.curve) curve.push_back({{"step", p.step}, {"mse", p.mse}});
  j["curve"] = curve;
  j["params"] = {{"rotor_params", r.params.rotor_params},
                 {"nonlinearity_params", r.params.nonlinearity_params},
                 {"total", r.params.total}};
  j["iteration_stats"] = r.iteration_stats;
  j["wall_seconds"] = r.wall_seconds;
  j["seeds"] = {{"train", r.train_seed}, {"init", r.init_seed}};
  j["degeneracy_retries"] = r.degeneracy_retries;
  return j;
}

}  // namespace rotorlin
