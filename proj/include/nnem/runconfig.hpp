#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "nnem/envelope.hpp"
#include "nnem/localnet.hpp"
#include "nnem/problem.hpp"
#include "nnem/solver.hpp"

namespace nnem {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flat-key run configuration. Every key is validated with a range before
/// any compute starts; unknown keys are hard errors so typos never pass
/// silently.
struct RunConfig {
  std::string mesh_kind = "unit_square";  // unit_square | l_shape | file
  int mesh_n = 2;
  std::string mesh_path;

  std::string envelope_kind = "lagrange";  // hierarchical | lagrange
  int envelope_order = 2;
  bool envelope_bubbles = true;

  int net_hidden_layers = 2;
  int net_width = 16;
  std::string net_activation = "sine";

  bool augment_constant = true;

  int train_steps = 0;
  double train_lr = 3e-4;
  std::uint64_t train_seed = 0;
  int train_log_every = 100;

  int quad_triangle_points = 36;
  int quad_edge_points = 6;

  std::string problem_name = "laplace_sine";
  std::string output_dir = "out";
  int threads = 0;  // reserved; the current implementation runs sequentially

  std::vector<int> study_mesh_sizes;
  std::vector<std::string> study_methods;

  EnvelopeFamily envelope_family() const {
    if (envelope_kind == "hierarchical") return hierarchical_family(envelope_bubbles);
    return lagrange_family(envelope_order);
  }

  NetConfig net_config() const {
    NetConfig cfg;
    cfg.hidden_layers = net_hidden_layers;
    cfg.width = net_width;
    cfg.activation = net_activation == "tanh"       ? Activation::tanh
                     : net_activation == "identity" ? Activation::identity
                                                    : Activation::sine;
    return cfg;
  }

  TrainConfig train_config() const {
    TrainConfig cfg;
    cfg.max_steps = train_steps;
    cfg.learning_rate = train_lr;
    cfg.seed = train_seed;
    cfg.log_every = train_log_every;
    return cfg;
  }

  /// Sorted key=value lines; the checkpoint compatibility signature.
  std::string canonical_signature() const;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline int parse_int(const std::string& key, const std::string& value) {
  size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(value, &used);
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects an integer, got '" + value + "'");
  }
  if (used != value.size())
    throw ConfigError("config: key '" + key + "' expects an integer, got '" + value + "'");
  return v;
}

inline double parse_real(const std::string& key, const std::string& value) {
  size_t used = 0;
  double v = 0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects a number, got '" + value + "'");
  }
  if (used != value.size())
    throw ConfigError("config: key '" + key + "' expects a number, got '" + value + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  throw ConfigError("config: key '" + key + "' expects true or false, got '" + value + "'");
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const std::uint64_t v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects a non-negative integer, got '" + value +
                      "'");
  }
}

inline std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::istringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace detail

/// Parses `key = value` lines ('#' starts a comment). Returns the validated
/// configuration; throws ConfigError naming the offending key otherwise.
inline RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + " is not 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("config: line " + std::to_string(lineno) + " is missing a key or value");
    if (!kv.emplace(key, value).second)
      throw ConfigError("config: duplicate key '" + key + "'");
  }

  for (const auto& [key, value] : kv) {
    if (key == "mesh.kind") cfg.mesh_kind = value;
    else if (key == "mesh.n") cfg.mesh_n = detail::parse_int(key, value);
    else if (key == "mesh.path") cfg.mesh_path = value;
    else if (key == "envelope.kind") cfg.envelope_kind = value;
    else if (key == "envelope.order") cfg.envelope_order = detail::parse_int(key, value);
    else if (key == "envelope.bubbles") cfg.envelope_bubbles = detail::parse_bool(key, value);
    else if (key == "net.hidden_layers") cfg.net_hidden_layers = detail::parse_int(key, value);
    else if (key == "net.width") cfg.net_width = detail::parse_int(key, value);
    else if (key == "net.activation") cfg.net_activation = value;
    else if (key == "space.augment_constant") cfg.augment_constant = detail::parse_bool(key, value);
    else if (key == "train.steps") cfg.train_steps = detail::parse_int(key, value);
    else if (key == "train.lr") cfg.train_lr = detail::parse_real(key, value);
    else if (key == "train.seed") cfg.train_seed = detail::parse_u64(key, value);
    else if (key == "train.log_every") cfg.train_log_every = detail::parse_int(key, value);
    else if (key == "quad.triangle_points") cfg.quad_triangle_points = detail::parse_int(key, value);
    else if (key == "quad.edge_points") cfg.quad_edge_points = detail::parse_int(key, value);
    else if (key == "problem.name") cfg.problem_name = value;
    else if (key == "output.dir") cfg.output_dir = value;
    else if (key == "threads") cfg.threads = detail::parse_int(key, value);
    else if (key == "study.mesh_sizes") {
      for (const std::string& item : detail::split_list(value))
        cfg.study_mesh_sizes.push_back(detail::parse_int(key, item));
    } else if (key == "study.methods") cfg.study_methods = detail::split_list(value);
    else throw ConfigError("config: unknown key '" + key + "'");
  }

  // Range validation, before any compute.
  if (cfg.mesh_kind != "unit_square" && cfg.mesh_kind != "l_shape" && cfg.mesh_kind != "file")
    throw ConfigError("config: mesh.kind must be unit_square, l_shape or file");
  if (cfg.mesh_kind == "file" && cfg.mesh_path.empty())
    throw ConfigError("config: mesh.kind=file requires mesh.path");
  if (cfg.mesh_kind != "file" && cfg.mesh_n < 1)
    throw ConfigError("config: mesh.n must be >= 1");
  if (cfg.envelope_kind != "hierarchical" && cfg.envelope_kind != "lagrange")
    throw ConfigError("config: envelope.kind must be hierarchical or lagrange");
  if (cfg.envelope_kind == "lagrange" && (cfg.envelope_order < 1 || cfg.envelope_order > 3))
    throw ConfigError("config: envelope.order must be 1, 2 or 3");
  if (cfg.net_hidden_layers < 1) throw ConfigError("config: net.hidden_layers must be >= 1");
  if (cfg.net_width < 1) throw ConfigError("config: net.width must be >= 1");
  if (cfg.net_activation != "sine" && cfg.net_activation != "tanh" &&
      cfg.net_activation != "identity")
    throw ConfigError("config: net.activation must be sine, tanh or identity");
  if (cfg.train_steps < 0) throw ConfigError("config: train.steps must be >= 0");
  if (!(cfg.train_lr > 0.0)) throw ConfigError("config: train.lr must be > 0");
  if (cfg.train_log_every < 1) throw ConfigError("config: train.log_every must be >= 1");
  const int k = static_cast<int>(std::lround(std::sqrt(double(cfg.quad_triangle_points))));
  if (k < 1 || k > 64 || k * k != cfg.quad_triangle_points)
    throw ConfigError("config: quad.triangle_points must be a perfect square k*k with k in [1,64]");
  if (cfg.quad_edge_points < 1 || cfg.quad_edge_points > 64)
    throw ConfigError("config: quad.edge_points must be in [1,64]");
  {
    const auto known = builtin_problems();
    if (std::find(known.begin(), known.end(), cfg.problem_name) == known.end())
      throw ConfigError("config: unknown problem.name '" + cfg.problem_name + "'");
  }
  if (cfg.threads < 0) throw ConfigError("config: threads must be >= 0");
  for (int n : cfg.study_mesh_sizes)
    if (n < 1) throw ConfigError("config: study.mesh_sizes entries must be >= 1");
  for (const std::string& mth : cfg.study_methods)
    if (mth != "fem" && mth != "nnem")
      throw ConfigError("config: study.methods entries must be fem or nnem");
  return cfg;
}

inline std::string RunConfig::canonical_signature() const {
  std::map<std::string, std::string> kv;
  kv["mesh.kind"] = mesh_kind;
  if (mesh_kind == "file") kv["mesh.path"] = mesh_path;
  else kv["mesh.n"] = std::to_string(mesh_n);
  kv["envelope.kind"] = envelope_kind;
  if (envelope_kind == "lagrange") kv["envelope.order"] = std::to_string(envelope_order);
  else kv["envelope.bubbles"] = envelope_bubbles ? "true" : "false";
  kv["net.hidden_layers"] = std::to_string(net_hidden_layers);
  kv["net.width"] = std::to_string(net_width);
  kv["net.activation"] = net_activation;
  kv["space.augment_constant"] = augment_constant ? "true" : "false";
  char lr[32];
  std::snprintf(lr, sizeof lr, "%.17g", train_lr);
  kv["train.lr"] = lr;
  kv["train.seed"] = std::to_string(train_seed);
  kv["quad.triangle_points"] = std::to_string(quad_triangle_points);
  kv["quad.edge_points"] = std::to_string(quad_edge_points);
  kv["problem.name"] = problem_name;
  std::string out;
  for (const auto& [key, value] : kv) out += key + "=" + value + "\n";
  return out;
}

}  // namespace nnem
