#ifndef FORGETLAB_CONFIG_HPP
#define FORGETLAB_CONFIG_HPP

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "forgetlab/model.hpp"
#include "forgetlab/optim.hpp"
#include "forgetlab/tasks.hpp"

namespace forgetlab {

/// Invalid or inconsistent experiment settings.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CrosscoderSettings {
  bool enabled = false;  // also run the crosscoder study after `scenario`
  double expansion = 1.5;  // d_cross = expansion * d_model
  int k = 6;
  double learning_rate = 5e-4;
  Index batch_size = 256;
  int epochs = 3;
  double lambda_max = 1e-3;
  double warmup_fraction = 0.05;
  Index samples_per_task = 2000;
  int top_features = 5;
};

struct ExperimentConfig {
  Scenario scenario = Scenario::full;
  int n_features = 80;
  int m_dims = 20;
  int n_tasks = 5;
  Index n_samples = 20000;
  Index eval_samples = 2000;
  double sparsity = 0.9;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};

  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 0.01;
  int epochs = 10000;
  double weight_decay = 0.0;
  LossKind loss = LossKind::mse;
  ProbeMode probe_mode = ProbeMode::fixed;
  double probe_lr = 0.01;
  double probe_init_scale = 1.0;
  bool probes_share_label = false;

  int depth = 1;
  int probes_per_task = 1;

  std::vector<int> depths = {1, 2, 4, 8, 10};
  std::vector<int> probe_counts = {1, 2, 4};
  /// Learning rate used by the depth sweep; 0 means `learning_rate`.
  double depth_learning_rate = 1e-3;

  int jobs = 0;  // worker threads, 0 = hardware concurrency
  CrosscoderSettings crosscoder;
};

namespace detail {

template <typename T>
std::vector<T> parse_list(const std::string& text, const std::string& key) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const auto e = item.find_last_not_of(" \t");
    std::istringstream is(item.substr(b, e - b + 1));
    T v;
    if (!(is >> v) || !is.eof()) throw ConfigError("'" + key + "': cannot parse list element '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("'" + key + "': empty list");
  return out;
}

template <typename T>
std::string join_list(const std::vector<T>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

inline bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("'" + key + "': expected a boolean, got '" + s + "'");
}

}  // namespace detail

/// Desk-scale preset: 2000 samples, 1000 epochs, seeds 0-2.
inline void apply_fast_profile(ExperimentConfig& c) {
  c.n_samples = 2000;
  c.epochs = 1000;
  c.seeds = {0, 1, 2};
}

/// The full-size setup (the defaults).
inline void apply_paper_profile(ExperimentConfig& c) {
  const ExperimentConfig d;
  c.n_samples = d.n_samples;
  c.epochs = d.epochs;
  c.seeds = d.seeds;
}

inline void apply_profile(ExperimentConfig& c, const std::string& name) {
  if (name == "fast") apply_fast_profile(c);
  else if (name == "paper") apply_paper_profile(c);
  else throw ConfigError("unknown profile '" + name + "' (expected fast|paper)");
}

/// Set one field from its textual value. Keys are the snake_case field names;
/// crosscoder keys carry a "crosscoder." prefix.
inline void set_config_value(ExperimentConfig& c, const std::string& key, const std::string& value) {
  auto num = [&](auto& field) {
    using T = std::decay_t<decltype(field)>;
    std::istringstream is(value);
    T v;
    if (!(is >> v) || !(is >> std::ws).eof()) throw ConfigError("'" + key + "': cannot parse '" + value + "'");
    field = v;
  };
  try {
    if (key == "scenario") c.scenario = parse_scenario(value);
    else if (key == "n_features") num(c.n_features);
    else if (key == "m_dims") num(c.m_dims);
    else if (key == "n_tasks") num(c.n_tasks);
    else if (key == "n_samples") num(c.n_samples);
    else if (key == "eval_samples") num(c.eval_samples);
    else if (key == "sparsity") num(c.sparsity);
    else if (key == "seeds") c.seeds = detail::parse_list<std::uint64_t>(value, key);
    else if (key == "optimizer") c.optimizer = parse_optimizer(value);
    else if (key == "lr" || key == "learning_rate") num(c.learning_rate);
    else if (key == "epochs") num(c.epochs);
    else if (key == "weight_decay") num(c.weight_decay);
    else if (key == "loss") c.loss = parse_loss(value);
    else if (key == "probe_mode") c.probe_mode = parse_probe_mode(value);
    else if (key == "probe_lr") num(c.probe_lr);
    else if (key == "probe_init_scale") num(c.probe_init_scale);
    else if (key == "probes_share_label") c.probes_share_label = detail::parse_bool(value, key);
    else if (key == "depth") num(c.depth);
    else if (key == "probes_per_task") num(c.probes_per_task);
    else if (key == "depths") c.depths = detail::parse_list<int>(value, key);
    else if (key == "probe_counts") c.probe_counts = detail::parse_list<int>(value, key);
    else if (key == "depth_lr" || key == "depth_learning_rate") num(c.depth_learning_rate);
    else if (key == "jobs") num(c.jobs);
    else if (key == "crosscoder.enabled") c.crosscoder.enabled = detail::parse_bool(value, key);
    else if (key == "crosscoder.expansion") num(c.crosscoder.expansion);
    else if (key == "crosscoder.k") num(c.crosscoder.k);
    else if (key == "crosscoder.lr" || key == "crosscoder.learning_rate") num(c.crosscoder.learning_rate);
    else if (key == "crosscoder.batch_size") num(c.crosscoder.batch_size);
    else if (key == "crosscoder.epochs") num(c.crosscoder.epochs);
    else if (key == "crosscoder.lambda_max") num(c.crosscoder.lambda_max);
    else if (key == "crosscoder.warmup_fraction") num(c.crosscoder.warmup_fraction);
    else if (key == "crosscoder.samples_per_task") num(c.crosscoder.samples_per_task);
    else if (key == "crosscoder.top_features") num(c.crosscoder.top_features);
    else throw ConfigError("unknown config key '" + key + "'");
  } catch (const std::invalid_argument& e) {
    throw ConfigError("'" + key + "': " + e.what());
  }
}

/// Reads an INI file. Keys in [crosscoder] map to crosscoder.*; keys in any
/// other section (or none) map to top-level fields.
inline void load_config_file(ExperimentConfig& c, const std::string& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("cannot read config '" + path + "': " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  for (const auto& [section, node] : tree) {
    if (node.empty()) {
      const std::string v = node.get_value<std::string>();
      if (!v.empty()) set_config_value(c, section, v);  // an empty [section] has no value
      continue;
    }
    for (const auto& [key, leaf] : node) {
      const std::string full = section == "crosscoder" ? "crosscoder." + key : key;
      set_config_value(c, full, leaf.get_value<std::string>());
    }
  }
}

inline void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (c.n_features < 1) fail("n_features must be >= 1");
  if (c.m_dims < 1) fail("m_dims must be >= 1");
  if (c.n_tasks < 2) fail("n_tasks must be >= 2 (forgetting needs a later task)");
  if (c.scenario == Scenario::none && c.n_features % c.n_tasks != 0)
    fail("scenario 'none' needs n_features divisible by n_tasks");
  if (c.n_samples < 1 || c.eval_samples < 1) fail("sample counts must be positive");
  if (!(c.sparsity >= 0.0 && c.sparsity < 1.0)) fail("sparsity must be in [0, 1)");
  if (c.seeds.empty()) fail("at least one seed is required");
  if (!(c.learning_rate > 0.0)) fail("lr must be positive");
  if (c.epochs < 1) fail("epochs must be >= 1");
  if (c.weight_decay < 0.0) fail("weight_decay must be nonnegative");
  if (!(c.probe_lr > 0.0)) fail("probe_lr must be positive");
  if (c.probe_init_scale < 0.0) fail("probe_init_scale must be nonnegative");
  if (c.depth < 1 || c.depth > 10) fail("depth must be in [1, 10]");
  if (c.probes_per_task < 1) fail("probes_per_task must be >= 1");
  if (c.loss == LossKind::cross_entropy && c.probes_per_task < 2)
    fail("cross_entropy loss needs probes_per_task >= 2 (one probe per class)");
  for (int d : c.depths)
    if (d < 1 || d > 10) fail("depths must lie in [1, 10]");
  for (int p : c.probe_counts)
    if (p < 1) fail("probe_counts must be >= 1");
  if (!(c.depth_learning_rate > 0.0)) fail("depth_lr must be positive");
  if (c.jobs < 0) fail("jobs must be >= 0");
  const CrosscoderSettings& x = c.crosscoder;
  if (!(x.expansion > 1.0)) fail("crosscoder.expansion must exceed 1");
  if (x.k < 1) fail("crosscoder.k must be >= 1");
  if (!(x.learning_rate > 0.0)) fail("crosscoder.lr must be positive");
  if (x.batch_size < 1 || x.epochs < 1) fail("crosscoder batch_size and epochs must be positive");
  if (x.lambda_max < 0.0) fail("crosscoder.lambda_max must be nonnegative");
  if (x.warmup_fraction < 0.0 || x.warmup_fraction > 1.0) fail("crosscoder.warmup_fraction must be in [0, 1]");
  if (x.samples_per_task < 1 || x.top_features < 1) fail("crosscoder sample and feature counts must be positive");
}

/// Canonical key = value listing, stable across runs; the config hash is
/// computed over this text.
inline std::string canonical(const ExperimentConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "scenario=" << to_string(c.scenario) << "\nn_features=" << c.n_features << "\nm_dims=" << c.m_dims
     << "\nn_tasks=" << c.n_tasks << "\nn_samples=" << c.n_samples << "\neval_samples=" << c.eval_samples
     << "\nsparsity=" << c.sparsity << "\nseeds=" << detail::join_list(c.seeds)
     << "\noptimizer=" << to_string(c.optimizer) << "\nlr=" << c.learning_rate << "\nepochs=" << c.epochs
     << "\nweight_decay=" << c.weight_decay << "\nloss=" << to_string(c.loss)
     << "\nprobe_mode=" << to_string(c.probe_mode) << "\nprobe_lr=" << c.probe_lr
     << "\nprobe_init_scale=" << c.probe_init_scale << "\nprobes_share_label=" << c.probes_share_label
     << "\ndepth=" << c.depth << "\nprobes_per_task=" << c.probes_per_task
     << "\ndepths=" << detail::join_list(c.depths) << "\nprobe_counts=" << detail::join_list(c.probe_counts)
     << "\ndepth_lr=" << c.depth_learning_rate << "\ncrosscoder.enabled=" << c.crosscoder.enabled
     << "\ncrosscoder.expansion=" << c.crosscoder.expansion << "\ncrosscoder.k=" << c.crosscoder.k
     << "\ncrosscoder.lr=" << c.crosscoder.learning_rate << "\ncrosscoder.batch_size=" << c.crosscoder.batch_size
     << "\ncrosscoder.epochs=" << c.crosscoder.epochs << "\ncrosscoder.lambda_max=" << c.crosscoder.lambda_max
     << "\ncrosscoder.warmup_fraction=" << c.crosscoder.warmup_fraction
     << "\ncrosscoder.samples_per_task=" << c.crosscoder.samples_per_task
     << "\ncrosscoder.top_features=" << c.crosscoder.top_features << "\n";
  return os.str();
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string config_hash(const ExperimentConfig& c) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << fnv1a(canonical(c));
  return os.str();
}

/// Feature-reader settings for one run of the sequence.
inline SequenceConfig sequence_config(const ExperimentConfig& c, std::uint64_t seed, int depth, int probes,
                                      double lr) {
  SequenceConfig s;
  s.scenario = c.scenario;
  s.n_features = c.n_features;
  s.m_dims = c.m_dims;
  s.n_tasks = c.n_tasks;
  s.n_samples = c.n_samples;
  s.eval_samples = c.eval_samples;
  s.sparsity = c.sparsity;
  s.depth = depth;
  s.probes_per_task = probes;
  s.probe_init_scale = c.probe_init_scale;
  s.probes_share_label = c.probes_share_label;
  s.seed = seed;
  s.train.optimizer = c.optimizer;
  s.train.learning_rate = lr;
  s.train.epochs = c.epochs;
  s.train.weight_decay = c.weight_decay;
  s.train.loss = c.loss;
  s.train.probe_mode = c.probe_mode;
  s.train.probe_lr = c.probe_lr;
  return s;
}

}  // namespace forgetlab

#endif  // FORGETLAB_CONFIG_HPP
