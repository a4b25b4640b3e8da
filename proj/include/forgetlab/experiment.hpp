#ifndef FORGETLAB_EXPERIMENT_HPP
#define FORGETLAB_EXPERIMENT_HPP

// Experiment runners: seeds and sweep points run as independent jobs on a
// bounded worker pool. Each job writes its own CSV; the merged and
// seed-averaged files are produced afterwards on the calling thread.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <locale>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "forgetlab/config.hpp"
#include "forgetlab/crosscoder.hpp"
#include "forgetlab/io.hpp"
#include "forgetlab/metrics.hpp"
#include "forgetlab/model.hpp"
#include "forgetlab/svg.hpp"

#ifndef FORGETLAB_VERSION
#define FORGETLAB_VERSION "0.0.0"
#endif

namespace forgetlab {

namespace fs = std::filesystem;

inline constexpr const char* kMetricsHeader = "scenario,seed,depth,probes,task_i,checkpoint_t,metric,value";
inline constexpr const char* kSummaryHeader = "scenario,depth,probes,task_i,checkpoint_t,metric,mean,std,n_seeds";
inline constexpr const char* kTracksHeader = "scenario,seed,task_i,checkpoint_t,latent,metric,value";
inline constexpr const char* kInterventionHeader = "scenario,seed,task_i,probe,accuracy";
inline constexpr const char* kOutputEnv = "FORGETLAB_OUTPUT_DIR";

inline std::string version() { return FORGETLAB_VERSION; }

/// Output root: $FORGETLAB_OUTPUT_DIR, or ./results.
inline fs::path output_root() {
  const char* env = std::getenv(kOutputEnv);
  return (env && *env) ? fs::path(env) : fs::path("results");
}

/// 9 significant digits, locale independent.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(9) << v;
  return os.str();
}

inline std::string forgetting_name(Metric m) { return "F_" + to_string(m); }

// ---------------------------------------------------------------------------
// Worker pool

inline int resolve_jobs(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs fn(0..count-1) on at most `workers` threads. The first exception is
/// rethrown after every worker has stopped.
inline void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t n_threads = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, workers)));
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < n_threads; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count || failed.load()) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          failed = true;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Jobs

struct JobSpec {
  Scenario scenario = Scenario::full;
  std::uint64_t seed = 0;
  int depth = 1;
  int probes = 1;
  double learning_rate = 0.01;

  std::string tag() const {
    return to_string(scenario) + "_d" + std::to_string(depth) + "_p" + std::to_string(probes) + "_s" +
           std::to_string(seed);
  }
};

struct JobResult {
  JobSpec spec;
  MetricSeries series{1};
  std::vector<TaskSpec> tasks;
  std::vector<Snapshot> snapshots;  // initial state, then one per task
  double seconds = 0.0;
};

inline JobResult run_job(const ExperimentConfig& cfg, const JobSpec& spec) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentConfig c = cfg;
  c.scenario = spec.scenario;
  SequenceRun run = train_sequence(sequence_config(c, spec.seed, spec.depth, spec.probes, spec.learning_rate));
  JobResult r;
  r.spec = spec;
  r.series = compute_metric_series(run.snapshots, run.tasks, run.eval_data, cfg.loss);
  r.tasks = std::move(run.tasks);
  r.snapshots = std::move(run.snapshots);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

/// One CSV row per metric value, per-task forgetting and the task-averaged
/// forgetting ("all"). Task and checkpoint indices are 1-based.
inline std::vector<std::string> metric_rows(const JobResult& r) {
  std::vector<std::string> rows;
  const std::string prefix = to_string(r.spec.scenario) + "," + std::to_string(r.spec.seed) + "," +
                             std::to_string(r.spec.depth) + "," + std::to_string(r.spec.probes) + ",";
  auto add = [&](const std::string& task, int checkpoint, const std::string& metric, double v) {
    rows.push_back(prefix + task + "," + std::to_string(checkpoint) + "," + metric + "," + format_number(v));
  };
  const int n = r.series.tasks();
  for (int t = 0; t < n; ++t) {
    for (int i = 0; i <= t; ++i) {
      for (Metric m : kAllMetrics) add(std::to_string(i + 1), t + 1, to_string(m), r.series.at(i, t).get(m));
    }
  }
  for (int t = 1; t < n; ++t) {
    for (Metric m : kAllMetrics) {
      double sum = 0.0;
      for (int i = 0; i < t; ++i) {
        const double base = r.series.at(i, i).get(m);
        const double ratio = base == 0.0 ? std::nan("") : 1.0 - r.series.at(i, t).get(m) / base;
        add(std::to_string(i + 1), t + 1, forgetting_name(m), ratio);
        sum += ratio;
      }
      add("all", t + 1, forgetting_name(m), sum / t);
    }
  }
  return rows;
}

inline void write_lines(const fs::path& path, const std::string& header, const std::vector<std::string>& rows) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  os << header << "\n";
  for (const auto& r : rows) os << r << "\n";
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

struct SummaryRow {
  std::string scenario;
  int depth = 0;
  int probes = 0;
  std::string task;
  int checkpoint = 0;
  std::string metric;
  double mean = 0.0;
  double sd = 0.0;
  int n_seeds = 0;
};

/// Mean and sample standard deviation across seeds of every
/// (scenario, depth, probes, task, checkpoint, metric) cell.
inline std::vector<SummaryRow> summarize(const std::vector<std::string>& metric_lines) {
  using Key = std::tuple<std::string, int, int, std::string, int, std::string>;
  std::map<Key, std::vector<double>> cells;
  std::vector<Key> order;
  for (const std::string& line : metric_lines) {
    const auto c = split_csv(line);
    if (c.size() != 8) throw std::runtime_error("malformed metrics row: " + line);
    Key k{c[0], std::stoi(c[2]), std::stoi(c[3]), c[4], std::stoi(c[5]), c[6]};
    auto [it, fresh] = cells.try_emplace(k);
    if (fresh) order.push_back(k);
    it->second.push_back(c[7] == "nan" ? std::nan("") : std::stod(c[7]));
  }
  std::vector<SummaryRow> out;
  for (const Key& k : order) {
    const auto& v = cells[k];
    SummaryRow s{std::get<0>(k), std::get<1>(k), std::get<2>(k), std::get<3>(k), std::get<4>(k), std::get<5>(k)};
    s.n_seeds = static_cast<int>(v.size());
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
      double ss = 0.0;
      for (double x : v) ss += (x - s.mean) * (x - s.mean);
      s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    out.push_back(s);
  }
  return out;
}

inline std::string to_csv(const SummaryRow& s) {
  return s.scenario + "," + std::to_string(s.depth) + "," + std::to_string(s.probes) + "," + s.task + "," +
         std::to_string(s.checkpoint) + "," + s.metric + "," + format_number(s.mean) + "," + format_number(s.sd) +
         "," + std::to_string(s.n_seeds);
}

inline std::vector<SummaryRow> read_summary(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::string line;
  std::getline(is, line);
  if (line != kSummaryHeader) throw std::runtime_error(path.string() + ": unexpected header");
  std::vector<SummaryRow> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != 9) throw std::runtime_error(path.string() + ": malformed row: " + line);
    SummaryRow s{c[0], std::stoi(c[1]), std::stoi(c[2]), c[3], std::stoi(c[4]), c[5],
                 c[6] == "nan" ? std::nan("") : std::stod(c[6]), c[7] == "nan" ? std::nan("") : std::stod(c[7]),
                 std::stoi(c[8])};
    out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::string config_text;
  std::vector<std::uint64_t> seeds;
  std::string code_version = version();
  std::vector<std::string> outputs;  // relative to the result directory
  std::vector<std::pair<std::string, double>> durations;
  double total_seconds = 0.0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["version"] = code_version;
    j["config_hash"] = config_hash;
    nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
    std::istringstream is(config_text);
    std::string line;
    while (std::getline(is, line)) {
      const auto eq = line.find('=');
      if (eq != std::string::npos) cfg[line.substr(0, eq)] = line.substr(eq + 1);
    }
    j["config"] = cfg;
    j["seeds"] = seeds;
    j["outputs"] = outputs;
    nlohmann::ordered_json d = nlohmann::ordered_json::object();
    for (const auto& [k, v] : durations) d[k] = v;
    j["durations_seconds"] = d;
    j["total_seconds"] = total_seconds;
    return j;
  }

  void write(const fs::path& dir) const {
    std::ofstream os(dir / "manifest.json");
    if (!os) throw std::runtime_error("cannot write manifest in '" + dir.string() + "'");
    os << to_json().dump(2) << "\n";
  }
};

inline RunManifest make_manifest(const std::string& command, const ExperimentConfig& cfg) {
  RunManifest m;
  m.command = command;
  m.config_hash = config_hash(cfg);
  m.config_text = canonical(cfg);
  m.seeds = cfg.seeds;
  return m;
}

// ---------------------------------------------------------------------------
// Snapshot sets

/// Everything the crosscoder study needs from one trained sequence.
struct SnapshotSet {
  Scenario scenario = Scenario::full;
  std::uint64_t seed = 0;
  double sparsity = 0.9;
  LossKind loss = LossKind::mse;
  std::vector<TaskSpec> tasks;
  std::vector<Snapshot> snapshots;  // initial state, then one per task
};

inline std::string snapshot_file_name(std::size_t k) {
  std::ostringstream os;
  os << "snapshot_" << std::setw(2) << std::setfill('0') << k << ".txt";
  return os.str();
}

/// Writes tasks.txt, one file per snapshot and snapshots.json into `dir`.
/// Returns the written paths relative to `base`.
inline std::vector<std::string> write_snapshot_set(const fs::path& dir, const fs::path& base, const SnapshotSet& s) {
  fs::create_directories(dir);
  std::vector<std::string> written;
  write_tasks_file((dir / "tasks.txt").string(), s.tasks);
  written.push_back(fs::relative(dir / "tasks.txt", base).generic_string());
  nlohmann::ordered_json j;
  j["scenario"] = to_string(s.scenario);
  j["seed"] = s.seed;
  j["sparsity"] = s.sparsity;
  j["loss"] = to_string(s.loss);
  j["tasks"] = "tasks.txt";
  std::vector<std::string> files;
  for (std::size_t k = 0; k < s.snapshots.size(); ++k) {
    const std::string name = snapshot_file_name(k);
    write_snapshot_file((dir / name).string(), s.snapshots[k]);
    files.push_back(name);
    written.push_back(fs::relative(dir / name, base).generic_string());
  }
  j["snapshots"] = files;
  std::ofstream os(dir / "snapshots.json");
  os << j.dump(2) << "\n";
  written.push_back(fs::relative(dir / "snapshots.json", base).generic_string());
  return written;
}

inline SnapshotSet read_snapshot_set(const fs::path& dir) {
  const fs::path index = dir / "snapshots.json";
  if (!fs::exists(index)) throw std::runtime_error("missing snapshot directory: '" + dir.string() + "'");
  std::ifstream is(index);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(index.string() + ": " + e.what());
  }
  SnapshotSet s;
  s.scenario = parse_scenario(j.at("scenario").get<std::string>());
  s.seed = j.at("seed").get<std::uint64_t>();
  s.sparsity = j.at("sparsity").get<double>();
  s.loss = parse_loss(j.at("loss").get<std::string>());
  s.tasks = read_tasks_file((dir / j.at("tasks").get<std::string>()).string());
  for (const auto& f : j.at("snapshots")) s.snapshots.push_back(read_snapshot_file((dir / f.get<std::string>()).string()));
  if (s.snapshots.size() != s.tasks.size() + 1) {
    throw std::runtime_error(dir.string() + ": expected " + std::to_string(s.tasks.size() + 1) + " snapshots");
  }
  return s;
}

/// Lists seed subdirectories written by run_scenario.
inline std::vector<fs::path> find_snapshot_sets(const fs::path& root) {
  std::vector<fs::path> out;
  if (fs::exists(root / "snapshots.json")) return {root};
  const fs::path dir = root / "snapshots";
  if (!fs::is_directory(dir)) throw std::runtime_error("missing snapshot directory under '" + root.string() + "'");
  for (const auto& e : fs::directory_iterator(dir))
    if (fs::exists(e.path() / "snapshots.json")) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw std::runtime_error("no snapshot sets under '" + dir.string() + "'");
  return out;
}

// ---------------------------------------------------------------------------
// Studies

struct StudyResult {
  fs::path directory;  // empty when nothing was written
  std::vector<JobResult> jobs;
  std::vector<SummaryRow> summary;
  RunManifest manifest;

  /// Seed-averaged forgetting of `m` at the final checkpoint, over the jobs
  /// matching (scenario, depth, probes).
  double final_forgetting(Scenario s, int depth, int probes, Metric m) const {
    double sum = 0.0;
    int count = 0;
    for (const JobResult& j : jobs) {
      if (j.spec.scenario != s || j.spec.depth != depth || j.spec.probes != probes) continue;
      sum += forgetting(j.series, m, j.series.tasks() - 1).value;
      ++count;
    }
    if (count == 0) throw std::out_of_range("final_forgetting: no matching jobs");
    return sum / count;
  }
};

struct StudyOptions {
  fs::path out_dir;  // empty: keep results in memory only
  bool save_snapshots = false;
  bool keep_snapshots = false;  // retain snapshots in StudyResult::jobs
};

inline StudyResult run_jobs(const std::string& command, const ExperimentConfig& cfg, const std::vector<JobSpec>& specs,
                            const StudyOptions& opt) {
  validate(cfg);
  const auto start = std::chrono::steady_clock::now();
  StudyResult res;
  res.directory = opt.out_dir;
  res.manifest = make_manifest(command, cfg);
  const bool write = !opt.out_dir.empty();
  if (write) fs::create_directories(opt.out_dir / "jobs");

  res.jobs.resize(specs.size());
  parallel_for(specs.size(), resolve_jobs(cfg.jobs), [&](std::size_t k) {
    JobResult r = run_job(cfg, specs[k]);
    if (write) {
      write_lines(opt.out_dir / "jobs" / (specs[k].tag() + ".csv"), kMetricsHeader, metric_rows(r));
      if (opt.save_snapshots) {
        SnapshotSet s{specs[k].scenario, specs[k].seed, cfg.sparsity, cfg.loss, r.tasks, r.snapshots};
        write_snapshot_set(opt.out_dir / "snapshots" / specs[k].tag(), opt.out_dir, s);
      }
    }
    if (!opt.keep_snapshots) r.snapshots.clear();
    res.jobs[k] = std::move(r);
  });

  std::vector<std::string> all;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    std::vector<std::string> rows;
    if (write) {
      const fs::path p = opt.out_dir / "jobs" / (specs[k].tag() + ".csv");
      std::ifstream is(p);
      std::string line;
      std::getline(is, line);
      while (std::getline(is, line))
        if (!line.empty()) rows.push_back(line);
      res.manifest.outputs.push_back(fs::relative(p, opt.out_dir).generic_string());
      if (opt.save_snapshots) {
        const fs::path sd = opt.out_dir / "snapshots" / specs[k].tag();
        for (const auto& name : {std::string("tasks.txt"), std::string("snapshots.json")})
          res.manifest.outputs.push_back(fs::relative(sd / name, opt.out_dir).generic_string());
        for (std::size_t s = 0; s <= static_cast<std::size_t>(cfg.n_tasks); ++s)
          res.manifest.outputs.push_back(fs::relative(sd / snapshot_file_name(s), opt.out_dir).generic_string());
      }
    } else {
      rows = metric_rows(res.jobs[k]);
    }
    all.insert(all.end(), rows.begin(), rows.end());
    res.manifest.durations.emplace_back(specs[k].tag(), res.jobs[k].seconds);
  }
  res.summary = summarize(all);

  if (write) {
    write_lines(opt.out_dir / "metrics.csv", kMetricsHeader, all);
    std::vector<std::string> srows;
    for (const auto& s : res.summary) srows.push_back(to_csv(s));
    write_lines(opt.out_dir / "summary.csv", kSummaryHeader, srows);
    res.manifest.outputs.push_back("metrics.csv");
    res.manifest.outputs.push_back("summary.csv");
    res.manifest.outputs.push_back("manifest.json");
  }
  res.manifest.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (write) res.manifest.write(opt.out_dir);
  return res;
}

inline StudyResult run_scenario(const ExperimentConfig& cfg, const StudyOptions& opt = {}) {
  std::vector<JobSpec> specs;
  for (auto seed : cfg.seeds) specs.push_back({cfg.scenario, seed, cfg.depth, cfg.probes_per_task, cfg.learning_rate});
  return run_jobs("scenario", cfg, specs, opt);
}

/// Every depth uses the same (smaller) learning rate.
inline StudyResult run_depth_sweep(const ExperimentConfig& cfg, const StudyOptions& opt = {}) {
  std::vector<JobSpec> specs;
  for (int d : cfg.depths)
    for (auto seed : cfg.seeds) specs.push_back({cfg.scenario, seed, d, cfg.probes_per_task, cfg.depth_learning_rate});
  return run_jobs("depth-sweep", cfg, specs, opt);
}

inline StudyResult run_probe_sweep(const ExperimentConfig& cfg, const StudyOptions& opt = {}) {
  std::vector<JobSpec> specs;
  for (int p : cfg.probe_counts)
    for (auto seed : cfg.seeds) specs.push_back({cfg.scenario, seed, cfg.depth, p, cfg.learning_rate});
  return run_jobs("probe-sweep", cfg, specs, opt);
}

// ---------------------------------------------------------------------------
// Crosscoder study

struct InterventionRow {
  int task = 0;           // 0-based
  double before = 0.0;    // own probe on the snapshot right after the task
  double original = 0.0;  // own probe on the final snapshot
  double intervened = 0.0;
  double random = 0.0;
};

struct CrosscoderStudyResult {
  Scenario scenario = Scenario::full;
  std::uint64_t seed = 0;
  CrosscoderTrainReport train;
  std::vector<std::string> track_rows;
  std::vector<InterventionRow> interventions;
  double min_tracked_frequency = 1.0;  // over every selected latent
};

inline CrosscoderConfig crosscoder_config(const ExperimentConfig& cfg, Index d_model, std::uint64_t seed) {
  CrosscoderConfig c;
  c.d_cross = std::max<Index>(1, static_cast<Index>(std::lround(cfg.crosscoder.expansion * static_cast<double>(d_model))));
  c.k = cfg.crosscoder.k;
  c.learning_rate = cfg.crosscoder.learning_rate;
  c.batch_size = cfg.crosscoder.batch_size;
  c.epochs = cfg.crosscoder.epochs;
  c.lambda_max = cfg.crosscoder.lambda_max;
  c.warmup_fraction = cfg.crosscoder.warmup_fraction;
  c.seed = seed;
  return c;
}

/// Trains one crosscoder over the post-task snapshots of a sequence on a
/// shared input pool (samples_per_task inputs drawn from every task), tracks
/// the top latents of each task across checkpoints and compares the stale,
/// intervened and random readouts on the final snapshot.
inline CrosscoderStudyResult run_crosscoder_study(const ExperimentConfig& cfg, const SnapshotSet& set,
                                                  const fs::path& out_dir = {}) {
  const int n_tasks = static_cast<int>(set.tasks.size());
  detail::require(n_tasks >= 1 && set.snapshots.size() == set.tasks.size() + 1,
                  "run_crosscoder_study: need the initial snapshot and one per task");
  const Index per_task = cfg.crosscoder.samples_per_task;
  std::vector<Dataset> pools;
  for (const TaskSpec& t : set.tasks) pools.push_back(sample_dataset(t, per_task, set.sparsity, set.seed * 2 + 7));
  Matrix inputs(per_task * n_tasks, set.tasks[0].features());
  for (int t = 0; t < n_tasks; ++t) inputs.middleRows(t * per_task, per_task) = pools[static_cast<std::size_t>(t)].features;

  ActivationDataset data;
  for (int t = 0; t < n_tasks; ++t) {
    data.snapshot_ids.push_back(t);
    data.acts.push_back(inputs * set.snapshots[static_cast<std::size_t>(t) + 1].features().transpose());
  }
  const Index d_model = data.d_model();

  CrosscoderStudyResult res;
  res.scenario = set.scenario;
  res.seed = set.seed;
  const Crosscoder cc = train_crosscoder(data, crosscoder_config(cfg, d_model, set.seed), &res.train);

  const std::string prefix = to_string(set.scenario) + "," + std::to_string(set.seed) + ",";
  const int last = n_tasks - 1;
  for (int t = 0; t < n_tasks; ++t) {
    ActivationDataset task_data;
    task_data.snapshot_ids = data.snapshot_ids;
    for (const Matrix& a : data.acts) task_data.acts.push_back(a.middleRows(t * per_task, per_task));
    const Vector labels = pools[static_cast<std::size_t>(t)].labels.col(0);

    std::vector<ReadoutVector> probes;
    for (int s = 0; s < n_tasks; ++s) {
      const ProbeBank& bank = set.snapshots[static_cast<std::size_t>(s) + 1].probes();
      probes.push_back(bank[static_cast<std::size_t>(bank.for_task(t).front())].w);
    }
    const FeatureTracks tr = track_features(cc, task_data, probes, labels);
    const std::vector<Index> top = top_features(tr, t, cfg.crosscoder.top_features);

    for (int s = t; s < n_tasks; ++s) {
      const Index slot = tr.slot(s);
      const Snapshot& snap = set.snapshots[static_cast<std::size_t>(s) + 1];
      const std::string cp = std::to_string(t + 1) + "," + std::to_string(s + 1) + ",";
      res.track_rows.push_back(prefix + cp + "model,accuracy," +
                               format_number(task_accuracy(snap, set.tasks[static_cast<std::size_t>(t)],
                                                           pools[static_cast<std::size_t>(t)], set.loss)));
      for (Index i : top) {
        const std::string l = cp + std::to_string(i) + ",";
        res.track_rows.push_back(prefix + l + "gamma," + format_number(tr.gamma[slot](i)));
        res.track_rows.push_back(prefix + l + "norm," + format_number(tr.norm[slot](i)));
        res.track_rows.push_back(prefix + l + "capacity_norm," + format_number(tr.capacity[slot](i)));
        res.track_rows.push_back(prefix + l + "beta," + format_number(tr.beta_hat(i)));
        res.track_rows.push_back(prefix + l + "frequency," + format_number(tr.frequency(i)));
        res.track_rows.push_back(prefix + l + "importance," + format_number(tr.importance[slot](i)));
      }
    }
    for (Index i : top) res.min_tracked_frequency = std::min(res.min_tracked_frequency, tr.frequency(i));

    if (t < last) {
      const InterventionProbes p =
          intervention_probe(cc, tr, top, t, last, probes[static_cast<std::size_t>(t)], set.seed * 131 + t);
      const Matrix& final_acts = task_data.acts[static_cast<std::size_t>(last)];
      InterventionRow row;
      row.task = t;
      row.before = sign_accuracy(task_data.acts[static_cast<std::size_t>(t)], p.original, labels);
      row.original = sign_accuracy(final_acts, p.original, labels);
      row.intervened = sign_accuracy(final_acts, p.intervened, labels);
      row.random = sign_accuracy(final_acts, p.random, labels);
      res.interventions.push_back(row);
    }
  }

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_lines(out_dir / "tracks.csv", kTracksHeader, res.track_rows);
    std::vector<std::string> rows;
    for (const auto& r : res.interventions) {
      const std::string p = prefix + std::to_string(r.task + 1) + ",";
      rows.push_back(p + "before," + format_number(r.before));
      rows.push_back(p + "original," + format_number(r.original));
      rows.push_back(p + "intervened," + format_number(r.intervened));
      rows.push_back(p + "random," + format_number(r.random));
    }
    write_lines(out_dir / "interventions.csv", kInterventionHeader, rows);
    std::vector<std::string> rec;
    for (std::size_t e = 0; e < res.train.reconstruction.size(); ++e)
      rec.push_back(std::to_string(e) + "," + format_number(res.train.reconstruction[e]));
    write_lines(out_dir / "reconstruction.csv", "epoch,reconstruction_mse", rec);
    write_activations((out_dir / "activations.bin").string(), data);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Report

/// Final-checkpoint task-averaged forgetting per (scenario, depth, probes),
/// and optionally one SVG chart per group under `dir/plots`. Returns the
/// written chart paths.
inline std::vector<fs::path> write_report(const fs::path& dir, std::ostream& out, bool svg) {
  const auto rows = read_summary(dir / "summary.csv");
  using Group = std::tuple<std::string, int, int>;
  std::map<Group, std::map<std::string, Series>> charts;
  std::map<Group, int> last;
  for (const auto& r : rows) {
    if (r.task != "all") continue;
    Group g{r.scenario, r.depth, r.probes};
    Series& s = charts[g][r.metric];
    s.label = r.metric;
    s.x.push_back(r.checkpoint);
    s.y.push_back(r.mean);
    last[g] = std::max(last[g], r.checkpoint);
  }
  out << std::left << std::setw(10) << "scenario" << std::setw(7) << "depth" << std::setw(8) << "probes";
  for (Metric m : kAllMetrics) out << std::setw(20) << forgetting_name(m);
  out << "\n";
  for (const auto& [g, series] : charts) {
    out << std::setw(10) << std::get<0>(g) << std::setw(7) << std::get<1>(g) << std::setw(8) << std::get<2>(g);
    for (Metric m : kAllMetrics) {
      const auto it = series.find(forgetting_name(m));
      double v = std::nan("");
      if (it != series.end() && !it->second.y.empty()) v = it->second.y.back();
      out << std::setw(20) << format_number(v);
    }
    out << "\n";
  }
  std::vector<fs::path> written;
  if (!svg) return written;
  fs::create_directories(dir / "plots");
  for (const auto& [g, series] : charts) {
    std::vector<Series> list;
    for (Metric m : kAllMetrics) {
      const auto it = series.find(forgetting_name(m));
      if (it != series.end()) list.push_back(it->second);
    }
    const std::string name = std::get<0>(g) + "_d" + std::to_string(std::get<1>(g)) + "_p" +
                             std::to_string(std::get<2>(g));
    const fs::path p = dir / "plots" / (name + ".svg");
    std::ofstream os(p);
    os << render_line_chart("forgetting: " + name, "checkpoint", "F", list);
    written.push_back(p);
  }
  return written;
}

}  // namespace forgetlab

#endif  // FORGETLAB_EXPERIMENT_HPP
