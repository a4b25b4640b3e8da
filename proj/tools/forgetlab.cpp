// forgetlab: run the synthetic forgetting studies and the analytic checks.
//
// Exit codes: 0 ok, 1 config error, 2 oracle failure, 3 runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <iomanip>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "forgetlab/config.hpp"
#include "forgetlab/experiment.hpp"
#include "forgetlab/verify.hpp"

namespace fl = forgetlab;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kConfigError = 1, kOracleFailure = 2, kRuntimeFailure = 3 };

struct KeyInfo {
  const char* key;
  const char* help;
};

// Every ExperimentConfig field; the flag is the kebab-case key.
const std::vector<KeyInfo> kKeys = {
    {"scenario", "task family: full | none"},
    {"n_features", "number of ground-truth features"},
    {"m_dims", "activation dimensions"},
    {"n_tasks", "tasks in the sequence"},
    {"n_samples", "training samples per task"},
    {"eval_samples", "evaluation samples per task"},
    {"sparsity", "probability that a feature is zero"},
    {"seeds", "comma-separated seed list"},
    {"optimizer", "adam | plain_gd"},
    {"lr", "learning rate"},
    {"epochs", "full-batch steps per task"},
    {"weight_decay", "L2 penalty on encoder weights"},
    {"loss", "mse | cross_entropy"},
    {"probe_mode", "fixed | coadapt"},
    {"probe_lr", "probe learning rate (coadapt)"},
    {"probe_init_scale", "probe init scale"},
    {"probes_share_label", "all probes of a task read the same label"},
    {"depth", "encoder depth"},
    {"probes_per_task", "probes per task"},
    {"depths", "depth-sweep values"},
    {"probe_counts", "probe-sweep values"},
    {"depth_lr", "learning rate of the depth sweep"},
    {"jobs", "worker threads (0 = all cores)"},
    {"crosscoder.enabled", "run the crosscoder study after `scenario`"},
    {"crosscoder.expansion", "dictionary size / activation dimensions"},
    {"crosscoder.k", "active latents per input"},
    {"crosscoder.lr", "crosscoder learning rate"},
    {"crosscoder.batch_size", "crosscoder batch size"},
    {"crosscoder.epochs", "crosscoder epochs"},
    {"crosscoder.lambda_max", "decoder-norm penalty after warmup"},
    {"crosscoder.warmup_fraction", "fraction of steps for the penalty warmup"},
    {"crosscoder.samples_per_task", "inputs per task for the crosscoder"},
    {"crosscoder.top_features", "tracked latents per task"},
};

std::string kebab(std::string key) {
  for (char& c : key)
    if (c == '_' || c == '.') c = '-';
  return key;
}

struct Common {
  std::string config_file;
  bool fast = false;
  bool paper = false;
  std::string out;
  std::map<std::string, std::string> values;  // key -> raw CLI value
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_file, "INI config file")->check(CLI::ExistingFile);
  cmd->add_flag("--fast", c.fast, "desk-scale profile (2000 samples, 1000 epochs, 3 seeds)");
  cmd->add_flag("--paper", c.paper, "full-size profile");
  cmd->add_option("--out", c.out, "result directory (default: $FORGETLAB_OUTPUT_DIR/<command>_<scenario>_<hash>)");
  for (const KeyInfo& k : kKeys) {
    cmd->add_option_function<std::string>(
        "--" + kebab(k.key), [&c, key = std::string(k.key)](const std::string& v) { c.values[key] = v; }, k.help);
  }
}

// defaults < profile < file < command line
fl::ExperimentConfig resolve(const Common& c) {
  if (c.fast && c.paper) throw fl::ConfigError("--fast and --paper are mutually exclusive");
  fl::ExperimentConfig cfg;
  if (c.fast) fl::apply_fast_profile(cfg);
  if (c.paper) fl::apply_paper_profile(cfg);
  if (!c.config_file.empty()) fl::load_config_file(cfg, c.config_file);
  for (const auto& [k, v] : c.values) fl::set_config_value(cfg, k, v);
  fl::validate(cfg);
  return cfg;
}

fs::path result_dir(const Common& c, const std::string& command, const fl::ExperimentConfig& cfg) {
  if (!c.out.empty()) return c.out;
  return fl::output_root() / (command + "_" + fl::to_string(cfg.scenario) + "_" + fl::config_hash(cfg).substr(0, 8));
}

void print_final(const fl::StudyResult& r) {
  std::cout << std::left << std::setw(8) << "depth" << std::setw(8) << "probes";
  for (fl::Metric m : fl::kAllMetrics) std::cout << std::setw(20) << fl::forgetting_name(m);
  std::cout << "\n";
  std::map<std::pair<int, int>, bool> seen;
  for (const auto& j : r.jobs) {
    const auto key = std::make_pair(j.spec.depth, j.spec.probes);
    if (seen[key]) continue;
    seen[key] = true;
    std::cout << std::setw(8) << j.spec.depth << std::setw(8) << j.spec.probes;
    for (fl::Metric m : fl::kAllMetrics)
      std::cout << std::setw(20) << fl::format_number(r.final_forgetting(j.spec.scenario, key.first, key.second, m));
    std::cout << "\n";
  }
  std::cout << "results: " << r.directory.string() << "\n";
}

void print_interventions(const fl::CrosscoderStudyResult& r) {
  std::cout << "seed " << r.seed << "  reconstruction " << fl::format_number(r.train.reconstruction.front()) << " -> "
            << fl::format_number(r.train.reconstruction.back()) << "  dead latents " << r.train.dead_latents << "\n";
  std::cout << "  task  before      original    intervened  random\n";
  for (const auto& row : r.interventions) {
    std::cout << "  " << std::setw(6) << row.task + 1 << std::setw(12) << fl::format_number(row.before)
              << std::setw(12) << fl::format_number(row.original) << std::setw(12)
              << fl::format_number(row.intervened) << std::setw(12) << fl::format_number(row.random) << "\n";
  }
}

int crosscoder_on_sets(const fl::ExperimentConfig& cfg, const std::vector<fl::SnapshotSet>& sets, const fs::path& dir,
                       const std::string& command) {
  fl::RunManifest manifest = fl::make_manifest(command, cfg);
  manifest.seeds.clear();
  const auto start = std::chrono::steady_clock::now();
  for (const auto& s : sets) {
    const std::string tag = fl::to_string(s.scenario) + "_s" + std::to_string(s.seed);
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = fl::run_crosscoder_study(cfg, s, dir / tag);
    manifest.seeds.push_back(s.seed);
    manifest.durations.emplace_back(tag, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    for (const char* f : {"tracks.csv", "interventions.csv", "reconstruction.csv", "activations.bin"})
      manifest.outputs.push_back(tag + "/" + f);
    print_interventions(r);
  }
  manifest.outputs.push_back("manifest.json");
  manifest.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  manifest.write(dir);
  std::cout << "results: " << dir.string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"forgetlab: feature-level catastrophic forgetting experiments"};
  app.set_version_flag("--version", fl::version());
  app.require_subcommand(1);

  Common scen, depth, probe, cross, orc;
  auto* c_scen = app.add_subcommand("scenario", "train every seed of one scenario and write forgetting metrics");
  add_common(c_scen, scen);
  auto* c_depth = app.add_subcommand("depth-sweep", "forgetting across encoder depths");
  add_common(c_depth, depth);
  auto* c_probe = app.add_subcommand("probe-sweep", "forgetting across probe counts");
  add_common(c_probe, probe);

  auto* c_cross = app.add_subcommand("crosscoder", "crosscoder feature tracking and probe intervention");
  add_common(c_cross, cross);
  std::string cross_input;
  c_cross->add_option("--input", cross_input, "output of `scenario` (default: train a fresh sequence)");

  auto* c_orc = app.add_subcommand("oracle", "check every closed-form result against brute force");
  add_common(c_orc, orc);
  std::uint64_t oracle_seed = 0;
  int instances = 100;
  c_orc->add_option("--seed", oracle_seed, "instance seed");
  c_orc->add_option("--instances", instances, "instances per check")->check(CLI::PositiveNumber);

  auto* c_report = app.add_subcommand("report", "summarize a result directory");
  std::string report_input;
  bool svg = false;
  c_report->add_option("--input", report_input, "result directory containing summary.csv")->required();
  c_report->add_flag("--svg", svg, "also write line charts to <input>/plots");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  try {
    if (c_scen->parsed() || c_depth->parsed() || c_probe->parsed()) {
      const bool is_scen = c_scen->parsed();
      const Common& opts = is_scen ? scen : (c_depth->parsed() ? depth : probe);
      const std::string command = is_scen ? "scenario" : (c_depth->parsed() ? "depth-sweep" : "probe-sweep");
      const fl::ExperimentConfig cfg = resolve(opts);
      fl::StudyOptions so;
      so.out_dir = result_dir(opts, command, cfg);
      so.save_snapshots = is_scen;
      so.keep_snapshots = is_scen && cfg.crosscoder.enabled;
      const fl::StudyResult r = is_scen ? fl::run_scenario(cfg, so)
                                : c_depth->parsed() ? fl::run_depth_sweep(cfg, so)
                                                    : fl::run_probe_sweep(cfg, so);
      print_final(r);
      if (is_scen && cfg.crosscoder.enabled) {
        std::vector<fl::SnapshotSet> sets;
        for (const auto& j : r.jobs) sets.push_back({j.spec.scenario, j.spec.seed, cfg.sparsity, cfg.loss, j.tasks, j.snapshots});
        return crosscoder_on_sets(cfg, sets, so.out_dir / "crosscoder", "scenario");
      }
      return kOk;
    }

    if (c_cross->parsed()) {
      const fl::ExperimentConfig cfg = resolve(cross);
      const fs::path dir = result_dir(cross, "crosscoder", cfg);
      std::vector<fl::SnapshotSet> sets;
      if (!cross_input.empty()) {
        for (const auto& p : fl::find_snapshot_sets(cross_input)) sets.push_back(fl::read_snapshot_set(p));
      } else {
        fl::StudyOptions so;
        so.keep_snapshots = true;
        const fl::StudyResult r = fl::run_scenario(cfg, so);
        for (const auto& j : r.jobs) sets.push_back({j.spec.scenario, j.spec.seed, cfg.sparsity, cfg.loss, j.tasks, j.snapshots});
      }
      return crosscoder_on_sets(cfg, sets, dir, "crosscoder");
    }

    if (c_orc->parsed()) {
      const fl::ExperimentConfig cfg = resolve(orc);
      const fl::OracleReport rep = fl::run_oracle_suite(oracle_seed, instances);
      const fs::path dir = result_dir(orc, "oracle", cfg);
      fs::create_directories(dir);
      std::vector<std::string> rows;
      for (const auto& c : rep.checks) {
        std::cout << (c.ok ? "ok    " : "FAIL  ") << std::left << std::setw(60) << c.name << c.passed << "/"
                  << c.instances << "  max error " << fl::format_number(c.max_error) << " (threshold "
                  << fl::format_number(c.threshold) << ")  " << c.note << "\n";
        rows.push_back("\"" + c.name + "\"," + std::to_string(c.instances) + "," + std::to_string(c.passed) + "," +
                       fl::format_number(c.max_error) + "," + fl::format_number(c.threshold) + "," +
                       (c.ok ? "1" : "0"));
      }
      fl::write_lines(dir / "oracle.csv", "check,instances,passed,max_error,threshold,ok", rows);
      fl::RunManifest m = fl::make_manifest("oracle", cfg);
      m.seeds = {oracle_seed};
      m.outputs = {"oracle.csv", "manifest.json"};
      for (const auto& c : rep.checks) {
        m.durations.emplace_back(c.name, c.seconds);
        m.total_seconds += c.seconds;
      }
      m.write(dir);
      return rep.ok() ? kOk : kOracleFailure;
    }

    if (c_report->parsed()) {
      for (const auto& p : fl::write_report(report_input, std::cout, svg)) std::cout << "wrote " << p.string() << "\n";
      return kOk;
    }
  } catch (const fl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return kOk;
}
