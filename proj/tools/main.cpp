// poolbreaker command-line entry point.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "poolbreaker/config.hpp"
#include "poolbreaker/errors.hpp"
#include "poolbreaker/experiments.hpp"
#include "poolbreaker/metrics.hpp"
#include "poolbreaker/parallel.hpp"
#include "poolbreaker/selftest.hpp"

namespace fs = std::filesystem;
using namespace poolbreaker;
using nlohmann::json;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string data_dir, out_dir = "out", checkpoint_dir;
  std::optional<unsigned> workers;
  std::optional<double> budget_edit, budget_deltacon, budget_feat, epsilon, target_frac;
  std::optional<std::string> mode, passes;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "Config file (TOML subset)");
  cmd->add_option("--seed", o.seed, "Global seed");
  cmd->add_option("--data-dir", o.data_dir, "TUDataset root (default: $POOLBREAKER_DATA)");
  cmd->add_option("--out-dir", o.out_dir, "Report and bundle directory");
  cmd->add_option("--checkpoint-dir", o.checkpoint_dir, "Checkpoint directory (default: <out-dir>/checkpoints)");
  cmd->add_option("--workers", o.workers, "Worker threads (default: available parallelism)");
  cmd->add_option("--budget-edit", o.budget_edit, "Edit-distance ratio limit");
  cmd->add_option("--budget-deltacon", o.budget_deltacon, "DeltaCon0 distance limit");
  cmd->add_option("--budget-feat", o.budget_feat, "Feature L1 limit");
  cmd->add_option("--epsilon", o.epsilon, "DeltaCon0 attenuation");
  cmd->add_option("--target-frac", o.target_frac, "Fraction of nodes to attack");
  cmd->add_option("--mode", o.mode, "edges, features or combined");
  cmd->add_option("--passes", o.passes, "single or multi");
}

struct Run {
  ExperimentSpec spec;
  fs::path data_dir, out_dir, checkpoint_dir;
};

Run resolve(const Options& o) {
  Run r;
  r.spec.workers = default_workers();
  if (!o.config.empty()) apply_config(load_config(o.config), r.spec);
  if (o.seed) r.spec.seed = *o.seed;
  if (o.workers) {
    if (*o.workers == 0) throw ConfigError("workers", "must be positive");
    r.spec.workers = *o.workers;
  }
  if (o.budget_edit) r.spec.budget.edit_ratio_max = *o.budget_edit;
  if (o.budget_deltacon) r.spec.budget.deltacon_max = *o.budget_deltacon;
  if (o.budget_feat) r.spec.budget.feature_l1_max = *o.budget_feat;
  if (o.epsilon) r.spec.budget.epsilon = *o.epsilon;
  if (o.target_frac) r.spec.attack.target_node_fraction = *o.target_frac;
  if (o.mode) r.spec.attack.mode = attack_mode_from_string(*o.mode);
  if (o.passes) {
    if (*o.passes != "single" && *o.passes != "multi") throw ConfigError("attack.passes", "expected single or multi");
    r.spec.attack.multi_pass = *o.passes == "multi";
  }
  validate_spec(r.spec);

  if (!o.data_dir.empty()) {
    r.data_dir = o.data_dir;
  } else if (const char* env = std::getenv("POOLBREAKER_DATA")) {
    r.data_dir = env;
  } else {
    r.data_dir = "data";
  }
  if (!r.spec.dataset.synthetic && !fs::is_directory(r.data_dir) && r.spec.dataset.path.empty())
    throw ConfigError("data_dir", "not a directory: " + r.data_dir.string());
  r.out_dir = o.out_dir;
  r.checkpoint_dir = o.checkpoint_dir.empty() ? r.out_dir / "checkpoints" : fs::path(o.checkpoint_dir);
  std::error_code ec;
  fs::create_directories(r.out_dir, ec);
  if (ec) throw ConfigError("out_dir", "cannot create " + r.out_dir.string());
  fs::create_directories(r.checkpoint_dir, ec);
  if (ec) throw ConfigError("checkpoint_dir", "cannot create " + r.checkpoint_dir.string());
  return r;
}

void wrote(const fs::path& p) { std::cout << "WROTE " << p.string() << std::endl; }

void write_json(const json& j, const fs::path& p) {
  save_json(j, p);
  wrote(p);
}

void write_text(const std::string& text, const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("io", "cannot write " + p.string());
  out << text;
  out.close();
  wrote(p);
}

Models load_models(const Run& r) {
  Models m;
  m.surrogate = surrogate_from_json(load_json(r.checkpoint_dir / "surrogate.json"));
  m.sag = target_from_json(load_json(r.checkpoint_dir / "target-sag.json"));
  m.hgpsl = target_from_json(load_json(r.checkpoint_dir / "target-hgpsl-lite.json"));
  return m;
}

void write_curves(const Run& r, const std::string& kind, const std::vector<CurvePoint>& points,
                  const std::vector<NamedBundle>& bundles) {
  json report = curve_report_to_json(r.spec, kind, points);
  json hashes = json::object();
  for (const auto& nb : bundles) {
    const fs::path p = r.out_dir / ("bundle-" + kind + "-" + nb.name + ".json");
    write_bundle(nb.bundle, p);
    wrote(p);
    hashes[nb.name] = file_hash(p);
  }
  report["bundleHashes"] = hashes;
  write_json(report, r.out_dir / (kind + "-report.json"));
  std::vector<std::string> names;
  for (const auto& p : points)
    if (std::find(names.begin(), names.end(), p.series) == names.end()) names.push_back(p.series);
  for (const auto& name : names) {
    std::vector<CurvePoint> one;
    for (const auto& p : points)
      if (p.series == name) one.push_back(p);
    std::string file = kind + "-" + name + ".csv";
    std::replace(file.begin(), file.end(), '/', '_');
    write_text(curve_csv(one), r.out_dir / file);
  }
}

// Bundles are read back from the files the attack stage wrote; their hashes
// must match the ones recorded in the attack report.
std::pair<AdversarialBundle, AdversarialBundle> load_bundles(const Run& r, std::string& hash, std::string& base_hash) {
  const json report = load_json(r.out_dir / "attack-report.json");
  const fs::path bundle_path = r.out_dir / "bundle-test.json";
  const fs::path baseline_path = r.out_dir / "bundle-baseline.json";
  hash = file_hash(bundle_path);
  base_hash = file_hash(baseline_path);
  if (hash != report.at("bundleHash").get<std::string>() || base_hash != report.at("baselineHash").get<std::string>())
    throw DeserializationError("bundle files do not match the hashes recorded by the attack stage");
  return {read_bundle(bundle_path), read_bundle(baseline_path)};
}

int cmd_train(const Run& r) {
  const ExperimentContext ctx = prepare_experiment(r.spec, r.data_dir);
  const OriginalTrainReport rep = run_original_train(ctx);
  write_json(surrogate_to_json(rep.models.surrogate), r.checkpoint_dir / "surrogate.json");
  write_json(target_to_json(rep.models.sag), r.checkpoint_dir / "target-sag.json");
  write_json(target_to_json(rep.models.hgpsl), r.checkpoint_dir / "target-hgpsl-lite.json");
  write_json(train_report_to_json(r.spec, rep), r.out_dir / "train-report.json");
  for (const auto& a : rep.test) std::printf("%s test accuracy %.4f\n", a.model.c_str(), a.accuracy);
  return 0;
}

int cmd_attack(const Run& r) {
  const ExperimentContext ctx = prepare_experiment(r.spec, r.data_dir);
  const SurrogateParams surrogate = surrogate_from_json(load_json(r.checkpoint_dir / "surrogate.json"));
  const SurrogateAttackReport rep = run_surrogate_attack(ctx, surrogate);
  const fs::path bundle_path = r.out_dir / "bundle-test.json";
  const fs::path baseline_path = r.out_dir / "bundle-baseline.json";
  write_bundle(rep.bundle, bundle_path);
  wrote(bundle_path);
  write_bundle(rep.baseline, baseline_path);
  wrote(baseline_path);
  write_json(attack_report_to_json(r.spec, rep, file_hash(bundle_path), file_hash(baseline_path)),
             r.out_dir / "attack-report.json");
  std::printf("surrogate accuracy %.4f -> %.4f (random baseline %.4f)\n", rep.original_accuracy,
              rep.adversarial_accuracy, rep.baseline_accuracy);
  return 0;
}

int cmd_transfer(const Run& r) {
  const ExperimentContext ctx = prepare_experiment(r.spec, r.data_dir);
  const Models m = load_models(r);
  std::string hash, base_hash;
  const auto [bundle, baseline] = load_bundles(r, hash, base_hash);
  const auto rows = run_transfer(ctx, m, bundle, &baseline);
  write_json(transfer_report_to_json(r.spec, rows, hash, base_hash), r.out_dir / "transfer-report.json");
  for (const auto& row : rows)
    std::printf("%s original %.4f attack %.4f baseline %.4f\n", row.target.c_str(), row.accuracy.original,
                row.accuracy.adversarial, row.accuracy.baseline.value_or(0.0));
  return 0;
}

int cmd_sweep(const Run& r) {
  const ExperimentContext ctx = prepare_experiment(r.spec, r.data_dir);
  const SweepReport rep = run_power_sweep(ctx, load_models(r));
  auto points = rep.points;
  points.insert(points.end(), rep.measured_edge_pct.begin(), rep.measured_edge_pct.end());
  write_curves(r, "sweep", points, rep.bundles);
  return 0;
}

int cmd_featedge(const Run& r) {
  const ExperimentContext ctx = prepare_experiment(r.spec, r.data_dir);
  const FeatureEdgeReport rep = run_feature_vs_edge(ctx, load_models(r));
  write_curves(r, "featedge", rep.points, rep.bundles);
  return 0;
}

int cmd_robust(const Run& r) {
  if (!r.spec.robust_train) throw ConfigError("robust.enabled", "robust training is disabled in this config");
  const ExperimentContext ctx = prepare_experiment(r.spec, r.data_dir);
  const RobustReport rep = run_robust_train(ctx, load_models(r));
  write_curves(r, "robust", rep.points, rep.bundles);
  return 0;
}

int cmd_metrics(const Run& r) {
  const ExperimentContext ctx = prepare_experiment(r.spec, r.data_dir);
  std::string hash, base_hash;
  const auto [bundle, baseline] = load_bundles(r, hash, base_hash);
  verify_bundle_replay(bundle, ctx.dataset);
  const MetricReport rep = metric_report(ctx.dataset, bundle, r.spec.workers);
  write_json(metrics_to_report_json(r.spec, rep), r.out_dir / "metrics-report.json");
  write_text(metric_report_csv(rep), r.out_dir / "metrics.csv");
  std::printf("mean KL %.4e, GRC p %.4f, CL p %.4f\n", rep.mean_kl, rep.grc.p, rep.modularity.p);
  return 0;
}

int cmd_selftest(std::uint64_t seed) {
  bool ok = true;
  for (const auto& line : run_selftest(seed)) {
    std::printf("%s %s %s\n", line.passed ? "PASS" : "FAIL", line.name.c_str(), line.detail.c_str());
    ok = ok && line.passed;
  }
  return ok ? 0 : kExitFailure;
}

void error_line(const std::string& kind, const std::string& message, const std::string& field = "") {
  json j = {{"kind", kind}, {"message", message}};
  if (!field.empty()) j["field"] = field;
  std::cerr << "ERROR " << j.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial attacks on hierarchical graph pooling classifiers", "poolbreaker"};
  app.require_subcommand(1);
  Options o;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"train", "Train the surrogate and both target models"},
      {"attack", "Attack the test split through the surrogate"},
      {"transfer", "Evaluate the attack bundles on the target models"},
      {"sweep", "Accuracy versus attack power"},
      {"featedge", "Feature, edge and combined attacks versus attack power"},
      {"robust", "Retrain targets on original plus adversarial data"},
      {"metrics", "Structural metrics of the attack bundle"},
      {"selftest", "Gradient checks and metric fixtures"}};
  for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help), o);

  if (argc > 1 && argv[1][0] != '-') {
    const std::string first = argv[1];
    bool known = false;
    for (const auto& c : commands) known = known || c.first == first;
    if (!known) {
      std::cerr << app.help();
      error_line("usage", "unknown subcommand '" + first + "'");
      return kExitUsage;
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help();
    error_line("usage", e.what());
    return kExitUsage;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "selftest") return cmd_selftest(o.seed.value_or(0));
    const Run r = resolve(o);
    if (name == "train") return cmd_train(r);
    if (name == "attack") return cmd_attack(r);
    if (name == "transfer") return cmd_transfer(r);
    if (name == "sweep") return cmd_sweep(r);
    if (name == "featedge") return cmd_featedge(r);
    if (name == "robust") return cmd_robust(r);
    if (name == "metrics") return cmd_metrics(r);
  } catch (const ConfigError& e) {
    error_line("config", e.what(), e.field());
    return kExitConfig;
  } catch (const Error& e) {
    error_line(e.kind(), e.what());
    return kExitFailure;
  } catch (const std::exception& e) {
    error_line("internal", e.what());
    return kExitFailure;
  }
  return kExitUsage;
}
