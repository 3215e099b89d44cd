#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "poolbreaker/attack.hpp"
#include "poolbreaker/graph.hpp"
#include "poolbreaker/metrics.hpp"
#include "poolbreaker/surrogate.hpp"
#include "poolbreaker/synthetic.hpp"
#include "poolbreaker/targets.hpp"
#include "poolbreaker/training.hpp"

namespace poolbreaker {

struct DatasetSpec {
  std::string name = "synthetic";
  // TUDataset directory; empty means `<data dir>/<name>`. Ignored for
  // synthetic datasets.
  std::string path;
  bool synthetic = true;
  SyntheticOptions synthetic_options;
};

struct ExperimentSpec {
  DatasetSpec dataset;
  std::uint64_t seed = 0;
  TrainConfig surrogate;
  TrainConfig targets;
  Budget budget;
  AttackConfig attack;
  // Attack-power points (edge-flip fractions), ascending.
  std::vector<double> sweep = {0.0, 0.01, 0.05, 0.10, 0.25};
  bool robust_train = true;
  unsigned workers = 1;
};

void validate_spec(const ExperimentSpec& spec);
nlohmann::json spec_to_json(const ExperimentSpec& spec);

// Per-stage seeds derived from the global seed by fixed offsets.
enum class Stage : std::uint64_t { dataset = 0, split = 1, surrogate = 2, sag = 3, hgpsl = 4, baseline = 5, robust = 6 };
std::uint64_t derived_seed(std::uint64_t seed, Stage stage);

// Loads (or generates) the dataset and splits it with the derived seed.
struct ExperimentContext {
  ExperimentSpec spec;
  Dataset dataset;
  Split split;
  std::vector<Graph> train, valid, test;
};

ExperimentContext prepare_experiment(const ExperimentSpec& spec, const std::filesystem::path& data_dir = {});

struct Models {
  SurrogateParams surrogate;
  TargetParams sag;
  TargetParams hgpsl;
};

struct ModelAccuracy {
  std::string model;
  double accuracy = 0.0;
  std::size_t best_epoch = 0;
  double best_valid_accuracy = 0.0;
};

struct OriginalTrainReport {
  Models models;
  std::vector<ModelAccuracy> test;  // surrogate, sag, hgpsl-lite
};

OriginalTrainReport run_original_train(const ExperimentContext& ctx);

struct SurrogateAttackReport {
  AdversarialBundle bundle;
  AdversarialBundle baseline;
  double original_accuracy = 0.0;
  double adversarial_accuracy = 0.0;
  double baseline_accuracy = 0.0;
  std::size_t flips = 0;
  std::size_t rejected_flips = 0;
};

// Attacks the test split with the spec's budget and attack config; the
// random baseline uses the same budget on the same graphs.
SurrogateAttackReport run_surrogate_attack(const ExperimentContext& ctx, const SurrogateParams& surrogate);

struct TransferRow {
  std::string target;
  TransferAccuracy accuracy;
};

std::vector<TransferRow> run_transfer(const ExperimentContext& ctx, const Models& models,
                                      const AdversarialBundle& bundle, const AdversarialBundle* baseline);

// Attack configuration for one attack-power point: the spec's targets, passes
// repeat until nothing changes, and at most ceil(power * E) edges flip.
// Power 0 leaves every graph untouched.
AttackConfig power_config(const ExperimentSpec& spec, double power, AttackMode mode);

// Attacks `graphs` (dataset indices `indices`) at one power point.
AdversarialBundle attack_at_power(const ExperimentContext& ctx, const SurrogateParams& surrogate,
                                  const std::vector<std::size_t>& indices, Partition partition, double power,
                                  AttackMode mode, const Budget& budget);

// An attack bundle tagged with the curve point that produced it.
struct NamedBundle {
  std::string name;
  AdversarialBundle bundle;
};

struct CurvePoint {
  double x = 0.0;  // attack power, percent of edges
  double y = 0.0;
  std::string series;
};

struct SweepReport {
  std::vector<CurvePoint> points;             // accuracy per model
  std::vector<CurvePoint> measured_edge_pct;  // realized flips / edges, percent
  std::vector<NamedBundle> bundles;           // "edges-<power>"
};

SweepReport run_power_sweep(const ExperimentContext& ctx, const Models& models);

// Error rates (1 - accuracy) for features-only, edges-only and combined
// attacks; series are named "<model>/<mode>".
struct FeatureEdgeReport {
  std::vector<CurvePoint> points;
  std::vector<NamedBundle> bundles;  // "<mode>-<power>"
};

// Throws ConfigError when the dataset carries only constant features.
FeatureEdgeReport run_feature_vs_edge(const ExperimentContext& ctx, const Models& models);

// Series per target: "<target>/robust-adv", "<target>/robust-mixed",
// "<target>/orig-adv", "<target>/orig-clean".
struct RobustReport {
  std::vector<CurvePoint> points;
  std::vector<NamedBundle> bundles;  // "<partition>-<power>"
};

// Power as a file-name tag: 0.05 -> "p0050" (hundredths of a percent).
std::string power_tag(double power);

RobustReport run_robust_train(const ExperimentContext& ctx, const Models& models);

bool has_constant_features(const Dataset& d);

// Serialization. Every report embeds the spec.
nlohmann::json models_to_json(const Models& m);
nlohmann::json train_report_to_json(const ExperimentSpec& spec, const OriginalTrainReport& r);
nlohmann::json attack_report_to_json(const ExperimentSpec& spec, const SurrogateAttackReport& r,
                                     const std::string& bundle_hash, const std::string& baseline_hash);
nlohmann::json transfer_report_to_json(const ExperimentSpec& spec, const std::vector<TransferRow>& rows,
                                       const std::string& bundle_hash, const std::string& baseline_hash);
nlohmann::json curve_report_to_json(const ExperimentSpec& spec, const std::string& kind,
                                    const std::vector<CurvePoint>& points);
nlohmann::json metrics_to_report_json(const ExperimentSpec& spec, const MetricReport& r);

// CSV with columns x,y,series.
std::string curve_csv(const std::vector<CurvePoint>& points);

// 64-bit FNV-1a of the file's bytes, as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

// y at (series, x); throws PreconditionError when absent.
double curve_value(const std::vector<CurvePoint>& points, const std::string& series, double x);

}  // namespace poolbreaker
