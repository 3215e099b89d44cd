#include "poolbreaker/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "poolbreaker/errors.hpp"
#include "poolbreaker/parallel.hpp"

namespace poolbreaker {

using nlohmann::json;

namespace {

void check_train_config(const TrainConfig& c, const std::string& prefix, bool target) {
  if (c.epochs == 0) throw ConfigError(prefix + ".epochs", "must be positive");
  if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate))
    throw ConfigError(prefix + ".lr", "must be a positive finite number");
  if (c.hidden_f == 0) throw ConfigError(prefix + ".hidden", "must be positive");
  if (c.hidden2 == 0) throw ConfigError(prefix + ".hidden2", "must be positive");
  if (!(c.pool_ratio > 0.0 && c.pool_ratio <= 1.0)) throw ConfigError(prefix + ".pool_ratio", "must lie in (0, 1]");
  if (target && c.levels < 2) throw ConfigError(prefix + ".levels", "must be at least 2");
}

json train_config_json(const TrainConfig& c, bool target) {
  json j = {{"epochs", c.epochs},
            {"lr", c.learning_rate},
            {"hidden", c.hidden_f},
            {"hidden2", c.hidden2},
            {"poolRatio", c.pool_ratio},
            {"patience", c.patience}};
  if (target)
    j["levels"] = c.levels;
  else
    j["relu"] = c.relu_between_linear;
  return j;
}

TrainConfig stage_config(const ExperimentContext& ctx, const TrainConfig& base, Stage stage) {
  TrainConfig c = base;
  c.seed = derived_seed(ctx.spec.seed, stage);
  c.workers = ctx.spec.workers;
  return c;
}

BundleSample untouched(const Graph& g, std::size_t index) {
  BundleSample s;
  s.index = index;
  s.perturbed = g;
  return s;
}

BundleSample to_sample(std::size_t index, AttackResult&& r, const Graph& original, const Budget& budget) {
  // Re-measure from the raw graphs rather than trusting the attack's counters.
  const BudgetUsage usage = measure_budget(original, r.perturbed, budget);
  if (!within_budget(usage, budget))
    throw NumericError("attack on graph " + std::to_string(index) + " exceeded its budget");
  BundleSample s;
  s.index = index;
  s.perturbed = std::move(r.perturbed);
  s.edits = std::move(r.edits);
  s.budgets = usage;
  return s;
}

std::vector<Graph> perturbed_graphs(const AdversarialBundle& b) {
  std::vector<Graph> out;
  out.reserve(b.samples.size());
  for (const auto& s : b.samples) out.push_back(s.perturbed);
  return out;
}

std::size_t edge_flips(const AdversarialBundle& b) {
  std::size_t n = 0;
  for (const auto& s : b.samples)
    for (const auto& e : s.edits) n += e.kind == EditKind::feature_update ? 0 : 1;
  return n;
}

struct ModelView {
  std::string name;
  std::function<double(const std::vector<Graph>&)> accuracy;
};

std::vector<ModelView> model_views(const Models& m, unsigned workers) {
  return {{"surrogate", [&m, workers](const std::vector<Graph>& g) { return evaluate(m.surrogate, g, workers); }},
          {to_string(TargetKind::sag), [&m, workers](const std::vector<Graph>& g) { return target_evaluate(m.sag, g, workers); }},
          {to_string(TargetKind::hgpsl_lite),
           [&m, workers](const std::vector<Graph>& g) { return target_evaluate(m.hgpsl, g, workers); }}};
}

}  // namespace

void validate_spec(const ExperimentSpec& spec) {
  validate_budget(spec.budget);
  validate_attack_config(spec.attack);
  check_train_config(spec.surrogate, "surrogate", false);
  check_train_config(spec.targets, "targets", true);
  if (spec.dataset.name.empty()) throw ConfigError("dataset.name", "must not be empty");
  for (std::size_t i = 0; i < spec.sweep.size(); ++i) {
    const double p = spec.sweep[i];
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("sweep.points", "each point must lie in [0, 1]");
    if (i > 0 && !(p > spec.sweep[i - 1])) throw ConfigError("sweep.points", "points must be strictly ascending");
  }
  if (spec.workers == 0) throw ConfigError("workers", "must be positive");
}

json spec_to_json(const ExperimentSpec& spec) {
  json dataset = {{"name", spec.dataset.name}, {"path", spec.dataset.path}, {"synthetic", spec.dataset.synthetic}};
  if (spec.dataset.synthetic) {
    const SyntheticOptions& o = spec.dataset.synthetic_options;
    dataset["options"] = {{"graphs", o.graphs},
                          {"minNodes", o.min_nodes},
                          {"maxNodes", o.max_nodes},
                          {"attributed", o.attributed},
                          {"featureDim", o.feature_dim},
                          {"featureSignal", o.feature_signal},
                          {"featureNoise", o.feature_noise},
                          {"extraEdgeProb", o.extra_edge_prob},
                          {"degreeFeature", o.degree_feature},
                          {"degreeScale", o.degree_scale}};
  }
  // Workers are deliberately absent: results do not depend on them.
  return {{"dataset", dataset},
          {"seed", spec.seed},
          {"surrogate", train_config_json(spec.surrogate, false)},
          {"targets", train_config_json(spec.targets, true)},
          {"budget",
           {{"edit", spec.budget.edit_ratio_max},
            {"deltacon", spec.budget.deltacon_max},
            {"feat", spec.budget.feature_l1_max},
            {"epsilon", spec.budget.epsilon},
            {"strictLiteral", spec.budget.deltacon_strict_literal}}},
          {"attack",
           {{"mode", to_string(spec.attack.mode)},
            {"targetFrac", spec.attack.target_node_fraction},
            {"maxEdgeFlipFrac", spec.attack.max_edge_flip_fraction},
            {"featureStepScale", spec.attack.feature_step_scale},
            {"passes", spec.attack.multi_pass ? "multi" : "single"}}},
          {"sweep", spec.sweep},
          {"robustTrain", spec.robust_train}};
}

std::uint64_t derived_seed(std::uint64_t seed, Stage stage) { return seed + static_cast<std::uint64_t>(stage); }

std::string power_tag(double power) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "p%04lld", static_cast<long long>(std::llround(power * 10000.0)));
  return buf;
}

bool has_constant_features(const Dataset& d) {
  for (std::size_t c = 0; c < d.feature_dim; ++c) {
    bool first = true;
    double value = 0.0;
    for (const auto& g : d.graphs)
      for (std::size_t i = 0; i < g.node_count(); ++i) {
        if (first) {
          value = g.features(i, c);
          first = false;
        } else if (g.features(i, c) != value) {
          return false;
        }
      }
  }
  return true;
}

ExperimentContext prepare_experiment(const ExperimentSpec& spec, const std::filesystem::path& data_dir) {
  validate_spec(spec);
  ExperimentContext ctx;
  ctx.spec = spec;
  if (spec.dataset.synthetic) {
    SyntheticOptions o = spec.dataset.synthetic_options;
    o.seed = derived_seed(spec.seed, Stage::dataset);
    ctx.dataset = make_synthetic(o);
    ctx.dataset.name = spec.dataset.name;
  } else {
    std::filesystem::path dir = spec.dataset.path.empty() ? data_dir / spec.dataset.name
                                                          : std::filesystem::path(spec.dataset.path);
    if (dir.is_relative() && !spec.dataset.path.empty() && !data_dir.empty()) dir = data_dir / dir;
    ctx.dataset = parse_tudataset(dir, spec.dataset.name);
  }
  ctx.split = split_dataset(ctx.dataset, derived_seed(spec.seed, Stage::split));
  ctx.train = select_graphs(ctx.dataset, ctx.split.train);
  ctx.valid = select_graphs(ctx.dataset, ctx.split.valid);
  ctx.test = select_graphs(ctx.dataset, ctx.split.test);
  return ctx;
}

OriginalTrainReport run_original_train(const ExperimentContext& ctx) {
  const std::size_t d = ctx.dataset.feature_dim;
  const std::size_t k = ctx.dataset.class_count;
  OriginalTrainReport r;
  TrainHistory h;
  r.models.surrogate =
      train_surrogate(ctx.train, ctx.valid, d, k, stage_config(ctx, ctx.spec.surrogate, Stage::surrogate), &h);
  r.test.push_back({"surrogate", evaluate(r.models.surrogate, ctx.test, ctx.spec.workers), h.best_epoch,
                    h.best_valid_accuracy});
  r.models.sag = target_train(TargetKind::sag, ctx.train, ctx.valid, d, k,
                              stage_config(ctx, ctx.spec.targets, Stage::sag), &h);
  r.test.push_back({to_string(TargetKind::sag), target_evaluate(r.models.sag, ctx.test, ctx.spec.workers),
                    h.best_epoch, h.best_valid_accuracy});
  r.models.hgpsl = target_train(TargetKind::hgpsl_lite, ctx.train, ctx.valid, d, k,
                                stage_config(ctx, ctx.spec.targets, Stage::hgpsl), &h);
  r.test.push_back({to_string(TargetKind::hgpsl_lite), target_evaluate(r.models.hgpsl, ctx.test, ctx.spec.workers),
                    h.best_epoch, h.best_valid_accuracy});
  return r;
}

SurrogateAttackReport run_surrogate_attack(const ExperimentContext& ctx, const SurrogateParams& surrogate) {
  const auto& idx = ctx.split.test;
  const Budget& budget = ctx.spec.budget;
  const std::uint64_t base_seed = derived_seed(ctx.spec.seed, Stage::baseline);
  struct Pair {
    BundleSample gradient, baseline;
    std::size_t flips = 0, rejected = 0;
  };
  auto pairs = parallel_map(idx.size(), ctx.spec.workers, [&](std::size_t s) {
    const Graph& g = ctx.test[s];
    Pair p;
    AttackResult r = generate_adversarial(surrogate, g, budget, ctx.spec.attack);
    p.flips = r.flips.size();
    p.rejected = r.rejected_flips;
    p.gradient = to_sample(idx[s], std::move(r), g, budget);
    p.baseline = to_sample(idx[s], random_baseline_attack(g, budget, ctx.spec.attack, base_seed + idx[s]), g, budget);
    return p;
  });
  SurrogateAttackReport out;
  out.bundle.dataset = out.baseline.dataset = ctx.dataset.name;
  out.bundle.split = out.baseline.split = Partition::test;
  for (auto& p : pairs) {
    out.bundle.samples.push_back(std::move(p.gradient));
    out.baseline.samples.push_back(std::move(p.baseline));
    out.flips += p.flips;
    out.rejected_flips += p.rejected;
  }
  out.original_accuracy = evaluate(surrogate, ctx.test, ctx.spec.workers);
  out.adversarial_accuracy = evaluate(surrogate, perturbed_graphs(out.bundle), ctx.spec.workers);
  out.baseline_accuracy = evaluate(surrogate, perturbed_graphs(out.baseline), ctx.spec.workers);
  return out;
}

std::vector<TransferRow> run_transfer(const ExperimentContext& ctx, const Models& models,
                                      const AdversarialBundle& bundle, const AdversarialBundle* baseline) {
  verify_bundle_replay(bundle, ctx.dataset);
  if (baseline) verify_bundle_replay(*baseline, ctx.dataset);
  return {{to_string(TargetKind::sag), transfer_evaluate(models.sag, bundle, ctx.dataset, baseline, ctx.spec.workers)},
          {to_string(TargetKind::hgpsl_lite),
           transfer_evaluate(models.hgpsl, bundle, ctx.dataset, baseline, ctx.spec.workers)}};
}

AttackConfig power_config(const ExperimentSpec& spec, double power, AttackMode mode) {
  AttackConfig c = spec.attack;
  c.mode = mode;
  c.multi_pass = true;
  c.max_edge_flip_fraction = power;
  return c;
}

AdversarialBundle attack_at_power(const ExperimentContext& ctx, const SurrogateParams& surrogate,
                                  const std::vector<std::size_t>& indices, Partition partition, double power,
                                  AttackMode mode, const Budget& budget) {
  const AttackConfig config = power_config(ctx.spec, power, mode);
  AdversarialBundle b;
  b.dataset = ctx.dataset.name;
  b.split = partition;
  b.samples = parallel_map(indices.size(), ctx.spec.workers, [&](std::size_t s) {
    const Graph& g = ctx.dataset.graphs[indices[s]];
    if (power <= 0.0) return untouched(g, indices[s]);
    return to_sample(indices[s], generate_adversarial(surrogate, g, budget, config), g, budget);
  });
  return b;
}

SweepReport run_power_sweep(const ExperimentContext& ctx, const Models& models) {
  SweepReport r;
  const auto views = model_views(models, ctx.spec.workers);
  std::size_t edges = 0;
  for (const auto& g : ctx.test) edges += g.edge_count();
  for (double p : ctx.spec.sweep) {
    const AdversarialBundle b =
        attack_at_power(ctx, models.surrogate, ctx.split.test, Partition::test, p, AttackMode::edges_only, ctx.spec.budget);
    const auto graphs = perturbed_graphs(b);
    for (const auto& v : views) r.points.push_back({100.0 * p, v.accuracy(graphs), v.name});
    const double pct = edges == 0 ? 0.0 : 100.0 * static_cast<double>(edge_flips(b)) / static_cast<double>(edges);
    r.measured_edge_pct.push_back({100.0 * p, pct, "measured-edge-pct"});
    r.bundles.push_back({"edges-" + power_tag(p), b});
  }
  return r;
}

FeatureEdgeReport run_feature_vs_edge(const ExperimentContext& ctx, const Models& models) {
  if (has_constant_features(ctx.dataset))
    throw ConfigError("dataset", "features-only attack needs non-constant node features");
  FeatureEdgeReport r;
  const auto views = model_views(models, ctx.spec.workers);
  for (double p : ctx.spec.sweep) {
    for (AttackMode mode : {AttackMode::features_only, AttackMode::edges_only, AttackMode::combined}) {
      const AdversarialBundle b =
          attack_at_power(ctx, models.surrogate, ctx.split.test, Partition::test, p, mode, ctx.spec.budget);
      const auto graphs = perturbed_graphs(b);
      for (const auto& v : views) r.points.push_back({100.0 * p, 1.0 - v.accuracy(graphs), v.name + "/" + to_string(mode)});
      r.bundles.push_back({to_string(mode) + "-" + power_tag(p), b});
    }
  }
  return r;
}

RobustReport run_robust_train(const ExperimentContext& ctx, const Models& models) {
  RobustReport r;
  const std::size_t d = ctx.dataset.feature_dim;
  const std::size_t k = ctx.dataset.class_count;
  const unsigned w = ctx.spec.workers;
  for (double p : ctx.spec.sweep) {
    auto attack = [&](const std::vector<std::size_t>& idx, Partition part) {
      AdversarialBundle b = attack_at_power(ctx, models.surrogate, idx, part, p, AttackMode::edges_only, ctx.spec.budget);
      auto graphs = perturbed_graphs(b);
      r.bundles.push_back({to_string(part) + "-" + power_tag(p), std::move(b)});
      return graphs;
    };
    const auto adv_train = attack(ctx.split.train, Partition::train);
    const auto adv_valid = attack(ctx.split.valid, Partition::valid);
    const auto adv_test = attack(ctx.split.test, Partition::test);
    auto mix = [](std::vector<Graph> a, const std::vector<Graph>& b) {
      a.insert(a.end(), b.begin(), b.end());
      return a;
    };
    const auto train = mix(ctx.train, adv_train);
    const auto valid = mix(ctx.valid, adv_valid);
    const auto mixed_test = mix(ctx.test, adv_test);
    for (const auto& [kind, original, stage] :
         {std::tuple{TargetKind::sag, &models.sag, Stage::sag},
          std::tuple{TargetKind::hgpsl_lite, &models.hgpsl, Stage::hgpsl}}) {
      const TargetParams robust = target_train(kind, train, valid, d, k, stage_config(ctx, ctx.spec.targets, stage));
      const std::string name = to_string(kind);
      const double x = 100.0 * p;
      r.points.push_back({x, target_evaluate(robust, adv_test, w), name + "/robust-adv"});
      r.points.push_back({x, target_evaluate(robust, mixed_test, w), name + "/robust-mixed"});
      r.points.push_back({x, target_evaluate(*original, adv_test, w), name + "/orig-adv"});
      r.points.push_back({x, target_evaluate(*original, ctx.test, w), name + "/orig-clean"});
    }
  }
  return r;
}

json models_to_json(const Models& m) {
  return {{"surrogate", surrogate_to_json(m.surrogate)},
          {"sag", target_to_json(m.sag)},
          {"hgpsl-lite", target_to_json(m.hgpsl)}};
}

json train_report_to_json(const ExperimentSpec& spec, const OriginalTrainReport& r) {
  json rows = json::array();
  for (const auto& a : r.test)
    rows.push_back({{"model", a.model},
                    {"testAccuracy", a.accuracy},
                    {"bestEpoch", a.best_epoch},
                    {"bestValidAccuracy", a.best_valid_accuracy}});
  return {{"kind", "original-train"}, {"spec", spec_to_json(spec)}, {"models", rows}};
}

json attack_report_to_json(const ExperimentSpec& spec, const SurrogateAttackReport& r, const std::string& bundle_hash,
                           const std::string& baseline_hash) {
  double max_edit = 0.0, max_dc = 0.0, max_feat = 0.0;
  for (const auto& s : r.bundle.samples) {
    max_edit = std::max(max_edit, s.budgets.edit_ratio);
    max_dc = std::max(max_dc, s.budgets.deltacon);
    max_feat = std::max(max_feat, s.budgets.feature_l1);
  }
  return {{"kind", "surrogate-attack"},
          {"spec", spec_to_json(spec)},
          {"originalAccuracy", r.original_accuracy},
          {"adversarialAccuracy", r.adversarial_accuracy},
          {"baselineAccuracy", r.baseline_accuracy},
          {"samples", r.bundle.samples.size()},
          {"flips", r.flips},
          {"rejectedFlips", r.rejected_flips},
          {"maxBudgetUsage", {{"edit", max_edit}, {"deltacon", max_dc}, {"feat", max_feat}}},
          {"bundleHash", bundle_hash},
          {"baselineHash", baseline_hash}};
}

json transfer_report_to_json(const ExperimentSpec& spec, const std::vector<TransferRow>& rows,
                             const std::string& bundle_hash, const std::string& baseline_hash) {
  json out = json::array();
  for (const auto& row : rows) {
    json j = {{"target", row.target},
              {"originalAccuracy", row.accuracy.original},
              {"attackAccuracy", row.accuracy.adversarial}};
    j["baselineAccuracy"] = row.accuracy.baseline ? json(*row.accuracy.baseline) : json();
    out.push_back(j);
  }
  return {{"kind", "transfer"},
          {"spec", spec_to_json(spec)},
          {"bundleHash", bundle_hash},
          {"baselineHash", baseline_hash},
          {"rows", out}};
}

json curve_report_to_json(const ExperimentSpec& spec, const std::string& kind, const std::vector<CurvePoint>& points) {
  json out = json::array();
  for (const auto& p : points) out.push_back({{"x", p.x}, {"y", p.y}, {"series", p.series}});
  return {{"kind", kind}, {"spec", spec_to_json(spec)}, {"points", out}};
}

json metrics_to_report_json(const ExperimentSpec& spec, const MetricReport& r) {
  json out = metric_report_to_json(r);
  out["kind"] = "metrics";
  out["spec"] = spec_to_json(spec);
  return out;
}

std::string curve_csv(const std::vector<CurvePoint>& points) {
  std::string out = "x,y,series\n";
  char buf[96];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,", p.x, p.y);
    out += buf + p.series + "\n";
  }
  return out;
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DeserializationError("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::istreambuf_iterator<char> it(in), end; it != end; ++it) {
    h ^= static_cast<unsigned char>(*it);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double curve_value(const std::vector<CurvePoint>& points, const std::string& series, double x) {
  for (const auto& p : points)
    if (p.series == series && std::abs(p.x - x) < 1e-9) return p.y;
  throw PreconditionError("no curve point for " + series);
}

}  // namespace poolbreaker
