#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "poolbreaker/graph.hpp"
#include "poolbreaker/matrix.hpp"

namespace poolbreaker {

struct DegreeDistribution {
  std::vector<std::size_t> support;  // ascending degree values
  Vector probabilities;
};

// Smoothed degree histograms of two graphs over their union support.
std::pair<DegreeDistribution, DegreeDistribution> smoothed_degree_distributions(
    const Matrix& p_adjacency, const Matrix& q_adjacency, double alpha = 1e-6);

// KL(P || Q) between the smoothed degree distributions of `original` and
// `perturbed`.
double degree_kl(const Graph& original, const Graph& perturbed, double alpha = 1e-6);

// Local reaching centrality C_R(i) = sum_{j reachable, j != i} 1/dist(i,j) / (N-1).
Vector local_reaching_centrality(const Matrix& adjacency);
double global_reaching_centrality(const Graph& graph);

struct Communities {
  double modularity = 0.0;
  std::size_t count = 0;
  std::vector<std::size_t> assignment;  // contiguous ids, first-seen order
};

double modularity(const Matrix& adjacency, const std::vector<std::size_t>& assignment);

// Louvain with resolution 1, scanning nodes in ascending index order and
// moving only on a strictly positive gain. When `q_trace` is given, the
// modularity of the original graph after every accepted move is appended.
Communities louvain_modularity(const Graph& graph, std::vector<double>* q_trace = nullptr);

struct TTest {
  double t = 0.0;
  double p = 1.0;
  double df = 0.0;
};

// Welch two-sample t-test, two-sided.
TTest two_sample_t(const Vector& a, const Vector& b);

struct GraphMetrics {
  std::size_t index = 0;
  double kl = 0.0;
  double grc_orig = 0.0;
  double grc_adv = 0.0;
  double q_orig = 0.0;
  double q_adv = 0.0;
  std::size_t communities_orig = 0;
  std::size_t communities_adv = 0;
};

struct MetricReport {
  double mean_kl = 0.0;
  double kl_std = 0.0;
  TTest grc;
  TTest modularity;      // headline community p-value
  TTest community_count;
  std::vector<GraphMetrics> per_graph;
};

MetricReport metric_report(const Dataset& originals, const AdversarialBundle& bundle, unsigned workers = 1);

std::string metric_report_csv(const MetricReport& report);
nlohmann::json metric_report_to_json(const MetricReport& report);

}  // namespace poolbreaker
