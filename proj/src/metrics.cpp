#include "poolbreaker/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <queue>

#include <boost/math/special_functions/beta.hpp>

#include "poolbreaker/errors.hpp"
#include "poolbreaker/parallel.hpp"

namespace poolbreaker {

namespace {

std::vector<std::size_t> degrees(const Matrix& a) {
  std::vector<std::size_t> out(a.rows(), 0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (double v : a.row(i)) out[i] += v != 0.0 ? 1 : 0;
  return out;
}

double mean_of(const Vector& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_variance(const Vector& v, double mean) {
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace

std::pair<DegreeDistribution, DegreeDistribution> smoothed_degree_distributions(
    const Matrix& p_adjacency, const Matrix& q_adjacency, double alpha) {
  if (p_adjacency.rows() == 0 || q_adjacency.rows() == 0)
    throw PreconditionError("degree distribution of an empty graph");
  std::map<std::size_t, std::pair<double, double>> counts;
  for (std::size_t d : degrees(p_adjacency)) counts[d].first += 1.0;
  for (std::size_t d : degrees(q_adjacency)) counts[d].second += 1.0;
  const double k = static_cast<double>(counts.size());
  const double np = static_cast<double>(p_adjacency.rows()) + alpha * k;
  const double nq = static_cast<double>(q_adjacency.rows()) + alpha * k;
  DegreeDistribution p, q;
  for (const auto& [degree, c] : counts) {
    p.support.push_back(degree);
    q.support.push_back(degree);
    p.probabilities.push_back((c.first + alpha) / np);
    q.probabilities.push_back((c.second + alpha) / nq);
  }
  return {p, q};
}

double degree_kl(const Graph& original, const Graph& perturbed, double alpha) {
  const auto [p, q] = smoothed_degree_distributions(original.adjacency, perturbed.adjacency, alpha);
  double kl = 0.0;
  for (std::size_t i = 0; i < p.probabilities.size(); ++i)
    kl += p.probabilities[i] * std::log(p.probabilities[i] / q.probabilities[i]);
  return std::max(0.0, kl);
}

Vector local_reaching_centrality(const Matrix& adjacency) {
  const std::size_t n = adjacency.rows();
  Vector out(n, 0.0);
  if (n <= 1) return out;
  std::vector<std::vector<std::size_t>> nbrs(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && adjacency(i, j) != 0.0) nbrs[i].push_back(j);
  std::vector<std::size_t> dist(n);
  for (std::size_t s = 0; s < n; ++s) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<std::size_t>::max());
    dist[s] = 0;
    std::queue<std::size_t> frontier;
    frontier.push(s);
    double sum = 0.0;
    while (!frontier.empty()) {
      const std::size_t u = frontier.front();
      frontier.pop();
      for (std::size_t v : nbrs[u]) {
        if (dist[v] != std::numeric_limits<std::size_t>::max()) continue;
        dist[v] = dist[u] + 1;
        sum += 1.0 / static_cast<double>(dist[v]);
        frontier.push(v);
      }
    }
    out[s] = sum / static_cast<double>(n - 1);
  }
  return out;
}

double global_reaching_centrality(const Graph& graph) {
  const std::size_t n = graph.node_count();
  if (n == 0) throw PreconditionError("reaching centrality of an empty graph");
  if (n == 1) return 0.0;
  const Vector c = local_reaching_centrality(graph.adjacency);
  const double cmax = *std::max_element(c.begin(), c.end());
  double sum = 0.0;
  for (double v : c) sum += cmax - v;
  return sum / static_cast<double>(n - 1);
}

double modularity(const Matrix& adjacency, const std::vector<std::size_t>& assignment) {
  const std::size_t n = adjacency.rows();
  if (assignment.size() != n) throw StructuralError("community assignment length mismatch");
  double m2 = 0.0;
  std::map<std::size_t, std::pair<double, double>> per;  // internal, total degree
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double w = adjacency(i, j);
      m2 += w;
      per[assignment[i]].second += w;
      if (assignment[i] == assignment[j]) per[assignment[i]].first += w;
    }
  }
  if (m2 == 0.0) return 0.0;
  double q = 0.0;
  for (const auto& [c, v] : per) q += v.first / m2 - (v.second / m2) * (v.second / m2);
  return q;
}

Communities louvain_modularity(const Graph& graph, std::vector<double>* q_trace) {
  const std::size_t n0 = graph.node_count();
  Communities out;
  std::vector<std::size_t> node_comm(n0);
  for (std::size_t i = 0; i < n0; ++i) node_comm[i] = i;

  Matrix w = graph.adjacency;
  double m2 = 0.0;
  for (double v : w.values()) m2 += v;
  if (m2 > 0.0) {
    while (true) {
      const std::size_t n = w.rows();
      Vector k(n, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (double v : w.row(i)) k[i] += v;
      std::vector<std::size_t> comm(n);
      Vector tot(k);
      for (std::size_t i = 0; i < n; ++i) comm[i] = i;
      Vector link(n, 0.0);
      bool improved = false;
      bool moved = true;
      while (moved) {
        moved = false;
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t own = comm[i];
          tot[own] -= k[i];
          std::fill(link.begin(), link.end(), 0.0);
          for (std::size_t j = 0; j < n; ++j)
            if (j != i) link[comm[j]] += w(i, j);
          // Gain of joining c, up to a common positive factor and offset.
          auto gain = [&](std::size_t c) { return link[c] - tot[c] * k[i] / m2; };
          std::size_t best = own;
          double best_gain = gain(own);
          for (std::size_t c = 0; c < n; ++c) {
            if (c == own || link[c] <= 0.0) continue;
            const double g = gain(c);
            if (g > best_gain + 1e-12) {
              best = c;
              best_gain = g;
            }
          }
          tot[best] += k[i];
          comm[i] = best;
          if (best != own) {
            moved = improved = true;
            if (q_trace) {
              std::vector<std::size_t> full(n0);
              for (std::size_t v = 0; v < n0; ++v) full[v] = comm[node_comm[v]];
              q_trace->push_back(modularity(graph.adjacency, full));
            }
          }
        }
      }
      if (!improved) break;
      // Renumber communities in first-seen order and aggregate.
      std::vector<std::size_t> id(n, n);
      std::size_t next = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (id[comm[i]] == n) id[comm[i]] = next++;
      Matrix agg(next, next);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) agg(id[comm[i]], id[comm[j]]) += w(i, j);
      for (std::size_t v = 0; v < n0; ++v) node_comm[v] = id[comm[node_comm[v]]];
      w = std::move(agg);
      if (next == 1) break;
    }
  }

  std::vector<std::size_t> id(n0, n0);
  std::size_t next = 0;
  out.assignment.resize(n0);
  for (std::size_t v = 0; v < n0; ++v) {
    if (id[node_comm[v]] == n0) id[node_comm[v]] = next++;
    out.assignment[v] = id[node_comm[v]];
  }
  out.count = next;
  out.modularity = modularity(graph.adjacency, out.assignment);
  return out;
}

TTest two_sample_t(const Vector& a, const Vector& b) {
  if (a.size() < 2 || b.size() < 2) throw PreconditionError("t-test needs at least two samples per group");
  const double ma = mean_of(a), mb = mean_of(b);
  const double va = sample_variance(a, ma) / static_cast<double>(a.size());
  const double vb = sample_variance(b, mb) / static_cast<double>(b.size());
  TTest out;
  const double se2 = va + vb;
  if (se2 == 0.0) {
    out.df = static_cast<double>(a.size() + b.size() - 2);
    if (ma == mb) return out;
    out.t = ma > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    out.p = 0.0;
    return out;
  }
  out.t = (ma - mb) / std::sqrt(se2);
  out.df = se2 * se2 /
           (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  const double x = out.df / (out.df + out.t * out.t);
  out.p = std::clamp(boost::math::ibeta(out.df / 2.0, 0.5, x), 0.0, 1.0);
  return out;
}

MetricReport metric_report(const Dataset& originals, const AdversarialBundle& bundle, unsigned workers) {
  if (bundle.samples.empty()) throw PreconditionError("metric report on an empty bundle");
  for (const auto& s : bundle.samples)
    if (s.index >= originals.size()) throw StructuralError("bundle index out of range");
  MetricReport r;
  r.per_graph = parallel_map(bundle.samples.size(), workers, [&](std::size_t s) {
    const BundleSample& sample = bundle.samples[s];
    const Graph& g = originals.graphs[sample.index];
    GraphMetrics m;
    m.index = sample.index;
    m.kl = degree_kl(g, sample.perturbed);
    m.grc_orig = global_reaching_centrality(g);
    m.grc_adv = global_reaching_centrality(sample.perturbed);
    const Communities co = louvain_modularity(g);
    const Communities ca = louvain_modularity(sample.perturbed);
    m.q_orig = co.modularity;
    m.q_adv = ca.modularity;
    m.communities_orig = co.count;
    m.communities_adv = ca.count;
    return m;
  });
  Vector kl, go, ga, qo, qa, co, ca;
  for (const auto& m : r.per_graph) {
    kl.push_back(m.kl);
    go.push_back(m.grc_orig);
    ga.push_back(m.grc_adv);
    qo.push_back(m.q_orig);
    qa.push_back(m.q_adv);
    co.push_back(static_cast<double>(m.communities_orig));
    ca.push_back(static_cast<double>(m.communities_adv));
  }
  r.mean_kl = mean_of(kl);
  r.kl_std = kl.size() > 1 ? std::sqrt(sample_variance(kl, r.mean_kl)) : 0.0;
  if (r.per_graph.size() >= 2) {
    r.grc = two_sample_t(go, ga);
    r.modularity = two_sample_t(qo, qa);
    r.community_count = two_sample_t(co, ca);
  }
  return r;
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string metric_report_csv(const MetricReport& report) {
  std::string out = "index,kl,grc_orig,grc_adv,q_orig,q_adv,communities_orig,communities_adv\n";
  for (const auto& m : report.per_graph) {
    out += std::to_string(m.index) + "," + num(m.kl) + "," + num(m.grc_orig) + "," + num(m.grc_adv) + "," +
           num(m.q_orig) + "," + num(m.q_adv) + "," + std::to_string(m.communities_orig) + "," +
           std::to_string(m.communities_adv) + "\n";
  }
  const double n = static_cast<double>(report.per_graph.size());
  double grco = 0, grca = 0, qo = 0, qa = 0, co = 0, ca = 0;
  for (const auto& m : report.per_graph) {
    grco += m.grc_orig;
    grca += m.grc_adv;
    qo += m.q_orig;
    qa += m.q_adv;
    co += static_cast<double>(m.communities_orig);
    ca += static_cast<double>(m.communities_adv);
  }
  out += "mean," + num(report.mean_kl) + "," + num(grco / n) + "," + num(grca / n) + "," + num(qo / n) + "," +
         num(qa / n) + "," + num(co / n) + "," + num(ca / n) + "\n";
  return out;
}

nlohmann::json metric_report_to_json(const MetricReport& report) {
  auto test = [](const TTest& t) {
    // Infinite t (fully separated constant samples) is stored as null.
    nlohmann::json j = {{"p", t.p}, {"df", t.df}};
    j["t"] = std::isfinite(t.t) ? nlohmann::json(t.t) : nlohmann::json();
    return j;
  };
  nlohmann::json per = nlohmann::json::array();
  for (const auto& m : report.per_graph)
    per.push_back({{"index", m.index},
                   {"kl", m.kl},
                   {"grcOrig", m.grc_orig},
                   {"grcAdv", m.grc_adv},
                   {"modOrig", m.q_orig},
                   {"modAdv", m.q_adv},
                   {"communitiesOrig", m.communities_orig},
                   {"communitiesAdv", m.communities_adv}});
  return {{"meanKL", report.mean_kl},
          {"klStd", report.kl_std},
          {"grcPValue", report.grc.p},
          {"clPValue", report.modularity.p},
          {"clCountPValue", report.community_count.p},
          {"grcTest", test(report.grc)},
          {"clTest", test(report.modularity)},
          {"clCountTest", test(report.community_count)},
          {"perGraph", per}};
}

}  // namespace poolbreaker
