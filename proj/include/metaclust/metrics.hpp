#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "metaclust/graph.hpp"

namespace metaclust {

// Per-node cluster indices derived from a soft assignment.
struct HardAssignment {
  std::vector<int> clusters;
  int k = 0;
};

// Row argmax; ties break toward the lowest cluster index.
inline HardAssignment to_deterministic(const Eigen::MatrixXd& P) {
  HardAssignment out;
  out.k = static_cast<int>(P.cols());
  out.clusters.resize(static_cast<std::size_t>(P.rows()));
  for (Eigen::Index r = 0; r < P.rows(); ++r) {
    int best = 0;
    for (Eigen::Index c = 1; c < P.cols(); ++c)
      if (P(r, c) > P(r, best)) best = static_cast<int>(c);
    out.clusters[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

// Standard modularity of a hard assignment on a graph:
// Q = sum_c [ E_c/|E| - (D_c/2|E|)^2 ].
inline double modularity_metric(const std::vector<int>& assignment, const Graph& g) {
  if (static_cast<int>(assignment.size()) != g.num_nodes())
    throw std::invalid_argument("modularity_metric: assignment does not cover all nodes");
  const double two_e = g.total_degree();
  if (two_e == 0.0) return 0.0;
  int k = 0;
  for (int c : assignment) k = std::max(k, c + 1);
  std::vector<double> in_edges(static_cast<std::size_t>(k), 0.0);
  std::vector<double> deg_sum(static_cast<std::size_t>(k), 0.0);
  for (const auto& [u, v] : g.edges())
    if (assignment[static_cast<std::size_t>(u)] == assignment[static_cast<std::size_t>(v)])
      in_edges[static_cast<std::size_t>(assignment[static_cast<std::size_t>(u)])] += 1.0;
  for (int v = 0; v < g.num_nodes(); ++v)
    deg_sum[static_cast<std::size_t>(assignment[static_cast<std::size_t>(v)])] +=
        static_cast<double>(g.degree(v));
  double q = 0.0;
  for (int c = 0; c < k; ++c) {
    q += in_edges[static_cast<std::size_t>(c)] / (two_e / 2.0);
    q -= (deg_sum[static_cast<std::size_t>(c)] / two_e) *
         (deg_sum[static_cast<std::size_t>(c)] / two_e);
  }
  return q;
}

namespace detail {

struct Contingency {
  std::vector<std::vector<double>> n;  // n[k][l]
  std::vector<double> a;               // label marginals
  std::vector<double> b;               // cluster marginals
  double total = 0.0;
};

inline Contingency contingency(const std::vector<int>& labels,
                               const std::vector<int>& clusters) {
  if (labels.size() != clusters.size())
    throw std::invalid_argument("contingency: size mismatch");
  int nk = 0, nl = 0;
  for (int x : labels) nk = std::max(nk, x + 1);
  for (int x : clusters) nl = std::max(nl, x + 1);
  Contingency c;
  c.n.assign(static_cast<std::size_t>(nk), std::vector<double>(static_cast<std::size_t>(nl), 0.0));
  c.a.assign(static_cast<std::size_t>(nk), 0.0);
  c.b.assign(static_cast<std::size_t>(nl), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    c.n[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(clusters[i])] += 1.0;
    c.a[static_cast<std::size_t>(labels[i])] += 1.0;
    c.b[static_cast<std::size_t>(clusters[i])] += 1.0;
    c.total += 1.0;
  }
  return c;
}

}  // namespace detail

// Normalized mutual information I(L;C)/sqrt(H(L) H(C)) with natural logs.
// Conventions: 1 when the partitions are identical up to relabeling (including
// the doubly degenerate single-cluster case), 0 when either entropy is zero
// and the partitions differ.
inline double nmi(const std::vector<int>& labels, const std::vector<int>& assignment) {
  const auto c = detail::contingency(labels, assignment);
  const double n = c.total;
  if (n == 0.0) throw std::invalid_argument("nmi: empty partitions");
  double hl = 0.0, hc = 0.0, mi = 0.0;
  for (double ak : c.a)
    if (ak > 0.0) hl -= ak / n * std::log(ak / n);
  for (double bl : c.b)
    if (bl > 0.0) hc -= bl / n * std::log(bl / n);
  for (std::size_t k = 0; k < c.n.size(); ++k)
    for (std::size_t l = 0; l < c.n[k].size(); ++l)
      if (c.n[k][l] > 0.0)
        mi += c.n[k][l] / n * std::log(n * c.n[k][l] / (c.a[k] * c.b[l]));
  if (hl <= 0.0 || hc <= 0.0) {
    // At least one side is a single cluster. Identical partitions (both
    // single-cluster) score 1; otherwise 0.
    return (hl <= 0.0 && hc <= 0.0) ? 1.0 : 0.0;
  }
  const double v = mi / std::sqrt(hl * hc);
  return std::clamp(v, 0.0, 1.0);
}

// Pairwise F1 over all unordered node pairs: a pair is positive when both
// nodes share a label; predicted positive when both share a cluster.
inline double pairwise_f1(const std::vector<int>& labels,
                          const std::vector<int>& assignment) {
  const auto c = detail::contingency(labels, assignment);
  auto choose2 = [](double x) { return x * (x - 1.0) / 2.0; };
  double tp = 0.0;
  for (const auto& row : c.n)
    for (double nkl : row) tp += choose2(nkl);
  double same_label = 0.0, same_cluster = 0.0;
  for (double ak : c.a) same_label += choose2(ak);
  for (double bl : c.b) same_cluster += choose2(bl);
  const double fp = same_cluster - tp;
  const double fn = same_label - tp;
  if (tp == 0.0) return 0.0;
  return 2.0 * tp / (2.0 * tp + fp + fn);
}

struct RankingMetrics {
  double prauc = 0.0;
  double hits_at_frac = 0.0;
  double baseline = 0.0;
};

// Ranks edges by descending weight (stable on ties) and scores how well the
// ranking separates real edges from injected ones. PRAUC is trapezoidal over
// the exact ranked precision/recall curve with the recall-0 anchor taking the
// first point's precision; hits_at_frac is the precision among the
// ceil(frac * |E|) top edges.
inline RankingMetrics ranking_metrics(const std::vector<double>& edge_weights,
                                      const std::vector<bool>& real_mask, double frac) {
  if (edge_weights.size() != real_mask.size())
    throw std::invalid_argument("ranking_metrics: mask length mismatch");
  if (!(frac > 0.0 && frac <= 1.0))
    throw std::invalid_argument("ranking_metrics: frac must be in (0, 1]");
  const std::size_t m = edge_weights.size();
  if (m == 0) throw std::invalid_argument("ranking_metrics: no edges");

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return edge_weights[a] > edge_weights[b];
  });

  double positives = 0.0;
  for (bool r : real_mask) positives += r ? 1.0 : 0.0;

  RankingMetrics out;
  out.baseline = positives / static_cast<double>(m);

  const std::size_t cutoff =
      static_cast<std::size_t>(std::ceil(frac * static_cast<double>(m)));
  double tp = 0.0, tp_cut = 0.0;
  double prev_recall = 0.0, prev_precision = 1.0, area = 0.0;
  bool have_prev = false;
  for (std::size_t rank = 0; rank < m; ++rank) {
    if (real_mask[order[rank]]) tp += 1.0;
    if (rank + 1 == cutoff) tp_cut = tp;
    if (positives == 0.0) continue;
    const double recall = tp / positives;
    const double precision = tp / static_cast<double>(rank + 1);
    if (!have_prev) {
      // Anchor the curve at recall 0 with the first point's precision.
      prev_recall = 0.0;
      prev_precision = precision;
      have_prev = true;
    }
    area += (recall - prev_recall) * 0.5 * (precision + prev_precision);
    prev_recall = recall;
    prev_precision = precision;
  }
  out.prauc = positives == 0.0 ? 0.0 : area;
  out.hits_at_frac = tp_cut / static_cast<double>(cutoff);
  return out;
}

}  // namespace metaclust
