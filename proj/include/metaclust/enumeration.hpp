#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "metaclust/cluster_model.hpp"
#include "metaclust/graph.hpp"

namespace metaclust {

inline constexpr double kEnumerationGuard = 1e7;

// Streams all K^N deterministic assignments (as vectors of cluster indices)
// in lexicographic order. Guarded against combinatorial blowup.
template <typename Fn>
inline void enumerate_assignments(int n, int k, Fn&& fn) {
  if (n < 0 || k < 1) throw std::invalid_argument("enumerate_assignments: bad N or K");
  if (std::pow(static_cast<double>(k), static_cast<double>(n)) > kEnumerationGuard)
    throw std::invalid_argument("enumerate_assignments: K^N exceeds the guard");
  std::vector<int> a(static_cast<std::size_t>(n), 0);
  while (true) {
    fn(const_cast<const std::vector<int>&>(a));
    int pos = n - 1;
    while (pos >= 0) {
      if (++a[static_cast<std::size_t>(pos)] < k) break;
      a[static_cast<std::size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
  }
}

// Probability that the soft assignment P realizes the deterministic
// assignment a: the product over nodes of P(i, a_i).
inline double assignment_probability(const Eigen::MatrixXd& P, const std::vector<int>& a) {
  if (static_cast<Eigen::Index>(a.size()) != P.rows())
    throw std::invalid_argument("assignment_probability: size mismatch");
  double pr = 1.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    pr *= P(static_cast<Eigen::Index>(i), a[i]);
  return pr;
}

inline Eigen::MatrixXd one_hot(const std::vector<int>& a, int k) {
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(a.size()), k);
  for (std::size_t i = 0; i < a.size(); ++i) P(static_cast<Eigen::Index>(i), a[i]) = 1.0;
  return P;
}

// A clustering loss evaluated at a soft assignment on a graph.
using SoftLossFn = std::function<double(const Eigen::MatrixXd&, const Graph&)>;

// |loss(P) - E_{P* ~ P}[loss(P*)]| where the expectation enumerates all
// deterministic assignments weighted by assignment_probability. Zero (up to
// rounding) exactly for expectation-conforming losses.
inline double expectation_conforming_gap(const SoftLossFn& loss_fn,
                                         const Eigen::MatrixXd& P, const Graph& g) {
  const int n = static_cast<int>(P.rows());
  const int k = static_cast<int>(P.cols());
  const double direct = loss_fn(P, g);
  double expect = 0.0;
  enumerate_assignments(n, k, [&](const std::vector<int>& a) {
    const double pr = assignment_probability(P, a);
    if (pr > 0.0) expect += pr * loss_fn(one_hot(a, k), g);
  });
  return std::abs(direct - expect);
}

// Exact optimum of a hard-assignment objective over all K^N assignments.
struct BruteforceResult {
  double best = 0.0;
  std::vector<std::vector<int>> argbest;  // all assignments within 1e-12 of best
};

using HardObjectiveFn = std::function<double(const std::vector<int>&, const Graph&)>;

inline BruteforceResult bruteforce_best(const HardObjectiveFn& fn, const Graph& g, int k,
                                        bool maximize) {
  BruteforceResult res;
  bool first = true;
  enumerate_assignments(g.num_nodes(), k, [&](const std::vector<int>& a) {
    const double v = fn(a, g);
    const double keyed = maximize ? v : -v;
    const double best_keyed = maximize ? res.best : -res.best;
    if (first || keyed > best_keyed + 1e-12) {
      res.best = v;
      res.argbest.clear();
      res.argbest.push_back(a);
      first = false;
    } else if (std::abs(keyed - best_keyed) <= 1e-12) {
      res.argbest.push_back(a);
    }
  });
  return res;
}

// Full-graph decomposable modularity loss (the training objective with V = 1,
// lambda = 0), evaluated through the pair-term route.
inline double full_unweighted_loss(const Eigen::MatrixXd& P, const Graph& g) {
  std::vector<int> all(static_cast<std::size_t>(g.num_nodes()));
  for (int v = 0; v < g.num_nodes(); ++v) all[static_cast<std::size_t>(v)] = v;
  return pair_loss_terms(P, g, all).L.sum();
}

// Normalized cut relaxation -Tr(P^T A P) / Tr(P^T D P); the counterexample
// loss that is not expectation-conforming.
inline double normalized_cut_loss(const Eigen::MatrixXd& P, const Graph& g) {
  double num = 0.0;
  for (const auto& [u, v] : g.edges()) num += 2.0 * P.row(u).dot(P.row(v));
  double den = 0.0;
  for (int v = 0; v < g.num_nodes(); ++v)
    den += static_cast<double>(g.degree(v)) * P.row(v).squaredNorm();
  if (den == 0.0)
    throw std::invalid_argument("normalized_cut_loss: graph has isolated support");
  return -num / den;
}

}  // namespace metaclust
