#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "metaclust/graph.hpp"

namespace metaclust {

// Adamic-Adar scores for the edges of a graph: S_ij = sum over common
// neighbors u of 1/ln(d_u). Stored aligned with graph.edges(); symmetric by
// construction.
struct PairSimilarity {
  std::vector<double> edge_scores;

  double at(const Graph& g, int i, int j) const {
    const int e = g.edge_index(i, j);
    if (e < 0)
      throw std::invalid_argument("PairSimilarity::at: (" + std::to_string(i) + ", " +
                                  std::to_string(j) + ") is not an edge");
    return edge_scores[static_cast<std::size_t>(e)];
  }
};

inline PairSimilarity adamic_adar(const Graph& g) {
  if (g.num_edges() < 1)
    throw std::invalid_argument("adamic_adar: graph has no edges");
  PairSimilarity sim;
  sim.edge_scores.resize(static_cast<std::size_t>(g.num_edges()), 0.0);
  for (std::size_t e = 0; e < sim.edge_scores.size(); ++e) {
    const auto [i, j] = g.edges()[e];
    auto ni = g.neighbors(i);
    auto nj = g.neighbors(j);
    // Both lists are sorted; merge to find common neighbors. Any common
    // neighbor u is adjacent to both endpoints, so d_u >= 2 and ln(d_u) > 0.
    double s = 0.0;
    std::size_t a = 0, b = 0;
    while (a < ni.size() && b < nj.size()) {
      if (ni[a] < nj[b]) {
        ++a;
      } else if (ni[a] > nj[b]) {
        ++b;
      } else {
        s += 1.0 / std::log(static_cast<double>(g.degree(ni[a])));
        ++a;
        ++b;
      }
    }
    sim.edge_scores[e] = s;
  }
  return sim;
}

}  // namespace metaclust
