#pragma once

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "metaclust/graph.hpp"
#include "metaclust/rng.hpp"

namespace metaclust {

// Stochastic block model with Gaussian attributes. Nodes are grouped into
// k_clusters contiguous blocks of n_per_cluster; the label is the block id.
// Each cluster c gets the mean vector attr_signal * e_{c mod attr_dim}, and
// attributes are that mean plus unit Gaussian noise. Deterministic per seed.
inline Dataset synth_sbm(int n_per_cluster, int k_clusters, double p_in, double p_out,
                         int attr_dim, double attr_signal, std::uint64_t rng_seed) {
  if (n_per_cluster < 1 || k_clusters < 1)
    throw std::invalid_argument("synth_sbm: cluster sizes must be positive");
  if (!(0.0 <= p_out && p_out < p_in && p_in <= 1.0))
    throw std::invalid_argument("synth_sbm: need 0 <= p_out < p_in <= 1");
  if (attr_dim < 1) throw std::invalid_argument("synth_sbm: attr_dim must be >= 1");
  if (attr_signal < 0.0)
    throw std::invalid_argument("synth_sbm: attr_signal must be >= 0");

  const int n = n_per_cluster * k_clusters;
  Rng rng(rng_seed);

  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int v = 0; v < n; ++v) labels[static_cast<std::size_t>(v)] = v / n_per_cluster;

  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double p =
          labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)]
              ? p_in
              : p_out;
      if (rng.uniform() < p) edges.emplace_back(i, j);
    }
  }

  Eigen::MatrixXd X(n, attr_dim);
  for (int v = 0; v < n; ++v) {
    const int axis = labels[static_cast<std::size_t>(v)] % attr_dim;
    for (int f = 0; f < attr_dim; ++f)
      X(v, f) = (f == axis ? attr_signal : 0.0) + rng.normal();
  }

  Dataset ds;
  ds.graph = Graph(n, std::move(edges));
  ds.attributes = std::move(X);
  ds.labels = std::move(labels);
  ds.num_classes = k_clusters;
  ds.original_ids.resize(static_cast<std::size_t>(n));
  for (int v = 0; v < n; ++v) ds.original_ids[static_cast<std::size_t>(v)] = v;
  return ds;
}

}  // namespace metaclust
