#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "metaclust/graph.hpp"
#include "metaclust/rng.hpp"

namespace metaclust {

// Graph after noise injection. real_mask is aligned with graph.edges(): true
// for edges of the clean graph, false for injected cross-class edges.
struct NoisyGraph {
  Graph graph;
  std::vector<bool> real_mask;
  Graph clean_graph;

  int num_injected() const {
    return static_cast<int>(std::count(real_mask.begin(), real_mask.end(), false));
  }
};

// Adds round(ratio * |E|) distinct non-edges whose endpoints carry different
// labels, sampled uniformly from that candidate pool with the given seed.
// ratio = 0 returns a copy with every edge flagged real.
inline NoisyGraph inject_noise(const Dataset& dataset, double ratio,
                               std::uint64_t rng_seed) {
  if (ratio < 0.0) throw std::invalid_argument("inject_noise: negative ratio");
  const Graph& clean = dataset.graph;
  const int n = clean.num_nodes();
  const auto& labels = dataset.labels;
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("inject_noise: label count does not match graph");

  const std::int64_t want = std::llround(ratio * static_cast<double>(clean.num_edges()));

  // Size of the candidate pool {(i,j) not in E : label_i != label_j}.
  std::vector<std::int64_t> class_sizes;
  for (int v = 0; v < n; ++v) {
    const int c = labels[static_cast<std::size_t>(v)];
    if (c >= static_cast<int>(class_sizes.size()))
      class_sizes.resize(static_cast<std::size_t>(c) + 1, 0);
    ++class_sizes[static_cast<std::size_t>(c)];
  }
  std::int64_t cross_pairs = 0;
  {
    std::int64_t seen = 0;
    for (std::int64_t sz : class_sizes) {
      cross_pairs += sz * seen;
      seen += sz;
    }
  }
  std::int64_t cross_edges = 0;
  for (const auto& [u, v] : clean.edges())
    if (labels[static_cast<std::size_t>(u)] != labels[static_cast<std::size_t>(v)])
      ++cross_edges;
  const std::int64_t pool = cross_pairs - cross_edges;
  if (pool < want) {
    throw std::runtime_error("inject_noise: need " + std::to_string(want) +
                             " cross-class non-edges but only " + std::to_string(pool) +
                             " exist");
  }

  Rng rng(rng_seed);
  std::set<std::pair<int, int>> injected;
  if (want > 0 && pool <= 4 * want) {
    // Pool is tight; enumerate it and take a random prefix so sampling cannot
    // stall. Partial Fisher-Yates keeps this deterministic per seed.
    std::vector<std::pair<int, int>> candidates;
    candidates.reserve(static_cast<std::size_t>(pool));
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (labels[static_cast<std::size_t>(i)] != labels[static_cast<std::size_t>(j)] &&
            !clean.has_edge(i, j))
          candidates.emplace_back(i, j);
    for (std::int64_t t = 0; t < want; ++t) {
      const auto pick = static_cast<std::size_t>(t) +
                        static_cast<std::size_t>(rng.below(
                            static_cast<std::uint64_t>(candidates.size()) -
                            static_cast<std::uint64_t>(t)));
      std::swap(candidates[static_cast<std::size_t>(t)], candidates[pick]);
      injected.insert(candidates[static_cast<std::size_t>(t)]);
    }
  } else {
    while (static_cast<std::int64_t>(injected.size()) < want) {
      int i = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
      int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
      if (i == j) continue;
      if (i > j) std::swap(i, j);
      if (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)])
        continue;
      if (clean.has_edge(i, j)) continue;
      injected.insert({i, j});
    }
  }

  std::vector<std::pair<int, int>> union_edges = clean.edges();
  union_edges.insert(union_edges.end(), injected.begin(), injected.end());

  NoisyGraph out;
  out.clean_graph = clean;
  out.graph = Graph(n, std::move(union_edges));
  out.real_mask.resize(static_cast<std::size_t>(out.graph.num_edges()));
  for (std::size_t e = 0; e < out.real_mask.size(); ++e) {
    const auto& edge = out.graph.edges()[e];
    out.real_mask[e] = injected.find(edge) == injected.end();
  }
  return out;
}

// Replayable on-disk form: one "u v flag" line per edge, flag 1 = real edge of
// the clean graph, 0 = injected.
inline void save_noisy_edge_list(const NoisyGraph& noisy, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path);
  out << "# u v real\n";
  for (std::size_t e = 0; e < noisy.real_mask.size(); ++e) {
    const auto& [u, v] = noisy.graph.edges()[e];
    out << u << ' ' << v << ' ' << (noisy.real_mask[e] ? 1 : 0) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

inline NoisyGraph load_noisy_edge_list(const std::string& path, int n_nodes) {
  std::ifstream in = detail::open_or_throw(path);
  std::string line;
  int line_no = 0;
  std::vector<std::pair<int, int>> all_edges, real_edges;
  std::set<std::pair<int, int>> real_set;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank_or_comment(line)) continue;
    std::istringstream ss(line);
    std::int64_t u, v;
    int flag;
    std::string extra;
    if (!(ss >> u >> v >> flag) || (ss >> extra) || (flag != 0 && flag != 1)) {
      throw std::runtime_error(path + ": expected 'u v flag(0|1)' at line " +
                               std::to_string(line_no));
    }
    if (u == v)
      throw std::runtime_error(path + ": self-loop at line " + std::to_string(line_no));
    int a = static_cast<int>(u), b = static_cast<int>(v);
    if (a > b) std::swap(a, b);
    all_edges.emplace_back(a, b);
    if (flag == 1) {
      real_edges.emplace_back(a, b);
      real_set.insert({a, b});
    }
  }
  NoisyGraph out;
  out.graph = Graph(n_nodes, std::move(all_edges));
  out.clean_graph = Graph(n_nodes, std::move(real_edges));
  out.real_mask.resize(static_cast<std::size_t>(out.graph.num_edges()));
  for (std::size_t e = 0; e < out.real_mask.size(); ++e)
    out.real_mask[e] = real_set.count(out.graph.edges()[e]) > 0;
  return out;
}

}  // namespace metaclust
