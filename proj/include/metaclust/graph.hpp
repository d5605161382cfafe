#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace metaclust {

// Immutable simple undirected graph. Edges are stored once in canonical form
// (i < j, lexicographically sorted); adjacency queries are symmetric.
class Graph {
 public:
  Graph() = default;

  Graph(int n_nodes, std::vector<std::pair<int, int>> edge_list) : n_(n_nodes) {
    if (n_nodes < 0) throw std::invalid_argument("Graph: negative node count");
    for (auto& [u, v] : edge_list) {
      if (u < 0 || v < 0 || u >= n_ || v >= n_)
        throw std::invalid_argument("Graph: edge endpoint out of range [0, " +
                                    std::to_string(n_) + ")");
      if (u == v)
        throw std::invalid_argument("Graph: self-loop on node " + std::to_string(u));
      if (u > v) std::swap(u, v);
    }
    std::sort(edge_list.begin(), edge_list.end());
    edge_list.erase(std::unique(edge_list.begin(), edge_list.end()), edge_list.end());
    edges_ = std::move(edge_list);

    degrees_.assign(static_cast<std::size_t>(n_), 0);
    for (const auto& [u, v] : edges_) {
      ++degrees_[static_cast<std::size_t>(u)];
      ++degrees_[static_cast<std::size_t>(v)];
    }

    adj_offsets_.assign(static_cast<std::size_t>(n_) + 1, 0);
    for (int v = 0; v < n_; ++v)
      adj_offsets_[static_cast<std::size_t>(v) + 1] =
          adj_offsets_[static_cast<std::size_t>(v)] + degrees_[static_cast<std::size_t>(v)];
    adj_.resize(static_cast<std::size_t>(2) * edges_.size());
    std::vector<int> cursor(adj_offsets_.begin(), adj_offsets_.end() - 1);
    for (const auto& [u, v] : edges_) {
      adj_[static_cast<std::size_t>(cursor[static_cast<std::size_t>(u)]++)] = v;
      adj_[static_cast<std::size_t>(cursor[static_cast<std::size_t>(v)]++)] = u;
    }
    for (int v = 0; v < n_; ++v) {
      auto begin = adj_.begin() + adj_offsets_[static_cast<std::size_t>(v)];
      auto end = adj_.begin() + adj_offsets_[static_cast<std::size_t>(v) + 1];
      std::sort(begin, end);
    }

    // Symmetric normalization D^{-1/2} A D^{-1/2}; degree-0 nodes get no entries.
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(2 * edges_.size());
    for (const auto& [u, v] : edges_) {
      const double w = 1.0 / std::sqrt(static_cast<double>(degrees_[static_cast<std::size_t>(u)]) *
                                       static_cast<double>(degrees_[static_cast<std::size_t>(v)]));
      trips.emplace_back(u, v, w);
      trips.emplace_back(v, u, w);
    }
    norm_adj_.resize(n_, n_);
    norm_adj_.setFromTriplets(trips.begin(), trips.end());
    norm_adj_.makeCompressed();
  }

  int num_nodes() const { return n_; }
  int num_edges() const { return static_cast<int>(edges_.size()); }
  double total_degree() const { return 2.0 * static_cast<double>(edges_.size()); }

  // Canonical edge list: each pair (i, j) with i < j, sorted lexicographically.
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }

  int degree(int v) const { return degrees_[static_cast<std::size_t>(v)]; }
  const std::vector<int>& degrees() const { return degrees_; }

  std::span<const int> neighbors(int v) const {
    const auto b = static_cast<std::size_t>(adj_offsets_[static_cast<std::size_t>(v)]);
    const auto e = static_cast<std::size_t>(adj_offsets_[static_cast<std::size_t>(v) + 1]);
    return {adj_.data() + b, e - b};
  }

  // Index of edge {i, j} in edges(), or -1 if absent. Symmetric in i, j.
  int edge_index(int i, int j) const {
    if (i == j) return -1;
    if (i > j) std::swap(i, j);
    const std::pair<int, int> key{i, j};
    auto it = std::lower_bound(edges_.begin(), edges_.end(), key);
    if (it == edges_.end() || *it != key) return -1;
    return static_cast<int>(it - edges_.begin());
  }

  bool has_edge(int i, int j) const { return edge_index(i, j) >= 0; }

  const Eigen::SparseMatrix<double>& norm_adjacency() const { return norm_adj_; }

 private:
  int n_ = 0;
  std::vector<std::pair<int, int>> edges_;
  std::vector<int> degrees_;
  std::vector<int> adj_offsets_;
  std::vector<int> adj_;
  Eigen::SparseMatrix<double> norm_adj_;
};

// Graph plus dense node attributes and integer class labels.
struct Dataset {
  Graph graph;
  Eigen::MatrixXd attributes;  // N x F
  std::vector<int> labels;     // values in [0, num_classes)
  int num_classes = 0;
  std::vector<std::int64_t> original_ids;  // original_ids[v] = id in the input files
};

namespace detail {

inline std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  return in;
}

inline bool parse_int64(const std::string& tok, std::int64_t& out) {
  if (tok.empty()) return false;
  std::size_t pos = 0;
  try {
    out = std::stoll(tok, &pos);
  } catch (const std::exception&) {
    return false;
  }
  return pos == tok.size();
}

inline bool is_blank_or_comment(const std::string& line) {
  for (char c : line) {
    if (c == '#') return true;
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace detail

// Raw edge list: pairs of original node ids, whitespace separated, one pair per
// line. `#` comment lines and blank lines are skipped. Self-loops are rejected
// with the offending line number; duplicates are collapsed by the Graph
// constructor later.
inline std::vector<std::pair<std::int64_t, std::int64_t>> load_edge_list(
    const std::string& path) {
  std::ifstream in = detail::open_or_throw(path);
  std::vector<std::pair<std::int64_t, std::int64_t>> edges;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank_or_comment(line)) continue;
    std::istringstream ss(line);
    std::string a, b, extra;
    if (!(ss >> a >> b) || (ss >> extra)) {
      throw std::runtime_error(path + ": expected two node ids at line " +
                               std::to_string(line_no));
    }
    std::int64_t u, v;
    if (!detail::parse_int64(a, u) || !detail::parse_int64(b, v)) {
      throw std::runtime_error(path + ": non-integer node id at line " +
                               std::to_string(line_no));
    }
    if (u == v) {
      throw std::runtime_error(path + ": self-loop at line " + std::to_string(line_no));
    }
    edges.emplace_back(u, v);
  }
  return edges;
}

// Label CSV: one integer per row, row r = node r.
inline std::vector<std::int64_t> load_labels(const std::string& path) {
  std::ifstream in = detail::open_or_throw(path);
  std::vector<std::int64_t> labels;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank_or_comment(line)) continue;
    auto fields = detail::split_csv(line);
    if (fields.size() != 1)
      throw std::runtime_error(path + ": expected a single label at line " +
                               std::to_string(line_no));
    std::int64_t lab;
    if (!detail::parse_int64(fields[0], lab))
      throw std::runtime_error(path + ": non-integer label at line " +
                               std::to_string(line_no));
    labels.push_back(lab);
  }
  return labels;
}

// Attribute CSV: row r = node r, all rows the same width.
inline Eigen::MatrixXd load_attributes(const std::string& path) {
  std::ifstream in = detail::open_or_throw(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank_or_comment(line)) continue;
    auto fields = detail::split_csv(line);
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) {
      std::size_t pos = 0;
      double x;
      try {
        x = std::stod(f, &pos);
      } catch (const std::exception&) {
        throw std::runtime_error(path + ": non-numeric attribute at line " +
                                 std::to_string(line_no));
      }
      if (pos != f.size())
        throw std::runtime_error(path + ": non-numeric attribute at line " +
                                 std::to_string(line_no));
      row.push_back(x);
    }
    if (width == 0) width = row.size();
    if (row.size() != width)
      throw std::runtime_error(path + ": attribute width mismatch at line " +
                               std::to_string(line_no));
    rows.push_back(std::move(row));
  }
  if (width == 0) throw std::runtime_error(path + ": no attribute rows");
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < width; ++c)
      X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return X;
}

namespace detail {

// Shared assembly step: remap ids, build the Graph, attach attributes/labels.
inline Dataset assemble_dataset(std::vector<std::pair<std::int64_t, std::int64_t>> raw_edges,
                                Eigen::MatrixXd X,
                                const std::vector<std::int64_t>& raw_labels,
                                const std::string& labels_path) {
  const int n = static_cast<int>(raw_labels.size());

  bool dense = true;
  for (const auto& [u, v] : raw_edges) {
    if (u < 0 || u >= n || v < 0 || v >= n) {
      dense = false;
      break;
    }
  }

  std::vector<std::int64_t> original_ids;
  std::vector<std::pair<int, int>> edges;
  edges.reserve(raw_edges.size());
  if (dense) {
    original_ids.resize(static_cast<std::size_t>(n));
    for (int v = 0; v < n; ++v) original_ids[static_cast<std::size_t>(v)] = v;
    for (const auto& [u, v] : raw_edges)
      edges.emplace_back(static_cast<int>(u), static_cast<int>(v));
  } else {
    std::vector<std::int64_t> ids;
    ids.reserve(2 * raw_edges.size());
    for (const auto& [u, v] : raw_edges) {
      ids.push_back(u);
      ids.push_back(v);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (static_cast<int>(ids.size()) > n) {
      throw std::runtime_error("edge list names " + std::to_string(ids.size()) +
                               " distinct nodes but only " + std::to_string(n) +
                               " label rows are present");
    }
    std::map<std::int64_t, int> rank;
    for (std::size_t r = 0; r < ids.size(); ++r) rank[ids[r]] = static_cast<int>(r);
    for (const auto& [u, v] : raw_edges) edges.emplace_back(rank[u], rank[v]);
    original_ids = std::move(ids);
    original_ids.resize(static_cast<std::size_t>(n), -1);
  }

  Dataset ds;
  ds.graph = Graph(n, std::move(edges));
  ds.attributes = std::move(X);
  ds.labels.reserve(static_cast<std::size_t>(n));
  std::int64_t max_label = -1;
  for (std::size_t r = 0; r < raw_labels.size(); ++r) {
    if (raw_labels[r] < 0)
      throw std::runtime_error(labels_path + ": negative label for node row " +
                               std::to_string(r));
    ds.labels.push_back(static_cast<int>(raw_labels[r]));
    max_label = std::max(max_label, raw_labels[r]);
  }
  ds.num_classes = static_cast<int>(max_label + 1);
  ds.original_ids = std::move(original_ids);
  return ds;
}

}  // namespace detail

// Loads edge list + attribute CSV + label CSV into a Dataset. Node count N is
// given by the label/attribute row count. If the edge file already uses ids in
// [0, N) the mapping is the identity; otherwise distinct ids are ranked in
// sorted order, so attribute row r belongs to the r-th smallest original id.
inline Dataset load_dataset(const std::string& edge_list_path,
                            const std::string& attributes_path,
                            const std::string& labels_path) {
  auto raw_edges = load_edge_list(edge_list_path);
  Eigen::MatrixXd X = load_attributes(attributes_path);
  auto raw_labels = load_labels(labels_path);
  if (static_cast<std::size_t>(X.rows()) != raw_labels.size()) {
    throw std::runtime_error("attribute rows (" + std::to_string(X.rows()) +
                             ") and label rows (" + std::to_string(raw_labels.size()) +
                             ") disagree");
  }
  return detail::assemble_dataset(std::move(raw_edges), std::move(X), raw_labels,
                                  labels_path);
}

// Attribute-free load (graph + labels only); attributes end up N x 0. Enough
// for noise injection, not for training.
inline Dataset load_dataset(const std::string& edge_list_path,
                            const std::string& labels_path) {
  auto raw_edges = load_edge_list(edge_list_path);
  auto raw_labels = load_labels(labels_path);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(raw_labels.size()), 0);
  return detail::assemble_dataset(std::move(raw_edges), std::move(X), raw_labels,
                                  labels_path);
}

}  // namespace metaclust
