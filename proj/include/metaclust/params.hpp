#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace metaclust {

// Named collection of dense parameter matrices with a stable flattening order
// (insertion order, column-major within each matrix).
class ParamSet {
 public:
  void add(std::string name, Eigen::MatrixXd mat) {
    for (const auto& e : entries_)
      if (e.first == name)
        throw std::invalid_argument("ParamSet: duplicate entry " + name);
    entries_.emplace_back(std::move(name), std::move(mat));
  }

  const Eigen::MatrixXd& at(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.first == name) return e.second;
    throw std::invalid_argument("ParamSet: no entry " + name);
  }

  Eigen::MatrixXd& at(const std::string& name) {
    for (auto& e : entries_)
      if (e.first == name) return e.second;
    throw std::invalid_argument("ParamSet: no entry " + name);
  }

  std::size_t count() const { return entries_.size(); }
  const std::string& name(std::size_t i) const { return entries_[i].first; }
  const Eigen::MatrixXd& mat(std::size_t i) const { return entries_[i].second; }
  Eigen::MatrixXd& mat(std::size_t i) { return entries_[i].second; }

  Eigen::Index total_size() const {
    Eigen::Index n = 0;
    for (const auto& e : entries_) n += e.second.size();
    return n;
  }

  Eigen::VectorXd flatten() const {
    Eigen::VectorXd out(total_size());
    Eigen::Index at = 0;
    for (const auto& e : entries_) {
      out.segment(at, e.second.size()) =
          Eigen::Map<const Eigen::VectorXd>(e.second.data(), e.second.size());
      at += e.second.size();
    }
    return out;
  }

  void unflatten(const Eigen::VectorXd& flat) {
    if (flat.size() != total_size())
      throw std::invalid_argument("ParamSet::unflatten: size mismatch");
    Eigen::Index at = 0;
    for (auto& e : entries_) {
      Eigen::Map<Eigen::VectorXd>(e.second.data(), e.second.size()) =
          flat.segment(at, e.second.size());
      at += e.second.size();
    }
  }

  bool all_finite() const {
    for (const auto& e : entries_)
      if (!e.second.allFinite()) return false;
    return true;
  }

  bool same_shape(const ParamSet& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].first != other.entries_[i].first) return false;
      if (entries_[i].second.rows() != other.entries_[i].second.rows()) return false;
      if (entries_[i].second.cols() != other.entries_[i].second.cols()) return false;
    }
    return true;
  }

 private:
  std::vector<std::pair<std::string, Eigen::MatrixXd>> entries_;
};

}  // namespace metaclust
