#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

// Scratch directory wiped per test binary; files written under unique names.
struct TempDir {
  std::filesystem::path root;

  explicit TempDir(const std::string& tag) {
    root = std::filesystem::temp_directory_path() /
           ("metaclust_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(root);
    std::filesystem::create_directories(root);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(root, ec);
  }
  std::string path(const std::string& name) const { return (root / name).string(); }
};

inline std::string write_file(const TempDir& dir, const std::string& name,
                              const std::string& content) {
  const std::string p = dir.path(name);
  std::ofstream out(p);
  out << content;
  return p;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Attribute CSV for n nodes with the given width, all zeros.
inline std::string zero_attr_csv(int n, int width) {
  std::ostringstream ss;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < width; ++c) ss << (c ? "," : "") << "0";
    ss << '\n';
  }
  return ss.str();
}

inline std::string labels_lines(const std::vector<int>& labels) {
  std::ostringstream ss;
  for (int l : labels) ss << l << '\n';
  return ss.str();
}
