#pragma once

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "mifair/data.hpp"
#include "mifair/error.hpp"
#include "mifair/metrics.hpp"

namespace testutil {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("mifair-" + tag + "-" + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// Dataset with one sensitive attribute "g", labels and zero features.
inline mifair::Dataset tiny_dataset(const std::vector<int>& groups, const std::vector<int>& labels,
                                    std::size_t num_groups, std::size_t num_classes = 2) {
  mifair::Matrix x = mifair::Matrix::Zero(static_cast<Eigen::Index>(labels.size()), 1);
  mifair::SensitiveAttribute attr{"g", {}};
  for (std::size_t g = 0; g < num_groups; ++g) attr.categories.push_back(std::to_string(g));
  std::vector<std::string> classes;
  for (std::size_t c = 0; c < num_classes; ++c) classes.push_back(std::to_string(c));
  return mifair::Dataset(x, {"x"}, {0}, groups, {attr}, labels, classes);
}

/// Rows with the given hard predictions as one-hot probabilities.
inline mifair::Prediction hard_pred(const std::vector<int>& classes, std::size_t num_classes = 2) {
  return mifair::Prediction::one_hot(classes, num_classes);
}

inline mifair::Matrix random_probs(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::gamma_distribution<double> gamma(1.0, 1.0);
  mifair::Matrix p(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    for (Eigen::Index c = 0; c < p.cols(); ++c) p(r, c) = gamma(rng) + 1e-3;
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

template <class F>
mifair::ErrorKind error_kind_of(F&& f) {
  try {
    f();
  } catch (const mifair::Error& e) {
    return e.kind();
  }
  FAIL("expected a mifair::Error");
  return mifair::ErrorKind::value;
}

#define CHECK_ERROR_KIND(expr, kind) CHECK(testutil::error_kind_of([&] { (void)(expr); }) == (kind))

}  // namespace testutil
