#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gsid/common.hpp"

namespace gsid::num {

/// Dense row-major tensor of doubles.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, double fill = 0.0) : shape(std::move(s)) {
    for (int d : shape) {
      if (d < 0) throw ShapeError("negative dimension");
    }
    values.assign(count(shape), fill);
  }
  Tensor(std::vector<int> s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    if (values.size() != count(shape)) throw ShapeError("value count does not match shape " + shape_string());
  }

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }
  static Tensor matrix(int rows, int cols, double fill = 0.0) { return Tensor({rows, cols}, fill); }
  static Tensor vector(int n, double fill = 0.0) { return Tensor({n}, fill); }

  static std::size_t count(const std::vector<int>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1},
                           [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
  }

  std::size_t size() const { return values.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int cols() const { return rank() >= 2 ? static_cast<int>(size() / std::max(rows(), 1)) : 1; }

  double& operator()(int r, int c) { return values[static_cast<std::size_t>(r) * cols() + c]; }
  double operator()(int r, int c) const { return values[static_cast<std::size_t>(r) * cols() + c]; }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  std::string shape_string() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + std::to_string(shape[i]);
    return s + "]";
  }

  bool all_finite() const {
    for (double v : values) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

/// Views any tensor as rows x cols (rank-1 tensors are column vectors).
inline ConstMatrixMap as_matrix(const Tensor& t) { return ConstMatrixMap(t.values.data(), t.rows(), t.cols()); }
inline MatrixMap as_matrix(Tensor& t) { return MatrixMap(t.values.data(), t.rows(), t.cols()); }

inline Tensor glorot_uniform(int rows, int cols, Rng& rng) {
  Tensor t = Tensor::matrix(rows, cols);
  const double limit = std::sqrt(6.0 / (rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& v : t.values) v = dist(rng);
  return t;
}

}  // namespace gsid::num
