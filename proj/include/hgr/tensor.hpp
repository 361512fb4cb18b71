#pragma once

#include <cstddef>
#include <initializer_list>
#include <random>
#include <string>
#include <vector>

namespace hgr {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

// Dense row-major array of doubles. Every op in the engine works on the
// matrix view: rank 0 is 1x1, rank 1 is 1xn, rank 2 is rows x cols.
struct Tensor {
  Shape shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);
  Tensor(Shape s, std::vector<double> v);

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor row(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor({1, n}, std::move(v));
  }
  static Tensor scalar(double v) { return Tensor({1, 1}, std::vector<double>{v}); }

  std::size_t size() const { return values.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  double* data() { return values.data(); }
  const double* data() const { return values.data(); }
  double& operator()(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
  double item() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

// Uniform samples in +-sqrt(6 / (fan_in + fan_out)). Requires a 2-D shape.
Tensor glorot_init(const Shape& shape, std::mt19937_64& rng);

Tensor normal_init(const Shape& shape, double stddev, std::mt19937_64& rng);

}  // namespace hgr
