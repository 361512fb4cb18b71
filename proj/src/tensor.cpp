#include "hgr/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "hgr/error.hpp"

namespace hgr {

namespace {

std::size_t product(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), values(product(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
  if (values.size() != product(shape)) {
    throw ShapeError("tensor of shape " + shape_string(shape) + " given " + std::to_string(values.size()) +
                     " values");
  }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  Tensor t = Tensor::matrix(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged rows");
    for (double x : row) t.values[i++] = x;
  }
  return t;
}

std::size_t Tensor::rows() const {
  if (shape.size() > 2) throw ShapeError("expected rank <= 2, got " + shape_string(shape));
  return shape.size() == 2 ? shape[0] : 1;
}

std::size_t Tensor::cols() const {
  if (shape.size() > 2) throw ShapeError("expected rank <= 2, got " + shape_string(shape));
  return shape.empty() ? 1 : shape.back();
}

double Tensor::item() const {
  if (values.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape));
  return values[0];
}

Tensor glorot_init(const Shape& shape, std::mt19937_64& rng) {
  if (shape.size() != 2) throw ConfigError("glorot_init needs a 2-D shape, got " + shape_string(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(shape);
  for (double& x : t.values) x = dist(rng);
  return t;
}

Tensor normal_init(const Shape& shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(shape);
  for (double& x : t.values) x = dist(rng);
  return t;
}

}  // namespace hgr
