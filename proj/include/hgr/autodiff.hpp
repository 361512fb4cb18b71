#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <deque>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hgr/tensor.hpp"

namespace hgr {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

// Named parameters in insertion order. References stay valid as parameters
// are added.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Tensor value);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  std::vector<Tensor> snapshot() const;
  void restore(const std::vector<Tensor>& values);

 private:
  std::deque<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

class Tape;

// Handle to a recorded value.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

// Records forward ops; backward() walks them in reverse creation order, which
// is a topological order because inputs always exist before outputs.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool train = false, std::mt19937_64* rng = nullptr) : train_(train), rng_(rng) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  // Leaf bound to a stored parameter; backward() accumulates into p.grad.
  Var parameter(Parameter& p);

  const Tensor& value(std::size_t id) const;
  // Gradient buffer of a node, allocated as zeros on first use.
  Tensor& grad(std::size_t id);
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.values.empty(); }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Appends an op result. Throws NumericError when `value` is not finite.
  Var record(const char* op, Tensor value, std::span<const Var> inputs, BackwardFn backward);
  Var record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
    return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
  }

  // Seeds d(loss)/d(loss) = 1 and propagates to every input that requires a
  // gradient. Parameter leaves add their gradient into the ParamStore.
  void backward(Var loss);
  // Gradient of a leaf after backward(); zeros when unreachable.
  Tensor gradient(Var v) const;

  bool training() const { return train_; }
  std::mt19937_64* rng() const { return rng_; }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Parameter* param = nullptr;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool train_ = false;
  std::mt19937_64* rng_ = nullptr;
};

// Row mixing: output row i = sum over k in [offsets[i], offsets[i+1]) of
// weights[k] * input row index[k]. Covers gather, mean and sum pooling.
struct RowMix {
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> index;
  std::vector<double> weights;

  std::size_t rows() const { return offsets.size() - 1; }
  void add(std::size_t src, double w = 1.0) {
    index.push_back(src);
    weights.push_back(w);
  }
  void close_row() { offsets.push_back(index.size()); }
  static RowMix gather(std::span<const std::size_t> rows);
};

// Contiguous block of rows forming one attention sequence.
struct Segment {
  std::size_t start = 0;
  std::size_t length = 0;
};

Var matmul(Var a, Var b);
// a * b^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
// Adds a 1 x c row to every row of a.
Var add_row(Var a, Var row);
Var gelu(Var a);
Var relu(Var a);
Var sigmoid(Var a);
Var softmax_rows(Var a);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
// Inverted dropout; identity unless the tape is in training mode.
Var dropout(Var a, double rate);
Var mix_rows(Var table, const RowMix& mix);
Var sum_all(Var a);
Var mean_all(Var a);
Var concat_rows(std::span<const Var> parts);

// Per-sequence multi-head scaled dot-product attention over packed rows.
// When `cls_weights` is non-null it receives, per segment, the head-averaged
// attention of the segment's first row (before dropout).
Var segment_attention(Var q, Var k, Var v, std::span<const Segment> segments, std::size_t heads,
                      double dropout_rate, std::vector<std::vector<double>>* cls_weights = nullptr);

// Binary cross entropy summed over entries; probabilities are clamped to
// [1e-7, 1 - 1e-7].
Var bce_loss(Var probabilities, const std::vector<double>& labels);
// Same loss evaluated from logits z (p = sigmoid(z)) as softplus(z) - y z;
// the gradient sigmoid(z) - y stays alive when p saturates.
Var bce_with_logits(Var logits, const std::vector<double>& labels);

inline constexpr double kProbabilityClamp = 1e-7;

}  // namespace hgr
