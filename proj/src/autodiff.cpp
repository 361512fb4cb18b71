#include "hgr/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "hgr/error.hpp"

namespace hgr {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap view(const Tensor& t) { return ConstMap(t.data(), t.rows(), t.cols()); }
MutMap view(Tensor& t) { return MutMap(t.data(), t.rows(), t.cols()); }

Tape& same_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw ContractError("operands recorded on different tapes");
  return *a.tape;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_string(a.shape) + " and " + shape_string(b.shape) +
                     " differ");
  }
}

Shape matrix_shape(std::size_t r, std::size_t c) { return {r, c}; }

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

}  // namespace

// ---------------------------------------------------------------- ParamStore

Parameter& ParamStore::add(const std::string& name, Tensor value) {
  if (contains(name)) throw ContractError("duplicate parameter name " + name);
  index_.emplace(name, params_.size());
  params_.push_back(Parameter{name, std::move(value), {}});
  return params_.back();
}

Parameter& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter " + name);
  return params_[it->second];
}

const Parameter& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter " + name);
  return params_[it->second];
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad = Tensor(p.value.shape, 0.0);
}

std::vector<Tensor> ParamStore::snapshot() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.value);
  return out;
}

void ParamStore::restore(const std::vector<Tensor>& values) {
  if (values.size() != params_.size()) throw ContractError("snapshot size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].shape != params_[i].value.shape) throw ShapeError("snapshot shape mismatch for " + params_[i].name);
    params_[i].value = values[i];
  }
}

// ---------------------------------------------------------------------- Tape

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::parameter(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return {this, it->second};
  Node n;
  n.external = &p.value;
  n.param = &p;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return {this, nodes_.size() - 1};
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.value;
}

Tensor& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.values.empty()) n.grad = Tensor(value(id).shape, 0.0);
  return n.grad;
}

Var Tape::record(const char* op, Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  for (double x : value.values) {
    if (!std::isfinite(x)) throw NumericError(std::string(op) + " produced a non-finite value");
  }
  Node n;
  n.value = std::move(value);
  for (Var in : inputs) {
    if (in.tape != this) throw ContractError(std::string(op) + ": input from another tape");
    n.requires_grad = n.requires_grad || nodes_[in.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw ContractError("loss was recorded on another tape");
  if (value(loss.id).size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_string(value(loss.id).shape));
  }
  grad(loss.id).values[0] += 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.values.empty()) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param) {
      Parameter& p = *n.param;
      if (p.grad.shape != p.value.shape) p.grad = Tensor(p.value.shape, 0.0);
      for (std::size_t k = 0; k < p.grad.size(); ++k) p.grad.values[k] += n.grad.values[k];
    }
  }
}

Tensor Tape::gradient(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.values.empty()) return Tensor(value(v.id).shape, 0.0);
  return n.grad;
}

RowMix RowMix::gather(std::span<const std::size_t> rows) {
  RowMix m;
  for (std::size_t r : rows) {
    m.add(r);
    m.close_row();
  }
  return m;
}

// ----------------------------------------------------------------------- ops

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.rows()) {
    throw ShapeError("matmul: inner dimensions differ for " + shape_string(A.shape) + " and " + shape_string(B.shape));
  }
  Tensor C(matrix_shape(A.rows(), B.cols()));
  view(C).noalias() = view(A) * view(B);
  return t.record("matmul", std::move(C), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Tensor& dC = tp.grad(self);
    if (tp.requires_grad(a.id)) view(tp.grad(a.id)).noalias() += view(dC) * view(tp.value(b.id)).transpose();
    if (tp.requires_grad(b.id)) view(tp.grad(b.id)).noalias() += view(tp.value(a.id)).transpose() * view(dC);
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.cols()) {
    throw ShapeError("matmul_nt: column counts differ for " + shape_string(A.shape) + " and " +
                     shape_string(B.shape));
  }
  Tensor C(matrix_shape(A.rows(), B.rows()));
  view(C).noalias() = view(A) * view(B).transpose();
  return t.record("matmul_nt", std::move(C), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Tensor& dC = tp.grad(self);
    if (tp.requires_grad(a.id)) view(tp.grad(a.id)).noalias() += view(dC) * view(tp.value(b.id));
    if (tp.requires_grad(b.id)) view(tp.grad(b.id)).noalias() += view(dC).transpose() * view(tp.value(a.id));
  });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape("add", a.value(), b.value());
  Tensor C = a.value();
  view(C) += view(b.value());
  return t.record("add", std::move(C), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Tensor& dC = tp.grad(self);
    if (tp.requires_grad(a.id)) view(tp.grad(a.id)) += view(dC);
    if (tp.requires_grad(b.id)) view(tp.grad(b.id)) += view(dC);
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape("sub", a.value(), b.value());
  Tensor C = a.value();
  view(C) -= view(b.value());
  return t.record("sub", std::move(C), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Tensor& dC = tp.grad(self);
    if (tp.requires_grad(a.id)) view(tp.grad(a.id)) += view(dC);
    if (tp.requires_grad(b.id)) view(tp.grad(b.id)) -= view(dC);
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape("mul", a.value(), b.value());
  Tensor C = a.value();
  view(C).array() *= view(b.value()).array();
  return t.record("mul", std::move(C), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Tensor& dC = tp.grad(self);
    if (tp.requires_grad(a.id)) view(tp.grad(a.id)).array() += view(dC).array() * view(tp.value(b.id)).array();
    if (tp.requires_grad(b.id)) view(tp.grad(b.id)).array() += view(dC).array() * view(tp.value(a.id)).array();
  });
}

Var scale(Var a, double s) {
  Tensor C = a.value();
  for (double& x : C.values) x *= s;
  return a.tape->record("scale", std::move(C), {a}, [a, s](Tape& tp, std::size_t self) {
    view(tp.grad(a.id)) += s * view(tp.grad(self));
  });
}

Var add_row(Var a, Var row) {
  Tape& t = same_tape(a, row);
  const Tensor& A = a.value();
  const Tensor& R = row.value();
  if (R.rows() != 1 || R.cols() != A.cols()) {
    throw ShapeError("add_row: row " + shape_string(R.shape) + " does not match " + shape_string(A.shape));
  }
  Tensor C = A;
  view(C).rowwise() += view(R).row(0);
  return t.record("add_row", std::move(C), {a, row}, [a, row](Tape& tp, std::size_t self) {
    const Tensor& dC = tp.grad(self);
    if (tp.requires_grad(a.id)) view(tp.grad(a.id)) += view(dC);
    if (tp.requires_grad(row.id)) view(tp.grad(row.id)) += view(dC).colwise().sum();
  });
}

Var gelu(Var a) {
  Tensor C = a.value();
  for (double& x : C.values) {
    const double u = kGeluC * (x + kGeluA * x * x * x);
    x = 0.5 * x * (1.0 + std::tanh(u));
  }
  return a.tape->record("gelu", std::move(C), {a}, [a](Tape& tp, std::size_t self) {
    const Tensor& X = tp.value(a.id);
    const Tensor& dC = tp.grad(self);
    Tensor& dA = tp.grad(a.id);
    for (std::size_t i = 0; i < X.size(); ++i) {
      const double x = X.values[i];
      const double th = std::tanh(kGeluC * (x + kGeluA * x * x * x));
      const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
      dA.values[i] += dC.values[i] * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du);
    }
  });
}

Var relu(Var a) {
  Tensor C = a.value();
  for (double& x : C.values) x = std::max(x, 0.0);
  return a.tape->record("relu", std::move(C), {a}, [a](Tape& tp, std::size_t self) {
    const Tensor& X = tp.value(a.id);
    const Tensor& dC = tp.grad(self);
    Tensor& dA = tp.grad(a.id);
    for (std::size_t i = 0; i < X.size(); ++i) {
      if (X.values[i] > 0) dA.values[i] += dC.values[i];
    }
  });
}

Var sigmoid(Var a) {
  Tensor C = a.value();
  for (double& x : C.values) x = 1.0 / (1.0 + std::exp(-x));
  return a.tape->record("sigmoid", std::move(C), {a}, [a](Tape& tp, std::size_t self) {
    const Tensor& Y = tp.value(self);
    const Tensor& dC = tp.grad(self);
    Tensor& dA = tp.grad(a.id);
    for (std::size_t i = 0; i < Y.size(); ++i) dA.values[i] += dC.values[i] * Y.values[i] * (1.0 - Y.values[i]);
  });
}

Var softmax_rows(Var a) {
  const Tensor& A = a.value();
  Tensor C = A;
  const std::size_t rows = A.rows();
  const std::size_t cols = A.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = C.data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      total += row[c];
    }
    for (std::size_t c = 0; c < cols; ++c) row[c] /= total;
  }
  return a.tape->record("softmax_rows", std::move(C), {a}, [a, rows, cols](Tape& tp, std::size_t self) {
    const Tensor& Y = tp.value(self);
    const Tensor& dC = tp.grad(self);
    Tensor& dA = tp.grad(a.id);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = Y.data() + r * cols;
      const double* dy = dC.data() + r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += dy[c] * y[c];
      for (std::size_t c = 0; c < cols; ++c) dA.values[r * cols + c] += y[c] * (dy[c] - dot);
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape& t = same_tape(x, gain);
  same_tape(x, bias);
  const Tensor& X = x.value();
  const std::size_t rows = X.rows();
  const std::size_t cols = X.cols();
  if (gain.value().size() != cols || bias.value().size() != cols) {
    throw ShapeError("layer_norm: gain/bias must have " + std::to_string(cols) + " entries");
  }
  auto xhat = std::make_shared<Tensor>(X.shape);
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  Tensor Y(X.shape);
  const double* g = gain.value().data();
  const double* b = bias.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = X.data() + r * cols;
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += in[c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < cols; ++c) {
      const double h = (in[c] - mean) * is;
      xhat->values[r * cols + c] = h;
      Y.values[r * cols + c] = g[c] * h + b[c];
    }
  }
  return t.record("layer_norm", std::move(Y), {x, gain, bias},
                  [x, gain, bias, xhat, inv_std, rows, cols](Tape& tp, std::size_t self) {
                    const Tensor& dY = tp.grad(self);
                    const double* g = tp.value(gain.id).data();
                    if (tp.requires_grad(gain.id) || tp.requires_grad(bias.id)) {
                      Tensor& dg = tp.grad(gain.id);
                      Tensor& db = tp.grad(bias.id);
                      for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t c = 0; c < cols; ++c) {
                          dg.values[c] += dY.values[r * cols + c] * xhat->values[r * cols + c];
                          db.values[c] += dY.values[r * cols + c];
                        }
                      }
                    }
                    if (!tp.requires_grad(x.id)) return;
                    Tensor& dX = tp.grad(x.id);
                    std::vector<double> dh(cols);
                    for (std::size_t r = 0; r < rows; ++r) {
                      double mean_dh = 0.0;
                      double mean_dh_h = 0.0;
                      for (std::size_t c = 0; c < cols; ++c) {
                        dh[c] = dY.values[r * cols + c] * g[c];
                        mean_dh += dh[c];
                        mean_dh_h += dh[c] * xhat->values[r * cols + c];
                      }
                      mean_dh /= static_cast<double>(cols);
                      mean_dh_h /= static_cast<double>(cols);
                      for (std::size_t c = 0; c < cols; ++c) {
                        dX.values[r * cols + c] +=
                            (*inv_std)[r] * (dh[c] - mean_dh - xhat->values[r * cols + c] * mean_dh_h);
                      }
                    }
                  });
}

Var dropout(Var a, double rate) {
  Tape& t = *a.tape;
  if (!t.training() || rate <= 0.0) return a;
  if (rate >= 1.0) throw ConfigError("dropout rate must be < 1");
  if (t.rng() == nullptr) throw ContractError("dropout in training mode needs an rng");
  std::bernoulli_distribution keep(1.0 - rate);
  const double s = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(a.value().size());
  Tensor C = a.value();
  for (std::size_t i = 0; i < C.size(); ++i) {
    (*mask)[i] = keep(*t.rng()) ? s : 0.0;
    C.values[i] *= (*mask)[i];
  }
  return t.record("dropout", std::move(C), {a}, [a, mask](Tape& tp, std::size_t self) {
    const Tensor& dC = tp.grad(self);
    Tensor& dA = tp.grad(a.id);
    for (std::size_t i = 0; i < dC.size(); ++i) dA.values[i] += dC.values[i] * (*mask)[i];
  });
}

Var mix_rows(Var table, const RowMix& mix) {
  const Tensor& T = table.value();
  const std::size_t cols = T.cols();
  const std::size_t src_rows = T.rows();
  for (std::size_t idx : mix.index) {
    if (idx >= src_rows) throw ShapeError("mix_rows: row index " + std::to_string(idx) + " out of range");
  }
  Tensor C = Tensor::matrix(mix.rows(), cols);
  for (std::size_t r = 0; r < mix.rows(); ++r) {
    double* out = C.data() + r * cols;
    for (std::size_t k = mix.offsets[r]; k < mix.offsets[r + 1]; ++k) {
      const double* in = T.data() + mix.index[k] * cols;
      const double w = mix.weights[k];
      for (std::size_t c = 0; c < cols; ++c) out[c] += w * in[c];
    }
  }
  auto shared = std::make_shared<RowMix>(mix);
  return table.tape->record("mix_rows", std::move(C), {table}, [table, shared, cols](Tape& tp, std::size_t self) {
    const Tensor& dC = tp.grad(self);
    Tensor& dT = tp.grad(table.id);
    const RowMix& m = *shared;
    for (std::size_t r = 0; r < m.rows(); ++r) {
      const double* g = dC.data() + r * cols;
      for (std::size_t k = m.offsets[r]; k < m.offsets[r + 1]; ++k) {
        double* out = dT.data() + m.index[k] * cols;
        const double w = m.weights[k];
        for (std::size_t c = 0; c < cols; ++c) out[c] += w * g[c];
      }
    }
  });
}

Var sum_all(Var a) {
  double total = 0.0;
  for (double x : a.value().values) total += x;
  return a.tape->record("sum_all", Tensor::scalar(total), {a}, [a](Tape& tp, std::size_t self) {
    const double g = tp.grad(self).values[0];
    for (double& x : tp.grad(a.id).values) x += g;
  });
}

Var mean_all(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum_all(a), 1.0 / n);
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows of nothing");
  Tape& t = *parts[0].tape;
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (Var p : parts) {
    if (p.tape != &t) throw ContractError("concat_rows: inputs from different tapes");
    if (p.cols() != cols) throw ShapeError("concat_rows: column counts differ");
    rows += p.rows();
  }
  Tensor C = Tensor::matrix(rows, cols);
  std::size_t at = 0;
  for (Var p : parts) {
    const Tensor& v = p.value();
    std::copy(v.values.begin(), v.values.end(), C.values.begin() + static_cast<std::ptrdiff_t>(at));
    at += v.size();
  }
  auto inputs = std::make_shared<std::vector<Var>>(parts.begin(), parts.end());
  return t.record("concat_rows", std::move(C), parts, [inputs](Tape& tp, std::size_t self) {
    const Tensor& dC = tp.grad(self);
    std::size_t at = 0;
    for (Var p : *inputs) {
      const std::size_t n = tp.value(p.id).size();
      if (tp.requires_grad(p.id)) {
        Tensor& g = tp.grad(p.id);
        for (std::size_t i = 0; i < n; ++i) g.values[i] += dC.values[at + i];
      }
      at += n;
    }
  });
}

Var segment_attention(Var q, Var k, Var v, std::span<const Segment> segments, std::size_t heads,
                      double dropout_rate, std::vector<std::vector<double>>* cls_weights) {
  Tape& t = same_tape(q, k);
  same_tape(q, v);
  const Tensor& Q = q.value();
  const Tensor& K = k.value();
  const Tensor& V = v.value();
  require_same_shape("segment_attention", Q, K);
  require_same_shape("segment_attention", Q, V);
  const std::size_t d = Q.cols();
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("model width " + std::to_string(d) + " is not divisible by " + std::to_string(heads) + " heads");
  }
  const std::size_t dk = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  const bool drop = t.training() && dropout_rate > 0.0;
  if (drop && t.rng() == nullptr) throw ContractError("attention dropout in training mode needs an rng");
  std::bernoulli_distribution keep(1.0 - std::min(dropout_rate, 0.999));
  const double keep_scale = drop ? 1.0 / (1.0 - dropout_rate) : 1.0;

  // probs holds softmax weights, used holds the (possibly dropped) weights
  // actually applied to V. Layout per segment: heads blocks of len x len.
  auto probs = std::make_shared<std::vector<double>>();
  auto used = std::make_shared<std::vector<double>>();
  auto offsets = std::make_shared<std::vector<std::size_t>>();
  auto segs = std::make_shared<std::vector<Segment>>(segments.begin(), segments.end());
  std::size_t total = 0;
  for (const Segment& s : segments) {
    if (s.length == 0 || s.start + s.length > Q.rows()) throw ShapeError("segment_attention: bad segment");
    offsets->push_back(total);
    total += heads * s.length * s.length;
  }
  probs->resize(total);
  if (drop) used->resize(total);
  if (cls_weights) cls_weights->assign(segments.size(), {});

  Tensor O = Tensor::matrix(Q.rows(), d);
  for (std::size_t si = 0; si < segments.size(); ++si) {
    const Segment s = segments[si];
    const std::size_t n = s.length;
    if (cls_weights) (*cls_weights)[si].assign(n, 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
      double* P = probs->data() + (*offsets)[si] + h * n * n;
      double* U = drop ? used->data() + (*offsets)[si] + h * n * n : P;
      for (std::size_t i = 0; i < n; ++i) {
        const double* qi = Q.data() + (s.start + i) * d + h * dk;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
          const double* kj = K.data() + (s.start + j) * d + h * dk;
          double dot = 0.0;
          for (std::size_t c = 0; c < dk; ++c) dot += qi[c] * kj[c];
          P[i * n + j] = dot * inv_sqrt;
          mx = std::max(mx, P[i * n + j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          P[i * n + j] = std::exp(P[i * n + j] - mx);
          sum += P[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) P[i * n + j] /= sum;
        if (drop) {
          for (std::size_t j = 0; j < n; ++j) U[i * n + j] = keep(*t.rng()) ? P[i * n + j] * keep_scale : 0.0;
        }
        double* oi = O.data() + (s.start + i) * d + h * dk;
        for (std::size_t j = 0; j < n; ++j) {
          const double w = U[i * n + j];
          if (w == 0.0) continue;
          const double* vj = V.data() + (s.start + j) * d + h * dk;
          for (std::size_t c = 0; c < dk; ++c) oi[c] += w * vj[c];
        }
      }
      if (cls_weights) {
        for (std::size_t j = 0; j < n; ++j) (*cls_weights)[si][j] += P[j] / static_cast<double>(heads);
      }
    }
  }

  return t.record(
      "segment_attention", std::move(O), {q, k, v},
      [q, k, v, segs, offsets, probs, used, heads, dk, d, inv_sqrt, drop, keep_scale](Tape& tp, std::size_t self) {
        const Tensor& dO = tp.grad(self);
        const Tensor& Q = tp.value(q.id);
        const Tensor& K = tp.value(k.id);
        const Tensor& V = tp.value(v.id);
        const bool gq = tp.requires_grad(q.id);
        const bool gk = tp.requires_grad(k.id);
        const bool gv = tp.requires_grad(v.id);
        double* dQ = gq ? tp.grad(q.id).data() : nullptr;
        double* dK = gk ? tp.grad(k.id).data() : nullptr;
        double* dV = gv ? tp.grad(v.id).data() : nullptr;
        std::vector<double> dP;
        for (std::size_t si = 0; si < segs->size(); ++si) {
          const Segment s = (*segs)[si];
          const std::size_t n = s.length;
          dP.assign(n * n, 0.0);
          for (std::size_t h = 0; h < heads; ++h) {
            const double* P = probs->data() + (*offsets)[si] + h * n * n;
            const double* U = drop ? used->data() + (*offsets)[si] + h * n * n : P;
            // d(used) and dV
            for (std::size_t i = 0; i < n; ++i) {
              const double* go = dO.data() + (s.start + i) * d + h * dk;
              for (std::size_t j = 0; j < n; ++j) {
                const double* vj = V.data() + (s.start + j) * d + h * dk;
                double dot = 0.0;
                for (std::size_t c = 0; c < dk; ++c) dot += go[c] * vj[c];
                dP[i * n + j] = dot;
                if (gv && U[i * n + j] != 0.0) {
                  double* dvj = dV + (s.start + j) * d + h * dk;
                  const double w = U[i * n + j];
                  for (std::size_t c = 0; c < dk; ++c) dvj[c] += w * go[c];
                }
              }
            }
            if (!gq && !gk) continue;
            // through dropout and softmax
            for (std::size_t i = 0; i < n; ++i) {
              double dot = 0.0;
              for (std::size_t j = 0; j < n; ++j) {
                if (drop) dP[i * n + j] = U[i * n + j] != 0.0 ? dP[i * n + j] * keep_scale : 0.0;
                dot += dP[i * n + j] * P[i * n + j];
              }
              for (std::size_t j = 0; j < n; ++j) dP[i * n + j] = P[i * n + j] * (dP[i * n + j] - dot) * inv_sqrt;
            }
            for (std::size_t i = 0; i < n; ++i) {
              const double* qi = Q.data() + (s.start + i) * d + h * dk;
              double* dqi = gq ? dQ + (s.start + i) * d + h * dk : nullptr;
              for (std::size_t j = 0; j < n; ++j) {
                const double g = dP[i * n + j];
                if (g == 0.0) continue;
                const double* kj = K.data() + (s.start + j) * d + h * dk;
                if (gq) {
                  for (std::size_t c = 0; c < dk; ++c) dqi[c] += g * kj[c];
                }
                if (gk) {
                  double* dkj = dK + (s.start + j) * d + h * dk;
                  for (std::size_t c = 0; c < dk; ++c) dkj[c] += g * qi[c];
                }
              }
            }
          }
        }
      });
}

Var bce_loss(Var probabilities, const std::vector<double>& labels) {
  const Tensor& P = probabilities.value();
  if (P.size() != labels.size()) {
    throw ShapeError("bce_loss: " + std::to_string(P.size()) + " probabilities vs " + std::to_string(labels.size()) +
                     " labels");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    const double p = std::clamp(P.values[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
    loss -= labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
  }
  auto y = std::make_shared<std::vector<double>>(labels);
  return probabilities.tape->record("bce_loss", Tensor::scalar(loss), {probabilities},
                                    [probabilities, y](Tape& tp, std::size_t self) {
                                      const double g = tp.grad(self).values[0];
                                      const Tensor& P = tp.value(probabilities.id);
                                      Tensor& dP = tp.grad(probabilities.id);
                                      for (std::size_t i = 0; i < P.size(); ++i) {
                                        const double p = P.values[i];
                                        if (p < kProbabilityClamp || p > 1.0 - kProbabilityClamp) continue;
                                        dP.values[i] += g * (-(*y)[i] / p + (1.0 - (*y)[i]) / (1.0 - p));
                                      }
                                    });
}

Var bce_with_logits(Var logits, const std::vector<double>& labels) {
  const Tensor& Z = logits.value();
  if (Z.size() != labels.size()) {
    throw ShapeError("bce_with_logits: " + std::to_string(Z.size()) + " logits vs " + std::to_string(labels.size()) +
                     " labels");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < Z.size(); ++i) {
    const double z = Z.values[i];
    const double softplus = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    loss += softplus - labels[i] * z;
  }
  auto y = std::make_shared<std::vector<double>>(labels);
  return logits.tape->record("bce_with_logits", Tensor::scalar(loss), {logits}, [logits, y](Tape& tp, std::size_t self) {
    const double g = tp.grad(self).values[0];
    const Tensor& Z = tp.value(logits.id);
    Tensor& dZ = tp.grad(logits.id);
    for (std::size_t i = 0; i < Z.size(); ++i) {
      const double z = Z.values[i];
      const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      dZ.values[i] += g * (p - (*y)[i]);
    }
  });
}

}  // namespace hgr
