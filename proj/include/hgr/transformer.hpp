#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "hgr/autodiff.hpp"

namespace hgr {

struct EncoderSettings {
  std::size_t heads = 4;
  double dropout = 0.0;
};

// Parameters of one post-norm encoder layer, owned by a ParamStore.
struct EncoderLayer {
  Parameter* wq = nullptr;
  Parameter* bq = nullptr;
  Parameter* wk = nullptr;
  Parameter* bk = nullptr;
  Parameter* wv = nullptr;
  Parameter* bv = nullptr;
  Parameter* wo = nullptr;
  Parameter* bo = nullptr;
  Parameter* ln1_gain = nullptr;
  Parameter* ln1_bias = nullptr;
  Parameter* w1 = nullptr;
  Parameter* b1 = nullptr;
  Parameter* w2 = nullptr;
  Parameter* b2 = nullptr;
  Parameter* ln2_gain = nullptr;
  Parameter* ln2_bias = nullptr;

  // Registers "<prefix>.wq" and friends; weights Glorot, biases 0, gains 1.
  static EncoderLayer create(ParamStore& store, const std::string& prefix, std::size_t width, std::size_t hidden,
                             std::mt19937_64& rng);
  std::size_t width() const { return wq->value.rows(); }
};

// Multi-head self-attention (no mask) + residual + layer norm, then a GELU
// feed-forward block + residual + layer norm. Each segment is attended
// independently. Dropout hits the attention weights and the feed-forward
// output when the tape is in training mode.
Var encoder_layer(Var tokens, const EncoderLayer& layer, std::span<const Segment> segments,
                  const EncoderSettings& settings, std::vector<std::vector<double>>* cls_weights = nullptr);

// Single-sequence form: tokens is T x d and attends over all T rows.
Var transformer_encoder_layer(Var tokens, const EncoderLayer& layer, const EncoderSettings& settings);

class EncoderStack {
 public:
  EncoderStack() = default;
  EncoderStack(ParamStore& store, const std::string& prefix, std::size_t layers, std::size_t width,
               std::size_t hidden, std::mt19937_64& rng);

  // Runs every layer; cls_weights (optional) gets the last layer's
  // first-row attention per segment.
  Var forward(Var tokens, std::span<const Segment> segments, const EncoderSettings& settings,
              std::vector<std::vector<double>>* cls_weights = nullptr) const;
  std::size_t depth() const { return layers_.size(); }

 private:
  std::vector<EncoderLayer> layers_;
};

}  // namespace hgr
