#include "hgr/transformer.hpp"

#include "hgr/error.hpp"

namespace hgr {

EncoderLayer EncoderLayer::create(ParamStore& store, const std::string& prefix, std::size_t width,
                                  std::size_t hidden, std::mt19937_64& rng) {
  auto weight = [&](const char* name, std::size_t in, std::size_t out) {
    return &store.add(prefix + "." + name, glorot_init({in, out}, rng));
  };
  auto constant = [&](const char* name, std::size_t n, double fill) {
    return &store.add(prefix + "." + name, Tensor({1, n}, fill));
  };
  EncoderLayer l;
  l.wq = weight("wq", width, width);
  l.bq = constant("bq", width, 0.0);
  l.wk = weight("wk", width, width);
  l.bk = constant("bk", width, 0.0);
  l.wv = weight("wv", width, width);
  l.bv = constant("bv", width, 0.0);
  l.wo = weight("wo", width, width);
  l.bo = constant("bo", width, 0.0);
  l.ln1_gain = constant("ln1_gain", width, 1.0);
  l.ln1_bias = constant("ln1_bias", width, 0.0);
  l.w1 = weight("w1", width, hidden);
  l.b1 = constant("b1", hidden, 0.0);
  l.w2 = weight("w2", hidden, width);
  l.b2 = constant("b2", width, 0.0);
  l.ln2_gain = constant("ln2_gain", width, 1.0);
  l.ln2_bias = constant("ln2_bias", width, 0.0);
  return l;
}

Var encoder_layer(Var tokens, const EncoderLayer& layer, std::span<const Segment> segments,
                  const EncoderSettings& settings, std::vector<std::vector<double>>* cls_weights) {
  Tape& t = *tokens.tape;
  const std::size_t width = layer.width();
  if (tokens.cols() != width) {
    throw ShapeError("encoder layer expects width " + std::to_string(width) + ", got " +
                     std::to_string(tokens.cols()));
  }
  if (settings.heads == 0 || width % settings.heads != 0) {
    throw ConfigError("model width " + std::to_string(width) + " is not divisible by " +
                      std::to_string(settings.heads) + " heads");
  }
  auto affine = [&](Var x, Parameter* w, Parameter* b) { return add_row(matmul(x, t.parameter(*w)), t.parameter(*b)); };

  Var q = affine(tokens, layer.wq, layer.bq);
  Var k = affine(tokens, layer.wk, layer.bk);
  Var v = affine(tokens, layer.wv, layer.bv);
  Var attended = segment_attention(q, k, v, segments, settings.heads, settings.dropout, cls_weights);
  Var projected = affine(attended, layer.wo, layer.bo);
  Var x1 = layer_norm(add(tokens, projected), t.parameter(*layer.ln1_gain), t.parameter(*layer.ln1_bias));

  Var ff = affine(gelu(affine(x1, layer.w1, layer.b1)), layer.w2, layer.b2);
  ff = dropout(ff, settings.dropout);
  return layer_norm(add(x1, ff), t.parameter(*layer.ln2_gain), t.parameter(*layer.ln2_bias));
}

Var transformer_encoder_layer(Var tokens, const EncoderLayer& layer, const EncoderSettings& settings) {
  const Segment whole{0, tokens.rows()};
  return encoder_layer(tokens, layer, std::span<const Segment>(&whole, 1), settings);
}

EncoderStack::EncoderStack(ParamStore& store, const std::string& prefix, std::size_t layers, std::size_t width,
                           std::size_t hidden, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < layers; ++i) {
    layers_.push_back(EncoderLayer::create(store, prefix + ".layer" + std::to_string(i), width, hidden, rng));
  }
}

Var EncoderStack::forward(Var tokens, std::span<const Segment> segments, const EncoderSettings& settings,
                          std::vector<std::vector<double>>* cls_weights) const {
  Var x = tokens;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const bool last = i + 1 == layers_.size();
    x = encoder_layer(x, layers_[i], segments, settings, last ? cls_weights : nullptr);
  }
  return x;
}

}  // namespace hgr
