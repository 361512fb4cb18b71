#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "hgr/model.hpp"

namespace hgr {

enum class Variant { Full, IntraEdge };

const char* to_string(Variant v);
Variant parse_variant(const std::string& s);

// Training and model settings. Zero for epochs, negatives, e2v_cap,
// sample_hops and lr_min means "derive from the other fields"; resolved()
// fills them in.
struct TrainConfig {
  Task task = Task::TransferNoFeatures;
  MultisetKind kind = MultisetKind::RelationalTransformer;
  PositionScheme positions = PositionScheme::Random;
  Variant variant = Variant::Full;
  bool main_qualifier_positions = false;

  std::size_t batch_size = 128;
  std::size_t dim = 200;
  std::size_t max_arity = kDefaultMaxArity;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t hidden = 512;
  std::size_t iterations = 2;  // K
  std::size_t sample_hops = 0;
  std::size_t fanout = 16;     // m
  std::size_t e2v_cap = 0;
  std::size_t negatives = 0;
  double lr = 5e-4;
  double dropout = 0.1;
  std::size_t epochs = 0;
  std::uint64_t seed = 42;

  double plateau_factor = 0.5;
  std::size_t plateau_patience = 5;
  double lr_min = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;

  // Relation names whose slots are ablated into training instances; empty = all.
  std::vector<std::string> train_roles;
  // Ablate only primary slots.
  bool primary_only = false;
  std::size_t eval_every = 1;
  // Validation queries used for model selection; 0 = all.
  std::size_t valid_limit = 0;
  std::uint64_t eval_seed = 7;
  std::size_t threads = 1;

  TrainConfig resolved() const;
  void validate() const;
  ModelConfig model_config(std::size_t relation_count, std::size_t feature_dim) const;
};

// Parses "key = value" lines; '#' starts a comment. Unknown keys and bad
// values raise ConfigError naming the line.
TrainConfig parse_config(std::istream& in);
TrainConfig load_config(const std::string& path);
// Applies one key/value on top of `config`.
void apply_setting(TrainConfig& config, const std::string& key, const std::string& value);
std::string format_config(const TrainConfig& config);

}  // namespace hgr
