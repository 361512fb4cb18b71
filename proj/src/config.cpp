#include "hgr/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "hgr/error.hpp"

namespace hgr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> to_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

const char* to_string(Variant v) { return v == Variant::Full ? "full" : "intra-edge"; }

Variant parse_variant(const std::string& s) {
  if (s == "full") return Variant::Full;
  if (s == "intra-edge") return Variant::IntraEdge;
  throw ConfigError("unknown variant '" + s + "' (expected full or intra-edge)");
}

TrainConfig TrainConfig::resolved() const {
  TrainConfig c = *this;
  const bool psr = task == Task::PairwiseSubgraph;
  if (c.epochs == 0) c.epochs = psr ? 50 : 300;
  if (c.negatives == 0) c.negatives = psr ? 1 : 50;
  if (c.e2v_cap == 0) c.e2v_cap = 2 * c.fanout;
  if (c.sample_hops == 0) c.sample_hops = c.iterations;
  if (c.lr_min == 0.0) c.lr_min = c.lr / 100.0;
  if (c.variant == Variant::IntraEdge) c.iterations = 1;
  return c;
}

void TrainConfig::validate() const {
  if (batch_size == 0 || dim == 0 || layers == 0 || heads == 0 || hidden == 0 || iterations == 0 || fanout == 0 ||
      max_arity < 2 || eval_every == 0 || threads == 0) {
    throw ConfigError("sizes, K, m, eval_every and threads must be positive and max_arity >= 2");
  }
  if (dim % heads != 0) {
    throw ConfigError("dim " + std::to_string(dim) + " is not divisible by heads " + std::to_string(heads));
  }
  if (!(lr >= 0.0) || !(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("lr must be >= 0 and dropout in [0, 1)");
  if (!(plateau_factor > 0.0 && plateau_factor <= 1.0)) throw ConfigError("plateau_factor must be in (0, 1]");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0) || !(adam_eps > 0.0) || weight_decay < 0.0) {
    throw ConfigError("invalid AdamW settings");
  }
  if (task == Task::PairwiseSubgraph && variant == Variant::IntraEdge) {
    throw ConfigError("the intra-edge variant is defined for tr-ef and tr-nef only");
  }
}

ModelConfig TrainConfig::model_config(std::size_t relation_count, std::size_t feature_dim) const {
  const TrainConfig c = resolved();
  ModelConfig m;
  m.task = c.task;
  m.kind = c.kind;
  m.positions = c.positions;
  m.main_qualifier_positions = c.main_qualifier_positions;
  m.relation_count = relation_count;
  m.dim = c.dim;
  m.layers = c.layers;
  m.heads = c.heads;
  m.hidden = c.hidden;
  m.dropout = c.dropout;
  m.max_arity = c.max_arity;
  m.iterations = c.iterations;
  m.sample_hops = c.sample_hops;
  m.e2v_cap = c.e2v_cap;
  m.feature_dim = c.task == Task::TransferWithFeatures ? feature_dim : 0;
  return m;
}

void apply_setting(TrainConfig& c, const std::string& key, const std::string& v) {
  if (key == "task") c.task = parse_task(v);
  else if (key == "kind") c.kind = parse_multiset_kind(v);
  else if (key == "positions") c.positions = parse_position_scheme(v);
  else if (key == "variant") c.variant = parse_variant(v);
  else if (key == "main_qualifier_positions") c.main_qualifier_positions = to_bool(key, v);
  else if (key == "batch_size") c.batch_size = to_size(key, v);
  else if (key == "dim") c.dim = to_size(key, v);
  else if (key == "max_arity") c.max_arity = to_size(key, v);
  else if (key == "layers") c.layers = to_size(key, v);
  else if (key == "heads") c.heads = to_size(key, v);
  else if (key == "hidden") c.hidden = to_size(key, v);
  else if (key == "iterations") c.iterations = to_size(key, v);
  else if (key == "sample_hops") c.sample_hops = to_size(key, v);
  else if (key == "fanout") c.fanout = to_size(key, v);
  else if (key == "e2v_cap") c.e2v_cap = to_size(key, v);
  else if (key == "negatives") c.negatives = to_size(key, v);
  else if (key == "lr") c.lr = to_double(key, v);
  else if (key == "dropout") c.dropout = to_double(key, v);
  else if (key == "epochs") c.epochs = to_size(key, v);
  else if (key == "seed") c.seed = to_size(key, v);
  else if (key == "plateau_factor") c.plateau_factor = to_double(key, v);
  else if (key == "plateau_patience") c.plateau_patience = to_size(key, v);
  else if (key == "lr_min") c.lr_min = to_double(key, v);
  else if (key == "beta1") c.beta1 = to_double(key, v);
  else if (key == "beta2") c.beta2 = to_double(key, v);
  else if (key == "adam_eps") c.adam_eps = to_double(key, v);
  else if (key == "weight_decay") c.weight_decay = to_double(key, v);
  else if (key == "train_roles") c.train_roles = to_list(v);
  else if (key == "primary_only") c.primary_only = to_bool(key, v);
  else if (key == "eval_every") c.eval_every = to_size(key, v);
  else if (key == "valid_limit") c.valid_limit = to_size(key, v);
  else if (key == "eval_seed") c.eval_seed = to_size(key, v);
  else if (key == "threads") c.threads = to_size(key, v);
  else throw ConfigError("unknown config key '" + key + "'");
}

TrainConfig parse_config(std::istream& in) {
  TrainConfig c;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(number) + ": expected key = value");
    try {
      apply_setting(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(number) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse_config(in);
}

std::string format_config(const TrainConfig& c) {
  std::ostringstream out;
  out.precision(17);
  std::string roles;
  for (const auto& r : c.train_roles) roles += (roles.empty() ? "" : ",") + r;
  out << "task = " << to_string(c.task) << "\n"
      << "kind = " << to_string(c.kind) << "\n"
      << "positions = " << to_string(c.positions) << "\n"
      << "variant = " << to_string(c.variant) << "\n"
      << "main_qualifier_positions = " << (c.main_qualifier_positions ? "true" : "false") << "\n"
      << "batch_size = " << c.batch_size << "\n"
      << "dim = " << c.dim << "\n"
      << "max_arity = " << c.max_arity << "\n"
      << "layers = " << c.layers << "\n"
      << "heads = " << c.heads << "\n"
      << "hidden = " << c.hidden << "\n"
      << "iterations = " << c.iterations << "\n"
      << "sample_hops = " << c.sample_hops << "\n"
      << "fanout = " << c.fanout << "\n"
      << "e2v_cap = " << c.e2v_cap << "\n"
      << "negatives = " << c.negatives << "\n"
      << "lr = " << c.lr << "\n"
      << "dropout = " << c.dropout << "\n"
      << "epochs = " << c.epochs << "\n"
      << "seed = " << c.seed << "\n"
      << "plateau_factor = " << c.plateau_factor << "\n"
      << "plateau_patience = " << c.plateau_patience << "\n"
      << "lr_min = " << c.lr_min << "\n"
      << "beta1 = " << c.beta1 << "\n"
      << "beta2 = " << c.beta2 << "\n"
      << "adam_eps = " << c.adam_eps << "\n"
      << "weight_decay = " << c.weight_decay << "\n"
      << "train_roles = " << roles << "\n"
      << "primary_only = " << (c.primary_only ? "true" : "false") << "\n"
      << "eval_every = " << c.eval_every << "\n"
      << "valid_limit = " << c.valid_limit << "\n"
      << "eval_seed = " << c.eval_seed << "\n"
      << "threads = " << c.threads << "\n";
  return out.str();
}

}  // namespace hgr
