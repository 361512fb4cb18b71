#include "hgr/dataset.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hgr/error.hpp"

namespace hgr {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint32_t Vocabulary::intern(const std::string& name) {
  auto [it, added] = ids_.emplace(name, static_cast<std::uint32_t>(names_.size()));
  if (added) names_.push_back(name);
  return it->second;
}

std::optional<std::uint32_t> Vocabulary::find(const std::string& name) const {
  auto it = ids_.find(name);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

Query EvalQuery::query() const {
  Query q;
  q.pairs = fact.pairs;
  q.primary = fact.primary;
  q.missing = missing;
  q.answer = answer();
  return q;
}

std::vector<Hyperedge> to_hyperedges(const std::vector<Fact>& facts) {
  std::vector<Hyperedge> out;
  out.reserve(facts.size());
  for (const Fact& f : facts) out.push_back({0, f.pairs, f.primary});
  return out;
}

Manifest DatasetBundle::manifest() const {
  Manifest m;
  m.relations = relations.size();
  m.train_entities = train_entities.size();
  m.train_facts = train.size();
  m.inference_entities = inference_entities.size();
  m.inference_facts = inference.size();
  m.valid_queries = valid.size();
  m.test_queries = test.size();
  m.feature_dim = train_features.dim;
  std::size_t total = 0;
  std::size_t nary = 0;
  auto visit = [&](const Fact& f) {
    const std::size_t n = f.pairs.size();
    m.min_arity = total == 0 ? n : std::min(m.min_arity, n);
    m.max_arity = std::max(m.max_arity, n);
    ++total;
    if (n > 2) ++nary;
  };
  for (const Fact& f : train) visit(f);
  for (const Fact& f : inference) visit(f);
  for (const EvalQuery& q : valid) visit(q.fact);
  for (const EvalQuery& q : test) visit(q.fact);
  m.nary_proportion = total == 0 ? 0.0 : static_cast<double>(nary) / static_cast<double>(total);
  return m;
}

SemanticHypergraph DatasetBundle::train_graph(std::size_t max_arity) const {
  return build_hypergraph(to_hyperedges(train), train_entities.size(), relations.size(), {max_arity, true});
}

SemanticHypergraph DatasetBundle::inference_graph(std::size_t max_arity) const {
  return build_hypergraph(to_hyperedges(inference), inference_entities.size(), relations.size(), {max_arity, true});
}

namespace {

struct RawLine {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::vector<bool> primary;
  std::optional<std::size_t> missing;
};

std::vector<RawLine> read_jsonl(const fs::path& path, bool need_missing) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::vector<RawLine> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(number);
    try {
      const json j = json::parse(line);
      RawLine raw;
      for (const auto& p : j.at("pairs")) {
        if (!p.is_array() || p.size() != 2) throw ValidationError(where + ": each pair must be [role, entity]");
        raw.pairs.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
      }
      if (j.contains("primary")) raw.primary = j["primary"].get<std::vector<bool>>();
      if (!raw.primary.empty() && raw.primary.size() != raw.pairs.size()) {
        throw ValidationError(where + ": primary flags do not match the pair count");
      }
      if (j.contains("missing")) raw.missing = j["missing"].get<std::size_t>();
      if (need_missing && !raw.missing) throw ValidationError(where + ": query line needs \"missing\"");
      if (raw.missing && *raw.missing >= raw.pairs.size()) throw ValidationError(where + ": missing slot out of range");
      out.push_back(std::move(raw));
    } catch (const json::exception& e) {
      throw ValidationError(where + ": " + e.what());
    }
  }
  return out;
}

Fact intern_fact(const RawLine& raw, Vocabulary& relations, Vocabulary& entities) {
  Fact f;
  for (const auto& [role, entity] : raw.pairs) f.pairs.push_back({relations.intern(role), entities.intern(entity)});
  f.primary = raw.primary;
  return f;
}

json fact_json(const Fact& f, const DatasetBundle& b, const Vocabulary& entities) {
  json pairs = json::array();
  for (const RolePair& p : f.pairs) pairs.push_back({b.relations.name(p.role), entities.name(p.entity)});
  json j;
  j["pairs"] = pairs;
  if (!f.primary.empty()) j["primary"] = f.primary;
  return j;
}

json manifest_json(const Manifest& m) {
  return json{{"relations", m.relations},
              {"train_entities", m.train_entities},
              {"train_facts", m.train_facts},
              {"inference_entities", m.inference_entities},
              {"inference_facts", m.inference_facts},
              {"valid_queries", m.valid_queries},
              {"test_queries", m.test_queries},
              {"min_arity", m.min_arity},
              {"max_arity", m.max_arity},
              {"nary_proportion", m.nary_proportion},
              {"feature_dim", m.feature_dim}};
}

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

void read_features(const fs::path& path, DatasetBundle& b) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string line;
  std::size_t number = 0;
  std::size_t dim = 0;
  auto init = [&](EntityFeatures& f, std::size_t n) {
    f.dim = dim;
    f.values.assign(n * dim, 0.0);
    f.present.assign(n, false);
  };
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::stringstream ss(line);
    std::string name, cell;
    std::getline(ss, name, '\t');
    std::vector<double> row;
    while (std::getline(ss, cell, '\t')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ValidationError("features.tsv:" + std::to_string(number) + ": bad value '" + cell + "'");
      }
    }
    if (dim == 0) {
      dim = row.size();
      if (dim == 0) throw ValidationError("features.tsv:" + std::to_string(number) + ": no feature values");
      init(b.train_features, b.train_entities.size());
      init(b.inference_features, b.inference_entities.size());
    }
    if (row.size() != dim) {
      throw ValidationError("features.tsv:" + std::to_string(number) + ": expected " + std::to_string(dim) +
                            " values, got " + std::to_string(row.size()));
    }
    EntityFeatures* target = nullptr;
    std::uint32_t id = 0;
    if (auto t = b.train_entities.find(name)) {
      target = &b.train_features;
      id = *t;
    } else if (auto i = b.inference_entities.find(name)) {
      target = &b.inference_features;
      id = *i;
    } else {
      throw ValidationError("features.tsv:" + std::to_string(number) + ": unknown entity '" + name + "'");
    }
    std::copy(row.begin(), row.end(), target->values.begin() + static_cast<std::ptrdiff_t>(id * dim));
    target->present[id] = true;
  }
}

void check_manifest(const Manifest& expected, const Manifest& found) {
  std::string diff;
  auto cmp = [&](const char* name, auto a, auto b) {
    if (a != b) {
      std::ostringstream os;
      os << name << ": manifest " << a << ", found " << b << "; ";
      diff += os.str();
    }
  };
  cmp("relations", expected.relations, found.relations);
  cmp("train_entities", expected.train_entities, found.train_entities);
  cmp("train_facts", expected.train_facts, found.train_facts);
  cmp("inference_entities", expected.inference_entities, found.inference_entities);
  cmp("inference_facts", expected.inference_facts, found.inference_facts);
  cmp("valid_queries", expected.valid_queries, found.valid_queries);
  cmp("test_queries", expected.test_queries, found.test_queries);
  cmp("min_arity", expected.min_arity, found.min_arity);
  cmp("max_arity", expected.max_arity, found.max_arity);
  cmp("feature_dim", expected.feature_dim, found.feature_dim);
  if (std::abs(expected.nary_proportion - found.nary_proportion) > 1e-9) {
    cmp("nary_proportion", expected.nary_proportion, found.nary_proportion);
  }
  if (!diff.empty()) throw ValidationError("manifest mismatch: " + diff.substr(0, diff.size() - 2));
}

}  // namespace

DatasetBundle load_dataset(const std::string& directory) {
  const fs::path dir(directory);
  if (!fs::is_directory(dir)) throw ValidationError("dataset directory not found: " + directory);
  DatasetBundle b;
  for (const RawLine& r : read_jsonl(dir / "train.jsonl", false)) {
    b.train.push_back(intern_fact(r, b.relations, b.train_entities));
  }
  for (const RawLine& r : read_jsonl(dir / "inference.jsonl", false)) {
    b.inference.push_back(intern_fact(r, b.relations, b.inference_entities));
  }
  for (const char* split : {"valid", "test"}) {
    auto& out = std::string(split) == "valid" ? b.valid : b.test;
    for (const RawLine& r : read_jsonl(dir / (std::string(split) + ".jsonl"), true)) {
      out.push_back({intern_fact(r, b.relations, b.inference_entities), *r.missing});
    }
  }
  for (const std::string& name : b.inference_entities.names()) {
    if (b.train_entities.find(name)) {
      throw ValidationError("entity '" + name + "' appears in both the train and inference graphs");
    }
  }
  if (fs::exists(dir / "features.tsv")) read_features(dir / "features.tsv", b);

  std::ifstream min(dir / "manifest.json");
  if (!min) throw ValidationError("cannot open " + (dir / "manifest.json").string());
  Manifest expected;
  try {
    const json j = json::parse(min);
    expected.relations = j.at("relations");
    expected.train_entities = j.at("train_entities");
    expected.train_facts = j.at("train_facts");
    expected.inference_entities = j.at("inference_entities");
    expected.inference_facts = j.at("inference_facts");
    expected.valid_queries = j.at("valid_queries");
    expected.test_queries = j.at("test_queries");
    expected.min_arity = j.at("min_arity");
    expected.max_arity = j.at("max_arity");
    expected.nary_proportion = j.at("nary_proportion");
    expected.feature_dim = j.value("feature_dim", std::size_t{0});
  } catch (const json::exception& e) {
    throw ValidationError(std::string("manifest.json: ") + e.what());
  }
  check_manifest(expected, b.manifest());
  return b;
}

void save_dataset(const DatasetBundle& b, const std::string& directory) {
  const fs::path dir(directory);
  fs::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name);
    if (!out) throw Error("cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open("train.jsonl");
    for (const Fact& f : b.train) out << fact_json(f, b, b.train_entities).dump() << "\n";
  }
  {
    auto out = open("inference.jsonl");
    for (const Fact& f : b.inference) out << fact_json(f, b, b.inference_entities).dump() << "\n";
  }
  for (const char* split : {"valid.jsonl", "test.jsonl"}) {
    const auto& queries = std::string(split) == "valid.jsonl" ? b.valid : b.test;
    auto out = open(split);
    for (const EvalQuery& q : queries) {
      json j = fact_json(q.fact, b, b.inference_entities);
      j["missing"] = q.missing;
      out << j.dump() << "\n";
    }
  }
  if (!b.train_features.empty()) {
    auto out = open("features.tsv");
    auto dump = [&](const EntityFeatures& f, const Vocabulary& names) {
      for (std::uint32_t v = 0; v < names.size(); ++v) {
        if (!f.has(v)) continue;
        out << names.name(v);
        for (std::size_t c = 0; c < f.dim; ++c) out << '\t' << format_double(f.values[v * f.dim + c]);
        out << "\n";
      }
    };
    dump(b.train_features, b.train_entities);
    dump(b.inference_features, b.inference_entities);
  } else if (fs::exists(dir / "features.tsv")) {
    fs::remove(dir / "features.tsv");
  }
  auto out = open("manifest.json");
  out << manifest_json(b.manifest()).dump(2) << "\n";
}

}  // namespace hgr
