#include "hgr/workbench.hpp"

#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <json.hpp>

#include "hgr/checkpoint.hpp"
#include "hgr/config.hpp"
#include "hgr/error.hpp"
#include "hgr/evaluate.hpp"
#include "hgr/synthetic.hpp"
#include "hgr/train.hpp"

namespace hgr {

using nlohmann::json;

namespace {

std::string token_label(const TraceToken& t, const Vocabulary& relations, const Vocabulary& entities) {
  switch (t.kind) {
    case TraceToken::Kind::Cls: return "[CLS]";
    case TraceToken::Kind::Role: return relations.name(t.id);
    case TraceToken::Kind::Entity: return entities.name(t.id);
    case TraceToken::Kind::MissingEntity: return "?";
    case TraceToken::Kind::Edge: return "edge:" + std::to_string(t.id);
    case TraceToken::Kind::SourceEdge: return "query";
  }
  return "";
}

const char* error_kind(const std::exception& e) {
  if (dynamic_cast<const ValidationError*>(&e)) return "validation";
  if (dynamic_cast<const ShapeError*>(&e)) return "shape";
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const ContractError*>(&e)) return "contract";
  if (dynamic_cast<const NumericError*>(&e)) return "numeric";
  if (dynamic_cast<const UnsupportedError*>(&e)) return "unsupported";
  return "runtime";
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
  if (!out) throw Error("failed writing " + path);
}

struct ModelOptions {
  std::string data;
  std::string config;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::size_t threads = 1;
};

void add_model_options(CLI::App* cmd, ModelOptions& o) {
  cmd->add_option("--data", o.data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  cmd->add_option("--config", o.config, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", o.sets, "override one config key (key=value)");
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--threads", o.threads, "worker threads for evaluation")->check(CLI::PositiveNumber);
}

TrainConfig resolve_config(const ModelOptions& o, const CLI::App* cmd) {
  TrainConfig c = o.config.empty() ? TrainConfig{} : load_config(o.config);
  for (const std::string& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_setting(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (cmd->count("--seed")) c.seed = o.seed;
  if (cmd->count("--threads")) c.threads = o.threads;
  c.validate();
  return c.resolved();
}

const std::vector<EvalQuery>& pick_split(const DatasetBundle& data, const std::string& split) {
  if (split == "valid") return data.valid;
  if (split == "test") return data.test;
  throw ValidationError("unknown split '" + split + "' (expected valid or test)");
}

const EntityFeatures* inference_features(const DatasetBundle& data, const TrainConfig& c) {
  return c.task == Task::TransferWithFeatures ? &data.inference_features : nullptr;
}

}  // namespace

std::string trace_to_jsonl(const AttentionTrace& trace, const Vocabulary& relations, const Vocabulary& entities) {
  std::string out;
  for (const AttentionRecord& r : trace.records) {
    json j;
    j["hop"] = r.hop;
    j["stage"] = r.v2e ? "v2e" : "e2v";
    if (r.v2e) {
      j["owner"] = r.owner_is_source ? std::string("query") : "edge:" + std::to_string(r.owner);
    } else {
      j["owner"] = entities.name(r.owner);
    }
    json tokens = json::array();
    for (std::size_t i = 0; i < r.tokens.size(); ++i) {
      tokens.push_back({{"label", token_label(r.tokens[i], relations, entities)}, {"weight", r.weights.at(i)}});
    }
    j["tokens"] = tokens;
    out += j.dump() + "\n";
  }
  return out;
}

std::string subgraph_to_json(const Subgraph& sub, const SemanticHypergraph& graph, const Vocabulary& relations,
                             const Vocabulary& entities) {
  json query = json::array();
  for (std::size_t i = 0; i < sub.source.pairs.size(); ++i) {
    const RolePair& p = sub.source.pairs[i];
    query.push_back({relations.name(p.role), i == sub.source.missing ? std::string("?") : entities.name(p.entity)});
  }
  json edges = json::array();
  for (EdgeId e : sub.edges) {
    json pairs = json::array();
    for (const RolePair& p : graph.edge(e).pairs) pairs.push_back({relations.name(p.role), entities.name(p.entity)});
    edges.push_back({{"id", e}, {"pairs", pairs}});
  }
  json nodes = json::array();
  for (EntityId v : sub.nodes) nodes.push_back({{"entity", entities.name(v)}, {"distance", sub.distance(v)}});
  json j{{"query", query}, {"hops", sub.hops}, {"seed", sub.seed}, {"edges", edges}, {"nodes", nodes}};
  if (sub.target) j["target"] = entities.name(*sub.target);
  return j.dump(2) + "\n";
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Inductive link prediction on n-ary facts with NS-HART"};
  app.require_subcommand(1);

  // synth
  SynthConfig synth;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "write a planted-rule benchmark dataset");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "generator seed");
  synth_cmd->add_option("--noise", synth.noise, "rule noise rate in [0, 1)");
  synth_cmd->add_option("--train-companies", synth.train_companies, "companies in the train graph");
  synth_cmd->add_option("--inference-companies", synth.inference_companies, "companies in the inference graph");
  synth_cmd->add_option("--persons", synth.persons_per_company, "employees per company");
  synth_cmd->add_option("--positions", synth.positions, "distinct position entities");
  synth_cmd->add_option("--links", synth.links_per_company, "acquaintance links per company");

  // train
  ModelOptions train_opts;
  std::string checkpoint_out, log_out;
  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  add_model_options(train_cmd, train_opts);
  train_cmd->add_option("--checkpoint", checkpoint_out, "checkpoint output path")->required();
  train_cmd->add_option("--log", log_out, "epoch log output path (TSV)");

  // eval
  ModelOptions eval_opts;
  std::string eval_ckpt, split = "test", report_out, ranks_out;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a held-out split");
  add_model_options(eval_cmd, eval_opts);
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--split", split, "valid or test");
  eval_cmd->add_option("--report", report_out, "MetricReport JSON output path");
  eval_cmd->add_option("--ranks", ranks_out, "per-query rank CSV output path");

  // sample
  ModelOptions sample_opts;
  std::string sample_split = "test", sample_out;
  std::size_t sample_query = 0;
  auto* sample_cmd = app.add_subcommand("sample", "dump one query's sampled subgraph as JSON");
  add_model_options(sample_cmd, sample_opts);
  sample_cmd->add_option("--split", sample_split, "valid or test");
  sample_cmd->add_option("--query", sample_query, "query index within the split");
  sample_cmd->add_option("--out", sample_out, "output path (default stdout)");

  // trace-attention
  ModelOptions trace_opts;
  std::string trace_ckpt, trace_split = "test", trace_out;
  std::size_t trace_query = 0;
  auto* trace_cmd = app.add_subcommand("trace-attention", "write [CLS] attention weights for one query as JSON lines");
  add_model_options(trace_cmd, trace_opts);
  trace_cmd->add_option("--checkpoint", trace_ckpt, "checkpoint path")->required()->check(CLI::ExistingFile);
  trace_cmd->add_option("--split", trace_split, "valid or test");
  trace_cmd->add_option("--query", trace_query, "query index within the split");
  trace_cmd->add_option("--out", trace_out, "output path (default stdout)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (synth_cmd->parsed()) {
      DatasetBundle data = generate_synthetic(synth);
      save_dataset(data, synth_out);
      const Manifest m = data.manifest();
      out << "wrote " << synth_out << ": " << m.train_entities << " train entities, " << m.train_facts
          << " train facts, " << m.inference_entities << " inference entities, " << m.inference_facts
          << " inference facts, " << m.valid_queries << " valid, " << m.test_queries << " test queries\n";
      return 0;
    }
    if (train_cmd->parsed()) {
      const TrainConfig config = resolve_config(train_opts, train_cmd);
      const DatasetBundle data = load_dataset(train_opts.data);
      Trainer trainer(config, data.relations.size(), data.train_features.dim);
      std::ofstream log;
      if (!log_out.empty()) {
        log.open(log_out);
        if (!log) throw Error("cannot write " + log_out);
        log << "epoch\tloss\tlr\tvalid\n";
      }
      FitResult fit_result = fit(trainer, data, [&](const EpochStats& s) {
        char line[160];
        std::snprintf(line, sizeof(line), "epoch %zu loss %.6f lr %.3g", s.epoch, s.mean_loss, s.lr);
        out << line;
        if (s.valid_metric) out << " valid " << *s.valid_metric;
        if (s.short_pools) out << " (negative pool short in " << s.short_pools << " batches)";
        out << "\n";
        if (log.is_open()) {
          log << s.epoch << '\t' << s.mean_loss << '\t' << s.lr << '\t';
          if (s.valid_metric) log << *s.valid_metric;
          log << "\n";
        }
      });
      save_checkpoint(checkpoint_out, trainer.model().params());
      out << "best epoch " << fit_result.best_epoch << " valid " << fit_result.best_metric << "; wrote "
          << checkpoint_out << "\n";
      return 0;
    }
    if (eval_cmd->parsed()) {
      const TrainConfig config = resolve_config(eval_opts, eval_cmd);
      const DatasetBundle data = load_dataset(eval_opts.data);
      std::mt19937_64 rng(0);
      Model model(config.model_config(data.relations.size(), data.train_features.dim), rng);
      load_checkpoint(eval_ckpt, model.params());
      const SemanticHypergraph graph = data.inference_graph(config.max_arity);
      const FilterIndex filter = inference_filter(data);
      const MetricReport report = evaluate_split(model, graph, pick_split(data, split), filter,
                                                 inference_features(data, config), config,
                                                 {config.eval_seed, config.threads, 0}, split);
      out << report.table();
      if (!report_out.empty()) write_file(report_out, report.to_json() + "\n");
      if (!ranks_out.empty()) write_file(ranks_out, report.ranks_csv());
      return 0;
    }
    if (sample_cmd->parsed()) {
      const TrainConfig config = resolve_config(sample_opts, sample_cmd);
      const DatasetBundle data = load_dataset(sample_opts.data);
      const auto& queries = pick_split(data, sample_split);
      if (sample_query >= queries.size()) throw ValidationError("query index out of range");
      const SemanticHypergraph graph = data.inference_graph(config.max_arity);
      const ForwardPlan plan = make_plan(config);
      const Query q = queries[sample_query].query();
      const std::uint64_t seed = derive_seed(config.eval_seed, sample_query);
      const Subgraph sub = config.task == Task::PairwiseSubgraph
                               ? sample_pair_subgraph(graph, q, *q.answer, plan.sample_hops, plan.schedule, seed)
                               : query_subgraph(graph, q, plan, seed);
      const std::string text = subgraph_to_json(sub, graph, data.relations, data.inference_entities);
      if (sample_out.empty()) out << text;
      else write_file(sample_out, text);
      return 0;
    }
    if (trace_cmd->parsed()) {
      const TrainConfig config = resolve_config(trace_opts, trace_cmd);
      const DatasetBundle data = load_dataset(trace_opts.data);
      const auto& queries = pick_split(data, trace_split);
      if (trace_query >= queries.size()) throw ValidationError("query index out of range");
      std::mt19937_64 init(0);
      Model model(config.model_config(data.relations.size(), data.train_features.dim), init);
      load_checkpoint(trace_ckpt, model.params());
      const SemanticHypergraph graph = data.inference_graph(config.max_arity);
      const ForwardPlan plan = make_plan(config);
      const Query q = queries[trace_query].query();
      const std::uint64_t seed = derive_seed(config.eval_seed, trace_query);
      const Subgraph sub = config.task == Task::PairwiseSubgraph
                               ? sample_pair_subgraph(graph, q, *q.answer, plan.sample_hops, plan.schedule, seed)
                               : query_subgraph(graph, q, plan, seed);
      Tape tape(false);
      std::mt19937_64 rng(derive_seed(seed, 2));
      Var initial = model.initial_embeddings(tape, graph, sub.nodes, &sub, inference_features(data, config));
      const AttentionTrace trace = model.forward_with_attention(tape, graph, sub, initial, rng);
      const std::string text = trace_to_jsonl(trace, data.relations, data.inference_entities);
      if (trace_out.empty()) out << text;
      else write_file(trace_out, text);
      return 0;
    }
  } catch (const std::exception& e) {
    err << json{{"error", error_kind(e)}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace hgr
