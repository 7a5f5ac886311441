// metaflow: command-line driver for corpus building, training, generation,
// evaluation and serving.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime error.

#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "metaflow/corpus_builder.hpp"
#include "metaflow/error.hpp"
#include "metaflow/evaluator.hpp"
#include "metaflow/generation_flow.hpp"
#include "metaflow/lm/checkpoint.hpp"
#include "metaflow/lm/train.hpp"
#include "metaflow/service.hpp"

using namespace metaflow;
namespace fs = std::filesystem;

namespace {

struct ModelPaths {
  fs::path ckpt, vocab, merges;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--ckpt", ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
    cmd->add_option("--vocab", vocab, "Tokenizer encoder.json")->required()->check(CLI::ExistingFile);
    cmd->add_option("--merges", merges, "Tokenizer vocab.bpe")->required()->check(CLI::ExistingFile);
  }
};

struct Loaded {
  Tokenizer tokenizer;
  lm::Model params;
  TransformerLM model{params};

  Loaded(Tokenizer t, lm::Model p) : tokenizer(std::move(t)), params(std::move(p)) {}
};

std::unique_ptr<Loaded> load(const ModelPaths& paths) {
  return std::make_unique<Loaded>(Tokenizer::load(paths.vocab, paths.merges), lm::load_checkpoint(paths.ckpt));
}

struct Sampling {
  int top_k = 40;
  double temperature = 1.0;
  std::optional<int> max_new_tokens;
  std::uint64_t rng_seed = 0;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--top-k", top_k, "Top-k cutoff")->check(CLI::PositiveNumber);
    cmd->add_option("--temperature", temperature, "Softmax temperature")->check(CLI::PositiveNumber);
    cmd->add_option("--max-new-tokens", max_new_tokens, "Token budget per continuation")->check(CLI::PositiveNumber);
    cmd->add_option("--rng-seed", rng_seed, "Sampling seed");
  }
  SamplingParams params() const { return {max_new_tokens, top_k, temperature, rng_seed}; }
};

template <class Enum>
CLI::Option* add_enum(CLI::App* cmd, const std::string& name, Enum& out, std::optional<Enum> (*parse)(std::string_view),
                      const std::string& help) {
  return cmd->add_option_function<std::string>(
      name,
      [&out, parse, name](const std::string& v) {
        auto e = parse(v);
        if (!e) throw CLI::ValidationError(name, "unknown value '" + v + "'");
        out = *e;
      },
      help);
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::FileError, "cannot write " + path.string());
  return out;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileError, "cannot open " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);)
    if (!normalize_whitespace(line).empty()) lines.push_back(line);
  return lines;
}

void print_candidates(const GenOutput& out, bool as_json) {
  if (as_json) {
    std::cout << nlohmann::json{{"candidates", out.outputs}, {"provenance", to_json(out.provenance)}}.dump(2) << '\n';
    return;
  }
  for (const auto& c : out.outputs) std::cout << c << '\n';
}

// ---- corpus ----------------------------------------------------------------

int corpus_build(const fs::path& in, const fs::path& out_path) {
  const auto docs = read_docs_jsonl(in);
  auto out = open_out(out_path);
  std::size_t records = 0;
  for (const auto& doc : docs) {
    auto r = build_records(doc);
    for (const auto& note : r.notes) std::cerr << "note: " << note << '\n';
    for (const auto& rec : r.records) out << rec.rendered << '\n';
    records += r.records.size();
  }
  std::cerr << docs.size() << " documents, " << records << " records\n";
  return 0;
}

int corpus_pack(const fs::path& in, const fs::path& vocab, const fs::path& merges, const PackOptions& opt,
                const fs::path& out_dir) {
  const auto lines = read_lines(in);
  for (const auto& line : lines) parse_record(line);
  const auto tok = Tokenizer::load(vocab, merges);
  fs::create_directories(out_dir);
  for (const auto& old : list_shards(out_dir)) fs::remove(old);
  std::size_t index = 0;
  const auto report = pack(lines, tok, opt, [&](Shard&& s) { write_shard(shard_path(out_dir, index++), s); });
  std::cout << nlohmann::json{{"records", report.records},
                              {"record_tokens", report.record_tokens},
                              {"examples", report.examples},
                              {"shards", report.shards},
                              {"context_len", opt.context_len}}
                   .dump()
            << '\n';
  return 0;
}

int corpus_stats_cmd(const fs::path& records_path, const fs::path& shard_dir) {
  std::vector<TaggedRecord> records;
  if (!records_path.empty())
    for (const auto& line : read_lines(records_path)) records.push_back(parse_record(line));
  std::vector<Shard> shards;
  if (!shard_dir.empty())
    for (const auto& p : list_shards(shard_dir)) shards.push_back(read_shard(p));
  const auto s = corpus_stats(records, shards);
  std::cout << nlohmann::json{{"records", s.records},   {"records_by_kind", s.records_by_kind},
                              {"shards", s.shards},     {"examples", s.examples},
                              {"tokens", s.tokens}}
                   .dump(2)
            << '\n';
  return 0;
}

// ---- train -----------------------------------------------------------------

int train(const fs::path& shard_dir, const fs::path& config_path, const fs::path& out, std::optional<long> steps,
          std::uint64_t seed, fs::path log_path) {
  auto cfg = lm::load_model_config(config_path);
  if (steps) {
    cfg.train.total_steps = static_cast<int>(*steps);
    cfg.train.warmup_steps = std::min(cfg.train.warmup_steps, cfg.train.total_steps);
  }
  const auto files = list_shards(shard_dir);
  if (files.empty()) throw Error(ErrorCode::EmptyStream, "no shards in " + shard_dir.string());

  std::vector<TokenSequence> examples;
  for (const auto& f : files) {
    const auto shard = read_shard(f);
    if (shard.context_len > cfg.model.context_len)
      throw Error(ErrorCode::ConfigMismatch, f.string() + ": examples of " + std::to_string(shard.context_len) +
                                                 " tokens exceed context_len " +
                                                 std::to_string(cfg.model.context_len));
    for (std::size_t i = 0; i < shard.size(); ++i) {
      const auto ex = shard.example(i);
      for (TokenId id : ex)
        if (id < 0 || id >= cfg.model.vocab_size)
          throw Error(ErrorCode::ConfigMismatch, f.string() + ": token id " + std::to_string(id) +
                                                     " outside vocab_size " + std::to_string(cfg.model.vocab_size));
      examples.emplace_back(ex.begin(), ex.end());
    }
  }

  if (log_path.empty()) log_path = fs::path(out.string() + ".log.jsonl");
  auto log = open_out(log_path);
  auto params = lm::init_params<float>(cfg.model);
  std::cerr << examples.size() << " examples, " << params.size() << " parameters, " << cfg.train.total_steps
            << " steps\n";
  lm::TrainRunOptions opt;
  opt.seed = seed;
  opt.on_log = [&](const lm::StepMetrics& m) {
    const nlohmann::json j = {{"step", m.step}, {"loss", m.loss}, {"lr", m.lr}, {"grad_norm", m.grad_norm}};
    log << j.dump() << '\n' << std::flush;
    std::cerr << "step " << m.step << " loss " << m.loss << " lr " << m.lr << '\n';
  };
  lm::train_loop(params, examples, cfg.train, opt);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  lm::save_checkpoint(out, params);
  return 0;
}

// ---- serve -----------------------------------------------------------------

int serve(const std::optional<fs::path>& config_arg, std::optional<int> port, const std::string& host) {
  const auto path = resolve_config_path(config_arg);
  if (!path) throw Error(ErrorCode::InvalidArgument, "no service config: pass --config or set METAFLOW_CONFIG");
  auto cfg = load_service_config(*path);
  if (port) cfg.port = *port;
  if (!host.empty()) cfg.host = host;
  cfg.validate();
  const auto rt = load_runtime(cfg);
  Api api(rt->model, rt->tokenizer, rt->provider.get(), cfg, to_json(rt->params.config));

  // Signals go to a dedicated waiter so the server can be stopped cleanly.
  sigset_t sigs;
  sigemptyset(&sigs);
  sigaddset(&sigs, SIGINT);
  sigaddset(&sigs, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &sigs, nullptr);

  HttpServer server(api, cfg.http_threads);
  const int bound = server.bind(cfg.host, cfg.port);
  std::cerr << "listening on http://" << cfg.host << ":" << bound << '\n';
  std::cout << nlohmann::json{{"host", cfg.host}, {"port", bound}}.dump() << std::endl;
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&sigs, &sig);
    server.stop();
  });
  waiter.detach();
  server.listen();
  return 0;
}

int exit_code_for(const Error& e) {
  if (e.code() == ErrorCode::InvalidArgument) return 1;
  return is_data_error(e.code()) ? 2 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Metadata-controlled patent text generation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  // corpus
  auto* corpus = app.add_subcommand("corpus", "Build tagged records and training shards");
  corpus->require_subcommand(1);
  fs::path in, out, vocab, merges, records_path, shard_dir;
  PackOptions pack_opt;
  auto* build = corpus->add_subcommand("build", "Patent documents (JSONL) to tagged records, one per line");
  build->add_option("--in", in, "Documents JSONL")->required()->check(CLI::ExistingFile);
  build->add_option("--out", out, "Records file")->required();
  auto* pack_cmd = corpus->add_subcommand("pack", "Tokenize records and pack them into shards");
  pack_cmd->add_option("--in", in, "Records file")->required()->check(CLI::ExistingFile);
  pack_cmd->add_option("--vocab", vocab, "Tokenizer encoder.json")->required()->check(CLI::ExistingFile);
  pack_cmd->add_option("--merges", merges, "Tokenizer vocab.bpe")->required()->check(CLI::ExistingFile);
  pack_cmd->add_option("--ctx", pack_opt.context_len, "Example width W")->capture_default_str();
  pack_cmd->add_option("--seed", pack_opt.seed, "Shuffle and fill seed")->capture_default_str();
  pack_cmd->add_option("--reservoir", pack_opt.reservoir_size, "Recent records kept for fill")->capture_default_str();
  pack_cmd->add_option("--threads", pack_opt.threads, "Tokenizer threads (0: all cores)");
  pack_cmd->add_option("--out", out, "Shard directory")->required();
  auto* stats = corpus->add_subcommand("stats", "Record and shard counts");
  stats->add_option("--records", records_path, "Records file")->check(CLI::ExistingFile);
  stats->add_option("--shards", shard_dir, "Shard directory")->check(CLI::ExistingDirectory);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model on packed shards");
  fs::path config_path;
  std::optional<long> steps;
  std::uint64_t train_seed = 0;
  fs::path log_path;
  train_cmd->add_option("--shards", shard_dir, "Shard directory")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--config", config_path, "Model TOML")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", out, "Checkpoint to write")->required();
  train_cmd->add_option("--steps", steps, "Override train.total_steps")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--seed", train_seed, "Batch order and dropout seed");
  train_cmd->add_option("--log", log_path, "Step metrics JSONL (default: <out>.log.jsonl)");

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "Extend a seed text under a metadata kind");
  ModelPaths gen_paths;
  Sampling gen_sampling;
  GenRequest gen_req;
  bool as_json = false;
  gen_paths.add_to(gen_cmd);
  gen_sampling.add_to(gen_cmd);
  add_enum(gen_cmd, "--metadata", gen_req.metadata, parse_metadata_kind, "title|abstract|claim|dependent_claim")
      ->required();
  add_enum(gen_cmd, "--direction", gen_req.direction, parse_gen_direction, "forward|backward|both");
  gen_cmd->add_option("--seed-text", gen_req.input_text, "Seed text")->required();
  gen_cmd->add_option("--count", gen_req.gen_count, "Number of candidates")->check(CLI::PositiveNumber);
  gen_cmd->add_flag("--json", as_json, "Print candidates with provenance as JSON");

  // map
  auto* map_cmd = app.add_subcommand("map", "Generate the target of a text-to-text mapping");
  ModelPaths map_paths;
  Sampling map_sampling;
  MapRequest map_req;
  map_paths.add_to(map_cmd);
  map_sampling.add_to(map_cmd);
  add_enum(map_cmd, "--mapping", map_req.mapping, parse_mapping_kind,
           "dep|title2abstract|abstract2claim|claim2abstract|abstract2title")
      ->required();
  map_cmd->add_option("--text", map_req.input_text, "Source text")->required();
  map_cmd->add_option("--count", map_req.gen_count, "Number of candidates")->check(CLI::PositiveNumber);
  map_cmd->add_flag("--json", as_json, "Print candidates with provenance as JSON");

  // flow
  auto* flow_cmd = app.add_subcommand("flow", "Title to abstract to claims, printed as JSON");
  ModelPaths flow_paths;
  Sampling flow_sampling;
  FlowRequest flow_req;
  flow_paths.add_to(flow_cmd);
  flow_sampling.add_to(flow_cmd);
  flow_cmd->add_option("--seed-text", flow_req.seed, "Title seed")->required();
  flow_cmd->add_option("--deps", flow_req.dep_count, "Dependent claims to generate")->check(CLI::PositiveNumber);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "ROUGE-1 and similarity over (src, tgt) pairs");
  ModelPaths eval_paths;
  Sampling eval_sampling;
  BatchEvalOptions eval_opt;
  fs::path pairs_path, eval_records = "eval_records.jsonl";
  std::string provider_url;
  eval_paths.add_to(eval_cmd);
  eval_sampling.add_to(eval_cmd);
  eval_cmd->add_option("--pairs", pairs_path, "Pairs JSONL with src and tgt")->required()->check(CLI::ExistingFile);
  add_enum(eval_cmd, "--mapping", eval_opt.mapping, parse_mapping_kind, "Mapping to evaluate")->required();
  eval_cmd->add_option("--n", eval_opt.n, "Pairs to evaluate")->capture_default_str();
  eval_cmd->add_option("--provider", provider_url, "Embedding provider URL");
  eval_cmd->add_option("--records", eval_records, "Per-record JSONL output")->capture_default_str();
  eval_cmd->add_option("--threads", eval_opt.threads, "Worker threads (0: all cores)");

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
  std::optional<fs::path> serve_config;
  std::optional<int> serve_port;
  std::string serve_host;
  serve_cmd->add_option("--config", serve_config, "Service TOML (default: $METAFLOW_CONFIG)");
  serve_cmd->add_option("--port", serve_port, "Override server.port (0: any free port)");
  serve_cmd->add_option("--host", serve_host, "Override server.host");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*build) return corpus_build(in, out);
    if (*pack_cmd) return corpus_pack(in, vocab, merges, pack_opt, out);
    if (*stats) return corpus_stats_cmd(records_path, shard_dir);
    if (*train_cmd) return train(shard_dir, config_path, out, steps, train_seed, log_path);
    if (*gen_cmd) {
      const auto m = load(gen_paths);
      gen_req.sampling = gen_sampling.params();
      print_candidates(patent_text_gen(m->model, m->tokenizer, gen_req), as_json);
      return 0;
    }
    if (*map_cmd) {
      const auto m = load(map_paths);
      map_req.sampling = map_sampling.params();
      print_candidates(text2text_mapping(m->model, m->tokenizer, map_req), as_json);
      return 0;
    }
    if (*flow_cmd) {
      const auto m = load(flow_paths);
      flow_req.top_k = flow_sampling.top_k;
      flow_req.temperature = flow_sampling.temperature;
      flow_req.rng_seed = flow_sampling.rng_seed;
      flow_req.title_max_tokens = flow_req.abstract_max_tokens = flow_req.claim_max_tokens =
          flow_sampling.max_new_tokens;
      std::cout << to_json(run_flow(m->model, m->tokenizer, flow_req)).dump(2) << '\n';
      return 0;
    }
    if (*eval_cmd) {
      const auto m = load(eval_paths);
      const auto pairs = read_pairs_jsonl(pairs_path);
      std::unique_ptr<EmbeddingProvider> provider;
      if (!provider_url.empty()) provider = std::make_unique<HttpEmbeddingProvider>(provider_url);
      eval_opt.provider = provider.get();
      eval_opt.sampling = eval_sampling.params();
      auto records = open_out(eval_records);
      const auto summary = batch_eval(m->model, m->tokenizer, pairs, eval_opt, records);
      std::cout << to_json(summary).dump(2) << '\n';
      return 0;
    }
    if (*serve_cmd) return serve(serve_config, serve_port, serve_host);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 1;
}
