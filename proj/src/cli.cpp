#include "ultra/cli.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ultra/errors.hpp"
#include "ultra/synthetic.hpp"
#include "ultra/training.hpp"

namespace ultra {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void require_output(const std::filesystem::path& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string(what) + " path is not set");
}

std::vector<TrainDataset> load_datasets(const RunConfig& config) {
  std::vector<TrainDataset> out;
  for (const auto& dir : config.datasets) {
    out.push_back({dir.string(), load_dataset(dir, config.split_mode)});
  }
  return out;
}

void print_counts(const ModelConfig& model, std::ostream& log) {
  const auto c = parameter_counts(model);
  log << "parameters: relation_encoder=" << c.relation_encoder
      << " entity_predictor=" << c.entity_predictor << " total=" << c.total << '\n';
}

Checkpoint run_training(const RunConfig& config, std::span<const TrainDataset> datasets,
                        const Checkpoint& initial, std::ostream& log) {
  TrainConfig tc = config.train;
  if (tc.last_good_path.empty() && !config.output.empty()) {
    tc.last_good_path = config.output.string() + ".last_good";
  }
  auto result = train(tc, datasets, initial, [&](const std::string& line) { log << line << '\n'; });
  if (result.best_valid_mrr) log << "best validation mrr " << *result.best_valid_mrr << '\n';
  return std::move(result.checkpoint);
}

std::vector<std::string> path_strings(const std::vector<std::filesystem::path>& paths) {
  std::vector<std::string> out;
  for (const auto& p : paths) out.push_back(p.string());
  return out;
}

}  // namespace

nlohmann::json manifest_to_json(const RunManifest& m) {
  nlohmann::json j;
  j["command"] = m.command;
  j["config"] = m.config;
  j["seed"] = m.seed;
  j["inputs"] = m.inputs;
  j["checkpoint_hashes"] = m.checkpoint_hashes;
  j["outputs"] = m.outputs;
  j["timings"] = m.timings;
  return j;
}

void append_manifest(const std::filesystem::path& path, const RunManifest& manifest) {
  if (path.empty()) return;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot append to manifest " + path.string());
  out << manifest_to_json(manifest).dump() << '\n';
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw IoError("sha256 unavailable");
  }
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

ParameterCounts parameter_counts(const ModelConfig& config) {
  const UltraModel model(config, 0);
  return {model.relation_encoder_parameters(), model.entity_predictor_parameters(),
          model.total_parameters()};
}

LiftSummary cmd_lift(const std::filesystem::path& graph_path, const std::filesystem::path& out_path,
                     const std::filesystem::path& manifest_path, std::ostream& log) {
  const auto start = Clock::now();
  const TripleGraph g = add_inverse_relations(load_triples(graph_path));
  const RelationGraph rg = lift(g);

  LiftSummary s;
  s.num_nodes = rg.num_nodes();
  std::ofstream out(out_path);
  if (!out) throw IoError("cannot write " + out_path.string());
  for (const Interaction type : kAllInteractions) {
    const auto& edges = rg.edges(type);
    s.counts[static_cast<std::size_t>(type)] = edges.size();
    s.total += edges.size();
    for (const auto& e : edges) {
      out << g.relation_name(e.src) << '\t' << to_string(type) << '\t' << g.relation_name(e.dst) << '\n';
    }
  }
  out.close();
  if (!out) throw IoError("failed writing " + out_path.string());

  log << "relation graph: nodes=" << s.num_nodes << " edges=" << s.total;
  for (const Interaction type : kAllInteractions) {
    log << ' ' << to_string(type) << '=' << s.counts[static_cast<std::size_t>(type)];
  }
  log << '\n';

  RunManifest m;
  m.command = "lift";
  m.inputs = {graph_path.string()};
  m.outputs = {out_path.string()};
  m.timings["total"] = seconds_since(start);
  append_manifest(manifest_path, m);
  return s;
}

Checkpoint cmd_pretrain(const RunConfig& config, std::ostream& log) {
  const auto start = Clock::now();
  if (config.datasets.empty()) throw ConfigError("pretrain needs at least one dataset");
  require_output(config.output, "output checkpoint");
  print_counts(config.model, log);

  const auto datasets = load_datasets(config);
  const double load_time = seconds_since(start);
  Checkpoint initial;
  initial.model = config.model;
  initial.params = make_initial_params(config.model, config.train.seed);
  initial.provenance.seed = config.train.seed;

  const auto train_start = Clock::now();
  Checkpoint out = run_training(config, datasets, initial, log);
  const double train_time = seconds_since(train_start);
  save_checkpoint(out, config.output);
  log << "wrote " << config.output.string() << '\n';

  RunManifest m;
  m.command = "pretrain";
  m.config = config_snapshot(config);
  m.seed = config.train.seed;
  m.inputs = path_strings(config.datasets);
  m.outputs = {config.output.string()};
  m.checkpoint_hashes[config.output.string()] = sha256_file(config.output);
  m.timings = {{"load", load_time}, {"train", train_time}, {"total", seconds_since(start)}};
  append_manifest(config.manifest, m);
  return out;
}

Checkpoint cmd_finetune(const RunConfig& config, const std::filesystem::path& checkpoint,
                        const std::filesystem::path& dataset, std::ostream& log) {
  const auto start = Clock::now();
  require_output(config.output, "output checkpoint");
  const Checkpoint initial = load_checkpoint(checkpoint);
  print_counts(initial.model, log);
  const std::vector<TrainDataset> datasets = {{dataset.string(), load_dataset(dataset, config.split_mode)}};
  const double load_time = seconds_since(start);

  const auto train_start = Clock::now();
  Checkpoint out = run_training(config, datasets, initial, log);
  const double train_time = seconds_since(train_start);
  save_checkpoint(out, config.output);
  log << "wrote " << config.output.string() << '\n';

  RunManifest m;
  m.command = "finetune";
  m.config = config_snapshot(config);
  m.seed = config.train.seed;
  m.inputs = {checkpoint.string(), dataset.string()};
  m.outputs = {config.output.string()};
  m.checkpoint_hashes[checkpoint.string()] = sha256_file(checkpoint);
  m.checkpoint_hashes[config.output.string()] = sha256_file(config.output);
  m.timings = {{"load", load_time}, {"train", train_time}, {"total", seconds_since(start)}};
  append_manifest(config.manifest, m);
  return out;
}

RankingReport cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset,
                       const EvalOptions& options, std::ostream& log) {
  const auto start = Clock::now();
  require_output(options.output, "report");
  options.protocol.validate();
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const DatasetSplit split = load_dataset(dataset, options.split_mode);
  const UltraModel model(ckpt.model, ckpt.params);
  const UltraScorer scorer(model, options.threads);
  const double load_time = seconds_since(start);

  const auto eval_start = Clock::now();
  const RankingReport report = evaluate(scorer, split, options.protocol, options.seed, options.part);
  const double eval_time = seconds_since(eval_start);

  {
    std::ofstream out(options.output);
    if (!out) throw IoError("cannot write " + options.output.string());
    out << report_to_json(report, options.include_ranks).dump(2) << '\n';
    if (!out) throw IoError("failed writing " + options.output.string());
  }
  log << "protocol " << report.protocol.name() << " queries " << report.query_count << " mrr "
      << report.mrr;
  for (const auto& [k, v] : report.hits_at_k) log << " hits@" << k << ' ' << v;
  log << '\n';

  RunManifest m;
  m.command = "eval";
  m.config = options.config;
  m.seed = options.seed;
  m.inputs = {checkpoint.string(), dataset.string()};
  m.outputs = {options.output.string()};
  m.checkpoint_hashes[checkpoint.string()] = sha256_file(checkpoint);
  m.timings = {{"load", load_time}, {"eval", eval_time}, {"total", seconds_since(start)}};
  append_manifest(options.manifest, m);
  return report;
}

namespace {

// Flags shared by the training commands. Every config key is also a
// `--key value` option; explicit flags override the config file.
struct TrainFlags {
  std::string config_path;
  std::map<std::string, std::string> overrides;
  bool deterministic = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "flat key = value config file");
    app->add_flag("--deterministic", deterministic, "single-threaded, index-ordered reductions");
    for (const auto& key : config_keys()) {
      if (key == "deterministic") continue;
      app->add_option("--" + key, overrides[key], "config key " + key);
    }
  }

  RunConfig resolve() const {
    ConfigEntries entries;
    if (!config_path.empty()) entries = load_config(config_path);
    for (const auto& [key, value] : overrides) {
      if (!value.empty()) entries[key] = value;
    }
    if (deterministic) entries["deterministic"] = "true";
    return resolve_config(entries);
  }
};

int exit_code_for(std::ostream& err, const std::exception& e, int code) {
  err << "error: " << e.what() << '\n';
  return code;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Relation-graph foundation model for knowledge-graph completion", "ultra"};
  app.require_subcommand(1);

  std::string lift_in, lift_out, lift_manifest = "ultra_runs.jsonl";
  auto* lift_cmd = app.add_subcommand("lift", "lift a triple file to its typed relation graph");
  lift_cmd->add_option("graph", lift_in, "triple file")->required();
  lift_cmd->add_option("out", lift_out, "relation-graph output file")->required();
  lift_cmd->add_option("--manifest", lift_manifest, "run manifest (JSONL, appended)");

  TrainFlags pre_flags;
  auto* pre_cmd = app.add_subcommand("pretrain", "train a model from scratch on a dataset mixture");
  pre_flags.attach(pre_cmd);

  TrainFlags ft_flags;
  std::string ft_checkpoint, ft_dataset;
  auto* ft_cmd = app.add_subcommand("finetune", "continue training a checkpoint on one dataset");
  ft_flags.attach(ft_cmd);
  ft_cmd->add_option("--checkpoint", ft_checkpoint, "input checkpoint")->required();
  ft_cmd->add_option("--dataset", ft_dataset, "dataset directory")->required();

  TrainFlags ev_flags;
  std::string ev_checkpoint, ev_dataset, ev_part = "test";
  bool ev_ranks = false;
  auto* ev_cmd = app.add_subcommand("eval", "zero-shot filtered ranking evaluation");
  ev_flags.attach(ev_cmd);
  ev_cmd->add_option("--checkpoint", ev_checkpoint, "checkpoint")->required();
  ev_cmd->add_option("--dataset", ev_dataset, "dataset directory")->required();
  ev_cmd->add_option("--part", ev_part, "test or valid")->check(CLI::IsMember({"test", "valid"}));
  ev_cmd->add_flag("--ranks", ev_ranks, "include per-query ranks in the report");

  std::string synth_out;
  std::uint64_t synth_seed = 0;
  SyntheticSpec synth_spec;
  auto* synth_cmd = app.add_subcommand("synth", "write a seeded compositional synthetic dataset");
  synth_cmd->add_option("out", synth_out, "output directory")->required();
  synth_cmd->add_option("--seed", synth_seed, "generator seed");
  synth_cmd->add_option("--families", synth_spec.families, "relation families");
  synth_cmd->add_option("--entity-prefix", synth_spec.entity_prefix, "entity name prefix");
  synth_cmd->add_option("--relation-prefix", synth_spec.relation_prefix, "relation name prefix");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    for (const auto* sub : app.get_subcommands()) err << sub->help();
    if (app.get_subcommands().empty()) err << app.help();
    return kExitUsage;
  }

  try {
    if (*lift_cmd) {
      cmd_lift(lift_in, lift_out, lift_manifest, out);
    } else if (*pre_cmd) {
      cmd_pretrain(pre_flags.resolve(), out);
    } else if (*ft_cmd) {
      cmd_finetune(ft_flags.resolve(), ft_checkpoint, ft_dataset, out);
    } else if (*ev_cmd) {
      const RunConfig config = ev_flags.resolve();
      EvalOptions options;
      options.split_mode = config.split_mode;
      options.protocol = protocol_from_name(config.protocol);
      options.part = ev_part == "valid" ? SplitPart::kValid : SplitPart::kTest;
      options.seed = config.train.seed;
      options.threads = config.train.deterministic ? 1 : config.train.threads;
      options.include_ranks = ev_ranks;
      options.output = config.output;
      options.manifest = config.manifest;
      options.config = config_snapshot(config);
      cmd_eval(ev_checkpoint, ev_dataset, options, out);
    } else if (*synth_cmd) {
      const auto split = make_compositional_split(synth_spec, synth_seed);
      write_split(split, synth_out);
      out << "wrote " << synth_out << ": entities=" << split.train_graph->num_entities()
          << " relations=" << split.train_graph->num_base_relations()
          << " train_edges=" << split.train_graph->num_edges() / 2
          << " valid=" << split.valid_queries.size() << " test=" << split.test_queries.size() << '\n';
    }
  } catch (const ConfigError& e) {
    return exit_code_for(err, e, kExitUsage);
  } catch (const DataError& e) {
    return exit_code_for(err, e, kExitData);
  } catch (const IndexError& e) {
    return exit_code_for(err, e, kExitData);
  } catch (const NumericError& e) {
    return exit_code_for(err, e, kExitNumeric);
  } catch (const SamplingError& e) {
    return exit_code_for(err, e, kExitNumeric);
  } catch (const DimensionError& e) {
    return exit_code_for(err, e, kExitNumeric);
  } catch (const ContractViolation& e) {
    return exit_code_for(err, e, kExitData);
  } catch (const std::exception& e) {
    return exit_code_for(err, e, kExitNumeric);
  }
  return kExitOk;
}

}  // namespace ultra
