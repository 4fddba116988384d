#include <doctest.h>

#include <sstream>

#include "support.hpp"
#include "ultra/cli.hpp"
#include "ultra/config.hpp"
#include "ultra/errors.hpp"
#include "ultra/synthetic.hpp"

using namespace ultra;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ultra");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

SyntheticSpec tiny_spec() {
  SyntheticSpec s;
  s.families = 2;
  s.group_a = 12;
  s.group_b = 4;
  s.group_c = 6;
  s.valid_fraction = 0.25;
  s.test_fraction = 0.25;
  return s;
}

std::string tiny_config(const support::TempDir& dir, const std::string& extra = "") {
  return "# tiny run\n"
         "dim = 4\nrelation_layers = 1\nentity_layers = 1\n"
         "batch_size = 2\nnum_negatives = 4\nlearning_rate = 0.01\n"
         "datasets = " + (dir / "data").string() + "\n"
         "manifest = " + (dir / "runs.jsonl").string() + "\n" + extra;
}

}  // namespace

TEST_CASE("config parsing") {
  std::istringstream in("# comment\n\n dim = 16 \nlearning_rate=0.01\ndim = 32\n");
  const auto e = parse_config(in, "c");
  CHECK(e.at("dim") == "32");
  CHECK(e.at("learning_rate") == "0.01");
  const auto c = resolve_config(e);
  CHECK(c.model.dim == 32);
  CHECK(c.train.learning_rate == 0.01);
}

TEST_CASE("config errors") {
  std::istringstream unknown("dim = 4\nwidth = 9\n");
  try {
    parse_config(unknown, "cfg");
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("cfg:2") != std::string::npos);
    CHECK(std::string(e.what()).find("width") != std::string::npos);
  }
  std::istringstream no_eq("dim 4\n");
  CHECK_THROWS_AS(parse_config(no_eq, "cfg"), ConfigError);
  CHECK_THROWS_AS(resolve_config({{"dim", "four"}}), ConfigError);
  CHECK_THROWS_AS(resolve_config({{"batch_size", "-1"}}), ConfigError);
  CHECK_THROWS_AS(resolve_config({{"steps", "3"}, {"epochs", "1"}}), ConfigError);
  CHECK_THROWS_AS(resolve_config({{"deterministic", "maybe"}}), ConfigError);
  CHECK_THROWS_AS(resolve_config({{"protocol", "negs7"}}), ConfigError);
  CHECK_THROWS_AS(resolve_config({{"split_mode", "diagonal"}}), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/cfg"), ConfigError);
}

TEST_CASE("config snapshot resolves to itself") {
  RunConfig c = resolve_config({{"dim", "12"}, {"datasets", "a, b"}, {"protocol", "tails"}, {"ablation", "no-etypes"}});
  CHECK(c.datasets.size() == 2);
  CHECK(c.train.valid_protocol.mode == ProtocolMode::kTailsOnly);
  const auto snap = config_snapshot(c);
  CHECK(config_snapshot(resolve_config(snap)) == snap);
  for (const auto& key : config_keys()) CHECK(snap.contains(key));
}

TEST_CASE("usage errors exit with 1") {
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"fly"}).code == kExitUsage);
  CHECK(cli({"eval", "--checkpoint", "x"}).code == kExitUsage);
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("lift of a single triple") {
  support::TempDir dir;
  support::write_file(dir / "g.txt", "a\tr\tb\n");
  const auto run = cli({"lift", (dir / "g.txt").string(), (dir / "rg.txt").string(), "--manifest", (dir / "m.jsonl").string()});
  CHECK(run.code == 0);
  const auto text = support::read_file(dir / "rg.txt");
  CHECK(line_count(text) == 8);
  CHECK(text.find("r\th2t\tr^-1\n") != std::string::npos);
  CHECK(run.out.find("nodes=2 edges=8") != std::string::npos);
  CHECK(line_count(support::read_file(dir / "m.jsonl")) == 1);
}

TEST_CASE("lift of an empty file") {
  support::TempDir dir;
  support::write_file(dir / "g.txt", "");
  std::ostringstream log;
  const auto s = cmd_lift(dir / "g.txt", dir / "rg.txt", {}, log);
  CHECK(s.num_nodes == 0);
  CHECK(s.total == 0);
  CHECK(support::read_file(dir / "rg.txt").empty());
}

TEST_CASE("lift of a graph with 237 relations has 474 relation nodes") {
  support::TempDir dir;
  std::string text;
  for (int r = 0; r < 237; ++r) text += "e" + std::to_string(r) + "\trel" + std::to_string(r) + "\te" + std::to_string(r + 1) + "\n";
  support::write_file(dir / "g.txt", text);
  std::ostringstream log;
  const auto s = cmd_lift(dir / "g.txt", dir / "rg.txt", {}, log);
  CHECK(s.num_nodes == 474);
  CHECK(s.total == line_count(support::read_file(dir / "rg.txt")));
  CHECK(s.total == s.counts[0] + s.counts[1] + s.counts[2] + s.counts[3]);
}

TEST_CASE("lift errors carry file and line and exit with 2") {
  support::TempDir dir;
  support::write_file(dir / "g.txt", "a\tr\tb\nbroken\n");
  const auto run = cli({"lift", (dir / "g.txt").string(), (dir / "rg.txt").string()});
  CHECK(run.code == kExitData);
  CHECK(run.err.find("g.txt:2") != std::string::npos);
  CHECK(cli({"lift", (dir / "none.txt").string(), (dir / "rg.txt").string()}).code == kExitData);
}

TEST_CASE("pretrain, finetune and eval") {
  support::TempDir dir;
  write_split(make_compositional_split(tiny_spec(), 4), dir / "data");
  support::write_file(dir / "cfg.txt", tiny_config(dir));
  const auto manifest = dir / "runs.jsonl";

  SUBCASE("pretrain with zero steps writes the seeded initialization") {
    const auto run = cli({"pretrain", "--config", (dir / "cfg.txt").string(), "--seed", "17", "--output",
                          (dir / "init.ukgr").string()});
    REQUIRE(run.code == 0);
    CHECK(run.out.find("parameters: relation_encoder=") != std::string::npos);
    const auto ckpt = load_checkpoint(dir / "init.ukgr");
    CHECK(ckpt.params == make_initial_params(ckpt.model, 17));
    CHECK(ckpt.model.dim == 4);
    const auto lines = support::read_file(manifest);
    CHECK(line_count(lines) == 1);
    const auto j = nlohmann::json::parse(lines.substr(0, lines.find('\n')));
    CHECK(j["command"] == "pretrain");
    CHECK(j["seed"] == 17);
    CHECK(j["config"]["seed"] == "17");
    CHECK(j["checkpoint_hashes"][(dir / "init.ukgr").string()] == sha256_file(dir / "init.ukgr"));
    CHECK(j["timings"].contains("total"));
  }
  SUBCASE("default model size is reported exactly") {
    support::write_file(dir / "big.txt", "datasets = " + (dir / "data").string() + "\nmanifest = " +
                                             manifest.string() + "\n");
    const auto run = cli({"pretrain", "--config", (dir / "big.txt").string(), "--output",
                          (dir / "big.ukgr").string()});
    REQUIRE(run.code == 0);
    CHECK(run.out.find("relation_encoder=51840 entity_predictor=104449 total=156289") != std::string::npos);
  }
  SUBCASE("training runs and finetune with zero epochs is a no-op") {
    REQUIRE(cli({"pretrain", "--config", (dir / "cfg.txt").string(), "--steps", "4", "--validation_interval",
                 "2", "--output", (dir / "a.ukgr").string()})
                .code == 0);
    const auto before = load_checkpoint(dir / "a.ukgr");
    CHECK(before.provenance.mixture.size() == 1);
    REQUIRE(cli({"finetune", "--config", (dir / "cfg.txt").string(), "--checkpoint", (dir / "a.ukgr").string(),
                 "--dataset", (dir / "data").string(), "--epochs", "0", "--output", (dir / "b.ukgr").string()})
                .code == 0);
    CHECK(load_checkpoint(dir / "b.ukgr").params == before.params);
    REQUIRE(cli({"finetune", "--config", (dir / "cfg.txt").string(), "--checkpoint", (dir / "a.ukgr").string(),
                 "--dataset", (dir / "data").string(), "--epochs", "1", "--batches_per_epoch", "2", "--output",
                 (dir / "c.ukgr").string()})
                .code == 0);
    CHECK(line_count(support::read_file(manifest)) == 3);
  }
  SUBCASE("eval twice gives byte-identical reports") {
    REQUIRE(cli({"pretrain", "--config", (dir / "cfg.txt").string(), "--output", (dir / "m.ukgr").string()}).code == 0);
    for (const char* protocol : {"full", "negs50"}) {
      const auto r1 = cli({"eval", "--manifest", manifest.string(), "--checkpoint", (dir / "m.ukgr").string(), "--dataset", (dir / "data").string(),
                           "--protocol", protocol, "--ranks", "--output", (dir / "r1.json").string()});
      const auto r2 = cli({"eval", "--manifest", manifest.string(), "--checkpoint", (dir / "m.ukgr").string(), "--dataset", (dir / "data").string(),
                           "--protocol", protocol, "--ranks", "--threads", "3", "--output",
                           (dir / "r2.json").string()});
      REQUIRE(r1.code == 0);
      REQUIRE(r2.code == 0);
      CHECK(support::read_file(dir / "r1.json") == support::read_file(dir / "r2.json"));
      const auto j = nlohmann::json::parse(support::read_file(dir / "r1.json"));
      CHECK(j["protocol"]["name"] == protocol);
      CHECK(j.contains("ranks"));
    }
  }
  SUBCASE("config errors happen before any compute and exit with 1") {
    support::write_file(dir / "bad.txt", tiny_config(dir, "colour = blue\n"));
    CHECK(cli({"pretrain", "--config", (dir / "bad.txt").string(), "--output", (dir / "x.ukgr").string()}).code == kExitUsage);
    CHECK(cli({"pretrain", "--config", (dir / "cfg.txt").string(), "--output", (dir / "x.ukgr").string(),
               "--steps", "2", "--epochs", "2"})
              .code == kExitUsage);
    CHECK(cli({"pretrain", "--output", (dir / "x.ukgr").string()}).code == kExitUsage);
    CHECK(cli({"pretrain", "--config", (dir / "cfg.txt").string()}).code == kExitUsage);
    CHECK_FALSE(std::filesystem::exists(dir / "x.ukgr"));
    CHECK_FALSE(std::filesystem::exists(manifest));
  }
  SUBCASE("data errors exit with 2") {
    CHECK(cli({"eval", "--manifest", manifest.string(), "--checkpoint", (dir / "missing.ukgr").string(), "--dataset", (dir / "data").string(),
               "--output", (dir / "r.json").string()})
              .code == kExitData);
    support::write_file(dir / "junk.ukgr", "not a checkpoint");
    CHECK(cli({"eval", "--manifest", manifest.string(), "--checkpoint", (dir / "junk.ukgr").string(), "--dataset", (dir / "data").string(),
               "--output", (dir / "r.json").string()})
              .code == kExitData);
  }
  SUBCASE("flags override the config file") {
    support::write_file(dir / "seeded.txt", tiny_config(dir, "seed = 5\nablation = none\n"));
    REQUIRE(cli({"pretrain", "--config", (dir / "seeded.txt").string(), "--seed", "6", "--ablation", "no-etypes",
                 "--output", (dir / "o.ukgr").string()})
                .code == 0);
    const auto c = load_checkpoint(dir / "o.ukgr");
    CHECK(c.provenance.seed == 6);
    CHECK(c.model.ablation == Ablation::kNoEdgeTypes);
  }
}

TEST_CASE("synth writes a loadable dataset") {
  support::TempDir dir;
  const auto run = cli({"synth", (dir / "s").string(), "--seed", "3", "--families", "2"});
  REQUIRE(run.code == 0);
  const auto split = load_dataset(dir / "s", SplitMode::kTransductive);
  CHECK(split.train_graph->num_base_relations() == 8);
}

TEST_CASE("sha256 of a known string") {
  support::TempDir dir;
  support::write_file(dir / "abc", "abc");
  CHECK(sha256_file(dir / "abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
