#include <doctest.h>

#include <cmath>
#include <numeric>

#include "gradcheck.hpp"
#include "support.hpp"
#include "ultra/checkpoint.hpp"
#include "ultra/errors.hpp"
#include "ultra/synthetic.hpp"
#include "ultra/training.hpp"

using namespace ultra;

namespace {

// 20 entities in a ring with r0 = next, r1 = next-next (= r0 composed with r0)
// and r2 = previous.
DatasetSplit ring_split() {
  std::vector<Triple> edges;
  std::vector<Triple> held;
  for (EntityId i = 0; i < 20; ++i) {
    edges.push_back({i, 0, (i + 1) % 20});
    edges.push_back({i, 2, (i + 19) % 20});
    (i % 5 == 0 ? held : edges).push_back({i, 1, (i + 2) % 20});
  }
  DatasetSplit s;
  s.train_graph = std::make_shared<const TripleGraph>(support::augmented(20, 3, edges));
  s.valid_graph = s.test_graph = s.train_graph;
  s.valid_queries.assign(held.begin(), held.begin() + 2);
  s.test_queries.assign(held.begin() + 2, held.end());
  return s;
}

Checkpoint initial_checkpoint(const ModelConfig& cfg, std::uint64_t seed) {
  Checkpoint c;
  c.model = cfg;
  c.params = make_initial_params(cfg, seed);
  return c;
}

TrainConfig small_config() {
  TrainConfig c;
  c.learning_rate = 5e-3;
  c.batch_size = 2;
  c.num_negatives = 8;
  c.steps = 10;
  c.validation_interval = 5;
  c.seed = 3;
  return c;
}

const ModelConfig kSmall{8, 2, 2, Ablation::kNone};

}  // namespace

TEST_CASE("sample_negatives returns n corruptions") {
  const auto split = ring_split();
  std::mt19937_64 rng(1);
  const Triple pos = split.train_graph->edges()[0];
  const auto negs = sample_negatives(*split.train_graph, pos, 128, rng);
  CHECK(negs.size() == 128);
  for (const auto& n : negs) {
    CHECK(n.relation == pos.relation);
    CHECK((n.head == pos.head || n.tail == pos.tail));
    CHECK_FALSE(split.train_graph->contains(n));
  }
}

TEST_CASE("two-entity graph forces the only valid corruption") {
  const auto g = support::augmented(2, 1, {{0, 0, 1}});
  std::mt19937_64 rng(2);
  for (const auto& n : sample_negatives(g, {0, 0, 1}, 64, rng)) {
    const bool tail_corrupted = n.head == 0;
    if (tail_corrupted) CHECK(n == Triple{0, 0, 0});
    else CHECK(n == Triple{1, 0, 1});
  }
}

TEST_CASE("negative sampling is seeded") {
  const auto split = ring_split();
  std::mt19937_64 a(9), b(9);
  const Triple pos = split.train_graph->edges()[3];
  CHECK(sample_negatives(*split.train_graph, pos, 50, a) == sample_negatives(*split.train_graph, pos, 50, b));
}

TEST_CASE("head and tail corruption are equally likely") {
  const auto g = support::augmented(1000, 1, {{0, 0, 1}});
  std::mt19937_64 rng(4);
  const auto negs = sample_negatives(g, {0, 0, 1}, 20000, rng);
  const auto heads = std::count_if(negs.begin(), negs.end(), [](const Triple& t) { return t.tail == 1; });
  CHECK(std::abs(static_cast<double>(heads) / 20000.0 - 0.5) < 0.02);
}

TEST_CASE("single-entity graph cannot be corrupted") {
  const auto g = support::augmented(1, 1, {{0, 0, 0}});
  std::mt19937_64 rng(5);
  CHECK_THROWS_AS(sample_negatives(g, {0, 0, 0}, 4, rng), SamplingError);
}

TEST_CASE("bce loss examples") {
  const double zero[] = {0.0};
  CHECK(bce_loss(0.0, zero, 1.0) == doctest::Approx(2 * std::log(2.0)).epsilon(1e-15));
  CHECK(std::abs(bce_loss(2 * std::log(2.0), zero, 1.0) - 1.3863) > 0.1);
  const double far[] = {-60.0, -70.0};
  CHECK(bce_loss(60.0, far, 1.0) < 1e-25);
  const double one[] = {0.3};
  const double two[] = {0.3, 0.3};
  CHECK(bce_loss(1.2, two, 1.0) == doctest::Approx(bce_loss(1.2, one, 1.0)).epsilon(1e-15));
  const double bad[] = {std::nan("")};
  CHECK_THROWS_AS(bce_loss(0.0, bad, 1.0), NumericError);
  CHECK_THROWS_AS(bce_loss(INFINITY, one, 1.0), NumericError);
}

TEST_CASE("negative weights are uniform at temperature 1 and softmax otherwise") {
  const double logits[] = {1.0, 2.0, 4.0};
  for (double w : negative_weights(logits, 1.0)) CHECK(w == doctest::Approx(1.0 / 3.0));
  const auto w = negative_weights(logits, 0.5);
  const double z = std::exp(2.0) + std::exp(4.0) + std::exp(8.0);
  CHECK(w[0] == doctest::Approx(std::exp(2.0) / z));
  CHECK(w[2] == doctest::Approx(std::exp(8.0) / z));
  CHECK(std::accumulate(w.begin(), w.end(), 0.0) == doctest::Approx(1.0));
}

TEST_CASE("tape bce loss agrees with the scalar version and its gradient") {
  std::mt19937_64 rng(6);
  const auto pos = support::random_tensor(1, 1, rng);
  const auto neg = support::random_tensor(5, 1, rng);
  for (const double temperature : {1.0, 0.7}) {
    nd::Tape tape;
    const nd::Var loss = bce_loss(tape.leaf(pos), tape.leaf(neg), temperature);
    CHECK(loss.value().item() ==
          doctest::Approx(bce_loss(pos.item(), neg.values(), temperature)).epsilon(1e-14));
    if (temperature == 1.0) {
      const auto errs = support::gradient_errors(
          [&](nd::Tape&, const std::vector<nd::Var>& v) { return bce_loss(v[0], v[1], temperature); },
          {pos, neg});
      for (double e : errs) CHECK(e <= 1e-6);
    }
  }
}

TEST_CASE("self-adversarial weights carry no gradient") {
  nd::Tape tape;
  const nd::Var pos = tape.leaf(nd::Tensor::scalar(0.3));
  const nd::Var neg = tape.leaf(nd::Tensor(3, 1, std::vector<double>{-1.0, 0.5, 2.0}));
  tape.backward(bce_loss(pos, neg, 0.7));
  const std::vector<double> logits{-1.0, 0.5, 2.0};
  const auto w = negative_weights(logits, 0.7);
  const auto grad = tape.grad(neg);
  for (std::size_t i = 0; i < 3; ++i) CHECK(grad.values()[i] == doctest::Approx(w[i] / (1.0 + std::exp(-logits[i]))));
  CHECK(tape.grad(pos).item() == doctest::Approx(-1.0 / (1.0 + std::exp(0.3))));
}

TEST_CASE("loss gradient vanishes at saturation") {
  nd::Tape tape;
  const nd::Var pos = tape.leaf(nd::Tensor::scalar(50.0));
  const nd::Var neg = tape.leaf(nd::Tensor(3, 1, -50.0));
  tape.backward(bce_loss(pos, neg, 1.0));
  CHECK(std::abs(tape.grad(pos).item()) < 1e-20);
  const auto grad = tape.grad(neg);
  for (double g : grad.values()) CHECK(std::abs(g) < 1e-20);
}

TEST_CASE("mixture sampler probabilities") {
  MixtureSampler m({100, 300});
  CHECK(m.probabilities()[0] == doctest::Approx(0.25));
  CHECK(m.probabilities()[1] == doctest::Approx(0.75));
  MixtureSampler single({42});
  std::mt19937_64 rng(7);
  for (int i = 0; i < 100; ++i) CHECK(single(rng) == 0);
  CHECK_THROWS_AS(MixtureSampler({}), ConfigError);
  CHECK_THROWS_AS(MixtureSampler({0, 0}), ConfigError);
}

TEST_CASE("mixture sampler Monte Carlo frequency") {
  MixtureSampler m({100, 300});
  std::mt19937_64 rng(8);
  std::size_t first = 0;
  for (int i = 0; i < 100000; ++i) first += m(rng) == 0;
  CHECK(std::abs(static_cast<double>(first) / 1e5 - 0.25) < 0.01);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  c.learning_rate = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.num_negatives = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.steps = 5;
  c.epochs = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("zero steps return the initial parameters") {
  const std::vector<TrainDataset> data{{"ring", ring_split()}};
  auto cfg = small_config();
  cfg.steps = 0;
  const auto init = initial_checkpoint(kSmall, 1);
  const auto out = train(cfg, data, init);
  CHECK(out.checkpoint.params == init.params);
  CHECK(out.history.empty());
  CHECK(out.validations.empty());
}

TEST_CASE("training lowers the loss on a composition rule") {
  const std::vector<TrainDataset> data{{"ring", ring_split()}};
  const auto& g = *data[0].split.train_graph;
  auto cfg = small_config();
  cfg.steps = 500;
  cfg.validation_interval = 1000;
  const auto init = initial_checkpoint(kSmall, 2);
  auto probe = data[0].split;
  probe.valid_queries.clear();
  const std::vector<TrainDataset> no_valid{{"ring", probe}};
  const auto out = train(cfg, no_valid, init);

  // Fixed probe: every training edge against the same negatives.
  std::mt19937_64 rng(77);
  std::vector<std::vector<Triple>> negs;
  for (const auto& e : g.edges()) negs.push_back(sample_negatives(g, e, 8, rng));
  auto probe_loss = [&](const ParameterStore& params) {
    const auto ctx = make_graph_context(data[0].split.train_graph, kSmall.lift_mode());
    double total = 0;
    for (std::size_t i = 0; i < g.num_edges(); ++i) {
      nd::Tape tape(false);
      BoundParams bound(tape, params, false);
      const Triple hidden[] = {g.edges()[i], {g.edges()[i].tail, g.inverse_of(g.edges()[i].relation), g.edges()[i].head}};
      const auto index = entity_message_index(g, hidden);
      total += positive_loss(bound, kSmall, *ctx, g.edges()[i], negs[i], 1.0, &index).value().item();
    }
    return total / static_cast<double>(g.num_edges());
  };
  const double before = probe_loss(init.params);
  const double after = probe_loss(out.checkpoint.params);
  MESSAGE("probe loss " << before << " -> " << after);
  CHECK(after < before);
  CHECK(out.total_steps == 500);
  CHECK(out.checkpoint.provenance.step == 500);
}

TEST_CASE("deterministic training is reproducible and thread independent") {
  const std::vector<TrainDataset> data{{"ring", ring_split()}};
  auto cfg = small_config();
  const auto init = initial_checkpoint(kSmall, 3);
  const auto a = train(cfg, data, init);
  const auto b = train(cfg, data, init);
  cfg.threads = 3;
  const auto c = train(cfg, data, init);
  CHECK(serialize_checkpoint(a.checkpoint) == serialize_checkpoint(b.checkpoint));
  CHECK(serialize_checkpoint(a.checkpoint) == serialize_checkpoint(c.checkpoint));
}

TEST_CASE("validation at step 0 and per interval keeps the best checkpoint") {
  const std::vector<TrainDataset> data{{"ring", ring_split()}};
  auto cfg = small_config();
  cfg.steps = 12;
  cfg.validation_interval = 5;
  const auto out = train(cfg, data, initial_checkpoint(kSmall, 4));
  std::vector<std::size_t> steps;
  for (const auto& v : out.validations) steps.push_back(v.step);
  CHECK(steps == std::vector<std::size_t>{0, 5, 10, 12});
  const auto best = std::max_element(out.validations.begin(), out.validations.end(),
                                     [](const auto& x, const auto& y) { return x.mrr < y.mrr; });
  CHECK(*out.best_valid_mrr == best->mrr);
  CHECK(out.checkpoint.provenance.step == best->step);
  REQUIRE(out.checkpoint.optimizer.has_value());
  CHECK(out.checkpoint.optimizer->step == best->step);
}

TEST_CASE("epoch schedule validates once per epoch") {
  const std::vector<TrainDataset> data{{"ring", ring_split()}};
  auto cfg = small_config();
  cfg.steps = 0;
  cfg.epochs = 3;
  cfg.batches_per_epoch = 2;
  const auto out = train(cfg, data, initial_checkpoint(kSmall, 5));
  CHECK(out.total_steps == 6);
  CHECK(out.validations.size() == 4);
}

TEST_CASE("mixture training records which graph each batch used") {
  auto small = ring_split();
  const std::vector<TrainDataset> data{{"a", small}, {"b", small}};
  auto cfg = small_config();
  cfg.steps = 40;
  const auto out = train(cfg, data, initial_checkpoint(kSmall, 6));
  std::size_t from_b = 0;
  for (const auto& h : out.history) from_b += h.dataset;
  CHECK(from_b > 0);
  CHECK(from_b < 40);
  CHECK(out.checkpoint.provenance.mixture == std::vector<std::string>{"a", "b"});
}

TEST_CASE("divergence aborts with the last good checkpoint") {
  support::TempDir dir;
  auto split = ring_split();
  split.valid_queries.clear();
  const std::vector<TrainDataset> data{{"ring", split}};
  auto cfg = small_config();
  cfg.last_good_path = dir / "last_good.ukgr";
  auto init = initial_checkpoint(kSmall, 7);
  init.params.at(entnet_names::kScoreB2).fill(1e308);
  init.params.at(entnet_names::kScoreW2).fill(1e308);
  try {
    train(cfg, data, init);
    FAIL("expected divergence");
  } catch (const TrainingDivergence& e) {
    CHECK(e.last_good_path() == cfg.last_good_path.string());
    CHECK(std::filesystem::exists(cfg.last_good_path));
    CHECK(load_checkpoint(cfg.last_good_path).provenance.step == 0);
  }
}

TEST_CASE("non-finite validation scores also count as divergence") {
  const std::vector<TrainDataset> data{{"ring", ring_split()}};
  auto cfg = small_config();
  auto init = initial_checkpoint(kSmall, 7);
  init.params.at(entnet_names::kScoreB2).fill(1e308);
  init.params.at(entnet_names::kScoreW2).fill(1e308);
  CHECK_THROWS_AS(train(cfg, data, init), TrainingDivergence);
}

TEST_CASE("checkpoint round trip is bitwise") {
  support::TempDir dir;
  const std::vector<TrainDataset> data{{"ring", ring_split()}};
  auto cfg = small_config();
  const auto out = train(cfg, data, initial_checkpoint(kSmall, 8)).checkpoint;
  save_checkpoint(out, dir / "a.ukgr");
  const auto back = load_checkpoint(dir / "a.ukgr");
  CHECK(back.params == out.params);
  CHECK(back.model == out.model);
  CHECK(back.provenance == out.provenance);
  REQUIRE(back.optimizer.has_value());
  CHECK(back.optimizer->first_moment == out.optimizer->first_moment);
  CHECK(back.optimizer->second_moment == out.optimizer->second_moment);
  CHECK(back.optimizer->step == out.optimizer->step);
  save_checkpoint(back, dir / "b.ukgr");
  CHECK(support::read_file(dir / "a.ukgr") == support::read_file(dir / "b.ukgr"));
}

TEST_CASE("checkpoint without optimizer state") {
  const auto c = initial_checkpoint(kSmall, 9);
  const auto back = deserialize_checkpoint(serialize_checkpoint(c));
  CHECK_FALSE(back.optimizer.has_value());
  CHECK(back.params == c.params);
}

TEST_CASE("checkpoint header layout") {
  const auto bytes = serialize_checkpoint(initial_checkpoint(kSmall, 10));
  CHECK(bytes.substr(0, 4) == "UKGR");
  CHECK(static_cast<unsigned char>(bytes[4]) == kCheckpointVersion);
  CHECK(bytes[5] == 0);
  CHECK(bytes[16] == '{');
}

TEST_CASE("checkpoint version mismatch is rejected") {
  auto bytes = serialize_checkpoint(initial_checkpoint(kSmall, 11));
  bytes[4] = static_cast<char>(kCheckpointVersion + 1);
  try {
    deserialize_checkpoint(bytes, "mem");
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }
}

TEST_CASE("corrupt checkpoints are rejected") {
  const auto bytes = serialize_checkpoint(initial_checkpoint(kSmall, 12));
  CHECK_THROWS_AS(deserialize_checkpoint("XKGR" + bytes.substr(4)), DataError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), DataError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, 10)), DataError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.ukgr"), IoError);
}

TEST_CASE("synthetic compositional split") {
  const SyntheticSpec spec;
  const auto split = make_compositional_split(spec, 1);
  CHECK(split.train_graph->num_entities() == 2000);
  CHECK(split.train_graph->num_base_relations() == 20);
  CHECK(split.valid_queries.size() == 120);
  CHECK(split.test_queries.size() == 120);
  for (const auto& q : split.test_queries) CHECK_FALSE(split.train_graph->contains(q));
  const auto again = make_compositional_split(spec, 1);
  CHECK(again.test_queries == split.test_queries);

  support::TempDir dir;
  write_split(split, dir.path());
  const auto loaded = load_dataset(dir.path(), SplitMode::kTransductive);
  CHECK(loaded.train_graph->num_edges() == split.train_graph->num_edges());
  CHECK(loaded.test_queries.size() == 120);
}
