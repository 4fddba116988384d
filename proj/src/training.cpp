#include "ultra/training.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <sstream>

#include "ultra/errors.hpp"
#include "ultra/parallel.hpp"

namespace ultra {
namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

bool all_finite(const std::vector<nd::Tensor>& ts) {
  return std::all_of(ts.begin(), ts.end(), [](const nd::Tensor& t) { return t.all_finite(); });
}

std::string format_step(std::size_t step, double loss) {
  std::ostringstream os;
  os << "step " << step << " loss " << loss;
  return os.str();
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (num_negatives < 1) throw ConfigError("num_negatives must be at least 1");
  if (!(adversarial_temperature > 0.0)) throw ConfigError("adversarial_temperature must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (steps > 0 && epochs > 0) throw ConfigError("set either steps or epochs, not both");
  if (steps > 0 && validation_interval < 1) throw ConfigError("validation_interval must be at least 1");
  if (threads < 1) throw ConfigError("threads must be at least 1");
  valid_protocol.validate();
}

nd::AdamWConfig TrainConfig::adamw() const {
  nd::AdamWConfig c;
  c.learning_rate = learning_rate;
  c.weight_decay = weight_decay;
  return c;
}

std::vector<Triple> sample_negatives(const TripleGraph& g, const Triple& positive, std::size_t n,
                                     std::mt19937_64& rng, std::size_t max_attempts) {
  if (g.num_entities() < 2) {
    throw SamplingError("cannot corrupt a triple in a graph with fewer than 2 entities");
  }
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<EntityId> entity(0, static_cast<EntityId>(g.num_entities() - 1));
  std::vector<Triple> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool corrupt_head = coin(rng);
    Triple neg = positive;
    for (std::size_t attempt = 0; attempt <= max_attempts; ++attempt) {
      neg = positive;
      (corrupt_head ? neg.head : neg.tail) = entity(rng);
      if (!g.contains(neg)) break;
    }
    out.push_back(neg);
  }
  return out;
}

std::vector<double> negative_weights(std::span<const double> neg_logits, double temperature) {
  const std::size_t n = neg_logits.size();
  std::vector<double> w(n);
  if (n == 0) return w;
  if (temperature == 1.0) {
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(n));
    return w;
  }
  const double top = *std::max_element(neg_logits.begin(), neg_logits.end()) / temperature;
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = std::exp(neg_logits[i] / temperature - top);
    z += w[i];
  }
  for (auto& v : w) v /= z;
  return w;
}

double bce_loss(double pos_logit, std::span<const double> neg_logits, double temperature) {
  if (!std::isfinite(pos_logit) ||
      !std::all_of(neg_logits.begin(), neg_logits.end(), [](double v) { return std::isfinite(v); })) {
    throw NumericError("bce_loss: non-finite logit");
  }
  const auto w = negative_weights(neg_logits, temperature);
  double loss = softplus(-pos_logit);
  for (std::size_t i = 0; i < neg_logits.size(); ++i) loss += w[i] * softplus(neg_logits[i]);
  return loss;
}

nd::Var bce_loss(nd::Var pos_logit, nd::Var neg_logits, double temperature) {
  if (pos_logit.value().size() != 1 || neg_logits.cols() != 1) {
    throw DimensionError("bce_loss: expects a 1x1 positive and an n x 1 column of negatives");
  }
  nd::Tape& tape = pos_logit.tape();
  const nd::Var pos_term = nd::softplus(nd::scale(pos_logit, -1.0));
  const nd::Var neg_sp = nd::softplus(neg_logits);
  const auto w = negative_weights(neg_logits.value().values(), temperature);
  const nd::Var neg_term =
      nd::sum(nd::mul(neg_sp, tape.constant(nd::Tensor(w.size(), 1, std::vector<double>(w)))));
  return nd::add(pos_term, neg_term);
}

MixtureSampler::MixtureSampler(std::vector<std::size_t> edge_counts) {
  if (edge_counts.empty()) throw ConfigError("training mixture is empty");
  double total = 0.0;
  for (auto c : edge_counts) total += static_cast<double>(c);
  if (total <= 0.0) throw ConfigError("training mixture has no edges");
  for (auto c : edge_counts) probabilities_.push_back(static_cast<double>(c) / total);
  dist_ = std::discrete_distribution<std::size_t>(probabilities_.begin(), probabilities_.end());
}

std::size_t MixtureSampler::operator()(std::mt19937_64& rng) { return dist_(rng); }

nd::Var positive_loss(const BoundParams& params, const ModelConfig& config, const GraphContext& ctx,
                      const Triple& positive, std::span<const Triple> negatives,
                      double temperature, const nd::MessageIndex* entity_index) {
  const TripleGraph& g = *ctx.graph;
  const nd::MessageIndex& index = entity_index ? *entity_index : ctx.entity_index;
  std::vector<std::uint32_t> tails, heads;
  for (const auto& n : negatives) {
    if (n.relation != positive.relation) throw ContractViolation("negative changes the relation");
    if (n.head != positive.head) {
      heads.push_back(n.head);
    } else {
      tails.push_back(n.tail);
    }
  }
  const auto rel_shape = config.relnet_shape();
  const auto ent_shape = config.entnet_shape();
  auto logits_from = [&](EntityId head, RelationId q) {
    const nd::Var rel = encode_relations(params, rel_shape, *ctx.relation_graph, ctx.relation_index, q);
    return score_states(params, entity_states(params, ent_shape, g, index, head, q, rel));
  };

  const nd::Var forward = logits_from(positive.head, positive.relation);
  const std::uint32_t pos_row[] = {positive.tail};
  const nd::Var pos = nd::index_select(forward, pos_row);
  std::vector<nd::Var> parts;
  if (!tails.empty()) parts.push_back(nd::index_select(forward, tails));
  if (!heads.empty()) {
    const nd::Var backward = logits_from(positive.tail, g.inverse_of(positive.relation));
    parts.push_back(nd::index_select(backward, heads));
  }
  if (parts.empty()) throw ContractViolation("positive_loss: no negatives");
  const nd::Var negs = parts.size() == 1 ? parts[0] : nd::concat_rows(parts);
  return bce_loss(pos, negs, temperature);
}

TrainResult train(const TrainConfig& config, std::span<const TrainDataset> datasets,
                  const Checkpoint& initial, const std::function<void(const std::string&)>& log) {
  config.validate();
  std::vector<std::size_t> edge_counts;
  for (const auto& d : datasets) {
    if (!d.split.train_graph || !d.split.train_graph->inverses_added()) {
      throw ContractViolation("training graph " + d.name + " must be inverse-augmented");
    }
    edge_counts.push_back(d.split.train_graph->num_edges());
  }
  MixtureSampler mixture(edge_counts);

  UltraModel model(initial.model, initial.params);
  const ModelConfig& mc = model.config();
  nd::OptimizerState opt = nd::OptimizerState::zeros_like(model.params().tensors(), config.adamw());

  std::size_t per_epoch = config.batches_per_epoch;
  if (config.epochs > 0 && per_epoch == 0) {
    std::size_t total_edges = 0;
    for (auto c : edge_counts) total_edges += c;
    per_epoch = std::max<std::size_t>(1, (total_edges + config.batch_size - 1) / config.batch_size);
  }
  const std::size_t total_steps = config.epochs > 0 ? config.epochs * per_epoch : config.steps;
  auto validate_after = [&](std::size_t step) {
    if (config.epochs > 0) return step % per_epoch == 0;
    return step % config.validation_interval == 0 || step == total_steps;
  };

  std::vector<std::shared_ptr<const GraphContext>> contexts;
  for (const auto& d : datasets) contexts.push_back(make_graph_context(d.split.train_graph, mc.lift_mode()));

  bool can_validate = false;
  for (const auto& d : datasets) can_validate = can_validate || !d.split.valid_queries.empty();

  TrainResult result;
  result.total_steps = total_steps;
  Provenance provenance;
  for (const auto& d : datasets) provenance.mixture.push_back(d.name);
  provenance.seed = config.seed;

  ParameterStore best = model.params();
  nd::OptimizerState best_opt = opt;
  std::size_t best_step = 0;

  auto run_validation = [&](std::size_t step) {
    UltraScorer scorer(model, config.threads);
    double mrr_sum = 0.0;
    std::size_t counted = 0;
    for (const auto& d : datasets) {
      if (d.split.valid_queries.empty()) continue;
      std::span<const Triple> queries = d.split.valid_queries;
      if (config.max_valid_queries > 0 && queries.size() > config.max_valid_queries) {
        queries = queries.first(config.max_valid_queries);
      }
      const FilterIndex filter = build_filter(d.split, SplitPart::kValid, config.valid_protocol);
      const auto report =
          evaluate(scorer, d.split.valid_graph, queries, filter, config.valid_protocol, config.seed);
      mrr_sum += report.mrr;
      ++counted;
    }
    const double mrr = mrr_sum / static_cast<double>(counted);
    result.validations.push_back({step, mrr});
    if (log) log("validation step " + std::to_string(step) + " mrr " + std::to_string(mrr));
    if (!result.best_valid_mrr || mrr > *result.best_valid_mrr) {
      result.best_valid_mrr = mrr;
      best = model.params();
      best_opt = opt;
      best_step = step;
    }
  };

  auto diverge = [&](const std::string& what, std::size_t step) -> TrainingDivergence {
    std::string path;
    if (!config.last_good_path.empty()) {
      Checkpoint last{mc, model.params(), opt, provenance};
      last.provenance.step = step;
      save_checkpoint(last, config.last_good_path);
      path = config.last_good_path.string();
    }
    return TrainingDivergence("training diverged at step " + std::to_string(step + 1) + ": " + what, path);
  };

  auto validate_or_diverge = [&](std::size_t step) {
    try {
      run_validation(step);
    } catch (const NumericError& e) {
      throw diverge(std::string("validation: ") + e.what(), step);
    }
  };
  if (total_steps > 0 && can_validate) validate_or_diverge(0);

  std::mt19937_64 rng(config.seed);
  const std::size_t n_params = model.params().size();
  for (std::size_t step = 0; step < total_steps; ++step) {
    const std::size_t which = mixture(rng);
    const TripleGraph& g = *datasets[which].split.train_graph;
    const GraphContext& ctx = *contexts[which];
    if (g.num_edges() == 0) throw DataError("training graph " + datasets[which].name + " has no edges");
    std::uniform_int_distribution<std::size_t> pick(0, g.num_edges() - 1);
    std::vector<Triple> positives(config.batch_size);
    std::vector<std::vector<Triple>> negatives(config.batch_size);
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      positives[b] = g.edges()[pick(rng)];
      negatives[b] = sample_negatives(g, positives[b], config.num_negatives, rng,
                                      config.max_resample_attempts);
    }

    std::vector<double> losses(config.batch_size);
    std::vector<std::vector<nd::Tensor>> per_positive(config.deterministic ? config.batch_size : 0);
    std::vector<nd::Tensor> grads;
    for (const auto& p : model.params().tensors()) grads.emplace_back(p.rows(), p.cols());
    std::mutex grad_mutex;
    try {
      parallel_for(config.batch_size, config.threads, [&](std::size_t b) {
        nd::Tape tape;
        BoundParams bound(tape, model.params(), true);
        std::optional<nd::MessageIndex> reduced;
        if (config.remove_positive_edges) {
          const Triple& p = positives[b];
          const Triple hidden[] = {p, Triple{p.tail, g.inverse_of(p.relation), p.head}};
          reduced = entity_message_index(g, hidden);
        }
        const nd::Var loss = positive_loss(bound, mc, ctx, positives[b], negatives[b],
                                           config.adversarial_temperature,
                                           reduced ? &*reduced : nullptr);
        tape.backward(loss);
        losses[b] = loss.value().item();
        auto g_b = bound.gradients();
        if (config.deterministic) {
          per_positive[b] = std::move(g_b);
        } else {
          std::lock_guard lock(grad_mutex);
          for (std::size_t i = 0; i < n_params; ++i) {
            auto dst = grads[i].values();
            auto src = g_b[i].values();
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
          }
        }
      });
    } catch (const NumericError& e) {
      throw diverge(e.what(), step);
    }
    if (config.deterministic) {
      for (std::size_t b = 0; b < config.batch_size; ++b) {
        for (std::size_t i = 0; i < n_params; ++i) {
          auto dst = grads[i].values();
          auto src = per_positive[b][i].values();
          for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
      }
    }
    const double inv_b = 1.0 / static_cast<double>(config.batch_size);
    double loss = 0.0;
    for (double l : losses) loss += l;
    loss *= inv_b;
    for (auto& gr : grads) {
      for (auto& v : gr.values()) v *= inv_b;
    }
    if (!std::isfinite(loss) || !all_finite(grads)) throw diverge("non-finite loss or gradient", step);

    nd::adamw_step(model.params().tensors(), grads, opt);
    result.history.push_back({step + 1, which, loss});
    if (log && config.log_every > 0 && (step + 1) % config.log_every == 0) log(format_step(step + 1, loss));
    if (can_validate && validate_after(step + 1)) validate_or_diverge(step + 1);
  }

  Checkpoint out;
  out.model = mc;
  out.provenance = provenance;
  if (total_steps == 0) {
    out.params = model.params();
    out.optimizer = initial.optimizer;
  } else if (result.best_valid_mrr) {
    out.params = std::move(best);
    out.optimizer = std::move(best_opt);
    out.provenance.step = best_step;
  } else {
    out.params = model.params();
    out.optimizer = std::move(opt);
    out.provenance.step = total_steps;
  }
  round_to_float32(out.params);
  if (out.optimizer) round_to_float32(*out.optimizer);
  result.checkpoint = std::move(out);
  return result;
}

}  // namespace ultra
