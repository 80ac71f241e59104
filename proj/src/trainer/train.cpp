#include <chrono>
#include <cmath>
#include <ostream>
#include <thread>

#include "midpc/autodiff/ops.hpp"
#include "midpc/trainer/trainer.hpp"
#include "midpc/util/format.hpp"

namespace midpc::trainer {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

struct ShardResult {
  std::vector<ad::Tensor> grads;
  double loss = 0.0;
};

ShardResult run_shard(const policy::Policy& policy, const plant::Benchmark& bench,
                      const Batch& shard, std::uint64_t seed, double normalizer) {
  ad::Tape tape;
  nn::Binding params(tape, policy.parameters());
  Rng rng(seed);
  RolloutOptions options;
  options.mode = nn::Mode::Train;
  const auto result = rollout_loss(tape, params, policy, bench, shard, rng, options, normalizer);
  ShardResult out;
  out.loss = tape.value(result.loss).item();
  out.grads = params.collect(ad::backward(tape, result.loss));
  return out;
}

void clip_gradients(std::vector<ad::Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (double v : g.data()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (!(norm > max_norm)) return;
  const double f = max_norm / norm;
  for (auto& g : grads)
    for (double& v : g.data()) v *= f;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning rate must be positive");
  if (batch_size == 0) throw ConfigError("train: batch size must be positive");
  if (max_epochs == 0) throw ConfigError("train: max_epochs must be positive");
  if (patience == 0) throw ConfigError("train: patience must be positive");
  if (patience >= max_epochs) throw ConfigError("train: patience must be below max_epochs");
  if (shard_size == 0 || workers == 0 || dev_chunk == 0)
    throw ConfigError("train: shard size, workers and dev chunk must be positive");
  if (grad_clip < 0.0) throw ConfigError("train: grad_clip must be non-negative");
}

LossTerms evaluate_loss(const policy::Policy& policy, const plant::Benchmark& bench,
                        const plant::Dataset& data, std::size_t chunk) {
  if (data.size() == 0) throw ConfigError("evaluate_loss: empty dataset");
  LossTerms sum;
  Rng unused(0);
  RolloutOptions options;
  options.mode = nn::Mode::Eval;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t n = std::min(chunk, data.size() - start);
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = start + i;
    ad::Tape tape(false);
    nn::Binding params(tape, policy.parameters());
    const auto result =
        rollout_loss(tape, params, policy, bench, make_batch(data, idx), unused, options, 1.0);
    sum += result.terms.scaled(static_cast<double>(n));
  }
  return sum.scaled(1.0 / static_cast<double>(data.size()));
}

TrainResult train(policy::Policy& policy, const plant::Benchmark& bench,
                  const plant::Dataset& train_set, const plant::Dataset& dev_set,
                  const TrainConfig& config) {
  config.validate();
  const std::size_t horizon = policy.config().horizon;
  if (train_set.horizon != horizon || dev_set.horizon != horizon)
    throw ConfigError("train: dataset horizon (" + std::to_string(train_set.horizon) + "/" +
                      std::to_string(dev_set.horizon) + ") differs from policy horizon " +
                      std::to_string(horizon));
  if (train_set.size() == 0 || dev_set.size() == 0) throw ConfigError("train: empty dataset");

  const auto start = Clock::now();
  nn::AdamConfig adam;
  adam.learning_rate = config.learning_rate;
  nn::AdamState state = nn::AdamState::for_store(policy.parameters());

  TrainResult result;
  result.initial_dev_loss = evaluate_loss(policy, bench, dev_set, config.dev_chunk).total;
  result.best_dev_loss = result.initial_dev_loss;
  nn::ParameterStore best = policy.parameters();
  std::size_t bad = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto epoch_start = Clock::now();
    Rng shuffle(derive_seed(config.seed, 0x73687566ULL, epoch));
    const auto order = permutation(train_set.size(), shuffle);
    double train_sum = 0.0;

    std::size_t batch_id = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += config.batch_size, ++batch_id) {
      const std::size_t bn = std::min(config.batch_size, order.size() - b0);
      const std::size_t n_shards = (bn + config.shard_size - 1) / config.shard_size;
      std::vector<ShardResult> shards(n_shards);
      auto work = [&](std::size_t s) {
        const std::size_t s0 = b0 + s * config.shard_size;
        const std::size_t sn = std::min(config.shard_size, b0 + bn - s0);
        const Batch shard = make_batch(train_set, std::span(order).subspan(s0, sn));
        shards[s] = run_shard(policy, bench, shard, derive_seed(config.seed, epoch, batch_id, s),
                              static_cast<double>(bn));
      };
      if (config.workers <= 1 || n_shards == 1) {
        for (std::size_t s = 0; s < n_shards; ++s) work(s);
      } else {
        std::vector<std::exception_ptr> errors(config.workers);
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < config.workers; ++t)
          pool.emplace_back([&, t] {
            try {
              for (std::size_t s = t; s < n_shards; s += config.workers) work(s);
            } catch (...) {
              errors[t] = std::current_exception();
            }
          });
        for (auto& th : pool) th.join();
        for (auto& e : errors)
          if (e) std::rethrow_exception(e);
      }

      // Fixed shard order keeps the reduction independent of worker count.
      std::vector<ad::Tensor> grads = std::move(shards[0].grads);
      double batch_loss = shards[0].loss;
      for (std::size_t s = 1; s < n_shards; ++s) {
        for (std::size_t i = 0; i < grads.size(); ++i) {
          double* dst = grads[i].raw();
          const double* src = shards[s].grads[i].raw();
          for (std::size_t k = 0; k < grads[i].size(); ++k) dst[k] += src[k];
        }
        batch_loss += shards[s].loss;
      }
      if (config.grad_clip > 0.0) clip_gradients(grads, config.grad_clip);
      nn::adam_step(policy.parameters(), grads, state, adam,
                    {static_cast<long>(epoch), static_cast<long>(batch_id)});
      train_sum += batch_loss * static_cast<double>(bn);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_sum / static_cast<double>(train_set.size());
    rec.dev_loss = evaluate_loss(policy, bench, dev_set, config.dev_chunk).total;
    if (!std::isfinite(rec.dev_loss)) {
      policy.parameters() = best;
      result.seconds = seconds_since(start);
      throw TrainingDiverged("train: dev loss became non-finite at epoch " +
                                 std::to_string(epoch) + "; best parameters restored",
                             result);
    }
    if (rec.dev_loss < result.best_dev_loss - config.min_improvement) {
      result.best_dev_loss = rec.dev_loss;
      result.best_epoch = epoch;
      best = policy.parameters();
      bad = 0;
    } else {
      ++bad;
    }
    rec.bad_count = bad;
    rec.seconds = seconds_since(epoch_start);
    result.history.push_back(rec);
    if (config.on_epoch) config.on_epoch(rec);
    if (bad >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }
  policy.parameters() = best;
  result.seconds = seconds_since(start);
  return result;
}

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history) {
  out << "epoch,train_loss,dev_loss,bad_count,seconds\n";
  for (const auto& r : history)
    out << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.dev_loss) << ','
        << r.bad_count << ',' << format_fixed(r.seconds, 3) << '\n';
}

}  // namespace midpc::trainer
