#include <cmath>

#include "midpc/autodiff/ops.hpp"
#include "midpc/trainer/trainer.hpp"

namespace midpc::trainer {

Batch make_batch(const plant::Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ConfigError("batch must be nonempty");
  const auto& first = data.samples.at(indices[0]);
  const std::size_t n_x = static_cast<std::size_t>(first.x0.size());
  const std::size_t n_d = static_cast<std::size_t>(first.d.cols());
  const std::size_t horizon = data.horizon;
  Batch b;
  b.x0 = ad::Tensor::matrix(indices.size(), n_x);
  b.d = ad::Tensor::matrix(indices.size(), horizon * n_d);
  b.index.assign(indices.begin(), indices.end());
  for (std::size_t row = 0; row < indices.size(); ++row) {
    const auto& s = data.samples.at(indices[row]);
    for (std::size_t i = 0; i < n_x; ++i) b.x0(row, i) = s.x0(static_cast<Eigen::Index>(i));
    for (std::size_t k = 0; k < horizon; ++k)
      for (std::size_t j = 0; j < n_d; ++j)
        b.d(row, k * n_d + j) = s.d(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
  }
  return b;
}

Batch make_batch(const plant::Dataset& data) {
  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return make_batch(data, all);
}

namespace {

ad::Tensor row_tensor(const Eigen::VectorXd& v) {
  return ad::Tensor({1, static_cast<std::size_t>(v.size())},
                    std::vector<double>(v.data(), v.data() + v.size()));
}

// Window seen at step k: d_k..d_{N-1} followed by k zero rows.
ad::Tensor shifted_window(const ad::Tensor& d, std::size_t k, std::size_t n_d) {
  ad::Tensor out(d.shape(), 0.0);
  const std::size_t cols = d.cols();
  const std::size_t keep = cols - k * n_d;
  for (std::size_t r = 0; r < d.rows(); ++r)
    std::copy_n(d.raw() + r * cols + k * n_d, keep, out.raw() + r * cols);
  return out;
}

ad::Tensor step_disturbance(const ad::Tensor& d, std::size_t k, std::size_t n_d) {
  ad::Tensor out = ad::Tensor::matrix(d.rows(), n_d);
  for (std::size_t r = 0; r < d.rows(); ++r)
    std::copy_n(d.raw() + r * d.cols() + k * n_d, n_d, out.raw() + r * n_d);
  return out;
}

std::optional<std::size_t> first_bad_row(const ad::Tensor& t) {
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c)
      if (!std::isfinite(t(r, c))) return r;
  return std::nullopt;
}

}  // namespace

RolloutResult rollout_loss(ad::Tape& tape, const nn::Binding& params, const policy::Policy& policy,
                           const plant::Benchmark& bench, const Batch& batch, Rng& rng,
                           const RolloutOptions& options, double normalizer) {
  const auto& w = bench.weights;
  const auto& c = bench.constraints;
  const std::size_t horizon = policy.config().horizon;
  const std::size_t n_d = static_cast<std::size_t>(bench.model.n_d());
  const std::size_t n_delta = static_cast<std::size_t>(bench.model.n_delta());
  if (batch.d.cols() != horizon * n_d)
    throw ShapeError("rollout: disturbance window has " + std::to_string(batch.d.cols()) +
                     " columns, policy horizon needs " + std::to_string(horizon * n_d));
  if (!(normalizer > 0.0)) throw ContractError("rollout: normalizer must be positive");

  const ad::Var r = tape.constant(row_tensor(w.r));
  ad::Var x = tape.constant(batch.x0);
  RolloutTrace trace;
  std::vector<ad::Var> states{x}, inputs;

  std::vector<ad::Var> tracking, effort, integer, state_pen, input_pen;
  for (std::size_t k = 0; k < horizon; ++k) {
    const ad::Var window = tape.constant(shifted_window(batch.d, k, n_d));
    const ad::Var xi = ad::concat_cols(tape, {x, window});
    const auto out = policy.forward(tape, params, xi, options.mode, rng, options.forward);
    const ad::Var u = out.u;
    const ad::Var delta = options.disconnect_integer
                              ? tape.constant(ad::Tensor::matrix(batch.size(), n_delta))
                              : out.delta;

    tracking.push_back(quadratic_form(tape, ad::sub(tape, x, r), w.Q));
    effort.push_back(quadratic_form(tape, u, w.R));
    integer.push_back(quadratic_form(tape, delta, w.rho));
    state_pen.push_back(state_penalty(tape, x, c));
    input_pen.push_back(input_penalty(tape, u, c));

    if (options.keep_trace) {
      trace.x.push_back(tape.value(x));
      trace.u.push_back(tape.value(u));
      trace.delta.push_back(tape.value(delta));
      trace.relaxed.push_back(tape.value(out.relaxed));
    }
    inputs.push_back(u);
    const ad::Var d = tape.constant(step_disturbance(batch.d, k, n_d));
    x = plant::step(tape, bench.model, x, u, delta, d);
    states.push_back(x);
  }
  tracking.push_back(quadratic_form(tape, ad::sub(tape, x, r), w.P));
  state_pen.push_back(state_penalty(tape, x, c));
  if (options.keep_trace) trace.x.push_back(tape.value(x));

  auto total = [&](const std::vector<ad::Var>& parts) {
    ad::Var acc = parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) acc = ad::add(tape, acc, parts[i]);
    return acc;
  };
  const ad::Var t_track = total(tracking);
  const ad::Var t_effort = total(effort);
  const ad::Var t_integer = total(integer);
  const ad::Var t_state = ad::scale(tape, total(state_pen), w.c_x);
  const ad::Var t_input = ad::scale(tape, total(input_pen), w.c_u);
  const ad::Var sum = total({t_track, t_effort, t_integer, t_state, t_input});

  const double per_sample = 1.0 / static_cast<double>(batch.size());
  RolloutResult result;
  result.terms.tracking = tape.value(t_track).item() * per_sample;
  result.terms.input_cost = tape.value(t_effort).item() * per_sample;
  result.terms.integer_cost = tape.value(t_integer).item() * per_sample;
  result.terms.state_penalty = tape.value(t_state).item() * per_sample;
  result.terms.input_penalty = tape.value(t_input).item() * per_sample;
  result.terms.total = tape.value(sum).item() * per_sample;

  if (!std::isfinite(result.terms.total)) {
    std::optional<std::size_t> row;
    for (const ad::Var v : states)
      if ((row = first_bad_row(tape.value(v)))) break;
    if (!row)
      for (const ad::Var v : inputs)
        if ((row = first_bad_row(tape.value(v)))) break;
    const std::size_t sample = row && *row < batch.index.size() ? batch.index[*row] : 0;
    throw NumericalError("rollout: non-finite loss (first offending sample " +
                         std::to_string(sample) + ")");
  }

  result.loss = ad::scale(tape, sum, 1.0 / normalizer);
  if (options.keep_trace) result.trace = std::move(trace);
  return result;
}

}  // namespace midpc::trainer
