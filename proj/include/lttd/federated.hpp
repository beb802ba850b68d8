// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "lttd/data.hpp"
#include "lttd/errors.hpp"
#include "lttd/model.hpp"
#include "lttd/rng.hpp"
#include "lttd/topology.hpp"

namespace lttd {

// Deterministic lockstep simulator for decentralized training.
//
// Round semantics: every silo advances in lockstep. On an averaging round
// (k = 0 mod u+1) a silo with more than one in-neighbor mixes the
// pre-round snapshot of its neighborhood through the consensus matrix;
// everyone else takes a minibatch gradient step. Batches are drawn from a
// counter RNG keyed by (seed, silo, round), so trajectories are
// independent of thread count and schedule.

enum class TrainMode { cll, sfl, dfl };
enum class AlphaSchedule { constant, inv_sqrt };
enum class ConsensusKind { metropolis, uniform };

struct TrainConfig {
  TrainMode mode = TrainMode::dfl;
  std::size_t rounds = 300;
  std::size_t u = 2;          // local updates between averaging rounds
  std::size_t batch = 32;
  double alpha = 0.05;
  AlphaSchedule schedule = AlphaSchedule::constant;
  std::uint64_t seed = 0;
  std::size_t eval_every = 10;
  std::size_t threads = 1;
  double clip_norm = 10.0;    // L2 clip per silo step; 0 disables
  ConsensusKind consensus = ConsensusKind::metropolis;
  std::array<bool, 3> modality_mask{true, true, true};
  std::vector<std::uint8_t> participation;  // empty: everyone joins
  bool head_only = false;  // freeze everything but the head (convex probe)
  bool record_wall_time = false;

  double alpha_at(std::size_t k) const {
    return schedule == AlphaSchedule::constant
               ? alpha
               : alpha / std::sqrt(static_cast<double>(k + 1));
  }

  void validate() const {
    if (batch < 1) throw config_error("TrainConfig: batch must be >= 1");
    if (alpha <= 0.0) throw config_error("TrainConfig: alpha must be > 0");
    if (eval_every < 1)
      throw config_error("TrainConfig: eval_every must be >= 1");
    if (threads < 1) throw config_error("TrainConfig: threads must be >= 1");
  }
};

struct SiloState {
  std::size_t silo_id = 0;
  std::vector<double> theta;
  Shard shard;
  std::uint8_t participation = 1;  // lambda_i
  std::size_t rounds_averaged = 0;
  std::size_t rounds_gradient = 0;
};

struct MetricsRow {
  std::size_t round = 0;
  double global_rmse = 0.0;
  double global_mae = 0.0;
  double mean_silo_loss = 0.0;
  long long wall_ms = 0;
};

struct MetricsHistory {
  std::vector<MetricsRow> rows;

  void write_csv(std::ostream& os) const {
    os << "round,global_rmse,global_mae,mean_silo_loss,wall_ms\n";
    char buf[32];
    auto emit = [&](double v) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      os << ',' << buf;
    };
    for (const MetricsRow& r : rows) {
      os << r.round;
      emit(r.global_rmse);
      emit(r.global_mae);
      emit(r.mean_silo_loss);
      os << ',' << r.wall_ms << '\n';
    }
  }
};

/// Zeroes out the modalities a run is ablating.
inline SteeringSample apply_modality_mask(SteeringSample s,
                                          const std::array<bool, 3>& mask) {
  if (!mask[0])
    s.past_frames = DenseTensor{s.past_frames.shape()};
  if (!mask[1]) s.past_steering = {};
  if (!mask[2])
    s.current_image = DenseTensor{s.current_image.shape()};
  return s;
}

/// Unweighted mean of the participating silos' parameters. Computed in
/// centered form, base + sum w*(theta_j - base), so aggregating identical
/// thetas returns that theta bit for bit.
inline std::vector<double> fedavg_aggregate(std::span<const SiloState> states) {
  std::size_t joined = 0;
  const std::vector<double>* base = nullptr;
  for (const SiloState& s : states)
    if (s.participation) {
      if (!base) base = &s.theta;
      ++joined;
    }
  if (joined == 0)
    throw config_error("fedavg_aggregate: no participating silo");
  const double w = 1.0 / static_cast<double>(joined);
  std::vector<double> delta(base->size(), 0.0);
  for (const SiloState& s : states) {
    if (!s.participation) continue;
    if (s.theta.size() != delta.size())
      throw shape_error("fedavg_aggregate: parameter length mismatch");
    for (std::size_t c = 0; c < delta.size(); ++c)
      delta[c] += w * (s.theta[c] - (*base)[c]);
  }
  std::vector<double> global(*base);
  for (std::size_t c = 0; c < global.size(); ++c) global[c] += delta[c];
  return global;
}

namespace detail {

inline std::vector<double> silo_gradient_step(const SiloState& state,
                                              const PredictorConfig& pcfg,
                                              const TrainConfig& tcfg,
                                              std::size_t k) {
  // a batch at least the shard size degenerates to the full shard in
  // order (deterministic full-gradient steps); otherwise sample with
  // replacement from the silo's own counter stream
  std::vector<SteeringSample> batch;
  if (tcfg.batch >= state.shard.samples.size()) {
    batch.assign(state.shard.samples.begin(), state.shard.samples.end());
  } else {
    CounterRng rng(tcfg.seed, "batch", state.silo_id, k);
    batch.reserve(tcfg.batch);
    for (std::size_t h = 0; h < tcfg.batch; ++h)
      batch.push_back(state.shard.samples[rng.uniform_index(
          state.shard.samples.size())]);
  }

  const PredictorParams params = unflatten(pcfg, state.theta);
  std::vector<double> grad = flatten(loss_gradient(params, pcfg, batch));
  for (double g : grad)
    if (!std::isfinite(g))
      throw divergence_error("silo " + std::to_string(state.silo_id) +
                             " round " + std::to_string(k) +
                             ": non-finite gradient, aborting");
  if (tcfg.head_only) {
    // head.w and head_b sit at the tail of the flat layout
    const std::size_t body = grad.size() - (pcfg.lttd.d_z + 1);
    for (std::size_t c = 0; c < body; ++c) grad[c] = 0.0;
  }
  if (tcfg.clip_norm > 0.0) {
    double sq = 0.0;
    for (double g : grad) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > tcfg.clip_norm) {
      const double scale = tcfg.clip_norm / norm;
      for (double& g : grad) g *= scale;
    }
  }
  const double alpha = tcfg.alpha_at(k);
  std::vector<double> next = state.theta;
  for (std::size_t c = 0; c < next.size(); ++c) next[c] -= alpha * grad[c];
  return next;
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Results must be
/// written to disjoint slots; exceptions are rethrown on the caller.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  const std::size_t workers = std::min(threads, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (std::thread& th : pool) th.join();
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// One synchronous DPASGD round. Averaging applies to the pre-round
/// snapshot of all silos; a silo with at most one in-neighbor falls back
/// to a gradient step even on averaging rounds.
///
/// The row mix is evaluated in centered form around the snapshot of silo 0,
///   theta_i = base + sum_j a[i][j] * (theta_j - base),
/// valid because rows sum to one. The common base keeps the all-equal state
/// an exact fixed point and makes the uniform-matrix mix bit-identical to
/// fedavg_aggregate.
inline void dpasgd_round(std::vector<SiloState>& states,
                         const ConsensusMatrix& a, const Topology& topology,
                         const PredictorConfig& pcfg, const TrainConfig& tcfg,
                         std::size_t k) {
  const std::size_t n = states.size();
  if (a.n != n)
    throw shape_error("dpasgd_round: consensus matrix size mismatch");
  const bool averaging_round = (k % (tcfg.u + 1)) == 0;

  std::vector<std::vector<double>> next(n);
  const std::vector<SiloState>& snapshot = states;
  const std::vector<double>& base = snapshot[0].theta;
  detail::parallel_for(n, tcfg.threads, [&](std::size_t i) {
    if (averaging_round && topology.in_degree(i) > 1) {
      std::vector<double> delta(base.size(), 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        const double w = a.at(i, j);
        if (w == 0.0) continue;
        if (snapshot[j].theta.size() != base.size())
          throw shape_error("dpasgd_round: parameter length mismatch");
        for (std::size_t c = 0; c < delta.size(); ++c)
          delta[c] += w * (snapshot[j].theta[c] - base[c]);
      }
      std::vector<double> mixed(base);
      for (std::size_t c = 0; c < mixed.size(); ++c) mixed[c] += delta[c];
      next[i] = std::move(mixed);
      states[i].rounds_averaged++;  // counter write is silo-local
    } else {
      next[i] = detail::silo_gradient_step(snapshot[i], pcfg, tcfg, k);
      states[i].rounds_gradient++;
    }
  });
  for (std::size_t i = 0; i < n; ++i) states[i].theta = std::move(next[i]);
}

/// One server-based round: global FedAvg broadcast on the averaging
/// cadence, local gradient steps otherwise.
inline void sfl_round(std::vector<SiloState>& states,
                      const PredictorConfig& pcfg, const TrainConfig& tcfg,
                      std::size_t k) {
  const bool averaging_round = (k % (tcfg.u + 1)) == 0;
  if (averaging_round) {
    std::vector<double> global = fedavg_aggregate(states);
    for (SiloState& s : states) {
      s.theta = global;
      s.rounds_averaged++;
    }
    return;
  }
  std::vector<std::vector<double>> next(states.size());
  detail::parallel_for(states.size(), tcfg.threads, [&](std::size_t i) {
    next[i] = detail::silo_gradient_step(states[i], pcfg, tcfg, k);
    states[i].rounds_gradient++;
  });
  for (std::size_t i = 0; i < states.size(); ++i)
    states[i].theta = std::move(next[i]);
}

struct SimulationResult {
  MetricsHistory history;
  std::vector<SiloState> states;
};

/// Full lockstep run. Shards and the held-out set are masked once up
/// front; every `eval_every` completed rounds (and at round 0 and the
/// final round) the FedAvg global model is scored on the held-out set and
/// per-silo full-shard losses are recorded.
inline SimulationResult run_simulation(const Topology& topology,
                                       const PredictorConfig& pcfg,
                                       const TrainConfig& tcfg,
                                       std::span<const Shard> shards,
                                       std::span<const SteeringSample> holdout) {
  pcfg.validate();
  tcfg.validate();
  if (holdout.empty())
    throw config_error("run_simulation: empty held-out set");
  if (tcfg.mode == TrainMode::cll && shards.size() != 1)
    throw config_error("run_simulation: CLL expects exactly one shard");
  if (tcfg.mode == TrainMode::dfl && shards.size() != topology.n_silos)
    throw config_error("run_simulation: shard count != silo count");
  if (!tcfg.participation.empty() &&
      tcfg.participation.size() != shards.size())
    throw config_error("run_simulation: participation mask size mismatch");

  ConsensusMatrix a;
  if (tcfg.mode == TrainMode::dfl)
    a = tcfg.consensus == ConsensusKind::metropolis
            ? metropolis_weights(topology)
            : uniform_weights(topology);

  // masked copies of the data
  std::vector<SiloState> states(shards.size());
  const std::vector<double> theta0 = flatten(init_predictor(pcfg, tcfg.seed));
  for (std::size_t i = 0; i < shards.size(); ++i) {
    states[i].silo_id = i;
    states[i].theta = theta0;
    states[i].shard.silo_id = i;
    if (shards[i].samples.empty())
      throw config_error("run_simulation: empty shard " + std::to_string(i));
    for (const SteeringSample& s : shards[i].samples)
      states[i].shard.samples.push_back(
          apply_modality_mask(s, tcfg.modality_mask));
    states[i].participation =
        tcfg.participation.empty() ? 1 : tcfg.participation[i];
  }
  std::vector<SteeringSample> eval_set;
  eval_set.reserve(holdout.size());
  for (const SteeringSample& s : holdout)
    eval_set.push_back(apply_modality_mask(s, tcfg.modality_mask));

  const auto start = std::chrono::steady_clock::now();
  MetricsHistory history;

  auto evaluate = [&](std::size_t completed_rounds) {
    const std::vector<double> global = fedavg_aggregate(states);
    const PredictorParams gp = unflatten(pcfg, global);
    std::vector<double> preds(eval_set.size()), targets(eval_set.size());
    detail::parallel_for(eval_set.size(), tcfg.threads, [&](std::size_t i) {
      preds[i] = predict(gp, pcfg, eval_set[i]);
      targets[i] = eval_set[i].target_angle;
    });
    const Metrics m = metrics(preds, targets);

    std::vector<double> silo_losses(states.size());
    detail::parallel_for(states.size(), tcfg.threads, [&](std::size_t i) {
      const PredictorParams p = unflatten(pcfg, states[i].theta);
      std::vector<double> sp, st;
      sp.reserve(states[i].shard.samples.size());
      for (const SteeringSample& s : states[i].shard.samples) {
        sp.push_back(predict(p, pcfg, s));
        st.push_back(s.target_angle);
      }
      silo_losses[i] = mse_loss(sp, st);
    });
    double mean_loss = 0.0;
    for (double l : silo_losses) mean_loss += l;
    mean_loss /= static_cast<double>(silo_losses.size());

    MetricsRow row;
    row.round = completed_rounds;
    row.global_rmse = m.rmse;
    row.global_mae = m.mae;
    row.mean_silo_loss = mean_loss;
    row.wall_ms =
        tcfg.record_wall_time
            ? std::chrono::duration_cast<std::chrono::milliseconds>(
                  std::chrono::steady_clock::now() - start)
                  .count()
            : 0;
    history.rows.push_back(row);
  };

  evaluate(0);
  for (std::size_t k = 0; k < tcfg.rounds; ++k) {
    switch (tcfg.mode) {
      case TrainMode::dfl:
        dpasgd_round(states, a, topology, pcfg, tcfg, k);
        break;
      case TrainMode::sfl:
        sfl_round(states, pcfg, tcfg, k);
        break;
      case TrainMode::cll: {
        std::vector<std::vector<double>> next(1);
        next[0] = detail::silo_gradient_step(states[0], pcfg, tcfg, k);
        states[0].theta = std::move(next[0]);
        states[0].rounds_gradient++;
        break;
      }
    }
    const std::size_t completed = k + 1;
    if (completed % tcfg.eval_every == 0 || completed == tcfg.rounds)
      evaluate(completed);
  }
  return SimulationResult{std::move(history), std::move(states)};
}

}  // namespace lttd
