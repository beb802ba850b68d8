// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "lttd/errors.hpp"
#include "lttd/model.hpp"
#include "lttd/rng.hpp"

namespace lttd {

// Synthetic temporal driving data. Each sequence follows a smooth steering
// trajectory (bounded sum of three random-phase sinusoids, clipped to
// [-1, 1]). Frame features are a fixed random linear image of the current
// and next angle plus Gaussian noise, so a frame carries one step of
// lookahead: the frame at time t-1 already hints at the angle at time t.
// Sliding a 6-frame window (5 past + current) with stride 1 yields samples.

struct SyntheticConfig {
  std::size_t n_sequences = 16;
  std::size_t seq_len = 24;      // frames per sequence, >= 6
  std::size_t d_img = 8;         // frame feature dimension
  double noise_std = 0.05;
  double nonstationarity = 0.0;  // per-sequence bias amplitude
  std::uint64_t seed = 0;

  void validate() const {
    if (seq_len < 6)
      throw config_error("SyntheticConfig: seq_len must be >= 6");
    if (d_img < 2)
      throw config_error("SyntheticConfig: d_img must be >= 2");
    if (n_sequences < 1)
      throw config_error("SyntheticConfig: n_sequences must be >= 1");
    if (noise_std < 0.0)
      throw config_error("SyntheticConfig: noise_std must be >= 0");
  }
};

namespace detail {

inline double clip_unit(double x) { return std::clamp(x, -1.0, 1.0); }

/// The fixed frame map: d_img x 2, drawn once per dataset seed.
inline std::vector<double> frame_map(const SyntheticConfig& cfg) {
  CounterRng rng(cfg.seed, "frame-map");
  std::vector<double> b(cfg.d_img * 2);
  for (double& v : b) v = rng.uniform(-1.0, 1.0);
  return b;
}

}  // namespace detail

inline std::vector<SteeringSample> generate(const SyntheticConfig& cfg) {
  cfg.validate();
  const std::vector<double> fmap = detail::frame_map(cfg);
  std::vector<SteeringSample> samples;

  for (std::size_t seq = 0; seq < cfg.n_sequences; ++seq) {
    CounterRng traj(cfg.seed, "trajectory", seq);
    double amp[3], omega[3], phase[3];
    for (int h = 0; h < 3; ++h) {
      amp[h] = traj.uniform(0.2, 0.5);
      omega[h] = traj.uniform(0.05, 0.45);
      phase[h] = traj.uniform(0.0, 6.283185307179586);
    }
    const double drift = cfg.nonstationarity == 0.0
                             ? 0.0
                             : traj.uniform(-cfg.nonstationarity,
                                            cfg.nonstationarity);

    // angles for t = 0..seq_len (one extra for the lookahead of frame
    // seq_len-1)
    std::vector<double> angle(cfg.seq_len + 1);
    for (std::size_t t = 0; t <= cfg.seq_len; ++t) {
      double a = drift;
      for (int h = 0; h < 3; ++h)
        a += amp[h] * std::sin(omega[h] * static_cast<double>(t) + phase[h]);
      angle[t] = detail::clip_unit(a);
    }

    CounterRng noise(cfg.seed, "frame-noise", seq);
    std::vector<double> frames(cfg.seq_len * cfg.d_img);
    for (std::size_t t = 0; t < cfg.seq_len; ++t)
      for (std::size_t q = 0; q < cfg.d_img; ++q)
        frames[t * cfg.d_img + q] =
            fmap[q * 2] * angle[t] + fmap[q * 2 + 1] * angle[t + 1] +
            (cfg.noise_std == 0.0 ? 0.0 : cfg.noise_std * noise.normal());

    // windows: current index t = 5 .. seq_len-1
    for (std::size_t t = 5; t < cfg.seq_len; ++t) {
      SteeringSample s;
      s.sequence = seq;
      s.frame_index = t;
      s.current_image = DenseTensor{Shape{cfg.d_img}};
      for (std::size_t q = 0; q < cfg.d_img; ++q)
        s.current_image[q] = frames[t * cfg.d_img + q];
      s.past_frames = DenseTensor{Shape{kPastSteps, cfg.d_img}};
      for (std::size_t h = 0; h < kPastSteps; ++h)
        for (std::size_t q = 0; q < cfg.d_img; ++q)
          s.past_frames(h, q) = frames[(t - 5 + h) * cfg.d_img + q];
      for (std::size_t h = 0; h < kPastSteps; ++h)
        s.past_steering[h] = angle[t - 5 + h];
      s.target_angle = angle[t];
      samples.push_back(std::move(s));
    }
  }
  return samples;
}

enum class ShardStrategy { iid, by_sequence };

struct Shard {
  std::size_t silo_id = 0;
  std::vector<SteeringSample> samples;
};

/// Exact partition of the sample set across silos. iid shuffles globally
/// and deals round-robin; by_sequence keeps each sequence's windows on one
/// silo (mild non-IID).
inline std::vector<Shard> shard(std::span<const SteeringSample> samples,
                                std::size_t n_silos, ShardStrategy strategy,
                                std::uint64_t seed) {
  if (n_silos == 0) throw config_error("shard: need at least one silo");
  if (n_silos > samples.size())
    throw config_error("shard: more silos than samples");
  std::vector<Shard> shards(n_silos);
  for (std::size_t i = 0; i < n_silos; ++i) shards[i].silo_id = i;

  if (strategy == ShardStrategy::iid) {
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    CounterRng rng(seed, "shard-shuffle");
    // Fisher-Yates with the counter stream
    for (std::size_t i = order.size(); i-- > 1;)
      std::swap(order[i], order[rng.uniform_index(i + 1)]);
    for (std::size_t i = 0; i < order.size(); ++i)
      shards[i % n_silos].samples.push_back(samples[order[i]]);
  } else {
    // sequences dealt round-robin in first-appearance order
    std::vector<std::size_t> seq_of;
    std::vector<std::size_t> seen;
    for (const SteeringSample& s : samples) {
      auto it = std::find(seen.begin(), seen.end(), s.sequence);
      if (it == seen.end()) {
        seen.push_back(s.sequence);
        seq_of.push_back(seen.size() - 1);
      } else {
        seq_of.push_back(static_cast<std::size_t>(it - seen.begin()));
      }
    }
    for (std::size_t i = 0; i < samples.size(); ++i)
      shards[seq_of[i] % n_silos].samples.push_back(samples[i]);
    for (const Shard& sh : shards)
      if (sh.samples.empty())
        throw config_error("shard: a silo received no sequences");
  }
  return shards;
}

// ---------------------------------------------------------------------------
// Optional CSV dump/load
// ---------------------------------------------------------------------------

/// One row per sample: silo, sequence, frame, img_0.., pf<h>_<q>..,
/// steer_0..steer_4, target. Values print with enough digits to round-trip.
inline void dump_csv(std::ostream& os, std::span<const Shard> shards,
                     std::size_t d_img) {
  os << "silo,sequence,frame";
  for (std::size_t q = 0; q < d_img; ++q) os << ",img_" << q;
  for (std::size_t h = 0; h < kPastSteps; ++h)
    for (std::size_t q = 0; q < d_img; ++q) os << ",pf" << h << "_" << q;
  for (std::size_t h = 0; h < kPastSteps; ++h) os << ",steer_" << h;
  os << ",target\n";
  char buf[32];
  auto emit = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << ',' << buf;
  };
  for (const Shard& sh : shards)
    for (const SteeringSample& s : sh.samples) {
      os << sh.silo_id << ',' << s.sequence << ',' << s.frame_index;
      for (std::size_t q = 0; q < d_img; ++q) emit(s.current_image[q]);
      for (std::size_t h = 0; h < kPastSteps; ++h)
        for (std::size_t q = 0; q < d_img; ++q) emit(s.past_frames(h, q));
      for (std::size_t h = 0; h < kPastSteps; ++h) emit(s.past_steering[h]);
      emit(s.target_angle);
      os << '\n';
    }
}

inline std::vector<Shard> load_csv(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw io_error("dataset csv: empty file");
  // infer d_img from the img_* column count
  std::size_t d_img = 0;
  {
    std::stringstream hs(header);
    std::string col;
    while (std::getline(hs, col, ','))
      if (col.rfind("img_", 0) == 0) ++d_img;
  }
  if (d_img == 0) throw io_error("dataset csv: no img_* columns in header");

  std::vector<Shard> shards;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string cell;
    auto next = [&]() -> double {
      if (!std::getline(ls, cell, ','))
        throw io_error("dataset csv: truncated row at line " +
                       std::to_string(lineno));
      return std::stod(cell);
    };
    const auto silo = static_cast<std::size_t>(next());
    SteeringSample s;
    s.sequence = static_cast<std::size_t>(next());
    s.frame_index = static_cast<std::size_t>(next());
    s.current_image = DenseTensor{Shape{d_img}};
    for (std::size_t q = 0; q < d_img; ++q) s.current_image[q] = next();
    s.past_frames = DenseTensor{Shape{kPastSteps, d_img}};
    for (std::size_t h = 0; h < kPastSteps; ++h)
      for (std::size_t q = 0; q < d_img; ++q) s.past_frames(h, q) = next();
    for (std::size_t h = 0; h < kPastSteps; ++h) s.past_steering[h] = next();
    s.target_angle = next();
    if (shards.size() <= silo) shards.resize(silo + 1);
    shards[silo].silo_id = silo;
    shards[silo].samples.push_back(std::move(s));
  }
  return shards;
}

}  // namespace lttd
