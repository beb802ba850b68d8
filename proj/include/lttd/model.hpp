// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lttd/errors.hpp"
#include "lttd/lttd.hpp"
#include "lttd/tensor.hpp"

namespace lttd {

// Desk-scale steering predictor: three linear modality embedders feeding the
// attention block, and an affine head mapping the joint vector to one angle.

inline constexpr std::size_t kPastSteps = 5;

struct SteeringSample {
  DenseTensor current_image;                  // d_img feature vector
  DenseTensor past_frames;                    // 5 x d_img
  std::array<double, kPastSteps> past_steering{};  // normalized angles
  double target_angle = 0.0;                  // in [-1, 1]
  std::size_t sequence = 0;                   // provenance, used by sharding
  std::size_t frame_index = 0;

  void validate(std::size_t d_img) const {
    if (current_image.ndim() != 1 || current_image.extent(0) != d_img)
      throw shape_error("SteeringSample: current_image dim mismatch");
    if (past_frames.ndim() != 2 || past_frames.extent(0) != kPastSteps ||
        past_frames.extent(1) != d_img)
      throw shape_error("SteeringSample: past_frames must be 5 x d_img");
    for (double s : past_steering)
      if (!std::isfinite(s))
        throw shape_error("SteeringSample: non-finite steering");
    if (!std::isfinite(target_angle) || target_angle < -1.0 ||
        target_angle > 1.0)
      throw shape_error("SteeringSample: target outside [-1, 1]");
  }
};

struct PredictorConfig {
  std::size_t d_img = 8;
  LttdConfig lttd;

  void validate() const {
    lttd.validate();
    if (d_img < 1) throw config_error("PredictorConfig: d_img must be >= 1");
    if (lttd.n1 != kPastSteps || lttd.n2 != kPastSteps)
      throw config_error(
          "PredictorConfig: n1 and n2 are fixed at 5 past steps");
  }
};

struct AffineMap {
  DenseTensor w;
  DenseTensor b;
};

struct PredictorParams {
  AffineMap embed1;      // d_img x d1, bias d1
  AffineMap embed2;      // 1 x d2 row, bias d2
  AffineMap embed3;      // d_img x (n3*d3), bias n3*d3
  LttdParams lttd;
  DenseTensor head_w;    // d_z
  double head_b = 0.0;
};

/// Gradients share the parameter layout.
using PredictorGrads = PredictorParams;

/// Sinusoidal per-step offset added to the steering embedding row direction
/// so the block can tell the five time steps apart.
inline double time_position_offset(std::size_t step, std::size_t q,
                                   std::size_t d) {
  const double freq =
      std::pow(10000.0, -static_cast<double>(q - (q % 2)) /
                            static_cast<double>(d));
  const double x = static_cast<double>(step) * freq;
  return (q % 2 == 0) ? std::sin(x) : std::cos(x);
}

inline PredictorParams init_predictor(const PredictorConfig& cfg,
                                      std::uint64_t seed) {
  cfg.validate();
  const LttdConfig& L = cfg.lttd;
  PredictorParams p;
  p.embed1 = {DenseTensor{Shape{cfg.d_img, L.d1}}, DenseTensor{Shape{L.d1}}};
  p.embed2 = {DenseTensor{Shape{1, L.d2}}, DenseTensor{Shape{L.d2}}};
  p.embed3 = {DenseTensor{Shape{cfg.d_img, L.n3 * L.d3}},
              DenseTensor{Shape{L.n3 * L.d3}}};
  detail::fill_uniform(p.embed1.w, seed, "embed1.w", cfg.d_img, L.d1);
  detail::fill_uniform(p.embed2.w, seed, "embed2.w", 1, L.d2);
  detail::fill_uniform(p.embed3.w, seed, "embed3.w", cfg.d_img, L.n3 * L.d3);
  // biases start at zero
  p.lttd = init_params(L, seed);
  p.head_w = DenseTensor{Shape{L.d_z}};
  detail::fill_uniform(p.head_w, seed, "head.w", L.d_z, 1);
  p.head_b = 0.0;
  return p;
}

/// Raw sample -> three channel matrices.
///   M1 = past_frames * E1 + b1            (5 x d1)
///   M2[s] = steer_s * (E2 + pos_s) + b2   (5 x d2)
///   M3 = reshape(current * E3 + b3)       (n3 x d3)
inline ModalityTriple embed(const SteeringSample& sample,
                            const PredictorParams& params,
                            const PredictorConfig& cfg) {
  const LttdConfig& L = cfg.lttd;
  sample.validate(cfg.d_img);

  DenseTensor m1 = matmul(sample.past_frames, params.embed1.w);
  for (std::size_t s = 0; s < kPastSteps; ++s)
    for (std::size_t q = 0; q < L.d1; ++q) m1(s, q) += params.embed1.b[q];

  DenseTensor m2{Shape{kPastSteps, L.d2}};
  for (std::size_t s = 0; s < kPastSteps; ++s)
    for (std::size_t q = 0; q < L.d2; ++q)
      m2(s, q) = sample.past_steering[s] *
                     (params.embed2.w(0, q) + time_position_offset(s, q, L.d2)) +
                 params.embed2.b[q];

  const std::size_t flat3 = L.n3 * L.d3;
  DenseTensor m3{Shape{L.n3, L.d3}};
  for (std::size_t q = 0; q < flat3; ++q) {
    double acc = params.embed3.b[q];
    for (std::size_t pix = 0; pix < cfg.d_img; ++pix)
      acc += sample.current_image[pix] * params.embed3.w(pix, q);
    m3[q] = acc;
  }
  return ModalityTriple{std::move(m1), std::move(m2), std::move(m3)};
}

inline double predict(const PredictorParams& params, const PredictorConfig& cfg,
                      const SteeringSample& sample) {
  auto [map, joint] = forward(params.lttd, embed(sample, params, cfg), cfg.lttd);
  // bias enters once, after the weighted sum, so a bias shift passes through
  // to the prediction unchanged
  double acc = 0.0;
  for (std::size_t t = 0; t < joint.z.size(); ++t)
    acc += joint.z[t] * params.head_w[t];
  return acc + params.head_b;
}

inline double mse_loss(std::span<const double> predictions,
                       std::span<const double> targets) {
  if (predictions.empty())
    throw config_error("mse_loss: empty batch");
  if (predictions.size() != targets.size())
    throw shape_error("mse_loss: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - targets[i];
    acc += d * d;
  }
  return acc / static_cast<double>(predictions.size());
}

struct Metrics {
  double rmse = 0.0;
  double mae = 0.0;
};

inline Metrics metrics(std::span<const double> predictions,
                       std::span<const double> targets) {
  Metrics m;
  m.rmse = std::sqrt(mse_loss(predictions, targets));
  double acc = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    acc += std::abs(predictions[i] - targets[i]);
  m.mae = acc / static_cast<double>(predictions.size());
  return m;
}

namespace detail {

inline PredictorGrads zero_grads(const PredictorConfig& cfg) {
  const LttdConfig& L = cfg.lttd;
  PredictorGrads g;
  g.embed1 = {DenseTensor{Shape{cfg.d_img, L.d1}}, DenseTensor{Shape{L.d1}}};
  g.embed2 = {DenseTensor{Shape{1, L.d2}}, DenseTensor{Shape{L.d2}}};
  g.embed3 = {DenseTensor{Shape{cfg.d_img, L.n3 * L.d3}},
              DenseTensor{Shape{L.n3 * L.d3}}};
  const std::size_t a = L.d1r(), b = L.d2r(), c = L.d3r();
  for (std::size_t r = 0; r < L.r_slices; ++r) {
    g.lttd.w1.emplace_back(Shape{L.d1, a});
    g.lttd.w2.emplace_back(Shape{L.d2, b});
    g.lttd.w3.emplace_back(Shape{L.d3, c});
    g.lttd.g.emplace_back(Shape{a, b, c});
  }
  g.lttd.wz1 = DenseTensor{Shape{L.d1, L.d_z}};
  g.lttd.wz2 = DenseTensor{Shape{L.d2, L.d_z}};
  g.lttd.wz3 = DenseTensor{Shape{L.d3, L.d_z}};
  g.head_w = DenseTensor{Shape{L.d_z}};
  g.head_b = 0.0;
  return g;
}

}  // namespace detail

/// Mean-squared-error gradient over a batch, reverse mode through the whole
/// predictor. Accumulation is in batch order, so results are independent of
/// any outer parallelism.
inline PredictorGrads loss_gradient(const PredictorParams& params,
                                    const PredictorConfig& cfg,
                                    std::span<const SteeringSample> batch) {
  if (batch.empty()) throw config_error("loss_gradient: empty batch");
  const LttdConfig& L = cfg.lttd;
  PredictorGrads grads = detail::zero_grads(cfg);
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  for (const SteeringSample& sample : batch) {
    const ModalityTriple in = embed(sample, params, cfg);
    auto [map, joint] = forward(params.lttd, in, L);
    double acc = 0.0;
    for (std::size_t t = 0; t < joint.z.size(); ++t)
      acc += joint.z[t] * params.head_w[t];
    const double pred = acc + params.head_b;

    const double dpred = 2.0 * (pred - sample.target_angle) * inv_b;

    grads.head_b += dpred;
    DenseTensor dz{Shape{L.d_z}};
    for (std::size_t t = 0; t < L.d_z; ++t) {
      grads.head_w[t] += dpred * joint.z[t];
      dz[t] = dpred * params.head_w[t];
    }

    LttdBackward back = backward(params.lttd, in, L, dz, true);
    auto add = [](DenseTensor& dst, const DenseTensor& src) {
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    };
    for (std::size_t r = 0; r < L.r_slices; ++r) {
      add(grads.lttd.w1[r], back.params.w1[r]);
      add(grads.lttd.w2[r], back.params.w2[r]);
      add(grads.lttd.w3[r], back.params.w3[r]);
      add(grads.lttd.g[r], back.params.g[r]);
    }
    add(grads.lttd.wz1, back.params.wz1);
    add(grads.lttd.wz2, back.params.wz2);
    add(grads.lttd.wz3, back.params.wz3);

    // embedder backward
    const DenseTensor& dm1 = back.inputs.m1;
    add(grads.embed1.w, detail::matmul_at(sample.past_frames, dm1));
    for (std::size_t s = 0; s < kPastSteps; ++s)
      for (std::size_t q = 0; q < L.d1; ++q)
        grads.embed1.b[q] += dm1(s, q);

    const DenseTensor& dm2 = back.inputs.m2;
    for (std::size_t s = 0; s < kPastSteps; ++s)
      for (std::size_t q = 0; q < L.d2; ++q) {
        grads.embed2.w(0, q) += sample.past_steering[s] * dm2(s, q);
        grads.embed2.b[q] += dm2(s, q);
      }

    const DenseTensor& dm3 = back.inputs.m3;  // n3 x d3, row-major == flat
    for (std::size_t q = 0; q < L.n3 * L.d3; ++q) {
      grads.embed3.b[q] += dm3[q];
      for (std::size_t pix = 0; pix < cfg.d_img; ++pix)
        grads.embed3.w(pix, q) += sample.current_image[pix] * dm3[q];
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Flat parameter vector layout (shared by the trainer and the serializer)
// ---------------------------------------------------------------------------

/// Tensor fields in flattening order, with stable names.
inline std::vector<std::pair<std::string, const DenseTensor*>> named_tensors(
    const PredictorParams& p) {
  std::vector<std::pair<std::string, const DenseTensor*>> out;
  out.emplace_back("embed1.w", &p.embed1.w);
  out.emplace_back("embed1.b", &p.embed1.b);
  out.emplace_back("embed2.w", &p.embed2.w);
  out.emplace_back("embed2.b", &p.embed2.b);
  out.emplace_back("embed3.w", &p.embed3.w);
  out.emplace_back("embed3.b", &p.embed3.b);
  for (std::size_t r = 0; r < p.lttd.w1.size(); ++r) {
    const std::string rs = "[" + std::to_string(r) + "]";
    out.emplace_back("lttd.w1" + rs, &p.lttd.w1[r]);
    out.emplace_back("lttd.w2" + rs, &p.lttd.w2[r]);
    out.emplace_back("lttd.w3" + rs, &p.lttd.w3[r]);
    out.emplace_back("lttd.g" + rs, &p.lttd.g[r]);
  }
  out.emplace_back("lttd.wz1", &p.lttd.wz1);
  out.emplace_back("lttd.wz2", &p.lttd.wz2);
  out.emplace_back("lttd.wz3", &p.lttd.wz3);
  out.emplace_back("head.w", &p.head_w);
  return out;
}

inline std::vector<std::pair<std::string, DenseTensor*>> named_tensors(
    PredictorParams& p) {
  std::vector<std::pair<std::string, DenseTensor*>> out;
  for (auto& [name, t] : named_tensors(const_cast<const PredictorParams&>(p)))
    out.emplace_back(name, const_cast<DenseTensor*>(t));
  return out;
}

inline std::size_t param_dim(const PredictorConfig& cfg) {
  const LttdConfig& L = cfg.lttd;
  std::size_t n = cfg.d_img * L.d1 + L.d1;        // embed1
  n += L.d2 + L.d2;                               // embed2
  n += cfg.d_img * (L.n3 * L.d3) + L.n3 * L.d3;   // embed3
  n += L.r_slices * (L.d1 * L.d1r() + L.d2 * L.d2r() + L.d3 * L.d3r() +
                     L.d1r() * L.d2r() * L.d3r());
  n += (L.d1 + L.d2 + L.d3) * L.d_z;              // projections
  n += L.d_z + 1;                                 // head
  return n;
}

inline std::vector<double> flatten(const PredictorParams& p) {
  std::vector<double> out;
  for (const auto& [name, t] : named_tensors(p))
    out.insert(out.end(), t->data(), t->data() + t->size());
  out.push_back(p.head_b);
  return out;
}

inline PredictorParams unflatten(const PredictorConfig& cfg,
                                 std::span<const double> flat) {
  if (flat.size() != param_dim(cfg))
    throw shape_error("unflatten: expected " + std::to_string(param_dim(cfg)) +
                      " values, got " + std::to_string(flat.size()));
  PredictorParams p = detail::zero_grads(cfg);
  std::size_t off = 0;
  for (auto& [name, t] : named_tensors(p)) {
    for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] = flat[off + i];
    off += t->size();
  }
  p.head_b = flat[off];
  return p;
}

}  // namespace lttd
