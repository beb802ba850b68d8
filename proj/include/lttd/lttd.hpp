// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lttd/errors.hpp"
#include "lttd/rng.hpp"
#include "lttd/tensor.hpp"

namespace lttd {

// Factorized trilinear attention over three modalities.
//
// The block fuses three channel matrices M1 (n1 x d1), M2 (n2 x d2),
// M3 (n3 x d3) into a joint vector z of dimension d_z. Instead of a full
// 4-mode interaction tensor over the vectorized inputs, it learns
//   * R slices of factor matrices W1[r], W2[r], W3[r] with small Tucker
//     cores G[r], which produce an n1 x n2 x n3 attention map without ever
//     materializing the (d1 x d2 x d3) attention tensor, and
//   * per-modality projections Wz1, Wz2, Wz3 whose rows combine through
//     Hadamard products, weighted by the attention map, into z.
//
// Brute-force oracles for every collapsed tensor identity live alongside
// the fast paths; they are quartic/sextic loops intended for test-scale
// dimensions only.

enum class AttentionNorm { raw, softmax };

struct LttdConfig {
  std::size_t n1 = 1, n2 = 1, n3 = 1;  // channel counts
  std::size_t d1 = 1, d2 = 1, d3 = 1;  // per-channel dims
  std::size_t r_slices = 1;            // factorization slices R
  std::size_t d_z = 1;                 // joint dimension
  AttentionNorm normalize_attention = AttentionNorm::raw;

  std::size_t d1r() const { return d1 / r_slices; }
  std::size_t d2r() const { return d2 / r_slices; }
  std::size_t d3r() const { return d3 / r_slices; }

  void validate() const {
    if (n1 < 1 || n2 < 1 || n3 < 1 || d1 < 1 || d2 < 1 || d3 < 1)
      throw config_error("LttdConfig: channel counts and dims must be >= 1");
    if (d_z < 1) throw config_error("LttdConfig: d_z must be >= 1");
    if (r_slices < 1) throw config_error("LttdConfig: r_slices must be >= 1");
    // block shapes d_l / R are exact; reject instead of padding
    if (d1 % r_slices || d2 % r_slices || d3 % r_slices)
      throw config_error("LttdConfig: r_slices=" + std::to_string(r_slices) +
                         " must divide d1, d2 and d3");
  }
};

/// The three modality inputs, each a (channels x dim) matrix.
struct ModalityTriple {
  DenseTensor m1, m2, m3;

  void validate(const LttdConfig& cfg) const {
    auto check = [](const DenseTensor& m, std::size_t n, std::size_t d,
                    const char* which) {
      if (m.ndim() != 2 || m.extent(0) != n || m.extent(1) != d)
        throw shape_error(std::string("ModalityTriple: ") + which +
                          " has shape " + m.shape().str() + ", expected (" +
                          std::to_string(n) + "," + std::to_string(d) + ")");
    };
    check(m1, cfg.n1, cfg.d1, "m1");
    check(m2, cfg.n2, cfg.d2, "m2");
    check(m3, cfg.n3, cfg.d3, "m3");
  }
};

/// Learnable state: R factor matrices per modality, R Tucker cores, and
/// the three joint projections. The rank-1 core of the joint stage is
/// algebraically eliminated and never stored.
struct LttdParams {
  std::vector<DenseTensor> w1, w2, w3;  // [R], each d_l x (d_l/R)
  std::vector<DenseTensor> g;           // [R], each (d1/R) x (d2/R) x (d3/R)
  DenseTensor wz1, wz2, wz3;            // d_l x d_z

  void validate(const LttdConfig& cfg) const {
    const std::size_t r = cfg.r_slices;
    if (w1.size() != r || w2.size() != r || w3.size() != r || g.size() != r)
      throw shape_error("LttdParams: slice count != r_slices");
    for (std::size_t i = 0; i < r; ++i) {
      if (w1[i].shape() != Shape{cfg.d1, cfg.d1r()} ||
          w2[i].shape() != Shape{cfg.d2, cfg.d2r()} ||
          w3[i].shape() != Shape{cfg.d3, cfg.d3r()})
        throw shape_error("LttdParams: factor matrix shape mismatch");
      if (g[i].shape() != Shape{cfg.d1r(), cfg.d2r(), cfg.d3r()})
        throw shape_error("LttdParams: core shape mismatch");
    }
    if (wz1.shape() != Shape{cfg.d1, cfg.d_z} ||
        wz2.shape() != Shape{cfg.d2, cfg.d_z} ||
        wz3.shape() != Shape{cfg.d3, cfg.d_z})
      throw shape_error("LttdParams: projection shape mismatch");
  }
};

struct AttentionMap {
  DenseTensor m;  // n1 x n2 x n3
};

struct JointRepresentation {
  DenseTensor z;  // d_z
};

namespace detail {

/// Row i of a matrix as a vector.
inline DenseTensor row(const DenseTensor& m, std::size_t i) {
  const std::size_t d = m.extent(1);
  DenseTensor out{Shape{d}};
  for (std::size_t q = 0; q < d; ++q) out[q] = m(i, q);
  return out;
}

/// a^T * b for 2-mode tensors.
inline DenseTensor matmul_at(const DenseTensor& a, const DenseTensor& b) {
  require(a.ndim() == 2 && b.ndim() == 2 && a.extent(0) == b.extent(0),
          "matmul_at: shape mismatch");
  const std::size_t n = a.extent(1), k = a.extent(0), m = b.extent(1);
  DenseTensor out{Shape{n, m}};
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t i = 0; i < n; ++i) {
      const double av = a(p, i);
      for (std::size_t j = 0; j < m; ++j) out(i, j) += av * b(p, j);
    }
  return out;
}

/// a * b^T for 2-mode tensors.
inline DenseTensor matmul_bt(const DenseTensor& a, const DenseTensor& b) {
  require(a.ndim() == 2 && b.ndim() == 2 && a.extent(1) == b.extent(1),
          "matmul_bt: shape mismatch");
  const std::size_t n = a.extent(0), k = a.extent(1), m = b.extent(0);
  DenseTensor out{Shape{n, m}};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a(i, p) * b(j, p);
      out(i, j) = acc;
    }
  return out;
}

/// Softmax over every entry of a tensor, numerically stable.
inline DenseTensor softmax_all(const DenseTensor& logits) {
  DenseTensor out{logits.shape()};
  double mx = logits[0];
  for (std::size_t i = 1; i < logits.size(); ++i) mx = std::max(mx, logits[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= sum;
  return out;
}

inline void fill_uniform(DenseTensor& t, std::uint64_t seed,
                         std::string_view name, std::size_t fan_in,
                         std::size_t fan_out) {
  CounterRng rng(seed, name);
  const double bound =
      std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = rng.uniform(-bound, bound);
}

}  // namespace detail

/// Fan-scaled uniform initialization. Every entry is a pure function of
/// (seed, parameter name, flat index), so results are identical across
/// platforms and thread counts.
inline LttdParams init_params(const LttdConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  LttdParams p;
  const std::size_t a = cfg.d1r(), b = cfg.d2r(), c = cfg.d3r();
  for (std::size_t r = 0; r < cfg.r_slices; ++r) {
    const std::string rs = "[" + std::to_string(r) + "]";
    DenseTensor w1{Shape{cfg.d1, a}}, w2{Shape{cfg.d2, b}},
        w3{Shape{cfg.d3, c}}, gr{Shape{a, b, c}};
    detail::fill_uniform(w1, seed, "w1" + rs, cfg.d1, a);
    detail::fill_uniform(w2, seed, "w2" + rs, cfg.d2, b);
    detail::fill_uniform(w3, seed, "w3" + rs, cfg.d3, c);
    detail::fill_uniform(gr, seed, "g" + rs, a * b, c);
    p.w1.push_back(std::move(w1));
    p.w2.push_back(std::move(w2));
    p.w3.push_back(std::move(w3));
    p.g.push_back(std::move(gr));
  }
  p.wz1 = DenseTensor{Shape{cfg.d1, cfg.d_z}};
  p.wz2 = DenseTensor{Shape{cfg.d2, cfg.d_z}};
  p.wz3 = DenseTensor{Shape{cfg.d3, cfg.d_z}};
  detail::fill_uniform(p.wz1, seed, "wz1", cfg.d1, cfg.d_z);
  detail::fill_uniform(p.wz2, seed, "wz2", cfg.d2, cfg.d_z);
  detail::fill_uniform(p.wz3, seed, "wz3", cfg.d3, cfg.d_z);
  return p;
}

/// Attention map from the factored slices:
///   M[i,j,k] = sum_r sum_{a,b,c} G_r[a,b,c] (M1 W1r)[i,a] (M2 W2r)[j,b]
///              (M3 W3r)[k,c]
/// computed without materializing the (d1 x d2 x d3) attention tensor.
/// Softmax mode normalizes over all n1*n2*n3 entries afterwards.
inline AttentionMap attention_map(const LttdParams& params,
                                  const ModalityTriple& inputs,
                                  const LttdConfig& cfg) {
  cfg.validate();
  params.validate(cfg);
  inputs.validate(cfg);
  const std::size_t n1 = cfg.n1, n2 = cfg.n2, n3 = cfg.n3;
  const std::size_t a = cfg.d1r(), b = cfg.d2r(), c = cfg.d3r();

  DenseTensor logits{Shape{n1, n2, n3}};
  std::vector<double> t1(b * c), t2(c);
  for (std::size_t r = 0; r < cfg.r_slices; ++r) {
    const DenseTensor q1 = matmul(inputs.m1, params.w1[r]);  // n1 x a
    const DenseTensor q2 = matmul(inputs.m2, params.w2[r]);  // n2 x b
    const DenseTensor q3 = matmul(inputs.m3, params.w3[r]);  // n3 x c
    const DenseTensor& gr = params.g[r];
    for (std::size_t i = 0; i < n1; ++i) {
      // t1[b,c] = sum_a q1[i,a] * G[a,b,c]
      std::fill(t1.begin(), t1.end(), 0.0);
      for (std::size_t al = 0; al < a; ++al) {
        const double q = q1(i, al);
        const double* gslice = gr.data() + al * b * c;
        for (std::size_t bc = 0; bc < b * c; ++bc) t1[bc] += q * gslice[bc];
      }
      for (std::size_t j = 0; j < n2; ++j) {
        // t2[c] = sum_b q2[j,b] * t1[b,c]
        std::fill(t2.begin(), t2.end(), 0.0);
        for (std::size_t be = 0; be < b; ++be) {
          const double q = q2(j, be);
          for (std::size_t ga = 0; ga < c; ++ga) t2[ga] += q * t1[be * c + ga];
        }
        for (std::size_t k = 0; k < n3; ++k) {
          double acc = 0.0;
          for (std::size_t ga = 0; ga < c; ++ga) acc += q3(k, ga) * t2[ga];
          logits(i, j, k) += acc;
        }
      }
    }
  }
  if (cfg.normalize_attention == AttentionNorm::softmax)
    return AttentionMap{detail::softmax_all(logits)};
  return AttentionMap{std::move(logits)};
}

/// Joint representation with the rank-1 core eliminated:
///   z = sum_{i,j,k} M[i,j,k] * (m1_i Wz1) . (m2_j Wz2) . (m3_k Wz3)
/// where "." is the elementwise product. Projections are computed once per
/// modality; the triple sum accumulates in fixed index order.
inline JointRepresentation joint_representation(const LttdParams& params,
                                                const AttentionMap& attention,
                                                const ModalityTriple& inputs) {
  const DenseTensor p1 = matmul(inputs.m1, params.wz1);  // n1 x d_z
  const DenseTensor p2 = matmul(inputs.m2, params.wz2);
  const DenseTensor p3 = matmul(inputs.m3, params.wz3);
  const std::size_t n1 = p1.extent(0), n2 = p2.extent(0), n3 = p3.extent(0);
  const std::size_t dz = p1.extent(1);
  detail::require(attention.m.ndim() == 3 && attention.m.extent(0) == n1 &&
                      attention.m.extent(1) == n2 && attention.m.extent(2) == n3,
                  "joint_representation: attention shape mismatch");
  detail::require(p2.extent(1) == dz && p3.extent(1) == dz,
                  "joint_representation: projection dim mismatch");

  DenseTensor z{Shape{dz}};
  for (std::size_t i = 0; i < n1; ++i)
    for (std::size_t j = 0; j < n2; ++j)
      for (std::size_t k = 0; k < n3; ++k) {
        const double w = attention.m(i, j, k);
        const double* r1 = p1.data() + i * dz;
        const double* r2 = p2.data() + j * dz;
        const double* r3 = p3.data() + k * dz;
        for (std::size_t t = 0; t < dz; ++t) z[t] += w * r1[t] * r2[t] * r3[t];
      }
  return JointRepresentation{std::move(z)};
}

/// Full block: attention map then joint representation.
inline std::pair<AttentionMap, JointRepresentation> forward(
    const LttdParams& params, const ModalityTriple& inputs,
    const LttdConfig& cfg) {
  AttentionMap map = attention_map(params, inputs, cfg);
  JointRepresentation z = joint_representation(params, map, inputs);
  return {std::move(map), std::move(z)};
}

/// Gradient container; mirrors LttdParams field for field.
using LttdGrads = LttdParams;

struct LttdBackward {
  LttdGrads params;
  ModalityTriple inputs;  // populated when want_input_grads
};

/// Reverse-mode gradients of <z, upstream> with respect to every parameter
/// tensor, and optionally the modality inputs. Supports both raw and
/// softmax attention.
inline LttdBackward backward(const LttdParams& params,
                             const ModalityTriple& inputs,
                             const LttdConfig& cfg,
                             const DenseTensor& upstream,
                             bool want_input_grads = true) {
  cfg.validate();
  params.validate(cfg);
  inputs.validate(cfg);
  detail::require(upstream.ndim() == 1 && upstream.extent(0) == cfg.d_z,
                  "backward: upstream must be a d_z vector");

  const std::size_t n1 = cfg.n1, n2 = cfg.n2, n3 = cfg.n3, dz = cfg.d_z;
  const std::size_t a = cfg.d1r(), b = cfg.d2r(), c = cfg.d3r();

  // ---- forward recompute (projections, per-slice factors, logits, map)
  const DenseTensor p1 = matmul(inputs.m1, params.wz1);
  const DenseTensor p2 = matmul(inputs.m2, params.wz2);
  const DenseTensor p3 = matmul(inputs.m3, params.wz3);

  std::vector<DenseTensor> q1(cfg.r_slices), q2(cfg.r_slices),
      q3(cfg.r_slices);
  DenseTensor logits{Shape{n1, n2, n3}};
  for (std::size_t r = 0; r < cfg.r_slices; ++r) {
    q1[r] = matmul(inputs.m1, params.w1[r]);
    q2[r] = matmul(inputs.m2, params.w2[r]);
    q3[r] = matmul(inputs.m3, params.w3[r]);
    const DenseTensor& gr = params.g[r];
    for (std::size_t i = 0; i < n1; ++i)
      for (std::size_t j = 0; j < n2; ++j)
        for (std::size_t k = 0; k < n3; ++k) {
          double acc = 0.0;
          for (std::size_t al = 0; al < a; ++al)
            for (std::size_t be = 0; be < b; ++be)
              for (std::size_t ga = 0; ga < c; ++ga)
                acc += gr(al, be, ga) * q1[r](i, al) * q2[r](j, be) *
                       q3[r](k, ga);
          logits(i, j, k) += acc;
        }
  }
  const bool softmax = cfg.normalize_attention == AttentionNorm::softmax;
  const DenseTensor map = softmax ? detail::softmax_all(logits) : logits;

  // ---- joint stage backward
  DenseTensor dmap{Shape{n1, n2, n3}};
  DenseTensor dp1{Shape{n1, dz}}, dp2{Shape{n2, dz}}, dp3{Shape{n3, dz}};
  for (std::size_t i = 0; i < n1; ++i)
    for (std::size_t j = 0; j < n2; ++j)
      for (std::size_t k = 0; k < n3; ++k) {
        const double w = map(i, j, k);
        const double* r1 = p1.data() + i * dz;
        const double* r2 = p2.data() + j * dz;
        const double* r3 = p3.data() + k * dz;
        double dm = 0.0;
        for (std::size_t t = 0; t < dz; ++t) {
          const double ut = upstream[t];
          dm += ut * r1[t] * r2[t] * r3[t];
          dp1(i, t) += w * ut * r2[t] * r3[t];
          dp2(j, t) += w * ut * r1[t] * r3[t];
          dp3(k, t) += w * ut * r1[t] * r2[t];
        }
        dmap(i, j, k) = dm;
      }

  LttdBackward out;
  out.params.wz1 = detail::matmul_at(inputs.m1, dp1);
  out.params.wz2 = detail::matmul_at(inputs.m2, dp2);
  out.params.wz3 = detail::matmul_at(inputs.m3, dp3);

  DenseTensor dm1{Shape{n1, cfg.d1}}, dm2{Shape{n2, cfg.d2}},
      dm3{Shape{n3, cfg.d3}};
  auto add_into = [](DenseTensor& dst, const DenseTensor& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  };
  if (want_input_grads) {
    add_into(dm1, detail::matmul_bt(dp1, params.wz1));
    add_into(dm2, detail::matmul_bt(dp2, params.wz2));
    add_into(dm3, detail::matmul_bt(dp3, params.wz3));
  }

  // ---- attention normalization backward
  DenseTensor dlogits{Shape{n1, n2, n3}};
  if (softmax) {
    double dot = 0.0;
    for (std::size_t p = 0; p < map.size(); ++p) dot += map[p] * dmap[p];
    for (std::size_t p = 0; p < map.size(); ++p)
      dlogits[p] = map[p] * (dmap[p] - dot);
  } else {
    dlogits = dmap;
  }

  // ---- factored attention backward, slice by slice
  for (std::size_t r = 0; r < cfg.r_slices; ++r) {
    const DenseTensor& gr = params.g[r];
    DenseTensor dq1{Shape{n1, a}}, dq2{Shape{n2, b}}, dq3{Shape{n3, c}};
    DenseTensor dg{Shape{a, b, c}};
    for (std::size_t i = 0; i < n1; ++i)
      for (std::size_t j = 0; j < n2; ++j)
        for (std::size_t k = 0; k < n3; ++k) {
          const double dl = dlogits(i, j, k);
          if (dl == 0.0) continue;
          for (std::size_t al = 0; al < a; ++al)
            for (std::size_t be = 0; be < b; ++be)
              for (std::size_t ga = 0; ga < c; ++ga) {
                const double x1 = q1[r](i, al);
                const double x2 = q2[r](j, be);
                const double x3 = q3[r](k, ga);
                const double gv = gr(al, be, ga);
                dg(al, be, ga) += dl * x1 * x2 * x3;
                dq1(i, al) += dl * gv * x2 * x3;
                dq2(j, be) += dl * gv * x1 * x3;
                dq3(k, ga) += dl * gv * x1 * x2;
              }
        }
    out.params.w1.push_back(detail::matmul_at(inputs.m1, dq1));
    out.params.w2.push_back(detail::matmul_at(inputs.m2, dq2));
    out.params.w3.push_back(detail::matmul_at(inputs.m3, dq3));
    out.params.g.push_back(std::move(dg));
    if (want_input_grads) {
      add_into(dm1, detail::matmul_bt(dq1, params.w1[r]));
      add_into(dm2, detail::matmul_bt(dq2, params.w2[r]));
      add_into(dm3, detail::matmul_bt(dq3, params.w3[r]));
    }
  }

  if (want_input_grads)
    out.inputs = ModalityTriple{std::move(dm1), std::move(dm2),
                                std::move(dm3)};
  return out;
}

// ---------------------------------------------------------------------------
// Brute-force oracles (test-scale only)
// ---------------------------------------------------------------------------

/// Reference joint representation from the full 4-mode interaction tensor
/// over the vectorized inputs: z = <T, vec(M1) o vec(M2) o vec(M3)>.
inline JointRepresentation full_joint_oracle(const DenseTensor& t_full,
                                             const ModalityTriple& inputs) {
  detail::require(t_full.ndim() == 4, "full_joint_oracle: need 4-mode tensor");
  const DenseTensor v1 = vectorize(inputs.m1);
  const DenseTensor v2 = vectorize(inputs.m2);
  const DenseTensor v3 = vectorize(inputs.m3);
  return JointRepresentation{contract_leading(t_full, {v1, v2, v3})};
}

/// Fully parameterized trilinear interaction of one channel triplet:
/// z_p = <T_sc, m1_i o m2_j o m3_k>.
inline JointRepresentation triplet_joint(const DenseTensor& t_sc,
                                         const DenseTensor& m1i,
                                         const DenseTensor& m2j,
                                         const DenseTensor& m3k) {
  detail::require(t_sc.ndim() == 4, "triplet_joint: need 4-mode tensor");
  return JointRepresentation{contract_leading(t_sc, {m1i, m2j, m3k})};
}

/// Attention-weighted sum of all per-triplet joints:
/// z = sum_{i,j,k} M[i,j,k] * <T_sc, m1_i o m2_j o m3_k>.
inline JointRepresentation unitary_joint_oracle(const DenseTensor& t_sc,
                                                const AttentionMap& attention,
                                                const ModalityTriple& inputs) {
  detail::require(t_sc.ndim() == 4, "unitary_joint_oracle: need 4-mode tensor");
  const std::size_t n1 = inputs.m1.extent(0), n2 = inputs.m2.extent(0),
                    n3 = inputs.m3.extent(0);
  detail::require(attention.m.ndim() == 3 && attention.m.extent(0) == n1 &&
                      attention.m.extent(1) == n2 &&
                      attention.m.extent(2) == n3,
                  "unitary_joint_oracle: attention shape mismatch");
  DenseTensor z{Shape{t_sc.extent(3)}};
  for (std::size_t i = 0; i < n1; ++i)
    for (std::size_t j = 0; j < n2; ++j)
      for (std::size_t k = 0; k < n3; ++k) {
        const JointRepresentation zp =
            triplet_joint(t_sc, detail::row(inputs.m1, i),
                          detail::row(inputs.m2, j), detail::row(inputs.m3, k));
        const double w = attention.m(i, j, k);
        for (std::size_t t = 0; t < z.size(); ++t) z[t] += w * zp.z[t];
      }
  return JointRepresentation{std::move(z)};
}

/// Materializes the attention tensor the factored slices represent:
/// T[a,b,c] = sum_r sum_{al,be,ga} G_r[al,be,ga] W1r[a,al] W2r[b,be]
///            W3r[c,ga].
inline DenseTensor reconstruct_attention_tensor(const LttdParams& params) {
  detail::require(!params.w1.empty(), "reconstruct: empty params");
  const std::size_t d1 = params.w1[0].extent(0);
  const std::size_t d2 = params.w2[0].extent(0);
  const std::size_t d3 = params.w3[0].extent(0);
  DenseTensor t{Shape{d1, d2, d3}};
  for (std::size_t r = 0; r < params.g.size(); ++r) {
    const DenseTensor& gr = params.g[r];
    const std::size_t a = gr.extent(0), b = gr.extent(1), c = gr.extent(2);
    for (std::size_t x = 0; x < d1; ++x)
      for (std::size_t y = 0; y < d2; ++y)
        for (std::size_t zc = 0; zc < d3; ++zc) {
          double acc = 0.0;
          for (std::size_t al = 0; al < a; ++al)
            for (std::size_t be = 0; be < b; ++be)
              for (std::size_t ga = 0; ga < c; ++ga)
                acc += gr(al, be, ga) * params.w1[r](x, al) *
                       params.w2[r](y, be) * params.w3[r](zc, ga);
          t(x, y, zc) += acc;
        }
  }
  return t;
}

/// Literal evaluation of the joint stage with an explicit 4-mode core:
/// z = sum_{i,j,k} M[i,j,k] <G_sc, (m1_i Wz1) o (m2_j Wz2) o (m3_k Wz3)>.
/// Tests pass the superdiagonal core; d_z is capped because the core has
/// d_z^4 entries.
inline JointRepresentation joint_from_attention_oracle(
    const LttdParams& params, const DenseTensor& g_sc,
    const AttentionMap& attention, const ModalityTriple& inputs) {
  const std::size_t dz = params.wz1.extent(1);
  detail::require(dz <= 16, "joint_from_attention_oracle: d_z > 16 rejected");
  detail::require(g_sc.shape() == Shape{dz, dz, dz, dz},
                  "joint_from_attention_oracle: core must be d_z^4");
  const std::size_t n1 = inputs.m1.extent(0), n2 = inputs.m2.extent(0),
                    n3 = inputs.m3.extent(0);
  const DenseTensor p1 = matmul(inputs.m1, params.wz1);
  const DenseTensor p2 = matmul(inputs.m2, params.wz2);
  const DenseTensor p3 = matmul(inputs.m3, params.wz3);
  DenseTensor z{Shape{dz}};
  for (std::size_t i = 0; i < n1; ++i)
    for (std::size_t j = 0; j < n2; ++j)
      for (std::size_t k = 0; k < n3; ++k) {
        const DenseTensor zp = contract_leading(
            g_sc, {detail::row(p1, i), detail::row(p2, j), detail::row(p3, k)});
        const double w = attention.m(i, j, k);
        for (std::size_t t = 0; t < dz; ++t) z[t] += w * zp[t];
      }
  return JointRepresentation{std::move(z)};
}

/// The superdiagonal rank-1 core used by the oracle tests: 1 at
/// (t,t,t,t), 0 elsewhere.
inline DenseTensor superdiagonal_core(std::size_t d_z) {
  detail::require(d_z <= 16, "superdiagonal_core: d_z > 16 rejected");
  DenseTensor g{Shape{d_z, d_z, d_z, d_z}};
  for (std::size_t t = 0; t < d_z; ++t) g(t, t, t, t) = 1.0;
  return g;
}

// ---------------------------------------------------------------------------
// Bilinear special case (two modalities)
// ---------------------------------------------------------------------------

struct BilinearConfig {
  std::size_t n1 = 1, n2 = 1;
  std::size_t d1 = 1, d2 = 1;
  std::size_t r_slices = 1;
  std::size_t d_z = 1;

  void validate() const {
    if (d1 % r_slices || d2 % r_slices)
      throw config_error("BilinearConfig: r_slices must divide d1 and d2");
    if (n1 < 1 || n2 < 1 || d_z < 1)
      throw config_error("BilinearConfig: counts must be >= 1");
  }
};

struct BilinearParams {
  std::vector<DenseTensor> w1, w2;  // [R], d_l x (d_l/R)
  std::vector<DenseTensor> g;       // [R], (d1/R) x (d2/R)
  DenseTensor wz1, wz2;             // d_l x d_z
};

inline BilinearParams init_bilinear_params(const BilinearConfig& cfg,
                                           std::uint64_t seed) {
  cfg.validate();
  BilinearParams p;
  const std::size_t a = cfg.d1 / cfg.r_slices, b = cfg.d2 / cfg.r_slices;
  for (std::size_t r = 0; r < cfg.r_slices; ++r) {
    const std::string rs = "[" + std::to_string(r) + "]";
    DenseTensor w1{Shape{cfg.d1, a}}, w2{Shape{cfg.d2, b}}, gr{Shape{a, b}};
    detail::fill_uniform(w1, seed, "b.w1" + rs, cfg.d1, a);
    detail::fill_uniform(w2, seed, "b.w2" + rs, cfg.d2, b);
    detail::fill_uniform(gr, seed, "b.g" + rs, a, b);
    p.w1.push_back(std::move(w1));
    p.w2.push_back(std::move(w2));
    p.g.push_back(std::move(gr));
  }
  p.wz1 = DenseTensor{Shape{cfg.d1, cfg.d_z}};
  p.wz2 = DenseTensor{Shape{cfg.d2, cfg.d_z}};
  detail::fill_uniform(p.wz1, seed, "b.wz1", cfg.d1, cfg.d_z);
  detail::fill_uniform(p.wz2, seed, "b.wz2", cfg.d2, cfg.d_z);
  return p;
}

/// Two-modality attention map:
/// M[i,j] = sum_r sum_{a,b} G_r[a,b] (M1 W1r)[i,a] (M2 W2r)[j,b].
inline DenseTensor bilinear_attention_map(const BilinearParams& params,
                                          const DenseTensor& m1,
                                          const DenseTensor& m2) {
  detail::require(m1.ndim() == 2 && m2.ndim() == 2,
                  "bilinear_attention_map: need 2-mode inputs");
  const std::size_t n1 = m1.extent(0), n2 = m2.extent(0);
  DenseTensor map{Shape{n1, n2}};
  for (std::size_t r = 0; r < params.g.size(); ++r) {
    const DenseTensor q1 = matmul(m1, params.w1[r]);
    const DenseTensor q2 = matmul(m2, params.w2[r]);
    const DenseTensor& gr = params.g[r];
    const std::size_t a = gr.extent(0), b = gr.extent(1);
    for (std::size_t i = 0; i < n1; ++i)
      for (std::size_t j = 0; j < n2; ++j) {
        double acc = 0.0;
        for (std::size_t al = 0; al < a; ++al)
          for (std::size_t be = 0; be < b; ++be)
            acc += gr(al, be) * q1(i, al) * q2(j, be);
        map(i, j) += acc;
      }
  }
  return map;
}

/// Per-channel Hadamard sum:
/// z = sum_{i,j} M[i,j] * (m1_i Wz1) . (m2_j Wz2), evaluated literally.
inline JointRepresentation bilinear_joint_sum(const BilinearParams& params,
                                              const DenseTensor& map,
                                              const DenseTensor& m1,
                                              const DenseTensor& m2) {
  const DenseTensor p1 = matmul(m1, params.wz1);
  const DenseTensor p2 = matmul(m2, params.wz2);
  const std::size_t n1 = p1.extent(0), n2 = p2.extent(0), dz = p1.extent(1);
  detail::require(map.ndim() == 2 && map.extent(0) == n1 && map.extent(1) == n2,
                  "bilinear_joint_sum: map shape mismatch");
  DenseTensor z{Shape{dz}};
  for (std::size_t i = 0; i < n1; ++i)
    for (std::size_t j = 0; j < n2; ++j) {
      const double w = map(i, j);
      for (std::size_t t = 0; t < dz; ++t) z[t] += w * p1(i, t) * p2(j, t);
    }
  return JointRepresentation{std::move(z)};
}

/// Quadratic form per output coordinate:
/// z_k = (M1 Wz1)_k^T M (M2 Wz2)_k, the matrix form of the same sum.
inline JointRepresentation bilinear_joint_matrix(const BilinearParams& params,
                                                 const DenseTensor& map,
                                                 const DenseTensor& m1,
                                                 const DenseTensor& m2) {
  const DenseTensor p1 = matmul(m1, params.wz1);
  const DenseTensor p2 = matmul(m2, params.wz2);
  const std::size_t n1 = p1.extent(0), n2 = p2.extent(0), dz = p1.extent(1);
  detail::require(map.ndim() == 2 && map.extent(0) == n1 && map.extent(1) == n2,
                  "bilinear_joint_matrix: map shape mismatch");
  DenseTensor z{Shape{dz}};
  for (std::size_t k = 0; k < dz; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n1; ++i) {
      double inner = 0.0;
      for (std::size_t j = 0; j < n2; ++j) inner += map(i, j) * p2(j, k);
      acc += p1(i, k) * inner;
    }
    z[k] = acc;
  }
  return JointRepresentation{std::move(z)};
}

// ---------------------------------------------------------------------------
// Parameter accounting
// ---------------------------------------------------------------------------

struct ParamCount {
  std::uint64_t full_tensor_params = 0;
  std::uint64_t decomposed_params = 0;
  double decomposition_rate = 0.0;
};

namespace detail {

inline std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  std::uint64_t out = 0;
  if (__builtin_mul_overflow(a, b, &out) || out > (std::uint64_t{1} << 63))
    throw config_error("param_count: overflow past 2^63");
  return out;
}

}  // namespace detail

/// Exact parameter counts: the full 4-mode interaction tensor versus the
/// factored block (R factor matrices + R cores + three projections).
inline ParamCount param_count(const LttdConfig& cfg) {
  cfg.validate();
  using detail::checked_mul;
  const std::uint64_t r = cfg.r_slices;
  ParamCount out;
  out.full_tensor_params = checked_mul(
      checked_mul(checked_mul(cfg.n1, cfg.d1),
                  checked_mul(checked_mul(cfg.n2, cfg.d2),
                              checked_mul(cfg.n3, cfg.d3))),
      cfg.d_z);
  const std::uint64_t factors =
      checked_mul(r, checked_mul(cfg.d1, cfg.d1r()) +
                         checked_mul(cfg.d2, cfg.d2r()) +
                         checked_mul(cfg.d3, cfg.d3r()));
  const std::uint64_t cores =
      checked_mul(r, checked_mul(cfg.d1r(), checked_mul(cfg.d2r(), cfg.d3r())));
  const std::uint64_t projections =
      checked_mul(cfg.d1 + cfg.d2 + cfg.d3, cfg.d_z);
  out.decomposed_params = factors + cores + projections;
  out.decomposition_rate = static_cast<double>(out.full_tensor_params) /
                           static_cast<double>(out.decomposed_params);
  return out;
}

}  // namespace lttd
