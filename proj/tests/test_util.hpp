// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "lttd/rng.hpp"
#include "lttd/tensor.hpp"

namespace testutil {

// Max componentwise deviation relative to the magnitude of the reference.
inline double rel_err(const lttd::DenseTensor& got,
                      const lttd::DenseTensor& want) {
  REQUIRE(got.shape() == want.shape());
  double max_diff = 0.0, max_ref = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    max_diff = std::max(max_diff, std::abs(got[i] - want[i]));
    max_ref = std::max(max_ref, std::abs(want[i]));
  }
  return max_diff / std::max(max_ref, 1e-30);
}

inline double rel_err(std::span<const double> got,
                      std::span<const double> want) {
  REQUIRE(got.size() == want.size());
  double max_diff = 0.0, max_ref = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    max_diff = std::max(max_diff, std::abs(got[i] - want[i]));
    max_ref = std::max(max_ref, std::abs(want[i]));
  }
  return max_diff / std::max(max_ref, 1e-30);
}

inline double scalar_rel_err(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), 1e-30);
}

inline lttd::DenseTensor random_tensor(lttd::Shape shape, lttd::CounterRng& rng,
                                       double lo = -1.0, double hi = 1.0) {
  lttd::DenseTensor t{std::move(shape)};
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace testutil
