// Copyright (c) 2026 The spe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SPE_GRADCHECK_HPP_
#define SPE_GRADCHECK_HPP_

#include <algorithm>
#include <functional>

#include "spe/tensor.hpp"

namespace spe {

// A differentiable operation restricted to one input tensor. Vector-valued
// operations are reduced to a scalar with a random linear probe before
// they reach the finite-difference oracle.
using DiffOpForward = std::function<Tensor(const Tensor&)>;

// Central differences (f(x + eps*e_i) - f(x - eps*e_i)) / (2*eps) per
// coordinate. The op must return a scalar tensor; anything else is a
// contract violation.
inline Tensor finite_difference_gradient(const DiffOpForward& op,
                                         const Tensor& input, double epsilon) {
  SPE_CHECK(epsilon >= 1e-8 && epsilon <= 1e-3,
            "finite_difference_gradient: epsilon " << epsilon
                                                   << " outside [1e-8, 1e-3]");
  Tensor x = input;
  Tensor grad(input.shape());
  for (int64_t i = 0; i < x.numel(); ++i) {
    double orig = x[i];
    x[i] = orig + epsilon;
    Tensor up = op(x);
    SPE_CHECK(up.numel() == 1,
              "finite_difference_gradient: op output has "
                  << up.numel()
                  << " elements; contract requires a scalar (reduce with a "
                     "linear probe first)");
    x[i] = orig - epsilon;
    Tensor down = op(x);
    SPE_CHECK(down.numel() == 1,
              "finite_difference_gradient: op output must stay scalar");
    x[i] = orig;
    grad[i] = (up[0] - down[0]) / (2.0 * epsilon);
  }
  return grad;
}

// ||a - n||_2 / max(||a||_2 + ||n||_2, 1e-12).
inline double gradient_relative_error(const Tensor& analytic,
                                      const Tensor& numeric) {
  SPE_CHECK(analytic.same_shape(numeric),
            "gradient_relative_error: shape mismatch "
                << shape_str(analytic.shape()) << " vs "
                << shape_str(numeric.shape()));
  double diff = 0, na = 0, nn = 0;
  for (int64_t i = 0; i < analytic.numel(); ++i) {
    double d = analytic[i] - numeric[i];
    diff += d * d;
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  return std::sqrt(diff) /
         std::max(std::sqrt(na) + std::sqrt(nn), 1e-12);
}

// Fixed-seed Gaussian probe for reducing a vector-valued op to a scalar.
inline Tensor gaussian_probe(const std::vector<int64_t>& shape,
                             uint64_t seed) {
  Rng rng(seed);
  return gaussian_tensor(shape, rng);
}

inline double probe_dot(const Tensor& probe, const Tensor& value) {
  SPE_CHECK(probe.numel() == value.numel(),
            "probe_dot: size mismatch " << probe.numel() << " vs "
                                        << value.numel());
  double s = 0;
  for (int64_t i = 0; i < probe.numel(); ++i) s += probe[i] * value[i];
  return s;
}

}  // namespace spe

#endif  // SPE_GRADCHECK_HPP_
