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

#ifndef SPE_LOSSES_HPP_
#define SPE_LOSSES_HPP_

#include <algorithm>
#include <string>
#include <vector>

#include "spe/nn.hpp"

namespace spe {

struct ClassifierHead {
  Parameter weight;  // {n_classes, embed_dim}
  Parameter bias;    // {n_classes}; zeroed and frozen under A-softmax

  ClassifierHead(int64_t n_classes, int64_t embed_dim, Rng& rng)
      : weight("head.weight", Tensor({n_classes, embed_dim})),
        bias("head.bias", Tensor({n_classes})) {
    double std = std::sqrt(1.0 / static_cast<double>(embed_dim));
    for (int64_t i = 0; i < weight.value.numel(); ++i)
      weight.value[i] = std * rng.gaussian();
  }

  int64_t n_classes() const { return weight.value.dim(0); }
  int64_t embed_dim() const { return weight.value.dim(1); }

  // A-softmax invariant: unit-norm rows after every optimizer step.
  void renormalize_rows() {
    const int64_t N = n_classes(), E = embed_dim();
    for (int64_t j = 0; j < N; ++j) {
      double norm = 0;
      for (int64_t d = 0; d < E; ++d)
        norm += weight.value(j, d) * weight.value(j, d);
      norm = std::sqrt(norm);
      SPE_CHECK(norm > 0, "ClassifierHead: zero weight row " << j);
      for (int64_t d = 0; d < E; ++d) weight.value(j, d) /= norm;
    }
  }

  void collect_params(ParamRefs& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

struct LossResult {
  double value = 0;
  Tensor d_embeddings;  // [B, E]
  int64_t correct = 0;  // margin-free argmax hits, for training accuracy
};

// Mean cross-entropy of softmax(W f + b). Accumulates head gradients and
// returns the embedding gradient.
inline LossResult softmax_loss(const Tensor& embeddings,
                               const std::vector<int>& labels,
                               ClassifierHead& head) {
  SPE_CHECK(embeddings.ndim() == 2 &&
                embeddings.dim(1) == head.embed_dim(),
            "softmax_loss: expected [B," << head.embed_dim()
                                         << "] embeddings, got "
                                         << shape_str(embeddings.shape()));
  const int64_t B = embeddings.dim(0), N = head.n_classes(),
                E = head.embed_dim();
  SPE_CHECK(static_cast<int64_t>(labels.size()) == B,
            "softmax_loss: label count mismatch");
  for (int lab : labels)
    SPE_CHECK(lab >= 0 && lab < N,
              "softmax_loss: label " << lab << " out of range [0," << N << ")");

  Tensor logits({B, N});
  matmul(embeddings.data(), head.weight.value.data(), logits.data(), B, E, N,
         false, /*trans_b=*/true);
  for (int64_t b = 0; b < B; ++b)
    for (int64_t j = 0; j < N; ++j) logits(b, j) += head.bias.value[j];

  LossResult res;
  res.d_embeddings = Tensor({B, E});
  Tensor dlogits({B, N});
  for (int64_t b = 0; b < B; ++b) {
    int y = labels[static_cast<size_t>(b)];
    double zmax = logits(b, 0);
    int64_t argmax = 0;
    for (int64_t j = 1; j < N; ++j)
      if (logits(b, j) > zmax) {
        zmax = logits(b, j);
        argmax = j;
      }
    if (argmax == y) ++res.correct;
    double total = 0;
    for (int64_t j = 0; j < N; ++j) total += std::exp(logits(b, j) - zmax);
    res.value += (std::log(total) - (logits(b, y) - zmax));
    for (int64_t j = 0; j < N; ++j) {
      double p = std::exp(logits(b, j) - zmax) / total;
      dlogits(b, j) = (p - (j == y ? 1.0 : 0.0)) / static_cast<double>(B);
    }
  }
  res.value /= static_cast<double>(B);

  matmul(dlogits.data(), embeddings.data(), head.weight.grad.data(), N, B, E,
         /*trans_a=*/true, false, /*accumulate=*/true);
  for (int64_t b = 0; b < B; ++b)
    for (int64_t j = 0; j < N; ++j) head.bias.grad[j] += dlogits(b, j);
  matmul(dlogits.data(), head.weight.value.data(), res.d_embeddings.data(), B,
         N, E);
  return res;
}

namespace lossdetail {

// Chebyshev T_m(c) and U_{m-1}(c); cos(m t) = T_m(cos t) and
// d/dc T_m(c) = m U_{m-1}(c).
inline void chebyshev(double c, int m, double* t_m, double* u_m1) {
  double t0 = 1.0, t1 = c;
  double u0 = 1.0, u1 = 2.0 * c;
  if (m == 0) {
    *t_m = 1.0;
    *u_m1 = 0.0;
    return;
  }
  double t = t1, u = u0;
  for (int i = 2; i <= m; ++i) {
    double tn = 2.0 * c * t1 - t0;
    t0 = t1;
    t1 = tn;
  }
  t = (m == 1) ? c : t1;
  if (m >= 2) {
    for (int i = 2; i <= m - 1; ++i) {
      double un = 2.0 * c * u1 - u0;
      u0 = u1;
      u1 = un;
    }
    u = u1;
  }
  *t_m = t;
  *u_m1 = u;
}

inline int margin_interval(double theta, int m) {
  int k = static_cast<int>(std::floor(theta * m / M_PI));
  return std::min(std::max(k, 0), m - 1);
}

// psi as a function of cos(theta) together with d psi / d cos(theta).
inline void psi_from_cos(double c, int m, double* psi, double* dpsi) {
  c = std::max(-1.0, std::min(1.0, c));
  double theta = std::acos(c);
  int k = margin_interval(theta, m);
  double sign = (k % 2 == 0) ? 1.0 : -1.0;
  double t_m, u_m1;
  chebyshev(c, m, &t_m, &u_m1);
  *psi = sign * t_m - 2.0 * k;
  *dpsi = sign * m * u_m1;
}

}  // namespace lossdetail

// Piecewise angular margin function:
// psi(theta) = (-1)^k cos(m theta) - 2k on [k pi/m, (k+1) pi/m].
inline double asoftmax_psi(double theta, int margin) {
  SPE_CHECK(margin >= 1, "asoftmax_psi: margin must be >= 1, got " << margin);
  SPE_CHECK(theta >= 0.0 && theta <= M_PI,
            "asoftmax_psi: theta " << theta << " outside [0, pi]");
  int k = lossdetail::margin_interval(theta, margin);
  double sign = (k % 2 == 0) ? 1.0 : -1.0;
  return sign * std::cos(margin * theta) - 2.0 * k;
}

// beta decays from 1000 toward a floor of 5; the effective target logit
// blends psi with plain cos(theta) as (psi + beta cos) / (1 + beta).
struct AnnealSchedule {
  double beta0 = 1000.0;
  double beta_min = 5.0;
  double decay = 0.1;

  double beta(int64_t iter) const {
    return std::max(beta_min, beta0 / (1.0 + decay * static_cast<double>(iter)));
  }
};

// A-softmax (angular softmax) loss. The target class logit is
// ||f|| * psi(theta_y); other logits are ||f|| cos(theta_j). Cosines are
// computed against explicitly normalized weight rows, so gradients flow
// through the row norms as well. The bias is required to stay zero.
inline LossResult asoftmax_loss(const Tensor& embeddings,
                                const std::vector<int>& labels,
                                ClassifierHead& head, int margin,
                                double beta) {
  SPE_CHECK(embeddings.ndim() == 2 && embeddings.dim(1) == head.embed_dim(),
            "asoftmax_loss: expected [B," << head.embed_dim()
                                          << "] embeddings, got "
                                          << shape_str(embeddings.shape()));
  SPE_CHECK(margin >= 1, "asoftmax_loss: margin must be >= 1");
  SPE_CHECK(beta >= 0, "asoftmax_loss: beta must be >= 0");
  for (int64_t j = 0; j < head.n_classes(); ++j)
    SPE_CHECK(head.bias.value[j] == 0.0,
              "asoftmax_loss: bias must be zero (frozen), row " << j);

  const int64_t B = embeddings.dim(0), N = head.n_classes(),
                E = head.embed_dim();
  SPE_CHECK(static_cast<int64_t>(labels.size()) == B,
            "asoftmax_loss: label count mismatch");
  for (int lab : labels)
    SPE_CHECK(lab >= 0 && lab < N, "asoftmax_loss: label " << lab
                                                           << " out of range");

  std::vector<double> wnorm(static_cast<size_t>(N));
  for (int64_t j = 0; j < N; ++j) {
    double norm = 0;
    for (int64_t d = 0; d < E; ++d)
      norm += head.weight.value(j, d) * head.weight.value(j, d);
    wnorm[j] = std::sqrt(norm);
    SPE_CHECK(wnorm[j] > 0, "asoftmax_loss: zero weight row " << j);
  }

  LossResult res;
  res.d_embeddings = Tensor({B, E});
  const double invB = 1.0 / static_cast<double>(B);

  std::vector<double> u(static_cast<size_t>(N)), cosj(static_cast<size_t>(N)),
      logits(static_cast<size_t>(N)), p(static_cast<size_t>(N));
  for (int64_t b = 0; b < B; ++b) {
    const double* f = embeddings.data() + b * E;
    int y = labels[static_cast<size_t>(b)];
    double n = 0;
    for (int64_t d = 0; d < E; ++d) n += f[d] * f[d];
    n = std::sqrt(n);
    SPE_CHECK(n > 0, "asoftmax_loss: zero-norm embedding at batch index "
                         << b << " (angle undefined)");

    for (int64_t j = 0; j < N; ++j) {
      double dot = 0;
      for (int64_t d = 0; d < E; ++d) dot += head.weight.value(j, d) * f[d];
      u[j] = dot;
      cosj[j] = std::max(-1.0, std::min(1.0, dot / (wnorm[j] * n)));
      logits[j] = n * cosj[j];
    }
    int64_t argmax = 0;
    for (int64_t j = 1; j < N; ++j)
      if (logits[j] > logits[argmax]) argmax = j;
    if (argmax == y) ++res.correct;

    double psi, dpsi;
    lossdetail::psi_from_cos(cosj[y], margin, &psi, &dpsi);
    double psi_eff = (psi + beta * cosj[y]) / (1.0 + beta);
    double dpsi_eff = (dpsi + beta) / (1.0 + beta);
    logits[y] = n * psi_eff;

    double zmax = *std::max_element(logits.begin(), logits.end());
    double total = 0;
    for (int64_t j = 0; j < N; ++j) total += std::exp(logits[j] - zmax);
    res.value += (std::log(total) - (logits[y] - zmax)) * invB;

    double* df = res.d_embeddings.data() + b * E;
    for (int64_t j = 0; j < N; ++j) {
      double g = (std::exp(logits[j] - zmax) / total - (j == y ? 1.0 : 0.0)) *
                 invB;
      if (j == y) {
        // d/df [ n * psi_eff(cos) ] = psi_eff * f/n
        //                           + dpsi_eff * (w_hat - cos * f/n)
        double a = psi_eff / n - dpsi_eff * cosj[y] / n;
        double bb = dpsi_eff / wnorm[j];
        for (int64_t d = 0; d < E; ++d)
          df[d] += g * (a * f[d] + bb * head.weight.value(j, d));
        // d/dw_y = n * dpsi_eff * (f_hat - cos * w_hat) / ||w_y||
        double c1 = n * dpsi_eff / wnorm[j];
        double c2 = c1 * cosj[y] / wnorm[j];
        for (int64_t d = 0; d < E; ++d)
          head.weight.grad(j, d) +=
              g * (c1 * f[d] / n - c2 * head.weight.value(j, d));
      } else {
        // logit_j = u_j / ||w_j||
        for (int64_t d = 0; d < E; ++d)
          df[d] += g * head.weight.value(j, d) / wnorm[j];
        double c2 = u[j] / (wnorm[j] * wnorm[j] * wnorm[j]);
        for (int64_t d = 0; d < E; ++d)
          head.weight.grad(j, d) +=
              g * (f[d] / wnorm[j] - c2 * head.weight.value(j, d));
      }
    }
  }
  return res;
}

// alpha * f / ||f||: hard length normalization onto a sphere of radius
// alpha. Works on a single vector or a [B, E] batch row-wise.
inline Tensor l2_constrain(const Tensor& f, double alpha) {
  SPE_CHECK(alpha > 0, "l2_constrain: alpha must be positive, got " << alpha);
  SPE_CHECK(f.ndim() == 1 || f.ndim() == 2,
            "l2_constrain: expected vector or [B,E] batch");
  const int64_t B = f.ndim() == 2 ? f.dim(0) : 1;
  const int64_t E = f.ndim() == 2 ? f.dim(1) : f.dim(0);
  Tensor out(f.shape());
  for (int64_t b = 0; b < B; ++b) {
    const double* x = f.data() + b * E;
    double* o = out.data() + b * E;
    double n = 0;
    for (int64_t d = 0; d < E; ++d) n += x[d] * x[d];
    n = std::sqrt(n);
    SPE_CHECK(n > 0, "l2_constrain: zero vector at row " << b);
    for (int64_t d = 0; d < E; ++d) o[d] = alpha * x[d] / n;
  }
  return out;
}

struct L2ConstrainGrad {
  Tensor d_input;
  double d_alpha = 0;
};

inline L2ConstrainGrad l2_constrain_backward(const Tensor& f, double alpha,
                                             const Tensor& upstream) {
  SPE_CHECK(f.same_shape(upstream), "l2_constrain_backward: shape mismatch");
  const int64_t B = f.ndim() == 2 ? f.dim(0) : 1;
  const int64_t E = f.ndim() == 2 ? f.dim(1) : f.dim(0);
  L2ConstrainGrad g;
  g.d_input = Tensor(f.shape());
  for (int64_t b = 0; b < B; ++b) {
    const double* x = f.data() + b * E;
    const double* up = upstream.data() + b * E;
    double* o = g.d_input.data() + b * E;
    double n = 0, dot = 0;
    for (int64_t d = 0; d < E; ++d) {
      n += x[d] * x[d];
      dot += x[d] * up[d];
    }
    n = std::sqrt(n);
    SPE_CHECK(n > 0, "l2_constrain_backward: zero vector at row " << b);
    for (int64_t d = 0; d < E; ++d)
      o[d] = alpha * (up[d] / n - x[d] * dot / (n * n * n));
    g.d_alpha += dot / n;
  }
  return g;
}

struct RingState {
  double R = -1.0;      // target norm; negative means "not yet initialized"
  double lambda = 1.0;  // weight of the ring term in the total objective

  bool initialized() const { return R > 0; }
};

struct RingResult {
  double value = 0;
  Tensor d_embeddings;
  double d_R = 0;
};

// Ring loss: L_R = (1/B) sum_i ((||f_i|| - R) / E[||f||])^2, where
// E[||f||] is the batch mean norm and is treated as a constant in the
// backward pass. R is a learned parameter and receives a gradient.
inline RingResult ring_loss(const Tensor& embeddings, const RingState& state) {
  SPE_CHECK(embeddings.ndim() == 2, "ring_loss: expected [B,E] embeddings");
  SPE_CHECK(state.initialized(), "ring_loss: R not initialized");
  const int64_t B = embeddings.dim(0), E = embeddings.dim(1);

  std::vector<double> norms(static_cast<size_t>(B));
  double mean_norm = 0;
  for (int64_t b = 0; b < B; ++b) {
    const double* f = embeddings.data() + b * E;
    double n = 0;
    for (int64_t d = 0; d < E; ++d) n += f[d] * f[d];
    norms[b] = std::sqrt(n);
    mean_norm += norms[b];
  }
  mean_norm /= static_cast<double>(B);
  SPE_CHECK(mean_norm > 0,
            "ring_loss: degenerate batch, mean embedding norm is zero");

  RingResult res;
  res.d_embeddings = Tensor(embeddings.shape());
  const double inv_e2 = 1.0 / (mean_norm * mean_norm);
  for (int64_t b = 0; b < B; ++b) {
    double r = norms[b] - state.R;
    res.value += r * r * inv_e2;
    res.d_R += -2.0 * r * inv_e2 / static_cast<double>(B);
    if (norms[b] > 0) {
      double coeff = 2.0 * r * inv_e2 / (static_cast<double>(B) * norms[b]);
      const double* f = embeddings.data() + b * E;
      double* o = res.d_embeddings.data() + b * E;
      for (int64_t d = 0; d < E; ++d) o[d] = coeff * f[d];
    }
  }
  res.value /= static_cast<double>(B);
  return res;
}

// R starts at the mean embedding norm of the first training batch.
inline double init_ring_R(const Tensor& first_batch_embeddings) {
  SPE_CHECK(first_batch_embeddings.ndim() == 2,
            "init_ring_R: expected [B,E] embeddings");
  const int64_t B = first_batch_embeddings.dim(0),
                E = first_batch_embeddings.dim(1);
  double mean = 0;
  for (int64_t b = 0; b < B; ++b) {
    const double* f = first_batch_embeddings.data() + b * E;
    double n = 0;
    for (int64_t d = 0; d < E; ++d) n += f[d] * f[d];
    mean += std::sqrt(n);
  }
  mean /= static_cast<double>(B);
  SPE_CHECK(mean > 0, "init_ring_R: degenerate first batch (all-zero norms)");
  return mean;
}

struct TotalLoss {
  double value = 0;
  Tensor d_embeddings;
};

// L = L_P + lambda * L_R; gradients superpose.
inline TotalLoss total_loss(double primary_value, const Tensor& primary_grad,
                            double ring_value, const Tensor& ring_grad,
                            double lambda) {
  SPE_CHECK(lambda >= 0, "total_loss: lambda must be >= 0, got " << lambda);
  SPE_CHECK(primary_grad.same_shape(ring_grad),
            "total_loss: gradient shape mismatch");
  TotalLoss out;
  out.value = primary_value + lambda * ring_value;
  out.d_embeddings = primary_grad;
  out.d_embeddings.add_scaled(ring_grad, lambda);
  return out;
}

}  // namespace spe

#endif  // SPE_LOSSES_HPP_
