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
//
// Acceptance suite. Runs the end-to-end contract checks and prints one
// PASS/FAIL line per criterion; exits nonzero if any fail.

#include <chrono>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "spe/gradcheck.hpp"
#include "spe/losses.hpp"
#include "spe/metrics.hpp"
#include "spe/pooling.hpp"
#include "spe/trainer.hpp"

using namespace spe;

namespace {

#define ACCEPT(cond, msg)                             \
  do {                                                \
    if (!(cond)) {                                    \
      std::ostringstream ss_;                         \
      ss_ << msg;                                     \
      throw std::runtime_error(ss_.str());            \
    }                                                 \
  } while (0)

double now_seconds() {
  static auto start = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                       start)
      .count();
}

// ---------------------------------------------------------------------------
// Criterion 1: finite-difference gradient suite, 10 seeds per operation.
// ---------------------------------------------------------------------------

double check_against_fd(const DiffOpForward& op, const Tensor& at,
                        const Tensor& analytic, double tol,
                        const std::string& what, double epsilon = 1e-5) {
  Tensor fd = finite_difference_gradient(op, at, epsilon);
  double err = gradient_relative_error(analytic, fd);
  ACCEPT(err < tol, what << ": gradient relative error " << err
                         << " exceeds " << tol);
  return err;
}

void gradcheck_backbone(uint64_t seed, double tol) {
  Backbone net(BackboneConfig::reduced(), seed);
  Rng rng(seed * 31 + 1);
  Tensor x = gaussian_tensor({1, 64, 8 + static_cast<int64_t>(seed % 3), 1},
                             rng);
  Tensor probe = gaussian_probe(net.forward(x, false).shape(), seed * 31 + 2);

  auto wrt_input = [&](const Tensor& t) {
    return Tensor::scalar(probe_dot(probe, net.forward(t, true)));
  };

  // one block per seed, round-robin over the four stages; the projection
  // convs and bn scales keep the coordinate count affordable
  int stage = static_cast<int>(seed % 4) + 2;
  std::string block = "backbone.stage" + std::to_string(stage) + ".block0";
  std::string conv_name =
      stage == 2 ? block + ".conv1.weight" : block + ".proj.weight";
  std::string gamma_name = block + ".bn1.gamma";

  ParamRefs params;
  net.collect_params(params);
  Parameter* conv_w = nullptr;
  Parameter* bn_g = nullptr;
  for (auto* p : params) {
    if (p->name == conv_name) conv_w = p;
    if (p->name == gamma_name) bn_g = p;
  }
  ACCEPT(conv_w && bn_g, "backbone gradcheck: block tensors not found");

  Tensor w0 = conv_w->value;
  auto wrt_w = [&](const Tensor& t) {
    conv_w->value = t;
    return Tensor::scalar(probe_dot(probe, net.forward(x, true)));
  };
  Tensor fd_w = finite_difference_gradient(wrt_w, w0, 1e-6);
  conv_w->value = w0;

  Tensor g0 = bn_g->value;
  auto wrt_g = [&](const Tensor& t) {
    bn_g->value = t;
    return Tensor::scalar(probe_dot(probe, net.forward(x, true)));
  };
  Tensor fd_g = finite_difference_gradient(wrt_g, g0, 1e-6);
  bn_g->value = g0;

  for (auto* p : params) p->zero_grad();
  net.forward(x, true);
  Tensor dx = net.backward(probe);
  // epsilon 1e-6: at 1e-5 a perturbation occasionally steps across a ReLU
  // boundary and the central difference picks up the slope change
  check_against_fd(wrt_input, x, dx, tol, "backbone input", 1e-6);
  double ew = gradient_relative_error(conv_w->grad, fd_w);
  double eg = gradient_relative_error(bn_g->grad, fd_g);
  ACCEPT(ew < tol, "backbone " << conv_name << ": error " << ew);
  ACCEPT(eg < tol, "backbone " << gamma_name << ": error " << eg);
}

void gradcheck_head(PoolingHead& head, const Tensor& map, uint64_t seed,
                    double tol) {
  Tensor probe = gaussian_probe(head.forward(map, true).shape(), seed + 7);
  auto wrt_map = [&](const Tensor& t) {
    return Tensor::scalar(probe_dot(probe, head.forward(t, true)));
  };
  Tensor fd_map = finite_difference_gradient(wrt_map, map, 1e-5);

  ParamRefs params;
  head.collect_params(params);
  std::vector<Tensor> fd_params;
  for (auto* p : params) {
    Tensor v0 = p->value;
    auto wrt_p = [&](const Tensor& t) {
      p->value = t;
      return Tensor::scalar(probe_dot(probe, head.forward(map, true)));
    };
    fd_params.push_back(finite_difference_gradient(wrt_p, v0, 1e-5));
    p->value = v0;
  }

  for (auto* p : params) p->zero_grad();
  head.forward(map, true);
  Tensor dmap = head.backward(probe);
  double em = gradient_relative_error(dmap, fd_map);
  ACCEPT(em < tol, head.kind() << " map gradient error " << em);
  for (size_t i = 0; i < params.size(); ++i) {
    double ep = gradient_relative_error(params[i]->grad, fd_params[i]);
    ACCEPT(ep < tol, head.kind() << " " << params[i]->name
                                 << " gradient error " << ep);
  }
}

void criterion_gradient_suite() {
  const double tol = 1e-4;
  const int seeds = 10;
  double start = now_seconds();

  for (uint64_t seed = 0; seed < seeds; ++seed) {
    gradcheck_backbone(seed, tol);

    Rng rng(seed + 1000);
    const int64_t H = 2, W = 5 + static_cast<int64_t>(seed % 4),
                  D = 3 + static_cast<int64_t>(seed % 3);
    Tensor map = gaussian_tensor({1, H, W, D}, rng);
    {
      TapHead tap(D);
      gradcheck_head(tap, map, seed, tol);
    }
    {
      Rng prng(seed + 2000);
      SppHead spp(D, PyramidSpec::one_d(), 5, prng);
      gradcheck_head(spp, map, seed, tol);
    }
    {
      Rng prng(seed + 3000);
      LdeHead lde(D, 3, 5, prng);
      gradcheck_head(lde, map, seed, tol);
    }
    {
      Rng prng(seed + 4000);
      SpeHead spe(D, PyramidSpec::one_d(), 3, 3, 5, prng);
      gradcheck_head(spe, map, seed, tol);
    }

    // losses
    {
      Rng prng(seed + 5000);
      const int64_t B = 2 + static_cast<int64_t>(seed % 3), N = 4,
                    E = 4 + static_cast<int64_t>(seed % 3);
      ClassifierHead head(N, E, prng);
      for (int64_t j = 0; j < N; ++j)
        head.bias.value[j] = 0.1 * prng.gaussian();
      Tensor emb = gaussian_tensor({B, E}, prng);
      std::vector<int> labels;
      for (int64_t b = 0; b < B; ++b)
        labels.push_back(static_cast<int>(prng.uniform_int(0, N - 1)));

      auto wrt_emb = [&](const Tensor& t) {
        return Tensor::scalar(softmax_loss(t, labels, head).value);
      };
      Tensor fd_e = finite_difference_gradient(wrt_emb, emb, 1e-5);
      Tensor w0 = head.weight.value;
      auto wrt_w = [&](const Tensor& t) {
        head.weight.value = t;
        return Tensor::scalar(softmax_loss(emb, labels, head).value);
      };
      Tensor fd_w = finite_difference_gradient(wrt_w, w0, 1e-5);
      head.weight.value = w0;
      head.weight.zero_grad();
      head.bias.zero_grad();
      LossResult res = softmax_loss(emb, labels, head);
      ACCEPT(gradient_relative_error(res.d_embeddings, fd_e) < tol,
             "softmax embedding gradient");
      ACCEPT(gradient_relative_error(head.weight.grad, fd_w) < tol,
             "softmax weight gradient");

      // A-softmax, margin 4, mid-anneal beta
      head.bias.value.fill(0.0);
      const double beta = 10.0;
      auto a_wrt_emb = [&](const Tensor& t) {
        return Tensor::scalar(asoftmax_loss(t, labels, head, 4, beta).value);
      };
      Tensor afd_e = finite_difference_gradient(a_wrt_emb, emb, 1e-5);
      auto a_wrt_w = [&](const Tensor& t) {
        head.weight.value = t;
        return Tensor::scalar(asoftmax_loss(emb, labels, head, 4, beta).value);
      };
      Tensor afd_w = finite_difference_gradient(a_wrt_w, w0, 1e-5);
      head.weight.value = w0;
      head.weight.zero_grad();
      LossResult ares = asoftmax_loss(emb, labels, head, 4, beta);
      ACCEPT(gradient_relative_error(ares.d_embeddings, afd_e) < tol,
             "a-softmax embedding gradient");
      ACCEPT(gradient_relative_error(head.weight.grad, afd_w) < tol,
             "a-softmax weight gradient");
    }
    {
      // L2-constrain
      Rng prng(seed + 6000);
      const int64_t E = 4 + static_cast<int64_t>(seed % 3);
      Tensor f = gaussian_tensor({2, E}, prng);
      Tensor probe = gaussian_probe({2, E}, seed + 6500);
      const double alpha = 4.5;
      auto wrt_f = [&](const Tensor& t) {
        return Tensor::scalar(probe_dot(probe, l2_constrain(t, alpha)));
      };
      Tensor fd_f = finite_difference_gradient(wrt_f, f, 1e-5);
      auto wrt_a = [&](const Tensor& t) {
        return Tensor::scalar(probe_dot(probe, l2_constrain(f, t[0])));
      };
      Tensor fd_a =
          finite_difference_gradient(wrt_a, Tensor::scalar(alpha), 1e-5);
      L2ConstrainGrad g = l2_constrain_backward(f, alpha, probe);
      ACCEPT(gradient_relative_error(g.d_input, fd_f) < tol,
             "l2_constrain input gradient");
      ACCEPT(std::abs(g.d_alpha - fd_a[0]) /
                     std::max(std::abs(fd_a[0]), 1e-12) <
                 tol,
             "l2_constrain alpha gradient");
    }
    {
      // Ring loss, including dL/dR. The batch-mean denominator is a
      // stop-gradient constant, so the oracle freezes it.
      Rng prng(seed + 7000);
      const int64_t B = 2 + static_cast<int64_t>(seed % 3),
                    E = 4 + static_cast<int64_t>(seed % 2);
      Tensor emb = gaussian_tensor({B, E}, prng);
      RingState state{1.3, 1.0};
      double frozen_e = 0;
      for (int64_t b = 0; b < B; ++b) {
        double n = 0;
        for (int64_t d = 0; d < E; ++d) n += emb(b, d) * emb(b, d);
        frozen_e += std::sqrt(n);
      }
      frozen_e /= static_cast<double>(B);
      auto frozen = [&](const Tensor& t) {
        double acc = 0;
        for (int64_t b = 0; b < B; ++b) {
          double n = 0;
          for (int64_t d = 0; d < E; ++d) n += t(b, d) * t(b, d);
          double r = (std::sqrt(n) - state.R) / frozen_e;
          acc += r * r;
        }
        return Tensor::scalar(acc / static_cast<double>(B));
      };
      Tensor fd_e = finite_difference_gradient(frozen, emb, 1e-5);
      auto wrt_r = [&](const Tensor& t) {
        return Tensor::scalar(ring_loss(emb, {t[0], 1.0}).value);
      };
      Tensor fd_r =
          finite_difference_gradient(wrt_r, Tensor::scalar(state.R), 1e-5);
      RingResult res = ring_loss(emb, state);
      ACCEPT(gradient_relative_error(res.d_embeddings, fd_e) < tol,
             "ring embedding gradient");
      ACCEPT(std::abs(res.d_R - fd_r[0]) /
                     std::max(std::abs(fd_r[0]), 1e-12) <
                 tol,
             "ring dL/dR");
    }
  }

  double elapsed = now_seconds() - start;
  ACCEPT(elapsed < 300.0,
         "gradient suite took " << elapsed << " s (budget 300 s)");
  std::printf("         gradient suite: %d seeds per op, %.1f s\n", seeds,
              elapsed);
}

// ---------------------------------------------------------------------------
// Criterion 2: softmax assignment weights lie on the simplex.
// ---------------------------------------------------------------------------

void criterion_simplex() {
  for (uint64_t draw = 0; draw < 1000; ++draw) {
    Rng rng(draw);
    int64_t L = rng.uniform_int(1, 16), C = rng.uniform_int(1, 8),
            D = rng.uniform_int(1, 8);
    Codebook cb("cb", C, D, rng);
    for (int64_t c = 0; c < C; ++c) cb.s_raw.value[c] = rng.gaussian();
    Tensor X = gaussian_tensor({L, D}, rng);
    Tensor w = lde_assign_weights(X, cb);
    for (int64_t t = 0; t < L; ++t) {
      double sum = 0;
      for (int64_t c = 0; c < C; ++c) {
        ACCEPT(w(t, c) > 0.0 && w(t, c) <= 1.0,
               "weight outside (0,1]: " << w(t, c));
        sum += w(t, c);
      }
      ACCEPT(std::abs(sum - 1.0) <= 1e-12,
             "row sum " << sum << " deviates from 1 by more than 1e-12");
    }
  }
  std::printf("         1000 draws, all rows sum to 1 within 1e-12\n");
}

// ---------------------------------------------------------------------------
// Criterion 3: residual encoding matches a naive double loop.
// ---------------------------------------------------------------------------

void criterion_lde_oracle() {
  double worst = 0;
  for (uint64_t draw = 0; draw < 50; ++draw) {
    Rng rng(draw + 42);
    int64_t L = rng.uniform_int(1, 64), C = rng.uniform_int(1, 8),
            D = rng.uniform_int(1, 16);
    Codebook cb("cb", C, D, rng);
    for (int64_t c = 0; c < C; ++c) cb.s_raw.value[c] = rng.gaussian();
    Tensor X = gaussian_tensor({L, D}, rng);

    // naive reference, straight from the definitions
    std::vector<double> s(C);
    for (int64_t c = 0; c < C; ++c) s[c] = softplus(cb.s_raw.value[c]);
    Tensor expect({C, D});
    for (int64_t t = 0; t < L; ++t) {
      std::vector<double> logits(C);
      for (int64_t c = 0; c < C; ++c) {
        double d2 = 0;
        for (int64_t d = 0; d < D; ++d) {
          double r = X(t, d) - cb.mu.value(c, d);
          d2 += r * r;
        }
        logits[c] = -s[c] * d2;
      }
      double zmax = *std::max_element(logits.begin(), logits.end());
      double total = 0;
      for (int64_t c = 0; c < C; ++c) total += std::exp(logits[c] - zmax);
      for (int64_t c = 0; c < C; ++c) {
        double w = std::exp(logits[c] - zmax) / total;
        for (int64_t d = 0; d < D; ++d)
          expect(c, d) += w * (X(t, d) - cb.mu.value(c, d)) /
                          static_cast<double>(L);
      }
    }

    Tensor got = lde_forward(X, cb);
    for (int64_t i = 0; i < expect.numel(); ++i) {
      double diff = std::abs(got[i] - expect[i]);
      worst = std::max(worst, diff);
      ACCEPT(diff <= 1e-10, "lde_forward deviates from the naive loop by "
                               << diff << " at flat index " << i);
    }
  }
  std::printf("         50 draws up to L=64 C=8 D=16, worst |diff| %.2e\n",
              worst);
}

// ---------------------------------------------------------------------------
// Criterion 4: backbone and SPE shape contract.
// ---------------------------------------------------------------------------

void criterion_shapes() {
  Backbone net(BackboneConfig::defaults(), 1);
  Rng prng(77);
  SpeHead spe(256, PyramidSpec::one_d(), 64, 64, 256, prng);
  ACCEPT(spe.supervector_dim() == 4096,
         "per-bin supervector width " << spe.supervector_dim());
  struct Case {
    int64_t T, W;
  };
  for (auto [T, W] : {Case{300, 38}, Case{400, 50}, Case{500, 63}}) {
    Rng rng(T);
    Tensor x = gaussian_tensor({1, 64, T, 1}, rng);
    Tensor map = net.forward(x, false);
    ACCEPT(map.shape() == std::vector<int64_t>({1, 8, W, 256}),
           "backbone output for T=" << T << " is " << shape_str(map.shape()));
    Tensor emb = spe.forward(map, false);
    ACCEPT(emb.dim(1) == 256,
           "spe output dim " << emb.dim(1) << " for T=" << T);
  }
  std::printf(
      "         T in {300,400,500} -> 8 x {38,50,63} x 256; spe -> 256 "
      "(supervector 4096)\n");
}

// ---------------------------------------------------------------------------
// Criterion 5: EER / minDCF against O(N^2) brute force.
// ---------------------------------------------------------------------------

double brute_force_eer(const std::vector<LabeledScore>& scores) {
  std::set<double> uniq;
  for (const auto& s : scores) uniq.insert(s.score);
  std::vector<double> thresholds(uniq.begin(), uniq.end());
  thresholds.push_back(*uniq.rbegin() + 1.0);
  double n_t = 0, n_n = 0;
  for (const auto& s : scores) (s.is_target ? n_t : n_n) += 1.0;
  double prev_far = -1, prev_frr = -1;
  for (double th : thresholds) {
    double fa = 0, fr = 0;
    for (const auto& s : scores) {
      if (!s.is_target && s.score >= th) fa += 1.0;
      if (s.is_target && s.score < th) fr += 1.0;
    }
    double far = fa / n_n, frr = fr / n_t;
    if (frr >= far) {
      if (frr == far) return far;
      if (prev_far < 0) return 0.5 * (far + frr);
      double denom = (frr - prev_frr) - (far - prev_far);
      if (denom == 0) return 0.5 * (prev_far + prev_frr);
      double t = (prev_far - prev_frr) / denom;
      return prev_far + t * (far - prev_far);
    }
    prev_far = far;
    prev_frr = frr;
  }
  return 1.0;
}

double brute_force_min_dcf(const std::vector<LabeledScore>& scores,
                           double p_target) {
  std::set<double> uniq;
  for (const auto& s : scores) uniq.insert(s.score);
  std::vector<double> thresholds(uniq.begin(), uniq.end());
  thresholds.push_back(*uniq.rbegin() + 1.0);
  thresholds.push_back(*uniq.begin() - 1.0);
  double n_t = 0, n_n = 0;
  for (const auto& s : scores) (s.is_target ? n_t : n_n) += 1.0;
  double best = 1e300;
  for (double th : thresholds) {
    double fa = 0, fr = 0;
    for (const auto& s : scores) {
      if (!s.is_target && s.score >= th) fa += 1.0;
      if (s.is_target && s.score < th) fr += 1.0;
    }
    best = std::min(best,
                    p_target * (fr / n_t) + (1.0 - p_target) * (fa / n_n));
  }
  return best / std::min(p_target, 1.0 - p_target);
}

void criterion_metric_oracle() {
  std::vector<LabeledScore> hand = {
      {true, 0.6}, {true, 0.2}, {false, 0.5}, {false, 0.1}};
  double hand_eer = compute_eer(hand).eer;
  ACCEPT(std::abs(hand_eer - 0.5) <= 1e-12,
         "hand example EER " << hand_eer << " != 0.5");

  double worst = 0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    int n = static_cast<int>(rng.uniform_int(4, 1000));
    std::vector<LabeledScore> scores;
    bool ties = seed % 3 == 0;
    for (int i = 0; i < n; ++i) {
      bool target = rng.uniform() < 0.35;
      double v = (target ? 0.4 : -0.4) + rng.gaussian();
      if (ties) v = std::round(v * 8.0) / 8.0;
      scores.push_back({target, v});
    }
    scores.push_back({true, 1.0});
    scores.push_back({false, -1.0});

    double de = std::abs(compute_eer(scores).eer - brute_force_eer(scores));
    worst = std::max(worst, de);
    ACCEPT(de <= 1e-12, "EER deviates from brute force by " << de);
    for (double p : {0.01, 0.001}) {
      double dd = std::abs(compute_min_dcf(scores, p).min_dcf -
                           brute_force_min_dcf(scores, p));
      worst = std::max(worst, dd);
      ACCEPT(dd <= 1e-12, "minDCF(p=" << p
                                      << ") deviates from brute force by "
                                      << dd);
    }
  }
  std::printf("         100 random sets (N <= 1000), worst |diff| %.2e\n",
              worst);
}

// ---------------------------------------------------------------------------
// Criterion 6: ring-loss contract.
// ---------------------------------------------------------------------------

void criterion_ring_contract() {
  Tensor emb({2, 2}, {1.0, 0.0, 0.0, 3.0});
  double val = ring_loss(emb, {2.0, 1.0}).value;
  ACCEPT(std::abs(val - 0.25) <= 1e-14,
         "ring loss for norms {1,3}, R=2 is " << val << ", expected 0.25");

  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed + 9);
    const int64_t B = 4, E = 3;
    double R = 0.5 + rng.uniform();
    Tensor on_ring({B, E});
    for (int64_t b = 0; b < B; ++b) {
      Tensor dir = gaussian_tensor({E}, rng);
      double n = dir.l2_norm();
      for (int64_t d = 0; d < E; ++d) on_ring(b, d) = R * dir[d] / n;
    }
    ACCEPT(ring_loss(on_ring, {R, 1.0}).value <= 1e-24,
           "ring loss nonzero with every norm at R");
    Tensor off = on_ring;
    off(0, 0) *= 1.001;
    ACCEPT(ring_loss(off, {R, 1.0}).value > 0,
           "ring loss zero with a norm off R");

    Tensor batch = gaussian_tensor({5, 6}, rng);
    double r0 = init_ring_R(batch);
    double expect = 0;
    for (int64_t b = 0; b < 5; ++b) {
      double n = 0;
      for (int64_t d = 0; d < 6; ++d) n += batch(b, d) * batch(b, d);
      expect += std::sqrt(n);
    }
    expect /= 5.0;
    ACCEPT(std::abs(r0 - expect) <= 1e-14,
           "R0 " << r0 << " != first-batch mean norm " << expect);
  }
  std::printf("         hand value 0.25; zero iff on-ring; R0 = mean norm\n");
}

// ---------------------------------------------------------------------------
// Criteria 7 and 8: desk-scale pipeline runs.
// ---------------------------------------------------------------------------

struct DeskRun {
  double best_acc = 0;
  double final_loss = 0;
  double eer = 1.0;
  double norm_cov = 0;
  int epochs = 0;
  double seconds = 0;
};

DeskRun desk_run(const std::string& pooling, bool ring,
                 const std::vector<LabeledUtterance>& train_set,
                 const std::vector<LabeledUtterance>& held) {
  auto start = std::chrono::steady_clock::now();
  TrainConfig cfg;
  cfg.features = "<memory>";
  cfg.out = "<memory>";
  cfg.backbone = "reduced";
  cfg.pooling = pooling;
  cfg.codewords = 32;
  cfg.spe_channels = 32;
  cfg.embed_dim = 256;
  cfg.loss = "sm";
  cfg.ring = ring;
  cfg.lambda = 1.0;
  cfg.batch_size = 16;
  cfg.epochs = 6;
  cfg.lr0 = 0.05;
  cfg.lr_step = 20;
  cfg.crop_min = 300;
  cfg.crop_max = 500;
  cfg.seed = 7;

  SpeakerModel model(cfg, 8);
  Trainer trainer(model, train_set, cfg);
  DeskRun out;
  TrainResult res = trainer.run([&](const EpochLog& log) {
    out.best_acc = std::max(out.best_acc, log.accuracy);
    return true;
  });
  out.epochs = static_cast<int>(res.epochs.size());
  out.final_loss = res.epochs.back().mean_loss;

  std::vector<std::vector<double>> embs;
  std::vector<int> spk;
  std::vector<double> norms;
  for (const auto& utt : held) {
    auto e = extract_embedding_raw(model, utt.features);
    double n = 0;
    for (double v : e) n += v * v;
    norms.push_back(std::sqrt(n));
    embs.push_back(std::move(e));
    spk.push_back(utt.speaker);
  }
  std::vector<LabeledScore> scores;
  for (size_t i = 0; i < embs.size(); ++i)
    for (size_t j = i + 1; j < embs.size(); ++j)
      scores.push_back({spk[i] == spk[j], cosine_score(embs[i], embs[j])});
  out.eer = compute_eer(scores).eer;

  double mean = 0, var = 0;
  for (double n : norms) mean += n;
  mean /= static_cast<double>(norms.size());
  for (double n : norms) var += (n - mean) * (n - mean);
  out.norm_cov = std::sqrt(var / static_cast<double>(norms.size())) / mean;
  out.seconds = std::chrono::duration<double>(
                    std::chrono::steady_clock::now() - start)
                    .count();
  return out;
}

DeskRun g_spe_ring, g_spe_plain, g_tap_ring;

void criterion_desk_pipeline() {
  auto all = generate_synthetic_speakers(8, 26, 7);
  std::vector<LabeledUtterance> train_set, held;
  for (auto& utt : all) {
    int idx = std::stoi(utt.id.substr(utt.id.find("utt") + 3));
    (idx < 20 ? train_set : held).push_back(std::move(utt));
  }
  ACCEPT(train_set.size() == 160, "expected 8 x 20 training utterances");

  g_spe_ring = desk_run("spe", true, train_set, held);
  ACCEPT(g_spe_ring.epochs <= 60,
         "spe+ring run used " << g_spe_ring.epochs << " epochs");
  ACCEPT(g_spe_ring.best_acc >= 0.99, "spe+ring training accuracy "
                                          << g_spe_ring.best_acc
                                          << " below 0.99");
  ACCEPT(g_spe_ring.eer <= 0.05,
         "held-out EER " << g_spe_ring.eer << " above 5%");
  ACCEPT(g_spe_ring.seconds < 900.0,
         "spe+ring run took " << g_spe_ring.seconds << " s (budget 900)");

  g_tap_ring = desk_run("tap", true, train_set, held);
  ACCEPT(std::isfinite(g_tap_ring.final_loss),
         "tap run did not complete cleanly");

  g_spe_plain = desk_run("spe", false, train_set, held);
  ACCEPT(std::isfinite(g_spe_plain.final_loss),
         "no-ring run did not complete cleanly");

  std::printf(
      "         spe+ring: acc %.4f within %d epochs, held-out EER %.4f, "
      "%.0f s; tap run completed (loss %.4f)\n",
      g_spe_ring.best_acc, g_spe_ring.epochs, g_spe_ring.eer,
      g_spe_ring.seconds, g_tap_ring.final_loss);
}

void criterion_normalization() {
  ACCEPT(g_spe_ring.epochs > 0, "desk runs did not execute");
  ACCEPT(g_spe_ring.norm_cov < g_spe_plain.norm_cov,
         "ring norm CoV " << g_spe_ring.norm_cov
                          << " not below the no-ring CoV "
                          << g_spe_plain.norm_cov);
  ACCEPT(g_spe_ring.norm_cov < 0.2,
         "ring norm CoV " << g_spe_ring.norm_cov << " above 0.2");

  Rng rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor f = gaussian_tensor({7}, rng);
    for (double alpha : {1.0, 10.0, 24.1}) {
      double n = l2_constrain(f, alpha).l2_norm();
      ACCEPT(std::abs(n - alpha) <= 1e-12,
             "l2_constrain norm " << n << " != alpha " << alpha);
    }
  }
  std::printf(
      "         norm CoV: ring %.4f < no-ring %.4f; l2_constrain norms "
      "equal alpha to 1e-12\n",
      g_spe_ring.norm_cov, g_spe_plain.norm_cov);
}

// ---------------------------------------------------------------------------
// Criterion 9: A-softmax reductions.
// ---------------------------------------------------------------------------

void criterion_asoftmax_reductions() {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 600);
    const int64_t B = 4, N = 5, E = 6;
    ClassifierHead head(N, E, rng);
    head.renormalize_rows();
    head.bias.value.fill(0.0);
    Tensor emb = gaussian_tensor({B, E}, rng);
    std::vector<int> labels;
    for (int64_t b = 0; b < B; ++b)
      labels.push_back(static_cast<int>(rng.uniform_int(0, N - 1)));
    double a = asoftmax_loss(emb, labels, head, 1, 0.0).value;
    head.weight.zero_grad();
    head.bias.zero_grad();
    double s = softmax_loss(emb, labels, head).value;
    ACCEPT(std::abs(a - s) <= 1e-10, "m=1 beta=0 A-softmax " << a
                                                             << " != softmax "
                                                             << s);
  }

  ACCEPT(std::abs(asoftmax_psi(0.0, 4) - 1.0) <= 1e-14, "psi(0,4) != 1");
  ACCEPT(std::abs(asoftmax_psi(M_PI, 4) + 7.0) <= 1e-12, "psi(pi,4) != -7");
  for (int m : {2, 3, 4}) {
    for (int k = 1; k < m; ++k) {
      double knot = k * M_PI / m;
      double jump =
          std::abs(asoftmax_psi(knot - 1e-13, m) - asoftmax_psi(knot + 1e-13, m));
      ACCEPT(jump < 1e-12, "psi jump " << jump << " at knot " << k << "pi/"
                                       << m);
    }
  }
  std::printf(
      "         m=1 reduction within 1e-10; psi(0,4)=1, psi(pi,4)=-7, "
      "knots continuous\n");
}

struct Criterion {
  int id;
  std::string name;
  std::function<void()> run;
};

}  // namespace

int main() {
  std::vector<Criterion> criteria = {
      {1, "gradient suite (rel. error < 1e-4, 10 seeds per op)",
       criterion_gradient_suite},
      {2, "assignment weights on the simplex (1000 draws, 1e-12)",
       criterion_simplex},
      {3, "residual encoding matches the naive double loop (1e-10)",
       criterion_lde_oracle},
      {4, "backbone 8 x ceil(T/8) x 256 and spe 256/4096 shape contract",
       criterion_shapes},
      {5, "EER/minDCF match O(N^2) brute force (100 sets, 1e-12)",
       criterion_metric_oracle},
      {6, "ring-loss hand values, zero condition, R0 initialization",
       criterion_ring_contract},
      {7, "desk-scale pipeline: acc >= 0.99, EER <= 5%, < 15 min",
       criterion_desk_pipeline},
      {8, "ring run concentrates norms; l2_constrain radius exact",
       criterion_normalization},
      {9, "A-softmax reductions and psi values", criterion_asoftmax_reductions},
  };

  int failures = 0;
  for (auto& criterion : criteria) {
    double start = now_seconds();
    try {
      criterion.run();
      std::printf("[PASS] criterion %d: %s (%.1f s)\n", criterion.id,
                  criterion.name.c_str(), now_seconds() - start);
    } catch (const std::exception& e) {
      ++failures;
      std::printf("[FAIL] criterion %d: %s\n        %s\n", criterion.id,
                  criterion.name.c_str(), e.what());
    }
    std::fflush(stdout);
  }
  if (failures) std::printf("%d criterion(s) failed\n", failures);
  else std::printf("all %zu criteria passed\n", criteria.size());
  return failures == 0 ? 0 : 1;
}
