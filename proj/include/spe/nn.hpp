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

#ifndef SPE_NN_HPP_
#define SPE_NN_HPP_

#include <cstring>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "spe/tensor.hpp"

namespace spe {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(0.0); }
};

using ParamRefs = std::vector<Parameter*>;

// Activations are laid out batch x height x width x channels. Convolutions
// use SAME padding with ceil division of the spatial extents, so a
// stride-2 stage maps T to ceil(T/2).
inline int64_t conv_out_extent(int64_t in, int64_t stride) {
  return (in + stride - 1) / stride;
}

class Conv2d {
 public:
  Conv2d(std::string name, int64_t in_ch, int64_t out_ch, int64_t kernel,
         int64_t stride, Rng& rng)
      : in_ch_(in_ch), out_ch_(out_ch), k_(kernel), stride_(stride) {
    Tensor w({out_ch, kernel, kernel, in_ch});
    double std = std::sqrt(2.0 / static_cast<double>(kernel * kernel * in_ch));
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = std * rng.gaussian();
    weight_ = Parameter(std::move(name) + ".weight", std::move(w));
  }

  Tensor forward(const Tensor& x, bool training) {
    check_input(x);
    const int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int64_t Ho = conv_out_extent(H, stride_);
    const int64_t Wo = conv_out_extent(W, stride_);
    const int64_t K = k_ * k_ * in_ch_;
    Tensor y({B, Ho, Wo, out_ch_});
    parallel_for(0, B, [&](int64_t b) {
      std::vector<double> patches(static_cast<size_t>(Ho * Wo * K));
      im2col(x.data() + b * H * W * in_ch_, H, W, patches.data());
      matmul(patches.data(), weight_.value.data(),
             y.data() + b * Ho * Wo * out_ch_, Ho * Wo, K, out_ch_,
             /*trans_a=*/false, /*trans_b=*/true);
    });
    if (training) x_cache_ = x;
    return y;
  }

  // Fills weight_.grad (accumulating) and returns the input gradient.
  Tensor backward(const Tensor& dy) {
    SPE_CHECK(x_cache_.numel() > 0, "Conv2d: backward before forward");
    const Tensor& x = x_cache_;
    const int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int64_t Ho = dy.dim(1), Wo = dy.dim(2);
    const int64_t K = k_ * k_ * in_ch_;
    Tensor dx({B, H, W, in_ch_});
    // Per-sample weight-gradient slots, reduced in sample order afterwards
    // so the result does not depend on the thread count.
    std::vector<double> dw_slots(static_cast<size_t>(B) *
                                 weight_.value.numel());
    parallel_for(0, B, [&](int64_t b) {
      std::vector<double> patches(static_cast<size_t>(Ho * Wo * K));
      std::vector<double> dpatches(static_cast<size_t>(Ho * Wo * K));
      im2col(x.data() + b * H * W * in_ch_, H, W, patches.data());
      const double* dyb = dy.data() + b * Ho * Wo * out_ch_;
      matmul(dyb, patches.data(), dw_slots.data() + b * weight_.value.numel(),
             out_ch_, Ho * Wo, K, /*trans_a=*/true);
      matmul(dyb, weight_.value.data(), dpatches.data(), Ho * Wo, out_ch_, K);
      col2im(dpatches.data(), H, W, dx.data() + b * H * W * in_ch_);
    });
    for (int64_t b = 0; b < B; ++b) {
      const double* src = dw_slots.data() + b * weight_.value.numel();
      double* dst = weight_.grad.data();
      for (int64_t i = 0; i < weight_.value.numel(); ++i) dst[i] += src[i];
    }
    return dx;
  }

  void collect_params(ParamRefs& out) { out.push_back(&weight_); }

  int64_t in_channels() const { return in_ch_; }
  int64_t out_channels() const { return out_ch_; }
  Parameter& weight() { return weight_; }

 private:
  void check_input(const Tensor& x) const {
    SPE_CHECK(x.ndim() == 4 && x.dim(3) == in_ch_,
              "Conv2d '" << weight_.name << "': expected input [B,H,W,"
                         << in_ch_ << "], got " << shape_str(x.shape()));
  }

  void pad_amounts(int64_t in, int64_t* lo) const {
    int64_t out = conv_out_extent(in, stride_);
    int64_t total = std::max<int64_t>(0, (out - 1) * stride_ + k_ - in);
    *lo = total / 2;
  }

  void im2col(const double* x, int64_t H, int64_t W, double* patches) const {
    int64_t ph, pw;
    pad_amounts(H, &ph);
    pad_amounts(W, &pw);
    const int64_t Ho = conv_out_extent(H, stride_);
    const int64_t Wo = conv_out_extent(W, stride_);
    const int64_t row_len = k_ * k_ * in_ch_;
    for (int64_t ho = 0; ho < Ho; ++ho) {
      for (int64_t wo = 0; wo < Wo; ++wo) {
        double* row = patches + (ho * Wo + wo) * row_len;
        for (int64_t ki = 0; ki < k_; ++ki) {
          int64_t hi = ho * stride_ - ph + ki;
          double* seg = row + ki * k_ * in_ch_;
          if (hi < 0 || hi >= H) {
            std::memset(seg, 0, sizeof(double) * k_ * in_ch_);
            continue;
          }
          for (int64_t kj = 0; kj < k_; ++kj) {
            int64_t wi = wo * stride_ - pw + kj;
            double* dst = seg + kj * in_ch_;
            if (wi < 0 || wi >= W) {
              std::memset(dst, 0, sizeof(double) * in_ch_);
            } else {
              std::memcpy(dst, x + (hi * W + wi) * in_ch_,
                          sizeof(double) * in_ch_);
            }
          }
        }
      }
    }
  }

  void col2im(const double* dpatches, int64_t H, int64_t W,
              double* dx) const {
    int64_t ph, pw;
    pad_amounts(H, &ph);
    pad_amounts(W, &pw);
    const int64_t Ho = conv_out_extent(H, stride_);
    const int64_t Wo = conv_out_extent(W, stride_);
    const int64_t row_len = k_ * k_ * in_ch_;
    std::memset(dx, 0, sizeof(double) * H * W * in_ch_);
    for (int64_t ho = 0; ho < Ho; ++ho) {
      for (int64_t wo = 0; wo < Wo; ++wo) {
        const double* row = dpatches + (ho * Wo + wo) * row_len;
        for (int64_t ki = 0; ki < k_; ++ki) {
          int64_t hi = ho * stride_ - ph + ki;
          if (hi < 0 || hi >= H) continue;
          for (int64_t kj = 0; kj < k_; ++kj) {
            int64_t wi = wo * stride_ - pw + kj;
            if (wi < 0 || wi >= W) continue;
            double* dst = dx + (hi * W + wi) * in_ch_;
            const double* src = row + (ki * k_ + kj) * in_ch_;
            for (int64_t c = 0; c < in_ch_; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }

  int64_t in_ch_, out_ch_, k_, stride_;
  Parameter weight_;
  Tensor x_cache_;
};

class BatchNorm2d {
 public:
  BatchNorm2d(std::string name, int64_t channels)
      : name_(std::move(name)),
        channels_(channels),
        gamma_(name_ + ".gamma", ones(channels)),
        beta_(name_ + ".beta", Tensor({channels})),
        running_mean_({channels}),
        running_var_(ones(channels)) {}

  Tensor forward(const Tensor& x, bool training) {
    check_input(x);
    const int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = channels_;
    const int64_t per_sample = H * W * C;
    const int64_t N = B * H * W;
    Tensor y(x.shape());

    if (!training) {
      std::vector<double> scale(C), shift(C);
      for (int64_t c = 0; c < C; ++c) {
        double istd = 1.0 / std::sqrt(running_var_[c] + kEps);
        scale[c] = gamma_.value[c] * istd;
        shift[c] = beta_.value[c] - running_mean_[c] * scale[c];
      }
      parallel_for(0, B, [&](int64_t b) {
        const double* xb = x.data() + b * per_sample;
        double* yb = y.data() + b * per_sample;
        for (int64_t i = 0; i < per_sample; ++i) {
          int64_t c = i % C;
          yb[i] = xb[i] * scale[c] + shift[c];
        }
      });
      return y;
    }

    std::vector<double> sums(static_cast<size_t>(B) * C, 0.0);
    std::vector<double> sqsums(static_cast<size_t>(B) * C, 0.0);
    parallel_for(0, B, [&](int64_t b) {
      const double* xb = x.data() + b * per_sample;
      double* s = sums.data() + b * C;
      double* q = sqsums.data() + b * C;
      for (int64_t i = 0; i < per_sample; ++i) {
        int64_t c = i % C;
        s[c] += xb[i];
        q[c] += xb[i] * xb[i];
      }
    });
    mean_.assign(C, 0.0);
    inv_std_.assign(C, 0.0);
    std::vector<double> var(C, 0.0);
    for (int64_t b = 0; b < B; ++b)
      for (int64_t c = 0; c < C; ++c) {
        mean_[c] += sums[b * C + c];
        var[c] += sqsums[b * C + c];
      }
    for (int64_t c = 0; c < C; ++c) {
      mean_[c] /= static_cast<double>(N);
      var[c] = var[c] / static_cast<double>(N) - mean_[c] * mean_[c];
      if (var[c] < 0) var[c] = 0;  // round-off guard
      inv_std_[c] = 1.0 / std::sqrt(var[c] + kEps);
      running_mean_[c] =
          (1.0 - kMomentum) * running_mean_[c] + kMomentum * mean_[c];
      running_var_[c] =
          (1.0 - kMomentum) * running_var_[c] + kMomentum * var[c];
    }

    xhat_ = Tensor(x.shape());
    parallel_for(0, B, [&](int64_t b) {
      const double* xb = x.data() + b * per_sample;
      double* hb = xhat_.data() + b * per_sample;
      double* yb = y.data() + b * per_sample;
      for (int64_t i = 0; i < per_sample; ++i) {
        int64_t c = i % C;
        hb[i] = (xb[i] - mean_[c]) * inv_std_[c];
        yb[i] = gamma_.value[c] * hb[i] + beta_.value[c];
      }
    });
    batch_n_ = N;
    return y;
  }

  Tensor backward(const Tensor& dy) {
    SPE_CHECK(xhat_.numel() > 0, "BatchNorm2d: backward before forward");
    const int64_t B = dy.dim(0), H = dy.dim(1), W = dy.dim(2), C = channels_;
    const int64_t per_sample = H * W * C;
    const double N = static_cast<double>(batch_n_);

    std::vector<double> sum_dy_slots(static_cast<size_t>(B) * C, 0.0);
    std::vector<double> sum_dyh_slots(static_cast<size_t>(B) * C, 0.0);
    parallel_for(0, B, [&](int64_t b) {
      const double* db = dy.data() + b * per_sample;
      const double* hb = xhat_.data() + b * per_sample;
      double* s = sum_dy_slots.data() + b * C;
      double* q = sum_dyh_slots.data() + b * C;
      for (int64_t i = 0; i < per_sample; ++i) {
        int64_t c = i % C;
        s[c] += db[i];
        q[c] += db[i] * hb[i];
      }
    });
    std::vector<double> sum_dy(C, 0.0), sum_dyh(C, 0.0);
    for (int64_t b = 0; b < B; ++b)
      for (int64_t c = 0; c < C; ++c) {
        sum_dy[c] += sum_dy_slots[b * C + c];
        sum_dyh[c] += sum_dyh_slots[b * C + c];
      }
    for (int64_t c = 0; c < C; ++c) {
      beta_.grad[c] += sum_dy[c];
      gamma_.grad[c] += sum_dyh[c];
    }

    Tensor dx(dy.shape());
    parallel_for(0, B, [&](int64_t b) {
      const double* db = dy.data() + b * per_sample;
      const double* hb = xhat_.data() + b * per_sample;
      double* ob = dx.data() + b * per_sample;
      for (int64_t i = 0; i < per_sample; ++i) {
        int64_t c = i % C;
        ob[i] = gamma_.value[c] * inv_std_[c] *
                (db[i] - sum_dy[c] / N - hb[i] * sum_dyh[c] / N);
      }
    });
    return dx;
  }

  void collect_params(ParamRefs& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }

  void collect_buffers(std::vector<std::pair<std::string, Tensor*>>& out) {
    out.emplace_back(name_ + ".running_mean", &running_mean_);
    out.emplace_back(name_ + ".running_var", &running_var_);
  }

  Tensor& running_mean() { return running_mean_; }
  Tensor& running_var() { return running_var_; }
  Parameter& gamma() { return gamma_; }
  Parameter& beta() { return beta_; }

  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

 private:
  void check_input(const Tensor& x) const {
    SPE_CHECK(x.ndim() == 4 && x.dim(3) == channels_,
              "BatchNorm2d '" << gamma_.name << "': expected [B,H,W,"
                              << channels_ << "], got "
                              << shape_str(x.shape()));
  }

  static Tensor ones(int64_t n) {
    Tensor t({n});
    t.fill(1.0);
    return t;
  }

  std::string name_;
  int64_t channels_;
  Parameter gamma_, beta_;
  Tensor running_mean_, running_var_;
  // training-mode caches
  std::vector<double> mean_, inv_std_;
  Tensor xhat_;
  int64_t batch_n_ = 0;
};

class ReLU {
 public:
  Tensor forward(const Tensor& x, bool training) {
    Tensor y(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > 0 ? x[i] : 0.0;
    if (training) y_cache_ = y;
    return y;
  }

  Tensor backward(const Tensor& dy) {
    SPE_CHECK(y_cache_.numel() == dy.numel(),
              "ReLU: backward shape mismatch");
    Tensor dx(dy.shape());
    for (int64_t i = 0; i < dy.numel(); ++i)
      dx[i] = y_cache_[i] > 0 ? dy[i] : 0.0;
    return dx;
  }

 private:
  Tensor y_cache_;
};

class Linear {
 public:
  Linear(std::string name, int64_t in_dim, int64_t out_dim, Rng& rng)
      : in_dim_(in_dim), out_dim_(out_dim) {
    Tensor w({out_dim, in_dim});
    double std = std::sqrt(2.0 / static_cast<double>(in_dim));
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = std * rng.gaussian();
    weight_ = Parameter(name + ".weight", std::move(w));
    bias_ = Parameter(name + ".bias", Tensor({out_dim}));
  }

  // x: [B, in] -> [B, out]
  Tensor forward(const Tensor& x, bool training) {
    SPE_CHECK(x.ndim() == 2 && x.dim(1) == in_dim_,
              "Linear '" << weight_.name << "': expected [B," << in_dim_
                         << "], got " << shape_str(x.shape()));
    const int64_t B = x.dim(0);
    Tensor y({B, out_dim_});
    matmul(x.data(), weight_.value.data(), y.data(), B, in_dim_, out_dim_,
           false, /*trans_b=*/true);
    for (int64_t b = 0; b < B; ++b)
      for (int64_t o = 0; o < out_dim_; ++o) y(b, o) += bias_.value[o];
    if (training) x_cache_ = x;
    return y;
  }

  Tensor backward(const Tensor& dy) {
    SPE_CHECK(x_cache_.numel() > 0, "Linear: backward before forward");
    const int64_t B = dy.dim(0);
    matmul(dy.data(), x_cache_.data(), weight_.grad.data(), out_dim_, B,
           in_dim_, /*trans_a=*/true, false, /*accumulate=*/true);
    for (int64_t b = 0; b < B; ++b)
      for (int64_t o = 0; o < out_dim_; ++o) bias_.grad[o] += dy(b, o);
    Tensor dx({B, in_dim_});
    matmul(dy.data(), weight_.value.data(), dx.data(), B, out_dim_, in_dim_);
    return dx;
  }

  void collect_params(ParamRefs& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }
  int64_t in_dim() const { return in_dim_; }
  int64_t out_dim() const { return out_dim_; }

 private:
  int64_t in_dim_, out_dim_;
  Parameter weight_, bias_;
  Tensor x_cache_;
};

}  // namespace spe

#endif  // SPE_NN_HPP_
