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

#ifndef SPE_POOLING_HPP_
#define SPE_POOLING_HPP_

#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "spe/nn.hpp"

namespace spe {

// Learned dictionary: C codewords in D dimensions plus one smoothing
// factor per codeword. Positivity of the smoothing factors comes from a
// softplus reparameterization; the raw values are what the optimizer sees.
struct Codebook {
  Parameter mu;     // {C, D}
  Parameter s_raw;  // {C}

  Codebook(const std::string& name, int64_t C, int64_t D, Rng& rng)
      : mu(name + ".mu", Tensor({C, D})), s_raw(name + ".s_raw", Tensor({C})) {
    SPE_CHECK(C >= 1, "Codebook: need at least one codeword");
    double bound = 1.0 / std::sqrt(static_cast<double>(D));
    for (int64_t i = 0; i < mu.value.numel(); ++i)
      mu.value[i] = rng.uniform(-bound, bound);
    // s_raw = 0 means s = softplus(0) = ln 2.
  }

  int64_t num_codewords() const { return mu.value.dim(0); }
  int64_t dim() const { return mu.value.dim(1); }

  double smoothing(int64_t c) const { return softplus(s_raw.value[c]); }

  std::vector<double> smoothing_all() const {
    std::vector<double> s(static_cast<size_t>(num_codewords()));
    for (int64_t c = 0; c < num_codewords(); ++c) s[c] = smoothing(c);
    return s;
  }

  void set_smoothing(int64_t c, double s) {
    s_raw.value[c] = softplus_inverse(s);
  }

  void collect_params(ParamRefs& out) {
    out.push_back(&mu);
    out.push_back(&s_raw);
  }
};

// Pyramid of (rows x cols) grids over the feature map. The default is the
// 1-D pyramid {1x1, 1x4}; the 2-D variant {1x1, 2x2} splits the frequency
// axis as well.
struct PyramidSpec {
  std::vector<std::pair<int, int>> levels;

  static PyramidSpec one_level() { return {{{1, 1}}}; }
  static PyramidSpec one_d() { return {{{1, 1}, {1, 4}}}; }
  static PyramidSpec two_d() { return {{{1, 1}, {2, 2}}}; }

  int total_bins() const {
    int n = 0;
    for (auto& l : levels) n += l.first * l.second;
    return n;
  }

  void validate() const {
    SPE_CHECK(!levels.empty(), "PyramidSpec: no levels");
    for (auto& l : levels)
      SPE_CHECK(l.first >= 1 && l.second >= 1,
                "PyramidSpec: grid extents must be >= 1, got " << l.first
                                                               << "x"
                                                               << l.second);
  }
};

struct BinRange {
  int64_t h0, h1, w0, w1;  // half-open
  int64_t height() const { return h1 - h0; }
  int64_t width() const { return w1 - w0; }
  int64_t count() const { return height() * width(); }
};

namespace pooldetail {

// Splits n into k contiguous bins whose sizes differ by at most one, with
// the remainder going to the leftmost bins.
inline std::vector<std::pair<int64_t, int64_t>> split_extent(int64_t n,
                                                             int64_t k) {
  SPE_CHECK(n >= k, "spd_partition: cannot divide extent " << n << " into "
                                                           << k
                                                           << " non-empty bins");
  std::vector<std::pair<int64_t, int64_t>> ranges;
  ranges.reserve(static_cast<size_t>(k));
  int64_t base = n / k, rem = n % k, pos = 0;
  for (int64_t i = 0; i < k; ++i) {
    int64_t len = base + (i < rem ? 1 : 0);
    ranges.emplace_back(pos, pos + len);
    pos += len;
  }
  return ranges;
}

}  // namespace pooldetail

inline std::vector<BinRange> spd_bin_ranges(int64_t H, int64_t W,
                                            const PyramidSpec& spec) {
  spec.validate();
  std::vector<BinRange> bins;
  for (auto& level : spec.levels) {
    auto rows = pooldetail::split_extent(H, level.first);
    auto cols = pooldetail::split_extent(W, level.second);
    for (auto& r : rows)
      for (auto& c : cols)
        bins.push_back({r.first, r.second, c.first, c.second});
  }
  return bins;
}

// Spec-facing form: materializes the sub-maps of a single [H, W, D] map.
inline std::vector<Tensor> spd_partition(const Tensor& map,
                                         const PyramidSpec& spec) {
  SPE_CHECK(map.ndim() == 3, "spd_partition: expected [H,W,D] map, got "
                                 << shape_str(map.shape()));
  const int64_t H = map.dim(0), W = map.dim(1), D = map.dim(2);
  std::vector<Tensor> out;
  for (const auto& bin : spd_bin_ranges(H, W, spec)) {
    Tensor sub({bin.height(), bin.width(), D});
    for (int64_t h = bin.h0; h < bin.h1; ++h)
      for (int64_t w = bin.w0; w < bin.w1; ++w)
        for (int64_t d = 0; d < D; ++d)
          sub(h - bin.h0, w - bin.w0, d) = map(h, w, d);
    out.push_back(std::move(sub));
  }
  return out;
}

// Temporal average pooling of one [H, W, D] map: the mean over all
// positions, per channel.
inline Tensor tap_forward(const Tensor& map) {
  SPE_CHECK(map.ndim() == 3 && map.numel() > 0,
            "tap_forward: expected non-empty [H,W,D] map");
  const int64_t L = map.dim(0) * map.dim(1), D = map.dim(2);
  Tensor out({D});
  const double* x = map.data();
  for (int64_t t = 0; t < L; ++t)
    for (int64_t d = 0; d < D; ++d) out[d] += x[t * D + d];
  out.scale(1.0 / static_cast<double>(L));
  return out;
}

// ---------------------------------------------------------------------------
// LDE core. Treats an L x D feature set against the codebook:
//   w_tc = softmax_c(-s_c * ||x_t - mu_c||^2)
//   e_c  = (1/L) * sum_t w_tc * (x_t - mu_c)
// The division is by L, exactly as written, not by the weight mass.
// ---------------------------------------------------------------------------

struct LdeForwardResult {
  Tensor encodings;  // {C, D}
  Tensor weights;    // {L, C}
  Tensor sqdist;     // {L, C}
};

inline LdeForwardResult lde_core_forward(const double* X, int64_t L, int64_t D,
                                         const Codebook& cb) {
  const int64_t C = cb.num_codewords();
  SPE_CHECK(cb.dim() == D, "lde: feature dim " << D
                                               << " does not match codebook dim "
                                               << cb.dim());
  SPE_CHECK(L >= 1, "lde: need at least one feature vector");
  LdeForwardResult res;
  res.weights = Tensor({L, C});
  res.sqdist = Tensor({L, C});
  res.encodings = Tensor({C, D});

  std::vector<double> s = cb.smoothing_all();
  const double* mu = cb.mu.value.data();

  // ||x - mu||^2 = ||x||^2 - 2 x.mu + ||mu||^2 via one GEMM.
  std::vector<double> xsq(static_cast<size_t>(L)), musq(static_cast<size_t>(C));
  for (int64_t t = 0; t < L; ++t) {
    double acc = 0;
    for (int64_t d = 0; d < D; ++d) acc += X[t * D + d] * X[t * D + d];
    xsq[t] = acc;
  }
  for (int64_t c = 0; c < C; ++c) {
    double acc = 0;
    for (int64_t d = 0; d < D; ++d) acc += mu[c * D + d] * mu[c * D + d];
    musq[c] = acc;
  }
  matmul(X, mu, res.sqdist.data(), L, D, C, false, /*trans_b=*/true);
  for (int64_t t = 0; t < L; ++t) {
    for (int64_t c = 0; c < C; ++c) {
      double d2 = xsq[t] - 2.0 * res.sqdist(t, c) + musq[c];
      res.sqdist(t, c) = d2 > 0 ? d2 : 0.0;
    }
  }

  // Softmax over codewords with max subtraction.
  for (int64_t t = 0; t < L; ++t) {
    double zmax = -std::numeric_limits<double>::infinity();
    for (int64_t c = 0; c < C; ++c)
      zmax = std::max(zmax, -s[c] * res.sqdist(t, c));
    double total = 0;
    for (int64_t c = 0; c < C; ++c) {
      double e = std::exp(-s[c] * res.sqdist(t, c) - zmax);
      res.weights(t, c) = e;
      total += e;
    }
    for (int64_t c = 0; c < C; ++c) res.weights(t, c) /= total;
  }

  // e_c = (1/L) [ (W^T X)_c - colsum_c(W) * mu_c ].
  matmul(res.weights.data(), X, res.encodings.data(), C, L, D,
         /*trans_a=*/true);
  for (int64_t c = 0; c < C; ++c) {
    double wsum = 0;
    for (int64_t t = 0; t < L; ++t) wsum += res.weights(t, c);
    for (int64_t d = 0; d < D; ++d) {
      res.encodings(c, d) =
          (res.encodings(c, d) - wsum * mu[c * D + d]) / static_cast<double>(L);
    }
  }
  return res;
}

// Gradients of the LDE core w.r.t. features, codewords and raw smoothing
// parameters given the upstream gradient on the encodings. dX is written,
// dmu/dsraw accumulate.
inline void lde_core_backward(const double* X, int64_t L, int64_t D,
                              const Codebook& cb, const LdeForwardResult& fwd,
                              const double* d_enc, double* dX, Tensor* dmu,
                              Tensor* dsraw) {
  const int64_t C = cb.num_codewords();
  const double invL = 1.0 / static_cast<double>(L);
  std::vector<double> s = cb.smoothing_all();
  const double* mu = cb.mu.value.data();
  const double* W = fwd.weights.data();

  // a_tc = (1/L) g_c . (x_t - mu_c)
  Tensor A({L, C});
  matmul(X, d_enc, A.data(), L, D, C, false, /*trans_b=*/true);
  std::vector<double> gmu(static_cast<size_t>(C));
  for (int64_t c = 0; c < C; ++c) {
    double acc = 0;
    for (int64_t d = 0; d < D; ++d) acc += d_enc[c * D + d] * mu[c * D + d];
    gmu[c] = acc;
  }
  for (int64_t t = 0; t < L; ++t)
    for (int64_t c = 0; c < C; ++c) A(t, c) = invL * (A(t, c) - gmu[c]);

  // Softmax backward: b_tc = w_tc * (a_tc - sum_m w_tm a_tm); then fold in
  // the smoothing factors, q_tc = s_c * b_tc.
  Tensor Q({L, C});
  std::vector<double> ds(static_cast<size_t>(C), 0.0);
  for (int64_t t = 0; t < L; ++t) {
    double st = 0;
    for (int64_t c = 0; c < C; ++c) st += W[t * C + c] * A(t, c);
    for (int64_t c = 0; c < C; ++c) {
      double b = W[t * C + c] * (A(t, c) - st);
      Q(t, c) = s[c] * b;
      ds[c] -= fwd.sqdist(t, c) * b;
    }
  }

  // dX = (1/L) W G - 2 diag(rowsum Q) X + 2 Q Mu.
  matmul(W, d_enc, dX, L, C, D);
  for (int64_t i = 0; i < L * D; ++i) dX[i] *= invL;
  {
    Tensor qmu({L, D});
    matmul(Q.data(), mu, qmu.data(), L, C, D);
    for (int64_t t = 0; t < L; ++t) {
      double rq = 0;
      for (int64_t c = 0; c < C; ++c) rq += Q(t, c);
      for (int64_t d = 0; d < D; ++d)
        dX[t * D + d] += 2.0 * (qmu(t, d) - rq * X[t * D + d]);
    }
  }

  // dmu_c = -(1/L) colsum_c(W) g_c + 2 (Q^T X)_c - 2 colsum_c(Q) mu_c.
  Tensor qtx({C, D});
  matmul(Q.data(), X, qtx.data(), C, L, D, /*trans_a=*/true);
  for (int64_t c = 0; c < C; ++c) {
    double wsum = 0, qsum = 0;
    for (int64_t t = 0; t < L; ++t) {
      wsum += W[t * C + c];
      qsum += Q(t, c);
    }
    for (int64_t d = 0; d < D; ++d) {
      dmu->data()[c * D + d] += -invL * wsum * d_enc[c * D + d] +
                                2.0 * qtx(c, d) - 2.0 * qsum * mu[c * D + d];
    }
    dsraw->data()[c] += ds[c] * sigmoid(cb.s_raw.value[c]);
  }
}

// Spec-facing forms over an L x D feature set.
inline Tensor lde_assign_weights(const Tensor& X, const Codebook& cb) {
  SPE_CHECK(X.ndim() == 2, "lde_assign_weights: expected [L,D] features");
  return lde_core_forward(X.data(), X.dim(0), X.dim(1), cb).weights;
}

inline Tensor lde_forward(const Tensor& X, const Codebook& cb) {
  SPE_CHECK(X.ndim() == 2, "lde_forward: expected [L,D] features");
  auto res = lde_core_forward(X.data(), X.dim(0), X.dim(1), cb);
  return res.encodings.reshaped({cb.num_codewords() * cb.dim()});
}

// ---------------------------------------------------------------------------
// Pooling heads. All map a [B, H, W, D] feature map batch to a fixed-size
// [B, E] embedding batch and support backprop into the map and their own
// parameters.
// ---------------------------------------------------------------------------

class PoolingHead {
 public:
  virtual ~PoolingHead() = default;
  virtual Tensor forward(const Tensor& map, bool training) = 0;
  virtual Tensor backward(const Tensor& d_emb) = 0;
  virtual void collect_params(ParamRefs& out) { (void)out; }
  virtual int64_t out_dim() const = 0;
  virtual std::string kind() const = 0;

  // Convenience for a single [H, W, D] map.
  Tensor forward_single(const Tensor& map) {
    SPE_CHECK(map.ndim() == 3, "forward_single: expected [H,W,D] map");
    Tensor batched = map.reshaped({1, map.dim(0), map.dim(1), map.dim(2)});
    Tensor out = forward(batched, /*training=*/false);
    return out.reshaped({out.dim(1)});
  }
};

class TapHead : public PoolingHead {
 public:
  explicit TapHead(int64_t d_in) : d_in_(d_in) {}

  Tensor forward(const Tensor& map, bool training) override {
    (void)training;
    check_map(map, d_in_);
    const int64_t B = map.dim(0), L = map.dim(1) * map.dim(2), D = d_in_;
    H_ = map.dim(1);
    W_ = map.dim(2);
    Tensor out({B, D});
    for (int64_t b = 0; b < B; ++b) {
      const double* x = map.data() + b * L * D;
      double* o = out.data() + b * D;
      for (int64_t t = 0; t < L; ++t)
        for (int64_t d = 0; d < D; ++d) o[d] += x[t * D + d];
      for (int64_t d = 0; d < D; ++d) o[d] /= static_cast<double>(L);
    }
    return out;
  }

  Tensor backward(const Tensor& d_emb) override {
    const int64_t B = d_emb.dim(0), L = H_ * W_, D = d_in_;
    Tensor dmap({B, H_, W_, D});
    for (int64_t b = 0; b < B; ++b) {
      const double* g = d_emb.data() + b * D;
      double* o = dmap.data() + b * L * D;
      for (int64_t t = 0; t < L; ++t)
        for (int64_t d = 0; d < D; ++d)
          o[t * D + d] = g[d] / static_cast<double>(L);
    }
    return dmap;
  }

  int64_t out_dim() const override { return d_in_; }
  std::string kind() const override { return "tap"; }

  static void check_map(const Tensor& map, int64_t d_in) {
    SPE_CHECK(map.ndim() == 4 && map.dim(3) == d_in,
              "pooling: expected [B,H,W," << d_in << "] map, got "
                                          << shape_str(map.shape()));
  }

 private:
  int64_t d_in_;
  int64_t H_ = 0, W_ = 0;
};

// Spatial pyramid pooling: average per bin, concatenate, project.
class SppHead : public PoolingHead {
 public:
  SppHead(int64_t d_in, PyramidSpec spec, int64_t embed_dim, Rng& rng)
      : d_in_(d_in),
        spec_(std::move(spec)),
        fc_("pooling.spp.fc", d_in * spec_.total_bins(), embed_dim, rng) {
    spec_.validate();
  }

  Tensor forward(const Tensor& map, bool training) override {
    TapHead::check_map(map, d_in_);
    const int64_t B = map.dim(0);
    H_ = map.dim(1);
    W_ = map.dim(2);
    bins_ = spd_bin_ranges(H_, W_, spec_);
    const int64_t nb = static_cast<int64_t>(bins_.size());
    Tensor pooled({B, nb * d_in_});
    for (int64_t b = 0; b < B; ++b) {
      const double* x = map.data() + b * H_ * W_ * d_in_;
      for (int64_t i = 0; i < nb; ++i) {
        const BinRange& bin = bins_[static_cast<size_t>(i)];
        double* o = pooled.data() + b * nb * d_in_ + i * d_in_;
        for (int64_t h = bin.h0; h < bin.h1; ++h)
          for (int64_t w = bin.w0; w < bin.w1; ++w) {
            const double* p = x + (h * W_ + w) * d_in_;
            for (int64_t d = 0; d < d_in_; ++d) o[d] += p[d];
          }
        for (int64_t d = 0; d < d_in_; ++d)
          o[d] /= static_cast<double>(bin.count());
      }
    }
    return fc_.forward(pooled, training);
  }

  Tensor backward(const Tensor& d_emb) override {
    Tensor dpooled = fc_.backward(d_emb);
    const int64_t B = dpooled.dim(0);
    const int64_t nb = static_cast<int64_t>(bins_.size());
    Tensor dmap({B, H_, W_, d_in_});
    for (int64_t b = 0; b < B; ++b) {
      double* dx = dmap.data() + b * H_ * W_ * d_in_;
      for (int64_t i = 0; i < nb; ++i) {
        const BinRange& bin = bins_[static_cast<size_t>(i)];
        const double* g = dpooled.data() + b * nb * d_in_ + i * d_in_;
        double scale = 1.0 / static_cast<double>(bin.count());
        for (int64_t h = bin.h0; h < bin.h1; ++h)
          for (int64_t w = bin.w0; w < bin.w1; ++w) {
            double* p = dx + (h * W_ + w) * d_in_;
            for (int64_t d = 0; d < d_in_; ++d) p[d] += scale * g[d];
          }
      }
    }
    return dmap;
  }

  void collect_params(ParamRefs& out) override { fc_.collect_params(out); }
  int64_t out_dim() const override { return fc_.out_dim(); }
  std::string kind() const override { return "spp"; }
  Linear& fc() { return fc_; }
  const PyramidSpec& spec() const { return spec_; }

 private:
  int64_t d_in_;
  PyramidSpec spec_;
  Linear fc_;
  int64_t H_ = 0, W_ = 0;
  std::vector<BinRange> bins_;
};

// Dictionary encoding over the whole map: the supervector of weighted
// residuals, projected to the embedding size.
class LdeHead : public PoolingHead {
 public:
  LdeHead(int64_t d_in, int64_t codewords, int64_t embed_dim, Rng& rng)
      : d_in_(d_in),
        cb_("pooling.lde", codewords, d_in, rng),
        fc_("pooling.lde.fc", codewords * d_in, embed_dim, rng) {}

  Tensor forward(const Tensor& map, bool training) override {
    TapHead::check_map(map, d_in_);
    const int64_t B = map.dim(0), L = map.dim(1) * map.dim(2);
    H_ = map.dim(1);
    W_ = map.dim(2);
    const int64_t sv = cb_.num_codewords() * d_in_;
    Tensor supervec({B, sv});
    fwd_.assign(static_cast<size_t>(B), {});
    if (training) map_cache_ = map;
    for (int64_t b = 0; b < B; ++b) {
      auto res = lde_core_forward(map.data() + b * L * d_in_, L, d_in_, cb_);
      std::memcpy(supervec.data() + b * sv, res.encodings.data(),
                  sizeof(double) * sv);
      if (training) fwd_[static_cast<size_t>(b)] = std::move(res);
    }
    return fc_.forward(supervec, training);
  }

  Tensor backward(const Tensor& d_emb) override {
    Tensor dsv = fc_.backward(d_emb);
    const int64_t B = dsv.dim(0), L = H_ * W_;
    Tensor dmap({B, H_, W_, d_in_});
    for (int64_t b = 0; b < B; ++b) {
      lde_core_backward(map_cache_.data() + b * L * d_in_, L, d_in_, cb_,
                        fwd_[static_cast<size_t>(b)],
                        dsv.data() + b * dsv.dim(1),
                        dmap.data() + b * L * d_in_, &cb_.mu.grad,
                        &cb_.s_raw.grad);
    }
    return dmap;
  }

  void collect_params(ParamRefs& out) override {
    cb_.collect_params(out);
    fc_.collect_params(out);
  }
  int64_t out_dim() const override { return fc_.out_dim(); }
  std::string kind() const override { return "lde"; }
  Codebook& codebook() { return cb_; }

 private:
  int64_t d_in_;
  Codebook cb_;
  Linear fc_;
  int64_t H_ = 0, W_ = 0;
  Tensor map_cache_;
  std::vector<LdeForwardResult> fwd_;
};

// Spatial pyramid encoding: a shared 1x1 channel-reduction conv, a shared
// codebook applied to every pyramid bin, per-bin supervector
// L2-normalization and a shared projection, then one more FC over the
// concatenated bin embeddings. Because the 1x1 conv is pointwise and its
// weights are shared across bins, applying it once to the whole map is the
// same operation as applying it per bin.
class SpeHead : public PoolingHead {
 public:
  SpeHead(int64_t d_in, PyramidSpec spec, int64_t codewords,
          int64_t reduced_ch, int64_t embed_dim, Rng& rng)
      : d_in_(d_in),
        dr_(reduced_ch),
        spec_(std::move(spec)),
        reduce_("pooling.spe.reduce", d_in, reduced_ch, 1, 1, rng),
        cb_("pooling.spe", codewords, reduced_ch, rng),
        bin_fc_("pooling.spe.bin_fc", codewords * reduced_ch, embed_dim, rng),
        out_fc_("pooling.spe.out_fc", embed_dim * spec_.total_bins(),
                embed_dim, rng) {
    spec_.validate();
  }

  Tensor forward(const Tensor& map, bool training) override {
    TapHead::check_map(map, d_in_);
    const int64_t B = map.dim(0);
    H_ = map.dim(1);
    W_ = map.dim(2);
    bins_ = spd_bin_ranges(H_, W_, spec_);
    const int64_t nb = static_cast<int64_t>(bins_.size());
    const int64_t sv = cb_.num_codewords() * dr_;

    red_cache_ = reduce_.forward(map, training);
    fwd_.assign(static_cast<size_t>(B * nb), {});
    norms_.assign(static_cast<size_t>(B * nb), 0.0);
    xbins_.assign(static_cast<size_t>(B * nb), {});

    // Rows are (sample, bin) pairs so the shared per-bin FC runs as one
    // matrix product.
    Tensor normed({B * nb, sv});
    for (int64_t b = 0; b < B; ++b) {
      for (int64_t i = 0; i < nb; ++i) {
        int64_t row = b * nb + i;
        Tensor xbin = gather_bin(red_cache_, b, bins_[static_cast<size_t>(i)]);
        auto res = lde_core_forward(xbin.data(), xbin.dim(0), dr_, cb_);
        double norm = res.encodings.l2_norm();
        norms_[static_cast<size_t>(row)] = norm;
        double inv = 1.0 / std::max(norm, kNormFloor);
        double* dst = normed.data() + row * sv;
        for (int64_t j = 0; j < sv; ++j) dst[j] = res.encodings[j] * inv;
        if (training) {
          fwd_[static_cast<size_t>(row)] = std::move(res);
          xbins_[static_cast<size_t>(row)] = std::move(xbin);
        }
      }
    }

    Tensor bin_emb = bin_fc_.forward(normed, training);  // [B*nb, E]
    Tensor concat = bin_emb.reshaped({B, nb * bin_fc_.out_dim()});
    return out_fc_.forward(concat, training);
  }

  Tensor backward(const Tensor& d_emb) override {
    const int64_t B = d_emb.dim(0);
    const int64_t nb = static_cast<int64_t>(bins_.size());
    const int64_t sv = cb_.num_codewords() * dr_;

    Tensor dconcat = out_fc_.backward(d_emb);
    Tensor dbin_emb = dconcat.reshaped({B * nb, bin_fc_.out_dim()});
    Tensor dnormed = bin_fc_.backward(dbin_emb);  // [B*nb, sv]

    Tensor dred({B, H_, W_, dr_});
    std::vector<double> denc(static_cast<size_t>(sv));
    for (int64_t b = 0; b < B; ++b) {
      for (int64_t i = 0; i < nb; ++i) {
        int64_t row = b * nb + i;
        const auto& res = fwd_[static_cast<size_t>(row)];
        const double* dn = dnormed.data() + row * sv;
        const double* enc = res.encodings.data();
        double norm = norms_[static_cast<size_t>(row)];
        // Backward through v = enc / max(||enc||, floor).
        if (norm > kNormFloor) {
          double dot = 0;
          for (int64_t j = 0; j < sv; ++j) dot += dn[j] * enc[j];
          double inv = 1.0 / norm;
          double inv3 = inv * inv * inv;
          for (int64_t j = 0; j < sv; ++j)
            denc[static_cast<size_t>(j)] = dn[j] * inv - enc[j] * dot * inv3;
        } else {
          for (int64_t j = 0; j < sv; ++j)
            denc[static_cast<size_t>(j)] = dn[j] / kNormFloor;
        }
        const Tensor& xbin = xbins_[static_cast<size_t>(row)];
        Tensor dxbin({xbin.dim(0), dr_});
        lde_core_backward(xbin.data(), xbin.dim(0), dr_, cb_, res, denc.data(),
                          dxbin.data(), &cb_.mu.grad, &cb_.s_raw.grad);
        scatter_bin(dxbin, b, bins_[static_cast<size_t>(i)], &dred);
      }
    }
    return reduce_.backward(dred);
  }

  void collect_params(ParamRefs& out) override {
    reduce_.collect_params(out);
    cb_.collect_params(out);
    bin_fc_.collect_params(out);
    out_fc_.collect_params(out);
  }
  int64_t out_dim() const override { return out_fc_.out_dim(); }
  std::string kind() const override { return "spe"; }
  Codebook& codebook() { return cb_; }
  int64_t supervector_dim() const { return cb_.num_codewords() * dr_; }
  const PyramidSpec& spec() const { return spec_; }

  static constexpr double kNormFloor = 1e-12;

 private:
  static Tensor gather_bin(const Tensor& red, int64_t b, const BinRange& bin) {
    const int64_t W = red.dim(2), D = red.dim(3);
    Tensor x({bin.count(), D});
    int64_t row = 0;
    for (int64_t h = bin.h0; h < bin.h1; ++h)
      for (int64_t w = bin.w0; w < bin.w1; ++w, ++row)
        std::memcpy(x.data() + row * D,
                    red.data() + ((b * red.dim(1) + h) * W + w) * D,
                    sizeof(double) * D);
    return x;
  }

  static void scatter_bin(const Tensor& dxbin, int64_t b, const BinRange& bin,
                          Tensor* dred) {
    const int64_t W = dred->dim(2), D = dred->dim(3);
    int64_t row = 0;
    for (int64_t h = bin.h0; h < bin.h1; ++h)
      for (int64_t w = bin.w0; w < bin.w1; ++w, ++row) {
        double* dst = dred->data() + ((b * dred->dim(1) + h) * W + w) * D;
        const double* src = dxbin.data() + row * D;
        for (int64_t d = 0; d < D; ++d) dst[d] += src[d];
      }
  }

  int64_t d_in_, dr_;
  PyramidSpec spec_;
  Conv2d reduce_;
  Codebook cb_;
  Linear bin_fc_;
  Linear out_fc_;
  int64_t H_ = 0, W_ = 0;
  std::vector<BinRange> bins_;
  Tensor red_cache_;
  std::vector<LdeForwardResult> fwd_;
  std::vector<Tensor> xbins_;
  std::vector<double> norms_;
};

}  // namespace spe

#endif  // SPE_POOLING_HPP_
