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

#ifndef SPE_FEATURES_HPP_
#define SPE_FEATURES_HPP_

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "spe/tensor.hpp"
#include "spe/wav.hpp"

namespace spe {

// 64 log-Mel filterbank rows, one column per 25 ms frame at a 10 ms hop.
using FeatureMatrix = Tensor;  // shape {kNumMels, T}

constexpr int kNumMels = 64;
constexpr double kFrameLengthMs = 25.0;
constexpr double kFrameHopMs = 10.0;
constexpr double kLogEnergyFloor = 1e-10;
constexpr double kMeanNormWindowSec = 3.0;

inline void validate_feature_matrix(const Tensor& f, const std::string& what) {
  SPE_CHECK(f.ndim() == 2, what << ": feature matrix must be 2-D, got "
                                << shape_str(f.shape()));
  SPE_CHECK(f.dim(0) == kNumMels, what << ": expected " << kNumMels
                                       << " mel rows, got " << f.dim(0));
  f.check_finite(what);
}

namespace featdetail {

// In-place iterative radix-2 FFT; n must be a power of two.
inline void fft(std::vector<std::complex<double>>& a) {
  size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = -2.0 * M_PI / static_cast<double>(len);
    std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t j = 0; j < len / 2; ++j) {
        std::complex<double> u = a[i + j];
        std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

inline size_t next_pow2(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

inline double hz_to_mel(double hz) {
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}

inline double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

// 64 triangular filters on the HTK mel scale from 0 to Nyquist, with the
// triangles evaluated at the DFT bin center frequencies.
inline std::vector<std::vector<double>> mel_filterbank(int sample_rate,
                                                       size_t n_fft) {
  size_t n_bins = n_fft / 2 + 1;
  double mel_lo = hz_to_mel(0.0);
  double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(kNumMels + 2);
  for (int i = 0; i < kNumMels + 2; ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (kNumMels + 1));

  std::vector<std::vector<double>> fb(kNumMels,
                                      std::vector<double>(n_bins, 0.0));
  double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(n_fft);
  for (int m = 0; m < kNumMels; ++m) {
    double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    for (size_t k = 0; k < n_bins; ++k) {
      double f = bin_hz * static_cast<double>(k);
      double w = 0.0;
      if (f > left && f < right)
        w = (f <= center) ? (f - left) / (center - left)
                          : (right - f) / (right - center);
      fb[m][k] = w;
    }
  }
  return fb;
}

}  // namespace featdetail

inline int64_t fbank_num_frames(int64_t n_samples, int sample_rate) {
  int64_t frame_len =
      static_cast<int64_t>(std::lround(sample_rate * kFrameLengthMs / 1000.0));
  int64_t hop =
      static_cast<int64_t>(std::lround(sample_rate * kFrameHopMs / 1000.0));
  if (n_samples < frame_len) return 0;
  return (n_samples - frame_len) / hop + 1;
}

// Log-Mel filterbank features: 25 ms Hamming-windowed frames at a 10 ms
// hop, magnitude spectrum from a zero-padded radix-2 DFT, 64 triangular
// mel filters over [0, Nyquist], then ln(energy + 1e-10). Output is
// 64 x T. No pre-emphasis, no dithering.
inline FeatureMatrix compute_fbank(const Waveform& w) {
  validate_waveform(w, "compute_fbank");
  int64_t frame_len = static_cast<int64_t>(
      std::lround(w.sample_rate * kFrameLengthMs / 1000.0));
  int64_t hop =
      static_cast<int64_t>(std::lround(w.sample_rate * kFrameHopMs / 1000.0));
  int64_t n = static_cast<int64_t>(w.samples.size());
  SPE_CHECK(n >= frame_len, "compute_fbank: waveform has "
                                << n << " samples; minimum is one frame of "
                                << frame_len << " samples ("
                                << kFrameLengthMs << " ms)");
  int64_t n_frames = fbank_num_frames(n, w.sample_rate);

  size_t n_fft = featdetail::next_pow2(static_cast<size_t>(frame_len));
  size_t n_bins = n_fft / 2 + 1;
  auto fb = featdetail::mel_filterbank(w.sample_rate, n_fft);

  std::vector<double> window(frame_len);
  for (int64_t i = 0; i < frame_len; ++i)
    window[i] =
        0.54 - 0.46 * std::cos(2.0 * M_PI * i / static_cast<double>(frame_len - 1));

  Tensor out({kNumMels, n_frames});
  std::vector<std::complex<double>> spec(n_fft);
  std::vector<double> mag(n_bins);
  for (int64_t t = 0; t < n_frames; ++t) {
    int64_t start = t * hop;
    for (size_t i = 0; i < n_fft; ++i) {
      double s = (i < static_cast<size_t>(frame_len))
                     ? w.samples[start + i] * window[i]
                     : 0.0;
      spec[i] = {s, 0.0};
    }
    featdetail::fft(spec);
    for (size_t k = 0; k < n_bins; ++k) mag[k] = std::abs(spec[k]);
    for (int m = 0; m < kNumMels; ++m) {
      double energy = 0.0;
      for (size_t k = 0; k < n_bins; ++k) energy += fb[m][k] * mag[k];
      out(m, t) = std::log(energy + kLogEnergyFloor);
    }
  }
  return out;
}

// Sliding-window cepstral-style mean normalization. The window holds
// min(3 s, utterance length) frames, is centered on the current frame,
// and shifts (rather than shrinks) near the edges so interior and edge
// frames see the same amount of context.
inline FeatureMatrix sliding_mean_normalize(const FeatureMatrix& f,
                                            double window_s = kMeanNormWindowSec) {
  validate_feature_matrix(f, "sliding_mean_normalize");
  int64_t T = f.dim(1);
  int64_t wf = static_cast<int64_t>(
      std::lround(window_s * 1000.0 / kFrameHopMs));
  if (wf > T) wf = T;
  if (wf < 1) wf = 1;

  Tensor out({f.dim(0), T});
  // Prefix sums per mel row for O(1) window means.
  std::vector<double> prefix(static_cast<size_t>(T) + 1);
  for (int64_t m = 0; m < f.dim(0); ++m) {
    prefix[0] = 0.0;
    for (int64_t t = 0; t < T; ++t) prefix[t + 1] = prefix[t] + f(m, t);
    for (int64_t t = 0; t < T; ++t) {
      int64_t start = t - wf / 2;
      start = std::max<int64_t>(0, std::min(start, T - wf));
      double mean = (prefix[start + wf] - prefix[start]) / static_cast<double>(wf);
      out(m, t) = f(m, t) - mean;
    }
  }
  return out;
}

// Fits an utterance to target_T frames: a contiguous random crop when the
// utterance is longer, wrap-around tiling when it is shorter.
inline FeatureMatrix crop_or_extend(const FeatureMatrix& f, int64_t target_T,
                                    Rng& rng) {
  validate_feature_matrix(f, "crop_or_extend");
  SPE_CHECK(target_T >= 1, "crop_or_extend: target_T must be >= 1, got "
                               << target_T);
  int64_t T = f.dim(1);
  if (T == target_T) return f;
  Tensor out({f.dim(0), target_T});
  if (T > target_T) {
    int64_t start = rng.uniform_int(0, T - target_T);
    for (int64_t m = 0; m < f.dim(0); ++m)
      for (int64_t t = 0; t < target_T; ++t) out(m, t) = f(m, start + t);
  } else {
    for (int64_t m = 0; m < f.dim(0); ++m)
      for (int64_t t = 0; t < target_T; ++t) out(m, t) = f(m, t % T);
  }
  return out;
}

}  // namespace spe

#endif  // SPE_FEATURES_HPP_
