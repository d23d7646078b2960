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

#ifndef SPE_SYNTHETIC_HPP_
#define SPE_SYNTHETIC_HPP_

#include <cstdio>
#include <string>
#include <vector>

#include "spe/features.hpp"

namespace spe {

struct LabeledUtterance {
  std::string id;       // "<speaker>_utt<NNN>"; speaker is the part before '_'
  int speaker = 0;
  Tensor features;      // 64 x T
};

// Desk-scale stand-in for a real corpus. Each speaker is a fixed 64-dim
// mean template plus a spectral tilt; utterances add a per-utterance
// offset and AR(1) noise that is correlated along time. Utterance length
// is uniform in [300, 500] frames. Fully determined by the seed.
inline std::vector<LabeledUtterance> generate_synthetic_speakers(
    int n_speakers, int utts_per_speaker, uint64_t seed) {
  SPE_CHECK(n_speakers >= 1, "generate_synthetic_speakers: n_speakers >= 1");
  SPE_CHECK(utts_per_speaker >= 1,
            "generate_synthetic_speakers: utts_per_speaker >= 1");

  constexpr double kTemplateStd = 2.0;   // between-speaker spread
  constexpr double kTiltStd = 1.0;
  constexpr double kUttOffsetStd = 0.3;  // within-speaker spread
  constexpr double kNoiseStd = 1.0;
  constexpr double kArCoeff = 0.9;
  constexpr int64_t kMinFrames = 300;
  constexpr int64_t kMaxFrames = 500;

  Rng rng(seed);
  std::vector<LabeledUtterance> out;
  out.reserve(static_cast<size_t>(n_speakers) * utts_per_speaker);

  std::vector<double> tilt_basis(kNumMels);
  for (int m = 0; m < kNumMels; ++m)
    tilt_basis[m] = -1.0 + 2.0 * m / (kNumMels - 1);

  char id_buf[64];
  for (int spk = 0; spk < n_speakers; ++spk) {
    std::vector<double> base(kNumMels);
    double tilt = kTiltStd * rng.gaussian();
    for (int m = 0; m < kNumMels; ++m)
      base[m] = kTemplateStd * rng.gaussian() + tilt * tilt_basis[m];

    for (int u = 0; u < utts_per_speaker; ++u) {
      int64_t T = rng.uniform_int(kMinFrames, kMaxFrames);
      LabeledUtterance utt;
      std::snprintf(id_buf, sizeof(id_buf), "spk%03d_utt%03d", spk, u);
      utt.id = id_buf;
      utt.speaker = spk;
      utt.features = Tensor({kNumMels, T});

      std::vector<double> offset(kNumMels), ar(kNumMels);
      for (int m = 0; m < kNumMels; ++m) {
        offset[m] = kUttOffsetStd * rng.gaussian();
        ar[m] = kNoiseStd * rng.gaussian();  // stationary-ish start
      }
      double innov = std::sqrt(1.0 - kArCoeff * kArCoeff) * kNoiseStd;
      for (int64_t t = 0; t < T; ++t) {
        for (int m = 0; m < kNumMels; ++m) {
          if (t > 0) ar[m] = kArCoeff * ar[m] + innov * rng.gaussian();
          utt.features(m, t) = base[m] + offset[m] + ar[m];
        }
      }
      out.push_back(std::move(utt));
    }
  }
  return out;
}

inline std::string speaker_of_id(const std::string& utt_id) {
  auto pos = utt_id.find('_');
  SPE_CHECK(pos != std::string::npos && pos > 0,
            "speaker_of_id: utterance id '" << utt_id
                                            << "' has no '<speaker>_' prefix");
  return utt_id.substr(0, pos);
}

}  // namespace spe

#endif  // SPE_SYNTHETIC_HPP_
