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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "spe/checkpoint.hpp"
#include "spe/trainer.hpp"

using namespace spe;

namespace {

// Small, fast dataset: utterances cut to a fixed frame count.
std::vector<LabeledUtterance> tiny_dataset(int n_speakers, int utts,
                                           uint64_t seed, int64_t frames) {
  auto data = generate_synthetic_speakers(n_speakers, utts, seed);
  for (auto& utt : data) {
    Tensor cut({64, frames});
    for (int64_t m = 0; m < 64; ++m)
      for (int64_t t = 0; t < frames; ++t) cut(m, t) = utt.features(m, t);
    utt.features = std::move(cut);
  }
  return data;
}

TrainConfig tiny_train_config() {
  TrainConfig cfg;
  cfg.features = "<memory>";
  cfg.out = "<memory>";
  cfg.backbone = "reduced";
  cfg.pooling = "tap";
  cfg.loss = "sm";
  cfg.embed_dim = 8;
  cfg.batch_size = 8;
  cfg.epochs = 2;
  cfg.lr0 = 0.01;
  cfg.crop_min = 64;
  cfg.crop_max = 64;
  cfg.seed = 11;
  return cfg;
}

}  // namespace

TEST_CASE("lr schedule steps by a factor of ten") {
  REQUIRE(lr_schedule(0, 0.1, 20) == Catch::Approx(0.1));
  REQUIRE(lr_schedule(19, 0.1, 20) == Catch::Approx(0.1));
  REQUIRE(lr_schedule(20, 0.1, 20) == Catch::Approx(0.01));
  REQUIRE(lr_schedule(40, 0.1, 20) == Catch::Approx(0.001));
  REQUIRE_THROWS_AS(lr_schedule(-1, 0.1, 20), Error);
}

TEST_CASE("lr zero leaves parameters untouched") {
  TrainConfig cfg = tiny_train_config();
  cfg.lr0 = 1e-30;  // schedule demands positive lr; this is numerically zero
  cfg.weight_decay = 0.0;
  cfg.epochs = 1;
  auto data = tiny_dataset(2, 4, 3, 64);
  SpeakerModel model(cfg, 2);

  ParamRefs params;
  model.collect_params(params);
  std::vector<Tensor> before;
  for (auto* p : params) before.push_back(p->value);

  Trainer trainer(model, data, cfg);
  trainer.run();
  for (size_t i = 0; i < params.size(); ++i)
    for (int64_t j = 0; j < params[i]->value.numel(); ++j)
      REQUIRE(params[i]->value[j] == Catch::Approx(before[i][j]).margin(1e-25));
}

TEST_CASE("training is bit-deterministic under a fixed seed") {
  TrainConfig cfg = tiny_train_config();
  cfg.pooling = "spe";
  cfg.codewords = 3;
  cfg.spe_channels = 4;
  cfg.ring = true;
  auto data = tiny_dataset(2, 4, 5, 64);

  auto run_once = [&]() {
    SpeakerModel model(cfg, 2);
    Trainer trainer(model, data, cfg);
    return trainer.run();
  };
  TrainResult a = run_once();
  TrainResult b = run_once();
  REQUIRE(a.epochs.size() == b.epochs.size());
  for (size_t e = 0; e < a.epochs.size(); ++e) {
    REQUIRE(a.epochs[e].mean_loss ==
            Catch::Approx(b.epochs[e].mean_loss).margin(1e-12));
    REQUIRE(a.epochs[e].ring_R ==
            Catch::Approx(b.epochs[e].ring_R).margin(1e-12));
  }
}

TEST_CASE("loss does not increase on a single repeated batch") {
  TrainConfig cfg = tiny_train_config();
  cfg.batch_size = 4;
  cfg.epochs = 50;
  cfg.lr0 = 1e-3;
  cfg.lr_step = 1000;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  auto data = tiny_dataset(2, 2, 7, 64);  // 4 utterances = 1 batch
  SpeakerModel model(cfg, 2);
  Trainer trainer(model, data, cfg);
  TrainResult res = trainer.run();
  REQUIRE(res.epochs.size() == 50);
  for (size_t e = 1; e < res.epochs.size(); ++e)
    REQUIRE(res.epochs[e].mean_loss <=
            res.epochs[e - 1].mean_loss + 1e-9);
}

TEST_CASE("ring R initializes to the first batch mean norm") {
  TrainConfig cfg = tiny_train_config();
  cfg.ring = true;
  cfg.epochs = 1;
  cfg.lr0 = 1e-30;  // no parameter motion, so R stays at its init value
  auto data = tiny_dataset(2, 4, 9, 64);
  SpeakerModel model(cfg, 2);
  Trainer trainer(model, data, cfg);
  TrainResult res = trainer.run();
  REQUIRE(model.ring_R() > 0);
  REQUIRE(res.epochs[0].ring_R == model.ring_R());
}

TEST_CASE("asm training keeps classifier rows unit-norm") {
  TrainConfig cfg = tiny_train_config();
  cfg.loss = "asm";
  cfg.epochs = 2;
  auto data = tiny_dataset(2, 4, 13, 64);
  SpeakerModel model(cfg, 2);
  Trainer trainer(model, data, cfg);
  trainer.run();
  for (int64_t j = 0; j < model.head().n_classes(); ++j) {
    double n = 0;
    for (int64_t d = 0; d < model.head().embed_dim(); ++d)
      n += model.head().weight.value(j, d) * model.head().weight.value(j, d);
    REQUIRE(std::sqrt(n) == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("non-finite parameters abort training with a tensor name") {
  TrainConfig cfg = tiny_train_config();
  cfg.epochs = 1;
  auto data = tiny_dataset(2, 4, 15, 64);
  SpeakerModel model(cfg, 2);
  model.head().weight.value[0] = std::nan("");
  Trainer trainer(model, data, cfg);
  REQUIRE_THROWS_WITH(trainer.run(),
                      Catch::Matchers::ContainsSubstring("non-finite") &&
                          Catch::Matchers::ContainsSubstring("head.weight"));
}

TEST_CASE("extract_embedding is deterministic with a fixed output size") {
  TrainConfig cfg = tiny_train_config();
  cfg.embed_dim = 8;  // ignored by tap; embedding is the map channel count
  SpeakerModel model(cfg, 2);
  auto data = tiny_dataset(1, 1, 17, 90);
  auto e1 = extract_embedding(model, data[0].features);
  auto e2 = extract_embedding(model, data[0].features);
  REQUIRE(e1.size() == 64);  // reduced backbone channels under tap
  REQUIRE(e1 == e2);
}

TEST_CASE("extract_embedding rejects too-short utterances") {
  TrainConfig cfg = tiny_train_config();
  SpeakerModel model(cfg, 2);
  Tensor shorty({64, 7});
  shorty.fill(0.1);
  REQUIRE_THROWS_WITH(extract_embedding(model, shorty),
                      Catch::Matchers::ContainsSubstring("T >= 8"));
}

TEST_CASE("scoring-time normalization follows the training recipe") {
  auto data = tiny_dataset(1, 1, 19, 80);

  TrainConfig plain = tiny_train_config();
  SpeakerModel no_norm(plain, 2);
  auto e = extract_embedding(no_norm, data[0].features);
  double norm = 0;
  for (double v : e) norm += v * v;
  REQUIRE(std::sqrt(norm) == Catch::Approx(1.0).margin(1e-12));

  TrainConfig ringed = tiny_train_config();
  ringed.ring = true;
  SpeakerModel with_ring(ringed, 2);
  auto raw = extract_embedding(with_ring, data[0].features);
  double rnorm = 0;
  for (double v : raw) rnorm += v * v;
  REQUIRE(std::sqrt(rnorm) != Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("a training run can be reproduced from its checkpoint manifest") {
  TrainConfig cfg = tiny_train_config();
  cfg.pooling = "spe";
  cfg.codewords = 3;
  cfg.spe_channels = 4;
  cfg.ring = true;
  auto data = tiny_dataset(2, 4, 21, 64);

  SpeakerModel model(cfg, 2);
  Trainer trainer(model, data, cfg);
  TrainResult first = trainer.run();
  Checkpoint ckpt = make_checkpoint(model, cfg.epochs);

  std::istringstream ss(ckpt.config_text());
  TrainConfig replay = parse_train_config_lines(ss, "<manifest>");
  SpeakerModel model2(replay, 2);
  Trainer trainer2(model2, data, replay);
  TrainResult second = trainer2.run();

  REQUIRE(first.epochs.size() == second.epochs.size());
  for (size_t e = 0; e < first.epochs.size(); ++e)
    REQUIRE(first.epochs[e].mean_loss ==
            Catch::Approx(second.epochs[e].mean_loss).margin(1e-12));
}
