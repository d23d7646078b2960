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

#ifndef SPE_MODEL_HPP_
#define SPE_MODEL_HPP_

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spe/backbone.hpp"
#include "spe/config.hpp"
#include "spe/features.hpp"
#include "spe/losses.hpp"
#include "spe/pooling.hpp"

namespace spe {

// Backbone + pooling head + classifier, plus the normalization machinery
// (L2-constraint scale and/or ring-loss target norm) chosen by the config.
class SpeakerModel {
 public:
  SpeakerModel(const TrainConfig& cfg, int n_speakers)
      : cfg_(cfg), n_speakers_(n_speakers) {
    cfg.validate();
    SPE_CHECK(n_speakers >= 1, "SpeakerModel: need at least one speaker");
    Rng rng(cfg.seed);
    uint64_t backbone_seed = rng.raw();
    BackboneConfig bb = cfg.backbone == "reduced" ? BackboneConfig::reduced()
                                                  : BackboneConfig::defaults();
    backbone_ = std::make_unique<Backbone>(bb, backbone_seed);

    const int64_t d = backbone_->out_channels();
    PyramidSpec spec =
        cfg.spd == "2d" ? PyramidSpec::two_d() : PyramidSpec::one_d();
    if (cfg.pooling == "tap") {
      pooling_ = std::make_unique<TapHead>(d);
    } else if (cfg.pooling == "spp") {
      pooling_ = std::make_unique<SppHead>(d, spec, cfg.embed_dim, rng);
    } else if (cfg.pooling == "lde") {
      pooling_ = std::make_unique<LdeHead>(d, cfg.codewords, cfg.embed_dim, rng);
    } else {
      pooling_ = std::make_unique<SpeHead>(d, spec, cfg.codewords,
                                           cfg.spe_channels, cfg.embed_dim,
                                           rng);
    }
    head_ = std::make_unique<ClassifierHead>(n_speakers, pooling_->out_dim(),
                                             rng);

    if (cfg.l2cons_mode() != "none") {
      alpha_ = Parameter("norm.alpha", Tensor::scalar(cfg.l2cons_alpha()));
      alpha_learned_ = cfg.l2cons_mode() == "learned";
    }
    if (cfg.ring) ring_r_ = Parameter("norm.ring_r", Tensor::scalar(-1.0));
  }

  // features batch [B, 64, T, 1] -> embeddings [B, E].
  Tensor forward_embeddings(const Tensor& batch, bool training) {
    Tensor map = backbone_->forward(batch, training);
    return pooling_->forward(map, training);
  }

  Tensor backward_embeddings(const Tensor& d_emb) {
    return backbone_->backward(pooling_->backward(d_emb));
  }

  // Trainable parameters. A fixed (non-learned) alpha is excluded; the
  // ring target norm R is a scalar parameter like any other.
  void collect_params(ParamRefs& out) {
    backbone_->collect_params(out);
    pooling_->collect_params(out);
    head_->collect_params(out);
    if (alpha_ && alpha_learned_) out.push_back(&*alpha_);
    if (ring_r_) out.push_back(&*ring_r_);
  }

  // Everything that must survive a save/load round trip: parameters
  // (learned or not) plus batch-norm running statistics.
  std::vector<std::pair<std::string, Tensor*>> named_state() {
    std::vector<std::pair<std::string, Tensor*>> out;
    ParamRefs params;
    backbone_->collect_params(params);
    pooling_->collect_params(params);
    head_->collect_params(params);
    if (alpha_) params.push_back(&*alpha_);
    if (ring_r_) params.push_back(&*ring_r_);
    for (auto* p : params) out.emplace_back(p->name, &p->value);
    backbone_->collect_buffers(out);
    return out;
  }

  const TrainConfig& config() const { return cfg_; }
  int n_speakers() const { return n_speakers_; }
  Backbone& backbone() { return *backbone_; }
  PoolingHead& pooling() { return *pooling_; }
  ClassifierHead& head() { return *head_; }
  int64_t embed_dim() const { return pooling_->out_dim(); }

  bool has_l2cons() const { return alpha_.has_value(); }
  bool alpha_learned() const { return alpha_learned_; }
  double alpha() const {
    SPE_CHECK(alpha_, "SpeakerModel: no L2-constraint scale configured");
    return alpha_->value[0];
  }
  Parameter& alpha_param() { return *alpha_; }

  bool has_ring() const { return ring_r_.has_value(); }
  double ring_R() const {
    SPE_CHECK(ring_r_, "SpeakerModel: ring loss not configured");
    return ring_r_->value[0];
  }
  void set_ring_R(double r) { ring_r_->value[0] = r; }
  Parameter& ring_param() { return *ring_r_; }

  // Deep length normalization (either flavor) means embeddings come out of
  // the net already scaled, so scoring skips the explicit normalization.
  bool deep_length_norm() const { return has_ring() || has_l2cons(); }

  void zero_grads() {
    ParamRefs params;
    collect_params(params);
    for (auto* p : params) p->zero_grad();
    if (alpha_ && !alpha_learned_) alpha_->zero_grad();
  }

 private:
  TrainConfig cfg_;
  int n_speakers_;
  std::unique_ptr<Backbone> backbone_;
  std::unique_ptr<PoolingHead> pooling_;
  std::unique_ptr<ClassifierHead> head_;
  std::optional<Parameter> alpha_;
  bool alpha_learned_ = false;
  std::optional<Parameter> ring_r_;
};

// Full-length utterance -> embedding, inference-mode batch norm. Models
// trained with deep length normalization return the raw network output;
// anything else is divided by its L2 norm before scoring.
inline std::vector<double> extract_embedding_raw(SpeakerModel& model,
                                                 const Tensor& features) {
  validate_feature_matrix(features, "extract_embedding");
  const int64_t T = features.dim(1);
  SPE_CHECK(T >= 8, "extract_embedding: utterance too short, need T >= 8 "
                    "frames, got " << T);
  Tensor batch({1, kNumMels, T, 1});
  for (int64_t m = 0; m < kNumMels; ++m)
    for (int64_t t = 0; t < T; ++t) batch(0, m, t, 0) = features(m, t);
  Tensor emb = model.forward_embeddings(batch, /*training=*/false);
  std::vector<double> out(static_cast<size_t>(emb.dim(1)));
  for (int64_t d = 0; d < emb.dim(1); ++d) out[d] = emb(0, d);
  return out;
}

inline std::vector<double> extract_embedding(SpeakerModel& model,
                                             const Tensor& features) {
  std::vector<double> emb = extract_embedding_raw(model, features);
  if (!model.deep_length_norm()) {
    double norm = 0;
    for (double v : emb) norm += v * v;
    norm = std::sqrt(norm);
    SPE_CHECK(norm > 0, "extract_embedding: zero embedding");
    for (double& v : emb) v /= norm;
  }
  return emb;
}

}  // namespace spe

#endif  // SPE_MODEL_HPP_
