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

#ifndef SPE_TRAINER_HPP_
#define SPE_TRAINER_HPP_

#include <cstring>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "spe/model.hpp"
#include "spe/synthetic.hpp"

namespace spe {

// Step decay: lr0 * 0.1^floor(epoch / step).
inline double lr_schedule(int epoch, double lr0, int step) {
  SPE_CHECK(epoch >= 0, "lr_schedule: epoch must be >= 0");
  SPE_CHECK(step >= 1, "lr_schedule: step must be >= 1");
  return lr0 * std::pow(0.1, epoch / step);
}

struct EpochLog {
  int epoch = 0;         // 0-based
  double lr = 0;
  double mean_loss = 0;  // mean over the epoch's steps
  double accuracy = 0;   // training accuracy over the epoch
  double ring_R = -1;    // current R, or -1 when ring loss is off
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  int64_t steps = 0;
};

// SGD with classical momentum: v <- mu v - lr (g + wd theta), theta += v.
// One crop length T is drawn per batch so the batch tensor stays
// rectangular. Fully deterministic for a fixed seed.
class Trainer {
 public:
  // Returning false from on_epoch stops training after that epoch.
  using EpochCallback = std::function<bool(const EpochLog&)>;

  Trainer(SpeakerModel& model, std::vector<LabeledUtterance> dataset,
          const TrainConfig& cfg)
      : model_(model),
        data_(std::move(dataset)),
        cfg_(cfg),
        rng_(cfg.seed ^ 0xda3e39cb94b95bdbULL) {
    SPE_CHECK(!data_.empty(), "Trainer: empty dataset");
    for (const auto& utt : data_) {
      validate_feature_matrix(utt.features, "Trainer: utterance " + utt.id);
      SPE_CHECK(utt.speaker >= 0 && utt.speaker < model.n_speakers(),
                "Trainer: utterance " << utt.id << " has speaker "
                                      << utt.speaker << ", model expects [0,"
                                      << model.n_speakers() << ")");
    }
    model_.collect_params(params_);
    velocities_.reserve(params_.size());
    for (auto* p : params_) velocities_.emplace_back(p->value.shape());
  }

  TrainResult run(const EpochCallback& on_epoch = {}) {
    TrainResult result;
    const int64_t N = static_cast<int64_t>(data_.size());
    const int64_t B = std::min<int64_t>(cfg_.batch_size, N);
    const int64_t batches = std::max<int64_t>(1, N / B);
    std::vector<int64_t> order(static_cast<size_t>(N));
    for (int64_t i = 0; i < N; ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
      double lr = lr_schedule(epoch, cfg_.lr0, cfg_.effective_lr_step());
      // Fisher-Yates with the run RNG; batches are consecutive slices and
      // a trailing partial batch is dropped.
      for (int64_t i = N - 1; i > 0; --i)
        std::swap(order[i], order[rng_.uniform_int(0, i)]);

      double loss_sum = 0;
      int64_t correct = 0, seen = 0;
      for (int64_t bi = 0; bi < batches; ++bi) {
        std::vector<int64_t> idx(order.begin() + bi * B,
                                 order.begin() + (bi + 1) * B);
        StepStats stats = step(idx, lr, epoch);
        loss_sum += stats.loss;
        correct += stats.correct;
        seen += B;
      }

      EpochLog log;
      log.epoch = epoch;
      log.lr = lr;
      log.mean_loss = loss_sum / static_cast<double>(batches);
      log.accuracy = static_cast<double>(correct) / static_cast<double>(seen);
      log.ring_R = model_.has_ring() ? model_.ring_R() : -1.0;
      result.epochs.push_back(log);
      result.steps = iter_;
      if (on_epoch && !on_epoch(log)) break;
    }
    return result;
  }

  int64_t steps_taken() const { return iter_; }

 private:
  struct StepStats {
    double loss = 0;
    int64_t correct = 0;
  };

  StepStats step(const std::vector<int64_t>& idx, double lr, int epoch) {
    const int64_t B = static_cast<int64_t>(idx.size());
    const int64_t T = rng_.uniform_int(cfg_.crop_min, cfg_.crop_max);
    Tensor x({B, kNumMels, T, 1});
    std::vector<int> labels(static_cast<size_t>(B));
    for (int64_t b = 0; b < B; ++b) {
      const LabeledUtterance& utt = data_[static_cast<size_t>(idx[b])];
      Tensor cropped = crop_or_extend(utt.features, T, rng_);
      std::memcpy(x.data() + b * kNumMels * T, cropped.data(),
                  sizeof(double) * kNumMels * T);
      labels[static_cast<size_t>(b)] = utt.speaker;
    }

    model_.zero_grads();
    Tensor emb = model_.forward_embeddings(x, /*training=*/true);

    if (model_.has_ring() && model_.ring_R() <= 0)
      model_.set_ring_R(init_ring_R(emb));

    LossResult primary;
    if (cfg_.loss == "asm") {
      primary = asoftmax_loss(
          model_.has_l2cons() ? l2_constrain(emb, model_.alpha()) : emb,
          labels, model_.head(), cfg_.margin, anneal_.beta(iter_));
    } else {
      primary = softmax_loss(
          model_.has_l2cons() ? l2_constrain(emb, model_.alpha()) : emb,
          labels, model_.head());
    }

    Tensor d_emb;
    if (model_.has_l2cons()) {
      L2ConstrainGrad g =
          l2_constrain_backward(emb, model_.alpha(), primary.d_embeddings);
      d_emb = std::move(g.d_input);
      if (model_.alpha_learned()) model_.alpha_param().grad[0] += g.d_alpha;
    } else {
      d_emb = std::move(primary.d_embeddings);
    }

    double loss = primary.value;
    if (model_.has_ring()) {
      RingState state{model_.ring_R(), cfg_.lambda};
      RingResult ring = ring_loss(emb, state);
      loss += cfg_.lambda * ring.value;
      d_emb.add_scaled(ring.d_embeddings, cfg_.lambda);
      model_.ring_param().grad[0] += cfg_.lambda * ring.d_R;
    }

    if (!std::isfinite(loss)) {
      throw Error("train: NaN loss at epoch " + std::to_string(epoch) +
                  " step " + std::to_string(iter_) +
                  "; first non-finite tensor: " + first_nonfinite(emb));
    }

    model_.backward_embeddings(d_emb);
    sgd_update(lr);
    if (cfg_.loss == "asm") model_.head().renormalize_rows();
    ++iter_;
    return {loss, primary.correct};
  }

  void sgd_update(double lr) {
    for (size_t i = 0; i < params_.size(); ++i) {
      Parameter* p = params_[i];
      Tensor& v = velocities_[i];
      double* theta = p->value.data();
      const double* g = p->grad.data();
      double* vel = v.data();
      for (int64_t j = 0; j < p->value.numel(); ++j) {
        vel[j] = cfg_.momentum * vel[j] -
                 lr * (g[j] + cfg_.weight_decay * theta[j]);
        theta[j] += vel[j];
      }
    }
  }

  std::string first_nonfinite(const Tensor& emb) {
    for (auto* p : params_) {
      if (!p->value.all_finite()) return p->name;
      if (!p->grad.all_finite()) return p->name + ".grad";
    }
    if (!emb.all_finite()) return "embeddings";
    return "loss";
  }

  SpeakerModel& model_;
  std::vector<LabeledUtterance> data_;
  TrainConfig cfg_;
  Rng rng_;
  ParamRefs params_;
  std::vector<Tensor> velocities_;
  AnnealSchedule anneal_;
  int64_t iter_ = 0;
};

}  // namespace spe

#endif  // SPE_TRAINER_HPP_
