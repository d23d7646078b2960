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

#ifndef SPE_BACKBONE_HPP_
#define SPE_BACKBONE_HPP_

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spe/nn.hpp"

namespace spe {

// Frame-level feature extractor: a 34-layer-style residual stack over
// 64 x T x 1 inputs. conv1 is 7x7 stride 1; the three later stages halve
// both spatial extents, so the default network maps 64 x T to
// 8 x ceil(T/8) with 8x the base channel count.
struct BackboneConfig {
  std::array<int, 4> blocks_per_stage{3, 4, 6, 3};
  int base_channels = 32;

  static BackboneConfig defaults() { return {}; }

  // Official test preset: one block per stage, 8 base channels (D = 64).
  static BackboneConfig reduced() {
    BackboneConfig c;
    c.blocks_per_stage = {1, 1, 1, 1};
    c.base_channels = 8;
    return c;
  }

  int out_channels() const { return base_channels * 8; }

  void validate() const {
    for (int b : blocks_per_stage)
      SPE_CHECK(b >= 1, "BackboneConfig: blocks_per_stage must be >= 1");
    SPE_CHECK(base_channels >= 1, "BackboneConfig: base_channels must be >= 1");
  }
};

// Basic residual block: two 3x3 convs with BN, ReLU after the first conv
// and after the residual sum. A stride-2 first conv pairs with a 1x1
// projection shortcut (with its own BN).
class ResidualBlock {
 public:
  ResidualBlock(const std::string& name, int64_t in_ch, int64_t out_ch,
                int64_t stride, Rng& rng)
      : conv1_(name + ".conv1", in_ch, out_ch, 3, stride, rng),
        bn1_(name + ".bn1", out_ch),
        conv2_(name + ".conv2", out_ch, out_ch, 3, 1, rng),
        bn2_(name + ".bn2", out_ch) {
    if (stride != 1 || in_ch != out_ch) {
      proj_ = std::make_unique<Conv2d>(name + ".proj", in_ch, out_ch, 1,
                                       stride, rng);
      proj_bn_ = std::make_unique<BatchNorm2d>(name + ".proj_bn", out_ch);
    }
  }

  Tensor forward(const Tensor& x, bool training) {
    Tensor h = relu1_.forward(bn1_.forward(conv1_.forward(x, training),
                                           training),
                              training);
    h = bn2_.forward(conv2_.forward(h, training), training);
    Tensor s = proj_ ? proj_bn_->forward(proj_->forward(x, training), training)
                     : x;
    h.add_scaled(s, 1.0);
    return relu2_.forward(h, training);
  }

  Tensor backward(const Tensor& dy) {
    Tensor d = relu2_.backward(dy);
    Tensor dmain = conv1_.backward(
        bn1_.backward(relu1_.backward(conv2_.backward(bn2_.backward(d)))));
    Tensor dshort = proj_ ? proj_->backward(proj_bn_->backward(d)) : d;
    dmain.add_scaled(dshort, 1.0);
    return dmain;
  }

  void collect_params(ParamRefs& out) {
    conv1_.collect_params(out);
    bn1_.collect_params(out);
    conv2_.collect_params(out);
    bn2_.collect_params(out);
    if (proj_) {
      proj_->collect_params(out);
      proj_bn_->collect_params(out);
    }
  }

  void collect_buffers(std::vector<std::pair<std::string, Tensor*>>& out) {
    bn1_.collect_buffers(out);
    bn2_.collect_buffers(out);
    if (proj_bn_) proj_bn_->collect_buffers(out);
  }

 private:
  Conv2d conv1_;
  BatchNorm2d bn1_;
  ReLU relu1_;
  Conv2d conv2_;
  BatchNorm2d bn2_;
  ReLU relu2_;
  std::unique_ptr<Conv2d> proj_;
  std::unique_ptr<BatchNorm2d> proj_bn_;
};

class Backbone {
 public:
  Backbone(const BackboneConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg.validate();
    Rng rng(seed);
    stem_ = std::make_unique<Conv2d>("backbone.conv1", 1, cfg.base_channels, 7,
                                     1, rng);
    stem_bn_ = std::make_unique<BatchNorm2d>("backbone.bn1", cfg.base_channels);
    int64_t in_ch = cfg.base_channels;
    for (int stage = 0; stage < 4; ++stage) {
      int64_t out_ch = cfg.base_channels << stage;
      for (int blk = 0; blk < cfg.blocks_per_stage[stage]; ++blk) {
        int64_t stride = (stage > 0 && blk == 0) ? 2 : 1;
        std::string name = "backbone.stage" + std::to_string(stage + 2) +
                           ".block" + std::to_string(blk);
        blocks_.push_back(
            std::make_unique<ResidualBlock>(name, in_ch, out_ch, stride, rng));
        in_ch = out_ch;
      }
    }
  }

  // x: [B, H, T, 1] -> [B, H/8 (ceil), T/8 (ceil), 8*base].
  Tensor forward(const Tensor& x, bool training) {
    SPE_CHECK(x.ndim() == 4 && x.dim(3) == 1,
              "Backbone: expected [B,H,T,1] input, got "
                  << shape_str(x.shape()));
    SPE_CHECK(x.dim(2) >= 8, "Backbone: need T >= 8 frames, got " << x.dim(2));
    Tensor h = stem_relu_.forward(
        stem_bn_->forward(stem_->forward(x, training), training), training);
    for (auto& blk : blocks_) h = blk->forward(h, training);
    return h;
  }

  Tensor backward(const Tensor& dmap) {
    Tensor d = dmap;
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it)
      d = (*it)->backward(d);
    return stem_->backward(stem_bn_->backward(stem_relu_.backward(d)));
  }

  void collect_params(ParamRefs& out) {
    stem_->collect_params(out);
    stem_bn_->collect_params(out);
    for (auto& blk : blocks_) blk->collect_params(out);
  }

  void collect_buffers(std::vector<std::pair<std::string, Tensor*>>& out) {
    stem_bn_->collect_buffers(out);
    for (auto& blk : blocks_) blk->collect_buffers(out);
  }

  int64_t num_params() {
    ParamRefs refs;
    collect_params(refs);
    int64_t n = 0;
    for (auto* p : refs) n += p->value.numel();
    return n;
  }

  const BackboneConfig& config() const { return cfg_; }
  int64_t out_channels() const { return cfg_.out_channels(); }

 private:
  BackboneConfig cfg_;
  std::unique_ptr<Conv2d> stem_;
  std::unique_ptr<BatchNorm2d> stem_bn_;
  ReLU stem_relu_;
  std::vector<std::unique_ptr<ResidualBlock>> blocks_;
};

}  // namespace spe

#endif  // SPE_BACKBONE_HPP_
