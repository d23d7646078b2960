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

#ifndef SPE_CONFIG_HPP_
#define SPE_CONFIG_HPP_

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "spe/common.hpp"

namespace spe {

// Flat key=value training configuration. Unknown keys are rejected so a
// typo cannot silently fall back to a default. '#' starts a comment.
struct TrainConfig {
  std::string features;  // manifest file (or directory holding manifest.txt)
  std::string out;       // output directory

  std::string backbone = "default";  // default | reduced
  std::string pooling = "spe";       // tap | spp | lde | spe
  std::string spd = "1d";            // 1d ({1x1,1x4}) | 2d ({1x1,2x2})
  int codewords = 64;
  int spe_channels = 64;
  int embed_dim = 256;

  std::string loss = "sm";  // sm | asm
  int margin = 4;
  bool ring = false;
  double lambda = 1.0;
  std::string l2cons = "none";  // none | fixed:<alpha> | learned[:<alpha0>]

  int batch_size = 64;
  int epochs = 60;
  double lr0 = 0.1;
  int lr_step = 0;  // 0 = auto (a third of the epochs)
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int crop_min = 300;
  int crop_max = 500;
  uint64_t seed = 1;

  int effective_lr_step() const {
    return lr_step > 0 ? lr_step : std::max(1, (epochs + 2) / 3);
  }

  // "none" / "fixed" / "learned" plus the alpha value when applicable.
  std::string l2cons_mode() const {
    auto colon = l2cons.find(':');
    return colon == std::string::npos ? l2cons : l2cons.substr(0, colon);
  }

  double l2cons_alpha() const {
    auto colon = l2cons.find(':');
    if (colon == std::string::npos) return 10.0;  // learned-mode start value
    double a = std::stod(l2cons.substr(colon + 1));
    SPE_CHECK(a > 0, "config: l2cons alpha must be positive, got " << a);
    return a;
  }

  void validate() const {
    SPE_CHECK(backbone == "default" || backbone == "reduced",
              "config: backbone must be default|reduced, got '" << backbone
                                                                << "'");
    SPE_CHECK(pooling == "tap" || pooling == "spp" || pooling == "lde" ||
                  pooling == "spe",
              "config: pooling must be tap|spp|lde|spe, got '" << pooling
                                                               << "'");
    SPE_CHECK(spd == "1d" || spd == "2d",
              "config: spd must be 1d|2d, got '" << spd << "'");
    SPE_CHECK(loss == "sm" || loss == "asm",
              "config: loss must be sm|asm, got '" << loss << "'");
    std::string mode = l2cons_mode();
    SPE_CHECK(mode == "none" || mode == "fixed" || mode == "learned",
              "config: l2cons must be none|fixed:<alpha>|learned, got '"
                  << l2cons << "'");
    if (mode == "fixed")
      SPE_CHECK(l2cons.find(':') != std::string::npos,
                "config: l2cons=fixed requires an alpha, e.g. fixed:10");
    if (mode != "none") l2cons_alpha();
    SPE_CHECK(codewords >= 1, "config: codewords must be >= 1");
    SPE_CHECK(spe_channels >= 1, "config: spe_channels must be >= 1");
    SPE_CHECK(embed_dim >= 1, "config: embed_dim must be >= 1");
    SPE_CHECK(margin >= 1, "config: margin must be >= 1");
    SPE_CHECK(lambda >= 0, "config: lambda must be >= 0");
    SPE_CHECK(batch_size >= 1, "config: batch_size must be >= 1");
    SPE_CHECK(epochs >= 1, "config: epochs must be >= 1");
    SPE_CHECK(lr0 > 0, "config: lr0 must be positive");
    SPE_CHECK(lr_step >= 0, "config: lr_step must be >= 0");
    SPE_CHECK(momentum >= 0 && momentum < 1,
              "config: momentum must be in [0,1)");
    SPE_CHECK(weight_decay >= 0, "config: weight_decay must be >= 0");
    SPE_CHECK(crop_min >= 1 && crop_max >= crop_min,
              "config: need 1 <= crop_min <= crop_max, got [" << crop_min
                                                              << ", "
                                                              << crop_max
                                                              << "]");
  }

  // Stable serialization; also embedded into checkpoint manifests so a run
  // can be reproduced from its checkpoint alone.
  std::vector<std::pair<std::string, std::string>> to_key_values() const {
    auto fmt = [](double v) {
      std::ostringstream ss;
      ss.precision(17);
      ss << v;
      return ss.str();
    };
    return {
        {"features", features},
        {"out", out},
        {"backbone", backbone},
        {"pooling", pooling},
        {"spd", spd},
        {"codewords", std::to_string(codewords)},
        {"spe_channels", std::to_string(spe_channels)},
        {"embed_dim", std::to_string(embed_dim)},
        {"loss", loss},
        {"margin", std::to_string(margin)},
        {"ring", ring ? "true" : "false"},
        {"lambda", fmt(lambda)},
        {"l2cons", l2cons},
        {"batch_size", std::to_string(batch_size)},
        {"epochs", std::to_string(epochs)},
        {"lr0", fmt(lr0)},
        {"lr_step", std::to_string(effective_lr_step())},
        {"momentum", fmt(momentum)},
        {"weight_decay", fmt(weight_decay)},
        {"crop_min", std::to_string(crop_min)},
        {"crop_max", std::to_string(crop_max)},
        {"seed", std::to_string(seed)},
    };
  }
};

namespace configdetail {

inline bool parse_bool(const std::string& v, const std::string& ctx) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error(ctx + ": expected true|false, got '" + v + "'");
}

}  // namespace configdetail

inline TrainConfig parse_train_config_lines(std::istream& in,
                                            const std::string& source) {
  TrainConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    // trim
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);

    std::string ctx = source + ":" + std::to_string(line_no);
    auto eq = line.find('=');
    SPE_CHECK(eq != std::string::npos && eq > 0,
              ctx << ": expected 'key=value', got '" << line << "'");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto kend = key.find_last_not_of(" \t");
    key = key.substr(0, kend + 1);
    auto vstart = value.find_first_not_of(" \t");
    value = vstart == std::string::npos ? "" : value.substr(vstart);
    SPE_CHECK(!value.empty(), ctx << ": empty value for key '" << key << "'");

    try {
      if (key == "features") cfg.features = value;
      else if (key == "out") cfg.out = value;
      else if (key == "backbone") cfg.backbone = value;
      else if (key == "pooling") cfg.pooling = value;
      else if (key == "spd") cfg.spd = value;
      else if (key == "codewords") cfg.codewords = std::stoi(value);
      else if (key == "spe_channels") cfg.spe_channels = std::stoi(value);
      else if (key == "embed_dim") cfg.embed_dim = std::stoi(value);
      else if (key == "loss") cfg.loss = value;
      else if (key == "margin") cfg.margin = std::stoi(value);
      else if (key == "ring") cfg.ring = configdetail::parse_bool(value, ctx);
      else if (key == "lambda") cfg.lambda = std::stod(value);
      else if (key == "l2cons") cfg.l2cons = value;
      else if (key == "batch_size") cfg.batch_size = std::stoi(value);
      else if (key == "epochs") cfg.epochs = std::stoi(value);
      else if (key == "lr0") cfg.lr0 = std::stod(value);
      else if (key == "lr_step") cfg.lr_step = std::stoi(value);
      else if (key == "momentum") cfg.momentum = std::stod(value);
      else if (key == "weight_decay") cfg.weight_decay = std::stod(value);
      else if (key == "crop_min") cfg.crop_min = std::stoi(value);
      else if (key == "crop_max") cfg.crop_max = std::stoi(value);
      else if (key == "seed") cfg.seed = std::stoull(value);
      else
        throw Error(ctx + ": unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw Error(ctx + ": cannot parse value '" + value + "' for key '" +
                  key + "'");
    } catch (const std::out_of_range&) {
      throw Error(ctx + ": value '" + value + "' out of range for key '" +
                  key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

inline TrainConfig parse_train_config(const std::string& path) {
  std::ifstream in(path);
  SPE_CHECK(in.good(), "config: cannot open " << path);
  return parse_train_config_lines(in, path);
}

}  // namespace spe

#endif  // SPE_CONFIG_HPP_
