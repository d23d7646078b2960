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

#ifndef SPE_CHECKPOINT_HPP_
#define SPE_CHECKPOINT_HPP_

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "spe/io.hpp"
#include "spe/model.hpp"

namespace spe {

// Checkpoint layout (version 1):
//   "SPCK" magic, u32 format version
//   u32 manifest byte count, manifest text (key=value lines)
//   u32 tensor count, then per tensor:
//     u16 name length, name bytes, u32 element count, float32 data
// The manifest carries the effective training config verbatim plus
// "state.*" keys; stripping the state keys yields a valid config file.
struct Checkpoint {
  static constexpr uint32_t kFormatVersion = 1;

  std::vector<std::pair<std::string, std::string>> manifest;
  std::vector<std::pair<std::string, std::vector<float>>> tensors;

  const std::string* find(const std::string& key) const {
    for (const auto& [k, v] : manifest)
      if (k == key) return &v;
    return nullptr;
  }

  const std::string& require(const std::string& key) const {
    const std::string* v = find(key);
    SPE_CHECK(v, "checkpoint: manifest key '" << key << "' missing");
    return *v;
  }

  std::string manifest_text() const {
    std::string out;
    for (const auto& [k, v] : manifest) out += k + "=" + v + "\n";
    return out;
  }

  // Just the training-config lines (everything not under "state.").
  std::string config_text() const {
    std::string out;
    for (const auto& [k, v] : manifest)
      if (k.rfind("state.", 0) != 0) out += k + "=" + v + "\n";
    return out;
  }
};

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  iodetail::require_little_endian();
  std::ofstream out(path, std::ios::binary);
  SPE_CHECK(out.good(), "save_checkpoint: cannot open " << path);
  out.write("SPCK", 4);
  iodetail::write_u32(out, Checkpoint::kFormatVersion);
  std::string manifest = ckpt.manifest_text();
  iodetail::write_u32(out, static_cast<uint32_t>(manifest.size()));
  out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  iodetail::write_u32(out, static_cast<uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, data] : ckpt.tensors) {
    SPE_CHECK(name.size() <= 65535, "save_checkpoint: tensor name too long");
    iodetail::write_u16(out, static_cast<uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    iodetail::write_u32(out, static_cast<uint32_t>(data.size()));
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(sizeof(float) * data.size()));
  }
  SPE_CHECK(out.good(), "save_checkpoint: write failed for " << path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  iodetail::require_little_endian();
  std::ifstream in(path, std::ios::binary);
  SPE_CHECK(in.good(), "load_checkpoint: cannot open " << path);
  char magic[4];
  in.read(magic, 4);
  SPE_CHECK(in.good() && std::memcmp(magic, "SPCK", 4) == 0,
            "load_checkpoint: " << path << ": not a checkpoint file");
  uint32_t version = iodetail::read_u32(in, "load_checkpoint: " + path);
  SPE_CHECK(version == Checkpoint::kFormatVersion,
            "load_checkpoint: " << path << ": format version " << version
                                << " unsupported (expected "
                                << Checkpoint::kFormatVersion << ")");
  uint32_t manifest_len = iodetail::read_u32(in, "load_checkpoint: " + path);
  std::string manifest(manifest_len, '\0');
  in.read(manifest.data(), manifest_len);
  SPE_CHECK(in.good(), "load_checkpoint: " << path << ": truncated manifest");

  Checkpoint ckpt;
  std::istringstream ss(manifest);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    SPE_CHECK(eq != std::string::npos,
              "load_checkpoint: " << path << ": bad manifest line '" << line
                                  << "'");
    ckpt.manifest.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }

  uint32_t n_tensors = iodetail::read_u32(in, "load_checkpoint: " + path);
  ckpt.tensors.reserve(n_tensors);
  for (uint32_t i = 0; i < n_tensors; ++i) {
    uint16_t name_len = iodetail::read_u16(in, "load_checkpoint: " + path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    uint32_t count = iodetail::read_u32(in, "load_checkpoint: " + path);
    std::vector<float> data(count);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(sizeof(float) * count));
    SPE_CHECK(in.good(), "load_checkpoint: " << path
                                             << ": truncated tensor section '"
                                             << name << "'");
    ckpt.tensors.emplace_back(std::move(name), std::move(data));
  }
  return ckpt;
}

inline Checkpoint make_checkpoint(SpeakerModel& model, int epoch) {
  Checkpoint ckpt;
  ckpt.manifest = model.config().to_key_values();
  auto fmt = [](double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
  };
  ckpt.manifest.emplace_back("state.format",
                             std::to_string(Checkpoint::kFormatVersion));
  ckpt.manifest.emplace_back("state.epoch", std::to_string(epoch));
  ckpt.manifest.emplace_back("state.n_speakers",
                             std::to_string(model.n_speakers()));
  ckpt.manifest.emplace_back("state.embed_dim",
                             std::to_string(model.embed_dim()));
  ckpt.manifest.emplace_back("state.R",
                             fmt(model.has_ring() ? model.ring_R() : -1.0));
  ckpt.manifest.emplace_back("state.alpha",
                             fmt(model.has_l2cons() ? model.alpha() : -1.0));

  for (auto& [name, tensor] : model.named_state()) {
    std::vector<float> data(static_cast<size_t>(tensor->numel()));
    for (int64_t i = 0; i < tensor->numel(); ++i)
      data[i] = static_cast<float>((*tensor)[i]);
    ckpt.tensors.emplace_back(name, std::move(data));
  }
  return ckpt;
}

// Loads tensor sections into an already-constructed model. Every model
// tensor must be present with the right size; extras are rejected too.
inline void load_model_state(const Checkpoint& ckpt, SpeakerModel& model) {
  auto state = model.named_state();
  SPE_CHECK(state.size() == ckpt.tensors.size(),
            "checkpoint: architecture mismatch: model has "
                << state.size() << " tensors, checkpoint has "
                << ckpt.tensors.size());
  std::map<std::string, const std::vector<float>*> by_name;
  for (const auto& [name, data] : ckpt.tensors) by_name[name] = &data;
  for (auto& [name, tensor] : state) {
    auto it = by_name.find(name);
    SPE_CHECK(it != by_name.end(),
              "checkpoint: tensor '" << name << "' missing from file");
    const auto& data = *it->second;
    SPE_CHECK(static_cast<int64_t>(data.size()) == tensor->numel(),
              "checkpoint: tensor '" << name << "' has " << data.size()
                                     << " values, model expects "
                                     << tensor->numel());
    for (int64_t i = 0; i < tensor->numel(); ++i)
      (*tensor)[i] = static_cast<double>(data[i]);
  }
}

// Rebuilds the model a checkpoint was saved from: config from the
// manifest, sizes from the state keys, weights from the tensor sections.
inline std::unique_ptr<SpeakerModel> model_from_checkpoint(
    const Checkpoint& ckpt) {
  std::istringstream cfg_stream(ckpt.config_text());
  TrainConfig cfg = parse_train_config_lines(cfg_stream, "<checkpoint>");
  int n_speakers = std::stoi(ckpt.require("state.n_speakers"));
  auto model = std::make_unique<SpeakerModel>(cfg, n_speakers);
  load_model_state(ckpt, *model);
  return model;
}

}  // namespace spe

#endif  // SPE_CHECKPOINT_HPP_
