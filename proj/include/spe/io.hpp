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

#ifndef SPE_IO_HPP_
#define SPE_IO_HPP_

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "spe/metrics.hpp"
#include "spe/tensor.hpp"

namespace spe {

namespace iodetail {

inline void require_little_endian() {
  const uint32_t probe = 1;
  SPE_CHECK(*reinterpret_cast<const uint8_t*>(&probe) == 1,
            "binary file formats assume a little-endian host");
}

inline void write_u16(std::ostream& out, uint16_t v) {
  out.write(reinterpret_cast<const char*>(&v), 2);
}
inline void write_u32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}
inline uint16_t read_u16(std::istream& in, const std::string& ctx) {
  uint16_t v;
  in.read(reinterpret_cast<char*>(&v), 2);
  SPE_CHECK(in.good(), ctx << ": truncated file");
  return v;
}
inline uint32_t read_u32(std::istream& in, const std::string& ctx) {
  uint32_t v;
  in.read(reinterpret_cast<char*>(&v), 4);
  SPE_CHECK(in.good(), ctx << ": truncated file");
  return v;
}

inline void write_f32_array(std::ostream& out, const double* data, int64_t n) {
  std::vector<float> buf(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) buf[i] = static_cast<float>(data[i]);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(sizeof(float) * n));
}

inline void read_f32_array(std::istream& in, double* data, int64_t n,
                           const std::string& ctx) {
  std::vector<float> buf(static_cast<size_t>(n));
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(sizeof(float) * n));
  SPE_CHECK(in.good(), ctx << ": truncated float payload");
  for (int64_t i = 0; i < n; ++i) data[i] = static_cast<double>(buf[i]);
}

}  // namespace iodetail

// --------------------------------------------------------------------------
// Feature file: "FBNK", u32 rows, u32 cols, rows*cols float32 row-major.
// --------------------------------------------------------------------------

inline void write_fbnk(const std::string& path, const Tensor& features) {
  iodetail::require_little_endian();
  SPE_CHECK(features.ndim() == 2, "write_fbnk: expected a 2-D matrix");
  std::ofstream out(path, std::ios::binary);
  SPE_CHECK(out.good(), "write_fbnk: cannot open " << path);
  out.write("FBNK", 4);
  iodetail::write_u32(out, static_cast<uint32_t>(features.dim(0)));
  iodetail::write_u32(out, static_cast<uint32_t>(features.dim(1)));
  iodetail::write_f32_array(out, features.data(), features.numel());
  SPE_CHECK(out.good(), "write_fbnk: write failed for " << path);
}

inline Tensor read_fbnk(const std::string& path) {
  iodetail::require_little_endian();
  std::ifstream in(path, std::ios::binary);
  SPE_CHECK(in.good(), "read_fbnk: cannot open " << path);
  char magic[4];
  in.read(magic, 4);
  SPE_CHECK(in.good() && std::memcmp(magic, "FBNK", 4) == 0,
            "read_fbnk: " << path << ": bad magic (not an FBNK file)");
  uint32_t rows = iodetail::read_u32(in, "read_fbnk: " + path);
  uint32_t cols = iodetail::read_u32(in, "read_fbnk: " + path);
  SPE_CHECK(rows > 0 && cols > 0, "read_fbnk: " << path << ": empty matrix");
  Tensor t({static_cast<int64_t>(rows), static_cast<int64_t>(cols)});
  iodetail::read_f32_array(in, t.data(), t.numel(), "read_fbnk: " + path);
  t.check_finite("read_fbnk: " + path);
  return t;
}

// --------------------------------------------------------------------------
// Embedding file: "EMBD", u32 dim, u32 count, then per entry a u16 id
// length, the id bytes, and dim float32 values.
// --------------------------------------------------------------------------

using EmbeddingMap = std::vector<std::pair<std::string, std::vector<double>>>;

inline void write_embd(const std::string& path, const EmbeddingMap& embs) {
  iodetail::require_little_endian();
  SPE_CHECK(!embs.empty(), "write_embd: no embeddings");
  std::ofstream out(path, std::ios::binary);
  SPE_CHECK(out.good(), "write_embd: cannot open " << path);
  uint32_t dim = static_cast<uint32_t>(embs.front().second.size());
  out.write("EMBD", 4);
  iodetail::write_u32(out, dim);
  iodetail::write_u32(out, static_cast<uint32_t>(embs.size()));
  for (const auto& [id, vec] : embs) {
    SPE_CHECK(vec.size() == dim, "write_embd: inconsistent dim for id " << id);
    SPE_CHECK(id.size() <= 65535, "write_embd: id too long: " << id);
    iodetail::write_u16(out, static_cast<uint16_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    std::vector<float> buf(vec.begin(), vec.end());
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(sizeof(float) * dim));
  }
  SPE_CHECK(out.good(), "write_embd: write failed for " << path);
}

inline EmbeddingMap read_embd(const std::string& path) {
  iodetail::require_little_endian();
  std::ifstream in(path, std::ios::binary);
  SPE_CHECK(in.good(), "read_embd: cannot open " << path);
  char magic[4];
  in.read(magic, 4);
  SPE_CHECK(in.good() && std::memcmp(magic, "EMBD", 4) == 0,
            "read_embd: " << path << ": bad magic (not an EMBD file)");
  uint32_t dim = iodetail::read_u32(in, "read_embd: " + path);
  uint32_t count = iodetail::read_u32(in, "read_embd: " + path);
  EmbeddingMap out;
  out.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    uint16_t id_len = iodetail::read_u16(in, "read_embd: " + path);
    std::string id(id_len, '\0');
    in.read(id.data(), id_len);
    SPE_CHECK(in.good(), "read_embd: " << path << ": truncated id");
    std::vector<float> buf(dim);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(sizeof(float) * dim));
    SPE_CHECK(in.good(), "read_embd: " << path << ": truncated vector for "
                                       << id);
    out.emplace_back(std::move(id), std::vector<double>(buf.begin(), buf.end()));
  }
  return out;
}

// --------------------------------------------------------------------------
// Trial file: one "<0|1> <enroll-id> <test-id>" per line.
// Score file: one "<enroll-id> <test-id> <score:%.6f>" per line.
// --------------------------------------------------------------------------

inline std::vector<Trial> read_trials(const std::string& path) {
  std::ifstream in(path);
  SPE_CHECK(in.good(), "read_trials: cannot open " << path);
  std::vector<Trial> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string label, enroll, test;
    SPE_CHECK(ss >> label >> enroll >> test,
              "read_trials: " << path << ":" << line_no << ": expected "
                              << "'<0|1> <enroll-id> <test-id>'");
    SPE_CHECK(label == "0" || label == "1",
              "read_trials: " << path << ":" << line_no << ": label must be "
                              << "0 or 1, got '" << label << "'");
    out.push_back({label == "1", enroll, test});
  }
  SPE_CHECK(!out.empty(), "read_trials: " << path << ": no trials");
  return out;
}

inline void write_trials(const std::string& path,
                         const std::vector<Trial>& trials) {
  std::ofstream out(path);
  SPE_CHECK(out.good(), "write_trials: cannot open " << path);
  for (const auto& t : trials)
    out << (t.is_target ? 1 : 0) << ' ' << t.enroll_id << ' ' << t.test_id
        << '\n';
  SPE_CHECK(out.good(), "write_trials: write failed for " << path);
}

struct ScoredTrial {
  std::string enroll_id;
  std::string test_id;
  double score = 0;
};

inline void write_scores(const std::string& path,
                         const std::vector<ScoredTrial>& scores) {
  std::ofstream out(path);
  SPE_CHECK(out.good(), "write_scores: cannot open " << path);
  char buf[32];
  for (const auto& s : scores) {
    std::snprintf(buf, sizeof(buf), "%.6f", s.score);
    out << s.enroll_id << ' ' << s.test_id << ' ' << buf << '\n';
  }
  SPE_CHECK(out.good(), "write_scores: write failed for " << path);
}

inline std::vector<ScoredTrial> read_scores(const std::string& path) {
  std::ifstream in(path);
  SPE_CHECK(in.good(), "read_scores: cannot open " << path);
  std::vector<ScoredTrial> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    ScoredTrial s;
    SPE_CHECK(ss >> s.enroll_id >> s.test_id >> s.score,
              "read_scores: " << path << ":" << line_no << ": expected "
                              << "'<enroll-id> <test-id> <score>'");
    out.push_back(std::move(s));
  }
  SPE_CHECK(!out.empty(), "read_scores: " << path << ": no scores");
  return out;
}

// Labeled score file (cmd_eval without trials): "<0|1> <score>" per line.
inline std::vector<LabeledScore> read_labeled_scores(const std::string& path) {
  std::ifstream in(path);
  SPE_CHECK(in.good(), "read_labeled_scores: cannot open " << path);
  std::vector<LabeledScore> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string label;
    double score;
    SPE_CHECK(ss >> label >> score, "read_labeled_scores: "
                                        << path << ":" << line_no
                                        << ": expected '<0|1> <score>'");
    SPE_CHECK(label == "0" || label == "1",
              "read_labeled_scores: " << path << ":" << line_no
                                      << ": label must be 0 or 1");
    out.push_back({label == "1", score});
  }
  SPE_CHECK(!out.empty(), "read_labeled_scores: " << path << ": no scores");
  return out;
}

// --------------------------------------------------------------------------
// Feature manifest: "<utt-id> <filename>" per line, one file per utterance,
// paths relative to the manifest's directory.
// --------------------------------------------------------------------------

struct ManifestEntry {
  std::string id;
  std::string path;  // resolved
};

inline void write_manifest(const std::string& path,
                           const std::vector<std::pair<std::string, std::string>>&
                               id_to_relpath) {
  std::ofstream out(path);
  SPE_CHECK(out.good(), "write_manifest: cannot open " << path);
  for (const auto& [id, rel] : id_to_relpath) out << id << ' ' << rel << '\n';
  SPE_CHECK(out.good(), "write_manifest: write failed for " << path);
}

inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  SPE_CHECK(in.good(), "read_manifest: cannot open " << path);
  std::filesystem::path base = std::filesystem::path(path).parent_path();
  std::vector<ManifestEntry> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string id, rel;
    SPE_CHECK(ss >> id >> rel, "read_manifest: " << path << ":" << line_no
                                                 << ": expected '<id> <path>'");
    std::filesystem::path p(rel);
    out.push_back({id, p.is_absolute() ? p.string() : (base / p).string()});
  }
  SPE_CHECK(!out.empty(), "read_manifest: " << path << ": no entries");
  return out;
}

}  // namespace spe

#endif  // SPE_IO_HPP_
