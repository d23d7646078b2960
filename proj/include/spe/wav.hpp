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

#ifndef SPE_WAV_HPP_
#define SPE_WAV_HPP_

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "spe/common.hpp"

namespace spe {

struct Waveform {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = 0;
};

inline void validate_waveform(const Waveform& w, const std::string& what) {
  SPE_CHECK(!w.samples.empty(), what << ": empty waveform");
  SPE_CHECK(w.sample_rate >= 8000,
            what << ": sample rate " << w.sample_rate << " below 8000 Hz");
}

namespace wavdetail {

inline uint32_t read_u32(const std::vector<char>& buf, size_t off) {
  uint32_t v;
  std::memcpy(&v, buf.data() + off, 4);
  return v;
}

inline uint16_t read_u16(const std::vector<char>& buf, size_t off) {
  uint16_t v;
  std::memcpy(&v, buf.data() + off, 2);
  return v;
}

}  // namespace wavdetail

// PCM WAV reader: 16-bit integer or 32-bit float samples, mono or first
// channel of a multi-channel file. Anything else is rejected.
inline Waveform load_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  SPE_CHECK(in.good(), "load_wav: cannot open " << path);
  std::vector<char> buf((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());

  auto fail = [&](size_t offset, const std::string& what) {
    throw Error("load_wav: " + path + ": parse error at byte " +
                std::to_string(offset) + ": " + what);
  };

  if (buf.size() < 12) fail(buf.size(), "truncated RIFF header");
  if (std::memcmp(buf.data(), "RIFF", 4) != 0) fail(0, "missing RIFF magic");
  if (std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    fail(8, "missing WAVE form type");

  uint16_t audio_format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  bool have_fmt = false;
  size_t data_off = 0, data_len = 0;

  size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    char id[5] = {0};
    std::memcpy(id, buf.data() + pos, 4);
    uint32_t chunk_len = wavdetail::read_u32(buf, pos + 4);
    size_t body = pos + 8;
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (body + 16 > buf.size()) fail(body, "truncated fmt chunk");
      audio_format = wavdetail::read_u16(buf, body);
      channels = wavdetail::read_u16(buf, body + 2);
      sample_rate = wavdetail::read_u32(buf, body + 4);
      bits = wavdetail::read_u16(buf, body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_off = body;
      data_len = chunk_len;
      break;
    }
    pos = body + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }

  if (!have_fmt) fail(pos, "no fmt chunk before data");
  if (data_off == 0) fail(pos, "no data chunk");
  if (channels == 0) fail(data_off, "zero channels");
  if (data_off + data_len > buf.size())
    fail(buf.size(), "data chunk extends past end of file (declared " +
                         std::to_string(data_len) + " bytes)");

  bool pcm16 = (audio_format == 1 && bits == 16);
  bool float32 = (audio_format == 3 && bits == 32);
  if (!pcm16 && !float32)
    fail(data_off, "unsupported encoding: format tag " +
                       std::to_string(audio_format) + ", " +
                       std::to_string(bits) + " bits (need 16-bit PCM or "
                       "32-bit float)");

  size_t bytes_per_sample = bits / 8;
  size_t frame_bytes = bytes_per_sample * channels;
  if (frame_bytes == 0 || data_len % frame_bytes != 0)
    fail(data_off, "data length not a whole number of frames");
  size_t frames = data_len / frame_bytes;
  if (frames == 0) fail(data_off, "empty data chunk");

  Waveform w;
  w.sample_rate = static_cast<int>(sample_rate);
  w.samples.resize(frames);
  for (size_t i = 0; i < frames; ++i) {
    size_t off = data_off + i * frame_bytes;  // first channel
    if (pcm16) {
      int16_t s;
      std::memcpy(&s, buf.data() + off, 2);
      w.samples[i] = static_cast<double>(s) / 32768.0;
    } else {
      float s;
      std::memcpy(&s, buf.data() + off, 4);
      w.samples[i] = static_cast<double>(s);
    }
  }
  validate_waveform(w, "load_wav: " + path);
  return w;
}

// 16-bit PCM writer, mono. Used by the synthetic tooling and tests.
inline void write_wav(const std::string& path,
                      const std::vector<double>& samples, int sample_rate) {
  std::ofstream out(path, std::ios::binary);
  SPE_CHECK(out.good(), "write_wav: cannot open " << path);
  uint32_t data_len = static_cast<uint32_t>(samples.size() * 2);
  uint32_t riff_len = 36 + data_len;
  auto put_u32 = [&](uint32_t v) { out.write(reinterpret_cast<char*>(&v), 4); };
  auto put_u16 = [&](uint16_t v) { out.write(reinterpret_cast<char*>(&v), 2); };
  out.write("RIFF", 4);
  put_u32(riff_len);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_u32(16);
  put_u16(1);  // PCM
  put_u16(1);  // mono
  put_u32(static_cast<uint32_t>(sample_rate));
  put_u32(static_cast<uint32_t>(sample_rate * 2));
  put_u16(2);
  put_u16(16);
  out.write("data", 4);
  put_u32(data_len);
  for (double s : samples) {
    double clamped = std::max(-1.0, std::min(1.0, s));
    int16_t v = static_cast<int16_t>(std::lround(clamped * 32767.0));
    put_u16(static_cast<uint16_t>(v));
  }
  SPE_CHECK(out.good(), "write_wav: write failed for " << path);
}

}  // namespace spe

#endif  // SPE_WAV_HPP_
