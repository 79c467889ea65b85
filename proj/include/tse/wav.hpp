// Copyright 2026  The tse authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef TSE_WAV_HPP_
#define TSE_WAV_HPP_

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tse {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One channel of audio at a fixed rate; samples are nominally in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 8000;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
  double rms() const {
    if (samples.empty()) return 0.0;
    double acc = 0.0;
    for (double s : samples) acc += s * s;
    return std::sqrt(acc / samples.size());
  }
};

enum class WavEncoding { pcm16, float32 };

struct AudioFile {
  std::vector<Waveform> channels;
  int sample_rate = 8000;
};

namespace detail {

inline void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}
inline std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  std::memcpy(&v, p, 4);
  return v;  // little-endian host assumed, asserted below
}
inline std::uint16_t get_u16(const char* p) {
  std::uint16_t v = 0;
  std::memcpy(&v, p, 2);
  return v;
}

static_assert(std::endian::native == std::endian::little,
              "wav i/o assumes a little-endian host");

}  // namespace detail

inline void write_wav(const std::string& path,
                      const std::vector<Waveform>& channels,
                      WavEncoding enc = WavEncoding::float32) {
  if (channels.empty()) throw std::invalid_argument("write_wav: no channels");
  const std::size_t frames = channels[0].samples.size();
  const int rate = channels[0].sample_rate;
  for (const Waveform& ch : channels)
    if (ch.samples.size() != frames || ch.sample_rate != rate)
      throw std::invalid_argument("write_wav: channel length/rate mismatch");

  const int nch = static_cast<int>(channels.size());
  const int bytes_per = enc == WavEncoding::pcm16 ? 2 : 4;
  const std::uint32_t data_bytes =
      static_cast<std::uint32_t>(frames * nch * bytes_per);

  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  detail::put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  detail::put_u32(out, 16);
  detail::put_u16(out, enc == WavEncoding::pcm16 ? 1 : 3);
  detail::put_u16(out, static_cast<std::uint16_t>(nch));
  detail::put_u32(out, static_cast<std::uint32_t>(rate));
  detail::put_u32(out, static_cast<std::uint32_t>(rate * nch * bytes_per));
  detail::put_u16(out, static_cast<std::uint16_t>(nch * bytes_per));
  detail::put_u16(out, static_cast<std::uint16_t>(8 * bytes_per));
  out += "data";
  detail::put_u32(out, data_bytes);
  for (std::size_t i = 0; i < frames; ++i) {
    for (int c = 0; c < nch; ++c) {
      const double v = channels[c].samples[i];
      if (enc == WavEncoding::pcm16) {
        const long q = std::clamp(std::lrint(v * 32768.0), -32768L, 32767L);
        detail::put_u16(out, static_cast<std::uint16_t>(
                                 static_cast<std::int16_t>(q)));
      } else {
        const float f = static_cast<float>(v);
        char buf[4];
        std::memcpy(buf, &f, 4);
        out.append(buf, 4);
      }
    }
  }
  std::ofstream fs(path, std::ios::binary);
  if (!fs) throw IoError("write_wav: cannot open '" + path + "'");
  fs.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!fs) throw IoError("write_wav: short write to '" + path + "'");
}

inline AudioFile read_wav(const std::string& path) {
  std::ifstream fs(path, std::ios::binary);
  if (!fs) throw IoError("read_wav: cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(fs)),
                    std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || bytes.compare(0, 4, "RIFF") != 0 ||
      bytes.compare(8, 4, "WAVE") != 0)
    throw IoError("read_wav: '" + path + "' is not a RIFF/WAVE file");

  int fmt_tag = -1, nch = 0, rate = 0, bits = 0;
  std::size_t data_off = 0, data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id = bytes.substr(pos, 4);
    const std::uint32_t len = detail::get_u32(bytes.data() + pos + 4);
    pos += 8;
    if (pos + len > bytes.size())
      throw IoError("read_wav: truncated chunk in '" + path + "'");
    if (id == "fmt ") {
      if (len < 16) throw IoError("read_wav: malformed fmt chunk");
      fmt_tag = detail::get_u16(bytes.data() + pos);
      nch = detail::get_u16(bytes.data() + pos + 2);
      rate = static_cast<int>(detail::get_u32(bytes.data() + pos + 4));
      bits = detail::get_u16(bytes.data() + pos + 14);
    } else if (id == "data") {
      data_off = pos;
      data_len = len;
    }
    pos += len + (len & 1);  // chunks are word-aligned
  }
  if (fmt_tag < 0 || data_off == 0)
    throw IoError("read_wav: missing fmt or data chunk in '" + path + "'");
  const bool pcm16 = fmt_tag == 1 && bits == 16;
  const bool f32 = fmt_tag == 3 && bits == 32;
  if (!pcm16 && !f32)
    throw IoError("read_wav: unsupported encoding in '" + path +
                  "' (format tag " + std::to_string(fmt_tag) + ", " +
                  std::to_string(bits) +
                  " bits); only 16-bit PCM and 32-bit float are supported");
  if (nch < 1 || nch > 2)
    throw IoError("read_wav: '" + path + "' has " + std::to_string(nch) +
                  " channels; only mono and stereo are supported");

  const int bytes_per = pcm16 ? 2 : 4;
  const std::size_t frames = data_len / (static_cast<std::size_t>(nch) * bytes_per);
  AudioFile af;
  af.sample_rate = rate;
  af.channels.assign(nch, Waveform{{}, rate});
  for (int c = 0; c < nch; ++c) af.channels[c].samples.resize(frames);
  const char* p = bytes.data() + data_off;
  for (std::size_t i = 0; i < frames; ++i) {
    for (int c = 0; c < nch; ++c) {
      if (pcm16) {
        const auto q = static_cast<std::int16_t>(detail::get_u16(p));
        af.channels[c].samples[i] = q / 32768.0;
        p += 2;
      } else {
        float f;
        std::memcpy(&f, p, 4);
        af.channels[c].samples[i] = f;
        p += 4;
      }
    }
  }
  return af;
}

inline Waveform read_wav_mono(const std::string& path) {
  AudioFile af = read_wav(path);
  return std::move(af.channels[0]);
}

}  // namespace tse

#endif  // TSE_WAV_HPP_
