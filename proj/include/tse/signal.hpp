// Copyright 2026  The tse authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef TSE_SIGNAL_HPP_
#define TSE_SIGNAL_HPP_

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tse/random.hpp"
#include "tse/wav.hpp"

namespace tse {

inline constexpr double kPi = 3.14159265358979323846;

// Plain dense matrix for non-differentiable signal features.
struct RealMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const {
    return data[static_cast<std::size_t>(r) * cols + c];
  }
};

// ---------------------------------------------------------------------------
// FFT
// ---------------------------------------------------------------------------

// In-place iterative radix-2; size must be a power of two.
inline void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw std::invalid_argument("fft: size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * kPi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse)
    for (auto& x : a) x /= static_cast<double>(n);
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Linear convolution via FFT; returns x.size()+h.size()-1 samples.
inline std::vector<double> fft_convolve(const std::vector<double>& x,
                                        const std::vector<double>& h) {
  const std::size_t out_len = x.size() + h.size() - 1;
  const std::size_t n = next_pow2(out_len);
  std::vector<std::complex<double>> fx(n), fh(n);
  for (std::size_t i = 0; i < x.size(); ++i) fx[i] = x[i];
  for (std::size_t i = 0; i < h.size(); ++i) fh[i] = h[i];
  fft_inplace(fx, false);
  fft_inplace(fh, false);
  for (std::size_t i = 0; i < n; ++i) fx[i] *= fh[i];
  fft_inplace(fx, true);
  std::vector<double> out(out_len);
  for (std::size_t i = 0; i < out_len; ++i) out[i] = fx[i].real();
  return out;
}

// ---------------------------------------------------------------------------
// STFT and IPD
// ---------------------------------------------------------------------------

struct Spectrogram {
  int bins = 0;    // F = fft_size/2 + 1
  int frames = 0;  // T_f
  int fft_size = 0;
  std::vector<std::complex<double>> cells;  // [F x T_f] row-major

  std::complex<double> at(int f, int t) const {
    return cells[static_cast<std::size_t>(f) * frames + t];
  }
};

// Hann-windowed STFT. The FFT size is the window length in samples rounded
// up to a power of two; only the nonnegative-frequency half is kept.
inline Spectrogram stft(const Waveform& w, double window_ms = 32.0,
                        double hop_ms = 16.0) {
  if (!(hop_ms > 0.0) || window_ms < hop_ms)
    throw std::invalid_argument("stft: need window_ms >= hop_ms > 0");
  const int win = static_cast<int>(std::lrint(window_ms * w.sample_rate / 1000.0));
  const int hop = static_cast<int>(std::lrint(hop_ms * w.sample_rate / 1000.0));
  if (static_cast<int>(w.samples.size()) < win)
    throw std::invalid_argument("stft: waveform shorter than one window");
  const int fft_size = static_cast<int>(next_pow2(static_cast<std::size_t>(win)));
  const int bins = fft_size / 2 + 1;
  const int frames =
      (static_cast<int>(w.samples.size()) - win) / hop + 1;

  std::vector<double> hann(win);
  for (int n = 0; n < win; ++n)
    hann[n] = 0.5 - 0.5 * std::cos(2.0 * kPi * n / win);

  Spectrogram spec;
  spec.bins = bins;
  spec.frames = frames;
  spec.fft_size = fft_size;
  spec.cells.assign(static_cast<std::size_t>(bins) * frames, {0.0, 0.0});
  std::vector<std::complex<double>> buf(fft_size);
  for (int t = 0; t < frames; ++t) {
    std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
    const double* src = w.samples.data() + static_cast<std::size_t>(t) * hop;
    for (int n = 0; n < win; ++n) buf[n] = src[n] * hann[n];
    fft_inplace(buf, false);
    for (int f = 0; f < bins; ++f)
      spec.cells[static_cast<std::size_t>(f) * frames + t] = buf[f];
  }
  return spec;
}

// Wraps an angle into (-pi, pi].
inline double wrap_phase(double x) {
  double w = x - 2.0 * kPi * std::ceil((x - kPi) / (2.0 * kPi));
  if (w <= -kPi) w += 2.0 * kPi;
  if (w > kPi) w -= 2.0 * kPi;
  return w;
}

// Inter-microphone phase differences on the 32/16 ms STFT grid.
struct IpdFeatures {
  RealMatrix values;  // [F x T_f], radians in (-pi, pi]
  double window_ms = 32.0;
  double hop_ms = 16.0;
};

inline IpdFeatures ipd(const Waveform& ch1, const Waveform& ch2,
                       double window_ms = 32.0, double hop_ms = 16.0) {
  if (ch1.samples.size() != ch2.samples.size())
    throw std::invalid_argument("ipd: channel length mismatch");
  if (ch1.sample_rate != ch2.sample_rate)
    throw std::invalid_argument("ipd: channel sample-rate mismatch");
  const Spectrogram s1 = stft(ch1, window_ms, hop_ms);
  const Spectrogram s2 = stft(ch2, window_ms, hop_ms);
  IpdFeatures out;
  out.window_ms = window_ms;
  out.hop_ms = hop_ms;
  out.values.rows = s1.bins;
  out.values.cols = s1.frames;
  out.values.data.resize(static_cast<std::size_t>(s1.bins) * s1.frames);
  for (std::size_t i = 0; i < out.values.data.size(); ++i)
    out.values.data[i] =
        wrap_phase(std::arg(s1.cells[i]) - std::arg(s2.cells[i]));
  return out;
}

// ---------------------------------------------------------------------------
// SiSDR metric
// ---------------------------------------------------------------------------

// Scale-invariant signal-to-distortion ratio in dB, clamped to [-60, +60].
// Both signals are zero-meaned before the projection.
inline double sisdr(const Waveform& estimate, const Waveform& reference) {
  const std::size_t n = reference.samples.size();
  if (estimate.samples.size() != n)
    throw std::invalid_argument("sisdr: length mismatch");
  if (n == 0) throw std::invalid_argument("sisdr: empty signals");
  double me = 0.0, mr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    me += estimate.samples[i];
    mr += reference.samples[i];
  }
  me /= static_cast<double>(n);
  mr /= static_cast<double>(n);
  double dot = 0.0, xx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = estimate.samples[i] - me;
    const double x = reference.samples[i] - mr;
    dot += e * x;
    xx += x * x;
  }
  if (!(xx > 0.0))
    throw std::invalid_argument("sisdr: reference has zero energy");
  const double a = dot / xx;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = estimate.samples[i] - me;
    const double x = reference.samples[i] - mr;
    const double s = a * x;
    num += s * s;
    den += (e - s) * (e - s);
  }
  const double val = 10.0 * std::log10(num / (den + 1e-8));
  return std::clamp(val, -60.0, 60.0);
}

// ---------------------------------------------------------------------------
// Synthetic reverberation
// ---------------------------------------------------------------------------

// Convolves with a seeded impulse response: a unit impulse followed by an
// exponentially decaying noise tail whose envelope reaches -60 dB at rt60.
// rt60 = 0 returns the input unchanged; output keeps the input length.
inline Waveform apply_reverb(const Waveform& dry, double rt60,
                             std::uint64_t seed) {
  if (rt60 < 0.0 || rt60 > 1.0)
    throw std::invalid_argument("apply_reverb: rt60 must lie in [0, 1]");
  if (rt60 == 0.0) return dry;
  const int fs = dry.sample_rate;
  const int ir_len = static_cast<int>(std::lrint(1.25 * rt60 * fs)) + 1;
  std::vector<double> ir(static_cast<std::size_t>(ir_len), 0.0);
  ir[0] = 1.0;
  Rng rng(seed);
  const double slope = -3.0 / (rt60 * fs);  // -60 dB at n = rt60 * fs
  for (int n = 1; n < ir_len; ++n)
    ir[static_cast<std::size_t>(n)] =
        0.25 * rng.normal() * std::pow(10.0, slope * n);
  std::vector<double> wet = fft_convolve(dry.samples, ir);
  wet.resize(dry.samples.size());
  return Waveform{std::move(wet), fs};
}

}  // namespace tse

#endif  // TSE_SIGNAL_HPP_
