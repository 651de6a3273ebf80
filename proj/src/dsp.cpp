// dsp.cpp

// Copyright 2026  tsvkit authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "tsv/dsp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <string>

namespace tsv::dsp {

void validate(const Waveform& w) {
  if (w.samples.empty()) throw std::invalid_argument("waveform is empty");
  if (w.sample_rate <= 0) throw std::invalid_argument("waveform sample rate must be positive");
}

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}
std::uint16_t read_u16(const unsigned char* p) { return std::uint16_t(p[0] | p[1] << 8); }

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char(v >> 8));
}

}  // namespace

Waveform load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WavError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::string(bytes.begin(), bytes.begin() + 4) != "RIFF" ||
      std::string(bytes.begin() + 8, bytes.begin() + 12) != "WAVE")
    throw WavError(path.string() + ": not a RIFF/WAVE file");

  bool have_fmt = false;
  Waveform w;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    std::string id(bytes.begin() + std::ptrdiff_t(pos), bytes.begin() + std::ptrdiff_t(pos + 4));
    std::size_t size = read_u32(&bytes[pos + 4]);
    std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw WavError(path.string() + ": truncated chunk '" + id + "'");
    if (id == "fmt ") {
      if (size < 16) throw WavError(path.string() + ": short fmt chunk");
      std::uint16_t format = read_u16(&bytes[body]);
      std::uint16_t channels = read_u16(&bytes[body + 2]);
      std::uint32_t rate = read_u32(&bytes[body + 4]);
      std::uint16_t bits = read_u16(&bytes[body + 14]);
      if (format != 1) throw WavError(path.string() + ": only PCM is supported");
      if (channels != 1) throw WavError(path.string() + ": expected mono, got " + std::to_string(channels) + " channels");
      if (bits != 16) throw WavError(path.string() + ": expected 16-bit samples, got " + std::to_string(bits));
      w.sample_rate = int(rate);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw WavError(path.string() + ": data chunk before fmt chunk");
      w.samples.resize(size / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i)
        w.samples[i] = double(std::int16_t(read_u16(&bytes[body + 2 * i]))) / 32768.0;
      return w;
    }
    pos = body + size + (size & 1);
  }
  throw WavError(path.string() + ": no data chunk");
}

void save_wav(const Waveform& w, const std::filesystem::path& path) {
  if (w.sample_rate <= 0) throw std::invalid_argument("waveform sample rate must be positive");
  const std::uint32_t data_bytes = std::uint32_t(w.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, std::uint32_t(w.sample_rate));
  put_u32(out, std::uint32_t(w.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_bytes);
  for (double s : w.samples) {
    double q = std::clamp(std::nearbyint(s * 32768.0), -32768.0, 32767.0);
    put_u16(out, std::uint16_t(std::int16_t(q)));
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw WavError("cannot write " + path.string());
  file.write(out.data(), std::streamsize(out.size()));
  if (!file) throw WavError("write failed for " + path.string());
}

namespace {

double mean_power(const std::vector<double>& x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc / double(n);
}

}  // namespace

double power_ratio_db(const Waveform& target, const Waveform& interference, std::size_t overlap) {
  overlap = std::min({overlap, target.size(), interference.size()});
  if (overlap == 0) throw std::invalid_argument("power_ratio_db over an empty region");
  return 10.0 * std::log10(mean_power(target.samples, overlap) / mean_power(interference.samples, overlap));
}

Mixture mix_at_snr(const Waveform& target, const Waveform& interference, double snr_db, MixProtocol protocol) {
  validate(target);
  validate(interference);
  if (target.sample_rate != interference.sample_rate)
    throw std::invalid_argument("mix_at_snr: sample rates differ");
  const std::size_t overlap = std::min(target.size(), interference.size());
  const double p_target = mean_power(target.samples, overlap);
  const double p_interf = mean_power(interference.samples, overlap);
  if (p_target == 0.0 || p_interf == 0.0) throw std::invalid_argument("mix_at_snr: silent input over the overlap");
  const double gain = std::sqrt(p_target / (p_interf * std::pow(10.0, snr_db / 10.0)));

  const std::size_t length =
      protocol == MixProtocol::kMax ? std::max(target.size(), interference.size()) : overlap;
  Mixture m;
  m.target.sample_rate = m.interference.sample_rate = m.mixture.sample_rate = target.sample_rate;
  m.target.samples.assign(length, 0.0);
  m.interference.samples.assign(length, 0.0);
  std::copy_n(target.samples.begin(), std::min(length, target.size()), m.target.samples.begin());
  for (std::size_t i = 0; i < std::min(length, interference.size()); ++i)
    m.interference.samples[i] = gain * interference.samples[i];
  m.mixture.samples.resize(length);
  for (std::size_t i = 0; i < length; ++i) m.mixture.samples[i] = m.target.samples[i] + m.interference.samples[i];
  return m;
}

double overlap_rate(std::size_t target_len, std::size_t interference_len, MixProtocol protocol) {
  if (target_len == 0 || interference_len == 0) throw std::invalid_argument("overlap_rate needs positive lengths");
  if (protocol == MixProtocol::kMin) return 1.0;
  return double(std::min(target_len, interference_len)) / double(std::max(target_len, interference_len));
}

double si_sdr(std::span<const double> estimate, std::span<const double> reference) {
  if (estimate.size() != reference.size()) throw std::invalid_argument("si_sdr needs equal lengths");
  if (reference.empty()) throw std::invalid_argument("si_sdr on empty signals");
  const std::size_t n = reference.size();
  double me = 0.0, mr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    me += estimate[i];
    mr += reference[i];
  }
  me /= double(n);
  mr /= double(n);
  double er = 0.0, rr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    er += (estimate[i] - me) * (reference[i] - mr);
    rr += (reference[i] - mr) * (reference[i] - mr);
  }
  if (rr == 0.0) throw std::invalid_argument("si_sdr reference has zero energy");
  const double alpha = er / rr;
  double signal = 0.0, residual = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double target = alpha * (reference[i] - mr);
    const double diff = target - (estimate[i] - me);
    signal += target * target;
    residual += diff * diff;
  }
  constexpr double kFloor = 1e-12;
  if (signal + residual == 0.0 || signal < kFloor * residual) return -kSiSdrCapDb;
  if (residual < kFloor * signal) return kSiSdrCapDb;
  return 10.0 * std::log10(signal / residual);
}

double si_sdr(const Waveform& estimate, const Waveform& reference) {
  return si_sdr(std::span<const double>(estimate.samples), std::span<const double>(reference.samples));
}

Eigen::VectorXd hamming_window(Eigen::Index length) {
  Eigen::VectorXd w(length);
  if (length == 1) {
    w[0] = 1.0;
    return w;
  }
  for (Eigen::Index n = 0; n < length; ++n)
    w[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * double(n) / double(length - 1));
  return w;
}

FeatureMatrix stft_magnitude(const Waveform& w) {
  const Eigen::Index frames = stft_frame_count(w.size());
  if (frames < 1)
    throw std::invalid_argument("stft_magnitude needs at least " + std::to_string(kStftWindow) + " samples");
  const Eigen::VectorXd window = hamming_window(kStftWindow);
  // Twiddle tables indexed by (bin * n) mod N.
  std::array<double, kStftWindow> cos_table{}, sin_table{};
  for (Eigen::Index i = 0; i < kStftWindow; ++i) {
    cos_table[std::size_t(i)] = std::cos(2.0 * std::numbers::pi * double(i) / double(kStftWindow));
    sin_table[std::size_t(i)] = std::sin(2.0 * std::numbers::pi * double(i) / double(kStftWindow));
  }
  FeatureMatrix out;
  out.frame_shift = double(kStftHop) / double(w.sample_rate);
  out.values.resize(frames, kStftBins);
  std::array<double, kStftWindow> frame{};
  for (Eigen::Index f = 0; f < frames; ++f) {
    for (Eigen::Index n = 0; n < kStftWindow; ++n)
      frame[std::size_t(n)] = window[n] * w.samples[std::size_t(f * kStftHop + n)];
    for (Eigen::Index k = 0; k < kStftBins; ++k) {
      double re = 0.0, im = 0.0;
      for (Eigen::Index n = 0; n < kStftWindow; ++n) {
        const std::size_t idx = std::size_t((k * n) % kStftWindow);
        re += frame[std::size_t(n)] * cos_table[idx];
        im -= frame[std::size_t(n)] * sin_table[idx];
      }
      out.values(f, k) = std::sqrt(re * re + im * im);
    }
  }
  return out;
}

FeatureMatrix add_deltas(const FeatureMatrix& features, Eigen::Index window) {
  if (features.frames() < 1) throw std::invalid_argument("add_deltas needs at least one frame");
  if (window < 1) throw std::invalid_argument("add_deltas window must be positive");
  const Eigen::Index frames = features.frames(), dims = features.dims();
  double denom = 0.0;
  for (Eigen::Index n = 1; n <= window; ++n) denom += double(n * n);
  denom *= 2.0;
  auto regress = [&](const RowMatrix& f) {
    RowMatrix d = RowMatrix::Zero(frames, dims);
    for (Eigen::Index t = 0; t < frames; ++t)
      for (Eigen::Index n = 1; n <= window; ++n) {
        const Eigen::Index ahead = std::min(t + n, frames - 1), behind = std::max(t - n, Eigen::Index{0});
        d.row(t) += double(n) * (f.row(ahead) - f.row(behind)) / denom;
      }
    return d;
  };
  FeatureMatrix out;
  out.frame_shift = features.frame_shift;
  out.values.resize(frames, 3 * dims);
  RowMatrix delta = regress(features.values);
  out.values.leftCols(dims) = features.values;
  out.values.middleCols(dims, dims) = delta;
  out.values.rightCols(dims) = regress(delta);
  return out;
}

}  // namespace tsv::dsp
