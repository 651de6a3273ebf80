// tsv/dsp.hpp

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

#ifndef TSV_DSP_HPP_
#define TSV_DSP_HPP_

#include <Eigen/Dense>

#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

namespace tsv::dsp {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kSampleRate = 8000;

/// Mono time-domain signal.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  std::size_t size() const { return samples.size(); }
  Eigen::Map<const Eigen::VectorXd> vector() const { return {samples.data(), Eigen::Index(samples.size())}; }
};

class WavError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Throws std::invalid_argument if the waveform is empty or has a bad rate.
void validate(const Waveform& w);

/// RIFF PCM16 mono. Samples are scaled by 1/32768.
Waveform load_wav(const std::filesystem::path& path);
/// Quantizes to PCM16 by rounding, clipping to [-32768, 32767].
void save_wav(const Waveform& w, const std::filesystem::path& path);

enum class MixProtocol {
  kMax,  // zero-pad the shorter signal
  kMin,  // truncate the longer signal
};

struct Mixture {
  Waveform mixture;
  Waveform target;        // target at mixture length
  Waveform interference;  // rescaled interference at mixture length
};

/// Rescales `interference` so the target-to-interference power ratio over the
/// overlapped region is `snr_db`, then sums under `protocol`.
Mixture mix_at_snr(const Waveform& target, const Waveform& interference, double snr_db, MixProtocol protocol);

/// Target-to-interference ratio in dB over the first `overlap` samples.
double power_ratio_db(const Waveform& target, const Waveform& interference, std::size_t overlap);

/// Fraction of the mixture where both talkers are present.
double overlap_rate(std::size_t target_len, std::size_t interference_len, MixProtocol protocol);

inline constexpr double kSiSdrCapDb = 120.0;

/// Zero-mean SI-SDR in dB. The residual is floored at 1e-12 of the projected
/// target energy, capping the result at kSiSdrCapDb (and -kSiSdrCapDb for an
/// estimate orthogonal to the reference).
double si_sdr(const Waveform& estimate, const Waveform& reference);
double si_sdr(std::span<const double> estimate, std::span<const double> reference);

/// Frames x dims feature matrix.
struct FeatureMatrix {
  RowMatrix values;
  double frame_shift = 0.0;  // seconds

  Eigen::Index frames() const { return values.rows(); }
  Eigen::Index dims() const { return values.cols(); }
};

inline constexpr Eigen::Index kStftWindow = 256;
inline constexpr Eigen::Index kStftHop = 128;
inline constexpr Eigen::Index kStftBins = kStftWindow / 2 + 1;

/// Symmetric Hamming window, w[n] = 0.54 - 0.46 cos(2 pi n / (N - 1)).
Eigen::VectorXd hamming_window(Eigen::Index length);

inline Eigen::Index stft_frame_count(std::size_t samples) {
  return samples < std::size_t(kStftWindow) ? 0 : 1 + (Eigen::Index(samples) - kStftWindow) / kStftHop;
}

/// 256-sample Hamming frames every 128 samples, 129 magnitude bins.
FeatureMatrix stft_magnitude(const Waveform& w);

/// [static, delta, acceleration] using the regression window
/// d_t = sum_n n (f_{t+n} - f_{t-n}) / (2 sum_n n^2), edges replicated.
FeatureMatrix add_deltas(const FeatureMatrix& features, Eigen::Index window = 2);

}  // namespace tsv::dsp

#endif  // TSV_DSP_HPP_
