// dsp_test.cpp

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

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "tsv/dsp.hpp"

using namespace tsv::dsp;
namespace fs = std::filesystem;

namespace {

Waveform random_wave(std::size_t n, std::mt19937_64& rng, double amp = 0.3) {
  std::uniform_real_distribution<double> u(-amp, amp);
  Waveform w;
  w.samples.resize(n);
  for (double& s : w.samples) s = u(rng);
  return w;
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("tsv_dsp_" + name); }

void write_raw_wav(const fs::path& path, int channels, int bits) {
  std::string out = "RIFF";
  auto u32 = [&](std::uint32_t v) { for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff)); };
  auto u16 = [&](std::uint16_t v) { out.push_back(char(v & 0xff)); out.push_back(char(v >> 8)); };
  u32(36 + 8);
  out += "WAVEfmt ";
  u32(16);
  u16(1);
  u16(std::uint16_t(channels));
  u32(8000);
  u32(8000 * std::uint32_t(channels * bits / 8));
  u16(std::uint16_t(channels * bits / 8));
  u16(std::uint16_t(bits));
  out += "data";
  u32(8);
  out.append(8, '\0');
  std::ofstream(path, std::ios::binary) << out;
}

}  // namespace

TEST(Wav, ZerosAndFullScale) {
  Waveform zeros{std::vector<double>(100, 0.0), 8000};
  save_wav(zeros, temp_file("zeros.wav"));
  Waveform back = load_wav(temp_file("zeros.wav"));
  EXPECT_EQ(back.samples, zeros.samples);
  EXPECT_EQ(back.sample_rate, 8000);

  Waveform peak{{32767.0 / 32768.0}, 8000};
  save_wav(peak, temp_file("peak.wav"));
  EXPECT_EQ(load_wav(temp_file("peak.wav")).samples[0], 32767.0 / 32768.0);
}

TEST(Wav, RoundTripWithinQuantization) {
  std::mt19937_64 rng(1);
  Waveform w = random_wave(5000, rng, 1.0);
  save_wav(w, temp_file("rt.wav"));
  Waveform back = load_wav(temp_file("rt.wav"));
  ASSERT_EQ(back.size(), w.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) worst = std::max(worst, std::abs(back.samples[i] - w.samples[i]));
  EXPECT_LE(worst, std::ldexp(1.0, -15));
}

TEST(Wav, RejectsUnsupportedFiles) {
  write_raw_wav(temp_file("stereo.wav"), 2, 16);
  EXPECT_THROW(load_wav(temp_file("stereo.wav")), WavError);
  write_raw_wav(temp_file("8bit.wav"), 1, 8);
  EXPECT_THROW(load_wav(temp_file("8bit.wav")), WavError);
  EXPECT_THROW(load_wav(temp_file("does_not_exist.wav")), WavError);
}

TEST(Mix, ZeroDbMatchesPower) {
  std::mt19937_64 rng(2);
  Waveform t = random_wave(400, rng), i = random_wave(400, rng, 0.05);
  Mixture m = mix_at_snr(t, i, 0.0, MixProtocol::kMax);
  double pt = m.target.vector().squaredNorm(), pi = m.interference.vector().squaredNorm();
  EXPECT_NEAR(pt / pi, 1.0, 1e-10);
}

TEST(Mix, Protocols) {
  std::mt19937_64 rng(3);
  Waveform t = random_wave(8, rng), i = random_wave(6, rng);
  Mixture max = mix_at_snr(t, i, 3.0, MixProtocol::kMax);
  ASSERT_EQ(max.mixture.size(), 8u);
  EXPECT_EQ(max.interference.samples[6], 0.0);
  EXPECT_EQ(max.interference.samples[7], 0.0);
  EXPECT_EQ(max.mixture.samples[7], t.samples[7]);
  EXPECT_EQ(max.target.samples, t.samples);

  Mixture min = mix_at_snr(t, i, 3.0, MixProtocol::kMin);
  EXPECT_EQ(min.mixture.size(), 6u);
  EXPECT_EQ(min.target.size(), 6u);
}

TEST(Mix, RealizedSnrRecovered) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> snr(-5.0, 10.0);
  std::uniform_int_distribution<std::size_t> len(50, 600);
  for (int trial = 0; trial < 200; ++trial) {
    Waveform t = random_wave(len(rng), rng), i = random_wave(len(rng), rng, 0.8);
    double want = snr(rng);
    for (auto protocol : {MixProtocol::kMax, MixProtocol::kMin}) {
      Mixture m = mix_at_snr(t, i, want, protocol);
      std::size_t overlap = std::min(t.size(), i.size());
      EXPECT_NEAR(power_ratio_db(m.target, m.interference, overlap), want, 1e-9);
    }
  }
}

TEST(Mix, SilentInputRejected) {
  Waveform t{std::vector<double>(10, 0.0)}, i{std::vector<double>(10, 0.1)};
  EXPECT_THROW(mix_at_snr(t, i, 0.0, MixProtocol::kMax), std::invalid_argument);
  EXPECT_THROW(mix_at_snr(i, t, 0.0, MixProtocol::kMax), std::invalid_argument);
}

TEST(OverlapRate, Examples) {
  EXPECT_EQ(overlap_rate(100, 100, MixProtocol::kMax), 1.0);
  EXPECT_EQ(overlap_rate(8 * 8000, 4 * 8000, MixProtocol::kMax), 0.5);
  EXPECT_EQ(overlap_rate(3, 1000, MixProtocol::kMin), 1.0);
}

TEST(SiSdr, SelfScoreHitsCap) {
  std::mt19937_64 rng(5);
  Waveform s = random_wave(1000, rng);
  EXPECT_GE(si_sdr(s, s), 120.0);
}

TEST(SiSdr, ScaleAndOffsetInvariance) {
  std::mt19937_64 rng(6);
  Waveform s = random_wave(1000, rng), e = random_wave(1000, rng);
  for (std::size_t i = 0; i < e.size(); ++i) e.samples[i] += 0.8 * s.samples[i];
  const double base = si_sdr(e, s);
  for (double alpha : {0.01, 0.5, 2.0, 1000.0}) {
    Waveform scaled = e;
    for (double& v : scaled.samples) v *= alpha;
    EXPECT_NEAR(si_sdr(scaled, s), base, 1e-9);
  }
  Waveform shifted = e, ref_shifted = s;
  for (double& v : shifted.samples) v += 0.25;
  for (double& v : ref_shifted.samples) v -= 0.4;
  EXPECT_NEAR(si_sdr(shifted, s), base, 1e-9);
  EXPECT_NEAR(si_sdr(e, ref_shifted), base, 1e-9);
  EXPECT_EQ(si_sdr(Waveform{{2.0, 4.0}}, Waveform{{1.0, 2.0}}), si_sdr(Waveform{{1.0, 2.0}}, Waveform{{1.0, 2.0}}));
}

TEST(SiSdr, OrthogonalNoiseAtTenDb) {
  std::mt19937_64 rng(7);
  Eigen::VectorXd s = random_wave(2000, rng).vector();
  Eigen::VectorXd n = random_wave(2000, rng).vector();
  s.array() -= s.mean();
  n.array() -= n.mean();
  n -= (n.dot(s) / s.squaredNorm()) * s;
  n *= std::sqrt(s.squaredNorm() / (10.0 * n.squaredNorm()));
  Waveform ref{{s.data(), s.data() + s.size()}};
  Eigen::VectorXd e = s + n;
  Waveform est{{e.data(), e.data() + e.size()}};
  EXPECT_NEAR(si_sdr(est, ref), 10.0, 1e-9);
}

TEST(SiSdr, ZeroReferenceRejected) {
  EXPECT_THROW(si_sdr(Waveform{{1.0, 2.0}}, Waveform{{3.0, 3.0}}), std::invalid_argument);
}

TEST(Stft, FrameCountsAndSimpleSignals) {
  Waveform four_k{std::vector<double>(4000, 0.0)};
  FeatureMatrix zeros = stft_magnitude(four_k);
  EXPECT_EQ(zeros.frames(), 30);
  EXPECT_EQ(zeros.dims(), 129);
  EXPECT_EQ(zeros.values.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_DOUBLE_EQ(zeros.frame_shift, 0.016);

  Waveform ones{std::vector<double>(1000, 1.0)};
  FeatureMatrix dc = stft_magnitude(ones);
  const double window_sum = hamming_window(256).sum();
  for (Eigen::Index f = 0; f < dc.frames(); ++f) EXPECT_NEAR(dc.values(f, 0), window_sum, 1e-9);

  EXPECT_THROW(stft_magnitude(Waveform{std::vector<double>(255, 0.0)}), std::invalid_argument);
}

TEST(Stft, FrameCountFormula) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<std::size_t> len(256, 3000);
  for (int i = 0; i < 1000; ++i) {
    std::size_t n = len(rng);
    EXPECT_EQ(stft_frame_count(n), 1 + (Eigen::Index(n) - 256) / 128);
  }
  // Spot-check the transform itself on a few lengths.
  for (std::size_t n : {256u, 383u, 384u, 1001u})
    EXPECT_EQ(stft_magnitude(Waveform{std::vector<double>(n, 0.1)}).frames(), 1 + (Eigen::Index(n) - 256) / 128);
}

TEST(Stft, PureToneLandsInItsBin) {
  Waveform tone;
  for (int n = 0; n < 1024; ++n) tone.samples.push_back(std::cos(2.0 * M_PI * 16.0 * n / 256.0));
  FeatureMatrix spec = stft_magnitude(tone);
  Eigen::Index peak;
  spec.values.row(2).maxCoeff(&peak);
  EXPECT_EQ(peak, 16);
}

TEST(Deltas, ConstantAndRamp) {
  FeatureMatrix constant{RowMatrix::Constant(6, 3, 2.5), 0.016};
  FeatureMatrix c = add_deltas(constant);
  EXPECT_EQ(c.dims(), 9);
  EXPECT_EQ(c.values.rightCols(6).cwiseAbs().maxCoeff(), 0.0);

  FeatureMatrix ramp{RowMatrix(10, 1), 0.016};
  for (int t = 0; t < 10; ++t) ramp.values(t, 0) = t;
  FeatureMatrix r = add_deltas(ramp);
  for (int t = 2; t < 8; ++t) EXPECT_NEAR(r.values(t, 1), 1.0, 1e-12) << t;
  // Acceleration needs interior deltas on both sides of the window.
  for (int t = 4; t < 6; ++t) EXPECT_NEAR(r.values(t, 2), 0.0, 1e-12) << t;
}

TEST(Deltas, WidthAndTimeReversalAntisymmetry) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal;
  FeatureMatrix f{RowMatrix(17, 4), 0.016};
  for (Eigen::Index i = 0; i < f.values.size(); ++i) f.values.data()[i] = normal(rng);
  FeatureMatrix reversed{f.values.colwise().reverse(), 0.016};
  FeatureMatrix d = add_deltas(f), dr = add_deltas(reversed);
  EXPECT_EQ(d.dims(), 3 * f.dims());
  RowMatrix flipped = d.values.middleCols(4, 4).colwise().reverse();
  EXPECT_LE((dr.values.middleCols(4, 4) + flipped).cwiseAbs().maxCoeff(), 1e-12);
}
