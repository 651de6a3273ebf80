// training_test.cpp

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
#include <sstream>

#include "net_test_util.hpp"
#include "tsv/training.hpp"

using namespace tsv;
using namespace tsv::train;

namespace {

// Plain-loop SI-SDR on zero-mean copies.
double oracle_si_sdr(const Tensor& est, const Tensor& ref) {
  const auto e = est.data(), r = ref.data();
  const std::size_t n = e.size();
  double me = 0, mr = 0;
  for (std::size_t i = 0; i < n; ++i) me += e[i], mr += r[i];
  me /= n, mr /= n;
  double dot = 0, rr = 0;
  for (std::size_t i = 0; i < n; ++i) dot += (e[i] - me) * (r[i] - mr), rr += (r[i] - mr) * (r[i] - mr);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = dot / rr * (r[i] - mr);
    num += t * t;
    den += (e[i] - me - t) * (e[i] - me - t);
  }
  return 10 * std::log10(num / den);
}

const corpus::ToyCorpus& small_corpus() {
  static const corpus::ToyCorpus c = [] {
    corpus::ToyCorpusSpec spec;
    spec.train_speakers = 3;
    spec.eval_speakers = 2;
    spec.utterances_per_speaker = 3;
    spec.min_seconds = 0.3;
    spec.max_seconds = 0.5;
    spec.seed = 5;
    return corpus::generate_toy_corpus(spec);
  }();
  return c;
}

StagePlan small_plan(Phase phase) {
  StagePlan p;
  p.phase = phase;
  p.stage = phase == Phase::kRepresentation ? 2 : phase == Phase::kJoint ? 3 : 1;
  p.lr = 1e-3;
  p.epochs = 2;
  p.batches_per_epoch = 2;
  p.batch_size = 2;
  p.sampling.segment_samples = 600;
  p.sampling.include_single = true;
  return p;
}

StageContext small_context(int threads = 1) {
  StageContext ctx;
  ctx.utts = &small_corpus().train;
  ctx.speakers = 3;
  ctx.seed = 11;
  ctx.threads = threads;
  return ctx;
}

std::vector<std::vector<double>> snapshot(const nn::ParameterSet& params) {
  std::vector<std::vector<double>> out;
  for (const auto& p : params.items()) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

std::unique_ptr<TsvModel> small_model(nn::Scheme scheme = nn::Scheme::kFA) {
  return std::make_unique<TsvModel>(testutil::tiny_attention(), testutil::tiny_representation(scheme), 3);
}

}  // namespace

TEST(Loss, CrossEntropyUniformAndConfident) {
  ad::Tape tape;
  EXPECT_NEAR(loss_ce(tape, Tensor::zeros({4, 1}), 2).item(), std::log(4.0), 1e-14);
  EXPECT_LT(loss_ce(tape, Tensor({3, 1}, {30.0, 0.0, 0.0}), 0).item(), 1e-10);
  EXPECT_NEAR(loss_ce(tape, Tensor({3, 1}, {30.0, 0.0, 0.0}), 1).item(), 30.0 + std::log1p(2 * std::exp(-30.0)),
              1e-12);
}

TEST(Loss, TotalCombinesWithWeights) {
  ad::Tape tape;
  Tensor j1 = Tensor::scalar(1.0), j2 = Tensor::scalar(2.0), j3 = Tensor::scalar(3.0);
  for (Tensor* t : {&j1, &j2, &j3}) t->set_requires_grad(true);
  const Tensor total = total_loss(tape, j1, j2, j3, LossWeights{});
  EXPECT_DOUBLE_EQ(total.item(), 51.0);
  const ad::Gradients g = tape.backward(total);
  EXPECT_DOUBLE_EQ(g.get(j1)[0], 1.0);
  EXPECT_DOUBLE_EQ(g.get(j2)[0], 10.0);
  EXPECT_DOUBLE_EQ(g.get(j3)[0], 10.0);
  EXPECT_DOUBLE_EQ(total_loss(tape, Tensor(), Tensor(), j3, LossWeights{}).item(), 30.0);
  EXPECT_THROW(total_loss(tape, Tensor(), Tensor(), Tensor(), LossWeights{}), std::invalid_argument);
}

TEST(Loss, J1MatchesPlainSiSdr) {
  std::mt19937_64 rng(1);
  const Tensor s = testutil::random_wave(400, rng);
  std::array<Tensor, 3> est{testutil::random_wave(400, rng), testutil::random_wave(400, rng),
                            testutil::random_wave(400, rng)};
  for (int i = 0; i < 3; ++i) est[i].mutable_vector() += (i + 1) * s.vector();
  ad::Tape tape;
  const LossWeights w;
  const double want =
      -(0.8 * oracle_si_sdr(est[0], s) + 0.1 * oracle_si_sdr(est[1], s) + 0.1 * oracle_si_sdr(est[2], s));
  EXPECT_NEAR(loss_j1(tape, est, s, w).item(), want, 1e-10);

  LossWeights first_only = w;
  first_only.alpha = first_only.beta = 0.0;
  EXPECT_NEAR(loss_j1(tape, est, s, first_only).item(), -oracle_si_sdr(est[0], s), 1e-10);
  EXPECT_NEAR(loss_j1(tape, {s, s, s}, s, w).item(), -dsp::kSiSdrCapDb, 1e-9);
}

TEST(Loss, WeightValidation) {
  LossWeights w;
  w.alpha = 0.6, w.beta = 0.5;
  EXPECT_THROW(w.validate(), std::invalid_argument);
  w = LossWeights{};
  w.eta = -1;
  EXPECT_THROW(w.validate(), std::invalid_argument);
}

TEST(Optimizer, AdamFirstStepIsLearningRate) {
  nn::ParameterSet params;
  params.add("w", Tensor({3}, {1.0, 2.0, 3.0}));
  params.add("z", Tensor({2}, {5.0, 5.0}));
  Adam adam(1e-3);
  adam.step(params, {{"w", Eigen::Vector3d(0.5, -2.0, 0.0)}, {"z", Eigen::Vector2d::Zero()}});
  const auto w = params.find("w").data();
  EXPECT_NEAR(w[0], 1.0 - 1e-3, 1e-10);
  EXPECT_NEAR(w[1], 2.0 + 1e-3, 1e-10);
  EXPECT_EQ(w[2], 3.0);
  EXPECT_EQ(params.find("z").data()[0], 5.0);
  EXPECT_EQ(adam.steps(), 1);
}

TEST(Optimizer, AdamIsScaleInvariant) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  nn::ParameterSet a, b;
  a.add("w", Tensor({5}));
  b.add("w", Tensor({5}));
  Adam oa(1e-2), ob(1e-2);
  for (int t = 0; t < 20; ++t) {
    Eigen::VectorXd g(5);
    for (auto& v : g) v = nd(rng);
    oa.step(a, {{"w", g}});
    ob.step(b, {{"w", 1000.0 * g}});
  }
  EXPECT_LE((a.find("w").vector() - b.find("w").vector()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Optimizer, GradientSizeChecked) {
  nn::ParameterSet params;
  params.add("w", Tensor({3}));
  Adam adam(1e-3);
  EXPECT_THROW(adam.step(params, {{"w", Eigen::Vector2d::Zero()}}), std::invalid_argument);
}

TEST(Optimizer, GlobalNormClip) {
  std::map<std::string, Eigen::VectorXd> g{{"a", Eigen::VectorXd::Constant(1, 3.0)},
                                           {"b", Eigen::VectorXd::Constant(1, 4.0)}};
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 1.0), 5.0);
  EXPECT_NEAR(g["a"][0], 0.6, 1e-15);
  EXPECT_NEAR(g["b"][0], 0.8, 1e-15);
  EXPECT_NEAR(clip_global_norm(g, 5.0), 1.0, 1e-15);
  EXPECT_NEAR(g["b"][0], 0.8, 1e-15);
}

TEST(Schedule, HalvesAfterThreeStagnantEpochs) {
  PlateauHalver h(3);
  double lr = 1e-3;
  std::vector<double> rates;
  for (double loss : {5.0, 4.0, 4.0, 4.5, 4.0, 4.0, 3.0, 3.5, 3.5, 3.5}) {
    lr = h.update(loss, lr);
    rates.push_back(lr);
  }
  const std::vector<double> want{1e-3, 1e-3, 1e-3, 1e-3, 5e-4, 5e-4, 5e-4, 5e-4, 5e-4, 2.5e-4};
  ASSERT_EQ(rates.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_DOUBLE_EQ(rates[i], want[i]) << i;
}

TEST(Sampling, DeterministicAndShaped) {
  SamplingOptions opt;
  opt.segment_samples = 600;
  opt.include_single = true;
  const auto& utts = small_corpus().train;
  const auto a = sample_batch(utts, 3, opt, 16, 9), b = sample_batch(utts, 3, opt, 16, 9);
  int singles = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (const Tensor* t : {&a[i].y, &a[i].x, &a[i].s}) EXPECT_EQ(t->cols(), 600);
    EXPECT_EQ(a[i].y.vector(), b[i].y.vector());
    EXPECT_EQ(a[i].x.vector(), b[i].x.vector());
    EXPECT_EQ(a[i].label, b[i].label);
    EXPECT_GE(a[i].label, 0);
    EXPECT_LT(a[i].label, 3);
    EXPECT_NE(a[i].x.vector(), a[i].s.vector());
    if (a[i].single) {
      ++singles;
      EXPECT_EQ(a[i].y.vector(), a[i].s.vector());
    } else {
      const double ratio = 10 * std::log10(a[i].s.vector().squaredNorm() / (a[i].y.vector() - a[i].s.vector()).squaredNorm());
      EXPECT_GE(ratio, -1e-9);
      EXPECT_LE(ratio, 5.0 + 1e-9);
    }
  }
  EXPECT_GT(singles, 0);
  EXPECT_LT(singles, 16);
  opt.include_single = false;
  for (const auto& ex : sample_batch(utts, 3, opt, 8, 9)) EXPECT_FALSE(ex.single);
}

TEST(Sampling, SegmentPadsAndCrops) {
  dsp::Waveform w{{1, 2, 3}, 8000};
  EXPECT_EQ(segment(w, 1, 4).vector(), Eigen::Vector4d(2, 3, 0, 0));
  EXPECT_EQ(segment(w, 0, 2).vector(), Eigen::Vector2d(1, 2));
}

TEST(Stages, DefaultPlans) {
  const auto plans = default_stage_plans(32000, 16);
  ASSERT_EQ(plans.size(), 4u);
  EXPECT_EQ(plans[0].phase, Phase::kExtractor);
  EXPECT_DOUBLE_EQ(plans[0].lr, 1e-3);
  EXPECT_EQ(plans[1].phase, Phase::kExtractorMc);
  EXPECT_DOUBLE_EQ(plans[1].lr, 1e-4);
  EXPECT_TRUE(plans[1].sampling.include_single);
  EXPECT_DOUBLE_EQ(plans[2].lr, 1e-4);
  EXPECT_DOUBLE_EQ(plans[3].lr, 1e-5);
  for (const auto& p : plans) {
    EXPECT_EQ(p.batch_size, 4);
    EXPECT_EQ(p.patience, 3);
    EXPECT_DOUBLE_EQ(p.clip_norm, 5.0);
  }
}

TEST(Stages, FrozenModulesKeepTheirValues) {
  struct Case {
    Phase phase;
    bool attention_moves, representation_moves;
  };
  for (const Case c : {Case{Phase::kExtractor, true, false}, Case{Phase::kRepresentation, false, true},
                       Case{Phase::kDirect, false, true}, Case{Phase::kJoint, true, true}}) {
    auto model = small_model();
    const auto a0 = snapshot(model->attention_params), r0 = snapshot(model->representation_params);
    run_stage(small_plan(c.phase), *model, small_context());
    EXPECT_EQ(snapshot(model->attention_params) != a0, c.attention_moves) << phase_name(c.phase);
    EXPECT_EQ(snapshot(model->representation_params) != r0, c.representation_moves) << phase_name(c.phase);
  }
}

TEST(Stages, RunIsDeterministicAcrossThreadCounts) {
  auto a = small_model(), b = small_model();
  const auto ra = run_stage(small_plan(Phase::kJoint), *a, small_context(1));
  const auto rb = run_stage(small_plan(Phase::kJoint), *b, small_context(3));
  ASSERT_EQ(ra.size(), 2u);
  for (std::size_t i = 0; i < ra.size(); ++i) EXPECT_EQ(ra[i].loss, rb[i].loss);
  EXPECT_EQ(snapshot(a->attention_params), snapshot(b->attention_params));
  EXPECT_EQ(snapshot(a->representation_params), snapshot(b->representation_params));
  std::ostringstream sa, sb;
  write_loss_curve(sa, ra);
  write_loss_curve(sb, rb);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(sa.str().substr(0, 4), "3 1 ");
}

TEST(Stages, EpochCallbackAndRecords) {
  auto model = small_model();
  StageContext ctx = small_context();
  int calls = 0;
  ctx.on_epoch = [&](const EpochRecord& r) {
    ++calls;
    EXPECT_EQ(r.stage, 1);
    EXPECT_TRUE(std::isfinite(r.loss));
    EXPECT_LT(r.j1, 0.0 + 200.0);
  };
  run_stage(small_plan(Phase::kExtractorMc), *model, ctx);
  EXPECT_EQ(calls, 2);
  EXPECT_TRUE(model->attention_params.all_finite());
}

TEST(Threads, EnvironmentCount) {
  setenv("TSVKIT_THREADS", "3", 1);
  EXPECT_EQ(thread_count_from_env(), 3);
  setenv("TSVKIT_THREADS", "0", 1);
  EXPECT_EQ(thread_count_from_env(), 1);
  unsetenv("TSVKIT_THREADS");
  EXPECT_EQ(thread_count_from_env(), 1);
}
