// training.cpp

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

#include "tsv/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace tsv::train {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x2545F4914F6CDD1Dull;
  for (std::uint64_t p : parts) h = splitmix(h ^ p);
  return h;
}

bool trains_attention(Phase p) {
  return p == Phase::kExtractor || p == Phase::kExtractorMc || p == Phase::kJoint;
}

bool trains_representation(Phase p) {
  return p == Phase::kRepresentation || p == Phase::kJoint || p == Phase::kDirect;
}

}  // namespace

void LossWeights::validate() const {
  if (alpha < 0 || beta < 0 || alpha + beta > 1) throw std::invalid_argument("loss weights need alpha, beta >= 0 and alpha + beta <= 1");
  if (gamma < 0 || eta < 0) throw std::invalid_argument("loss weights gamma and eta must be non-negative");
}

Tensor loss_j1(Tape& tape, const std::array<Tensor, 3>& estimates, const Tensor& target, const LossWeights& w) {
  std::vector<Tensor> terms;
  for (const auto& e : estimates) terms.push_back(ad::si_sdr(tape, e, target));
  return ad::weighted_sum(tape, terms, {-(1.0 - w.alpha - w.beta), -w.alpha, -w.beta});
}

Tensor loss_ce(Tape& tape, const Tensor& logits, Index label) { return ad::cross_entropy(tape, logits, label); }

Tensor total_loss(Tape& tape, const Tensor& j1, const Tensor& j2, const Tensor& j3, const LossWeights& w) {
  std::vector<Tensor> terms;
  std::vector<double> weights;
  if (j1.defined()) terms.push_back(j1), weights.push_back(1.0);
  if (j2.defined()) terms.push_back(j2), weights.push_back(w.gamma);
  if (j3.defined()) terms.push_back(j3), weights.push_back(w.eta);
  if (terms.empty()) throw std::invalid_argument("total_loss needs at least one component");
  return ad::weighted_sum(tape, terms, weights);
}

void Adam::step(const std::vector<nn::ParameterSet*>& sets, const std::map<std::string, Eigen::VectorXd>& grads) {
  ++step_;
  const double c1 = 1.0 - std::pow(kBeta1, double(step_));
  const double c2 = 1.0 - std::pow(kBeta2, double(step_));
  for (nn::ParameterSet* params : sets) {
    for (auto& p : params->items()) {
      auto it = grads.find(p.name);
      if (it == grads.end()) continue;
      const Eigen::VectorXd& g = it->second;
      if (g.size() != p.tensor.numel())
        throw std::invalid_argument("gradient for " + p.name + " has " + std::to_string(g.size()) + " entries, expected " +
                                    std::to_string(p.tensor.numel()));
      Moments& mo = moments_[p.name];
      if (mo.m.size() == 0) {
        mo.m = Eigen::VectorXd::Zero(g.size());
        mo.v = Eigen::VectorXd::Zero(g.size());
      }
      mo.m = kBeta1 * mo.m + (1.0 - kBeta1) * g;
      mo.v = kBeta2 * mo.v + (1.0 - kBeta2) * g.cwiseProduct(g);
      p.tensor.mutable_vector().array() -=
          lr_ * (mo.m.array() / c1) / ((mo.v.array() / c2).sqrt() + kEps);
    }
  }
}

double clip_global_norm(std::map<std::string, Eigen::VectorXd>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0)
    for (auto& [name, g] : grads) g *= max_norm / norm;
  return norm;
}

double PlateauHalver::update(double epoch_loss, double lr) {
  if (!has_best_ || epoch_loss < best_) {
    has_best_ = true;
    best_ = epoch_loss;
    stagnant_ = 0;
    return lr;
  }
  if (++stagnant_ >= patience_) {
    stagnant_ = 0;
    return lr / 2.0;
  }
  return lr;
}

Tensor segment(const dsp::Waveform& w, Index offset, Index length) {
  Tensor t({1, length});
  auto out = t.mutable_data();
  for (Index i = 0; i < length; ++i) {
    const Index src = offset + i;
    out[i] = src < Index(w.size()) ? w.samples[src] : 0.0;
  }
  return t;
}

std::vector<Example> sample_batch(const std::vector<corpus::Utterance>& utts, int speakers,
                                  const SamplingOptions& options, int count, std::uint64_t seed) {
  if (utts.empty()) throw std::invalid_argument("cannot sample from an empty corpus");
  const auto pools = corpus::utterances_by_speaker(utts, speakers);
  for (const auto& pool : pools)
    if (pool.size() < 2) throw std::invalid_argument("every training speaker needs at least two utterances");

  std::mt19937_64 rng(seed);
  const Index len = options.segment_samples;
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  // Crops can land in a pause between syllables; redraw until one has energy.
  auto crop = [&](const dsp::Waveform& w) {
    const Index slack = std::max<Index>(Index(w.size()) - len, 0);
    Tensor t;
    for (int attempt = 0; attempt < 64; ++attempt) {
      t = segment(w, Index(std::uniform_int_distribution<Index>(0, slack)(rng)), len);
      if (t.vector().squaredNorm() > 0.0) return t;
    }
    return t;
  };
  std::uniform_real_distribution<double> unit(0.0, 1.0), snr(options.snr_low, options.snr_high);

  std::vector<Example> batch;
  for (int i = 0; i < count; ++i) {
    Example ex;
    ex.label = Index(pick(std::size_t(speakers)));
    const auto& pool = pools[ex.label];
    const std::size_t target = pool[pick(pool.size())];
    std::size_t reference;
    do {
      reference = pool[pick(pool.size())];
    } while (reference == target);
    ex.single = options.include_single && unit(rng) < options.single_fraction;
    ex.s = crop(utts[target].wave);
    ex.x = crop(utts[reference].wave);
    if (ex.single) {
      ex.y = ex.s;
    } else {
      int other;
      do {
        other = int(pick(std::size_t(speakers)));
      } while (other == ex.label);
      Tensor interference = crop(utts[pools[other][pick(pools[other].size())]].wave);
      const dsp::Mixture m = dsp::mix_at_snr(nn::tensor_waveform(ex.s), nn::tensor_waveform(interference), snr(rng),
                                             dsp::MixProtocol::kMax);
      ex.y = nn::waveform_tensor(m.mixture);
    }
    batch.push_back(std::move(ex));
  }
  return batch;
}

TsvModel::TsvModel(const nn::AttentionConfig& attention_config, const nn::RepresentationConfig& representation_config,
                   std::uint64_t seed) {
  nn::Rng rng_a(mix_seed({seed, 1})), rng_r(mix_seed({seed, 2}));
  attention = std::make_unique<nn::SpeakerAttention>(attention_config, attention_params, rng_a);
  representation = std::make_unique<nn::SpeakerRepresentation>(representation_config, representation_params, rng_r);
}

std::string phase_name(Phase phase) {
  switch (phase) {
    case Phase::kExtractor: return "extractor";
    case Phase::kExtractorMc: return "extractor-mc";
    case Phase::kRepresentation: return "representation";
    case Phase::kJoint: return "joint";
    case Phase::kDirect: return "direct";
  }
  return "?";
}

std::vector<StagePlan> default_stage_plans(Index segment_samples, int batches_per_epoch, int epochs1, int epochs2,
                                           int epochs3) {
  StagePlan base;
  base.batches_per_epoch = batches_per_epoch;
  base.sampling.segment_samples = segment_samples;

  StagePlan s1 = base, s1b = base, s2 = base, s3 = base;
  s1.stage = 1, s1.phase = Phase::kExtractor, s1.lr = 1e-3, s1.epochs = epochs1;
  s1b.stage = 1, s1b.phase = Phase::kExtractorMc, s1b.lr = 1e-4, s1b.epochs = std::max(1, epochs1 / 2);
  s1b.sampling.include_single = true;
  s2.stage = 2, s2.phase = Phase::kRepresentation, s2.lr = 1e-4, s2.epochs = epochs2;
  s2.sampling.include_single = true;
  s3.stage = 3, s3.phase = Phase::kJoint, s3.lr = 1e-5, s3.epochs = epochs3;
  s3.sampling.include_single = true;
  return {s1, s1b, s2, s3};
}

int thread_count_from_env() {
  const char* env = std::getenv("TSVKIT_THREADS");
  if (!env) return 1;
  const int n = std::atoi(env);
  return std::max(n, 1);
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(std::max(threads, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

namespace {

struct ExampleResult {
  double loss = 0.0, j1 = 0.0;
  std::map<std::string, Eigen::VectorXd> grads;
};

ExampleResult run_example(const StagePlan& plan, const TsvModel& model, const Example& ex, const LossWeights& w) {
  Tape tape;
  Tensor j1, j2, j3;
  if (plan.phase == Phase::kDirect) {
    Tensor emb = model.representation->embed_waveform(tape, ex.s);
    j3 = loss_ce(tape, model.representation->classify(tape, emb), ex.label);
  } else {
    nn::AttentionOutput out = model.attention->forward(tape, ex.y, ex.x);
    if (plan.phase != Phase::kRepresentation) {
      j1 = loss_j1(tape, out.signals, ex.s, w);
      j2 = loss_ce(tape, out.logits, ex.label);
    }
    if (plan.phase == Phase::kRepresentation || plan.phase == Phase::kJoint) {
      Tensor emb = model.representation->embed(tape, out);
      j3 = loss_ce(tape, model.representation->classify(tape, emb), ex.label);
    }
  }
  Tensor loss;
  if (plan.phase == Phase::kRepresentation || plan.phase == Phase::kDirect)
    loss = j3;
  else
    loss = total_loss(tape, j1, j2, j3, w);

  ExampleResult r;
  r.loss = loss.item();
  r.j1 = j1.defined() ? j1.item() : 0.0;
  if (!std::isfinite(r.loss)) return r;
  ad::Gradients g = tape.backward(loss);
  if (trains_attention(plan.phase)) r.grads.merge(nn::collect_gradients(model.attention_params, g));
  if (trains_representation(plan.phase)) r.grads.merge(nn::collect_gradients(model.representation_params, g));
  return r;
}

}  // namespace

std::vector<EpochRecord> run_stage(const StagePlan& plan, TsvModel& model, const StageContext& ctx) {
  if (!ctx.utts) throw std::invalid_argument("run_stage needs a corpus");
  ctx.weights.validate();
  model.attention_params.set_trainable(trains_attention(plan.phase));
  model.representation_params.set_trainable(trains_representation(plan.phase));

  Adam adam(plan.lr);
  PlateauHalver schedule(plan.patience);
  std::vector<EpochRecord> records;
  for (int epoch = 1; epoch <= plan.epochs; ++epoch) {
    double loss_sum = 0.0, j1_sum = 0.0;
    int count = 0;
    for (int b = 0; b < plan.batches_per_epoch; ++b) {
      const std::uint64_t seed =
          mix_seed({ctx.seed, std::uint64_t(plan.stage), std::uint64_t(plan.phase), std::uint64_t(epoch),
                    std::uint64_t(b)});
      std::vector<Example> batch = sample_batch(*ctx.utts, ctx.speakers, plan.sampling, plan.batch_size, seed);
      std::vector<ExampleResult> results(batch.size());
      parallel_for(batch.size(), ctx.threads,
                   [&](std::size_t i) { results[i] = run_example(plan, model, batch[i], ctx.weights); });

      std::map<std::string, Eigen::VectorXd> grads;
      for (const auto& r : results) {
        if (!std::isfinite(r.loss)) {
          std::ostringstream msg;
          msg << "non-finite loss in stage " << plan.stage << " (" << phase_name(plan.phase) << "), epoch " << epoch
              << ", batch " << b;
          throw NonFiniteLoss(msg.str());
        }
        loss_sum += r.loss;
        j1_sum += r.j1;
        ++count;
        for (const auto& [name, g] : r.grads) {
          auto it = grads.find(name);
          if (it == grads.end())
            grads.emplace(name, g);
          else
            it->second += g;
        }
      }
      for (auto& [name, g] : grads) g /= double(batch.size());
      clip_global_norm(grads, plan.clip_norm);
      std::vector<nn::ParameterSet*> sets;
      if (trains_attention(plan.phase)) sets.push_back(&model.attention_params);
      if (trains_representation(plan.phase)) sets.push_back(&model.representation_params);
      adam.step(sets, grads);
    }
    EpochRecord rec{plan.stage, epoch, loss_sum / count, adam.lr(), j1_sum / count};
    records.push_back(rec);
    if (ctx.on_epoch) ctx.on_epoch(rec);
    adam.set_lr(schedule.update(rec.loss, adam.lr()));
  }
  model.attention_params.set_trainable(true);
  model.representation_params.set_trainable(true);
  return records;
}

void write_loss_curve(std::ostream& os, const std::vector<EpochRecord>& records) {
  for (const auto& r : records)
    os << r.stage << ' ' << r.epoch << ' ' << std::setprecision(17) << r.loss << ' ' << r.lr << '\n';
}

}  // namespace tsv::train
