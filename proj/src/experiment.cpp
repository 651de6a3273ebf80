// experiment.cpp

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

#include "tsv/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "tsv/checkpoint.hpp"

namespace tsv::exp {

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  return os;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  return is;
}

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Utterance list with a speaker column; speaker labels in order of appearance.
void read_utterance_list(const fs::path& dir, const std::string& name, std::vector<std::string>& speakers,
                         std::vector<corpus::Utterance>& utts) {
  std::ifstream is = open_in(dir / name);
  std::map<std::string, int> label;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id, spk, path;
    if (!(ls >> id >> spk >> path)) throw std::runtime_error(name + ": malformed line '" + line + "'");
    auto [it, fresh] = label.emplace(spk, int(speakers.size()));
    if (fresh) speakers.push_back(spk);
    utts.push_back({id, it->second, dsp::load_wav(dir / path)});
  }
}

const char* protocol_tag(dsp::MixProtocol p) { return p == dsp::MixProtocol::kMax ? "max" : "min"; }

nn::AttentionOutput attend(const train::TsvModel& m, ad::Tape& tape, const dsp::Waveform& y, const dsp::Waveform& x) {
  return m.attention->forward(tape, nn::waveform_tensor(y), nn::waveform_tensor(x));
}

Eigen::VectorXd embed_attended(const train::TsvModel& m, const dsp::Waveform& y, const dsp::Waveform& ref) {
  ad::Tape tape;
  const nn::AttentionOutput out = attend(m, tape, y, ref);
  return m.representation->embed(tape, out).vector();
}

Eigen::VectorXd embed_direct(const train::TsvModel& m, const dsp::Waveform& w) {
  ad::Tape tape;
  return m.representation->embed_waveform(tape, nn::waveform_tensor(w)).vector();
}

Eigen::VectorXd embed_enrollment(const ExperimentConfig& c, const train::TsvModel& m, const dsp::Waveform& x) {
  // Attended enrollment feeds x as both observed and reference speech.
  return c.enroll_mode == EnrollMode::kAttended ? embed_attended(m, x, x) : embed_direct(m, x);
}

void save_full(const ExperimentConfig& c, const train::TsvModel& m, const fs::path& path) {
  io::save_checkpoint(path, c.model_digest(), {&m.attention_params, &m.representation_params});
}

void run_phase(const ExperimentConfig& c, train::Phase phase, train::TsvModel& model,
               const std::vector<corpus::Utterance>& utts, int speakers, const fs::path& out_dir, std::ostream* log) {
  const train::StagePlan plan = c.plan(phase);
  train::StageContext ctx;
  ctx.utts = &utts;
  ctx.speakers = speakers;
  ctx.weights = c.weights;
  ctx.seed = c.seed;
  ctx.threads = train::thread_count_from_env();
  if (log)
    ctx.on_epoch = [&](const train::EpochRecord& r) {
      *log << train::phase_name(phase) << " epoch " << r.epoch << " loss " << fmt17(r.loss) << " lr " << r.lr
           << std::endl;
    };
  const auto records = train::run_stage(plan, model, ctx);
  std::ofstream os = open_out(out_dir / ("loss-" + train::phase_name(phase) + ".txt"));
  train::write_loss_curve(os, records);
}

}  // namespace

void cmd_simulate(const ExperimentConfig& config, const fs::path& out_dir) {
  config.validate();
  fs::create_directories(out_dir / "wav" / "train");
  fs::create_directories(out_dir / "wav" / "eval");
  fs::create_directories(out_dir / "wav" / "test_max");
  fs::create_directories(out_dir / "wav" / "test_min");
  {
    std::ofstream os = open_out(out_dir / "config.conf");
    os << config.to_text();
  }

  corpus::ToyCorpusSpec spec = config.corpus;
  spec.seed = config.seed;
  const corpus::ToyCorpus toy = corpus::generate_toy_corpus(spec);

  {
    std::ofstream os = open_out(out_dir / "train.list");
    for (const auto& u : toy.train) {
      const std::string rel = "wav/train/" + u.id + ".wav";
      dsp::save_wav(u.wave, out_dir / rel);
      os << u.id << ' ' << toy.train_speakers[u.speaker].id << ' ' << rel << '\n';
    }
  }
  for (const auto& u : toy.eval) dsp::save_wav(u.wave, out_dir / "wav" / "eval" / (u.id + ".wav"));

  for (dsp::MixProtocol protocol : {dsp::MixProtocol::kMax, dsp::MixProtocol::kMin}) {
    const std::string tag = protocol_tag(protocol);
    const corpus::EvalSet set =
        corpus::make_eval_set(toy, config.eval_mixtures, config.snr_low, config.snr_high, protocol, config.seed + 1);
    if (protocol == dsp::MixProtocol::kMax) {
      std::ofstream os = open_out(out_dir / "enroll.list");
      for (std::size_t e : set.enrollment)
        os << toy.eval[e].id << ' ' << toy.eval_speakers[toy.eval[e].speaker].id << " wav/eval/" << toy.eval[e].id
           << ".wav\n";
    }
    std::ofstream list = open_out(out_dir / ("test_" + tag + ".list"));
    for (const auto& m : set.mixtures) {
      const std::string mix = "wav/test_" + tag + "/" + m.id + ".wav";
      const std::string target = "wav/test_" + tag + "/" + m.id + "-target.wav";
      dsp::save_wav(m.mix.mixture, out_dir / mix);
      dsp::save_wav(m.mix.target, out_dir / target);
      list << m.id << ' ' << toy.eval_speakers[m.target_speaker].id << ' '
           << toy.eval_speakers[m.interferer_speaker].id << ' ' << fmt17(m.snr_db) << ' ' << mix << ' ' << target
           << '\n';
    }
    std::vector<backend::TrialRecord> trials;
    for (const auto& t : set.trials) trials.push_back({t.enrol, t.test, t.target});
    backend::write_trials(trials, out_dir / (protocol == dsp::MixProtocol::kMax ? "trials" : "trials_min"));
  }
}

Dataset load_dataset(const fs::path& dir, dsp::MixProtocol protocol) {
  Dataset d;
  read_utterance_list(dir, "train.list", d.train_speakers, d.train);
  read_utterance_list(dir, "enroll.list", d.enroll_speakers, d.enroll);
  const std::string tag = protocol_tag(protocol);
  std::ifstream is = open_in(dir / ("test_" + tag + ".list"));
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    TestItem t;
    std::string mix, target;
    if (!(ls >> t.id >> t.target_speaker >> t.interferer_speaker >> t.snr_db >> mix >> target))
      throw std::runtime_error("test_" + tag + ".list: malformed line '" + line + "'");
    t.mixture = dsp::load_wav(dir / mix);
    t.target = dsp::load_wav(dir / target);
    d.tests.push_back(std::move(t));
  }
  d.trials = backend::read_trials(dir / (protocol == dsp::MixProtocol::kMax ? "trials" : "trials_min"));
  return d;
}

StageSelection parse_stages(const std::string& text) {
  StageSelection s;
  if (text == "all") return {true, true, true, true};
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "1") s.stage1 = true;
    else if (item == "2") s.stage2 = true;
    else if (item == "3") s.stage3 = true;
    else if (item == "d") s.direct = true;
    else throw std::invalid_argument("unknown stage '" + item + "' (expected 1, 2, 3, d or all)");
  }
  if (!(s.stage1 || s.stage2 || s.stage3 || s.direct)) throw std::invalid_argument("no stages selected");
  return s;
}

void cmd_train(const ExperimentConfig& config, const fs::path& corpus_dir, const fs::path& out_dir,
               const StageSelection& stages, std::ostream* log) {
  config.validate();
  if (stages.stage1 && stages.stage3 && !stages.stage2)
    throw std::invalid_argument("stage 3 needs stage 2; select 1,2,3 or resume with 3 alone");
  fs::create_directories(out_dir);
  Dataset data = load_dataset(corpus_dir);
  const int speakers = int(data.train_speakers.size());
  if (speakers != config.corpus.train_speakers)
    throw ConfigError("corpus.train_speakers", "corpus has " + std::to_string(speakers) + " training speakers");

  const bool chain = stages.stage1 || stages.stage2 || stages.stage3;
  if (chain) {
    train::TsvModel model(config.attention, config.representation, config.seed);
    if (stages.stage1) {
      run_phase(config, train::Phase::kExtractor, model, data.train, speakers, out_dir, log);
      run_phase(config, train::Phase::kExtractorMc, model, data.train, speakers, out_dir, log);
      io::save_checkpoint(out_dir / "stage1.ckpt", config.attention_digest(), {&model.attention_params});
    } else if (stages.stage2) {
      io::load_checkpoint(out_dir / "stage1.ckpt", config.attention_digest(), {&model.attention_params});
    } else {
      io::load_checkpoint(out_dir / "stage2.ckpt", config.model_digest(),
                          {&model.attention_params, &model.representation_params});
    }
    if (stages.stage2) {
      run_phase(config, train::Phase::kRepresentation, model, data.train, speakers, out_dir, log);
      save_full(config, model, out_dir / "stage2.ckpt");
    }
    if (stages.stage3) {
      run_phase(config, train::Phase::kJoint, model, data.train, speakers, out_dir, log);
      save_full(config, model, out_dir / "stage3.ckpt");
    }
  }
  if (stages.direct) {
    train::TsvModel model(config.attention, config.representation, config.seed);
    run_phase(config, train::Phase::kDirect, model, data.train, speakers, out_dir, log);
    save_full(config, model, out_dir / "direct.ckpt");
  }
}

std::unique_ptr<train::TsvModel> load_model(const ExperimentConfig& config, const fs::path& checkpoint) {
  auto model = std::make_unique<train::TsvModel>(config.attention, config.representation, config.seed);
  io::load_checkpoint(checkpoint, config.model_digest(), {&model->attention_params, &model->representation_params});
  // Inference only: keep the tape from recording parameter paths.
  model->attention_params.set_trainable(false);
  model->representation_params.set_trainable(false);
  return model;
}

void write_embeddings(const EmbeddingArchive& archive, const fs::path& path) {
  std::ofstream os = open_out(path);
  for (const auto& [key, v] : archive) {
    os << key;
    for (double x : v) os << ' ' << fmt17(x);
    os << '\n';
  }
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

EmbeddingArchive read_embeddings(const fs::path& path) {
  std::ifstream is = open_in(path);
  EmbeddingArchive out;
  std::string line;
  for (int n = 1; std::getline(is, line); ++n) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key, tok;
    ls >> key;
    std::vector<double> values;
    while (ls >> tok) {
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end != tok.c_str() + tok.size())
        throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": bad number '" + tok + "'");
      values.push_back(v);
    }
    if (values.empty()) throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": empty embedding");
    if (!out.empty() && Eigen::Index(values.size()) != out.front().second.size())
      throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": embedding width changes");
    out.emplace_back(key, Eigen::Map<Eigen::VectorXd>(values.data(), Eigen::Index(values.size())));
  }
  return out;
}

void cmd_embed(const ExperimentConfig& config, const fs::path& corpus_dir, const fs::path& checkpoint,
               const fs::path& out_dir, dsp::MixProtocol protocol) {
  config.validate();
  fs::create_directories(out_dir);
  const Dataset data = load_dataset(corpus_dir, protocol);
  const auto model = load_model(config, checkpoint);
  const int threads = train::thread_count_from_env();

  // Backend data: attended clean training speech, the same for attended and
  // direct enrollment, plus optional attended training mixtures labeled with
  // their target speaker. Mode none never runs the attention module.
  const bool unattended = config.enroll_mode == EnrollMode::kNone;
  EmbeddingArchive train_emb(data.train.size());
  std::vector<int> train_labels(data.train.size());
  train::parallel_for(data.train.size(), threads, [&](std::size_t i) {
    const dsp::Waveform& w = data.train[i].wave;
    train_emb[i] = {data.train[i].id, unattended ? embed_direct(*model, w) : embed_attended(*model, w, w)};
    train_labels[i] = data.train[i].speaker;
  });
  if (config.backend_mixtures > 0) {
    const int speakers = int(data.train_speakers.size());
    const auto mixes = corpus::make_mixtures(data.train, speakers, {}, config.backend_mixtures * speakers,
                                             config.snr_low, config.snr_high, dsp::MixProtocol::kMax, config.seed + 2);
    const auto pools = corpus::utterances_by_speaker(data.train, speakers);
    EmbeddingArchive extra(mixes.size());
    train::parallel_for(mixes.size(), threads, [&](std::size_t i) {
      const auto& m = mixes[i];
      const auto& pool = pools[m.target_speaker];
      const std::size_t ref = pool[0] == m.target_utt ? pool[1] : pool[0];
      const Eigen::VectorXd e = unattended ? embed_direct(*model, m.mix.mixture)
                                           : embed_attended(*model, m.mix.mixture, data.train[ref].wave);
      extra[i] = {"backend-" + m.id, e};
    });
    for (std::size_t i = 0; i < mixes.size(); ++i) {
      train_emb.push_back(extra[i]);
      train_labels.push_back(mixes[i].target_speaker);
    }
  }
  write_embeddings(train_emb, out_dir / "train.emb");
  {
    std::ofstream os = open_out(out_dir / "train.labels");
    for (std::size_t i = 0; i < train_emb.size(); ++i) os << train_emb[i].first << ' ' << train_labels[i] << '\n';
  }

  EmbeddingArchive enroll(data.enroll.size());
  train::parallel_for(data.enroll.size(), threads, [&](std::size_t i) {
    enroll[i] = {data.enroll[i].id, embed_enrollment(config, *model, data.enroll[i].wave)};
  });
  write_embeddings(enroll, out_dir / "enroll.emb");

  EmbeddingArchive tests;
  if (config.enroll_mode == EnrollMode::kNone) {
    tests.resize(data.tests.size());
    train::parallel_for(data.tests.size(), threads, [&](std::size_t i) {
      tests[i] = {data.tests[i].id, embed_direct(*model, data.tests[i].mixture)};
    });
  } else {
    // Every test is attended once per enrollment reference.
    const std::size_t ne = data.enroll.size();
    tests.resize(data.tests.size() * ne);
    train::parallel_for(tests.size(), threads, [&](std::size_t k) {
      const TestItem& t = data.tests[k / ne];
      const corpus::Utterance& e = data.enroll[k % ne];
      tests[k] = {t.id + "@" + e.id, embed_attended(*model, t.mixture, e.wave)};
    });
  }
  write_embeddings(tests, out_dir / "test.emb");
}

void cmd_score(const ExperimentConfig& config, const fs::path& embed_dir, const fs::path& trials_path,
               const fs::path& scores_out) {
  config.validate();
  const EmbeddingArchive train_emb = read_embeddings(embed_dir / "train.emb");
  std::map<std::string, int> label_of;
  {
    std::ifstream is = open_in(embed_dir / "train.labels");
    std::string key;
    int label;
    while (is >> key >> label) label_of[key] = label;
  }
  if (train_emb.empty()) throw std::runtime_error("train.emb is empty");
  Eigen::MatrixXd xs(train_emb.front().second.size(), Eigen::Index(train_emb.size()));
  std::vector<int> labels;
  for (std::size_t i = 0; i < train_emb.size(); ++i) {
    auto it = label_of.find(train_emb[i].first);
    if (it == label_of.end()) throw std::runtime_error("no label for training embedding " + train_emb[i].first);
    xs.col(Eigen::Index(i)) = train_emb[i].second;
    labels.push_back(it->second);
  }
  const auto be = backend::ScoringBackend<double>::fit(xs, labels, config.backend);
  const backend::PldaScorer<double> scorer(be.plda);

  std::map<std::string, Eigen::VectorXd> enroll, tests;
  for (auto& [k, v] : read_embeddings(embed_dir / "enroll.emb")) enroll[k] = be.transform(v);
  for (auto& [k, v] : read_embeddings(embed_dir / "test.emb")) tests[k] = be.transform(v);

  const auto trials = backend::read_trials(trials_path);
  std::vector<backend::ScoreRecord> out(trials.size());
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto& t = trials[i];
    auto e = enroll.find(t.enrol);
    if (e == enroll.end()) throw std::runtime_error("missing enrollment embedding " + t.enrol);
    auto x = tests.find(t.test + "@" + t.enrol);
    if (x == tests.end()) x = tests.find(t.test);
    if (x == tests.end()) throw std::runtime_error("missing test embedding " + t.test + "@" + t.enrol);
    const auto [raw, norm] = be.score(scorer, e->second, x->second);
    out[i] = {t.enrol, t.test, raw, norm};
  }
  backend::write_scores(out, scores_out);
}

Report cmd_eval(const fs::path& scores_path, const fs::path& trials_path, const fs::path& det_out) {
  const auto scores = backend::read_scores(scores_path);
  std::map<std::pair<std::string, std::string>, bool> truth;
  for (const auto& t : backend::read_trials(trials_path)) truth[{t.enrol, t.test}] = t.target;
  std::vector<double> s;
  std::vector<bool> y;
  for (const auto& r : scores) {
    auto it = truth.find({r.enrol, r.test});
    if (it == truth.end()) throw std::runtime_error("score for unknown trial " + r.enrol + " " + r.test);
    s.push_back(r.norm);
    y.push_back(it->second);
  }
  Report rep;
  rep.eer = backend::compute_eer(s, y);
  rep.dcf08 = backend::compute_min_dcf(s, y, backend::kDcf08);
  rep.dcf10 = backend::compute_min_dcf(s, y, backend::kDcf10);
  const auto points = backend::det_points(s, y);
  rep.det_points = points.size();
  if (!det_out.empty()) backend::write_det_points(points, det_out);
  return rep;
}

std::string format_report(const Report& r) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "EER %.4f DCF08 %.4f DCF10 %.4f", r.eer, r.dcf08, r.dcf10);
  return buf;
}

}  // namespace tsv::exp
