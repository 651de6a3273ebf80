// backend.cpp

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

#include "tsv/backend.hpp"

#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace tsv::backend {

namespace {

void check_labels(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw BackendError("scores and labels differ in length");
  const auto targets = std::count(labels.begin(), labels.end(), true);
  if (targets == 0 || targets == std::ptrdiff_t(labels.size()))
    throw BackendError("detection metrics need both target and nontarget trials");
  for (double s : scores)
    if (!std::isfinite(s)) throw BackendError("detection metrics need finite scores");
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

std::vector<OperatingPoint> det_points(const std::vector<double>& scores, const std::vector<bool>& labels) {
  check_labels(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const double targets = double(std::count(labels.begin(), labels.end(), true));
  const double nontargets = double(labels.size()) - targets;

  std::vector<OperatingPoint> points;
  points.push_back({std::numeric_limits<double>::infinity(), 1.0, 0.0});
  std::size_t accepted_targets = 0, accepted_nontargets = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == threshold; ++i)
      (labels[order[i]] ? accepted_targets : accepted_nontargets)++;
    points.push_back({threshold, (targets - double(accepted_targets)) / targets, double(accepted_nontargets) / nontargets});
  }
  points.push_back({-std::numeric_limits<double>::infinity(), 0.0, 1.0});
  return points;
}

double compute_eer(const std::vector<double>& scores, const std::vector<bool>& labels) {
  const auto points = det_points(scores, labels);
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    const double f0 = points[i].p_miss - points[i].p_fa;
    const double f1 = points[i + 1].p_miss - points[i + 1].p_fa;
    if (f0 == 0.0) return points[i].p_miss;
    if (f0 > 0.0 && f1 <= 0.0) {
      const double t = f0 / (f0 - f1);
      return points[i].p_fa + t * (points[i + 1].p_fa - points[i].p_fa);
    }
  }
  return points.back().p_miss;
}

double compute_min_dcf(const std::vector<double>& scores, const std::vector<bool>& labels, const DcfPreset& preset) {
  if (!(preset.p_target > 0.0 && preset.p_target < 1.0) || preset.c_miss <= 0.0 || preset.c_fa <= 0.0)
    throw BackendError("DCF needs 0 < p_target < 1 and positive costs");
  const double norm = std::min(preset.c_miss * preset.p_target, preset.c_fa * (1.0 - preset.p_target));
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : det_points(scores, labels)) {
    const double cost = preset.c_miss * p.p_miss * preset.p_target + preset.c_fa * p.p_fa * (1.0 - preset.p_target);
    best = std::min(best, cost / norm);
  }
  return best;
}

std::vector<TrialRecord> read_trials(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::vector<TrialRecord> out;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    TrialRecord t;
    std::string label, extra;
    if (!(ss >> t.enrol >> t.test >> label) || (ss >> extra) || (label != "target" && label != "nontarget"))
      throw BackendError(path.string() + ":" + std::to_string(n) + ": expected 'ENROL TEST target|nontarget'");
    t.target = label == "target";
    out.push_back(std::move(t));
  }
  return out;
}

void write_trials(const std::vector<TrialRecord>& trials, const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  for (const auto& t : trials) out << t.enrol << ' ' << t.test << ' ' << (t.target ? "target" : "nontarget") << '\n';
}

std::vector<ScoreRecord> read_scores(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::vector<ScoreRecord> out;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    ScoreRecord s;
    std::string raw, norm, extra;
    if (!(ss >> s.enrol >> s.test >> raw >> norm) || (ss >> extra))
      throw BackendError(path.string() + ":" + std::to_string(n) + ": expected 'ENROL TEST raw norm'");
    char* end = nullptr;
    s.raw = std::strtod(raw.c_str(), &end);
    if (*end) throw BackendError(path.string() + ":" + std::to_string(n) + ": bad raw score");
    s.norm = std::strtod(norm.c_str(), &end);
    if (*end) throw BackendError(path.string() + ":" + std::to_string(n) + ": bad normalized score");
    out.push_back(std::move(s));
  }
  return out;
}

void write_scores(const std::vector<ScoreRecord>& scores, const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  for (const auto& s : scores)
    out << s.enrol << ' ' << s.test << ' ' << format_double(s.raw) << ' ' << format_double(s.norm) << '\n';
}

void write_det_points(const std::vector<OperatingPoint>& points, const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  for (const auto& p : points)
    out << format_double(p.threshold) << ' ' << format_double(p.p_miss) << ' ' << format_double(p.p_fa) << '\n';
}

}  // namespace tsv::backend
