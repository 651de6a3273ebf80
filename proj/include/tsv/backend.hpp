// tsv/backend.hpp

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

#ifndef TSV_BACKEND_HPP_
#define TSV_BACKEND_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsv::backend {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

class BackendError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Embeddings are stored one per column throughout.

template <typename Scalar>
struct LdaModel {
  Vector<Scalar> mean;
  Matrix<Scalar> projection;  // out_dim x d_in

  Vector<Scalar> apply(const Vector<Scalar>& x) const { return projection * (x - mean); }
  Matrix<Scalar> apply(const Matrix<Scalar>& xs) const { return projection * (xs.colwise() - mean); }
};

/// Fisher LDA. Within-class scatter gets 1e-6 * trace(S_w)/d added to its
/// diagonal before solving S_b w = lambda S_w w.
template <typename Scalar>
LdaModel<Scalar> fit_lda(const Matrix<Scalar>& xs, const std::vector<int>& labels, Eigen::Index out_dim) {
  const Eigen::Index d = xs.rows(), n = xs.cols();
  if (Eigen::Index(labels.size()) != n) throw BackendError("fit_lda: one label per embedding required");
  std::map<int, std::vector<Eigen::Index>> classes;
  for (Eigen::Index i = 0; i < n; ++i) classes[labels[i]].push_back(i);
  if (classes.size() < 2) throw BackendError("fit_lda needs at least two speakers");
  for (const auto& [label, idx] : classes)
    if (idx.size() < 2) throw BackendError("fit_lda needs at least two samples per speaker");
  if (out_dim < 1 || out_dim > std::min<Eigen::Index>(Eigen::Index(classes.size()) - 1, d))
    throw BackendError("fit_lda: out_dim " + std::to_string(out_dim) + " exceeds min(classes - 1, dim)");

  LdaModel<Scalar> model;
  model.mean = xs.rowwise().mean();
  Matrix<Scalar> sw = Matrix<Scalar>::Zero(d, d), sb = Matrix<Scalar>::Zero(d, d);
  for (const auto& [label, idx] : classes) {
    Vector<Scalar> mu = Vector<Scalar>::Zero(d);
    for (Eigen::Index i : idx) mu += xs.col(i);
    mu /= Scalar(idx.size());
    for (Eigen::Index i : idx) {
      const Vector<Scalar> dev = xs.col(i) - mu;
      sw.noalias() += dev * dev.transpose();
    }
    const Vector<Scalar> dm = mu - model.mean;
    sb.noalias() += Scalar(idx.size()) * dm * dm.transpose();
  }
  sw /= Scalar(n);
  sb /= Scalar(n);
  const Scalar reg = Scalar(1e-6) * sw.trace() / Scalar(d);
  sw.diagonal().array() += reg > Scalar(0) ? reg : Scalar(1e-6);

  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix<Scalar>> solver(sb, sw);
  if (solver.info() != Eigen::Success) throw BackendError("fit_lda: within-class scatter is singular");
  // Eigenvalues ascend; keep the last out_dim directions, largest first.
  model.projection = solver.eigenvectors().rightCols(out_dim).rowwise().reverse().transpose();
  return model;
}

template <typename Scalar>
Vector<Scalar> length_normalize(const Vector<Scalar>& x) {
  const Scalar norm = x.norm();
  if (!(norm > Scalar(0))) throw BackendError("length_normalize: zero vector");
  return x / norm;
}

template <typename Scalar>
Matrix<Scalar> length_normalize_cols(const Matrix<Scalar>& xs) {
  Matrix<Scalar> out(xs.rows(), xs.cols());
  for (Eigen::Index i = 0; i < xs.cols(); ++i) out.col(i) = length_normalize<Scalar>(xs.col(i));
  return out;
}

/// Simplified PLDA, e = m + V h + eps, h ~ N(0, I_q), eps ~ N(0, Sigma).
template <typename Scalar>
struct PldaModel {
  Vector<Scalar> mean;
  Matrix<Scalar> subspace;  // V, d x q
  Matrix<Scalar> within;    // Sigma, d x d

  Eigen::Index dim() const { return mean.size(); }
  Eigen::Index rank() const { return subspace.cols(); }
};

template <typename Scalar>
struct PldaFit {
  PldaModel<Scalar> model;
  std::vector<Scalar> log_likelihood;  // before the first and after every iteration
};

namespace detail {

template <typename Scalar>
struct SpeakerStats {
  Eigen::Index count = 0;
  Vector<Scalar> sum;
};

template <typename Scalar>
std::vector<SpeakerStats<Scalar>> speaker_stats(const Matrix<Scalar>& centered, const std::vector<int>& labels) {
  std::map<int, SpeakerStats<Scalar>> by_label;
  for (Eigen::Index i = 0; i < centered.cols(); ++i) {
    auto& s = by_label[labels[i]];
    if (s.count == 0) s.sum = Vector<Scalar>::Zero(centered.rows());
    s.sum += centered.col(i);
    ++s.count;
  }
  std::vector<SpeakerStats<Scalar>> out;
  for (auto& [label, s] : by_label) out.push_back(std::move(s));
  return out;
}

// Total data log-likelihood under the marginal of each speaker's samples.
template <typename Scalar>
Scalar plda_log_likelihood(const Matrix<Scalar>& centered, const std::vector<SpeakerStats<Scalar>>& stats,
                           const Matrix<Scalar>& v, const Matrix<Scalar>& sigma) {
  const Eigen::Index d = centered.rows(), q = v.cols();
  Eigen::LLT<Matrix<Scalar>> chol(sigma);
  const Scalar logdet = Scalar(2) * chol.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const Matrix<Scalar> sinv_x = chol.solve(centered);
  Scalar ll = Scalar(-0.5) * (centered.cwiseProduct(sinv_x).sum() +
                              Scalar(centered.cols()) * (logdet + Scalar(d) * std::log(Scalar(2) * std::numbers::pi_v<Scalar>)));
  if (q == 0) return ll;
  const Matrix<Scalar> vt_sinv = chol.solve(v).transpose();
  const Matrix<Scalar> vt_sinv_v = vt_sinv * v;
  for (const auto& s : stats) {
    Matrix<Scalar> precision = Scalar(s.count) * vt_sinv_v;
    precision.diagonal().array() += Scalar(1);
    Eigen::LLT<Matrix<Scalar>> pc(precision);
    const Vector<Scalar> b = vt_sinv * s.sum;
    const Vector<Scalar> mu = pc.solve(b);
    ll += Scalar(0.5) * b.dot(mu) - pc.matrixL().toDenseMatrix().diagonal().array().log().sum();
  }
  return ll;
}

}  // namespace detail

/// EM for the simplified PLDA model. The global mean is the data mean and
/// stays fixed; V starts from the leading between-speaker directions and
/// Sigma from the within-speaker covariance.
template <typename Scalar>
PldaFit<Scalar> fit_plda(const Matrix<Scalar>& xs, const std::vector<int>& labels, Eigen::Index q, int iterations) {
  const Eigen::Index d = xs.rows(), n = xs.cols();
  if (Eigen::Index(labels.size()) != n) throw BackendError("fit_plda: one label per embedding required");
  if (q < 0 || q > d) throw BackendError("fit_plda: latent dimension must lie in [0, dim]");
  PldaFit<Scalar> fit;
  PldaModel<Scalar>& m = fit.model;
  m.mean = xs.rowwise().mean();
  const Matrix<Scalar> x = xs.colwise() - m.mean;
  const auto stats = detail::speaker_stats<Scalar>(x, labels);
  if (stats.size() < 2) throw BackendError("fit_plda needs at least two speakers");

  // Initialization from class statistics.
  Matrix<Scalar> between = Matrix<Scalar>::Zero(d, d), within = x * x.transpose();
  for (const auto& s : stats) {
    const Vector<Scalar> mu = s.sum / Scalar(s.count);
    between.noalias() += Scalar(s.count) * mu * mu.transpose();
    within.noalias() -= Scalar(s.count) * mu * mu.transpose();
  }
  between /= Scalar(n);
  within /= Scalar(n);
  const Scalar floor = std::max(Scalar(1e-6) * within.trace() / Scalar(d), Scalar(1e-10));
  within.diagonal().array() += floor;
  m.within = within;
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(between);
  m.subspace = Matrix<Scalar>(d, q);
  for (Eigen::Index j = 0; j < q; ++j)
    m.subspace.col(j) = es.eigenvectors().col(d - 1 - j) * std::sqrt(std::max(es.eigenvalues()(d - 1 - j), floor));

  const Matrix<Scalar> scatter = x * x.transpose();
  fit.log_likelihood.push_back(detail::plda_log_likelihood<Scalar>(x, stats, m.subspace, m.within));
  for (int it = 0; it < iterations && q > 0; ++it) {
    Eigen::LLT<Matrix<Scalar>> chol(m.within);
    const Matrix<Scalar> vt_sinv = chol.solve(m.subspace).transpose();
    const Matrix<Scalar> vt_sinv_v = vt_sinv * m.subspace;
    Matrix<Scalar> fh = Matrix<Scalar>::Zero(d, q), hh = Matrix<Scalar>::Zero(q, q);
    for (const auto& s : stats) {
      Matrix<Scalar> precision = Scalar(s.count) * vt_sinv_v;
      precision.diagonal().array() += Scalar(1);
      Eigen::LLT<Matrix<Scalar>> pc(precision);
      const Vector<Scalar> mu = pc.solve(vt_sinv * s.sum);
      const Matrix<Scalar> cov = pc.solve(Matrix<Scalar>::Identity(q, q));
      fh.noalias() += s.sum * mu.transpose();
      hh.noalias() += Scalar(s.count) * (cov + mu * mu.transpose());
    }
    m.subspace = hh.transpose().llt().solve(fh.transpose()).transpose();
    Matrix<Scalar> sigma = (scatter - m.subspace * fh.transpose()) / Scalar(n);
    m.within = Scalar(0.5) * (sigma + sigma.transpose());
    fit.log_likelihood.push_back(detail::plda_log_likelihood<Scalar>(x, stats, m.subspace, m.within));
  }
  return fit;
}

/// Precomputed two-covariance verification score. With B = V V^T, W = Sigma
/// and T = B + W, the same-speaker joint covariance of (a, b) is
/// [[T, B], [B, T]] and the different-speaker one is [[T, 0], [0, T]].
template <typename Scalar>
class PldaScorer {
 public:
  explicit PldaScorer(const PldaModel<Scalar>& model) : mean_(model.mean) {
    const Eigen::Index d = model.dim();
    const Matrix<Scalar> b = model.subspace * model.subspace.transpose();
    const Matrix<Scalar> t = b + model.within;
    Eigen::LDLT<Matrix<Scalar>> t_fact(t);
    const Matrix<Scalar> t_inv = t_fact.solve(Matrix<Scalar>::Identity(d, d));
    const Matrix<Scalar> schur = t - b * t_inv * b;
    Eigen::LDLT<Matrix<Scalar>> s_fact(schur);
    const Matrix<Scalar> a = s_fact.solve(Matrix<Scalar>::Identity(d, d));
    quad_ = a - t_inv;
    cross_ = -(a * b * t_inv);
    cross_ = Scalar(0.5) * (cross_ + cross_.transpose());
    quad_ = Scalar(0.5) * (quad_ + quad_.transpose());
    const Scalar logdet_t = t_fact.vectorD().array().log().sum();
    const Scalar logdet_s = s_fact.vectorD().array().log().sum();
    offset_ = Scalar(-0.5) * (logdet_s - logdet_t);
  }

  Scalar operator()(const Vector<Scalar>& enrol, const Vector<Scalar>& test) const {
    if (enrol.size() != mean_.size() || test.size() != mean_.size())
      throw BackendError("score_plda: embedding dimension does not match the model");
    const Vector<Scalar> a = enrol - mean_, b = test - mean_;
    return offset_ - Scalar(0.5) * (a.dot(quad_ * a) + b.dot(quad_ * b)) - a.dot(cross_ * b);
  }

 private:
  Vector<Scalar> mean_;
  Matrix<Scalar> quad_, cross_;
  Scalar offset_ = 0;
};

template <typename Scalar>
Scalar score_plda(const PldaModel<Scalar>& model, const Vector<Scalar>& enrol, const Vector<Scalar>& test) {
  return PldaScorer<Scalar>(model)(enrol, test);
}

inline constexpr double kSnormSigmaFloor = 1e-6;

/// Mean and standard deviation (floored) of the top_k largest cohort scores.
template <typename Scalar>
std::pair<Scalar, Scalar> cohort_stats(std::vector<Scalar> cohort, std::size_t top_k) {
  if (cohort.empty()) throw BackendError("adaptive s-norm: empty cohort");
  top_k = std::clamp<std::size_t>(top_k, 1, cohort.size());
  std::partial_sort(cohort.begin(), cohort.begin() + top_k, cohort.end(), std::greater<Scalar>());
  Scalar mean = 0;
  for (std::size_t i = 0; i < top_k; ++i) mean += cohort[i];
  mean /= Scalar(top_k);
  Scalar var = 0;
  for (std::size_t i = 0; i < top_k; ++i) var += (cohort[i] - mean) * (cohort[i] - mean);
  const Scalar sd = std::sqrt(var / Scalar(top_k));
  return {mean, std::max(sd, Scalar(kSnormSigmaFloor))};
}

template <typename Scalar>
Scalar adaptive_snorm(Scalar raw, const std::vector<Scalar>& enrol_cohort, const std::vector<Scalar>& test_cohort,
                      std::size_t top_k) {
  const auto [me, se] = cohort_stats(enrol_cohort, top_k);
  const auto [mt, st] = cohort_stats(test_cohort, top_k);
  return Scalar(0.5) * ((raw - me) / se + (raw - mt) / st);
}

/// Full decision chain: LDA, length normalization, PLDA and adaptive s-norm
/// against a cohort of training-speaker mean embeddings.
template <typename Scalar>
struct ScoringBackend {
  LdaModel<Scalar> lda;
  PldaModel<Scalar> plda;
  Matrix<Scalar> cohort;  // transformed cohort, one column per training speaker
  std::size_t top_k = 200;

  struct Options {
    Eigen::Index lda_dim = 100;
    Eigen::Index plda_dim = 100;
    int plda_iterations = 10;
    std::size_t top_k = 200;
  };

  /// LDA and PLDA dimensions are clamped to what the data supports:
  /// lda_dim <= min(speakers - 1, d) and plda_dim <= lda_dim - 1.
  static ScoringBackend fit(const Matrix<Scalar>& xs, const std::vector<int>& labels, const Options& options) {
    std::map<int, std::vector<Eigen::Index>> classes;
    for (Eigen::Index i = 0; i < Eigen::Index(labels.size()); ++i) classes[labels[i]].push_back(i);
    ScoringBackend b;
    const Eigen::Index lda_dim =
        std::min({options.lda_dim, Eigen::Index(classes.size()) - 1, Eigen::Index(xs.rows())});
    b.lda = fit_lda<Scalar>(xs, labels, lda_dim);
    const Matrix<Scalar> projected = length_normalize_cols<Scalar>(b.lda.apply(xs));
    const Eigen::Index q = std::max<Eigen::Index>(0, std::min(options.plda_dim, lda_dim - 1));
    b.plda = fit_plda<Scalar>(projected, labels, q, options.plda_iterations).model;
    b.cohort = Matrix<Scalar>(xs.rows(), Eigen::Index(classes.size()));
    Eigen::Index c = 0;
    for (const auto& [label, idx] : classes) {
      Vector<Scalar> mu = Vector<Scalar>::Zero(xs.rows());
      for (Eigen::Index i : idx) mu += xs.col(i);
      b.cohort.col(c++) = mu / Scalar(idx.size());
    }
    b.cohort = length_normalize_cols<Scalar>(b.lda.apply(b.cohort));
    b.top_k = std::min<std::size_t>(options.top_k, std::size_t(b.cohort.cols()));
    return b;
  }

  Vector<Scalar> transform(const Vector<Scalar>& e) const { return length_normalize<Scalar>(lda.apply(e)); }

  /// Raw PLDA score and its s-normalized value for already transformed embeddings.
  std::pair<Scalar, Scalar> score(const PldaScorer<Scalar>& scorer, const Vector<Scalar>& enrol,
                                  const Vector<Scalar>& test) const {
    const Scalar raw = scorer(enrol, test);
    std::vector<Scalar> ce, ct;
    for (Eigen::Index c = 0; c < cohort.cols(); ++c) {
      ce.push_back(scorer(enrol, cohort.col(c)));
      ct.push_back(scorer(cohort.col(c), test));
    }
    return {raw, adaptive_snorm<Scalar>(raw, ce, ct, top_k)};
  }
};

// Detection metrics. A trial is accepted when score >= threshold.

struct OperatingPoint {
  double threshold = 0.0;
  double p_miss = 0.0;
  double p_fa = 0.0;
};

/// One point per distinct score plus the reject-all (+inf) and accept-all
/// (-inf) endpoints, ordered by decreasing threshold.
std::vector<OperatingPoint> det_points(const std::vector<double>& scores, const std::vector<bool>& labels);

/// Point where the piecewise-linear curve through det_points crosses
/// p_miss == p_fa.
double compute_eer(const std::vector<double>& scores, const std::vector<bool>& labels);

struct DcfPreset {
  double p_target;
  double c_miss;
  double c_fa;
};

inline constexpr DcfPreset kDcf08{0.01, 10.0, 1.0};
inline constexpr DcfPreset kDcf10{0.001, 1.0, 1.0};

double compute_min_dcf(const std::vector<double>& scores, const std::vector<bool>& labels, const DcfPreset& preset);

// Text formats.

struct TrialRecord {
  std::string enrol;
  std::string test;
  bool target = false;
};

struct ScoreRecord {
  std::string enrol;
  std::string test;
  double raw = 0.0;
  double norm = 0.0;
};

/// "ENROL TEST target|nontarget" per line.
std::vector<TrialRecord> read_trials(const std::filesystem::path& path);
void write_trials(const std::vector<TrialRecord>& trials, const std::filesystem::path& path);
/// "ENROL TEST raw norm" per line, printed with 17 significant digits.
std::vector<ScoreRecord> read_scores(const std::filesystem::path& path);
void write_scores(const std::vector<ScoreRecord>& scores, const std::filesystem::path& path);
/// "threshold p_miss p_fa" per line.
void write_det_points(const std::vector<OperatingPoint>& points, const std::filesystem::path& path);

}  // namespace tsv::backend

#endif  // TSV_BACKEND_HPP_
