/*
 * Copyright 2026 The hetero-fdl Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "hfdl/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "hfdl/error.hpp"
#include "hfdl/rng.hpp"

namespace hfdl {
namespace {

// log(1 + exp(t))
template <typename S>
S softplus(S t) {
  return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

template <typename S>
S log_sum_exp(std::span<const S> v) {
  const S mx = *std::max_element(v.begin(), v.end());
  S s = 0;
  for (S x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

void check_label(std::size_t label, std::size_t classes) {
  if (label >= classes) {
    fail(ErrorCode::kLabelOutOfRange, "label " + std::to_string(label) +
                                          " outside [0, " +
                                          std::to_string(classes) + ")");
  }
}

template <typename T>
double mean_of(const std::vector<T>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (const auto& x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

// --- Losses ----------------------------------------------------------------

double cross_entropy(std::span<const double> logits, std::size_t label) {
  check_label(label, logits.size());
  // log sum_j exp(x_j - x_label), kept accurate when the label dominates.
  const double top = *std::max_element(logits.begin(), logits.end());
  if (logits[label] == top) {
    double rest = 0.0;
    for (std::size_t c = 0; c < logits.size(); ++c) {
      if (c != label) rest += std::exp(logits[c] - top);
    }
    return std::log1p(rest);
  }
  return log_sum_exp(logits) - logits[label];
}

double cross_entropy_with_grad(std::span<const double> logits,
                               std::size_t label, std::span<double> grad) {
  check_label(label, logits.size());
  const double lse = log_sum_exp(logits);
  for (std::size_t c = 0; c < logits.size(); ++c) {
    grad[c] = std::exp(logits[c] - lse);
  }
  grad[label] -= 1.0;
  return cross_entropy(logits, label);
}

double bpr_loss(double score_pos, double score_neg) {
  return softplus(score_neg - score_pos);
}

void validate_weights(const LossWeights& w) {
  if (!(w.ds >= 0.0 && w.ss >= 0.0 && w.pd >= 0.0)) {
    fail(ErrorCode::kInvalidConfig, "loss weights must be non-negative");
  }
  if (w.ds == 0.0 && w.ss == 0.0 && w.pd == 0.0) {
    fail(ErrorCode::kAllWeightsZero, "every loss weight is zero");
  }
}

double combined_loss(double l_ds, double l_ss, double l_pd,
                     const LossWeights& weights) {
  validate_weights(weights);
  return weights.ds * l_ds + weights.ss * l_ss + weights.pd * l_pd;
}

double combined_loss(const TaskOutputs& outputs, const TaskLabels& labels,
                     const LossWeights& weights) {
  validate_weights(weights);
  if (outputs.specialty_logits.size() != labels.specialty.size() ||
      outputs.next_service_logits.size() != labels.next_service.size()) {
    fail(ErrorCode::kShapeMismatch, "labels do not match task outputs");
  }
  std::vector<double> ds, ss, pd;
  for (std::size_t i = 0; i < labels.specialty.size(); ++i) {
    const auto& l = outputs.specialty_logits[i];
    ds.push_back(cross_entropy({l.data(), static_cast<std::size_t>(l.size())},
                               labels.specialty[i]));
  }
  for (std::size_t i = 0; i < labels.next_service.size(); ++i) {
    const auto& l = outputs.next_service_logits[i];
    ss.push_back(cross_entropy({l.data(), static_cast<std::size_t>(l.size())},
                               labels.next_service[i]));
  }
  for (const auto& s : outputs.scores) {
    if (s.size() != 2) {
      fail(ErrorCode::kShapeMismatch,
           "ranking queries need a (positive, negative) score pair");
    }
    pd.push_back(bpr_loss(s[0], s[1]));
  }
  return combined_loss(mean_of(ds), mean_of(ss), mean_of(pd), weights);
}

// --- Metrics ---------------------------------------------------------------

double recall_at_mask(std::span<const std::uint32_t> ranked,
                      std::span<const std::uint32_t> positives,
                      std::size_t cutoff) {
  if (positives.empty()) {
    fail(ErrorCode::kEmptyPositives, "recall needs at least one positive");
  }
  if (cutoff == 0) cutoff = positives.size();
  cutoff = std::min(cutoff, ranked.size());
  std::vector<std::uint32_t> pos(positives.begin(), positives.end());
  std::sort(pos.begin(), pos.end());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < cutoff; ++i) {
    if (std::binary_search(pos.begin(), pos.end(), ranked[i])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(positives.size());
}

namespace {

std::pair<std::size_t, std::size_t> count_labels(
    std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    fail(ErrorCode::kShapeMismatch, "scores and labels differ in length");
  }
  std::size_t p = 0;
  for (auto l : labels) p += l ? 1 : 0;
  const std::size_t n = labels.size() - p;
  if (p == 0 || n == 0) {
    fail(ErrorCode::kDegenerateLabels,
         "AUC needs at least one positive and one negative");
  }
  return {p, n};
}

}  // namespace

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  const auto [p, n] = count_labels(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of 1-based positive ranks, tied groups sharing their mean rank.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t pos_in_group = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      pos_in_group += labels[order[j]] ? 1 : 0;
      ++j;
    }
    const double mean_rank = 0.5 * static_cast<double>(i + 1 + j);
    rank_sum += mean_rank * static_cast<double>(pos_in_group);
    i = j;
  }
  const double pd = static_cast<double>(p);
  return (rank_sum - 0.5 * pd * (pd + 1.0)) / (pd * static_cast<double>(n));
}

double auc_bruteforce(std::span<const double> scores,
                      std::span<const std::uint8_t> labels) {
  const auto [p, n] = count_labels(scores, labels);
  double wins = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        wins += 0.5;
      }
    }
  }
  return wins / (static_cast<double>(p) * static_cast<double>(n));
}

RankingMetrics evaluate_ranking(std::span<const RankedQuery> queries,
                                bool pooled_auc) {
  RankingMetrics out;
  std::vector<double> pooled_scores;
  std::vector<std::uint8_t> pooled_labels;
  double recall_sum = 0.0;
  double auc_sum = 0.0;
  for (const auto& q : queries) {
    if (q.positives.empty() || q.candidates.size() <= q.positives.size()) {
      continue;
    }
    std::vector<std::uint32_t> pos(q.positives);
    std::sort(pos.begin(), pos.end());
    std::vector<std::uint8_t> labels(q.candidates.size());
    for (std::size_t i = 0; i < q.candidates.size(); ++i) {
      labels[i] = std::binary_search(pos.begin(), pos.end(), q.candidates[i]);
    }
    std::vector<std::size_t> order(q.candidates.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return q.scores[a] > q.scores[b];
    });
    std::vector<std::uint32_t> ranked;
    ranked.reserve(order.size());
    for (auto i : order) ranked.push_back(q.candidates[i]);
    recall_sum += recall_at_mask(ranked, q.positives);
    if (pooled_auc) {
      pooled_scores.insert(pooled_scores.end(), q.scores.begin(), q.scores.end());
      pooled_labels.insert(pooled_labels.end(), labels.begin(), labels.end());
    } else {
      auc_sum += auc(q.scores, labels);
    }
    ++out.queries;
  }
  if (out.queries == 0) return out;
  out.recall = recall_sum / static_cast<double>(out.queries);
  out.auc = pooled_auc ? auc(pooled_scores, pooled_labels)
                       : auc_sum / static_cast<double>(out.queries);
  return out;
}

// --- Local objective plumbing ----------------------------------------------

const std::vector<std::size_t>& LocalObjective::all_samples() const {
  if (all_.size() != sample_count()) {
    all_.resize(sample_count());
    std::iota(all_.begin(), all_.end(), std::size_t{0});
  }
  return all_;
}

double LocalObjective::full_value(std::span<const double> x) const {
  return value(x, all_samples());
}

double LocalObjective::full_gradient(std::span<const double> x,
                                     std::span<double> grad) const {
  return value_and_gradient(x, all_samples(), grad);
}

void LocalObjective::check_call(std::span<const double> x,
                                std::span<const std::size_t> subset) const {
  if (x.size() != dimension()) {
    fail(ErrorCode::kLengthMismatch,
         "parameter length " + std::to_string(x.size()) + " != objective " +
             std::to_string(dimension()));
  }
  if (subset.empty()) fail(ErrorCode::kEmptySubset, "sample subset is empty");
  const std::size_t n = sample_count();
  for (auto j : subset) {
    if (j >= n) {
      fail(ErrorCode::kEmptySubset, "sample index " + std::to_string(j) +
                                        " outside [0, " + std::to_string(n) + ")");
    }
  }
}

std::vector<double> stochastic_gradient(const LocalObjective& obj,
                                        std::span<const double> x,
                                        std::span<const std::size_t> subset) {
  std::vector<double> g(obj.dimension());
  obj.value_and_gradient(x, subset, g);
  return g;
}

double finite_difference_check(const LocalObjective& obj,
                               std::span<const double> x,
                               std::span<const std::size_t> subset,
                               std::span<const double> analytic, double h,
                               std::size_t coordinates, std::uint64_t seed) {
  if (!(h > 0.0)) fail(ErrorCode::kInvalidConfig, "step h must be positive");
  const std::size_t d = obj.dimension();
  if (analytic.size() != d) {
    fail(ErrorCode::kLengthMismatch, "analytic gradient length mismatch");
  }
  std::vector<std::size_t> coords(d);
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (coordinates > 0 && coordinates < d) {
    std::mt19937_64 rng(mix_seed(seed, 0xfd));
    for (std::size_t i = 0; i < coordinates; ++i) {
      std::swap(coords[i], coords[i + uniform_index(rng, d - i)]);
    }
    coords.resize(coordinates);
  }
  std::vector<double> probe(x.begin(), x.end());
  double worst = 0.0;
  for (auto k : coords) {
    const double orig = probe[k];
    const double hi = orig + h;
    const double lo = orig - h;
    probe[k] = hi;
    const long double up = obj.precise_value(probe, subset);
    probe[k] = lo;
    const long double down = obj.precise_value(probe, subset);
    probe[k] = orig;
    const double fd = static_cast<double>((up - down) / (static_cast<long double>(hi) - lo));
    const double err =
        std::abs(fd - analytic[k]) / std::max(1e-8, std::abs(analytic[k]));
    worst = std::max(worst, err);
  }
  return worst;
}

double finite_difference_check(const LocalObjective& obj,
                               std::span<const double> x,
                               std::span<const std::size_t> subset, double h,
                               std::size_t coordinates, std::uint64_t seed) {
  const auto g = stochastic_gradient(obj, x, subset);
  return finite_difference_check(obj, x, subset, g, h, coordinates, seed);
}

// --- Quadratic ---------------------------------------------------------------

QuadraticObjective::QuadraticObjective(std::vector<Vector> centers)
    : centers_(std::move(centers)) {
  if (centers_.empty()) fail(ErrorCode::kEmptySubset, "no quadratic samples");
  dim_ = static_cast<std::size_t>(centers_[0].size());
  for (const auto& c : centers_) {
    if (static_cast<std::size_t>(c.size()) != dim_) {
      fail(ErrorCode::kLengthMismatch, "quadratic centers differ in length");
    }
  }
}

double QuadraticObjective::value(std::span<const double> x,
                                 std::span<const std::size_t> subset) const {
  check_call(x, subset);
  const Eigen::Map<const Vector> xv(x.data(), static_cast<Eigen::Index>(dim_));
  double s = 0.0;
  for (auto j : subset) s += 0.5 * (xv - centers_[j]).squaredNorm();
  return s / static_cast<double>(subset.size());
}

double QuadraticObjective::value_and_gradient(
    std::span<const double> x, std::span<const std::size_t> subset,
    std::span<double> grad) const {
  check_call(x, subset);
  const auto d = static_cast<Eigen::Index>(dim_);
  const Eigen::Map<const Vector> xv(x.data(), d);
  Eigen::Map<Vector> g(grad.data(), d);
  g.setZero();
  double s = 0.0;
  for (auto j : subset) {
    const Vector r = xv - centers_[j];
    s += 0.5 * r.squaredNorm();
    g += r;
  }
  const double inv = 1.0 / static_cast<double>(subset.size());
  g *= inv;
  return s * inv;
}

Vector QuadraticObjective::mean_center() const {
  Vector m = Vector::Zero(static_cast<Eigen::Index>(dim_));
  for (const auto& c : centers_) m += c;
  return m / static_cast<double>(centers_.size());
}

std::vector<QuadraticObjective> make_quadratic_shards(std::size_t workers,
                                                      std::size_t dim,
                                                      std::uint64_t seed) {
  std::vector<QuadraticObjective> out;
  for (std::size_t i = 0; i < workers; ++i) {
    std::mt19937_64 rng(mix_seed(seed, 0x9d0 + i));
    Vector mu(static_cast<Eigen::Index>(dim));
    for (auto& v : mu) v = standard_normal(rng);
    out.emplace_back(std::vector<Vector>{mu});
  }
  return out;
}

// --- Logistic with non-convex regulariser ------------------------------------

LogisticNonconvexObjective::LogisticNonconvexObjective(Matrix features,
                                                       std::vector<double> labels,
                                                       double rho)
    : a_(std::move(features)), b_(std::move(labels)), rho_(rho) {
  if (a_.rows() == 0) fail(ErrorCode::kEmptySubset, "no logistic samples");
  if (static_cast<std::size_t>(a_.rows()) != b_.size()) {
    fail(ErrorCode::kLengthMismatch, "labels do not match feature rows");
  }
  for (double b : b_) {
    if (b != 1.0 && b != -1.0) {
      fail(ErrorCode::kLabelOutOfRange, "logistic labels must be +1 or -1");
    }
  }
  if (!(rho_ >= 0.0)) fail(ErrorCode::kInvalidConfig, "rho must be >= 0");
}

double LogisticNonconvexObjective::value(std::span<const double> x,
                                         std::span<const std::size_t> subset) const {
  check_call(x, subset);
  const Eigen::Map<const Vector> xv(x.data(), a_.cols());
  double s = 0.0;
  for (auto j : subset) s += softplus(-b_[j] * a_.row(static_cast<Eigen::Index>(j)).dot(xv));
  s /= static_cast<double>(subset.size());
  double reg = 0.0;
  for (double v : x) reg += v * v / (1.0 + v * v);
  return s + rho_ * reg;
}

double LogisticNonconvexObjective::value_and_gradient(
    std::span<const double> x, std::span<const std::size_t> subset,
    std::span<double> grad) const {
  check_call(x, subset);
  const Eigen::Map<const Vector> xv(x.data(), a_.cols());
  Eigen::Map<Vector> g(grad.data(), a_.cols());
  g.setZero();
  double s = 0.0;
  for (auto j : subset) {
    const auto row = a_.row(static_cast<Eigen::Index>(j));
    const double t = -b_[j] * row.dot(xv);
    s += softplus(t);
    g.noalias() += (-b_[j] * sigmoid(t)) * row.transpose();
  }
  const double inv = 1.0 / static_cast<double>(subset.size());
  g *= inv;
  s *= inv;
  double reg = 0.0;
  for (Eigen::Index k = 0; k < g.size(); ++k) {
    const double v = xv(k);
    const double den = 1.0 + v * v;
    reg += v * v / den;
    g(k) += rho_ * 2.0 * v / (den * den);
  }
  return s + rho_ * reg;
}

double LogisticNonconvexObjective::lipschitz() const {
  return 0.25 * a_.rowwise().squaredNorm().maxCoeff() + 2.0 * rho_;
}

std::vector<LogisticNonconvexObjective> make_logistic_shards(
    std::size_t workers, std::size_t samples, std::size_t dim, double rho,
    double row_norm, std::uint64_t seed) {
  const auto d = static_cast<Eigen::Index>(dim);
  std::mt19937_64 shared(mix_seed(seed, 0x10c));
  Vector truth(d);
  for (auto& v : truth) v = standard_normal(shared);
  truth.normalize();
  std::vector<LogisticNonconvexObjective> out;
  for (std::size_t i = 0; i < workers; ++i) {
    std::mt19937_64 rng(mix_seed(seed, 0x10d + i));
    Vector shift(d);
    for (auto& v : shift) v = standard_normal(rng);
    const Vector w = truth + 0.5 * shift / std::sqrt(static_cast<double>(dim));
    Matrix a(static_cast<Eigen::Index>(samples), d);
    std::vector<double> b(samples);
    for (std::size_t j = 0; j < samples; ++j) {
      Vector row(d);
      for (auto& v : row) v = standard_normal(rng);
      row *= row_norm / row.norm();
      a.row(static_cast<Eigen::Index>(j)) = row.transpose();
      const double p = sigmoid(4.0 * row.dot(w) / row_norm);
      b[j] = uniform_unit(rng) < p ? 1.0 : -1.0;
    }
    out.emplace_back(std::move(a), std::move(b), rho);
  }
  return out;
}

// --- HGAT objective ------------------------------------------------------------

HgatSamples build_hgat_samples(const HeteroGraph& graph,
                               std::span<const bool> patients,
                               const SampleOptions& options,
                               std::uint64_t seed) {
  const std::size_t np = graph.node_count(NodeKind::kPatient);
  const std::size_t nd = graph.node_count(NodeKind::kDoctor);
  if (!patients.empty() && patients.size() != np) {
    fail(ErrorCode::kShapeMismatch, "patient filter length mismatch");
  }
  const std::uint32_t d0 = graph.offset(NodeKind::kDoctor);
  HgatSamples out;
  if (options.patient_doctor) {
    std::vector<char> adjacent(nd, 0);
    for (std::uint32_t p = 0; p < np; ++p) {
      if (!patients.empty() && !patients[p]) continue;
      const auto nbrs = graph.neighbors(p, EdgeKind::kPatientDoctor);
      if (nbrs.empty() || nbrs.size() >= nd) continue;
      for (const auto& nb : nbrs) adjacent[nb.node - d0] = 1;
      std::mt19937_64 rng(mix_seed(seed, p));
      for (const auto& nb : nbrs) {
        std::uint32_t neg = 0;
        do {
          neg = static_cast<std::uint32_t>(uniform_index(rng, nd));
        } while (adjacent[neg]);
        out.pd.push_back({p, nb.node - d0, neg});
      }
      for (const auto& nb : nbrs) adjacent[nb.node - d0] = 0;
    }
  }
  if (options.doctor_specialty) {
    for (std::uint32_t d = 0; d < nd; ++d) {
      if (graph.neighbors(d0 + d).empty()) continue;
      out.ds.push_back({d, graph.nodes().doctors[d].specialty});
    }
  }
  if (options.next_service) {
    for (const auto& e : graph.edges()) {
      if (e.kind != EdgeKind::kServiceService) continue;
      out.ss.push_back({e.src.index, e.dst.index});
    }
  }
  return out;
}

HgatObjective::HgatObjective(std::shared_ptr<const HeteroGraph> graph,
                             std::shared_ptr<const FeatureTable> features,
                             const HgatConfig& config, SamplingPlan plan,
                             HgatSamples samples, const LossWeights& weights)
    : graph_(std::move(graph)),
      features_(std::move(features)),
      model_(*graph_, *features_, config, std::move(plan)),
      samples_(std::move(samples)),
      weights_(weights),
      dim_(parameter_count(config)) {
  validate_weights(weights_);
  const double n = static_cast<double>(samples_.size());
  if (samples_.size() == 0) fail(ErrorCode::kEmptySubset, "shard has no samples");
  if (!samples_.ds.empty() && features_->doctor_specialty_encoded) {
    fail(ErrorCode::kLabelLeakage,
         "doctor features encode the specialty that is being predicted");
  }
  for (const auto& s : samples_.ds) {
    check_label(s.label, config.specialty_classes);
  }
  for (const auto& s : samples_.ss) {
    check_label(s.label, config.service_classes);
  }
  if (!samples_.pd.empty()) coef_[0] = weights_.pd * n / samples_.pd.size();
  if (!samples_.ds.empty()) coef_[1] = weights_.ds * n / samples_.ds.size();
  if (!samples_.ss.empty()) coef_[2] = weights_.ss * n / samples_.ss.size();
}

double HgatObjective::value(std::span<const double> x,
                            std::span<const std::size_t> subset) const {
  check_call(x, subset);
  return static_cast<double>(extended_value(x, subset));
}

long double HgatObjective::precise_value(
    std::span<const double> x, std::span<const std::size_t> subset) const {
  check_call(x, subset);
  return extended_value(x, subset);
}

double HgatObjective::value_and_gradient(std::span<const double> x,
                                         std::span<const std::size_t> subset,
                                         std::span<double> grad) const {
  check_call(x, subset);
  if (grad.size() != dim_) {
    fail(ErrorCode::kLengthMismatch, "gradient buffer length mismatch");
  }
  return evaluate(x, subset, grad);
}

std::vector<std::uint32_t> HgatObjective::outputs_for(
    std::span<const std::size_t> subset) const {
  const HeteroGraph& g = *graph_;
  const std::uint32_t d0 = g.offset(NodeKind::kDoctor);
  const std::uint32_t s0 = g.offset(NodeKind::kService);
  const std::size_t npd = samples_.pd.size();
  const std::size_t nds = samples_.ds.size();
  std::vector<std::uint32_t> outputs;
  outputs.reserve(subset.size() * 3);
  for (auto j : subset) {
    if (j < npd) {
      const auto& s = samples_.pd[j];
      outputs.push_back(s.patient);
      outputs.push_back(d0 + s.positive);
      outputs.push_back(d0 + s.negative);
    } else if (j < npd + nds) {
      outputs.push_back(d0 + samples_.ds[j - npd].node);
    } else {
      outputs.push_back(s0 + samples_.ss[j - npd - nds].node);
    }
  }
  std::sort(outputs.begin(), outputs.end());
  outputs.erase(std::unique(outputs.begin(), outputs.end()), outputs.end());
  return outputs;
}

// Loss only, carried in long double so that small parameter perturbations
// stay resolvable.
long double HgatObjective::extended_value(
    std::span<const double> x, std::span<const std::size_t> subset) const {
  using S = long double;
  const HgatConfig& config = model_.config();
  const HgatParams params = unflatten(x, config);
  const HeteroGraph& g = *graph_;
  const std::uint32_t d0 = g.offset(NodeKind::kDoctor);
  const std::uint32_t s0 = g.offset(NodeKind::kService);
  const std::size_t npd = samples_.pd.size();
  const std::size_t nds = samples_.ds.size();
  const auto fw = model_.forward_as<S>(params, outputs_for(subset));
  const auto e = static_cast<Eigen::Index>(config.embedding_dim());
  auto emb = [&](std::uint32_t global) {
    return Eigen::Map<const VectorT<S>>(model_.embedding(fw, global).data(), e);
  };
  const MatrixT<S> bilinear = params.bilinear.cast<S>();
  const MatrixT<S> specialty = params.specialty.cast<S>();
  const MatrixT<S> next_service = params.next_service.cast<S>();
  const S inv = S(1) / static_cast<S>(subset.size());
  S total = 0;
  VectorT<S> logits;
  for (auto j : subset) {
    if (j < npd) {
      const auto& s = samples_.pd[j];
      const auto ep = emb(s.patient);
      const VectorT<S> delta = emb(d0 + s.positive) - emb(d0 + s.negative);
      const S diff = config.score == ScoreMode::kBilinear
                         ? ep.dot(bilinear * delta)
                         : ep.dot(delta);
      total += static_cast<S>(coef_[0]) * inv * softplus(-diff);
    } else {
      const bool ds = j < npd + nds;
      const LabelSample& s = ds ? samples_.ds[j - npd] : samples_.ss[j - npd - nds];
      const std::uint32_t global = ds ? d0 + s.node : s0 + s.node;
      logits = (ds ? specialty : next_service) * emb(global);
      const std::span<const S> lv(logits.data(), static_cast<std::size_t>(logits.size()));
      total += static_cast<S>(coef_[ds ? 1 : 2]) * inv *
               (log_sum_exp(lv) - lv[s.label]);
    }
  }
  return total;
}

double HgatObjective::evaluate(std::span<const double> x,
                               std::span<const std::size_t> subset,
                               std::span<double> grad) const {
  const HgatConfig& config = model_.config();
  const HgatParams params = unflatten(x, config);
  const HeteroGraph& g = *graph_;
  const std::uint32_t d0 = g.offset(NodeKind::kDoctor);
  const std::uint32_t s0 = g.offset(NodeKind::kService);
  const std::size_t npd = samples_.pd.size();
  const std::size_t nds = samples_.ds.size();

  const auto fw = model_.forward(params, outputs_for(subset));

  const bool want_grad = !grad.empty();
  const auto e = static_cast<Eigen::Index>(config.embedding_dim());
  const bool bilinear = config.score == ScoreMode::kBilinear;
  HgatParams gp;
  Blocks d_emb;
  if (want_grad) {
    gp = HgatParams::zeros(config);
    for (std::size_t t = 0; t < kTypeCount; ++t) {
      d_emb[t] = Matrix::Zero(fw.embeddings()[t].rows(), e);
    }
  }
  auto emb = [&](std::uint32_t global) {
    return Eigen::Map<const Vector>(model_.embedding(fw, global).data(), e);
  };
  auto d_row = [&](NodeKind kind, std::uint32_t local) {
    auto& m = d_emb[static_cast<std::size_t>(kind)];
    return Eigen::Map<Vector>(m.data() + static_cast<std::size_t>(local) * e, e);
  };

  const double inv = 1.0 / static_cast<double>(subset.size());
  double total = 0.0;
  Vector logits;
  std::vector<double> dlogits;
  for (auto j : subset) {
    if (j < npd) {
      const auto& s = samples_.pd[j];
      const auto ep = emb(s.patient);
      const auto epos = emb(d0 + s.positive);
      const auto eneg = emb(d0 + s.negative);
      double diff = 0.0;
      if (bilinear) {
        diff = ep.dot(params.bilinear * (epos - eneg));
      } else {
        diff = ep.dot(epos - eneg);
      }
      const double c = coef_[0] * inv;
      total += c * softplus(-diff);
      if (want_grad) {
        const double dd = -c * sigmoid(-diff);
        if (bilinear) {
          d_row(NodeKind::kPatient, s.patient) += dd * (params.bilinear * (epos - eneg));
          const Vector bt = params.bilinear.transpose() * ep;
          d_row(NodeKind::kDoctor, s.positive) += dd * bt;
          d_row(NodeKind::kDoctor, s.negative) -= dd * bt;
          gp.bilinear.noalias() += dd * ep * (epos - eneg).transpose();
        } else {
          d_row(NodeKind::kPatient, s.patient) += dd * (epos - eneg);
          d_row(NodeKind::kDoctor, s.positive) += dd * ep;
          d_row(NodeKind::kDoctor, s.negative) -= dd * ep;
        }
      }
    } else {
      const bool ds = j < npd + nds;
      const LabelSample& s = ds ? samples_.ds[j - npd] : samples_.ss[j - npd - nds];
      const Matrix& head = ds ? params.specialty : params.next_service;
      const std::uint32_t global = ds ? d0 + s.node : s0 + s.node;
      const auto h = emb(global);
      logits = head * h;
      const double c = coef_[ds ? 1 : 2] * inv;
      const std::span<const double> lv(logits.data(), static_cast<std::size_t>(logits.size()));
      if (!want_grad) {
        total += c * cross_entropy(lv, s.label);
        continue;
      }
      dlogits.resize(lv.size());
      total += c * cross_entropy_with_grad(lv, s.label, dlogits);
      const Eigen::Map<const Vector> dl(dlogits.data(), logits.size());
      Matrix& gh = ds ? gp.specialty : gp.next_service;
      gh.noalias() += c * dl * h.transpose();
      d_row(ds ? NodeKind::kDoctor : NodeKind::kService, s.node).noalias() +=
          c * (head.transpose() * dl);
    }
  }
  if (want_grad) {
    model_.backward(params, fw, d_emb, gp);
    flatten_into(gp, grad);
  }
  return total;
}

std::vector<RankedQuery> rank_candidates(const HgatModel& model,
                                         std::span<const double> x,
                                         const MaskedSplit& split,
                                         std::span<const std::uint32_t> patients) {
  const HgatParams params = unflatten(x, model.config());
  const HeteroGraph& g = model.graph();
  const std::uint32_t d0 = g.offset(NodeKind::kDoctor);
  std::vector<std::uint32_t> outputs;
  for (auto p : patients) {
    if (p >= split.positives.size()) {
      fail(ErrorCode::kShapeMismatch, "patient index out of range");
    }
    if (split.positives[p].empty()) continue;
    outputs.push_back(p);
    for (auto d : split.candidates[p]) outputs.push_back(d0 + d);
  }
  std::sort(outputs.begin(), outputs.end());
  outputs.erase(std::unique(outputs.begin(), outputs.end()), outputs.end());
  std::vector<RankedQuery> out;
  if (outputs.empty()) return out;
  const auto fw = model.forward(params, outputs);
  for (auto p : patients) {
    if (split.positives[p].empty()) continue;
    RankedQuery q;
    q.candidates = split.candidates[p];
    q.positives = split.positives[p];
    const auto ep = model.embedding(fw, p);
    for (auto d : q.candidates) {
      q.scores.push_back(score_patient_doctor(ep, model.embedding(fw, d0 + d), params));
    }
    out.push_back(std::move(q));
  }
  return out;
}

}  // namespace hfdl
