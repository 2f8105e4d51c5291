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

#ifndef HFDL_OBJECTIVES_HPP_
#define HFDL_OBJECTIVES_HPP_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "hfdl/ehr_graph.hpp"
#include "hfdl/features.hpp"
#include "hfdl/hgat.hpp"
#include "hfdl/linalg.hpp"

namespace hfdl {

// -log softmax(logits)[label].
double cross_entropy(std::span<const double> logits, std::size_t label);
// Same value; writes softmax(logits) - onehot(label) into grad.
double cross_entropy_with_grad(std::span<const double> logits,
                               std::size_t label, std::span<double> grad);

// -ln sigmoid(pos - neg).
double bpr_loss(double score_pos, double score_neg);

struct LossWeights {
  double ds = 1.0;  // doctor specialty
  double ss = 1.0;  // next service
  double pd = 1.0;  // patient-doctor ranking

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

void validate_weights(const LossWeights& w);

// Weighted sum of already-averaged task losses.
double combined_loss(double l_ds, double l_ss, double l_pd,
                     const LossWeights& weights);

// Labels for the batch behind a TaskOutputs. Each patient query holds the
// positive doctor first and the negative second.
struct TaskLabels {
  std::vector<std::size_t> specialty;
  std::vector<std::size_t> next_service;
};

double combined_loss(const TaskOutputs& outputs, const TaskLabels& labels,
                     const LossWeights& weights);

// Fraction of positives found in the first `cutoff` ranked candidates
// (cutoff 0 means |positives|).
double recall_at_mask(std::span<const std::uint32_t> ranked,
                      std::span<const std::uint32_t> positives,
                      std::size_t cutoff = 0);

// Rank-sum AUC, ties counted one half.
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);
double auc_bruteforce(std::span<const double> scores,
                      std::span<const std::uint8_t> labels);

struct RankedQuery {
  std::vector<std::uint32_t> candidates;
  std::vector<double> scores;
  std::vector<std::uint32_t> positives;
};

struct RankingMetrics {
  double recall = 0.0;
  double auc = 0.0;
  std::size_t queries = 0;
};

// Per-query recall and AUC averaged over queries, or AUC pooled over every
// (query, candidate) pair.
RankingMetrics evaluate_ranking(std::span<const RankedQuery> queries,
                                bool pooled_auc = false);

// f(x) = (1/n) sum_j f(x; zeta_j). Subsets are multisets of sample indices.
class LocalObjective {
 public:
  virtual ~LocalObjective() = default;

  virtual std::size_t sample_count() const = 0;
  virtual std::size_t dimension() const = 0;

  // Mean over the subset.
  virtual double value(std::span<const double> x,
                       std::span<const std::size_t> subset) const = 0;
  // Mean over the subset; grad is overwritten.
  virtual double value_and_gradient(std::span<const double> x,
                                    std::span<const std::size_t> subset,
                                    std::span<double> grad) const = 0;

  // value() with the extra precision the implementation can offer; used by
  // difference checks.
  virtual long double precise_value(std::span<const double> x,
                                    std::span<const std::size_t> subset) const {
    return value(x, subset);
  }

  // Gradient Lipschitz constant when known in closed form, else 0.
  virtual double lipschitz() const { return 0.0; }

  double full_value(std::span<const double> x) const;
  double full_gradient(std::span<const double> x, std::span<double> grad) const;
  const std::vector<std::size_t>& all_samples() const;

 protected:
  void check_call(std::span<const double> x,
                  std::span<const std::size_t> subset) const;

 private:
  mutable std::vector<std::size_t> all_;
};

std::vector<double> stochastic_gradient(const LocalObjective& obj,
                                        std::span<const double> x,
                                        std::span<const std::size_t> subset);

// Worst relative error between central differences and `analytic` over
// `coordinates` coordinates drawn without replacement (all when 0 or larger
// than the dimension). Denominator max(1e-8, |analytic|).
double finite_difference_check(const LocalObjective& obj,
                               std::span<const double> x,
                               std::span<const std::size_t> subset,
                               std::span<const double> analytic, double h,
                               std::size_t coordinates, std::uint64_t seed);
double finite_difference_check(const LocalObjective& obj,
                               std::span<const double> x,
                               std::span<const std::size_t> subset, double h,
                               std::size_t coordinates, std::uint64_t seed);

// f(x; zeta_j) = 0.5 * ||x - zeta_j||^2.
class QuadraticObjective final : public LocalObjective {
 public:
  explicit QuadraticObjective(std::vector<Vector> centers);

  std::size_t sample_count() const override { return centers_.size(); }
  std::size_t dimension() const override { return dim_; }
  double value(std::span<const double> x,
               std::span<const std::size_t> subset) const override;
  double value_and_gradient(std::span<const double> x,
                            std::span<const std::size_t> subset,
                            std::span<double> grad) const override;
  double lipschitz() const override { return 1.0; }

  Vector mean_center() const;

 private:
  std::vector<Vector> centers_;
  std::size_t dim_ = 0;
};

// f(x; j) = log(1 + exp(-b_j a_j.x)) + rho * sum_k x_k^2 / (1 + x_k^2).
class LogisticNonconvexObjective final : public LocalObjective {
 public:
  LogisticNonconvexObjective(Matrix features, std::vector<double> labels,
                             double rho);

  std::size_t sample_count() const override {
    return static_cast<std::size_t>(a_.rows());
  }
  std::size_t dimension() const override {
    return static_cast<std::size_t>(a_.cols());
  }
  double value(std::span<const double> x,
               std::span<const std::size_t> subset) const override;
  double value_and_gradient(std::span<const double> x,
                            std::span<const std::size_t> subset,
                            std::span<double> grad) const override;
  // max_j ||a_j||^2 / 4 + 2 rho.
  double lipschitz() const override;

  const Matrix& features() const { return a_; }
  const std::vector<double>& labels() const { return b_; }

 private:
  Matrix a_;
  std::vector<double> b_;
  double rho_;
};

// Worker shards for the logistic workload: a shared ground-truth direction
// plus a per-worker shift, rows scaled to norm `row_norm`.
std::vector<LogisticNonconvexObjective> make_logistic_shards(
    std::size_t workers, std::size_t samples, std::size_t dim, double rho,
    double row_norm, std::uint64_t seed);

std::vector<QuadraticObjective> make_quadratic_shards(std::size_t workers,
                                                      std::size_t dim,
                                                      std::uint64_t seed);

// Training samples of the HGAT objective, indices local to their kind.
struct PdSample {
  std::uint32_t patient = 0;
  std::uint32_t positive = 0;
  std::uint32_t negative = 0;
};
struct LabelSample {
  std::uint32_t node = 0;
  std::uint32_t label = 0;
};
struct HgatSamples {
  std::vector<PdSample> pd;
  std::vector<LabelSample> ds;
  std::vector<LabelSample> ss;

  std::size_t size() const { return pd.size() + ds.size() + ss.size(); }
};

struct SampleOptions {
  bool patient_doctor = true;
  bool doctor_specialty = true;
  bool next_service = true;
};

// One BPR triple per observed patient-doctor edge (negative drawn once,
// seeded, among doctors the patient never saw), one specialty label per
// non-isolated doctor, one next-service label per service-service edge.
// `patients` restricts the patient side when nonempty.
HgatSamples build_hgat_samples(const HeteroGraph& graph,
                               std::span<const bool> patients,
                               const SampleOptions& options,
                               std::uint64_t seed);

// Combined HGAT loss over a shard. Sample j of task t carries coefficient
// w_t * n / n_t so the full-batch mean is the weighted combined loss.
class HgatObjective final : public LocalObjective {
 public:
  HgatObjective(std::shared_ptr<const HeteroGraph> graph,
                std::shared_ptr<const FeatureTable> features,
                const HgatConfig& config, SamplingPlan plan,
                HgatSamples samples, const LossWeights& weights);

  std::size_t sample_count() const override { return samples_.size(); }
  std::size_t dimension() const override { return dim_; }
  double value(std::span<const double> x,
               std::span<const std::size_t> subset) const override;
  double value_and_gradient(std::span<const double> x,
                            std::span<const std::size_t> subset,
                            std::span<double> grad) const override;
  long double precise_value(std::span<const double> x,
                            std::span<const std::size_t> subset) const override;

  const HgatModel& model() const { return model_; }
  const HgatSamples& samples() const { return samples_; }
  const LossWeights& weights() const { return weights_; }

 private:
  std::vector<std::uint32_t> outputs_for(std::span<const std::size_t> subset) const;
  long double extended_value(std::span<const double> x,
                             std::span<const std::size_t> subset) const;
  double evaluate(std::span<const double> x,
                  std::span<const std::size_t> subset,
                  std::span<double> grad) const;

  std::shared_ptr<const HeteroGraph> graph_;
  std::shared_ptr<const FeatureTable> features_;
  HgatModel model_;
  HgatSamples samples_;
  LossWeights weights_;
  double coef_[3] = {0.0, 0.0, 0.0};  // pd, ds, ss
  std::size_t dim_ = 0;
};

// Ranks every masked patient's candidates with the model at x.
std::vector<RankedQuery> rank_candidates(const HgatModel& model,
                                         std::span<const double> x,
                                         const MaskedSplit& split,
                                         std::span<const std::uint32_t> patients);

}  // namespace hfdl

#endif  // HFDL_OBJECTIVES_HPP_
