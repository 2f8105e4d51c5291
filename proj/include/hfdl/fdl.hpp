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

#ifndef HFDL_FDL_HPP_
#define HFDL_FDL_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "hfdl/objectives.hpp"
#include "hfdl/topology.hpp"

namespace hfdl {

enum class Mode { kLocal, kGlobal, kFdl };

std::string_view mode_name(Mode mode);
Mode parse_mode(std::string_view text);

struct WorkerState {
  std::vector<double> x;  // local model copy
  std::vector<double> y;  // tracking variable
  std::vector<double> g;  // gradient estimate
  std::mt19937_64 rng;    // minibatch stream
};

// Every worker starts at x0 with y = g = its full local gradient.
std::vector<WorkerState> init_workers(
    std::span<const LocalObjective* const> objectives,
    std::span<const double> x0, std::uint64_t seed);

// x_i <- sum_j W_ij x_j - gamma y_i, all from the pre-round snapshot.
std::vector<std::vector<double>> consensus_step(
    const std::vector<WorkerState>& states, const Matrix& w, double gamma);

// Refresh (full gradient at x_new) when (k + 1) % q == 0; otherwise
// g_old + mean over S of grad(x_new; j) - grad(x_old; j), with |S| = batch
// indices drawn with replacement from rng (batch == n takes every index).
std::vector<double> spider_gradient(const LocalObjective& obj,
                                    std::span<const double> g_old,
                                    std::span<const double> x_new,
                                    std::span<const double> x_old,
                                    std::size_t k, std::size_t q,
                                    std::size_t batch, std::mt19937_64& rng);

// y_i <- sum_j W_ij y_j + g_new_i - g_i.
std::vector<std::vector<double>> tracking_step(
    const std::vector<WorkerState>& states, const Matrix& w,
    const std::vector<std::vector<double>>& g_new);

// ||grad f(xbar)||^2 + (1/m) sum_i ||x_i - xbar||^2.
double stationarity(const std::vector<WorkerState>& states,
                    std::span<const double> grad_at_mean);

std::vector<double> mean_of_rows(const std::vector<std::vector<double>>& rows);

struct UnitMetrics {
  std::size_t unit = 0;
  double recall = 0.0;
  double auc = 0.0;
};

struct RoundRecord {
  std::size_t round = 0;
  std::vector<double> loss;  // f_i(x_i) per worker
  double consensus_error = 0.0;
  double grad_norm_sq = 0.0;
  double stationarity = 0.0;
  double tracking_gap = 0.0;  // ||mean(y) - mean(g)||_inf
  double wall_seconds = 0.0;
  std::vector<UnitMetrics> metrics;  // filled on evaluation rounds only
};

struct FdlOptions {
  double gamma = 0.0;
  std::size_t q = 0;      // 0: ceil(sqrt(n))
  std::size_t batch = 0;  // 0: ceil(sqrt(n_i))
  std::size_t rounds = 0;
  std::uint64_t seed = 0;
  std::size_t diagnostics_every = 1;
  // Strict mode rejects gamma above step_size_bound(lipschitz, lambda, m).
  bool strict = false;
  double lipschitz = 0.0;
  std::size_t threads = 0;  // 0: HETERO_FDL_THREADS or 1
};

struct RunHooks {
  std::size_t eval_every = 0;
  std::function<std::vector<UnitMetrics>(std::size_t round,
                                         const std::vector<WorkerState>&)>
      evaluate;
  // Called after every round (and once after init with round 0).
  std::function<void(std::size_t round, const std::vector<WorkerState>&)>
      on_round;
};

struct RunResult {
  std::vector<RoundRecord> records;
  std::vector<std::vector<double>> final_x;
  double max_tracking_gap = 0.0;
  std::size_t q = 0;
  std::vector<std::size_t> batch;
};

// Local: W = I. Global: exactly one objective (the pooled shards), W = [1].
// Fdl: Algorithm rounds over `w`.
RunResult run(Mode mode, std::span<const LocalObjective* const> objectives,
              const ConsensusMatrix* w, std::span<const double> x0,
              const FdlOptions& options, const RunHooks& hooks = {});

std::size_t default_period(std::size_t n);

std::size_t thread_count(std::size_t requested);

// (T, (1/T) sum_{t<T} stationarity_t) from consecutive records starting at
// round 0.
std::vector<std::pair<double, double>> running_average_stationarity(
    const std::vector<RoundRecord>& records);

// Least-squares slope of log y against log x over points with x in
// [lo, hi], thinned to `points` log-spaced abscissae.
double fit_loglog_slope(const std::vector<std::pair<double, double>>& series,
                        double lo, double hi, std::size_t points = 24);

// Power iteration on Hessian-vector products by central gradient
// differences at x.
double estimate_lipschitz(const LocalObjective& obj, std::span<const double> x,
                          std::size_t iterations, std::uint64_t seed);

// round,mode,worker,loss,consensus_error,grad_norm_sq,stationarity,recall,auc
// `units` labels the rows of each round: one per worker, or one per region
// for the single global model.
void write_metrics_csv(std::ostream& out, Mode mode,
                       const std::vector<RoundRecord>& records,
                       std::span<const std::size_t> units);

}  // namespace hfdl

#endif  // HFDL_FDL_HPP_
