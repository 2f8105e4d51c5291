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

#include "hfdl/fdl.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <ostream>
#include <string>
#include <thread>

#include "hfdl/error.hpp"
#include "hfdl/rng.hpp"

namespace hfdl {
namespace {

template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += threads) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

std::vector<double> mix_rows(const Matrix& w,
                             const std::vector<WorkerState>& states,
                             std::size_t i,
                             std::vector<double> WorkerState::*field) {
  const std::size_t d = (states[i].*field).size();
  std::vector<double> out(d, 0.0);
  for (std::size_t j = 0; j < states.size(); ++j) {
    const double wij = w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    if (wij == 0.0) continue;
    const auto& v = states[j].*field;
    for (std::size_t c = 0; c < d; ++c) out[c] += wij * v[c];
  }
  return out;
}

void check_square(const Matrix& w, std::size_t m) {
  if (static_cast<std::size_t>(w.rows()) != m || static_cast<std::size_t>(w.cols()) != m) {
    fail(ErrorCode::kLengthMismatch, "consensus matrix size " +
                                         std::to_string(w.rows()) + " != workers " +
                                         std::to_string(m));
  }
}

void append_number(std::string& s, double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  s.append(buf, r.ptr);
}

}  // namespace

std::string_view mode_name(Mode mode) {
  switch (mode) {
    case Mode::kLocal: return "local";
    case Mode::kGlobal: return "global";
    case Mode::kFdl: return "fdl";
  }
  return "?";
}

Mode parse_mode(std::string_view text) {
  if (text == "local") return Mode::kLocal;
  if (text == "global") return Mode::kGlobal;
  if (text == "fdl") return Mode::kFdl;
  fail(ErrorCode::kConfigError,
       "unknown mode '" + std::string(text) + "' (local, global, fdl)");
}

std::size_t default_period(std::size_t n) {
  return static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
}

std::size_t thread_count(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("HETERO_FDL_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return 1;
}

std::vector<WorkerState> init_workers(
    std::span<const LocalObjective* const> objectives,
    std::span<const double> x0, std::uint64_t seed) {
  if (objectives.empty()) fail(ErrorCode::kConfigError, "no workers");
  std::vector<WorkerState> states(objectives.size());
  for (std::size_t i = 0; i < objectives.size(); ++i) {
    if (objectives[i]->dimension() != x0.size()) {
      fail(ErrorCode::kLengthMismatch,
           "worker " + std::to_string(i) + " has parameter length " +
               std::to_string(objectives[i]->dimension()) + ", x0 has " +
               std::to_string(x0.size()));
    }
    auto& s = states[i];
    s.x.assign(x0.begin(), x0.end());
    s.g.resize(x0.size());
    objectives[i]->full_gradient(s.x, s.g);
    s.y = s.g;
    s.rng.seed(mix_seed(seed, 0x5b1d + i));
  }
  return states;
}

std::vector<std::vector<double>> consensus_step(
    const std::vector<WorkerState>& states, const Matrix& w, double gamma) {
  check_square(w, states.size());
  std::vector<std::vector<double>> out(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    out[i] = mix_rows(w, states, i, &WorkerState::x);
    const auto& y = states[i].y;
    for (std::size_t c = 0; c < y.size(); ++c) out[i][c] -= gamma * y[c];
  }
  return out;
}

std::vector<double> spider_gradient(const LocalObjective& obj,
                                    std::span<const double> g_old,
                                    std::span<const double> x_new,
                                    std::span<const double> x_old,
                                    std::size_t k, std::size_t q,
                                    std::size_t batch, std::mt19937_64& rng) {
  if (q == 0) fail(ErrorCode::kConfigError, "period q must be >= 1");
  std::vector<double> g(obj.dimension());
  if ((k + 1) % q == 0) {
    obj.full_gradient(x_new, g);
    return g;
  }
  if (batch == 0) fail(ErrorCode::kEmptyBatch, "minibatch is empty");
  const std::size_t n = obj.sample_count();
  if (batch > n) {
    fail(ErrorCode::kConfigError, "batch size " + std::to_string(batch) +
                                      " exceeds sample count " + std::to_string(n));
  }
  std::vector<std::size_t> subset(batch);
  if (batch == n) {
    subset = obj.all_samples();
  } else {
    for (auto& j : subset) j = uniform_index(rng, n);
  }
  std::vector<double> g_prev(obj.dimension());
  obj.value_and_gradient(x_new, subset, g);
  obj.value_and_gradient(x_old, subset, g_prev);
  for (std::size_t c = 0; c < g.size(); ++c) g[c] = g_old[c] + (g[c] - g_prev[c]);
  return g;
}

std::vector<std::vector<double>> tracking_step(
    const std::vector<WorkerState>& states, const Matrix& w,
    const std::vector<std::vector<double>>& g_new) {
  check_square(w, states.size());
  if (g_new.size() != states.size()) {
    fail(ErrorCode::kLengthMismatch, "one new gradient per worker required");
  }
  std::vector<std::vector<double>> out(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    out[i] = mix_rows(w, states, i, &WorkerState::y);
    const auto& g = states[i].g;
    for (std::size_t c = 0; c < g.size(); ++c) out[i][c] += g_new[i][c] - g[c];
  }
  return out;
}

std::vector<double> mean_of_rows(const std::vector<std::vector<double>>& rows) {
  std::vector<double> m(rows.empty() ? 0 : rows[0].size(), 0.0);
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < m.size(); ++c) m[c] += r[c];
  }
  for (auto& v : m) v /= static_cast<double>(rows.size());
  return m;
}

namespace {

std::vector<double> mean_x(const std::vector<WorkerState>& states) {
  std::vector<double> m(states[0].x.size(), 0.0);
  for (const auto& s : states) {
    for (std::size_t c = 0; c < m.size(); ++c) m[c] += s.x[c];
  }
  for (auto& v : m) v /= static_cast<double>(states.size());
  return m;
}

double dispersion(const std::vector<WorkerState>& states,
                  const std::vector<double>& xbar) {
  double s = 0.0;
  for (const auto& st : states) {
    for (std::size_t c = 0; c < xbar.size(); ++c) {
      const double d = st.x[c] - xbar[c];
      s += d * d;
    }
  }
  return s / static_cast<double>(states.size());
}

double tracking_gap(const std::vector<WorkerState>& states) {
  const std::size_t d = states[0].y.size();
  double worst = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    double sy = 0.0;
    double sg = 0.0;
    for (const auto& s : states) {
      sy += s.y[c];
      sg += s.g[c];
    }
    worst = std::max(worst, std::abs(sy - sg) / static_cast<double>(states.size()));
  }
  return worst;
}

}  // namespace

double stationarity(const std::vector<WorkerState>& states,
                    std::span<const double> grad_at_mean) {
  if (states.empty()) return 0.0;
  const auto xbar = mean_x(states);
  if (grad_at_mean.size() != xbar.size()) {
    fail(ErrorCode::kLengthMismatch, "gradient length mismatch");
  }
  double g2 = 0.0;
  for (double v : grad_at_mean) g2 += v * v;
  return g2 + dispersion(states, xbar);
}

RunResult run(Mode mode, std::span<const LocalObjective* const> objectives,
              const ConsensusMatrix* w, std::span<const double> x0,
              const FdlOptions& options, const RunHooks& hooks) {
  const std::size_t m = objectives.size();
  if (m == 0) fail(ErrorCode::kConfigError, "no workers");
  if (!(options.gamma > 0.0) || !std::isfinite(options.gamma)) {
    fail(ErrorCode::kConfigError, "step size gamma must be positive");
  }
  if (options.diagnostics_every == 0) {
    fail(ErrorCode::kConfigError, "diagnostics cadence must be >= 1");
  }
  Matrix mixing;
  double lambda = 0.0;
  switch (mode) {
    case Mode::kLocal:
      mixing = Matrix::Identity(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
      break;
    case Mode::kGlobal:
      if (m != 1) {
        fail(ErrorCode::kConfigError, "global mode trains one pooled objective, got " +
                                          std::to_string(m));
      }
      mixing = Matrix::Ones(1, 1);
      break;
    case Mode::kFdl:
      if (w == nullptr) fail(ErrorCode::kConfigError, "fdl mode needs a consensus matrix");
      check_square(w->entries(), m);
      mixing = w->entries();
      lambda = w->lambda();
      break;
  }
  if (options.strict) {
    if (mode == Mode::kLocal) {
      fail(ErrorCode::kConfigError, "strict step size applies to global and fdl modes");
    }
    const double bound = step_size_bound(options.lipschitz, lambda, m);
    if (options.gamma > bound) {
      fail(ErrorCode::kStepSizeExceedsBound,
           "gamma " + std::to_string(options.gamma) + " exceeds bound " +
               std::to_string(bound));
    }
  }

  RunResult result;
  std::size_t n_max = 0;
  for (const auto* obj : objectives) n_max = std::max(n_max, obj->sample_count());
  result.q = options.q ? options.q : default_period(n_max);
  for (const auto* obj : objectives) {
    const std::size_t b = options.batch ? options.batch : default_period(obj->sample_count());
    if (b > obj->sample_count()) {
      fail(ErrorCode::kConfigError, "batch size " + std::to_string(b) +
                                        " exceeds a worker's sample count " +
                                        std::to_string(obj->sample_count()));
    }
    result.batch.push_back(b);
  }
  const std::size_t threads = thread_count(options.threads);
  const auto start = std::chrono::steady_clock::now();

  auto states = init_workers(objectives, x0, options.seed);
  const std::size_t d = x0.size();

  auto record = [&](std::size_t round) {
    const bool diag = round % options.diagnostics_every == 0 || round == options.rounds;
    const bool eval = hooks.evaluate && hooks.eval_every > 0 &&
                      (round % hooks.eval_every == 0 || round == options.rounds);
    const double gap = tracking_gap(states);
    result.max_tracking_gap = std::max(result.max_tracking_gap, gap);
    if (!diag && !eval) return;
    RoundRecord r;
    r.round = round;
    r.tracking_gap = gap;
    const auto xbar = mean_x(states);
    std::vector<std::vector<double>> grads(m, std::vector<double>(d));
    r.loss.assign(m, 0.0);
    parallel_for(m, threads, [&](std::size_t i) {
      objectives[i]->full_gradient(xbar, grads[i]);
      r.loss[i] = objectives[i]->full_value(states[i].x);
    });
    const auto gbar = mean_of_rows(grads);
    r.grad_norm_sq = 0.0;
    for (double v : gbar) r.grad_norm_sq += v * v;
    r.consensus_error = dispersion(states, xbar);
    r.stationarity = r.grad_norm_sq + r.consensus_error;
    if (eval) r.metrics = hooks.evaluate(round, states);
    r.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.records.push_back(std::move(r));
  };

  record(0);
  if (hooks.on_round) hooks.on_round(0, states);
  for (std::size_t k = 0; k < options.rounds; ++k) {
    auto x_new = consensus_step(states, mixing, options.gamma);
    std::vector<std::vector<double>> g_new(m);
    parallel_for(m, threads, [&](std::size_t i) {
      g_new[i] = spider_gradient(*objectives[i], states[i].g, x_new[i], states[i].x,
                                 k, result.q, result.batch[i], states[i].rng);
    });
    auto y_new = tracking_step(states, mixing, g_new);
    for (std::size_t i = 0; i < m; ++i) {
      states[i].x = std::move(x_new[i]);
      states[i].y = std::move(y_new[i]);
      states[i].g = std::move(g_new[i]);
    }
    record(k + 1);
    if (hooks.on_round) hooks.on_round(k + 1, states);
  }
  for (auto& s : states) result.final_x.push_back(std::move(s.x));
  return result;
}

std::vector<std::pair<double, double>> running_average_stationarity(
    const std::vector<RoundRecord>& records) {
  std::vector<std::pair<double, double>> out;
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < records.size(); ++i) {
    sum += records[i].stationarity;
    out.emplace_back(static_cast<double>(records[i + 1].round),
                     sum / static_cast<double>(i + 1));
  }
  return out;
}

double fit_loglog_slope(const std::vector<std::pair<double, double>>& series,
                        double lo, double hi, std::size_t points) {
  std::vector<std::pair<double, double>> chosen;
  if (points < 2) points = 2;
  const double a = std::log(lo);
  const double b = std::log(hi);
  std::size_t cursor = 0;
  for (std::size_t p = 0; p < points; ++p) {
    const double target = std::exp(a + (b - a) * static_cast<double>(p) /
                                           static_cast<double>(points - 1));
    while (cursor + 1 < series.size() && series[cursor].first < target) ++cursor;
    if (cursor >= series.size()) break;
    const auto& pt = series[cursor];
    if (pt.first < lo || pt.first > hi || !(pt.second > 0.0)) continue;
    if (!chosen.empty() && chosen.back().first == pt.first) continue;
    chosen.push_back(pt);
  }
  if (chosen.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : chosen) {
    mx += std::log(x);
    my += std::log(y);
  }
  mx /= static_cast<double>(chosen.size());
  my /= static_cast<double>(chosen.size());
  double sxy = 0.0, sxx = 0.0;
  for (const auto& [x, y] : chosen) {
    const double dx = std::log(x) - mx;
    sxy += dx * (std::log(y) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

double estimate_lipschitz(const LocalObjective& obj, std::span<const double> x,
                          std::size_t iterations, std::uint64_t seed) {
  const std::size_t d = obj.dimension();
  std::mt19937_64 rng(mix_seed(seed, 0x11b));
  Vector v(static_cast<Eigen::Index>(d));
  for (auto& c : v) c = standard_normal(rng);
  v.normalize();
  double xnorm = 0.0;
  for (double c : x) xnorm += c * c;
  const double eps = 1e-4 * std::max(1.0, std::sqrt(xnorm));
  std::vector<double> xp(x.begin(), x.end()), xm(x.begin(), x.end());
  std::vector<double> gp(d), gm(d);
  double estimate = 0.0;
  for (std::size_t it = 0; it < iterations; ++it) {
    for (std::size_t c = 0; c < d; ++c) {
      xp[c] = x[c] + eps * v(static_cast<Eigen::Index>(c));
      xm[c] = x[c] - eps * v(static_cast<Eigen::Index>(c));
    }
    obj.full_gradient(xp, gp);
    obj.full_gradient(xm, gm);
    Vector hv(static_cast<Eigen::Index>(d));
    for (std::size_t c = 0; c < d; ++c) {
      hv(static_cast<Eigen::Index>(c)) = (gp[c] - gm[c]) / (2.0 * eps);
    }
    estimate = hv.norm();
    if (!(estimate > 0.0)) break;
    v = hv / estimate;
  }
  return estimate;
}

void write_metrics_csv(std::ostream& out, Mode mode,
                       const std::vector<RoundRecord>& records,
                       std::span<const std::size_t> units) {
  out << "round,mode,worker,loss,consensus_error,grad_norm_sq,stationarity,recall,auc\n";
  std::string line;
  for (const auto& r : records) {
    for (std::size_t u = 0; u < units.size(); ++u) {
      line.clear();
      line += std::to_string(r.round);
      line += ',';
      line += mode_name(mode);
      line += ',';
      line += std::to_string(units[u]);
      line += ',';
      append_number(line, r.loss.size() == units.size() ? r.loss[u] : r.loss.at(0));
      line += ',';
      append_number(line, r.consensus_error);
      line += ',';
      append_number(line, r.grad_norm_sq);
      line += ',';
      append_number(line, r.stationarity);
      line += ',';
      if (u < r.metrics.size()) {
        append_number(line, r.metrics[u].recall);
        line += ',';
        append_number(line, r.metrics[u].auc);
      } else {
        line += ',';
      }
      line += '\n';
      out << line;
    }
  }
}

}  // namespace hfdl
