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

#include "hfdl/topology.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "hfdl/error.hpp"

namespace hfdl {
namespace {

std::string pair_text(std::size_t i, std::size_t j) {
  return "(" + std::to_string(i) + ", " + std::to_string(j) + ")";
}

bool connected(const EdgeList& edges, std::size_t m) {
  if (m == 0) return false;
  std::vector<std::vector<std::size_t>> adj(m);
  for (const auto& [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<char> seen(m, 0);
  std::vector<std::size_t> stack = {0};
  seen[0] = 1;
  std::size_t count = 1;
  while (!stack.empty()) {
    const auto v = stack.back();
    stack.pop_back();
    for (auto u : adj[v]) {
      if (!seen[u]) {
        seen[u] = 1;
        ++count;
        stack.push_back(u);
      }
    }
  }
  return count == m;
}

}  // namespace

ConsensusMatrix ConsensusMatrix::identity(std::size_t m) {
  ConsensusMatrix c;
  c.w_ = Matrix::Identity(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  c.lambda_ = m > 1 ? 1.0 : 0.0;
  return c;
}

std::vector<double> symmetric_eigenvalues(const Matrix& input) {
  const Eigen::Index n = input.rows();
  Matrix a = input;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    }
    if (off < 1e-30) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) ev[static_cast<std::size_t>(i)] = a(i, i);
  std::sort(ev.begin(), ev.end());
  return ev;
}

double spectral_gap_lambda(const Matrix& w) {
  if (w.rows() < 2) return 0.0;
  const auto ev = symmetric_eigenvalues(w);
  // The top eigenvalue of a doubly stochastic matrix is 1; drop it.
  const double second = ev[ev.size() - 2];
  return std::min(1.0, std::max(std::abs(second), std::abs(ev.front())));
}

ConsensusMatrix validate_consensus(const Matrix& entries,
                                   const std::optional<EdgeList>& edges,
                                   double tolerance) {
  const Eigen::Index m = entries.rows();
  if (m == 0 || entries.cols() != m) {
    fail(ErrorCode::kShapeMismatch, "consensus matrix must be square and nonempty");
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      if (!std::isfinite(entries(i, j)) || entries(i, j) < 0.0) {
        fail(ErrorCode::kNotDoublyStochastic,
             "entry " + pair_text(i, j) + " is negative or not finite");
      }
    }
  }
  double worst = 0.0;
  std::string where;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double r = std::abs(entries.row(i).sum() - 1.0);
    const double c = std::abs(entries.col(i).sum() - 1.0);
    if (r > worst) {
      worst = r;
      where = "row " + std::to_string(i);
    }
    if (c > worst) {
      worst = c;
      where = "column " + std::to_string(i);
    }
  }
  if (worst > tolerance) {
    std::ostringstream msg;
    msg << where << " sum deviates from 1 by " << worst;
    fail(ErrorCode::kNotDoublyStochastic, msg.str());
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j) {
      if (std::abs(entries(i, j) - entries(j, i)) > tolerance) {
        fail(ErrorCode::kNotSymmetric,
             "entries " + pair_text(i, j) + " and " + pair_text(j, i) + " differ");
      }
    }
  }
  if (edges) {
    std::vector<char> declared(static_cast<std::size_t>(m * m), 0);
    for (const auto& [a, b] : *edges) {
      if (a >= static_cast<std::size_t>(m) || b >= static_cast<std::size_t>(m) || a == b) {
        fail(ErrorCode::kSparsityViolation, "declared edge " + pair_text(a, b) +
                                                " is not a valid off-diagonal pair");
      }
      declared[a * m + b] = declared[b * m + a] = 1;
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) {
        if (i == j) continue;
        const bool nonzero = entries(i, j) != 0.0;
        if (nonzero != static_cast<bool>(declared[i * m + j])) {
          fail(ErrorCode::kSparsityViolation,
               "entry " + pair_text(i, j) +
                   (nonzero ? " is nonzero without an edge" : " is zero on a declared edge"));
        }
      }
    }
  }
  ConsensusMatrix out;
  out.w_ = entries;
  out.lambda_ = spectral_gap_lambda(entries);
  if (m > 1 && out.lambda_ >= 1.0 - 1e-12) {
    fail(ErrorCode::kDisconnected,
         "second-largest eigenvalue magnitude is 1; the topology does not mix");
  }
  return out;
}

ConsensusMatrix metropolis_weights(const EdgeList& edges, std::size_t m) {
  if (m == 0) fail(ErrorCode::kDisconnectedGraph, "empty worker graph");
  std::vector<std::size_t> degree(m, 0);
  EdgeList unique;
  for (auto [a, b] : edges) {
    if (a >= m || b >= m || a == b) {
      fail(ErrorCode::kSparsityViolation, "edge " + pair_text(a, b) + " is invalid");
    }
    if (a > b) std::swap(a, b);
    unique.emplace_back(a, b);
  }
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  if (!connected(unique, m)) {
    fail(ErrorCode::kDisconnectedGraph, "worker graph is not connected");
  }
  for (const auto& [a, b] : unique) {
    ++degree[a];
    ++degree[b];
  }
  const auto n = static_cast<Eigen::Index>(m);
  Matrix w = Matrix::Zero(n, n);
  for (const auto& [a, b] : unique) {
    const double v = 1.0 / (1.0 + static_cast<double>(std::max(degree[a], degree[b])));
    w(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = v;
    w(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = v;
  }
  for (Eigen::Index i = 0; i < n; ++i) w(i, i) = 1.0 - w.row(i).sum();
  return validate_consensus(w, unique);
}

EdgeList named_graph(std::string_view name, std::size_t m) {
  if (m == 0) fail(ErrorCode::kConfigError, "worker count must be >= 1");
  EdgeList e;
  if (name == "ring") {
    for (std::size_t i = 0; i + 1 < m; ++i) e.emplace_back(i, i + 1);
    if (m > 2) e.emplace_back(m - 1, 0);
  } else if (name == "path") {
    for (std::size_t i = 0; i + 1 < m; ++i) e.emplace_back(i, i + 1);
  } else if (name == "complete") {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = i + 1; j < m; ++j) e.emplace_back(i, j);
    }
  } else if (name == "star") {
    for (std::size_t i = 1; i < m; ++i) e.emplace_back(0, i);
  } else {
    fail(ErrorCode::kConfigError, "unknown graph '" + std::string(name) +
                                      "' (ring, path, complete, star)");
  }
  return e;
}

std::array<double, 9> step_size_terms(double lipschitz, double lambda,
                                      std::size_t m) {
  if (!(lipschitz > 0.0) || m == 0) {
    fail(ErrorCode::kConfigError, "step-size bound needs L > 0 and m >= 1");
  }
  if (!(lambda >= 0.0 && lambda < 1.0)) {
    fail(ErrorCode::kInvalidLambda, "lambda must lie in [0, 1)");
  }
  const double l = lipschitz;
  const double l2 = l * l;
  const double gap = 1.0 - lambda;
  const double md = static_cast<double>(m);
  return {1.0 / (3.0 * l),
          std::sqrt(gap / (72.0 * md * l2)),
          std::sqrt(1.0 / (24.0 * md * l2)),
          1.0 / 5.0,
          1.0 / (40.0 * l2),
          gap / (120.0 * l2),
          gap * gap / 3.0,
          gap / (6.0 * l),
          std::sqrt(gap / (12.0 * l2))};
}

double step_size_bound(double lipschitz, double lambda, std::size_t m) {
  const auto t = step_size_terms(lipschitz, lambda, m);
  return *std::min_element(t.begin(), t.end());
}

Matrix read_topology(std::istream& in) {
  auto bad = [](const std::string& why) {
    fail(ErrorCode::kMalformedTopologyFile, why);
  };
  std::string line;
  std::size_t m = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) break;
  }
  {
    std::istringstream ss(line);
    std::string extra;
    if (!(ss >> m) || (ss >> extra) || m == 0) bad("first line must be the worker count m");
  }
  Matrix w(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) {
    if (!std::getline(in, line)) bad("expected " + std::to_string(m) + " rows, got " + std::to_string(i));
    std::istringstream ss(line);
    std::string tok;
    std::size_t j = 0;
    while (ss >> tok) {
      if (j >= m) bad("row " + std::to_string(i + 1) + " has more than m entries");
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        bad("row " + std::to_string(i + 1) + ": '" + tok + "' is not a number");
      }
      w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j++)) = v;
    }
    if (j != m) bad("row " + std::to_string(i + 1) + " has " + std::to_string(j) + " entries, expected " + std::to_string(m));
  }
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) bad("trailing content after matrix");
  }
  return w;
}

Matrix read_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIoError, "cannot open topology file '" + path + "'");
  return read_topology(in);
}

void write_topology(const Matrix& w, std::ostream& out) {
  out << w.rows() << '\n';
  char buf[32];
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      const auto res = std::to_chars(buf, buf + sizeof buf, w(i, j));
      if (j) out << ' ';
      out.write(buf, res.ptr - buf);
    }
    out << '\n';
  }
}

double consensus_error(const Matrix& x) {
  if (x.rows() == 0) return 0.0;
  const Vector mean = x.colwise().mean().transpose();
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    s += (x.row(i).transpose() - mean).squaredNorm();
  }
  return s / static_cast<double>(x.rows());
}

}  // namespace hfdl
