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

#ifndef HFDL_TOPOLOGY_HPP_
#define HFDL_TOPOLOGY_HPP_

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hfdl/linalg.hpp"

namespace hfdl {

// Undirected edges (i, j), i != j.
using EdgeList = std::vector<std::pair<std::size_t, std::size_t>>;

inline constexpr double kConsensusTolerance = 1e-12;

class ConsensusMatrix {
 public:
  std::size_t m() const { return static_cast<std::size_t>(w_.rows()); }
  const Matrix& entries() const { return w_; }
  double lambda() const { return lambda_; }
  double operator()(std::size_t i, std::size_t j) const {
    return w_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

  // Rows of x are worker vectors; returns W x.
  Matrix mix(const Matrix& x) const { return w_ * x; }

  static ConsensusMatrix identity(std::size_t m);

 private:
  friend ConsensusMatrix validate_consensus(const Matrix&,
                                            const std::optional<EdgeList>&,
                                            double);
  Matrix w_;
  double lambda_ = 0.0;
};

// Checks non-negativity and row/column sums, symmetry, the zero pattern
// against `edges` (derived from the entries when absent) and lambda < 1.
ConsensusMatrix validate_consensus(const Matrix& entries,
                                   const std::optional<EdgeList>& edges = {},
                                   double tolerance = kConsensusTolerance);

// Eigenvalues of a symmetric matrix, ascending (cyclic Jacobi).
std::vector<double> symmetric_eigenvalues(const Matrix& a);

// max(|lambda_2|, |lambda_m|).
double spectral_gap_lambda(const Matrix& w);

ConsensusMatrix metropolis_weights(const EdgeList& edges, std::size_t m);

// ring, path, complete or star over m nodes.
EdgeList named_graph(std::string_view name, std::size_t m);

// The nine terms of the step-size condition, in the order
// 1/(3L), sqrt((1-l)/(72 m L^2)), sqrt(1/(24 m L^2)), 1/5, 1/(40 L^2),
// (1-l)/(120 L^2), (1-l)^2/3, (1-l)/(6L), sqrt((1-l)/(12 L^2)).
std::array<double, 9> step_size_terms(double lipschitz, double lambda,
                                      std::size_t m);
double step_size_bound(double lipschitz, double lambda, std::size_t m);

// First line "m", then m rows of m decimals.
Matrix read_topology(std::istream& in);
Matrix read_topology(const std::string& path);
void write_topology(const Matrix& w, std::ostream& out);

// (1/m) sum_i ||x_i - xbar||^2 over the rows of x.
double consensus_error(const Matrix& x);

}  // namespace hfdl

#endif  // HFDL_TOPOLOGY_HPP_
