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

#include "hfdl/features.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "hfdl/error.hpp"
#include "hfdl/rng.hpp"

namespace hfdl {
namespace {

Matrix gaussian_block(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  if (cols == 0) {
    fail(ErrorCode::kInvalidConfig, "feature dimension must be >= 1");
  }
  std::mt19937_64 rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = scale * standard_normal(rng);
  }
  return m;
}

std::size_t checked_width(std::size_t requested, std::size_t inferred,
                          NodeKind kind) {
  if (requested != 0 && requested != inferred) {
    fail(ErrorCode::kDimMismatch,
         std::string(node_kind_name(kind)) + " one-hot width is " +
             std::to_string(inferred) + " but " + std::to_string(requested) +
             " was requested");
  }
  return inferred;
}

int sex_slot(char sex) {
  switch (sex) {
    case 'M': return 0;
    case 'F': return 1;
    default: return 2;
  }
}

}  // namespace

std::size_t age_bin(int age) {
  if (age < 30) return 0;
  if (age < 45) return 1;
  if (age < 60) return 2;
  if (age < 75) return 3;
  return 4;
}

Matrix ppmi_matrix(const HeteroGraph& graph) {
  const std::size_t n = graph.node_count(NodeKind::kService);
  Matrix counts = Matrix::Zero(n, n);
  for (const Edge& e : graph.edges()) {
    if (e.kind != EdgeKind::kServiceService) continue;
    counts(e.src.index, e.dst.index) += e.weight;
    counts(e.dst.index, e.src.index) += e.weight;
  }
  const Vector row = counts.rowwise().sum();
  const double total = row.sum();
  Matrix ppmi = Matrix::Zero(n, n);
  if (total <= 0.0) return ppmi;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      const double c = counts(a, b);
      if (c <= 0.0) continue;
      const double pmi = std::log(c * total / (row(a) * row(b)));
      ppmi(a, b) = std::max(0.0, pmi);
    }
  }
  return ppmi;
}

FeatureTable init_features(const HeteroGraph& graph, FeatureScheme scheme,
                           const KindDims& dims, std::uint64_t seed) {
  FeatureTable table;
  table.scheme = scheme;
  const NodeTables& nodes = graph.nodes();
  auto gaussian = [&](NodeKind kind) {
    const auto k = static_cast<std::size_t>(kind);
    table.by_kind[k] =
        gaussian_block(graph.node_count(kind), dims[k], mix_seed(seed, 0xFEA7 + k));
  };

  switch (scheme) {
    case FeatureScheme::kSeededGaussian:
      gaussian(NodeKind::kPatient);
      gaussian(NodeKind::kDoctor);
      gaussian(NodeKind::kService);
      break;

    case FeatureScheme::kOneHotAttributes: {
      const std::size_t regions = graph.region_count();
      const std::size_t specialties = graph.specialty_count();

      const std::size_t pw = checked_width(dims[0], 3 + regions + kAgeBins,
                                           NodeKind::kPatient);
      Matrix p = Matrix::Zero(nodes.patients.size(), pw);
      for (std::size_t i = 0; i < nodes.patients.size(); ++i) {
        const auto& a = nodes.patients[i];
        p(i, sex_slot(a.sex)) = 1.0;
        p(i, 3 + a.region) = 1.0;
        p(i, 3 + regions + age_bin(a.age)) = 1.0;
      }
      table.by_kind[0] = std::move(p);

      const std::size_t dw = checked_width(dims[1], specialties + regions,
                                           NodeKind::kDoctor);
      Matrix d = Matrix::Zero(nodes.doctors.size(), dw);
      for (std::size_t i = 0; i < nodes.doctors.size(); ++i) {
        d(i, nodes.doctors[i].specialty) = 1.0;
        d(i, specialties + nodes.doctors[i].region) = 1.0;
      }
      table.by_kind[1] = std::move(d);
      table.doctor_specialty_encoded = true;

      const std::size_t sw =
          checked_width(dims[2], kServiceTypeCount, NodeKind::kService);
      Matrix s = Matrix::Zero(nodes.services.size(), sw);
      for (std::size_t i = 0; i < nodes.services.size(); ++i) {
        s(i, static_cast<std::size_t>(nodes.services[i].subtype)) = 1.0;
      }
      table.by_kind[2] = std::move(s);
      break;
    }

    case FeatureScheme::kPmiCooccurrence: {
      gaussian(NodeKind::kPatient);
      gaussian(NodeKind::kDoctor);
      const std::size_t width = dims[2];
      if (width == 0) {
        fail(ErrorCode::kInvalidConfig, "feature dimension must be >= 1");
      }
      const Matrix ppmi = ppmi_matrix(graph);
      const auto n = static_cast<std::size_t>(ppmi.rows());
      std::vector<double> variance(n, 0.0);
      for (std::size_t c = 0; c < n; ++c) {
        const double mean = ppmi.col(c).mean();
        variance[c] = (ppmi.col(c).array() - mean).square().mean();
      }
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) {
                         return variance[a] > variance[b];
                       });
      Matrix s = Matrix::Zero(n, width);
      for (std::size_t c = 0; c < std::min(width, n); ++c) {
        s.col(c) = ppmi.col(order[c]);
      }
      table.by_kind[2] = std::move(s);
      break;
    }
  }
  return table;
}

}  // namespace hfdl
