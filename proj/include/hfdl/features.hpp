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

#ifndef HFDL_FEATURES_HPP_
#define HFDL_FEATURES_HPP_

#include <array>
#include <cstddef>
#include <cstdint>

#include "hfdl/ehr_graph.hpp"
#include "hfdl/linalg.hpp"

namespace hfdl {

enum class FeatureScheme { kSeededGaussian, kOneHotAttributes, kPmiCooccurrence };

// Per-kind feature dimensions, indexed by NodeKind. For kOneHotAttributes a
// zero entry means "infer the width".
using KindDims = std::array<std::size_t, kNodeKindCount>;

struct FeatureTable {
  // Row i of by_kind[k] is the feature vector of node (k, i).
  std::array<Matrix, kNodeKindCount> by_kind;
  FeatureScheme scheme = FeatureScheme::kSeededGaussian;
  // True when doctor rows one-hot encode the specialty label.
  bool doctor_specialty_encoded = false;

  const Matrix& of(NodeKind kind) const {
    return by_kind[static_cast<std::size_t>(kind)];
  }
  std::size_t dim(NodeKind kind) const {
    return static_cast<std::size_t>(of(kind).cols());
  }
};

FeatureTable init_features(const HeteroGraph& graph, FeatureScheme scheme,
                           const KindDims& dims, std::uint64_t seed);

// Age bins used by the one-hot patient encoding:
// [0,30) [30,45) [45,60) [60,75) [75,inf).
inline constexpr std::size_t kAgeBins = 5;
std::size_t age_bin(int age);

// Positive PMI between services over consecutive-service co-occurrence,
// symmetrised: count(a, b) = w(a -> b) + w(b -> a).
Matrix ppmi_matrix(const HeteroGraph& graph);

}  // namespace hfdl

#endif  // HFDL_FEATURES_HPP_
