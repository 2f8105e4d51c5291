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

#ifndef HFDL_HGAT_HPP_
#define HFDL_HGAT_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hfdl/ehr_graph.hpp"
#include "hfdl/features.hpp"
#include "hfdl/linalg.hpp"

namespace hfdl {

inline constexpr std::size_t kTypeCount = kNodeKindCount;
inline constexpr std::size_t kTypePairCount = kTypeCount * kTypeCount;

enum class HeadMerge { kMean, kConcat };
enum class ScoreMode { kDot, kBilinear };

struct HgatConfig {
  KindDims input_dims = {16, 16, 16};
  std::size_t hidden = 16;    // F'
  std::size_t heads = 2;      // K
  std::size_t layers = 1;
  std::size_t type_dim = 0;   // d_V; 0 means "same as hidden"
  HeadMerge merge = HeadMerge::kMean;
  ScoreMode score = ScoreMode::kDot;
  // Off: no type-pair vectors in the attention logit (plain GAT attention).
  bool type_pair_attention = true;
  // On: one projection per head and layer shared by all node types; needs
  // equal input widths.
  bool shared_projection = false;
  std::size_t specialty_classes = 0;
  std::size_t service_classes = 0;
  double leaky_slope = 0.2;

  std::size_t resolved_type_dim() const {
    return type_dim == 0 ? hidden : type_dim;
  }
  std::size_t layer_output_dim() const {
    return merge == HeadMerge::kMean ? hidden : hidden * heads;
  }
  std::size_t embedding_dim() const { return layer_output_dim(); }
  std::size_t input_dim(std::size_t layer, NodeKind kind) const {
    return layer == 0 ? input_dims[static_cast<std::size_t>(kind)]
                      : layer_output_dim();
  }
  void validate() const;

  friend bool operator==(const HgatConfig&, const HgatConfig&) = default;
};

// Closed form. Per layer l and head:
//   Q:  F' * sum_t d_t(l)   (F' * d(l) when shared)
//   a:  2F' + d_V           (2F' without type-pair attention)
//   V:  |T|^2 * d_V         (0 without type-pair attention)
// plus E^2 for the bilinear scorer and (C_spec + C_svc) * E for the two
// classifier heads, where E is the embedding width.
std::size_t parameter_count(const HgatConfig& config);

struct HeadParams {
  std::vector<Matrix> q;   // (F', d_in) per node type, or one shared matrix
  Vector a;                // [target part | neighbour part | type-pair part]
  std::vector<Vector> v;   // kTypePairCount vectors of length d_V, or empty

  const Matrix& q_for(NodeKind kind) const {
    return q.size() == 1 ? q[0] : q[static_cast<std::size_t>(kind)];
  }
  Matrix& q_for(NodeKind kind) {
    return q.size() == 1 ? q[0] : q[static_cast<std::size_t>(kind)];
  }
  static std::size_t pair_index(NodeKind from, NodeKind to) {
    return static_cast<std::size_t>(from) * kTypeCount +
           static_cast<std::size_t>(to);
  }
};

struct HgatParams {
  HgatConfig config;
  std::vector<std::vector<HeadParams>> layers;  // [layer][head]
  Matrix bilinear;      // (E, E); empty in dot mode
  Matrix specialty;     // (specialty_classes, E)
  Matrix next_service;  // (service_classes, E)

  static HgatParams zeros(const HgatConfig& config);
  static HgatParams random(const HgatConfig& config, std::uint64_t seed);
};

struct TensorSlot {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  friend bool operator==(const TensorSlot&, const TensorSlot&) = default;
};

struct ParamLayout {
  std::vector<TensorSlot> slots;
  std::size_t size = 0;

  static ParamLayout for_config(const HgatConfig& config);
  const TensorSlot* find(const std::string& name) const;

  friend bool operator==(const ParamLayout&, const ParamLayout&) = default;
};

struct ParamVector {
  std::vector<double> values;
  ParamLayout layout;
};

ParamVector flatten(const HgatParams& params);
void flatten_into(const HgatParams& params, std::span<double> out);
HgatParams unflatten(std::span<const double> values, const HgatConfig& config);
HgatParams unflatten(const ParamVector& vec, const HgatConfig& config);

// Checkpoint: text layout header terminated by "end\n", then the values as
// little-endian IEEE-754 doubles.
void save_checkpoint(const ParamVector& vec, std::ostream& out);
ParamVector load_checkpoint(std::istream& in);

// Fixed per-layer neighbour lists. A node with at most `sample_size`
// adjacency entries uses every entry once; larger neighbourhoods are drawn by
// roulette; isolated nodes get a self-loop.
class SamplingPlan {
 public:
  SamplingPlan() = default;
  static SamplingPlan build(const HeteroGraph& graph, std::size_t sample_size,
                            std::size_t layers, std::uint64_t seed);

  std::size_t layers() const { return begin_.size(); }
  std::span<const std::uint32_t> neighbors(std::size_t layer,
                                           std::uint32_t node) const {
    const auto& b = begin_[layer];
    return std::span<const std::uint32_t>(ids_[layer])
        .subspan(b[node], b[node + 1] - b[node]);
  }

 private:
  std::vector<std::vector<std::uint32_t>> begin_;
  std::vector<std::vector<std::uint32_t>> ids_;
};

struct NeighborFeature {
  std::span<const double> h;
  NodeKind kind;
};

// Softmax over neighbours j of
//   LeakyReLU(a^T [Q_{t_i} h_i || Q_{t_j} h_j || V_{t_i t_j}]).
std::vector<double> attention_coefficients(
    std::span<const double> h_i, NodeKind kind_i,
    std::span<const NeighborFeature> neighbors, const HgatParams& params,
    std::size_t head, std::size_t layer = 0);

template <typename S>
using BlocksT = std::array<MatrixT<S>, kTypeCount>;
using Blocks = BlocksT<double>;

template <typename S>
struct LayerCacheT {
  std::vector<std::uint32_t> targets;    // global ids, ascending
  std::vector<std::uint32_t> edge_begin; // per target, into nbr
  std::vector<std::uint32_t> nbr;        // global ids
  std::vector<BlocksT<S>> proj;          // [head] rows of H Q^T
  std::vector<std::vector<S>> logit;     // [head][edge] before LeakyReLU
  std::vector<std::vector<S>> alpha;     // [head][edge]
  std::vector<MatrixT<S>> z;             // [head] (targets, F')
  MatrixT<S> pre;                        // input to ELU, (targets, width)
};

template <typename S>
struct ForwardT {
  std::vector<BlocksT<S>> h;  // h[l] is the output of layer l
  std::vector<LayerCacheT<S>> layers;
  const BlocksT<S>& embeddings() const { return h.back(); }
};

class HgatModel {
 public:
  using LayerCache = LayerCacheT<double>;
  using Forward = ForwardT<double>;

  HgatModel(const HeteroGraph& graph, const FeatureTable& features,
            HgatConfig config, SamplingPlan plan);

  const HeteroGraph& graph() const { return *graph_; }
  const FeatureTable& features() const { return *features_; }
  const HgatConfig& config() const { return config_; }
  const SamplingPlan& plan() const { return plan_; }

  // Embeddings for `outputs` (every node when empty). Rows of other nodes in
  // the returned blocks are zero.
  Forward forward(const HgatParams& params,
                  std::span<const std::uint32_t> outputs = {}) const {
    return forward_as<double>(params, outputs);
  }
  // Same pass carried out in scalar type S (double or long double).
  template <typename S>
  ForwardT<S> forward_as(const HgatParams& params,
                         std::span<const std::uint32_t> outputs = {}) const;

  // Accumulates into `grad` the parameter gradient given d(loss)/d(embedding)
  // blocks shaped like forward.embeddings().
  void backward(const HgatParams& params, const Forward& forward,
                const Blocks& d_embedding, HgatParams& grad) const;

  template <typename S>
  std::span<const S> embedding(const ForwardT<S>& forward,
                               std::uint32_t global) const {
    const NodeKind kind = graph_->kind_of(global);
    const auto& m = forward.embeddings()[static_cast<std::size_t>(kind)];
    const std::size_t row = global - graph_->offset(kind);
    return std::span<const S>(m.data() + row * m.cols(),
                              static_cast<std::size_t>(m.cols()));
  }

 private:
  const HeteroGraph* graph_;
  const FeatureTable* features_;
  HgatConfig config_;
  SamplingPlan plan_;
};

// One layer for every node, from the raw feature table.
Blocks layer_forward(const HgatModel& model, const HgatParams& params);

double score_patient_doctor(std::span<const double> embed_p,
                            std::span<const double> embed_d,
                            const HgatParams& params);

// Node indices below are local to their kind (patient index, doctor index,
// service index), not global ids.
struct PatientQuery {
  std::uint32_t patient = 0;
  std::vector<std::uint32_t> doctors;
};

struct TaskBatch {
  std::vector<PatientQuery> queries;
  std::vector<std::uint32_t> doctors;   // specialty prediction
  std::vector<std::uint32_t> services;  // next-service prediction
};

struct TaskOutputs {
  std::vector<std::vector<double>> scores;
  std::vector<Vector> specialty_logits;
  std::vector<Vector> next_service_logits;
};

// Throws LabelLeakage if specialty logits are requested while the doctor
// input features encode the specialty.
TaskOutputs model_forward(const HgatModel& model, const HgatParams& params,
                          const TaskBatch& batch);

}  // namespace hfdl

#endif  // HFDL_HGAT_HPP_
