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

#include "hfdl/hgat.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "hfdl/error.hpp"
#include "hfdl/rng.hpp"

namespace hfdl {
namespace {

NodeKind kind_at(std::size_t t) { return static_cast<NodeKind>(t); }

std::size_t projection_count(const HgatConfig& c) {
  return c.shared_projection ? 1 : kTypeCount;
}

std::size_t attention_width(const HgatConfig& c) {
  return 2 * c.hidden + (c.type_pair_attention ? c.resolved_type_dim() : 0);
}

template <typename S>
S leaky(S x, S slope) { return x > 0 ? x : slope * x; }
template <typename S>
S elu(S x) { return x > 0 ? x : std::expm1(x); }
double elu_grad(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

template <typename S>
S dot(const S* a, const S* b, std::size_t n) {
  S s = 0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

// Visits every tensor of a parameter set in layout order.
template <typename Params, typename Fn>
void for_each_tensor(Params& p, Fn&& fn) {
  const HgatConfig& c = p.config;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    for (std::size_t k = 0; k < p.layers[l].size(); ++k) {
      auto& head = p.layers[l][k];
      const std::string prefix =
          "layer" + std::to_string(l) + ".head" + std::to_string(k) + ".";
      for (std::size_t t = 0; t < head.q.size(); ++t) {
        const std::string suffix =
            c.shared_projection ? "shared"
                                : std::string(node_kind_name(kind_at(t)));
        fn(prefix + "Q." + suffix, head.q[t].data(),
           static_cast<std::size_t>(head.q[t].rows()),
           static_cast<std::size_t>(head.q[t].cols()));
      }
      fn(prefix + "a", head.a.data(), static_cast<std::size_t>(head.a.size()),
         std::size_t{1});
      for (std::size_t pair = 0; pair < head.v.size(); ++pair) {
        const std::string name =
            prefix + "V." + std::string(node_kind_name(kind_at(pair / kTypeCount))) +
            "-" + std::string(node_kind_name(kind_at(pair % kTypeCount)));
        fn(name, head.v[pair].data(), static_cast<std::size_t>(head.v[pair].size()),
           std::size_t{1});
      }
    }
  }
  if (p.bilinear.size() > 0) {
    fn(std::string("score.bilinear"), p.bilinear.data(),
       static_cast<std::size_t>(p.bilinear.rows()),
       static_cast<std::size_t>(p.bilinear.cols()));
  }
  fn(std::string("head.specialty"), p.specialty.data(),
     static_cast<std::size_t>(p.specialty.rows()),
     static_cast<std::size_t>(p.specialty.cols()));
  fn(std::string("head.next_service"), p.next_service.data(),
     static_cast<std::size_t>(p.next_service.rows()),
     static_cast<std::size_t>(p.next_service.cols()));
}

}  // namespace

// --- Config and parameters -------------------------------------------------

void HgatConfig::validate() const {
  if (hidden == 0 || heads == 0 || layers == 0) {
    fail(ErrorCode::kShapeMismatch, "hidden, heads and layers must be >= 1");
  }
  for (std::size_t d : input_dims) {
    if (d == 0) fail(ErrorCode::kShapeMismatch, "input widths must be >= 1");
  }
  if (shared_projection &&
      (input_dims[0] != input_dims[1] || input_dims[1] != input_dims[2])) {
    fail(ErrorCode::kShapeMismatch,
         "shared projection needs equal input widths for all node types");
  }
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) {
    fail(ErrorCode::kShapeMismatch, "LeakyReLU slope must lie in [0, 1)");
  }
}

std::size_t parameter_count(const HgatConfig& c) {
  const std::size_t dv = c.resolved_type_dim();
  std::size_t total = 0;
  for (std::size_t l = 0; l < c.layers; ++l) {
    std::size_t q = 0;
    if (c.shared_projection) {
      q = c.hidden * c.input_dim(l, NodeKind::kPatient);
    } else {
      for (std::size_t t = 0; t < kTypeCount; ++t) {
        q += c.hidden * c.input_dim(l, kind_at(t));
      }
    }
    const std::size_t a = 2 * c.hidden + (c.type_pair_attention ? dv : 0);
    const std::size_t v = c.type_pair_attention ? kTypePairCount * dv : 0;
    total += c.heads * (q + a + v);
  }
  const std::size_t e = c.embedding_dim();
  if (c.score == ScoreMode::kBilinear) total += e * e;
  total += (c.specialty_classes + c.service_classes) * e;
  return total;
}

HgatParams HgatParams::zeros(const HgatConfig& config) {
  config.validate();
  HgatParams p;
  p.config = config;
  p.layers.resize(config.layers);
  const std::size_t dv = config.resolved_type_dim();
  for (std::size_t l = 0; l < config.layers; ++l) {
    p.layers[l].resize(config.heads);
    for (auto& head : p.layers[l]) {
      for (std::size_t t = 0; t < projection_count(config); ++t) {
        head.q.push_back(Matrix::Zero(config.hidden,
                                      config.input_dim(l, kind_at(t))));
      }
      head.a = Vector::Zero(attention_width(config));
      if (config.type_pair_attention) {
        head.v.assign(kTypePairCount, Vector::Zero(dv));
      }
    }
  }
  const auto e = config.embedding_dim();
  if (config.score == ScoreMode::kBilinear) p.bilinear = Matrix::Zero(e, e);
  p.specialty = Matrix::Zero(config.specialty_classes, e);
  p.next_service = Matrix::Zero(config.service_classes, e);
  return p;
}

HgatParams HgatParams::random(const HgatConfig& config, std::uint64_t seed) {
  HgatParams p = zeros(config);
  std::mt19937_64 rng(mix_seed(seed, 0x9a7));
  auto fill = [&](double* data, std::size_t n, double scale) {
    for (std::size_t i = 0; i < n; ++i) data[i] = scale * standard_normal(rng);
  };
  for (auto& layer : p.layers) {
    for (auto& head : layer) {
      for (auto& q : head.q) {
        fill(q.data(), static_cast<std::size_t>(q.size()),
             1.0 / std::sqrt(static_cast<double>(q.cols())));
      }
      fill(head.a.data(), static_cast<std::size_t>(head.a.size()),
           1.0 / std::sqrt(static_cast<double>(config.hidden)));
      for (auto& v : head.v) {
        fill(v.data(), static_cast<std::size_t>(v.size()),
             1.0 / std::sqrt(static_cast<double>(v.size())));
      }
    }
  }
  const double e = static_cast<double>(config.embedding_dim());
  if (p.bilinear.size() > 0) {
    fill(p.bilinear.data(), static_cast<std::size_t>(p.bilinear.size()),
         0.1 / std::sqrt(e));
    p.bilinear.diagonal().array() += 1.0;
  }
  fill(p.specialty.data(), static_cast<std::size_t>(p.specialty.size()),
       1.0 / std::sqrt(e));
  fill(p.next_service.data(), static_cast<std::size_t>(p.next_service.size()),
       1.0 / std::sqrt(e));
  return p;
}

ParamLayout ParamLayout::for_config(const HgatConfig& config) {
  const HgatParams shape = HgatParams::zeros(config);
  ParamLayout layout;
  for_each_tensor(shape, [&](const std::string& name, const double*,
                             std::size_t rows, std::size_t cols) {
    layout.slots.push_back({name, layout.size, rows, cols});
    layout.size += rows * cols;
  });
  return layout;
}

const TensorSlot* ParamLayout::find(const std::string& name) const {
  for (const auto& s : slots) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

void flatten_into(const HgatParams& params, std::span<double> out) {
  std::size_t offset = 0;
  for_each_tensor(params, [&](const std::string&, const double* data,
                              std::size_t rows, std::size_t cols) {
    const std::size_t n = rows * cols;
    if (offset + n > out.size()) {
      fail(ErrorCode::kLayoutMismatch, "output span too short for parameters");
    }
    std::copy(data, data + n, out.begin() + static_cast<std::ptrdiff_t>(offset));
    offset += n;
  });
  if (offset != out.size()) {
    fail(ErrorCode::kLayoutMismatch, "output span longer than parameters");
  }
}

ParamVector flatten(const HgatParams& params) {
  ParamVector vec;
  vec.layout = ParamLayout::for_config(params.config);
  vec.values.resize(vec.layout.size);
  flatten_into(params, vec.values);
  return vec;
}

HgatParams unflatten(std::span<const double> values, const HgatConfig& config) {
  HgatParams p = HgatParams::zeros(config);
  const std::size_t expected = parameter_count(config);
  if (values.size() != expected) {
    fail(ErrorCode::kLayoutMismatch,
         "parameter vector has " + std::to_string(values.size()) +
             " entries, layout needs " + std::to_string(expected));
  }
  std::size_t offset = 0;
  for_each_tensor(p, [&](const std::string&, double* data, std::size_t rows,
                         std::size_t cols) {
    const std::size_t n = rows * cols;
    std::copy(values.begin() + static_cast<std::ptrdiff_t>(offset),
              values.begin() + static_cast<std::ptrdiff_t>(offset + n), data);
    offset += n;
  });
  return p;
}

HgatParams unflatten(const ParamVector& vec, const HgatConfig& config) {
  if (!(vec.layout == ParamLayout::for_config(config))) {
    fail(ErrorCode::kLayoutMismatch, "layout does not match model config");
  }
  return unflatten(std::span<const double>(vec.values), config);
}

void save_checkpoint(const ParamVector& vec, std::ostream& out) {
  if (vec.values.size() != vec.layout.size) {
    fail(ErrorCode::kLayoutMismatch, "values do not match layout size");
  }
  out << "HFDL-PARAMS v1\n";
  out << "size " << vec.layout.size << '\n';
  for (const auto& s : vec.layout.slots) {
    out << "tensor " << s.name << ' ' << s.offset << ' ' << s.rows << ' '
        << s.cols << '\n';
  }
  out << "end\n";
  for (double v : vec.values) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
}

ParamVector load_checkpoint(std::istream& in) {
  std::string line;
  auto bad = [](const std::string& why) {
    fail(ErrorCode::kLayoutMismatch, "checkpoint: " + why);
  };
  if (!std::getline(in, line) || line != "HFDL-PARAMS v1") bad("missing header");
  ParamVector vec;
  {
    if (!std::getline(in, line)) bad("missing size");
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag >> vec.layout.size) || tag != "size") bad("bad size line");
  }
  std::size_t running = 0;
  while (std::getline(in, line) && line != "end") {
    std::istringstream ss(line);
    std::string tag;
    TensorSlot slot;
    if (!(ss >> tag >> slot.name >> slot.offset >> slot.rows >> slot.cols) ||
        tag != "tensor" || slot.offset != running) {
      bad("bad tensor line '" + line + "'");
    }
    running += slot.rows * slot.cols;
    vec.layout.slots.push_back(slot);
  }
  if (line != "end") bad("missing end marker");
  if (running != vec.layout.size) bad("tensor sizes do not add up");
  vec.values.resize(vec.layout.size);
  for (double& v : vec.values) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) bad("truncated values");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    v = std::bit_cast<double>(bits);
  }
  return vec;
}

// --- Sampling plan ---------------------------------------------------------

SamplingPlan SamplingPlan::build(const HeteroGraph& graph,
                                 std::size_t sample_size, std::size_t layers,
                                 std::uint64_t seed) {
  if (sample_size == 0) {
    fail(ErrorCode::kInvalidConfig, "neighbour sample size must be >= 1");
  }
  SamplingPlan plan;
  const std::size_t n = graph.total_nodes();
  plan.begin_.resize(layers);
  plan.ids_.resize(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    auto& begin = plan.begin_[l];
    auto& ids = plan.ids_[l];
    begin.reserve(n + 1);
    for (std::uint32_t v = 0; v < n; ++v) {
      begin.push_back(static_cast<std::uint32_t>(ids.size()));
      const auto nbrs = graph.neighbors(v);
      double total = 0.0;
      for (const auto& nb : nbrs) total += nb.weight;
      if (nbrs.empty() || !(total > 0.0)) {
        ids.push_back(v);
      } else if (nbrs.size() <= sample_size) {
        for (const auto& nb : nbrs) ids.push_back(nb.node);
      } else {
        const auto drawn = sample_neighbor_ids(
            graph, v, sample_size, mix_seed(seed, l * n + v));
        ids.insert(ids.end(), drawn.begin(), drawn.end());
      }
    }
    begin.push_back(static_cast<std::uint32_t>(ids.size()));
  }
  return plan;
}

// --- Attention -------------------------------------------------------------

std::vector<double> attention_coefficients(
    std::span<const double> h_i, NodeKind kind_i,
    std::span<const NeighborFeature> neighbors, const HgatParams& params,
    std::size_t head, std::size_t layer) {
  const HgatConfig& c = params.config;
  if (layer >= params.layers.size() || head >= params.layers[layer].size()) {
    fail(ErrorCode::kShapeMismatch, "head or layer out of range");
  }
  if (neighbors.empty()) {
    fail(ErrorCode::kShapeMismatch, "attention needs at least one neighbour");
  }
  const HeadParams& hp = params.layers[layer][head];
  auto project = [&](std::span<const double> h, NodeKind kind) {
    const Matrix& q = hp.q_for(kind);
    if (static_cast<std::size_t>(q.cols()) != h.size()) {
      fail(ErrorCode::kShapeMismatch,
           "feature width " + std::to_string(h.size()) + " does not match " +
               std::string(node_kind_name(kind)) + " projection");
    }
    return Vector(q * Eigen::Map<const Vector>(h.data(),
                                               static_cast<Eigen::Index>(h.size())));
  };
  const std::size_t f = c.hidden;
  const Vector u = project(h_i, kind_i);
  const double target = dot(hp.a.data(), u.data(), f);
  std::vector<double> e(neighbors.size());
  for (std::size_t j = 0; j < neighbors.size(); ++j) {
    const Vector w = project(neighbors[j].h, neighbors[j].kind);
    double s = target + dot(hp.a.data() + f, w.data(), f);
    if (c.type_pair_attention) {
      const Vector& v = hp.v[HeadParams::pair_index(kind_i, neighbors[j].kind)];
      s += dot(hp.a.data() + 2 * f, v.data(), static_cast<std::size_t>(v.size()));
    }
    e[j] = leaky(s, c.leaky_slope);
  }
  const double mx = *std::max_element(e.begin(), e.end());
  double total = 0.0;
  for (double& x : e) {
    x = std::exp(x - mx);
    total += x;
  }
  for (double& x : e) x /= total;
  return e;
}

// --- Model -----------------------------------------------------------------

HgatModel::HgatModel(const HeteroGraph& graph, const FeatureTable& features,
                     HgatConfig config, SamplingPlan plan)
    : graph_(&graph),
      features_(&features),
      config_(std::move(config)),
      plan_(std::move(plan)) {
  config_.validate();
  for (std::size_t t = 0; t < kTypeCount; ++t) {
    const auto kind = kind_at(t);
    if (static_cast<std::size_t>(features.of(kind).rows()) !=
        graph.node_count(kind)) {
      fail(ErrorCode::kShapeMismatch, std::string(node_kind_name(kind)) +
                                          " feature rows do not match graph");
    }
    if (features.dim(kind) != config_.input_dims[t]) {
      fail(ErrorCode::kShapeMismatch,
           std::string(node_kind_name(kind)) + " feature width " +
               std::to_string(features.dim(kind)) + " != configured " +
               std::to_string(config_.input_dims[t]));
    }
  }
  if (plan_.layers() != config_.layers) {
    fail(ErrorCode::kShapeMismatch, "sampling plan layer count mismatch");
  }
}

template <typename S>
ForwardT<S> HgatModel::forward_as(const HgatParams& params,
                                  std::span<const std::uint32_t> outputs) const {
  if (!(params.config == config_)) {
    fail(ErrorCode::kShapeMismatch, "parameters built for another config");
  }
  const std::size_t layers = config_.layers;
  const std::size_t heads = config_.heads;
  const std::size_t f = config_.hidden;
  const std::size_t n = graph_->total_nodes();
  const S slope = static_cast<S>(config_.leaky_slope);

  // Rows required at each layer's output, from the top down.
  std::vector<std::vector<std::uint32_t>> needed(layers);
  {
    std::vector<char> mark(n, 0);
    if (outputs.empty()) {
      std::fill(mark.begin(), mark.end(), 1);
    } else {
      for (auto v : outputs) {
        if (v >= n) fail(ErrorCode::kShapeMismatch, "output node out of range");
        mark[v] = 1;
      }
    }
    for (std::size_t l = layers; l-- > 0;) {
      for (std::uint32_t v = 0; v < n; ++v) {
        if (mark[v]) needed[l].push_back(v);
      }
      if (l == 0) break;
      for (auto v : needed[l]) {
        for (auto u : plan_.neighbors(l, v)) mark[u] = 1;
      }
    }
  }

  BlocksT<S> input0;
  for (std::size_t t = 0; t < kTypeCount; ++t) {
    input0[t] = features_->by_kind[t].template cast<S>();
  }
  ForwardT<S> fw;
  fw.h.resize(layers);
  fw.layers.resize(layers);
  const std::size_t width = config_.layer_output_dim();
  for (std::size_t l = 0; l < layers; ++l) {
    const BlocksT<S>& input = l == 0 ? input0 : fw.h[l - 1];
    LayerCacheT<S>& cache = fw.layers[l];
    cache.targets = std::move(needed[l]);
    const std::size_t targets = cache.targets.size();
    cache.edge_begin.reserve(targets + 1);
    for (auto v : cache.targets) {
      cache.edge_begin.push_back(static_cast<std::uint32_t>(cache.nbr.size()));
      const auto nb = plan_.neighbors(l, v);
      cache.nbr.insert(cache.nbr.end(), nb.begin(), nb.end());
    }
    cache.edge_begin.push_back(static_cast<std::uint32_t>(cache.nbr.size()));
    const std::size_t edges = cache.nbr.size();

    cache.proj.resize(heads);
    cache.logit.assign(heads, std::vector<S>(edges));
    cache.alpha.assign(heads, std::vector<S>(edges));
    cache.z.assign(heads, MatrixT<S>::Zero(targets, f));
    for (std::size_t k = 0; k < heads; ++k) {
      const HeadParams& hp = params.layers[l][k];
      for (std::size_t t = 0; t < kTypeCount; ++t) {
        cache.proj[k][t] =
            input[t] * hp.q_for(kind_at(t)).template cast<S>().transpose();
      }
      const VectorT<S> a = hp.a.template cast<S>();
      S type_term[kTypePairCount] = {};
      if (config_.type_pair_attention) {
        const std::size_t dv = config_.resolved_type_dim();
        for (std::size_t pair = 0; pair < kTypePairCount; ++pair) {
          const VectorT<S> v = hp.v[pair].template cast<S>();
          type_term[pair] = dot(a.data() + 2 * f, v.data(), dv);
        }
      }
      const S* a_target = a.data();
      const S* a_nbr = a.data() + f;
      auto& logit = cache.logit[k];
      auto& alpha = cache.alpha[k];
      MatrixT<S>& z = cache.z[k];
      for (std::size_t r = 0; r < targets; ++r) {
        const std::uint32_t i = cache.targets[r];
        const auto ti = static_cast<std::size_t>(graph_->kind_of(i));
        const S* u = cache.proj[k][ti].row(i - graph_->offset(kind_at(ti))).data();
        const S base = dot(a_target, u, f);
        const std::size_t e0 = cache.edge_begin[r];
        const std::size_t e1 = cache.edge_begin[r + 1];
        S mx = -std::numeric_limits<S>::infinity();
        for (std::size_t e = e0; e < e1; ++e) {
          const std::uint32_t j = cache.nbr[e];
          const auto tj = static_cast<std::size_t>(graph_->kind_of(j));
          const S* w = cache.proj[k][tj].row(j - graph_->offset(kind_at(tj))).data();
          logit[e] = base + dot(a_nbr, w, f) + type_term[ti * kTypeCount + tj];
          alpha[e] = leaky(logit[e], slope);
          mx = std::max(mx, alpha[e]);
        }
        S total = 0;
        for (std::size_t e = e0; e < e1; ++e) {
          alpha[e] = std::exp(alpha[e] - mx);
          total += alpha[e];
        }
        S* zr = z.row(r).data();
        for (std::size_t e = e0; e < e1; ++e) {
          alpha[e] /= total;
          const std::uint32_t j = cache.nbr[e];
          const auto tj = static_cast<std::size_t>(graph_->kind_of(j));
          const S* w = cache.proj[k][tj].row(j - graph_->offset(kind_at(tj))).data();
          for (std::size_t c = 0; c < f; ++c) zr[c] += alpha[e] * w[c];
        }
      }
    }

    cache.pre = MatrixT<S>::Zero(targets, width);
    if (config_.merge == HeadMerge::kMean) {
      for (std::size_t k = 0; k < heads; ++k) cache.pre += cache.z[k];
      cache.pre /= static_cast<S>(heads);
    } else {
      for (std::size_t k = 0; k < heads; ++k) {
        cache.pre.middleCols(static_cast<Eigen::Index>(k * f),
                             static_cast<Eigen::Index>(f)) = cache.z[k];
      }
    }
    BlocksT<S>& out = fw.h[l];
    for (std::size_t t = 0; t < kTypeCount; ++t) {
      out[t] = MatrixT<S>::Zero(graph_->node_count(kind_at(t)), width);
    }
    for (std::size_t r = 0; r < targets; ++r) {
      const std::uint32_t i = cache.targets[r];
      const auto ti = static_cast<std::size_t>(graph_->kind_of(i));
      S* dst = out[ti].row(i - graph_->offset(kind_at(ti))).data();
      for (std::size_t c = 0; c < width; ++c) dst[c] = elu(cache.pre(r, c));
    }
  }
  return fw;
}

template ForwardT<double> HgatModel::forward_as<double>(
    const HgatParams&, std::span<const std::uint32_t>) const;
template ForwardT<long double> HgatModel::forward_as<long double>(
    const HgatParams&, std::span<const std::uint32_t>) const;

void HgatModel::backward(const HgatParams& params, const Forward& fw,
                         const Blocks& d_embedding, HgatParams& grad) const {
  const std::size_t layers = config_.layers;
  const std::size_t heads = config_.heads;
  const std::size_t f = config_.hidden;
  const std::size_t width = config_.layer_output_dim();
  const double slope = config_.leaky_slope;

  Blocks d_out = d_embedding;
  for (std::size_t l = layers; l-- > 0;) {
    const LayerCache& cache = fw.layers[l];
    const std::size_t targets = cache.targets.size();

    // d(loss)/d(z^k) per target.
    std::vector<Matrix> dz(heads, Matrix::Zero(targets, f));
    for (std::size_t r = 0; r < targets; ++r) {
      const std::uint32_t i = cache.targets[r];
      const auto ti = static_cast<std::size_t>(graph_->kind_of(i));
      const double* g = d_out[ti].row(i - graph_->offset(kind_at(ti))).data();
      if (config_.merge == HeadMerge::kMean) {
        for (std::size_t c = 0; c < width; ++c) {
          const double dm =
              g[c] * elu_grad(cache.pre(r, c)) / static_cast<double>(heads);
          for (std::size_t k = 0; k < heads; ++k) dz[k](r, c) = dm;
        }
      } else {
        for (std::size_t k = 0; k < heads; ++k) {
          for (std::size_t c = 0; c < f; ++c) {
            const std::size_t col = k * f + c;
            dz[k](r, c) = g[col] * elu_grad(cache.pre(r, col));
          }
        }
      }
    }

    Blocks d_in;
    if (l > 0) {
      for (std::size_t t = 0; t < kTypeCount; ++t) {
        d_in[t] = Matrix::Zero(graph_->node_count(kind_at(t)),
                               config_.input_dim(l, kind_at(t)));
      }
    }
    std::vector<double> d_alpha;
    for (std::size_t k = 0; k < heads; ++k) {
      const HeadParams& hp = params.layers[l][k];
      HeadParams& gp = grad.layers[l][k];
      Blocks dp;
      for (std::size_t t = 0; t < kTypeCount; ++t) {
        dp[t] = Matrix::Zero(cache.proj[k][t].rows(), f);
      }
      const double* a_target = hp.a.data();
      const double* a_nbr = hp.a.data() + f;
      double* ga_target = gp.a.data();
      double* ga_nbr = gp.a.data() + f;
      double d_type[kTypePairCount] = {};
      const auto& logit = cache.logit[k];
      const auto& alpha = cache.alpha[k];
      for (std::size_t r = 0; r < targets; ++r) {
        const std::uint32_t i = cache.targets[r];
        const auto ti = static_cast<std::size_t>(graph_->kind_of(i));
        const std::size_t li = i - graph_->offset(kind_at(ti));
        const double* u = cache.proj[k][ti].row(li).data();
        const double* g = dz[k].row(r).data();
        const std::size_t e0 = cache.edge_begin[r];
        const std::size_t e1 = cache.edge_begin[r + 1];
        d_alpha.assign(e1 - e0, 0.0);
        double mean_d_alpha = 0.0;
        for (std::size_t e = e0; e < e1; ++e) {
          const std::uint32_t j = cache.nbr[e];
          const auto tj = static_cast<std::size_t>(graph_->kind_of(j));
          const std::size_t lj = j - graph_->offset(kind_at(tj));
          const double* w = cache.proj[k][tj].row(lj).data();
          d_alpha[e - e0] = dot(g, w, f);
          mean_d_alpha += alpha[e] * d_alpha[e - e0];
          double* dw = dp[tj].row(lj).data();
          for (std::size_t c = 0; c < f; ++c) dw[c] += alpha[e] * g[c];
        }
        double* du = dp[ti].row(li).data();
        for (std::size_t e = e0; e < e1; ++e) {
          const double de = alpha[e] * (d_alpha[e - e0] - mean_d_alpha);
          const double ds = de * (logit[e] > 0.0 ? 1.0 : slope);
          if (ds == 0.0) continue;
          const std::uint32_t j = cache.nbr[e];
          const auto tj = static_cast<std::size_t>(graph_->kind_of(j));
          const std::size_t lj = j - graph_->offset(kind_at(tj));
          const double* w = cache.proj[k][tj].row(lj).data();
          double* dw = dp[tj].row(lj).data();
          for (std::size_t c = 0; c < f; ++c) {
            ga_target[c] += ds * u[c];
            ga_nbr[c] += ds * w[c];
            du[c] += ds * a_target[c];
            dw[c] += ds * a_nbr[c];
          }
          d_type[ti * kTypeCount + tj] += ds;
        }
      }
      if (config_.type_pair_attention) {
        const std::size_t dv = config_.resolved_type_dim();
        for (std::size_t pair = 0; pair < kTypePairCount; ++pair) {
          if (d_type[pair] == 0.0) continue;
          for (std::size_t c = 0; c < dv; ++c) {
            gp.a(2 * f + c) += d_type[pair] * hp.v[pair](c);
            gp.v[pair](c) += d_type[pair] * hp.a(2 * f + c);
          }
        }
      }
      for (std::size_t t = 0; t < kTypeCount; ++t) {
        const Matrix& input = (l == 0 ? features_->by_kind[t] : fw.h[l - 1][t]);
        gp.q_for(kind_at(t)).noalias() += dp[t].transpose() * input;
        if (l > 0) d_in[t].noalias() += dp[t] * hp.q_for(kind_at(t));
      }
    }
    if (l > 0) d_out = std::move(d_in);
  }
}

Blocks layer_forward(const HgatModel& model, const HgatParams& params) {
  HgatConfig one = model.config();
  if (one.layers != 1) {
    fail(ErrorCode::kShapeMismatch, "layer_forward expects a one-layer model");
  }
  return model.forward(params).h[0];
}

double score_patient_doctor(std::span<const double> embed_p,
                            std::span<const double> embed_d,
                            const HgatParams& params) {
  const std::size_t e = params.config.embedding_dim();
  if (embed_p.size() != e || embed_d.size() != e) {
    fail(ErrorCode::kShapeMismatch, "embedding width does not match model");
  }
  if (params.config.score == ScoreMode::kDot) {
    return dot(embed_p.data(), embed_d.data(), e);
  }
  double s = 0.0;
  for (std::size_t r = 0; r < e; ++r) {
    s += embed_p[r] * dot(params.bilinear.row(static_cast<Eigen::Index>(r)).data(),
                          embed_d.data(), e);
  }
  return s;
}

TaskOutputs model_forward(const HgatModel& model, const HgatParams& params,
                          const TaskBatch& batch) {
  const HeteroGraph& g = model.graph();
  if (!batch.doctors.empty() && model.features().doctor_specialty_encoded) {
    fail(ErrorCode::kLabelLeakage,
         "doctor features encode the specialty that is being predicted");
  }
  const std::uint32_t doctor0 = g.offset(NodeKind::kDoctor);
  const std::uint32_t service0 = g.offset(NodeKind::kService);
  std::vector<std::uint32_t> outputs;
  for (const auto& q : batch.queries) {
    if (q.patient >= g.node_count(NodeKind::kPatient)) {
      fail(ErrorCode::kShapeMismatch, "patient index out of range");
    }
    outputs.push_back(q.patient);
    for (auto d : q.doctors) {
      if (d >= g.node_count(NodeKind::kDoctor)) {
        fail(ErrorCode::kShapeMismatch, "doctor index out of range");
      }
      outputs.push_back(doctor0 + d);
    }
  }
  for (auto d : batch.doctors) {
    if (d >= g.node_count(NodeKind::kDoctor)) {
      fail(ErrorCode::kShapeMismatch, "doctor index out of range");
    }
    outputs.push_back(doctor0 + d);
  }
  for (auto s : batch.services) {
    if (s >= g.node_count(NodeKind::kService)) {
      fail(ErrorCode::kShapeMismatch, "service index out of range");
    }
    outputs.push_back(service0 + s);
  }
  std::sort(outputs.begin(), outputs.end());
  outputs.erase(std::unique(outputs.begin(), outputs.end()), outputs.end());
  TaskOutputs out;
  if (outputs.empty()) return out;

  const auto fw = model.forward(params, outputs);
  for (const auto& q : batch.queries) {
    std::vector<double> scores;
    scores.reserve(q.doctors.size());
    const auto ep = model.embedding(fw, q.patient);
    for (auto d : q.doctors) {
      scores.push_back(score_patient_doctor(ep, model.embedding(fw, doctor0 + d), params));
    }
    out.scores.push_back(std::move(scores));
  }
  const auto e = static_cast<Eigen::Index>(params.config.embedding_dim());
  for (auto d : batch.doctors) {
    const auto emb = model.embedding(fw, doctor0 + d);
    out.specialty_logits.push_back(params.specialty *
                                   Eigen::Map<const Vector>(emb.data(), e));
  }
  for (auto s : batch.services) {
    const auto emb = model.embedding(fw, service0 + s);
    out.next_service_logits.push_back(params.next_service *
                                      Eigen::Map<const Vector>(emb.data(), e));
  }
  return out;
}

}  // namespace hfdl
