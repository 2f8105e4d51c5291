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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "hfdl/features.hpp"
#include "hfdl/hgat.hpp"
#include "hfdl/objectives.hpp"
#include "hfdl/rng.hpp"
#include "hfdl/synth.hpp"
#include "reference_gat.hpp"
#include "test_util.hpp"

namespace hfdl {
namespace {

using namespace reference;

std::string claim(const std::string& p, const std::string& d,
                  const std::string& s, const std::string& date,
                  const std::string& spec) {
  return p + "," + d + "," + s + ",dx," + date + ",50,F,r," + spec + ",r\n";
}

// Two patients, two doctors, one service.
HeteroGraph toy5() {
  return build_graph(testing::parse_csv(
      testing::csv_header() + claim("p0", "d0", "s0", "2021-01-01", "cardio") +
      claim("p0", "d0", "s0", "2021-01-09", "cardio") +
      claim("p1", "d1", "s0", "2021-02-01", "neuro") +
      claim("p1", "d1", "s0", "2021-02-07", "neuro")));
}

HgatConfig small_config(const HeteroGraph& g, KindDims dims) {
  HgatConfig c;
  c.input_dims = dims;
  c.hidden = 3;
  c.heads = 2;
  c.type_dim = 2;
  c.specialty_classes = g.specialty_count();
  c.service_classes = g.node_count(NodeKind::kService);
  return c;
}


// --- Parameters --------------------------------------------------------------

TEST(Params, CountClosedFormMatchesEnumeration) {
  HgatConfig c;
  c.input_dims = {4, 4, 4};
  c.hidden = 8;
  c.heads = 2;
  c.layers = 1;
  c.type_dim = 4;
  const HgatParams p = HgatParams::zeros(c);
  std::size_t counted = 0;
  for (const auto& layer : p.layers) {
    for (const auto& head : layer) {
      for (const auto& q : head.q) counted += q.size();
      counted += head.a.size();
      for (const auto& v : head.v) counted += v.size();
    }
  }
  counted += p.bilinear.size() + p.specialty.size() + p.next_service.size();
  // Per head: Q 8*12, a 2*8+4, V 9*4.
  EXPECT_EQ(counted, 2u * (96 + 20 + 36));
  EXPECT_EQ(parameter_count(c), counted);
  EXPECT_EQ(ParamLayout::for_config(c).size, counted);
}

TEST(Params, CountVariants) {
  HgatConfig c;
  c.input_dims = {3, 5, 7};
  c.hidden = 4;
  c.heads = 3;
  c.layers = 2;
  c.merge = HeadMerge::kConcat;
  c.score = ScoreMode::kBilinear;
  c.specialty_classes = 5;
  c.service_classes = 6;
  EXPECT_EQ(parameter_count(c), flatten(HgatParams::random(c, 1)).values.size());
  c.type_pair_attention = false;
  EXPECT_EQ(parameter_count(c), flatten(HgatParams::random(c, 1)).values.size());
  c.input_dims = {6, 6, 6};
  c.shared_projection = true;
  EXPECT_EQ(parameter_count(c), flatten(HgatParams::random(c, 1)).values.size());
  c.input_dims = {6, 5, 6};
  EXPECT_HFDL_ERROR(c.validate(), ErrorCode::kShapeMismatch);
}

TEST(Params, FlattenRoundTrip) {
  HgatConfig c;
  c.input_dims = {3, 4, 5};
  c.hidden = 4;
  c.layers = 2;
  c.score = ScoreMode::kBilinear;
  c.specialty_classes = 3;
  c.service_classes = 4;
  const ParamVector v = flatten(HgatParams::random(c, 5));
  std::vector<double> noise(v.values.size());
  std::mt19937_64 rng(3);
  for (auto& x : noise) x = standard_normal(rng);
  EXPECT_EQ(flatten(unflatten(noise, c)).values, noise);
  EXPECT_EQ(flatten(unflatten(v, c)).values, v.values);
  EXPECT_EQ(ParamLayout::for_config(c), v.layout);
  ASSERT_NE(v.layout.find("score.bilinear"), nullptr);
  noise.pop_back();
  EXPECT_HFDL_ERROR(unflatten(noise, c), ErrorCode::kLayoutMismatch);
}

TEST(Params, CheckpointRoundTrip) {
  HgatConfig c;
  c.input_dims = {2, 3, 4};
  c.hidden = 3;
  c.specialty_classes = 2;
  c.service_classes = 3;
  const ParamVector v = flatten(HgatParams::random(c, 8));
  std::stringstream buf;
  save_checkpoint(v, buf);
  EXPECT_EQ(buf.str().rfind("HFDL-PARAMS v1\n", 0), 0u);
  const ParamVector back = load_checkpoint(buf);
  EXPECT_EQ(back.values, v.values);
  EXPECT_EQ(back.layout, v.layout);
  std::string truncated = [&] {
    std::stringstream again;
    save_checkpoint(v, again);
    std::string s = again.str();
    return s.substr(0, s.size() - 3);
  }();
  std::istringstream in(truncated);
  EXPECT_HFDL_ERROR(load_checkpoint(in), ErrorCode::kLayoutMismatch);
}

// --- Attention ---------------------------------------------------------------

HgatParams attention_params(bool type_pair) {
  HgatConfig c;
  c.input_dims = {2, 2, 2};
  c.hidden = 2;
  c.heads = 1;
  c.type_dim = 2;
  c.type_pair_attention = type_pair;
  return HgatParams::random(c, 17);
}

TEST(Attention, SingletonAndSymmetry) {
  const HgatParams p = attention_params(true);
  const std::vector<double> hi = {0.3, -0.1};
  const std::vector<double> hj = {1.0, 2.0};
  const NeighborFeature one[] = {{hj, NodeKind::kDoctor}};
  EXPECT_EQ(attention_coefficients(hi, NodeKind::kPatient, one, p, 0),
            std::vector<double>{1.0});
  const NeighborFeature two[] = {{hj, NodeKind::kDoctor}, {hj, NodeKind::kDoctor}};
  const auto a = attention_coefficients(hi, NodeKind::kPatient, two, p, 0);
  EXPECT_DOUBLE_EQ(a[0], 0.5);
  EXPECT_DOUBLE_EQ(a[1], 0.5);
  EXPECT_HFDL_ERROR(attention_coefficients(hi, NodeKind::kPatient, {}, p, 0),
                    ErrorCode::kShapeMismatch);
  const std::vector<double> wide = {1.0, 2.0, 3.0};
  const NeighborFeature bad[] = {{wide, NodeKind::kService}};
  EXPECT_HFDL_ERROR(attention_coefficients(hi, NodeKind::kPatient, bad, p, 0),
                    ErrorCode::kShapeMismatch);
}

TEST(Attention, HandSetThreeNeighbours) {
  HgatParams p = attention_params(true);
  HeadParams& hp = p.layers[0][0];
  hp.q[0] << 1.0, 0.0, 0.0, 1.0;    // patient: identity
  hp.q[1] << 0.5, -1.0, 2.0, 0.0;   // doctor
  hp.q[2] << -1.0, 1.0, 1.0, 1.0;   // service
  hp.a << 0.2, -0.4, 0.7, 0.1, 1.0, -0.5;
  for (auto& v : hp.v) v.setZero();
  hp.v[HeadParams::pair_index(NodeKind::kPatient, NodeKind::kDoctor)] << 0.3, 0.2;
  hp.v[HeadParams::pair_index(NodeKind::kPatient, NodeKind::kService)] << -1.0, 0.4;

  const std::vector<double> hi = {1.0, -2.0};
  const std::vector<double> d1 = {0.5, 1.5};
  const std::vector<double> d2 = {-1.0, 0.25};
  const std::vector<double> s1 = {2.0, -0.5};
  const NeighborFeature nb[] = {{d1, NodeKind::kDoctor},
                                {d2, NodeKind::kDoctor},
                                {s1, NodeKind::kService}};
  const auto alpha = attention_coefficients(hi, NodeKind::kPatient, nb, p, 0);

  // Q_p h_i = (1, -2); target term 0.2*1 - 0.4*(-2) = 1.0.
  // Q_d d1 = (0.5*0.5 - 1.0*1.5, 2*0.5) = (-1.25, 1.0)
  // Q_d d2 = (-0.5 - 0.25, -2.0) = (-0.75, -2.0)
  // Q_s s1 = (-2 - 0.5, 2 - 0.5) = (-2.5, 1.5)
  // type terms: pd 1.0*0.3 - 0.5*0.2 = 0.2; ps -1.0 - 0.2 = -1.2
  const double e1 = 1.0 + (0.7 * -1.25 + 0.1 * 1.0) + 0.2;    // 0.425
  const double e2 = 1.0 + (0.7 * -0.75 + 0.1 * -2.0) + 0.2;   // 0.475
  const double e3 = 1.0 + (0.7 * -2.5 + 0.1 * 1.5) - 1.2;     // -1.8
  const double l1 = e1;
  const double l2 = e2;
  const double l3 = 0.2 * e3;
  const double z = std::exp(l1) + std::exp(l2) + std::exp(l3);
  EXPECT_NEAR(alpha[0], std::exp(l1) / z, 1e-12);
  EXPECT_NEAR(alpha[1], std::exp(l2) / z, 1e-12);
  EXPECT_NEAR(alpha[2], std::exp(l3) / z, 1e-12);
}

TEST(Attention, PermutationCovariant) {
  const HgatParams p = attention_params(true);
  std::mt19937_64 rng(4);
  std::vector<std::vector<double>> h(5, std::vector<double>(2));
  for (auto& row : h) for (auto& x : row) x = standard_normal(rng);
  const NodeKind kinds[] = {NodeKind::kDoctor, NodeKind::kService, NodeKind::kPatient,
                            NodeKind::kService, NodeKind::kDoctor};
  std::vector<NeighborFeature> nb;
  for (int j = 1; j < 5; ++j) nb.push_back({h[j], kinds[j]});
  const auto base = attention_coefficients(h[0], kinds[0], nb, p, 0);
  std::vector<std::size_t> perm = {2, 0, 3, 1};
  std::vector<NeighborFeature> shuffled;
  for (auto j : perm) shuffled.push_back(nb[j]);
  const auto moved = attention_coefficients(h[0], kinds[0], shuffled, p, 0);
  for (std::size_t j = 0; j < perm.size(); ++j) EXPECT_DOUBLE_EQ(moved[j], base[perm[j]]);
}

// --- Layers ------------------------------------------------------------------

TEST(Layer, SingleNeighbourCollapses) {
  // Patient p0 has the single doctor d0 as its only neighbour if only PD
  // edges exist in the graph.
  NodeTables nodes;
  nodes.patients = {{"p", 30, 'F', 0}};
  nodes.doctors = {{"d", 0, 0}};
  nodes.services = {{"s", ServiceType::kDx}};
  nodes.region_names = {"r"};
  nodes.specialty_names = {"x"};
  Edge e;
  e.src = {NodeKind::kPatient, std::nullopt, 0};
  e.dst = {NodeKind::kDoctor, std::nullopt, 0};
  e.kind = EdgeKind::kPatientDoctor;
  e.weight = 1.0;
  const HeteroGraph g(nodes, {e});
  const FeatureTable f = init_features(g, FeatureScheme::kSeededGaussian, {2, 2, 2}, 3);
  HgatConfig c;
  c.input_dims = {2, 2, 2};
  c.hidden = 2;
  c.heads = 1;
  const HgatParams p = HgatParams::random(c, 6);
  const HgatModel model(g, f, c, SamplingPlan::build(g, 4, 1, 1));
  const Blocks out = layer_forward(model, p);
  const Vector v = p.layers[0][0].q_for(NodeKind::kDoctor) * f.of(NodeKind::kDoctor).row(0).transpose();
  for (int r = 0; r < 2; ++r) EXPECT_NEAR(out[0](0, r), elu_ref(v[r]), 1e-15);
  // Isolated service aggregates its own projection.
  const Vector s = p.layers[0][0].q_for(NodeKind::kService) * f.of(NodeKind::kService).row(0).transpose();
  for (int r = 0; r < 2; ++r) EXPECT_NEAR(out[2](0, r), elu_ref(s[r]), 1e-15);
}

TEST(Layer, ZeroParametersGiveZero) {
  const HeteroGraph g = toy5();
  const FeatureTable f = init_features(g, FeatureScheme::kSeededGaussian, {3, 3, 3}, 3);
  const HgatConfig c = small_config(g, {3, 3, 3});
  const HgatModel model(g, f, c, SamplingPlan::build(g, 8, 1, 1));
  for (const auto& m : layer_forward(model, HgatParams::zeros(c))) {
    EXPECT_EQ(m.cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Layer, ToyMatchesDenseOracle) {
  const HeteroGraph g = toy5();
  ASSERT_EQ(g.total_nodes(), 5u);
  const FeatureTable f = init_features(g, FeatureScheme::kSeededGaussian, {3, 4, 2}, 3);
  for (auto merge : {HeadMerge::kMean, HeadMerge::kConcat}) {
    HgatConfig c = small_config(g, {3, 4, 2});
    c.merge = merge;
    const HgatParams p = HgatParams::random(c, 21);
    const HgatModel model(g, f, c, SamplingPlan::build(g, max_degree(g), 1, 1));
    const Rows want = dense_layer(g, input_rows(g, f), p, 0);
    EXPECT_LT(max_gap(g, layer_forward(model, p), want), 1e-12);
  }
}

TEST(Layer, TwoLayersMatchDenseOracle) {
  const HeteroGraph g = random_toy(12);
  const FeatureTable f = init_features(g, FeatureScheme::kSeededGaussian, {3, 4, 5}, 3);
  HgatConfig c = small_config(g, {3, 4, 5});
  c.layers = 2;
  const HgatParams p = HgatParams::random(c, 2);
  const HgatModel model(g, f, c, SamplingPlan::build(g, max_degree(g), 2, 1));
  const Rows h1 = dense_layer(g, input_rows(g, f), p, 0);
  const Rows h2 = dense_layer(g, h1, p, 1);
  EXPECT_LT(max_gap(g, model.forward(p).embeddings(), h2), 1e-12);
  // Restricting outputs leaves the requested rows unchanged.
  const std::uint32_t pick[] = {0, g.offset(NodeKind::kDoctor)};
  const auto part = model.forward(p, pick);
  for (auto v : pick) {
    const auto a = model.embedding(part, v);
    for (std::size_t r = 0; r < a.size(); ++r) EXPECT_NEAR(a[r], h2[v][r], 1e-12);
  }
}

TEST(Layer, RowsNormalisedOnRandomGraphs) {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const HeteroGraph g = random_toy(seed);
    const FeatureTable f = init_features(g, FeatureScheme::kSeededGaussian, {3, 3, 3}, seed);
    const HgatConfig c = small_config(g, {3, 3, 3});
    const HgatModel model(g, f, c, SamplingPlan::build(g, 3, 1, seed));
    const auto fw = model.forward(HgatParams::random(c, seed));
    const auto& cache = fw.layers[0];
    for (std::size_t k = 0; k < c.heads; ++k) {
      for (std::size_t r = 0; r < cache.targets.size(); ++r) {
        double s = 0.0;
        for (auto e = cache.edge_begin[r]; e < cache.edge_begin[r + 1]; ++e) {
          const double a = cache.alpha[k][e];
          EXPECT_GT(a, 0.0);
          EXPECT_LE(a, 1.0);
          s += a;
        }
        ASSERT_NEAR(s, 1.0, 1e-12) << "seed " << seed;
      }
    }
  }
}

TEST(Layer, GatReductionOnRandomGraphs) {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const HeteroGraph g = random_toy(seed);
    const FeatureTable f = init_features(g, FeatureScheme::kSeededGaussian, {3, 3, 3}, seed);
    const Rows in = input_rows(g, f);
    const auto plan = SamplingPlan::build(g, max_degree(g), 1, seed);

    // Shared projection without type-pair terms.
    HgatConfig c = small_config(g, {3, 3, 3});
    c.shared_projection = true;
    c.type_pair_attention = false;
    const HgatParams p = HgatParams::random(c, seed);
    std::vector<Matrix> w;
    std::vector<Vector> a;
    for (const auto& hp : p.layers[0]) {
      w.push_back(hp.q[0]);
      a.push_back(hp.a);
    }
    const HgatModel model(g, f, c, plan);
    ASSERT_LT(max_gap(g, layer_forward(model, p), gat_layer(g, in, w, a)), 1e-10);

    // Full HGAT parameterisation with V = 0 and every Q_t equal.
    HgatConfig h = small_config(g, {3, 3, 3});
    HgatParams q = HgatParams::random(h, seed + 1000);
    for (std::size_t k = 0; k < h.heads; ++k) {
      auto& hp = q.layers[0][k];
      for (auto& m : hp.q) m = w[k];
      for (auto& v : hp.v) v.setZero();
      hp.a.head(2 * h.hidden) = a[k];
    }
    const HgatModel full(g, f, h, plan);
    ASSERT_LT(max_gap(g, layer_forward(full, q), gat_layer(g, in, w, a)), 1e-10);
  }
}

TEST(Layer, NeighbourOrderDoesNotMatter) {
  const HeteroGraph g = random_toy(5);
  const FeatureTable f = init_features(g, FeatureScheme::kSeededGaussian, {3, 3, 3}, 5);
  const HgatConfig c = small_config(g, {3, 3, 3});
  const HgatParams p = HgatParams::random(c, 5);
  const HgatModel model(g, f, c, SamplingPlan::build(g, max_degree(g), 1, 1));
  const Blocks out = layer_forward(model, p);
  const Rows in = input_rows(g, f);
  // Rebuild every row from attention_coefficients over reversed neighbour lists.
  Rows want(g.total_nodes());
  for (std::uint32_t i = 0; i < g.total_nodes(); ++i) {
    auto nbrs = full_neighbors(g, i);
    std::reverse(nbrs.begin(), nbrs.end());
    std::vector<NeighborFeature> nf;
    for (auto j : nbrs) nf.push_back({in[j], g.kind_of(j)});
    std::vector<double> z(c.hidden, 0.0);
    for (std::size_t k = 0; k < c.heads; ++k) {
      const auto alpha = attention_coefficients(in[i], g.kind_of(i), nf, p, k);
      for (std::size_t j = 0; j < nbrs.size(); ++j) {
        const auto w = apply(p.layers[0][k].q_for(g.kind_of(nbrs[j])), in[nbrs[j]]);
        for (std::size_t r = 0; r < c.hidden; ++r) z[r] += alpha[j] * w[r];
      }
    }
    for (double x : z) want[i].push_back(elu_ref(x / static_cast<double>(c.heads)));
  }
  EXPECT_LT(max_gap(g, out, want), 1e-12);
}

TEST(Plan, FullSampledAndSelfLoop) {
  const HeteroGraph g = random_toy(3);
  const auto plan = SamplingPlan::build(g, 2, 1, 9);
  for (std::uint32_t v = 0; v < g.total_nodes(); ++v) {
    const auto got = plan.neighbors(0, v);
    const auto deg = g.neighbors(v).size();
    if (deg == 0) {
      ASSERT_EQ(got.size(), 1u);
      EXPECT_EQ(got[0], v);
    } else if (deg <= 2) {
      ASSERT_EQ(got.size(), deg);
      for (std::size_t j = 0; j < deg; ++j) EXPECT_EQ(got[j], g.neighbors(v)[j].node);
    } else {
      EXPECT_EQ(got.size(), 2u);
    }
  }
  const auto again = SamplingPlan::build(g, 2, 1, 9);
  for (std::uint32_t v = 0; v < g.total_nodes(); ++v) {
    EXPECT_TRUE(std::ranges::equal(plan.neighbors(0, v), again.neighbors(0, v)));
  }
  EXPECT_HFDL_ERROR(SamplingPlan::build(g, 0, 1, 9), ErrorCode::kInvalidConfig);
}

// --- Scoring and task heads --------------------------------------------------

TEST(Score, DotAndBilinear) {
  HgatConfig c;
  c.input_dims = {2, 2, 2};
  c.hidden = 4;
  HgatParams p = HgatParams::zeros(c);
  const std::vector<double> zero(4, 0.0);
  const std::vector<double> e1 = {1.0, 0.0, 0.0, 0.0};
  EXPECT_EQ(score_patient_doctor(zero, zero, p), 0.0);
  EXPECT_EQ(score_patient_doctor(e1, e1, p), 1.0);
  EXPECT_HFDL_ERROR(score_patient_doctor(std::vector<double>(3), e1, p),
                    ErrorCode::kShapeMismatch);

  HgatConfig b = c;
  b.score = ScoreMode::kBilinear;
  HgatParams q = HgatParams::zeros(b);
  q.bilinear = Matrix::Identity(4, 4);
  std::mt19937_64 rng(1);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> x(4), y(4);
    for (auto& v : x) v = standard_normal(rng);
    for (auto& v : y) v = standard_normal(rng);
    EXPECT_NEAR(score_patient_doctor(x, y, q), score_patient_doctor(x, y, p), 1e-14);
  }
}

TEST(ModelForward, ShapesAndDenseOracle) {
  const HeteroGraph g = toy5();
  const FeatureTable f = init_features(g, FeatureScheme::kSeededGaussian, {3, 3, 3}, 3);
  const HgatConfig c = small_config(g, {3, 3, 3});
  const HgatParams p = HgatParams::random(c, 4);
  const HgatModel model(g, f, c, SamplingPlan::build(g, max_degree(g), 1, 1));
  TaskBatch batch;
  batch.queries = {{0, {0, 1}}};
  batch.doctors = {0, 1};
  batch.services = {0};
  const TaskOutputs out = model_forward(model, p, batch);
  ASSERT_EQ(out.scores.size(), 1u);
  ASSERT_EQ(out.scores[0].size(), 2u);
  ASSERT_EQ(out.specialty_logits.size(), 2u);
  EXPECT_EQ(static_cast<std::size_t>(out.specialty_logits[0].size()), g.specialty_count());
  EXPECT_EQ(out.next_service_logits[0].size(), 1);

  const Rows h = dense_layer(g, input_rows(g, f), p, 0);
  const std::uint32_t d0 = g.offset(NodeKind::kDoctor);
  for (int d = 0; d < 2; ++d) {
    double s = 0.0;
    for (std::size_t r = 0; r < c.hidden; ++r) s += h[0][r] * h[d0 + d][r];
    EXPECT_NEAR(out.scores[0][d], s, 1e-12);
    for (Eigen::Index k = 0; k < p.specialty.rows(); ++k) {
      double l = 0.0;
      for (std::size_t r = 0; r < c.hidden; ++r) l += p.specialty(k, r) * h[d0 + d][r];
      EXPECT_NEAR(out.specialty_logits[d][k], l, 1e-12);
    }
  }
  TaskBatch bad;
  bad.queries = {{7, {0}}};
  EXPECT_HFDL_ERROR(model_forward(model, p, bad), ErrorCode::kShapeMismatch);
}

TEST(ModelForward, LabelLeakage) {
  const HeteroGraph g = toy5();
  const FeatureTable f = init_features(g, FeatureScheme::kOneHotAttributes, {0, 0, 0}, 3);
  HgatConfig c = small_config(g, {f.dim(NodeKind::kPatient), f.dim(NodeKind::kDoctor),
                                   f.dim(NodeKind::kService)});
  const HgatModel model(g, f, c, SamplingPlan::build(g, 4, 1, 1));
  TaskBatch batch;
  batch.doctors = {0};
  EXPECT_HFDL_ERROR(model_forward(model, HgatParams::zeros(c), batch),
                    ErrorCode::kLabelLeakage);
  batch = {};
  batch.queries = {{0, {1}}};
  EXPECT_NO_THROW(model_forward(model, HgatParams::zeros(c), batch));
}

// --- Gradients ---------------------------------------------------------------

double hgat_fd_error(const HeteroGraph& graph, KindDims dims, HgatConfig c,
                     std::uint64_t seed, std::size_t coords) {
  auto g = std::make_shared<HeteroGraph>(graph);
  auto f = std::make_shared<FeatureTable>(
      init_features(*g, FeatureScheme::kSeededGaussian, dims, seed));
  c.input_dims = dims;
  c.specialty_classes = g->specialty_count();
  c.service_classes = g->node_count(NodeKind::kService);
  auto plan = SamplingPlan::build(*g, 10, c.layers, seed);
  auto samples = build_hgat_samples(*g, {}, {}, seed);
  const HgatObjective obj(g, f, c, plan, samples, {});
  const auto x = flatten(HgatParams::random(c, seed)).values;
  return finite_difference_check(obj, x, obj.all_samples(), 1e-6, coords, seed);
}

TEST(Gradient, ToyGraphAllCoordinates) {
  const HeteroGraph g = toy5();
  for (auto score : {ScoreMode::kDot, ScoreMode::kBilinear}) {
    HgatConfig c;
    c.hidden = 3;
    c.heads = 2;
    c.score = score;
    EXPECT_LT(hgat_fd_error(g, {3, 3, 2}, c, 1, 0), 1e-5);
  }
}

TEST(Gradient, SyntheticTwoLayerConcat) {
  SynthConfig s;
  s.region_sizes = {8};
  s.doctors = 10;
  s.services = 8;
  s.specialties = 3;
  s.claims_min = 3;
  s.claims_max = 6;
  const HeteroGraph g = synthesize(s, 2).first;
  HgatConfig c;
  c.hidden = 3;
  c.heads = 2;
  c.layers = 2;
  c.merge = HeadMerge::kConcat;
  EXPECT_LT(hgat_fd_error(g, {3, 4, 3}, c, 3, 200), 1e-5);
}

TEST(Gradient, SixtyNodeSynthetic) {
  SynthConfig s;
  s.region_sizes = {20};
  s.doctors = 24;
  s.services = 16;
  s.specialties = 4;
  const HeteroGraph g = synthesize(s, 1).first;
  ASSERT_EQ(g.total_nodes(), 60u);
  HgatConfig c;
  c.hidden = 8;
  c.heads = 2;
  EXPECT_LT(hgat_fd_error(g, {8, 8, 8}, c, 1, 200), 1e-5);
}

}  // namespace
}  // namespace hfdl
