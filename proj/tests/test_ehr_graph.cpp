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
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include <gtest/gtest.h>

#include "hfdl/ehr_graph.hpp"
#include "hfdl/rng.hpp"
#include "hfdl/synth.hpp"
#include "test_util.hpp"

namespace hfdl {
namespace {

using testing::csv_header;
using testing::csv_row;
using testing::parse_csv;

std::size_t count_kind(const HeteroGraph& g, EdgeKind kind) {
  return static_cast<std::size_t>(std::count_if(
      g.edges().begin(), g.edges().end(),
      [&](const Edge& e) { return e.kind == kind; }));
}

const Edge* find_ss(const HeteroGraph& g, std::uint32_t a, std::uint32_t b) {
  for (const auto& e : g.edges()) {
    if (e.kind == EdgeKind::kServiceService && e.src.index == a &&
        e.dst.index == b) {
      return &e;
    }
  }
  return nullptr;
}

TEST(Ingest, MinimalChain) {
  const auto table = parse_csv(csv_header() +
                               csv_row("p0", "d0", "s0", "dx", "2020-01-01") +
                               csv_row("p0", "d0", "s1", "rx", "2020-01-02"));
  const HeteroGraph g = build_graph(table);
  EXPECT_EQ(g.node_count(NodeKind::kPatient), 1u);
  EXPECT_EQ(g.node_count(NodeKind::kDoctor), 1u);
  EXPECT_EQ(g.node_count(NodeKind::kService), 2u);
  ASSERT_EQ(count_kind(g, EdgeKind::kServiceService), 1u);
  const Edge* ss = find_ss(g, 0, 1);
  ASSERT_NE(ss, nullptr);
  EXPECT_DOUBLE_EQ(ss->weight, 1.0);
  EXPECT_EQ(count_kind(g, EdgeKind::kPatientDoctor), 1u);
  EXPECT_EQ(ss->src.service_subtype, ServiceType::kDx);
  EXPECT_EQ(ss->dst.service_subtype, ServiceType::kRx);
}

TEST(Ingest, SharedPairCountsDistinctPatients) {
  const auto table = testing::toy_claims();
  const HeteroGraph g = build_graph(table);
  const Edge* ss = find_ss(g, 0, 1);
  ASSERT_NE(ss, nullptr);
  EXPECT_DOUBLE_EQ(ss->weight, 2.0);
}

TEST(Ingest, RepeatedPairWithinOnePatientCountsOnce) {
  const auto table = parse_csv(csv_header() +
                               csv_row("p0", "d0", "a", "dx", "2020-01-01") +
                               csv_row("p0", "d0", "b", "rx", "2020-01-02") +
                               csv_row("p0", "d0", "a", "dx", "2020-01-03") +
                               csv_row("p0", "d0", "b", "rx", "2020-01-04"));
  const HeteroGraph g = build_graph(table);
  EXPECT_DOUBLE_EQ(find_ss(g, 0, 1)->weight, 1.0);
  EXPECT_DOUBLE_EQ(find_ss(g, 1, 0)->weight, 1.0);
}

TEST(Ingest, Errors) {
  using testing::parse_csv;
  EXPECT_HFDL_ERROR(
      parse_csv(csv_header() + csv_row("p0", "d0", "s0", "lab", "2020-01-01")),
      ErrorCode::kUnknownServiceType);
  EXPECT_HFDL_ERROR(parse_csv(""), ErrorCode::kEmptyFile);
  EXPECT_HFDL_ERROR(parse_csv(csv_header()), ErrorCode::kEmptyFile);
  EXPECT_HFDL_ERROR(parse_csv(csv_header() + "p0,d0,s0,dx\n"),
                    ErrorCode::kMalformedRow);
  EXPECT_HFDL_ERROR(
      parse_csv(csv_header() + csv_row("p0", "d0", "s0", "dx", "2020-13-01")),
      ErrorCode::kMalformedRow);
  EXPECT_HFDL_ERROR(parse_csv("a,b,c\n"), ErrorCode::kMalformedRow);
  try {
    parse_csv(csv_header() + csv_row("p0", "d0", "s0", "dx", "2020-01-01") +
              "p0,d0\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos);
  }
}

TEST(Ingest, CsvRoundTrip) {
  const auto [graph, regions] = synthesize(SynthConfig{{5, 4}, 20, 12, 4}, 3);
  (void)graph;
  (void)regions;
  const ClaimTable table = synthesize_claims(SynthConfig{{5, 4}, 20, 12, 4}, 3);
  std::ostringstream out;
  write_claims_csv(table, out);
  const ClaimTable back = parse_csv(out.str());
  EXPECT_EQ(back.claims.size(), table.claims.size());
  EXPECT_EQ(build_graph(back).edges().size(), build_graph(table).edges().size());
}

// Brute force over rows: distinct patients exhibiting each consecutive pair.
// A repeated service is not a transition.
TEST(Ingest, ServiceServiceWeightsMatchBruteForce) {
  const ClaimTable table = synthesize_claims(SynthConfig{{12, 9}, 30, 18, 4}, 11);
  std::map<std::uint32_t, std::vector<std::size_t>> rows;
  for (std::size_t i = 0; i < table.claims.size(); ++i) {
    rows[table.claims[i].patient].push_back(i);
  }
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::set<std::uint32_t>> who;
  for (auto& [p, idx] : rows) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return table.claims[a].day < table.claims[b].day;
    });
    for (std::size_t k = 1; k < idx.size(); ++k) {
      if (table.claims[idx[k - 1]].service == table.claims[idx[k]].service) continue;
      who[{table.claims[idx[k - 1]].service, table.claims[idx[k]].service}].insert(p);
    }
  }
  const HeteroGraph g = build_graph(table);
  std::size_t ss = 0;
  for (const auto& e : g.edges()) {
    if (e.kind != EdgeKind::kServiceService) continue;
    ++ss;
    const auto it = who.find({e.src.index, e.dst.index});
    ASSERT_NE(it, who.end());
    EXPECT_DOUBLE_EQ(e.weight, static_cast<double>(it->second.size()));
  }
  EXPECT_EQ(ss, who.size());
}

TEST(Graph, AdjacencySymmetryAndDirection) {
  const HeteroGraph g = build_graph(testing::toy_claims());
  for (std::uint32_t v = 0; v < g.total_nodes(); ++v) {
    for (const auto& nb : g.neighbors(v)) {
      const Edge& e = g.edges()[nb.edge];
      const bool back = std::any_of(
          g.neighbors(nb.node).begin(), g.neighbors(nb.node).end(),
          [&](const Neighbor& r) { return r.node == v && r.edge == nb.edge; });
      EXPECT_EQ(back, e.kind != EdgeKind::kServiceService);
    }
  }
  const std::uint32_t s0 = g.offset(NodeKind::kService);
  EXPECT_EQ(g.neighbors(s0, EdgeKind::kServiceService).size(), 1u);
  EXPECT_EQ(g.neighbors(s0 + 1, EdgeKind::kServiceService).size(), 0u);
}

TEST(Graph, RejectsInconsistentEdges) {
  NodeTables nodes;
  nodes.patients = {{"p", 30, 'F', 0}};
  nodes.doctors = {{"d", 0, 0}};
  nodes.services = {{"s", ServiceType::kDx}};
  nodes.region_names = {"r"};
  nodes.specialty_names = {"x"};
  Edge bad;
  bad.src = {NodeKind::kPatient, std::nullopt, 0};
  bad.dst = {NodeKind::kDoctor, std::nullopt, 0};
  bad.kind = EdgeKind::kPatientService;
  bad.weight = 1.0;
  EXPECT_HFDL_ERROR(HeteroGraph(nodes, {bad}), ErrorCode::kInvalidConfig);
  bad.kind = EdgeKind::kPatientDoctor;
  bad.dst.index = 4;
  EXPECT_HFDL_ERROR(HeteroGraph(nodes, {bad}), ErrorCode::kInvalidConfig);
}

TEST(Graph, SaveLoadRoundTrip) {
  const auto [g, regions] = synthesize(SynthConfig{{6, 5}, 20, 12, 4}, 5);
  std::stringstream buf;
  save_graph(g, buf);
  EXPECT_EQ(buf.str().rfind("HGRAPH v1\n", 0), 0u);
  const HeteroGraph back = load_graph(buf);
  EXPECT_TRUE(back == g);
  std::stringstream again;
  save_graph(back, again);
  std::stringstream first;
  save_graph(g, first);
  EXPECT_EQ(again.str(), first.str());
}

TEST(Graph, LoadRejectsGarbage) {
  std::istringstream in("HGRAPH v2\n");
  EXPECT_HFDL_ERROR(load_graph(in), ErrorCode::kMalformedGraphFile);
}

TEST(Recency, Formulas) {
  EXPECT_DOUBLE_EQ(edge_recency_weight(99, 0, 99, RecencyMethod::kLinear), 1.0);
  EXPECT_DOUBLE_EQ(edge_recency_weight(99, 0, 99, RecencyMethod::kLog), 1.0);
  EXPECT_DOUBLE_EQ(edge_recency_weight(49, 0, 99, RecencyMethod::kLinear), 0.5);
  EXPECT_DOUBLE_EQ(edge_recency_weight(0, 0, 99, RecencyMethod::kLog),
                   1.0 / (1.0 + std::log(100.0)));
  EXPECT_HFDL_ERROR(edge_recency_weight(100, 0, 99, RecencyMethod::kLinear),
                    ErrorCode::kOutOfRangeTimestamp);
  EXPECT_HFDL_ERROR(edge_recency_weight(-1, 0, 99, RecencyMethod::kLog),
                    ErrorCode::kOutOfRangeTimestamp);
}

TEST(Recency, MonotoneSweeps) {
  for (auto m : {RecencyMethod::kLinear, RecencyMethod::kLog}) {
    double prev = 0.0;
    for (std::int64_t t = -50; t <= 400; ++t) {
      const double w = edge_recency_weight(t, -50, 400, m);
      EXPECT_GT(w, 0.0);
      EXPECT_LE(w, 1.0);
      EXPECT_GE(w, prev);
      prev = w;
    }
  }
}

// Hub patient with weighted links to two doctors.
HeteroGraph weighted_star(std::vector<double> weights) {
  NodeTables nodes;
  nodes.patients = {{"p", 30, 'F', 0}};
  nodes.services = {{"s", ServiceType::kDx}};
  nodes.region_names = {"r"};
  nodes.specialty_names = {"x"};
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    nodes.doctors.push_back({"d" + std::to_string(i), 0, 0});
    Edge e;
    e.src = {NodeKind::kPatient, std::nullopt, 0};
    e.dst = {NodeKind::kDoctor, std::nullopt, static_cast<std::uint32_t>(i)};
    e.kind = EdgeKind::kPatientDoctor;
    e.weight = weights[i];
    edges.push_back(e);
  }
  return HeteroGraph(nodes, edges);
}

TEST(Sampling, WeightedFrequencies) {
  const HeteroGraph g = weighted_star({3.0, 1.0});
  const NodeRef p{NodeKind::kPatient, std::nullopt, 0};
  const std::size_t n = 10000;
  const auto draws = sample_neighbors(g, p, n, 42);
  ASSERT_EQ(draws.size(), n);
  const auto first = static_cast<double>(std::count_if(
      draws.begin(), draws.end(), [](const NodeRef& r) { return r.index == 0; }));
  const double sigma = std::sqrt(n * 0.75 * 0.25);
  EXPECT_NEAR(first, 0.75 * n, 3.0 * sigma);
}

TEST(Sampling, UniformFrequencies) {
  const HeteroGraph g = weighted_star({1.0, 1.0, 1.0, 1.0});
  const NodeRef p{NodeKind::kPatient, std::nullopt, 0};
  const std::size_t n = 10000;
  const auto draws = sample_neighbors(g, p, n, 7);
  std::vector<double> freq(4, 0.0);
  for (const auto& r : draws) freq[r.index] += 1.0;
  const double sigma = std::sqrt(n * 0.25 * 0.75);
  for (double f : freq) EXPECT_NEAR(f, 0.25 * n, 3.0 * sigma);
}

TEST(Sampling, SingleNeighborAndDeterminism) {
  const HeteroGraph g = weighted_star({0.3});
  const NodeRef p{NodeKind::kPatient, std::nullopt, 0};
  for (const auto& r : sample_neighbors(g, p, 50, 1)) {
    EXPECT_EQ(r.kind, NodeKind::kDoctor);
    EXPECT_EQ(r.index, 0u);
  }
  const HeteroGraph h = weighted_star({0.3, 2.0, 1.0});
  EXPECT_EQ(sample_neighbors(h, p, 64, 9), sample_neighbors(h, p, 64, 9));
}

TEST(Sampling, Errors) {
  const HeteroGraph g = weighted_star({0.0, 0.0});
  const NodeRef p{NodeKind::kPatient, std::nullopt, 0};
  EXPECT_HFDL_ERROR(sample_neighbors(g, p, 3, 1), ErrorCode::kZeroTotalWeight);
  const NodeRef s{NodeKind::kService, ServiceType::kDx, 0};
  EXPECT_HFDL_ERROR(sample_neighbors(g, s, 3, 1), ErrorCode::kIsolatedNode);
}

TEST(Mask, HeadLengths) {
  EXPECT_EQ(head_length(20, 0.65), 13u);
  EXPECT_EQ(head_length(2, 0.999), 1u);
  EXPECT_EQ(head_length(2, 0.01), 1u);
}

TEST(Mask, SixtyFivePercentOfTwentyClaims) {
  std::string text = csv_header();
  for (int i = 0; i < 20; ++i) {
    const std::string day = "2020-01-" + std::string(i + 1 < 10 ? "0" : "") +
                            std::to_string(i + 1);
    text += csv_row("p0", "d" + std::to_string(i % 10), "s" + std::to_string(i),
                    "dx", day);
  }
  const ClaimTable table = parse_csv(text);
  MaskOptions opts;
  opts.candidates_min = 1;
  opts.candidates_max = 1;
  const MaskedSplit split = chronological_mask(table, opts);
  EXPECT_EQ(split.head_claims[0], 13u);
  EXPECT_EQ(split.total_claims[0], 20u);
  EXPECT_EQ(count_kind(split.graph, EdgeKind::kPatientService), 13u);
  // Doctors d0..d9 all appear in the first 13 claims, so nothing is new.
  EXPECT_TRUE(split.positives[0].empty());
}

TEST(Mask, DoctorSeenOnBothSidesIsNotPositive) {
  const ClaimTable table = parse_csv(
      csv_header() + csv_row("p0", "a", "s0", "dx", "2020-01-01") +
      csv_row("p0", "b", "s1", "dx", "2020-01-02") +
      csv_row("p0", "a", "s2", "dx", "2020-01-03") +
      csv_row("p0", "c", "s3", "dx", "2020-01-04"));
  MaskOptions opts;
  opts.fraction = 0.5;
  opts.candidates_min = 0;
  opts.candidates_max = 0;
  const MaskedSplit split = chronological_mask(table, opts);
  const std::uint32_t c = 2;
  EXPECT_EQ(split.positives[0], std::vector<std::uint32_t>{c});
  EXPECT_EQ(split.candidates[0], std::vector<std::uint32_t>{c});
}

TEST(Mask, PatientTooShort) {
  const ClaimTable table =
      parse_csv(csv_header() + csv_row("lonely", "a", "s0", "dx", "2020-01-01"));
  try {
    chronological_mask(table, MaskOptions{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kPatientTooShort);
    EXPECT_NE(std::string(e.what()).find("lonely"), std::string::npos);
  }
  EXPECT_HFDL_ERROR(chronological_mask(testing::toy_claims(), MaskOptions{1.0}),
                    ErrorCode::kInvalidConfig);
}

TEST(Mask, SyntheticInvariants) {
  const ClaimTable table = synthesize_claims(SynthConfig{}, 1);
  MaskOptions opts;
  opts.seed = 4;
  const MaskedSplit split = chronological_mask(table, opts);
  const HeteroGraph& g = split.graph;
  std::size_t in_range = 0;
  std::size_t with_positives = 0;
  for (std::uint32_t p = 0; p < table.nodes.patients.size(); ++p) {
    std::set<std::uint32_t> linked;
    for (const auto& nb : g.neighbors(p, EdgeKind::kPatientDoctor)) {
      linked.insert(nb.node - g.offset(NodeKind::kDoctor));
    }
    const auto& pos = split.positives[p];
    const auto& cand = split.candidates[p];
    for (auto d : pos) {
      EXPECT_EQ(linked.count(d), 0u);
      EXPECT_TRUE(std::binary_search(cand.begin(), cand.end(), d));
    }
    EXPECT_GE(cand.size(), 200u);
    EXPECT_LE(cand.size(), 350u);
    if (!pos.empty()) ++with_positives;
    if (pos.size() >= 5 && pos.size() <= 10) ++in_range;
  }
  // Most synthetic patients land in the 5 to 10 positives band.
  EXPECT_GT(static_cast<double>(in_range) / table.nodes.patients.size(), 0.8);
  EXPECT_EQ(with_positives, table.nodes.patients.size());
}

TEST(Synth, PatientCountsAndRegions) {
  SynthConfig c;
  EXPECT_EQ(total_patients(c), 1005u);
  const auto [g, regions] = synthesize(c, 2);
  EXPECT_EQ(g.node_count(NodeKind::kPatient), 1005u);
  std::vector<std::size_t> sizes(6, 0);
  for (auto r : regions) ++sizes[r];
  EXPECT_EQ(sizes, (std::vector<std::size_t>{145, 158, 177, 207, 147, 171}));
}

TEST(Synth, Deterministic) {
  SynthConfig c;
  c.region_sizes = {20, 30};
  const auto a = synthesize(c, 9);
  const auto b = synthesize(c, 9);
  EXPECT_TRUE(a.first == b.first);
  std::stringstream sa, sb;
  save_graph(a.first, sa);
  save_graph(b.first, sb);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_FALSE(synthesize(c, 10).first == a.first);
}

TEST(Synth, InvalidConfigs) {
  SynthConfig c;
  c.region_sizes = {};
  EXPECT_HFDL_ERROR(synthesize_claims(c, 1), ErrorCode::kInvalidConfig);
  c.region_sizes = {0};
  EXPECT_HFDL_ERROR(synthesize_claims(c, 1), ErrorCode::kInvalidConfig);
  c = SynthConfig{};
  c.claims_min = 10;
  c.claims_max = 5;
  EXPECT_HFDL_ERROR(synthesize_claims(c, 1), ErrorCode::kInvalidConfig);
  c = SynthConfig{};
  c.doctors = 0;
  EXPECT_HFDL_ERROR(synthesize_claims(c, 1), ErrorCode::kInvalidConfig);
}

// Doctors of a specialty bill from that specialty's cluster.
TEST(Synth, DoctorServiceEdgesFollowSpecialty) {
  SynthConfig c;
  c.region_sizes = {40, 40};
  const ClaimTable t = synthesize_claims(c, 3);
  std::size_t inside = 0;
  for (const auto& cl : t.claims) {
    const auto s = t.nodes.doctors[cl.doctor].specialty;
    if (cl.service >= cluster_begin(c, s) && cl.service < cluster_begin(c, s + 1)) ++inside;
  }
  EXPECT_GT(static_cast<double>(inside) / t.claims.size(), 0.95);
}

// Noisy doctors break the doctor-service cluster link but leave the
// patient services alone.
TEST(Synth, DoctorNoise) {
  SynthConfig c;
  c.region_sizes = {40, 40};
  const ClaimTable clean = synthesize_claims(c, 3);
  c.doctor_noise_prob = 0.0;
  const ClaimTable zero = synthesize_claims(c, 3);
  ASSERT_EQ(zero.claims.size(), clean.claims.size());
  for (std::size_t i = 0; i < zero.claims.size(); ++i) {
    EXPECT_EQ(zero.claims[i].doctor, clean.claims[i].doctor);
    EXPECT_EQ(zero.claims[i].service, clean.claims[i].service);
  }
  c.doctor_noise_prob = 0.5;
  const ClaimTable noisy = synthesize_claims(c, 3);
  std::size_t inside = 0;
  for (const auto& cl : noisy.claims) {
    const auto s = noisy.nodes.doctors[cl.doctor].specialty;
    if (cl.service >= cluster_begin(c, s) && cl.service < cluster_begin(c, s + 1)) ++inside;
  }
  const double frac = static_cast<double>(inside) / noisy.claims.size();
  EXPECT_GT(frac, 0.45);
  EXPECT_LT(frac, 0.75);
  c.doctor_noise_prob = 1.5;
  EXPECT_HFDL_ERROR(synthesize_claims(c, 1), ErrorCode::kInvalidConfig);
}

TEST(Dates, IsoRoundTrip) {
  EXPECT_EQ(parse_iso_date("1970-01-01"), 0);
  EXPECT_EQ(parse_iso_date("2010-01-01"), 14610);
  EXPECT_EQ(format_iso_date(parse_iso_date("2024-02-29")), "2024-02-29");
  EXPECT_HFDL_ERROR(parse_iso_date("2023-02-29"), ErrorCode::kMalformedRow);
}

}  // namespace
}  // namespace hfdl
