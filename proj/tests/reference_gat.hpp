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

#ifndef HFDL_TESTS_REFERENCE_GAT_HPP_
#define HFDL_TESTS_REFERENCE_GAT_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "hfdl/ehr_graph.hpp"
#include "hfdl/features.hpp"
#include "hfdl/hgat.hpp"
#include "hfdl/rng.hpp"
#include "hfdl/synth.hpp"

// Straight-line layer evaluations used as oracles for the HGAT layer.
namespace hfdl::reference {

using Rows = std::vector<std::vector<double>>;

inline Rows input_rows(const HeteroGraph& g, const FeatureTable& f) {
  Rows rows(g.total_nodes());
  for (std::uint32_t v = 0; v < g.total_nodes(); ++v) {
    const NodeKind k = g.kind_of(v);
    const Matrix& m = f.of(k);
    const auto r = static_cast<Eigen::Index>(v - g.offset(k));
    for (Eigen::Index c = 0; c < m.cols(); ++c) rows[v].push_back(m(r, c));
  }
  return rows;
}

inline std::vector<std::uint32_t> full_neighbors(const HeteroGraph& g, std::uint32_t v) {
  std::vector<std::uint32_t> out;
  double total = 0.0;
  for (const auto& nb : g.neighbors(v)) {
    out.push_back(nb.node);
    total += nb.weight;
  }
  if (out.empty() || !(total > 0.0)) out = {v};
  return out;
}

inline double lrelu(double x) { return x > 0.0 ? x : 0.2 * x; }
inline double elu_ref(double x) { return x > 0.0 ? x : std::exp(x) - 1.0; }

inline std::vector<double> apply(const Matrix& q, const std::vector<double>& h) {
  std::vector<double> out(static_cast<std::size_t>(q.rows()), 0.0);
  for (Eigen::Index r = 0; r < q.rows(); ++r) {
    for (Eigen::Index c = 0; c < q.cols(); ++c) out[r] += q(r, c) * h[c];
  }
  return out;
}

// Straight-line evaluation of one layer over full neighbourhoods.
inline Rows dense_layer(const HeteroGraph& g, const Rows& in, const HgatParams& p,
                 std::size_t layer) {
  const HgatConfig& c = p.config;
  const std::size_t f = c.hidden;
  Rows out(g.total_nodes());
  for (std::uint32_t i = 0; i < g.total_nodes(); ++i) {
    const auto nbrs = full_neighbors(g, i);
    Rows z(c.heads, std::vector<double>(f, 0.0));
    for (std::size_t k = 0; k < c.heads; ++k) {
      const HeadParams& hp = p.layers[layer][k];
      const auto ui = apply(hp.q_for(g.kind_of(i)), in[i]);
      std::vector<double> e;
      Rows w;
      for (auto j : nbrs) {
        w.push_back(apply(hp.q_for(g.kind_of(j)), in[j]));
        double s = 0.0;
        for (std::size_t r = 0; r < f; ++r) s += hp.a[r] * ui[r] + hp.a[f + r] * w.back()[r];
        if (c.type_pair_attention) {
          const Vector& v = hp.v[HeadParams::pair_index(g.kind_of(i), g.kind_of(j))];
          for (Eigen::Index r = 0; r < v.size(); ++r) s += hp.a[2 * f + r] * v[r];
        }
        e.push_back(std::exp(lrelu(s)));
      }
      const double total = std::accumulate(e.begin(), e.end(), 0.0);
      for (std::size_t j = 0; j < nbrs.size(); ++j) {
        for (std::size_t r = 0; r < f; ++r) z[k][r] += e[j] / total * w[j][r];
      }
    }
    if (c.merge == HeadMerge::kMean) {
      for (std::size_t r = 0; r < f; ++r) {
        double s = 0.0;
        for (std::size_t k = 0; k < c.heads; ++k) s += z[k][r];
        out[i].push_back(elu_ref(s / static_cast<double>(c.heads)));
      }
    } else {
      for (std::size_t k = 0; k < c.heads; ++k) {
        for (std::size_t r = 0; r < f; ++r) out[i].push_back(elu_ref(z[k][r]));
      }
    }
  }
  return out;
}

// Plain GAT layer: one projection W per head and a = [a_self | a_nbr].
inline Rows gat_layer(const HeteroGraph& g, const Rows& in, const std::vector<Matrix>& w,
               const std::vector<Vector>& a) {
  const std::size_t heads = w.size();
  const auto f = static_cast<std::size_t>(w[0].rows());
  Rows out(g.total_nodes());
  for (std::uint32_t i = 0; i < g.total_nodes(); ++i) {
    const auto nbrs = full_neighbors(g, i);
    std::vector<double> acc(f, 0.0);
    for (std::size_t k = 0; k < heads; ++k) {
      const auto wi = apply(w[k], in[i]);
      std::vector<double> e;
      for (auto j : nbrs) {
        const auto wj = apply(w[k], in[j]);
        double s = 0.0;
        for (std::size_t r = 0; r < f; ++r) s += a[k][r] * wi[r] + a[k][f + r] * wj[r];
        e.push_back(std::exp(lrelu(s)));
      }
      const double total = std::accumulate(e.begin(), e.end(), 0.0);
      for (std::size_t j = 0; j < nbrs.size(); ++j) {
        const auto wj = apply(w[k], in[nbrs[j]]);
        for (std::size_t r = 0; r < f; ++r) acc[r] += e[j] / total * wj[r];
      }
    }
    for (double x : acc) out[i].push_back(elu_ref(x / static_cast<double>(heads)));
  }
  return out;
}

inline double max_gap(const HeteroGraph& g, const Blocks& got, const Rows& want) {
  double worst = 0.0;
  for (std::uint32_t v = 0; v < g.total_nodes(); ++v) {
    const NodeKind k = g.kind_of(v);
    const Matrix& m = got[static_cast<std::size_t>(k)];
    const auto r = static_cast<Eigen::Index>(v - g.offset(k));
    if (static_cast<std::size_t>(m.cols()) != want[v].size()) {
      return std::numeric_limits<double>::infinity();
    }
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      worst = std::max(worst, std::abs(m(r, c) - want[v][c]));
    }
  }
  return worst;
}

inline std::size_t max_degree(const HeteroGraph& g) {
  std::size_t d = 1;
  for (std::uint32_t v = 0; v < g.total_nodes(); ++v) d = std::max(d, g.neighbors(v).size());
  return d;
}

inline HeteroGraph random_toy(std::uint64_t seed) {
  SynthConfig s;
  std::mt19937_64 rng(seed);
  s.region_sizes = {2 + uniform_index(rng, 3)};
  s.doctors = 3 + uniform_index(rng, 3);
  s.services = 3 + uniform_index(rng, 4);
  s.specialties = 2;
  s.claims_min = 2;
  s.claims_max = 4;
  return synthesize(s, seed).first;
}

}  // namespace hfdl::reference

#endif  // HFDL_TESTS_REFERENCE_GAT_HPP_
