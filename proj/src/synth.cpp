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

#include "hfdl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <string>

#include "hfdl/error.hpp"
#include "hfdl/rng.hpp"

namespace hfdl {
namespace {

std::string padded(const char* prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*zu", prefix, width, i);
  return buf;
}

void validate(const SynthConfig& c) {
  if (c.region_sizes.empty()) {
    fail(ErrorCode::kInvalidConfig, "synth: at least one region required");
  }
  for (std::size_t s : c.region_sizes) {
    if (s == 0) fail(ErrorCode::kInvalidConfig, "synth: region of size 0");
  }
  if (c.doctors == 0 || c.services == 0) {
    fail(ErrorCode::kInvalidConfig, "synth: doctor and service counts must be > 0");
  }
  if (c.specialties < 2) {
    fail(ErrorCode::kInvalidConfig, "synth: need general practice plus one specialty");
  }
  if (c.services < c.specialties || c.doctors < c.specialties) {
    fail(ErrorCode::kInvalidConfig,
         "synth: every specialty needs a doctor and a service");
  }
  if (c.claims_min < 2 || c.claims_min > c.claims_max) {
    fail(ErrorCode::kInvalidConfig, "synth: claims range is empty or below 2");
  }
  if (c.span_days < 1) fail(ErrorCode::kInvalidConfig, "synth: span_days < 1");
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(c.condition_claim_prob) || !prob(c.home_region_prob) ||
      !prob(c.repeat_prob) || !prob(c.repeat_window) || !prob(c.pathway_prob) ||
      !prob(c.doctor_noise_prob) ||
      !(c.region_skew > 0.0)) {
    fail(ErrorCode::kInvalidConfig, "synth: probabilities must lie in [0, 1]");
  }
}

std::size_t weighted_pick(std::mt19937_64& rng, const std::vector<double>& w) {
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  double u = uniform_unit(rng) * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (u < w[i]) return i;
    u -= w[i];
  }
  return w.size() - 1;
}

}  // namespace

std::size_t total_patients(const SynthConfig& config) {
  return std::accumulate(config.region_sizes.begin(), config.region_sizes.end(),
                         std::size_t{0});
}

std::size_t cluster_begin(const SynthConfig& config, std::size_t specialty) {
  return specialty * config.services / config.specialties;
}

ClaimTable synthesize_claims(const SynthConfig& config, std::uint64_t seed) {
  validate(config);
  const std::size_t regions = config.region_sizes.size();
  const std::size_t specialties = config.specialties;
  std::mt19937_64 rng(mix_seed(seed, 0x5e7u));

  ClaimTable table;
  NodeTables& nodes = table.nodes;
  for (std::size_t r = 0; r < regions; ++r) {
    nodes.region_names.push_back("region" + std::to_string(r + 1));
  }
  nodes.specialty_names.push_back("general");
  for (std::size_t s = 1; s < specialties; ++s) {
    nodes.specialty_names.push_back(padded("spec", s, 2));
  }

  // Services: contiguous clusters, subtypes cycle dx -> px -> rx.
  for (std::size_t v = 0; v < config.services; ++v) {
    nodes.services.push_back(
        {padded("S", v, 4), static_cast<ServiceType>(v % kServiceTypeCount)});
  }
  auto cluster_of = [&](std::size_t specialty) {
    return std::pair{cluster_begin(config, specialty),
                     cluster_begin(config, specialty + 1)};
  };

  // Doctors: specialty cycles so each specialty is populated; regions cycle
  // within a specialty so each (specialty, region) cell gets doctors.
  std::vector<std::vector<std::vector<std::uint32_t>>> roster(
      specialties, std::vector<std::vector<std::uint32_t>>(regions));
  for (std::size_t d = 0; d < config.doctors; ++d) {
    const std::size_t specialty = d % specialties;
    const std::size_t region = (d / specialties) % regions;
    nodes.doctors.push_back({padded("D", d, 5),
                             static_cast<std::uint32_t>(specialty),
                             static_cast<std::uint32_t>(region)});
    roster[specialty][region].push_back(static_cast<std::uint32_t>(d));
  }

  // Regional condition prevalence: each region favours a rotating subset.
  std::vector<std::vector<double>> prevalence(regions,
                                              std::vector<double>(specialties));
  for (std::size_t r = 0; r < regions; ++r) {
    prevalence[r][0] = 0.0;
    for (std::size_t s = 1; s < specialties; ++s) {
      const bool favoured = ((s + r) % 3) == 0;
      prevalence[r][s] = favoured ? config.region_skew : 1.0;
    }
  }

  std::size_t patient = 0;
  for (std::size_t r = 0; r < regions; ++r) {
    for (std::size_t i = 0; i < config.region_sizes[r]; ++i, ++patient) {
      std::mt19937_64 prng(mix_seed(seed, 1000 + patient));
      PatientAttributes attrs;
      attrs.id = padded("P", patient, 5);
      attrs.age = 18 + static_cast<int>(uniform_index(prng, 73));
      attrs.sex = uniform_unit(prng) < 0.5 ? 'F' : 'M';
      attrs.region = static_cast<std::uint32_t>(r);
      nodes.patients.push_back(attrs);

      const std::size_t condition = weighted_pick(prng, prevalence[r]);
      const std::size_t len =
          config.claims_min +
          uniform_index(prng, config.claims_max - config.claims_min + 1);
      std::vector<std::int64_t> days(len);
      for (auto& day : days) {
        day = config.first_day +
              static_cast<std::int64_t>(uniform_index(
                  prng, static_cast<std::size_t>(config.span_days)));
      }
      std::sort(days.begin(), days.end());

      std::vector<std::uint32_t> seen;
      std::vector<bool> used(config.doctors, false);
      std::size_t last_service[2] = {SIZE_MAX, SIZE_MAX};
      for (std::size_t c = 0; c < len; ++c) {
        const bool on_condition = uniform_unit(prng) < config.condition_claim_prob;
        const std::size_t specialty = on_condition ? condition : 0;
        const auto [lo, hi] = cluster_of(specialty);
        std::size_t& last = last_service[on_condition ? 1 : 0];
        std::size_t service;
        if (last != SIZE_MAX && uniform_unit(prng) < config.pathway_prob) {
          service = lo + (last - lo + 1) % (hi - lo);
        } else {
          service = lo + uniform_index(prng, hi - lo);
        }
        last = service;

        std::uint32_t doctor = 0;
        const bool may_repeat =
            static_cast<double>(c) < config.repeat_window * static_cast<double>(len);
        std::vector<std::uint32_t> repeatable;
        for (auto d : seen) {
          if (nodes.doctors[d].specialty == specialty) repeatable.push_back(d);
        }
        if (config.doctor_noise_prob > 0.0 &&
            uniform_unit(prng) < config.doctor_noise_prob) {
          doctor = static_cast<std::uint32_t>(uniform_index(prng, config.doctors));
        } else if (may_repeat && !repeatable.empty() &&
                   uniform_unit(prng) < config.repeat_prob) {
          doctor = repeatable[uniform_index(prng, repeatable.size())];
        } else {
          const bool home = uniform_unit(prng) < config.home_region_prob;
          std::vector<std::uint32_t> pool;
          auto collect = [&](std::size_t region) {
            for (auto d : roster[specialty][region]) {
              if (!used[d]) pool.push_back(d);
            }
          };
          if (home) {
            collect(r);
          } else {
            for (std::size_t other = 0; other < regions; ++other) {
              if (other != r || regions == 1) collect(other);
            }
          }
          if (pool.empty()) {
            for (std::size_t any = 0; any < regions; ++any) collect(any);
          }
          if (pool.empty()) {
            for (std::uint32_t d = 0; d < config.doctors; ++d) {
              if (!used[d]) pool.push_back(d);
            }
          }
          if (pool.empty()) {
            doctor = seen[uniform_index(prng, seen.size())];
          } else {
            doctor = pool[uniform_index(prng, pool.size())];
          }
        }
        if (!used[doctor]) {
          used[doctor] = true;
          seen.push_back(doctor);
        }
        table.claims.push_back({static_cast<std::uint32_t>(patient), doctor,
                                static_cast<std::uint32_t>(service), days[c]});
      }
    }
  }
  return table;
}

std::pair<HeteroGraph, std::vector<std::uint32_t>> synthesize(
    const SynthConfig& config, std::uint64_t seed,
    const GraphBuildOptions& options) {
  ClaimTable table = synthesize_claims(config, seed);
  std::vector<std::uint32_t> regions;
  regions.reserve(table.nodes.patients.size());
  for (const auto& p : table.nodes.patients) regions.push_back(p.region);
  return {build_graph(table, options), std::move(regions)};
}

}  // namespace hfdl
