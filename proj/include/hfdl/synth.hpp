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

#ifndef HFDL_SYNTH_HPP_
#define HFDL_SYNTH_HPP_

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "hfdl/ehr_graph.hpp"

namespace hfdl {

// Generator for EHR-shaped claim tables with planted structure:
//  - every specialty owns a contiguous cluster of services, and doctors of a
//    specialty bill services from that cluster;
//  - specialty 0 is general practice, visited by every patient;
//  - each patient has one condition specialty whose prevalence is skewed by
//    region, so regional shards are non-iid.
struct SynthConfig {
  std::vector<std::size_t> region_sizes = {145, 158, 177, 207, 147, 171};
  std::size_t doctors = 480;
  std::size_t services = 96;
  std::size_t specialties = 8;
  std::size_t claims_min = 22;
  std::size_t claims_max = 28;
  // Probability that a claim belongs to the patient's condition specialty
  // rather than general practice.
  double condition_claim_prob = 0.7;
  // Probability that a doctor is drawn from the patient's own region.
  double home_region_prob = 0.85;
  // Weight multiplier for a region's favoured conditions.
  double region_skew = 6.0;
  // Probability that an early claim revisits an already-seen doctor. Only
  // claims in the first `repeat_window` fraction of a history may repeat.
  double repeat_prob = 0.15;
  double repeat_window = 0.6;
  // Probability that the next service continues the cluster's care pathway.
  double pathway_prob = 0.6;
  // Probability that a claim's doctor is drawn uniformly from all doctors,
  // ignoring specialty and region. The service is unaffected, so patient-service
  // links stay informative while patient-doctor links get noisier.
  double doctor_noise_prob = 0.0;
  std::int64_t first_day = 14610;  // 2010-01-01
  std::int64_t span_days = 1750;
};

std::size_t total_patients(const SynthConfig& config);

ClaimTable synthesize_claims(const SynthConfig& config, std::uint64_t seed);

// Graph over every synthetic claim plus the region of each patient.
std::pair<HeteroGraph, std::vector<std::uint32_t>> synthesize(
    const SynthConfig& config, std::uint64_t seed,
    const GraphBuildOptions& options = {});

// First service index of specialty s's cluster (clusters are contiguous).
std::size_t cluster_begin(const SynthConfig& config, std::size_t specialty);

}  // namespace hfdl

#endif  // HFDL_SYNTH_HPP_
