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

#ifndef HFDL_EXPERIMENT_HPP_
#define HFDL_EXPERIMENT_HPP_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hfdl/ehr_graph.hpp"
#include "hfdl/features.hpp"
#include "hfdl/fdl.hpp"
#include "hfdl/hgat.hpp"
#include "hfdl/objectives.hpp"
#include "hfdl/synth.hpp"

namespace hfdl {

enum class Workload { kHgat, kQuadratic, kLogistic };

struct RunConfig {
  // required
  Workload workload = Workload::kHgat;
  Mode mode = Mode::kFdl;
  std::uint64_t seed = 0;
  std::size_t rounds = 0;

  std::string output_dir = "out";
  std::string topology = "ring";  // file path or ring/path/complete/star
  double gamma = 0.0;             // 0: 0.9 x step-size bound
  std::size_t q = 0;
  std::size_t batch_size = 0;
  bool strict = false;
  double lipschitz = 0.0;  // 0: closed form, else power-iteration estimate
  std::size_t lipschitz_iterations = 8;
  std::size_t diagnostics_every = 1;
  std::size_t eval_every = 25;
  bool checkpoints = true;

  // quadratic / logistic
  std::size_t workers = 6;
  std::size_t dim = 10;
  std::size_t samples_per_worker = 256;
  double rho = 0.1;
  double row_norm = 0.5;
  double init_scale = 0.2;

  // hgat data
  std::string claims_path;  // empty: synthetic
  SynthConfig synth;
  double mask_fraction = 0.65;
  std::size_t candidates_min = 200;
  std::size_t candidates_max = 350;
  RecencyMethod recency = RecencyMethod::kLinear;
  FeatureScheme feature_scheme = FeatureScheme::kSeededGaussian;
  KindDims feature_dims = {16, 16, 16};

  // hgat model
  std::size_t hidden = 16;
  std::size_t heads = 2;
  std::size_t layers = 1;
  std::size_t type_dim = 0;
  HeadMerge merge = HeadMerge::kMean;
  ScoreMode score = ScoreMode::kDot;
  bool type_pair_attention = true;
  bool shared_projection = false;
  std::size_t sample_size = 10;
  LossWeights weights;
  bool pooled_auc = false;
};

// Flat JSON object. Unknown keys, wrong types and missing required keys
// (workload, mode, seed, rounds) are errors.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config(const std::string& path);
// Every key with its resolved value.
std::string config_to_json(const RunConfig& config);

std::string_view workload_name(Workload w);

struct RegionResult {
  std::size_t region = 0;
  std::string name;
  double recall = 0.0;
  double auc = 0.0;
  std::size_t patients = 0;
};

struct ExperimentResult {
  RunResult run;
  std::vector<std::size_t> units;
  std::vector<RegionResult> regions;  // hgat only
  double lambda = 0.0;
  double lipschitz = 0.0;
  bool lipschitz_estimated = false;
  double step_size_bound = 0.0;
  double gamma = 0.0;
  double slope = 0.0;
  double mean_error = 0.0;  // quadratic: ||xbar - mean(mu)||
  double seconds = 0.0;
  HgatConfig model_config;  // hgat only
};

// Runs without touching the filesystem (apart from reading inputs).
ExperimentResult execute(const RunConfig& config);

// Writes config.json, metrics.csv, summary.json and checkpoints into
// config.output_dir.
ExperimentResult run_experiment(const RunConfig& config);

std::string summary_json(const RunConfig& config, const ExperimentResult& result);

struct ReportColumn {
  std::string label;  // mode of the file
  std::string file;
  std::map<std::size_t, std::pair<double, double>> by_region;  // recall, auc
};

struct CompareReport {
  std::vector<std::size_t> regions;
  std::vector<ReportColumn> columns;
  struct Delta {
    std::string name;
    std::map<std::size_t, std::pair<double, double>> by_region;
  };
  std::vector<Delta> deltas;

  std::string text() const;
  std::string csv() const;
};

// Final evaluated recall/AUC per region of each metrics file.
ReportColumn read_metrics_column(std::istream& in, const std::string& file);
CompareReport compare_report(const std::vector<ReportColumn>& columns);
CompareReport compare_report_files(const std::vector<std::string>& paths);

}  // namespace hfdl

#endif  // HFDL_EXPERIMENT_HPP_
