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

#include "hfdl/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <set>
#include <sstream>

#include "json.hpp"

#include "hfdl/error.hpp"
#include "hfdl/rng.hpp"

namespace hfdl {
namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void type_error(const std::string& key, const char* expected) {
  fail(ErrorCode::kTypeError, "key '" + key + "' must be " + expected);
}

std::size_t as_size(const json& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    type_error(key, "a non-negative integer");
  }
  return v.get<std::size_t>();
}

double as_double(const json& v, const std::string& key) {
  if (!v.is_number()) type_error(key, "a number");
  return v.get<double>();
}

bool as_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) type_error(key, "a boolean");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& key) {
  if (!v.is_string()) type_error(key, "a string");
  return v.get<std::string>();
}

std::vector<std::size_t> as_sizes(const json& v, const std::string& key) {
  if (!v.is_array()) type_error(key, "an array of non-negative integers");
  std::vector<std::size_t> out;
  for (const auto& e : v) {
    if (!e.is_number_integer() || e.get<std::int64_t>() < 0) {
      type_error(key, "an array of non-negative integers");
    }
    out.push_back(e.get<std::size_t>());
  }
  return out;
}

template <typename E>
E as_enum(const json& v, const std::string& key,
          std::initializer_list<std::pair<const char*, E>> options) {
  const std::string s = as_string(v, key);
  std::string names;
  for (const auto& [name, value] : options) {
    if (s == name) return value;
    names += names.empty() ? name : std::string(", ") + name;
  }
  fail(ErrorCode::kInvalidConfig,
       "key '" + key + "': unknown value '" + s + "' (" + names + ")");
}

using Setter = std::function<void(const json&, const std::string&, RunConfig&)>;

const std::vector<std::pair<std::string, Setter>>& setters() {
  static const std::vector<std::pair<std::string, Setter>> table = {
      {"workload", [](const json& v, const std::string& k, RunConfig& c) {
         c.workload = as_enum<Workload>(v, k, {{"hgat", Workload::kHgat},
                                               {"quadratic", Workload::kQuadratic},
                                               {"logistic", Workload::kLogistic}});
       }},
      {"mode", [](const json& v, const std::string& k, RunConfig& c) {
         c.mode = as_enum<Mode>(v, k, {{"local", Mode::kLocal},
                                       {"global", Mode::kGlobal},
                                       {"fdl", Mode::kFdl}});
       }},
      {"seed", [](const json& v, const std::string& k, RunConfig& c) { c.seed = as_size(v, k); }},
      {"rounds", [](const json& v, const std::string& k, RunConfig& c) { c.rounds = as_size(v, k); }},
      {"output_dir", [](const json& v, const std::string& k, RunConfig& c) { c.output_dir = as_string(v, k); }},
      {"topology", [](const json& v, const std::string& k, RunConfig& c) { c.topology = as_string(v, k); }},
      {"gamma", [](const json& v, const std::string& k, RunConfig& c) { c.gamma = as_double(v, k); }},
      {"q", [](const json& v, const std::string& k, RunConfig& c) { c.q = as_size(v, k); }},
      {"batch_size", [](const json& v, const std::string& k, RunConfig& c) { c.batch_size = as_size(v, k); }},
      {"strict", [](const json& v, const std::string& k, RunConfig& c) { c.strict = as_bool(v, k); }},
      {"lipschitz", [](const json& v, const std::string& k, RunConfig& c) { c.lipschitz = as_double(v, k); }},
      {"lipschitz_iterations", [](const json& v, const std::string& k, RunConfig& c) { c.lipschitz_iterations = as_size(v, k); }},
      {"diagnostics_every", [](const json& v, const std::string& k, RunConfig& c) { c.diagnostics_every = as_size(v, k); }},
      {"eval_every", [](const json& v, const std::string& k, RunConfig& c) { c.eval_every = as_size(v, k); }},
      {"checkpoints", [](const json& v, const std::string& k, RunConfig& c) { c.checkpoints = as_bool(v, k); }},
      {"workers", [](const json& v, const std::string& k, RunConfig& c) { c.workers = as_size(v, k); }},
      {"dim", [](const json& v, const std::string& k, RunConfig& c) { c.dim = as_size(v, k); }},
      {"samples_per_worker", [](const json& v, const std::string& k, RunConfig& c) { c.samples_per_worker = as_size(v, k); }},
      {"rho", [](const json& v, const std::string& k, RunConfig& c) { c.rho = as_double(v, k); }},
      {"row_norm", [](const json& v, const std::string& k, RunConfig& c) { c.row_norm = as_double(v, k); }},
      {"init_scale", [](const json& v, const std::string& k, RunConfig& c) { c.init_scale = as_double(v, k); }},
      {"claims_path", [](const json& v, const std::string& k, RunConfig& c) { c.claims_path = as_string(v, k); }},
      {"synth_region_sizes", [](const json& v, const std::string& k, RunConfig& c) { c.synth.region_sizes = as_sizes(v, k); }},
      {"synth_doctors", [](const json& v, const std::string& k, RunConfig& c) { c.synth.doctors = as_size(v, k); }},
      {"synth_services", [](const json& v, const std::string& k, RunConfig& c) { c.synth.services = as_size(v, k); }},
      {"synth_specialties", [](const json& v, const std::string& k, RunConfig& c) { c.synth.specialties = as_size(v, k); }},
      {"synth_claims_min", [](const json& v, const std::string& k, RunConfig& c) { c.synth.claims_min = as_size(v, k); }},
      {"synth_claims_max", [](const json& v, const std::string& k, RunConfig& c) { c.synth.claims_max = as_size(v, k); }},
      {"synth_condition_claim_prob", [](const json& v, const std::string& k, RunConfig& c) { c.synth.condition_claim_prob = as_double(v, k); }},
      {"synth_home_region_prob", [](const json& v, const std::string& k, RunConfig& c) { c.synth.home_region_prob = as_double(v, k); }},
      {"synth_region_skew", [](const json& v, const std::string& k, RunConfig& c) { c.synth.region_skew = as_double(v, k); }},
      {"synth_repeat_prob", [](const json& v, const std::string& k, RunConfig& c) { c.synth.repeat_prob = as_double(v, k); }},
      {"synth_doctor_noise_prob", [](const json& v, const std::string& k, RunConfig& c) { c.synth.doctor_noise_prob = as_double(v, k); }},
      {"synth_pathway_prob", [](const json& v, const std::string& k, RunConfig& c) { c.synth.pathway_prob = as_double(v, k); }},
      {"mask_fraction", [](const json& v, const std::string& k, RunConfig& c) { c.mask_fraction = as_double(v, k); }},
      {"candidates_min", [](const json& v, const std::string& k, RunConfig& c) { c.candidates_min = as_size(v, k); }},
      {"candidates_max", [](const json& v, const std::string& k, RunConfig& c) { c.candidates_max = as_size(v, k); }},
      {"recency", [](const json& v, const std::string& k, RunConfig& c) {
         c.recency = as_enum<RecencyMethod>(v, k, {{"linear", RecencyMethod::kLinear},
                                                  {"log", RecencyMethod::kLog}});
       }},
      {"feature_scheme", [](const json& v, const std::string& k, RunConfig& c) {
         c.feature_scheme = as_enum<FeatureScheme>(
             v, k, {{"gaussian", FeatureScheme::kSeededGaussian},
                    {"onehot", FeatureScheme::kOneHotAttributes},
                    {"pmi", FeatureScheme::kPmiCooccurrence}});
       }},
      {"feature_dims", [](const json& v, const std::string& k, RunConfig& c) {
         const auto d = as_sizes(v, k);
         if (d.size() != kNodeKindCount) type_error(k, "an array of 3 integers (patient, doctor, service)");
         c.feature_dims = {d[0], d[1], d[2]};
       }},
      {"hidden", [](const json& v, const std::string& k, RunConfig& c) { c.hidden = as_size(v, k); }},
      {"heads", [](const json& v, const std::string& k, RunConfig& c) { c.heads = as_size(v, k); }},
      {"layers", [](const json& v, const std::string& k, RunConfig& c) { c.layers = as_size(v, k); }},
      {"type_dim", [](const json& v, const std::string& k, RunConfig& c) { c.type_dim = as_size(v, k); }},
      {"merge", [](const json& v, const std::string& k, RunConfig& c) {
         c.merge = as_enum<HeadMerge>(v, k, {{"mean", HeadMerge::kMean},
                                             {"concat", HeadMerge::kConcat}});
       }},
      {"score", [](const json& v, const std::string& k, RunConfig& c) {
         c.score = as_enum<ScoreMode>(v, k, {{"dot", ScoreMode::kDot},
                                             {"bilinear", ScoreMode::kBilinear}});
       }},
      {"type_pair_attention", [](const json& v, const std::string& k, RunConfig& c) { c.type_pair_attention = as_bool(v, k); }},
      {"shared_projection", [](const json& v, const std::string& k, RunConfig& c) { c.shared_projection = as_bool(v, k); }},
      {"sample_size", [](const json& v, const std::string& k, RunConfig& c) { c.sample_size = as_size(v, k); }},
      {"w_ds", [](const json& v, const std::string& k, RunConfig& c) { c.weights.ds = as_double(v, k); }},
      {"w_ss", [](const json& v, const std::string& k, RunConfig& c) { c.weights.ss = as_double(v, k); }},
      {"w_pd", [](const json& v, const std::string& k, RunConfig& c) { c.weights.pd = as_double(v, k); }},
      {"pooled_auc", [](const json& v, const std::string& k, RunConfig& c) { c.pooled_auc = as_bool(v, k); }},
  };
  return table;
}

void validate_config(const RunConfig& c) {
  auto bad = [](const std::string& why) { fail(ErrorCode::kInvalidConfig, why); };
  if (c.rounds == 0) bad("rounds must be >= 1");
  if (c.gamma < 0.0) bad("gamma must be >= 0");
  if (c.lipschitz < 0.0) bad("lipschitz must be >= 0");
  if (c.diagnostics_every == 0) bad("diagnostics_every must be >= 1");
  if (c.topology.empty()) bad("topology must name a file or a graph");
  if (c.output_dir.empty()) bad("output_dir must not be empty");
  switch (c.workload) {
    case Workload::kQuadratic:
    case Workload::kLogistic:
      if (c.workers == 0) bad("workers must be >= 1");
      if (c.dim == 0) bad("dim must be >= 1");
      if (c.workload == Workload::kLogistic && c.samples_per_worker == 0) {
        bad("samples_per_worker must be >= 1");
      }
      if (c.row_norm <= 0.0) bad("row_norm must be positive");
      break;
    case Workload::kHgat:
      if (!(c.mask_fraction > 0.0 && c.mask_fraction < 1.0)) bad("mask_fraction must lie in (0, 1)");
      if (c.candidates_min > c.candidates_max) bad("candidates_min exceeds candidates_max");
      if (c.sample_size == 0) bad("sample_size must be >= 1");
      if (c.hidden == 0 || c.heads == 0 || c.layers == 0) bad("hidden, heads and layers must be >= 1");
      validate_weights(c.weights);
      break;
  }
}

}  // namespace

std::string_view workload_name(Workload w) {
  switch (w) {
    case Workload::kHgat: return "hgat";
    case Workload::kQuadratic: return "quadratic";
    case Workload::kLogistic: return "logistic";
  }
  return "?";
}

RunConfig parse_config_text(const std::string& text) {
  json doc;
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    doc = json::object();
  } else {
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      fail(ErrorCode::kInvalidConfig, std::string("config is not valid JSON: ") + e.what());
    }
  }
  if (!doc.is_object()) fail(ErrorCode::kTypeError, "config must be a JSON object");
  RunConfig config;
  std::set<std::string> seen;
  for (const auto& [key, value] : doc.items()) {
    const auto& table = setters();
    const auto it = std::find_if(table.begin(), table.end(),
                                 [&](const auto& entry) { return entry.first == key; });
    if (it == table.end()) fail(ErrorCode::kUnknownKey, "unknown config key '" + key + "'");
    it->second(value, key, config);
    seen.insert(key);
  }
  std::string missing;
  for (const char* key : {"workload", "mode", "seed", "rounds"}) {
    if (!seen.count(key)) missing += missing.empty() ? key : std::string(", ") + key;
  }
  if (!missing.empty()) fail(ErrorCode::kMissingKey, "missing required keys: " + missing);
  validate_config(config);
  return config;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string config_to_json(const RunConfig& c) {
  auto enum_name = [](auto value, std::initializer_list<std::pair<const char*, decltype(value)>> opts) {
    for (const auto& [name, v] : opts) {
      if (v == value) return std::string(name);
    }
    return std::string("?");
  };
  json j;
  j["workload"] = std::string(workload_name(c.workload));
  j["mode"] = std::string(mode_name(c.mode));
  j["seed"] = c.seed;
  j["rounds"] = c.rounds;
  j["output_dir"] = c.output_dir;
  j["topology"] = c.topology;
  j["gamma"] = c.gamma;
  j["q"] = c.q;
  j["batch_size"] = c.batch_size;
  j["strict"] = c.strict;
  j["lipschitz"] = c.lipschitz;
  j["lipschitz_iterations"] = c.lipschitz_iterations;
  j["diagnostics_every"] = c.diagnostics_every;
  j["eval_every"] = c.eval_every;
  j["checkpoints"] = c.checkpoints;
  j["workers"] = c.workers;
  j["dim"] = c.dim;
  j["samples_per_worker"] = c.samples_per_worker;
  j["rho"] = c.rho;
  j["row_norm"] = c.row_norm;
  j["init_scale"] = c.init_scale;
  j["claims_path"] = c.claims_path;
  j["synth_region_sizes"] = c.synth.region_sizes;
  j["synth_doctors"] = c.synth.doctors;
  j["synth_services"] = c.synth.services;
  j["synth_specialties"] = c.synth.specialties;
  j["synth_claims_min"] = c.synth.claims_min;
  j["synth_claims_max"] = c.synth.claims_max;
  j["synth_condition_claim_prob"] = c.synth.condition_claim_prob;
  j["synth_home_region_prob"] = c.synth.home_region_prob;
  j["synth_region_skew"] = c.synth.region_skew;
  j["synth_repeat_prob"] = c.synth.repeat_prob;
  j["synth_pathway_prob"] = c.synth.pathway_prob;
  j["synth_doctor_noise_prob"] = c.synth.doctor_noise_prob;
  j["mask_fraction"] = c.mask_fraction;
  j["candidates_min"] = c.candidates_min;
  j["candidates_max"] = c.candidates_max;
  j["recency"] = enum_name(c.recency, {{"linear", RecencyMethod::kLinear}, {"log", RecencyMethod::kLog}});
  j["feature_scheme"] = enum_name(c.feature_scheme, {{"gaussian", FeatureScheme::kSeededGaussian},
                                                     {"onehot", FeatureScheme::kOneHotAttributes},
                                                     {"pmi", FeatureScheme::kPmiCooccurrence}});
  j["feature_dims"] = std::vector<std::size_t>(c.feature_dims.begin(), c.feature_dims.end());
  j["hidden"] = c.hidden;
  j["heads"] = c.heads;
  j["layers"] = c.layers;
  j["type_dim"] = c.type_dim;
  j["merge"] = enum_name(c.merge, {{"mean", HeadMerge::kMean}, {"concat", HeadMerge::kConcat}});
  j["score"] = enum_name(c.score, {{"dot", ScoreMode::kDot}, {"bilinear", ScoreMode::kBilinear}});
  j["type_pair_attention"] = c.type_pair_attention;
  j["shared_projection"] = c.shared_projection;
  j["sample_size"] = c.sample_size;
  j["w_ds"] = c.weights.ds;
  j["w_ss"] = c.weights.ss;
  j["w_pd"] = c.weights.pd;
  j["pooled_auc"] = c.pooled_auc;
  return j.dump(2) + "\n";
}

// --- Execution ---------------------------------------------------------------

namespace {

ConsensusMatrix resolve_topology(const std::string& spec, std::size_t m) {
  static const std::set<std::string> named = {"ring", "path", "complete", "star"};
  if (named.count(spec)) return metropolis_weights(named_graph(spec, m), m);
  const Matrix w = read_topology(spec);
  ConsensusMatrix c = validate_consensus(w);
  if (c.m() != m) {
    fail(ErrorCode::kConfigError, "topology has " + std::to_string(c.m()) +
                                      " workers, the workload has " + std::to_string(m));
  }
  return c;
}

std::vector<double> seeded_normal(std::size_t d, double scale, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 0x1a17));
  std::vector<double> x(d);
  for (auto& v : x) v = scale * standard_normal(rng);
  return x;
}

struct HgatWorkload {
  ClaimTable table;
  std::vector<std::vector<std::uint32_t>> region_patients;
  std::shared_ptr<const FeatureTable> features;
  std::vector<MaskedSplit> splits;  // per worker (one for global mode)
  std::vector<std::unique_ptr<HgatObjective>> objectives;
  HgatConfig model;
};

HgatConfig model_config(const RunConfig& c, const FeatureTable& f,
                        const HeteroGraph& g) {
  HgatConfig m;
  m.input_dims = {f.dim(NodeKind::kPatient), f.dim(NodeKind::kDoctor),
                  f.dim(NodeKind::kService)};
  m.hidden = c.hidden;
  m.heads = c.heads;
  m.layers = c.layers;
  m.type_dim = c.type_dim;
  m.merge = c.merge;
  m.score = c.score;
  m.type_pair_attention = c.type_pair_attention;
  m.shared_projection = c.shared_projection;
  m.specialty_classes = c.weights.ds > 0.0 ? g.specialty_count() : 0;
  m.service_classes = c.weights.ss > 0.0 ? g.node_count(NodeKind::kService) : 0;
  m.validate();
  return m;
}

HgatWorkload build_hgat(const RunConfig& c) {
  HgatWorkload w;
  w.table = c.claims_path.empty() ? synthesize_claims(c.synth, c.seed)
                                  : read_claims_csv(c.claims_path);
  const std::size_t regions = w.table.nodes.region_names.size();
  w.region_patients.resize(regions);
  for (std::uint32_t p = 0; p < w.table.nodes.patients.size(); ++p) {
    w.region_patients[w.table.nodes.patients[p].region].push_back(p);
  }
  MaskOptions mask;
  mask.fraction = c.mask_fraction;
  mask.candidates_min = c.candidates_min;
  mask.candidates_max = c.candidates_max;
  mask.seed = mix_seed(c.seed, 0xca4d);
  mask.build.recency = c.recency;

  // Features come from the pooled training graph so every shard sees the same
  // columns.
  MaskedSplit pooled = chronological_mask(w.table, mask);
  w.features = std::make_shared<FeatureTable>(init_features(
      pooled.graph, c.feature_scheme, c.feature_dims, mix_seed(c.seed, 0xfea)));
  w.model = model_config(c, *w.features, pooled.graph);

  SampleOptions opts;
  opts.patient_doctor = c.weights.pd > 0.0;
  opts.doctor_specialty = c.weights.ds > 0.0;
  opts.next_service = c.weights.ss > 0.0;
  auto add_objective = [&](MaskedSplit split, std::span<const bool> patients,
                           std::uint64_t key) {
    auto graph = std::make_shared<const HeteroGraph>(split.graph);
    auto plan = SamplingPlan::build(*graph, c.sample_size, c.layers, mix_seed(c.seed, key));
    auto samples = build_hgat_samples(*graph, patients, opts, mix_seed(c.seed, key + 1));
    w.objectives.push_back(std::make_unique<HgatObjective>(
        graph, w.features, w.model, std::move(plan), std::move(samples), c.weights));
    w.splits.push_back(std::move(split));
  };
  if (c.mode == Mode::kGlobal) {
    add_objective(std::move(pooled), {}, 0x6100);
  } else {
    for (std::size_t r = 0; r < regions; ++r) {
      auto flags = std::make_unique<bool[]>(w.table.nodes.patients.size());
      for (auto p : w.region_patients[r]) flags[p] = true;
      const std::span<const bool> mask_of(flags.get(), w.table.nodes.patients.size());
      add_objective(chronological_mask(w.table, mask, mask_of), mask_of, 0x7100 + 16 * r);
    }
  }
  return w;
}

double max_lipschitz(std::span<const LocalObjective* const> objs, bool& estimated,
                     std::span<const double> x0, const RunConfig& c) {
  double l = 0.0;
  estimated = false;
  for (const auto* o : objs) l = std::max(l, o->lipschitz());
  if (l > 0.0) return l;
  estimated = true;
  for (std::size_t i = 0; i < objs.size(); ++i) {
    l = std::max(l, estimate_lipschitz(*objs[i], x0, c.lipschitz_iterations,
                                       mix_seed(c.seed, 0x11c + i)));
  }
  return l;
}

}  // namespace

ExperimentResult execute(const RunConfig& config) {
  validate_config(config);
  const auto start = std::chrono::steady_clock::now();
  ExperimentResult result;

  std::vector<QuadraticObjective> quad;
  std::vector<LogisticNonconvexObjective> logi;
  HgatWorkload hgat;
  std::vector<const LocalObjective*> objs;
  std::vector<double> x0;
  Vector mean_mu;

  switch (config.workload) {
    case Workload::kQuadratic: {
      quad = make_quadratic_shards(config.workers, config.dim, config.seed);
      mean_mu = Vector::Zero(static_cast<Eigen::Index>(config.dim));
      for (const auto& q : quad) mean_mu += q.mean_center();
      mean_mu /= static_cast<double>(quad.size());
      if (config.mode == Mode::kGlobal) {
        std::vector<Vector> centers;
        for (const auto& q : quad) centers.push_back(q.mean_center());
        quad = {QuadraticObjective(std::move(centers))};
      }
      for (const auto& q : quad) objs.push_back(&q);
      x0.assign(config.dim, 0.0);
      break;
    }
    case Workload::kLogistic: {
      logi = make_logistic_shards(config.workers, config.samples_per_worker, config.dim,
                                  config.rho, config.row_norm, config.seed);
      if (config.mode == Mode::kGlobal) {
        Matrix a(static_cast<Eigen::Index>(config.workers * config.samples_per_worker),
                 static_cast<Eigen::Index>(config.dim));
        std::vector<double> b;
        Eigen::Index row = 0;
        for (const auto& s : logi) {
          a.middleRows(row, s.features().rows()) = s.features();
          row += s.features().rows();
          b.insert(b.end(), s.labels().begin(), s.labels().end());
        }
        logi.clear();
        logi.emplace_back(std::move(a), std::move(b), config.rho);
      }
      for (const auto& o : logi) objs.push_back(&o);
      x0 = seeded_normal(config.dim, config.init_scale, config.seed);
      break;
    }
    case Workload::kHgat: {
      hgat = build_hgat(config);
      for (const auto& o : hgat.objectives) objs.push_back(o.get());
      x0 = flatten(HgatParams::random(hgat.model, mix_seed(config.seed, 0x1417))).values;
      break;
    }
  }

  const std::size_t m = objs.size();
  std::optional<ConsensusMatrix> w;
  if (config.mode == Mode::kFdl) {
    try {
      w = resolve_topology(config.topology, m);
    } catch (const Error& e) {
      fail(e.code(), "topology.validate: " + std::string(e.what()));
    }
    result.lambda = w->lambda();
  }
  if (config.lipschitz > 0.0) {
    result.lipschitz = config.lipschitz;
  } else {
    result.lipschitz = max_lipschitz(objs, result.lipschitz_estimated, x0, config);
  }
  // Local workers never mix, so each is bounded as a single node.
  const std::size_t bound_m = config.mode == Mode::kFdl ? m : 1;
  result.step_size_bound = step_size_bound(result.lipschitz, result.lambda, bound_m);
  result.gamma = config.gamma > 0.0 ? config.gamma : 0.9 * result.step_size_bound;

  FdlOptions opts;
  opts.gamma = result.gamma;
  opts.q = config.q;
  opts.batch = config.batch_size;
  opts.rounds = config.rounds;
  opts.seed = mix_seed(config.seed, 0x5eed);
  opts.diagnostics_every = config.diagnostics_every;
  opts.strict = config.strict && config.mode != Mode::kLocal;
  opts.lipschitz = result.lipschitz;
  if (config.strict && result.gamma > result.step_size_bound) {
    fail(ErrorCode::kStepSizeExceedsBound,
         "gamma " + std::to_string(result.gamma) + " exceeds bound " +
             std::to_string(result.step_size_bound));
  }

  RunHooks hooks;
  if (config.workload == Workload::kHgat) {
    const std::size_t regions = hgat.region_patients.size();
    if (config.mode == Mode::kGlobal) {
      for (std::size_t r = 0; r < regions; ++r) result.units.push_back(r);
    } else {
      for (std::size_t i = 0; i < m; ++i) result.units.push_back(i);
    }
    hooks.eval_every = config.eval_every;
    hooks.evaluate = [&](std::size_t, const std::vector<WorkerState>& states) {
      std::vector<UnitMetrics> out;
      for (std::size_t r = 0; r < regions; ++r) {
        const std::size_t worker = config.mode == Mode::kGlobal ? 0 : r;
        const auto& obj = *hgat.objectives[worker];
        const auto queries = rank_candidates(obj.model(), states[worker].x,
                                             hgat.splits[worker], hgat.region_patients[r]);
        const auto metrics = evaluate_ranking(queries, config.pooled_auc);
        out.push_back({r, metrics.recall, metrics.auc});
      }
      return out;
    };
  } else {
    const std::size_t units = config.mode == Mode::kGlobal ? 1 : m;
    for (std::size_t i = 0; i < units; ++i) result.units.push_back(i);
  }

  result.run = run(config.mode, objs, w ? &*w : nullptr, x0, opts, hooks);

  const auto series = running_average_stationarity(result.run.records);
  const double hi = static_cast<double>(config.rounds);
  result.slope = fit_loglog_slope(series, std::min(100.0, std::max(1.0, hi / 10.0)), hi);

  if (config.workload == Workload::kQuadratic) {
    const auto xbar = mean_of_rows(result.run.final_x);
    double e = 0.0;
    for (std::size_t c = 0; c < xbar.size(); ++c) {
      const double d = xbar[c] - mean_mu(static_cast<Eigen::Index>(c));
      e += d * d;
    }
    result.mean_error = std::sqrt(e);
  }
  if (config.workload == Workload::kHgat && !result.run.records.empty()) {
    const auto& last = result.run.records.back();
    for (const auto& um : last.metrics) {
      RegionResult rr;
      rr.region = um.unit;
      rr.name = hgat.table.nodes.region_names[um.unit];
      rr.recall = um.recall;
      rr.auc = um.auc;
      rr.patients = hgat.region_patients[um.unit].size();
      result.regions.push_back(rr);
    }
  }
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.model_config = hgat.model;
  return result;
}

std::string summary_json(const RunConfig& config, const ExperimentResult& r) {
  json j;
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  j["workload"] = std::string(workload_name(config.workload));
  j["mode"] = std::string(mode_name(config.mode));
  j["seed"] = config.seed;
  j["rounds"] = config.rounds;
  j["workers"] = r.run.final_x.size();
  j["lambda"] = r.lambda;
  j["lipschitz"] = r.lipschitz;
  j["lipschitz_estimated"] = r.lipschitz_estimated;
  j["step_size_bound"] = r.step_size_bound;
  j["gamma"] = r.gamma;
  j["strict"] = config.strict;
  j["strict_honored"] = r.gamma <= r.step_size_bound;
  j["q"] = r.run.q;
  j["batch_size"] = r.run.batch;
  const auto& last = r.run.records.back();
  j["final_stationarity"] = last.stationarity;
  j["final_consensus_error"] = last.consensus_error;
  j["final_grad_norm_sq"] = last.grad_norm_sq;
  j["max_tracking_gap"] = r.run.max_tracking_gap;
  j["stationarity_slope"] = num(r.slope);
  if (config.workload == Workload::kQuadratic) j["mean_error"] = r.mean_error;
  json regions = json::array();
  for (const auto& rr : r.regions) {
    json e;
    e["region"] = rr.region;
    e["name"] = rr.name;
    e["patients"] = rr.patients;
    e["recall"] = rr.recall;
    e["auc"] = rr.auc;
    regions.push_back(e);
  }
  j["regions"] = regions;
  j["seconds"] = r.seconds;
  return j.dump(2) + "\n";
}

ExperimentResult run_experiment(const RunConfig& config) {
  namespace fs = std::filesystem;
  validate_config(config);
  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec) {
    fail(ErrorCode::kIoError, "cannot create output directory '" + config.output_dir +
                                  "': " + ec.message());
  }
  const fs::path out(config.output_dir);
  auto open = [&](const std::string& name, std::ios::openmode mode = std::ios::out) {
    std::ofstream f(out / name, mode);
    if (!f) fail(ErrorCode::kIoError, "cannot write '" + (out / name).string() + "'");
    return f;
  };
  {
    auto f = open("config.json");
    f << config_to_json(config);
  }
  ExperimentResult result = execute(config);
  {
    auto f = open("metrics.csv", std::ios::out | std::ios::binary);
    write_metrics_csv(f, config.mode, result.run.records, result.units);
  }
  if (config.checkpoints && config.workload == Workload::kHgat) {
    const auto layout = ParamLayout::for_config(result.model_config);
    for (std::size_t i = 0; i < result.run.final_x.size(); ++i) {
      auto f = open("worker" + std::to_string(i) + ".ckpt", std::ios::out | std::ios::binary);
      ParamVector v;
      v.values = result.run.final_x[i];
      v.layout = layout;
      save_checkpoint(v, f);
    }
  }
  {
    auto f = open("summary.json");
    f << summary_json(config, result);
  }
  return result;
}

// --- Reports -----------------------------------------------------------------

ReportColumn read_metrics_column(std::istream& in, const std::string& file) {
  ReportColumn col;
  col.file = file;
  std::string line;
  if (!std::getline(in, line) ||
      line != "round,mode,worker,loss,consensus_error,grad_norm_sq,stationarity,recall,auc") {
    fail(ErrorCode::kIoError, "'" + file + "' is not a metrics file");
  }
  std::map<std::size_t, std::size_t> latest_round;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (!line.empty() && line.back() == ',') f.push_back("");
    if (f.size() != 9) fail(ErrorCode::kIoError, "'" + file + "': malformed row '" + line + "'");
    col.label = f[1];
    if (f[7].empty() || f[8].empty()) continue;
    const std::size_t round = std::stoull(f[0]);
    const std::size_t unit = std::stoull(f[2]);
    auto it = latest_round.find(unit);
    if (it == latest_round.end() || round >= it->second) {
      latest_round[unit] = round;
      col.by_region[unit] = {std::stod(f[7]), std::stod(f[8])};
    }
  }
  if (col.by_region.empty()) {
    fail(ErrorCode::kIoError, "'" + file + "' holds no evaluated rounds");
  }
  return col;
}

CompareReport compare_report(const std::vector<ReportColumn>& columns) {
  if (columns.size() < 2) fail(ErrorCode::kConfigError, "report needs at least two metric files");
  CompareReport rep;
  for (const auto& [r, v] : columns[0].by_region) rep.regions.push_back(r);
  for (const auto& c : columns) {
    std::vector<std::size_t> regions;
    for (const auto& [r, v] : c.by_region) regions.push_back(r);
    if (regions != rep.regions) {
      fail(ErrorCode::kRegionMismatch, "'" + c.file + "' covers different regions than '" +
                                           columns[0].file + "'");
    }
  }
  rep.columns = columns;
  auto find = [&](const std::string& label) -> const ReportColumn* {
    for (const auto& c : columns) {
      if (c.label == label) return &c;
    }
    return nullptr;
  };
  auto diff = [&](const std::string& name, const ReportColumn& a, const ReportColumn& b) {
    CompareReport::Delta d;
    d.name = name;
    for (auto r : rep.regions) {
      d.by_region[r] = {a.by_region.at(r).first - b.by_region.at(r).first,
                        a.by_region.at(r).second - b.by_region.at(r).second};
    }
    rep.deltas.push_back(std::move(d));
  };
  const auto* fdl = find("fdl");
  const auto* local = find("local");
  const auto* global = find("global");
  if (fdl && local) diff("fdl-local", *fdl, *local);
  if (global && fdl) diff("global-fdl", *global, *fdl);
  for (std::size_t k = 1; k < columns.size(); ++k) {
    diff("file" + std::to_string(k + 1) + "-file1", columns[k], columns[0]);
  }
  return rep;
}

CompareReport compare_report_files(const std::vector<std::string>& paths) {
  std::vector<ReportColumn> cols;
  for (const auto& p : paths) {
    std::ifstream in(p);
    if (!in) fail(ErrorCode::kIoError, "cannot open '" + p + "'");
    cols.push_back(read_metrics_column(in, p));
  }
  return compare_report(cols);
}

std::string CompareReport::text() const {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << std::left << std::setw(8) << "region" << std::setw(14) << "mode"
      << std::right << std::setw(10) << "recall" << std::setw(10) << "auc" << '\n';
  for (auto r : regions) {
    for (const auto& c : columns) {
      const auto& [rec, a] = c.by_region.at(r);
      out << std::left << std::setw(8) << r << std::setw(14) << c.label << std::right
          << std::setw(10) << rec << std::setw(10) << a << '\n';
    }
    for (const auto& d : deltas) {
      const auto& [rec, a] = d.by_region.at(r);
      out << std::left << std::setw(8) << r << std::setw(14) << d.name << std::right
          << std::showpos << std::setw(10) << rec << std::setw(10) << a << std::noshowpos
          << '\n';
    }
  }
  return out.str();
}

std::string CompareReport::csv() const {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "region,row,recall,auc\n";
  for (auto r : regions) {
    for (const auto& c : columns) {
      out << r << ',' << c.label << ',' << c.by_region.at(r).first << ','
          << c.by_region.at(r).second << '\n';
    }
    for (const auto& d : deltas) {
      out << r << ',' << d.name << ',' << d.by_region.at(r).first << ','
          << d.by_region.at(r).second << '\n';
    }
  }
  return out.str();
}

}  // namespace hfdl
