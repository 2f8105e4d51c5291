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

// hetero-fdl: run experiments, compare metric files, check topologies.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "hfdl/error.hpp"
#include "hfdl/experiment.hpp"
#include "hfdl/topology.hpp"

namespace {

int report_error(const hfdl::Error& e) {
  std::cerr << "error: " << hfdl::error_code_name(e.code()) << ": " << e.what() << '\n';
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heterogeneous graph attention with federated decentralized training"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run one experiment from a config file");
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> mode;
  run->add_option("--config", config_path, "JSON config")->required();
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--out", out_dir, "Override the output directory");
  run->add_option("--mode", mode, "Override the mode")
      ->check(CLI::IsMember({"local", "global", "fdl"}));

  auto* report = app.add_subcommand("report", "Compare metrics.csv files per region");
  std::vector<std::string> files;
  std::string csv_out;
  report->add_option("files", files, "metrics.csv files")->required()->expected(2, -1);
  report->add_option("--csv", csv_out, "Also write the table as CSV");

  auto* topo = app.add_subcommand("validate-topology", "Validate a consensus matrix file");
  std::string topo_path;
  topo->add_option("file", topo_path, "Topology file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      hfdl::RunConfig config = hfdl::parse_config(config_path);
      if (seed) config.seed = *seed;
      if (out_dir) config.output_dir = *out_dir;
      if (mode) config.mode = hfdl::parse_mode(*mode);
      const auto result = hfdl::run_experiment(config);
      const auto& last = result.run.records.back();
      std::printf("%s %s: %zu rounds, stationarity %.6g, consensus %.6g, %.1fs -> %s\n",
                  std::string(hfdl::workload_name(config.workload)).c_str(),
                  std::string(hfdl::mode_name(config.mode)).c_str(), config.rounds,
                  last.stationarity, last.consensus_error, result.seconds,
                  config.output_dir.c_str());
      for (const auto& r : result.regions) {
        std::printf("  region %zu (%s): recall %.4f auc %.4f\n", r.region, r.name.c_str(),
                    r.recall, r.auc);
      }
    } else if (*report) {
      const auto rep = hfdl::compare_report_files(files);
      std::cout << rep.text();
      if (!csv_out.empty()) {
        std::ofstream f(csv_out);
        if (!f) throw hfdl::Error(hfdl::ErrorCode::kIoError, "cannot write '" + csv_out + "'");
        f << rep.csv();
      }
    } else if (*topo) {
      hfdl::ConsensusMatrix w = [&] {
        try {
          return hfdl::validate_consensus(hfdl::read_topology(topo_path));
        } catch (const hfdl::Error& e) {
          throw hfdl::Error(e.code(), "topology.validate: " + std::string(e.what()));
        }
      }();
      std::printf("valid: m=%zu lambda=%.17g step_size_bound(L=1)=%.6g\n", w.m(), w.lambda(),
                  hfdl::step_size_bound(1.0, w.lambda(), w.m()));
    }
  } catch (const hfdl::Error& e) {
    return report_error(e);
  } catch (const std::exception& e) {
    std::cerr << "error: Internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
