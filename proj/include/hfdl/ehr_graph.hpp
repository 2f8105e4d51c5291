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

#ifndef HFDL_EHR_GRAPH_HPP_
#define HFDL_EHR_GRAPH_HPP_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hfdl {

enum class NodeKind : std::uint8_t { kPatient = 0, kDoctor = 1, kService = 2 };
inline constexpr std::size_t kNodeKindCount = 3;

enum class ServiceType : std::uint8_t { kDx = 0, kPx = 1, kRx = 2 };
inline constexpr std::size_t kServiceTypeCount = 3;

enum class EdgeKind : std::uint8_t {
  kPatientService = 0,
  kDoctorService = 1,
  kServiceService = 2,
  kPatientDoctor = 3,
};
inline constexpr std::size_t kEdgeKindCount = 4;

enum class RecencyMethod { kLinear, kLog };

std::string_view node_kind_name(NodeKind kind);
std::string_view edge_kind_name(EdgeKind kind);
std::string_view service_type_name(ServiceType type);
// Accepts "dx", "px", "rx"; throws UnknownServiceType otherwise.
ServiceType parse_service_type(std::string_view text);

struct NodeRef {
  NodeKind kind = NodeKind::kPatient;
  std::optional<ServiceType> service_subtype;
  std::uint32_t index = 0;

  friend bool operator==(const NodeRef&, const NodeRef&) = default;
};

struct Edge {
  NodeRef src;
  NodeRef dst;
  EdgeKind kind = EdgeKind::kPatientService;
  std::int64_t timestamp = 0;  // days since 1970-01-01
  double weight = 0.0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

struct PatientAttributes {
  std::string id;
  int age = 0;
  char sex = 'U';  // M, F or U
  std::uint32_t region = 0;

  friend bool operator==(const PatientAttributes&,
                         const PatientAttributes&) = default;
};

struct DoctorAttributes {
  std::string id;
  std::uint32_t specialty = 0;
  std::uint32_t region = 0;

  friend bool operator==(const DoctorAttributes&,
                         const DoctorAttributes&) = default;
};

struct ServiceAttributes {
  std::string code;
  ServiceType subtype = ServiceType::kDx;

  friend bool operator==(const ServiceAttributes&,
                         const ServiceAttributes&) = default;
};

// Node vocabularies shared by every graph built from the same claim source.
struct NodeTables {
  std::vector<PatientAttributes> patients;
  std::vector<DoctorAttributes> doctors;
  std::vector<ServiceAttributes> services;
  std::vector<std::string> region_names;
  std::vector<std::string> specialty_names;

  friend bool operator==(const NodeTables&, const NodeTables&) = default;
};

struct ClaimRecord {
  std::uint32_t patient = 0;
  std::uint32_t doctor = 0;
  std::uint32_t service = 0;
  std::int64_t day = 0;

  friend bool operator==(const ClaimRecord&, const ClaimRecord&) = default;
};

// The "source rows" of a graph: vocabularies plus claims in file order.
struct ClaimTable {
  NodeTables nodes;
  std::vector<ClaimRecord> claims;

  friend bool operator==(const ClaimTable&, const ClaimTable&) = default;
};

struct Neighbor {
  std::uint32_t node = 0;  // global node id
  std::uint32_t edge = 0;  // index into HeteroGraph::edges()
  double weight = 0.0;
};

// Typed, timestamped heterogeneous graph. Immutable once constructed.
//
// Nodes are addressed either by NodeRef or by a global id: patients occupy
// [0, P), doctors [P, P + D) and services [P + D, P + D + S).
class HeteroGraph {
 public:
  HeteroGraph() = default;
  // Validates endpoints, edge kinds and weights, then builds adjacency.
  // Undirected kinds are mirrored; ServiceService stays directed src -> dst.
  HeteroGraph(NodeTables nodes, std::vector<Edge> edges);

  const NodeTables& nodes() const { return nodes_; }
  std::span<const Edge> edges() const { return edges_; }

  std::size_t node_count(NodeKind kind) const;
  std::size_t total_nodes() const { return offsets_[kNodeKindCount]; }
  std::uint32_t offset(NodeKind kind) const {
    return offsets_[static_cast<std::size_t>(kind)];
  }
  std::uint32_t global_id(const NodeRef& ref) const;
  NodeRef node_ref(std::uint32_t global) const;
  NodeKind kind_of(std::uint32_t global) const;
  bool contains(const NodeRef& ref) const;

  std::span<const Neighbor> neighbors(std::uint32_t global) const;
  std::span<const Neighbor> neighbors(std::uint32_t global,
                                      EdgeKind kind) const;

  std::size_t region_count() const { return nodes_.region_names.size(); }
  std::size_t specialty_count() const {
    return nodes_.specialty_names.size();
  }

  friend bool operator==(const HeteroGraph& a, const HeteroGraph& b) {
    return a.nodes_ == b.nodes_ && a.edges_ == b.edges_;
  }

 private:
  NodeTables nodes_;
  std::vector<Edge> edges_;
  std::uint32_t offsets_[kNodeKindCount + 1] = {0, 0, 0, 0};
  // CSR adjacency, each node's slice ordered by edge kind.
  std::vector<std::uint32_t> adj_begin_;
  std::vector<std::uint32_t> kind_begin_;  // (node, kind) -> start in adj_
  std::vector<Neighbor> adj_;
};

struct GraphBuildOptions {
  RecencyMethod recency = RecencyMethod::kLinear;
};

// Builds the graph for the claims selected by `include` (all claims when
// empty). Node tables always cover the full vocabulary of `table`, and the
// recency window spans every claim of `table`, so shards built from one
// table share node ids and edge-weight scales.
HeteroGraph build_graph(const ClaimTable& table,
                        const GraphBuildOptions& options = {},
                        std::span<const bool> include = {});

// CSV columns, in order:
// patient_id,doctor_id,service_code,service_type,timestamp,patient_age,
// patient_sex,patient_region,doctor_specialty,doctor_region
ClaimTable read_claims_csv(std::istream& in);
ClaimTable read_claims_csv(const std::string& path);
void write_claims_csv(const ClaimTable& table, std::ostream& out);

HeteroGraph ingest_claims(const std::string& path,
                          const GraphBuildOptions& options = {});

std::int64_t parse_iso_date(std::string_view text);
std::string format_iso_date(std::int64_t days);

double edge_recency_weight(std::int64_t timestamp, std::int64_t t_min,
                           std::int64_t t_max, RecencyMethod method);

// Roulette sampling with replacement, proportional to edge weight.
std::vector<NodeRef> sample_neighbors(const HeteroGraph& graph,
                                      const NodeRef& node, std::size_t k,
                                      std::uint64_t seed);
// Same draw as sample_neighbors, expressed in global ids.
std::vector<std::uint32_t> sample_neighbor_ids(const HeteroGraph& graph,
                                               std::uint32_t global,
                                               std::size_t k,
                                               std::uint64_t seed);

struct MaskOptions {
  double fraction = 0.65;
  std::size_t candidates_min = 200;
  std::size_t candidates_max = 350;
  std::uint64_t seed = 0;
  GraphBuildOptions build;
};

struct MaskedSplit {
  HeteroGraph graph;
  // Indexed by patient. Sorted doctor indices.
  std::vector<std::vector<std::uint32_t>> positives;
  std::vector<std::vector<std::uint32_t>> candidates;
  std::vector<std::size_t> head_claims;
  std::vector<std::size_t> total_claims;
  double mask_fraction = 0.0;
};

// Per patient (optionally restricted to `patients`), the earliest
// ceil(fraction * len) claims (clamped to [1, len - 1]) build the graph;
// doctors that only appear in the remaining tail become positives.
MaskedSplit chronological_mask(const ClaimTable& table,
                               const MaskOptions& options,
                               std::span<const bool> patients = {});

// Number of claims kept in the graph for a patient with `len` claims.
std::size_t head_length(std::size_t len, double fraction);

void save_graph(const HeteroGraph& graph, std::ostream& out);
HeteroGraph load_graph(std::istream& in);

}  // namespace hfdl

#endif  // HFDL_EHR_GRAPH_HPP_
