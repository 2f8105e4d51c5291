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

#include "hfdl/ehr_graph.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>
#include <utility>

#include "hfdl/error.hpp"
#include "hfdl/rng.hpp"

namespace hfdl {
namespace {

constexpr const char* kCsvColumns[] = {
    "patient_id",     "doctor_id",     "service_code",    "service_type",
    "timestamp",      "patient_age",   "patient_sex",     "patient_region",
    "doctor_specialty", "doctor_region"};
constexpr std::size_t kCsvColumnCount = 10;

bool edge_endpoints_match(EdgeKind kind, NodeKind src, NodeKind dst) {
  switch (kind) {
    case EdgeKind::kPatientService:
      return src == NodeKind::kPatient && dst == NodeKind::kService;
    case EdgeKind::kDoctorService:
      return src == NodeKind::kDoctor && dst == NodeKind::kService;
    case EdgeKind::kServiceService:
      return src == NodeKind::kService && dst == NodeKind::kService;
    case EdgeKind::kPatientDoctor:
      return src == NodeKind::kPatient && dst == NodeKind::kDoctor;
  }
  return false;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' ||
                        s.front() == '\r' || s.front() == '\n')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' ||
                        s.back() == '\r' || s.back() == '\n')) {
    s.remove_suffix(1);
  }
  return s;
}

// Splits one CSV line; double-quoted fields may contain commas and "".
std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::string(trim(current)));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  fields.push_back(std::string(trim(current)));
  return fields;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

template <typename Map>
std::uint32_t intern(Map& index, std::vector<std::string>& names,
                     const std::string& key) {
  auto [it, inserted] =
      index.try_emplace(key, static_cast<std::uint32_t>(names.size()));
  if (inserted) names.push_back(key);
  return it->second;
}

// Claim indices grouped by patient, each group in chronological order with
// same-day ties kept in file order.
std::vector<std::vector<std::size_t>> claims_by_patient(
    const ClaimTable& table, std::span<const bool> include) {
  std::vector<std::vector<std::size_t>> groups(table.nodes.patients.size());
  for (std::size_t c = 0; c < table.claims.size(); ++c) {
    if (!include.empty() && !include[c]) continue;
    groups[table.claims[c].patient].push_back(c);
  }
  for (auto& g : groups) {
    std::stable_sort(g.begin(), g.end(), [&](std::size_t a, std::size_t b) {
      return table.claims[a].day < table.claims[b].day;
    });
  }
  return groups;
}

NodeRef service_ref(const NodeTables& nodes, std::uint32_t s) {
  return NodeRef{NodeKind::kService, nodes.services[s].subtype, s};
}

std::string escape_token(const std::string& s) {
  if (s.empty()) return "%E";
  std::string out;
  for (char c : s) {
    switch (c) {
      case '%': out += "%25"; break;
      case ' ': out += "%20"; break;
      case '\t': out += "%09"; break;
      case '\n': out += "%0A"; break;
      case '\r': out += "%0D"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string unescape_token(const std::string& s) {
  if (s == "%E") return {};
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size()) {
      const std::string hex = s.substr(i + 1, 2);
      out.push_back(static_cast<char>(std::stoi(hex, nullptr, 16)));
      i += 2;
    } else if (s[i] == '%') {
      fail(ErrorCode::kMalformedGraphFile, "bad escape in token '" + s + "'");
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, ErrorCode code) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    fail(code, "cannot parse number '" + s + "'");
  }
  return v;
}

template <typename Int>
Int parse_int(std::string_view s, ErrorCode code, const std::string& context) {
  Int v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    fail(code, context + ": cannot parse integer '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

std::string_view node_kind_name(NodeKind kind) {
  switch (kind) {
    case NodeKind::kPatient: return "patient";
    case NodeKind::kDoctor: return "doctor";
    case NodeKind::kService: return "service";
  }
  return "?";
}

std::string_view edge_kind_name(EdgeKind kind) {
  switch (kind) {
    case EdgeKind::kPatientService: return "patient-service";
    case EdgeKind::kDoctorService: return "doctor-service";
    case EdgeKind::kServiceService: return "service-service";
    case EdgeKind::kPatientDoctor: return "patient-doctor";
  }
  return "?";
}

std::string_view service_type_name(ServiceType type) {
  switch (type) {
    case ServiceType::kDx: return "dx";
    case ServiceType::kPx: return "px";
    case ServiceType::kRx: return "rx";
  }
  return "?";
}

ServiceType parse_service_type(std::string_view text) {
  if (text == "dx") return ServiceType::kDx;
  if (text == "px") return ServiceType::kPx;
  if (text == "rx") return ServiceType::kRx;
  fail(ErrorCode::kUnknownServiceType,
       "unknown service type '" + std::string(text) + "'");
}

// --- HeteroGraph -----------------------------------------------------------

HeteroGraph::HeteroGraph(NodeTables nodes, std::vector<Edge> edges)
    : nodes_(std::move(nodes)), edges_(std::move(edges)) {
  offsets_[0] = 0;
  offsets_[1] = static_cast<std::uint32_t>(nodes_.patients.size());
  offsets_[2] = offsets_[1] + static_cast<std::uint32_t>(nodes_.doctors.size());
  offsets_[3] = offsets_[2] + static_cast<std::uint32_t>(nodes_.services.size());

  for (const auto& p : nodes_.patients) {
    if (p.region >= nodes_.region_names.size()) {
      fail(ErrorCode::kInvalidConfig, "patient '" + p.id + "' has bad region");
    }
  }
  for (const auto& d : nodes_.doctors) {
    if (d.region >= nodes_.region_names.size() ||
        d.specialty >= nodes_.specialty_names.size()) {
      fail(ErrorCode::kInvalidConfig,
           "doctor '" + d.id + "' has bad region or specialty");
    }
  }

  bool kind_present[kEdgeKindCount] = {false, false, false, false};
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const Edge& edge = edges_[e];
    if (!contains(edge.src) || !contains(edge.dst)) {
      fail(ErrorCode::kInvalidConfig,
           "edge " + std::to_string(e) + " has an unresolved endpoint");
    }
    if (!edge_endpoints_match(edge.kind, edge.src.kind, edge.dst.kind)) {
      fail(ErrorCode::kInvalidConfig,
           "edge " + std::to_string(e) + " kind does not match endpoints");
    }
    if (!(edge.weight >= 0.0) || !std::isfinite(edge.weight)) {
      fail(ErrorCode::kInvalidConfig,
           "edge " + std::to_string(e) + " has negative weight");
    }
    kind_present[static_cast<std::size_t>(edge.kind)] = true;
  }
  std::size_t type_count = 0;
  for (std::size_t k = 0; k < kNodeKindCount; ++k) {
    if (offsets_[k + 1] > offsets_[k]) ++type_count;
  }
  for (bool present : kind_present) type_count += present ? 1 : 0;
  if (type_count < 3) {
    fail(ErrorCode::kInvalidConfig,
         "a heterogeneous graph needs at least 3 node and edge types in total");
  }

  const std::size_t n = total_nodes();
  std::vector<std::vector<Neighbor>> per_kind(n * kEdgeKindCount);
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const Edge& edge = edges_[e];
    const auto k = static_cast<std::size_t>(edge.kind);
    const std::uint32_t s = global_id(edge.src);
    const std::uint32_t d = global_id(edge.dst);
    const auto idx = static_cast<std::uint32_t>(e);
    per_kind[s * kEdgeKindCount + k].push_back({d, idx, edge.weight});
    if (edge.kind != EdgeKind::kServiceService) {
      per_kind[d * kEdgeKindCount + k].push_back({s, idx, edge.weight});
    }
  }
  adj_begin_.assign(n + 1, 0);
  kind_begin_.assign(n * (kEdgeKindCount + 1), 0);
  for (std::size_t v = 0; v < n; ++v) {
    adj_begin_[v] = static_cast<std::uint32_t>(adj_.size());
    for (std::size_t k = 0; k < kEdgeKindCount; ++k) {
      kind_begin_[v * (kEdgeKindCount + 1) + k] =
          static_cast<std::uint32_t>(adj_.size());
      const auto& bucket = per_kind[v * kEdgeKindCount + k];
      adj_.insert(adj_.end(), bucket.begin(), bucket.end());
    }
    kind_begin_[v * (kEdgeKindCount + 1) + kEdgeKindCount] =
        static_cast<std::uint32_t>(adj_.size());
  }
  adj_begin_[n] = static_cast<std::uint32_t>(adj_.size());
}

std::size_t HeteroGraph::node_count(NodeKind kind) const {
  const auto k = static_cast<std::size_t>(kind);
  return offsets_[k + 1] - offsets_[k];
}

bool HeteroGraph::contains(const NodeRef& ref) const {
  if (ref.index >= node_count(ref.kind)) return false;
  if (ref.kind == NodeKind::kService) {
    return ref.service_subtype.has_value() &&
           *ref.service_subtype == nodes_.services[ref.index].subtype;
  }
  return !ref.service_subtype.has_value();
}

std::uint32_t HeteroGraph::global_id(const NodeRef& ref) const {
  return offset(ref.kind) + ref.index;
}

NodeKind HeteroGraph::kind_of(std::uint32_t global) const {
  if (global < offsets_[1]) return NodeKind::kPatient;
  if (global < offsets_[2]) return NodeKind::kDoctor;
  return NodeKind::kService;
}

NodeRef HeteroGraph::node_ref(std::uint32_t global) const {
  const NodeKind kind = kind_of(global);
  NodeRef ref{kind, std::nullopt, global - offset(kind)};
  if (kind == NodeKind::kService) {
    ref.service_subtype = nodes_.services[ref.index].subtype;
  }
  return ref;
}

std::span<const Neighbor> HeteroGraph::neighbors(std::uint32_t global) const {
  return std::span<const Neighbor>(adj_).subspan(
      adj_begin_[global], adj_begin_[global + 1] - adj_begin_[global]);
}

std::span<const Neighbor> HeteroGraph::neighbors(std::uint32_t global,
                                                 EdgeKind kind) const {
  const std::size_t base = global * (kEdgeKindCount + 1);
  const auto k = static_cast<std::size_t>(kind);
  return std::span<const Neighbor>(adj_).subspan(
      kind_begin_[base + k], kind_begin_[base + k + 1] - kind_begin_[base + k]);
}

// --- Build -----------------------------------------------------------------

HeteroGraph build_graph(const ClaimTable& table,
                        const GraphBuildOptions& options,
                        std::span<const bool> include) {
  if (!include.empty() && include.size() != table.claims.size()) {
    fail(ErrorCode::kInvalidConfig, "claim filter length mismatch");
  }
  const NodeTables& nodes = table.nodes;
  std::int64_t t_min = 0;
  std::int64_t t_max = 0;
  if (!table.claims.empty()) {
    auto [lo, hi] = std::minmax_element(
        table.claims.begin(), table.claims.end(),
        [](const ClaimRecord& a, const ClaimRecord& b) { return a.day < b.day; });
    t_min = lo->day;
    t_max = hi->day;
  }

  const auto groups = claims_by_patient(table, include);
  std::vector<Edge> edges;
  std::vector<Edge> patient_doctor;
  struct PairStats {
    std::size_t patients = 0;
    std::int64_t latest = std::numeric_limits<std::int64_t>::min();
  };
  std::map<std::pair<std::uint32_t, std::uint32_t>, PairStats> transitions;

  for (std::uint32_t p = 0; p < groups.size(); ++p) {
    const NodeRef patient{NodeKind::kPatient, std::nullopt, p};
    std::vector<std::pair<std::uint32_t, std::int64_t>> doctors_seen;
    std::set<std::pair<std::uint32_t, std::uint32_t>> pairs_seen;
    for (std::size_t i = 0; i < groups[p].size(); ++i) {
      const ClaimRecord& c = table.claims[groups[p][i]];
      const double w = edge_recency_weight(c.day, t_min, t_max, options.recency);
      const NodeRef service = service_ref(nodes, c.service);
      const NodeRef doctor{NodeKind::kDoctor, std::nullopt, c.doctor};
      edges.push_back({patient, service, EdgeKind::kPatientService, c.day, w});
      edges.push_back({doctor, service, EdgeKind::kDoctorService, c.day, w});

      auto it = std::find_if(doctors_seen.begin(), doctors_seen.end(),
                             [&](const auto& e) { return e.first == c.doctor; });
      if (it == doctors_seen.end()) {
        doctors_seen.emplace_back(c.doctor, c.day);
      } else {
        it->second = std::max(it->second, c.day);
      }

      if (i > 0) {
        const std::uint32_t prev = table.claims[groups[p][i - 1]].service;
        if (prev != c.service) {
          auto& stats = transitions[{prev, c.service}];
          if (pairs_seen.insert({prev, c.service}).second) ++stats.patients;
          stats.latest = std::max(stats.latest, c.day);
        }
      }
    }
    for (const auto& [d, day] : doctors_seen) {
      patient_doctor.push_back(
          {patient, NodeRef{NodeKind::kDoctor, std::nullopt, d},
           EdgeKind::kPatientDoctor, day,
           edge_recency_weight(day, t_min, t_max, options.recency)});
    }
  }
  edges.insert(edges.end(), patient_doctor.begin(), patient_doctor.end());
  for (const auto& [pair, stats] : transitions) {
    edges.push_back({service_ref(nodes, pair.first),
                     service_ref(nodes, pair.second),
                     EdgeKind::kServiceService, stats.latest,
                     static_cast<double>(stats.patients)});
  }
  return HeteroGraph(nodes, std::move(edges));
}

// --- Dates and recency -----------------------------------------------------

std::int64_t parse_iso_date(std::string_view text) {
  using namespace std::chrono;
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
    fail(ErrorCode::kMalformedRow,
         "timestamp '" + std::string(text) + "' is not YYYY-MM-DD");
  }
  const int y = parse_int<int>(text.substr(0, 4), ErrorCode::kMalformedRow,
                               "timestamp year");
  const unsigned m = parse_int<unsigned>(text.substr(5, 2),
                                         ErrorCode::kMalformedRow,
                                         "timestamp month");
  const unsigned d = parse_int<unsigned>(text.substr(8, 2),
                                         ErrorCode::kMalformedRow,
                                         "timestamp day");
  const year_month_day ymd{year{y}, month{m}, day{d}};
  if (!ymd.ok()) {
    fail(ErrorCode::kMalformedRow,
         "timestamp '" + std::string(text) + "' is not a calendar date");
  }
  return sys_days{ymd}.time_since_epoch().count();
}

std::string format_iso_date(std::int64_t days) {
  using namespace std::chrono;
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

double edge_recency_weight(std::int64_t timestamp, std::int64_t t_min,
                           std::int64_t t_max, RecencyMethod method) {
  if (t_min > t_max || timestamp < t_min || timestamp > t_max) {
    fail(ErrorCode::kOutOfRangeTimestamp,
         "timestamp " + std::to_string(timestamp) + " outside [" +
             std::to_string(t_min) + ", " + std::to_string(t_max) + "]");
  }
  switch (method) {
    case RecencyMethod::kLinear:
      return static_cast<double>(timestamp - t_min + 1) /
             static_cast<double>(t_max - t_min + 1);
    case RecencyMethod::kLog:
      return 1.0 /
             (1.0 + std::log1p(static_cast<double>(t_max - timestamp)));
  }
  return 0.0;
}

// --- Sampling --------------------------------------------------------------

std::vector<std::uint32_t> sample_neighbor_ids(const HeteroGraph& graph,
                                               std::uint32_t global,
                                               std::size_t k,
                                               std::uint64_t seed) {
  if (global >= graph.total_nodes()) {
    fail(ErrorCode::kInvalidConfig, "node out of range");
  }
  if (k == 0) fail(ErrorCode::kInvalidConfig, "sample size must be >= 1");
  const auto nbrs = graph.neighbors(global);
  if (nbrs.empty()) {
    fail(ErrorCode::kIsolatedNode,
         "node " + std::to_string(global) + " has no neighbors");
  }
  std::vector<double> cumulative(nbrs.size());
  double total = 0.0;
  for (std::size_t i = 0; i < nbrs.size(); ++i) {
    total += nbrs[i].weight;
    cumulative[i] = total;
  }
  if (!(total > 0.0)) {
    fail(ErrorCode::kZeroTotalWeight,
         "node " + std::to_string(global) + " has zero total edge weight");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::uint32_t> out;
  out.reserve(k);
  for (std::size_t draw = 0; draw < k; ++draw) {
    const double u = uniform_unit(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    out.push_back(nbrs[static_cast<std::size_t>(it - cumulative.begin())].node);
  }
  return out;
}

std::vector<NodeRef> sample_neighbors(const HeteroGraph& graph,
                                      const NodeRef& node, std::size_t k,
                                      std::uint64_t seed) {
  if (!graph.contains(node)) {
    fail(ErrorCode::kInvalidConfig, "node does not exist in graph");
  }
  const auto ids = sample_neighbor_ids(graph, graph.global_id(node), k, seed);
  std::vector<NodeRef> out;
  out.reserve(ids.size());
  for (auto id : ids) out.push_back(graph.node_ref(id));
  return out;
}

// --- Masking ---------------------------------------------------------------

std::size_t head_length(std::size_t len, double fraction) {
  if (len < 2) return len;
  // The small offset keeps products such as 0.65 * 20 from rounding up past
  // the exact integer.
  auto head = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(len) - 1e-9));
  return std::clamp<std::size_t>(head, 1, len - 1);
}

MaskedSplit chronological_mask(const ClaimTable& table,
                               const MaskOptions& options,
                               std::span<const bool> patients) {
  if (!(options.fraction > 0.0 && options.fraction < 1.0)) {
    fail(ErrorCode::kInvalidConfig, "mask fraction must lie in (0, 1)");
  }
  if (options.candidates_min > options.candidates_max) {
    fail(ErrorCode::kInvalidConfig, "candidate range is empty");
  }
  const std::size_t patient_count = table.nodes.patients.size();
  if (!patients.empty() && patients.size() != patient_count) {
    fail(ErrorCode::kInvalidConfig, "patient filter length mismatch");
  }
  auto selected = [&](std::uint32_t p) {
    return patients.empty() || patients[p];
  };

  const auto groups = claims_by_patient(table, {});
  auto include_flags = std::make_unique<bool[]>(table.claims.size());
  MaskedSplit split;
  split.mask_fraction = options.fraction;
  split.positives.resize(patient_count);
  split.candidates.resize(patient_count);
  split.head_claims.assign(patient_count, 0);
  split.total_claims.assign(patient_count, 0);

  const std::size_t doctor_count = table.nodes.doctors.size();
  for (std::uint32_t p = 0; p < patient_count; ++p) {
    if (!selected(p)) continue;
    const auto& g = groups[p];
    if (g.size() < 2) {
      fail(ErrorCode::kPatientTooShort,
           "patient '" + table.nodes.patients[p].id + "' has " +
               std::to_string(g.size()) + " claim(s); at least 2 required");
    }
    const std::size_t head = head_length(g.size(), options.fraction);
    split.head_claims[p] = head;
    split.total_claims[p] = g.size();
    std::vector<bool> in_head(doctor_count, false);
    std::vector<bool> seen(doctor_count, false);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const std::uint32_t d = table.claims[g[i]].doctor;
      seen[d] = true;
      if (i < head) {
        include_flags[g[i]] = true;
        in_head[d] = true;
      }
    }
    auto& pos = split.positives[p];
    for (std::size_t i = head; i < g.size(); ++i) {
      const std::uint32_t d = table.claims[g[i]].doctor;
      if (!in_head[d]) pos.push_back(d);
    }
    std::sort(pos.begin(), pos.end());
    pos.erase(std::unique(pos.begin(), pos.end()), pos.end());

    std::vector<std::uint32_t> pool;
    for (std::uint32_t d = 0; d < doctor_count; ++d) {
      if (!seen[d]) pool.push_back(d);
    }
    std::mt19937_64 rng(mix_seed(options.seed, p));
    const std::size_t target =
        options.candidates_min +
        uniform_index(rng, options.candidates_max - options.candidates_min + 1);
    const std::size_t negatives =
        std::min(pool.size(), target > pos.size() ? target - pos.size() : 0);
    for (std::size_t i = 0; i < negatives; ++i) {
      const std::size_t j = i + uniform_index(rng, pool.size() - i);
      std::swap(pool[i], pool[j]);
    }
    auto& cand = split.candidates[p];
    cand = pos;
    cand.insert(cand.end(), pool.begin(),
                pool.begin() + static_cast<std::ptrdiff_t>(negatives));
    std::sort(cand.begin(), cand.end());
  }

  split.graph = build_graph(
      table, options.build,
      std::span<const bool>(include_flags.get(), table.claims.size()));
  return split;
}

// --- CSV -------------------------------------------------------------------

ClaimTable read_claims_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (line_no == 1 && view.starts_with("\xEF\xBB\xBF")) view.remove_prefix(3);
    if (trim(view).empty()) continue;
    const auto fields = split_csv_line(view);
    if (fields.size() != kCsvColumnCount) {
      fail(ErrorCode::kMalformedRow,
           "row " + std::to_string(line_no) + ": header must have " +
               std::to_string(kCsvColumnCount) + " columns");
    }
    for (std::size_t i = 0; i < kCsvColumnCount; ++i) {
      if (fields[i] != kCsvColumns[i]) {
        fail(ErrorCode::kMalformedRow,
             "row " + std::to_string(line_no) + ": expected column '" +
                 kCsvColumns[i] + "' but found '" + fields[i] + "'");
      }
    }
    have_header = true;
    break;
  }
  if (!have_header) fail(ErrorCode::kEmptyFile, "claims file is empty");

  ClaimTable table;
  NodeTables& nodes = table.nodes;
  std::unordered_map<std::string, std::uint32_t> patient_index;
  std::unordered_map<std::string, std::uint32_t> doctor_index;
  std::unordered_map<std::string, std::uint32_t> service_index;
  std::unordered_map<std::string, std::uint32_t> region_index;
  std::unordered_map<std::string, std::uint32_t> specialty_index;

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = "row " + std::to_string(line_no);
    const auto f = split_csv_line(line);
    if (f.size() != kCsvColumnCount) {
      fail(ErrorCode::kMalformedRow,
           where + ": expected " + std::to_string(kCsvColumnCount) +
               " fields, found " + std::to_string(f.size()));
    }
    for (std::size_t i = 0; i < kCsvColumnCount; ++i) {
      if (f[i].empty()) {
        fail(ErrorCode::kMalformedRow,
             where + ": empty " + std::string(kCsvColumns[i]));
      }
    }
    ServiceType type;
    try {
      type = parse_service_type(f[3]);
    } catch (const Error& e) {
      fail(ErrorCode::kUnknownServiceType, where + ": " + e.what());
    }
    std::int64_t day;
    try {
      day = parse_iso_date(f[4]);
    } catch (const Error& e) {
      fail(ErrorCode::kMalformedRow, where + ": " + e.what());
    }
    const int age = parse_int<int>(f[5], ErrorCode::kMalformedRow,
                                   where + " patient_age");
    if (age < 0) fail(ErrorCode::kMalformedRow, where + ": negative age");
    if (f[6] != "M" && f[6] != "F" && f[6] != "U") {
      fail(ErrorCode::kMalformedRow,
           where + ": patient_sex must be M, F or U");
    }
    const std::uint32_t patient_region =
        intern(region_index, nodes.region_names, f[7]);
    const std::uint32_t specialty =
        intern(specialty_index, nodes.specialty_names, f[8]);
    const std::uint32_t doctor_region =
        intern(region_index, nodes.region_names, f[9]);

    ClaimRecord claim;
    claim.day = day;
    {
      auto [it, inserted] = patient_index.try_emplace(
          f[0], static_cast<std::uint32_t>(nodes.patients.size()));
      if (inserted) {
        nodes.patients.push_back({f[0], age, f[6][0], patient_region});
      }
      claim.patient = it->second;
    }
    {
      auto [it, inserted] = doctor_index.try_emplace(
          f[1], static_cast<std::uint32_t>(nodes.doctors.size()));
      if (inserted) nodes.doctors.push_back({f[1], specialty, doctor_region});
      claim.doctor = it->second;
    }
    {
      auto [it, inserted] = service_index.try_emplace(
          f[2], static_cast<std::uint32_t>(nodes.services.size()));
      if (inserted) {
        nodes.services.push_back({f[2], type});
      } else if (nodes.services[it->second].subtype != type) {
        fail(ErrorCode::kMalformedRow,
             where + ": service '" + f[2] + "' changes type");
      }
      claim.service = it->second;
    }
    table.claims.push_back(claim);
  }
  if (table.claims.empty()) {
    fail(ErrorCode::kEmptyFile, "claims file has a header but no rows");
  }
  return table;
}

ClaimTable read_claims_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIoError, "cannot open '" + path + "'");
  return read_claims_csv(in);
}

void write_claims_csv(const ClaimTable& table, std::ostream& out) {
  for (std::size_t i = 0; i < kCsvColumnCount; ++i) {
    out << (i ? "," : "") << kCsvColumns[i];
  }
  out << '\n';
  const NodeTables& n = table.nodes;
  for (const ClaimRecord& c : table.claims) {
    const auto& p = n.patients[c.patient];
    const auto& d = n.doctors[c.doctor];
    const auto& s = n.services[c.service];
    out << csv_field(p.id) << ',' << csv_field(d.id) << ','
        << csv_field(s.code) << ',' << service_type_name(s.subtype) << ','
        << format_iso_date(c.day) << ',' << p.age << ',' << p.sex << ','
        << csv_field(n.region_names[p.region]) << ','
        << csv_field(n.specialty_names[d.specialty]) << ','
        << csv_field(n.region_names[d.region]) << '\n';
  }
}

HeteroGraph ingest_claims(const std::string& path,
                          const GraphBuildOptions& options) {
  return build_graph(read_claims_csv(path), options);
}

// --- Persistence -----------------------------------------------------------

void save_graph(const HeteroGraph& graph, std::ostream& out) {
  const NodeTables& n = graph.nodes();
  out << "HGRAPH v1\n";
  out << "regions " << n.region_names.size() << '\n';
  for (const auto& r : n.region_names) out << escape_token(r) << '\n';
  out << "specialties " << n.specialty_names.size() << '\n';
  for (const auto& s : n.specialty_names) out << escape_token(s) << '\n';
  out << "patients " << n.patients.size() << '\n';
  for (const auto& p : n.patients) {
    out << escape_token(p.id) << ' ' << p.age << ' ' << p.sex << ' '
        << p.region << '\n';
  }
  out << "doctors " << n.doctors.size() << '\n';
  for (const auto& d : n.doctors) {
    out << escape_token(d.id) << ' ' << d.specialty << ' ' << d.region << '\n';
  }
  out << "services " << n.services.size() << '\n';
  for (const auto& s : n.services) {
    out << escape_token(s.code) << ' ' << service_type_name(s.subtype) << '\n';
  }
  out << "edges " << graph.edges().size() << '\n';
  for (const Edge& e : graph.edges()) {
    out << static_cast<int>(e.kind) << ' ' << static_cast<int>(e.src.kind)
        << ' ' << e.src.index << ' ' << static_cast<int>(e.dst.kind) << ' '
        << e.dst.index << ' ' << e.timestamp << ' ' << format_double(e.weight)
        << '\n';
  }
}

HeteroGraph load_graph(std::istream& in) {
  std::string line;
  auto next_line = [&]() -> std::string {
    if (!std::getline(in, line)) {
      fail(ErrorCode::kMalformedGraphFile, "unexpected end of graph file");
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };
  auto section = [&](const std::string& name) -> std::size_t {
    std::istringstream ss(next_line());
    std::string tag;
    std::size_t count = 0;
    if (!(ss >> tag >> count) || tag != name) {
      fail(ErrorCode::kMalformedGraphFile, "expected section '" + name + "'");
    }
    return count;
  };
  if (next_line() != "HGRAPH v1") {
    fail(ErrorCode::kMalformedGraphFile, "missing 'HGRAPH v1' header");
  }
  NodeTables n;
  n.region_names.resize(section("regions"));
  for (auto& r : n.region_names) r = unescape_token(next_line());
  n.specialty_names.resize(section("specialties"));
  for (auto& s : n.specialty_names) s = unescape_token(next_line());

  n.patients.resize(section("patients"));
  for (auto& p : n.patients) {
    std::istringstream ss(next_line());
    std::string id, sex;
    if (!(ss >> id >> p.age >> sex >> p.region) || sex.size() != 1) {
      fail(ErrorCode::kMalformedGraphFile, "bad patient row '" + line + "'");
    }
    p.id = unescape_token(id);
    p.sex = sex[0];
  }
  n.doctors.resize(section("doctors"));
  for (auto& d : n.doctors) {
    std::istringstream ss(next_line());
    std::string id;
    if (!(ss >> id >> d.specialty >> d.region)) {
      fail(ErrorCode::kMalformedGraphFile, "bad doctor row '" + line + "'");
    }
    d.id = unescape_token(id);
  }
  n.services.resize(section("services"));
  for (auto& s : n.services) {
    std::istringstream ss(next_line());
    std::string code, type;
    if (!(ss >> code >> type)) {
      fail(ErrorCode::kMalformedGraphFile, "bad service row '" + line + "'");
    }
    s.code = unescape_token(code);
    try {
      s.subtype = parse_service_type(type);
    } catch (const Error&) {
      fail(ErrorCode::kMalformedGraphFile, "bad service type '" + type + "'");
    }
  }
  std::vector<Edge> edges(section("edges"));
  for (auto& e : edges) {
    std::istringstream ss(next_line());
    int kind = 0, src_kind = 0, dst_kind = 0;
    std::string weight;
    if (!(ss >> kind >> src_kind >> e.src.index >> dst_kind >> e.dst.index >>
          e.timestamp >> weight) ||
        kind < 0 || kind >= static_cast<int>(kEdgeKindCount) || src_kind < 0 ||
        src_kind >= static_cast<int>(kNodeKindCount) || dst_kind < 0 ||
        dst_kind >= static_cast<int>(kNodeKindCount)) {
      fail(ErrorCode::kMalformedGraphFile, "bad edge row '" + line + "'");
    }
    e.kind = static_cast<EdgeKind>(kind);
    e.src.kind = static_cast<NodeKind>(src_kind);
    e.dst.kind = static_cast<NodeKind>(dst_kind);
    e.weight = parse_double(weight, ErrorCode::kMalformedGraphFile);
    for (NodeRef* ref : {&e.src, &e.dst}) {
      if (ref->kind == NodeKind::kService) {
        if (ref->index >= n.services.size()) {
          fail(ErrorCode::kMalformedGraphFile, "edge service out of range");
        }
        ref->service_subtype = n.services[ref->index].subtype;
      }
    }
  }
  try {
    return HeteroGraph(std::move(n), std::move(edges));
  } catch (const Error& e) {
    fail(ErrorCode::kMalformedGraphFile, e.what());
  }
}

}  // namespace hfdl
