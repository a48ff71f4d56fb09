#include "mtec/placement.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "mtec/common.hpp"

namespace mtec::placement {

int SegmentIndicator::segment_of(int l) const {
  for (int s = 0; s < n_segments; ++s)
    if (at(l, s)) return s + 1;
  throw DataError("segment indicator row " + std::to_string(l) + " has no segment");
}

SplitResult split_popular_mediocre(const std::vector<int>& ranked, double alpha, int c_f,
                                   int n_s) {
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must be in [0, 1]");
  if (c_f < 0) throw ConfigError("C_f must be non-negative");
  if (n_s < 1) throw ConfigError("N_s must be >= 1");
  SplitResult r;
  r.n_p = static_cast<int>(std::floor(alpha * c_f));
  r.n_a = n_s * (c_f - r.n_p);
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (static_cast<int>(i) < r.n_p)
      r.popular.push_back(ranked[i]);
    else if (static_cast<int>(i) < r.n_p + r.n_a)
      r.mediocre.push_back(ranked[i]);
  }
  r.truncated = static_cast<int>(ranked.size()) < r.n_p + r.n_a;
  return r;
}

std::vector<SegmentIndicator> assign_segments(const std::vector<int>& mediocre, int n_b,
                                              int n_s) {
  if (n_s < 1) throw ConfigError("N_s must be >= 1");
  if (n_b < 1) throw ConfigError("N_b must be >= 1");
  if (n_b > n_s)
    throw ConfigError("orthogonal segment placement infeasible: N_b=" + std::to_string(n_b) +
                      " FAPs per inter-cluster exceeds N_s=" + std::to_string(n_s) +
                      " segments per content; distinct per-FAP segments require N_b <= N_s");
  const int n_a = static_cast<int>(mediocre.size());
  std::vector<SegmentIndicator> out(static_cast<std::size_t>(n_b));
  for (int i = 0; i < n_b; ++i) {
    SegmentIndicator& ind = out[static_cast<std::size_t>(i)];
    ind.fap_coindex = i;
    ind.n_mediocre = n_a;
    ind.n_segments = n_s;
    ind.grid.assign(static_cast<std::size_t>(n_a) * n_s, 0);
    for (int l = 0; l < n_a; ++l)
      ind.grid[static_cast<std::size_t>(l) * n_s + (l + i) % n_s] = 1;
  }
  return out;
}

int hex_cluster_size(int w, int z) {
  if (w < 0 || z < 0) throw ConfigError("hex walk (w, z) must be non-negative");
  if (w == 0 && z == 0) throw ConfigError("hex walk (w, z) must not be (0, 0)");
  return w * w + w * z + z * z;
}

std::vector<int> place_uav(const std::vector<int>& ranked, int c_u) {
  if (c_u < 0) throw ConfigError("C_u must be non-negative");
  std::vector<int> out;
  for (std::size_t i = 0; i < ranked.size() && static_cast<int>(i) < c_u; ++i)
    out.push_back(ranked[i]);
  return out;
}

PlacementPlan make_plan(const std::vector<int>& ranked, double alpha, int c_f, int c_u, int n_s,
                        int n_b, int w, int z) {
  PlacementPlan plan;
  plan.alpha = alpha;
  plan.c_f = c_f;
  plan.c_u = c_u;
  plan.n_s = n_s;
  plan.n_b = n_b;
  plan.w = w;
  plan.z = z;
  SplitResult split = split_popular_mediocre(ranked, alpha, c_f, n_s);
  plan.popular = std::move(split.popular);
  plan.mediocre = std::move(split.mediocre);
  plan.truncated = split.truncated;
  plan.indicators = assign_segments(plan.mediocre, n_b, n_s);
  plan.uav_cache = place_uav(ranked, c_u);
  hex_cluster_size(w, z);  // validates (w, z)
  return plan;
}

NetworkPlan intercluster_copy(const PlacementPlan& plan,
                              const std::vector<std::vector<int>>& clusters,
                              const std::vector<int>& uav_ids) {
  NetworkPlan np;
  np.base = plan;
  np.k = hex_cluster_size(plan.w, plan.z);
  if (np.k != plan.n_b)
    throw ConfigError("hex lattice inconsistent with cluster size: k=" + std::to_string(np.k) +
                      " from (w=" + std::to_string(plan.w) + ", z=" + std::to_string(plan.z) +
                      ") but N_b=" + std::to_string(plan.n_b));
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    if (static_cast<int>(clusters[c].size()) > np.k)
      throw ConfigError("inter-cluster " + std::to_string(c) + " has " +
                        std::to_string(clusters[c].size()) + " FAPs, more than k=" +
                        std::to_string(np.k));
    for (std::size_t i = 0; i < clusters[c].size(); ++i) {
      const int fap = clusters[c][i];
      if (np.fap_coindex.count(fap))
        throw ConfigError("FAP " + std::to_string(fap) + " appears in two inter-clusters");
      np.fap_coindex[fap] = static_cast<int>(i);
    }
  }
  np.uav_ids = uav_ids;
  return np;
}

VerifyReport verify_plan(const NetworkPlan& plan) {
  VerifyReport rep;
  auto fail = [&rep](std::string msg) {
    rep.ok = false;
    rep.violations.push_back(std::move(msg));
  };
  const PlacementPlan& b = plan.base;

  if (static_cast<int>(b.indicators.size()) != b.n_b)
    fail("indicator count " + std::to_string(b.indicators.size()) + " != N_b " +
         std::to_string(b.n_b));

  for (const auto& ind : b.indicators) {
    if (ind.n_mediocre != static_cast<int>(b.mediocre.size()))
      fail("indicator co-index " + std::to_string(ind.fap_coindex) + " row count mismatch");
    for (int l = 0; l < ind.n_mediocre; ++l) {
      int row_sum = 0;
      for (int s = 0; s < ind.n_segments; ++s) row_sum += ind.at(l, s);
      if (row_sum != 1)
        fail("co-index " + std::to_string(ind.fap_coindex) + " row " + std::to_string(l) +
             " sums to " + std::to_string(row_sum));
    }
  }

  // pairwise orthogonality within the inter-cluster
  for (std::size_t i = 0; i < b.indicators.size(); ++i)
    for (std::size_t j = i + 1; j < b.indicators.size(); ++j) {
      const auto& a = b.indicators[i];
      const auto& c = b.indicators[j];
      for (int l = 0; l < std::min(a.n_mediocre, c.n_mediocre); ++l) {
        int dot = 0;
        for (int s = 0; s < std::min(a.n_segments, c.n_segments); ++s)
          dot += a.at(l, s) * c.at(l, s);
        if (dot != 0)
          fail("indicator rows not orthogonal: co-indices " + std::to_string(i) + "," +
               std::to_string(j) + " share a segment of mediocre row " + std::to_string(l));
      }
    }

  // partition coverage when the cluster holds every segment
  if (b.n_b == b.n_s && !b.indicators.empty()) {
    for (int l = 0; l < static_cast<int>(b.mediocre.size()); ++l) {
      std::set<int> seen;
      for (const auto& ind : b.indicators) seen.insert(ind.segment_of(l));
      if (static_cast<int>(seen.size()) != b.n_s)
        fail("mediocre row " + std::to_string(l) + " covers " +
             std::to_string(seen.size()) + " of " + std::to_string(b.n_s) + " segments");
    }
  }

  // capacity: complete = N_s/N_s units, one segment = 1 unit of N_s
  const long long used = static_cast<long long>(b.popular.size()) * b.n_s +
                         static_cast<long long>(b.mediocre.size());
  if (used > static_cast<long long>(b.c_f) * b.n_s)
    fail("FAP capacity exceeded: " + std::to_string(b.popular.size()) + " complete + " +
         std::to_string(b.mediocre.size()) + " segments > C_f=" + std::to_string(b.c_f));
  if (static_cast<int>(b.uav_cache.size()) > b.c_u)
    fail("UAV capacity exceeded: " + std::to_string(b.uav_cache.size()) + " > C_u=" +
         std::to_string(b.c_u));

  if (plan.k != hex_cluster_size(b.w, b.z))
    fail("stored k=" + std::to_string(plan.k) + " != w^2+wz+z^2");

  // co-index equality across clusters holds whenever every co-index maps to
  // the single shared indicator; verify the mapping stays in range
  for (const auto& [fap, ci] : plan.fap_coindex)
    if (ci < 0 || ci >= b.n_b)
      fail("FAP " + std::to_string(fap) + " has co-index " + std::to_string(ci) +
           " outside [0, N_b)");

  return rep;
}

std::string serialize_plan(const NetworkPlan& plan, const std::string& header_meta) {
  const PlacementPlan& b = plan.base;
  std::ostringstream out;
  out << "# mtec-plan v1";
  if (!header_meta.empty()) out << ' ' << header_meta;
  out << '\n';
  out << "# alpha=" << format_double(b.alpha) << " c_f=" << b.c_f << " c_u=" << b.c_u
      << " n_s=" << b.n_s << " n_b=" << b.n_b << " w=" << b.w << " z=" << b.z << '\n';
  out << "node_id,kind,content_id,segment_id\n";
  for (const auto& [fap, ci] : plan.fap_coindex) {
    for (int c : b.popular) out << fap << ",complete," << c << ",0\n";
    const SegmentIndicator& ind = b.indicators.at(static_cast<std::size_t>(ci));
    for (int l = 0; l < ind.n_mediocre; ++l)
      out << fap << ",segment," << b.mediocre[static_cast<std::size_t>(l)] << ','
          << ind.segment_of(l) << '\n';
  }
  for (int uav : plan.uav_ids)
    for (int c : b.uav_cache) out << (kUavNodeBase + uav) << ",complete," << c << ",0\n";
  return out.str();
}

NodePlacement to_node_placement(const NetworkPlan& plan) {
  NodePlacement np;
  const PlacementPlan& b = plan.base;
  np.alpha = b.alpha;
  np.c_f = b.c_f;
  np.c_u = b.c_u;
  np.n_s = b.n_s;
  np.n_b = b.n_b;
  np.w = b.w;
  np.z = b.z;
  for (const auto& [fap, ci] : plan.fap_coindex) {
    np.complete[fap] = b.popular;
    const SegmentIndicator& ind = b.indicators.at(static_cast<std::size_t>(ci));
    auto& seg = np.segments[fap];
    for (int l = 0; l < ind.n_mediocre; ++l)
      seg[b.mediocre[static_cast<std::size_t>(l)]] = ind.segment_of(l);
  }
  for (int uav : plan.uav_ids) np.complete[kUavNodeBase + uav] = b.uav_cache;
  return np;
}

NodePlacement parse_plan(const std::string& csv) {
  NodePlacement np;
  std::istringstream in(csv);
  std::string line;
  int line_no = 0;
  bool have_params = false;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream meta(line.substr(1));
      std::string tok;
      while (meta >> tok) {
        auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = tok.substr(0, eq);
        const std::string val = tok.substr(eq + 1);
        try {
          if (key == "alpha") np.alpha = std::stod(val);
          else if (key == "c_f") np.c_f = std::stoi(val);
          else if (key == "c_u") np.c_u = std::stoi(val);
          else if (key == "n_s") np.n_s = std::stoi(val);
          else if (key == "n_b") np.n_b = std::stoi(val);
          else if (key == "w") np.w = std::stoi(val);
          else if (key == "z") np.z = std::stoi(val);
          else continue;
        } catch (const std::exception&) {
          throw DataError("plan line " + std::to_string(line_no) + ": bad value for " + key);
        }
        have_params = true;
      }
      continue;
    }
    if (!have_header) {
      if (line != "node_id,kind,content_id,segment_id")
        throw DataError("plan line " + std::to_string(line_no) + ": unexpected header '" +
                        line + "'");
      have_header = true;
      continue;
    }
    std::istringstream row(line);
    std::string node_s, kind, content_s, segment_s;
    if (!std::getline(row, node_s, ',') || !std::getline(row, kind, ',') ||
        !std::getline(row, content_s, ',') || !std::getline(row, segment_s))
      throw DataError("plan line " + std::to_string(line_no) + ": expected 4 fields");
    int node, content, segment;
    try {
      node = std::stoi(node_s);
      content = std::stoi(content_s);
      segment = std::stoi(segment_s);
    } catch (const std::exception&) {
      throw DataError("plan line " + std::to_string(line_no) + ": non-numeric field");
    }
    if (kind == "complete") {
      np.complete[node].push_back(content);
    } else if (kind == "segment") {
      if (segment < 1 || segment > np.n_s)
        throw DataError("plan line " + std::to_string(line_no) + ": segment id out of range");
      np.segments[node][content] = segment;
    } else {
      throw DataError("plan line " + std::to_string(line_no) + ": unknown kind '" + kind + "'");
    }
  }
  if (!have_params || !have_header) throw DataError("plan file missing header");
  return np;
}

}  // namespace mtec::placement
