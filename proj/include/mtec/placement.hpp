#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mtec::placement {

// UAV node ids live above this base so FAP and UAV records share one id
// column in plan files (FAPs are 0-based topology indices).
inline constexpr int kUavNodeBase = 10000;

// Per-FAP binary grid: row l marks which segment of mediocre content l this
// FAP stores. Every row sums to exactly 1.
struct SegmentIndicator {
  int fap_coindex = 0;  // position of the FAP within its inter-cluster
  int n_mediocre = 0;
  int n_segments = 0;
  std::vector<std::uint8_t> grid;  // n_mediocre x n_segments

  std::uint8_t at(int l, int s) const {
    return grid[static_cast<std::size_t>(l) * n_segments + s];
  }
  // 1-based segment id stored for mediocre row l
  int segment_of(int l) const;
};

struct SplitResult {
  std::vector<int> popular;
  std::vector<int> mediocre;
  int n_p = 0;  // floor(alpha * C_f)
  int n_a = 0;  // N_s * (C_f - N_p)
  bool truncated = false;  // ranked list was shorter than N_p + N_a
};

// First N_p ranked ids stored complete, next N_a stored coded. A short list
// yields a partial plan with the truncated flag set rather than an error.
SplitResult split_popular_mediocre(const std::vector<int>& ranked, double alpha, int c_f,
                                   int n_s);

// Rotational assignment: within an inter-cluster, the FAP at co-index i
// stores segment ((l + i) mod N_s) + 1 of mediocre content l, which makes
// indicator rows of distinct FAPs orthogonal. Requires N_b <= N_s.
std::vector<SegmentIndicator> assign_segments(const std::vector<int>& mediocre, int n_b,
                                              int n_s);

// Hex reuse-cluster size w^2 + wz + z^2; (w, z) non-negative, not both zero.
int hex_cluster_size(int w, int z);

struct HexCoord {
  int q = 0;
  int r = 0;
};

// One inter-cluster's worth of cache content, replicated across the network.
struct PlacementPlan {
  double alpha = 0.3;
  int c_f = 0;
  int c_u = 0;
  int n_s = 7;
  int n_b = 7;
  int w = 1;
  int z = 2;
  std::vector<int> popular;                  // complete on every FAP
  std::vector<int> mediocre;                 // indicator row l = mediocre[l]
  std::vector<SegmentIndicator> indicators;  // one per co-index, |.| = N_b
  std::vector<int> uav_cache;                // complete on every UAV
  bool truncated = false;
};

// Assemble a plan from a ranked prediction list.
PlacementPlan make_plan(const std::vector<int>& ranked, double alpha, int c_f, int c_u, int n_s,
                        int n_b, int w, int z);

// Top-C_u ranked contents, stored complete on each UAV.
std::vector<int> place_uav(const std::vector<int>& ranked, int c_u);

// Reference plan replicated over concrete inter-clusters: co-indexed FAPs in
// every cluster receive bit-identical indicators. Cluster sizes must not
// exceed k = w^2+wz+z^2, and k must equal N_b so every member has an
// indicator.
struct NetworkPlan {
  PlacementPlan base;
  int k = 0;
  std::map<int, int> fap_coindex;  // fap id -> co-index
  std::vector<int> uav_ids;        // 0-based UAV indexes; kUavNodeBase is added on output
};

NetworkPlan intercluster_copy(const PlacementPlan& plan,
                              const std::vector<std::vector<int>>& clusters,
                              const std::vector<int>& uav_ids);

struct VerifyReport {
  bool ok = true;
  std::vector<std::string> violations;
};

// Checks row sums, pairwise orthogonality, segment-partition coverage when
// N_b = N_s, capacity accounting (complete = 1 unit, segment = 1/N_s unit),
// cluster-size-vs-k consistency, and co-index equality.
VerifyReport verify_plan(const NetworkPlan& plan);

// ---- plan file format --------------------------------------------------------

// CSV rows `node_id,kind,content_id,segment_id` (kind complete|segment,
// segment_id 0 for complete records) under a versioned header.
std::string serialize_plan(const NetworkPlan& plan, const std::string& header_meta);

// Flattened per-node view consumed by the simulator.
struct NodePlacement {
  double alpha = 0.3;
  int c_f = 0;
  int c_u = 0;
  int n_s = 7;
  int n_b = 7;
  int w = 1;
  int z = 2;
  std::map<int, std::vector<int>> complete;    // node id -> content ids
  std::map<int, std::map<int, int>> segments;  // fap id -> content -> segment
};

NodePlacement parse_plan(const std::string& csv);
NodePlacement to_node_placement(const NetworkPlan& plan);

}  // namespace mtec::placement
