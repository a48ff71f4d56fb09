#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mtec/placement.hpp"
#include "mtec/trace.hpp"

namespace mtec::simulator {

struct GmmComponent {
  double mx = 0, my = 0;
  double sigma = 0;  // isotropic per-axis std dev
  double weight = 1;
};

struct SimUser {
  int user_id = 0;
  int component = 0;
  double speed = 0;  // m/s
  bool indoor = false;
  double home_x = 0, home_y = 0;  // draw used for UAV clustering
};

struct Topology {
  std::vector<trace::PlanarPoint> faps;
  std::vector<trace::PlanarPoint> uavs;
  std::vector<std::vector<int>> clusters;  // inter-cluster -> member fap ids
  std::vector<int> fap_cluster;            // fap id -> inter-cluster id
  std::vector<SimUser> users;
  std::vector<GmmComponent> mixture;
  double area_side = 0;
  double cell_core_radius = 0;
  double fap_range = 0;
  double uav_range = 0;
  double v_th = 0;
  std::uint64_t seed = 0;
};

struct TopologyConfig {
  double area_side = 1000.0;      // square region [0, side]^2, meters
  double lambda_fap = 21e-6;      // FAP intensity per m^2 (21 expected default)
  int n_uav = 3;
  int n_users = 100;
  int gmm_components = 3;
  double gmm_sigma = 80.0;
  double indoor_prob = 0.5;
  double speed_min = 0.0;
  double speed_max = 20.0;
  double v_th = 10.0;             // below: FAP service; at/above: UAV service
  double cell_core_radius = 120.0;
  double fap_range = 300.0;
  double uav_range = 500.0;
  int w = 1, z = 2;               // hex reuse walk, cluster size w^2+wz+z^2
  std::uint64_t seed = 1;
};

// PPP FAP draw, GMM user population, UAVs at k-means centroids of user home
// positions, inter-clusters of at most k FAPs grouped on a hex tiling.
Topology generate_topology(const TopologyConfig& cfg);

struct KmeansResult {
  std::vector<trace::PlanarPoint> centroids;
  std::vector<int> assignment;
  int iterations = 0;
};

// Seeded k-means++ initialization plus Lloyd iterations; an emptied cluster
// is re-seeded at the point farthest from every current centroid.
KmeansResult kmeans(const std::vector<trace::PlanarPoint>& points, int k, std::uint64_t seed,
                    int max_iter = 100);

enum class ServedBy { fap_st, fap_jt, uav, server, mixed };

struct DeliveryOutcome {
  ServedBy served_by = ServedBy::server;
  double bytes_from_cache = 0;
  double bytes_from_server = 0;
  bool hit = false;           // fully served from caches
  bool touched_cache = false; // at least one caching node handled the request
};

// Plan-based delivery decision tree: indoor or slow users go to FAPs, fast
// outdoor users to UAVs; popular-complete contents are served ST inside the
// cell core or JT at the cell edge; mediocre contents gather distinct coded
// segments from reachable inter-cluster FAPs; everything else falls back to
// the server.
DeliveryOutcome route_request(const SimUser& user, trace::PlanarPoint pos, int content_id,
                              const placement::NodePlacement& plan, const Topology& topo,
                              double content_size);

enum class Policy { mtec_plan, lru, lfu, oracle };

std::string policy_name(Policy p);

// Plans keyed by updating time; the entry active at time t is the last one
// with updating_time <= t.
struct PlanSchedule {
  std::vector<std::pair<std::int64_t, placement::NodePlacement>> entries;
};

struct IntervalMetrics {
  std::int64_t updating_time = 0;
  long long requests = 0;
  long long hits = 0;
  double cache_bytes = 0;
  double managed_bytes = 0;  // bytes of requests that touched any cache
};

struct MetricsReport {
  Policy policy = Policy::mtec_plan;
  std::vector<IntervalMetrics> intervals;
  IntervalMetrics summary;
  double cache_hit_ratio = 0;
  double transferred_byte_volume = 0;
};

struct SimOptions {
  double content_size = 1.0;
  int n_contents = 0;        // 0 disables the id upper-bound check
  int reactive_c_f = 0;      // per-FAP capacity for lru/lfu
  int reactive_c_u = 0;      // per-UAV capacity for lru/lfu
  std::int64_t metrics_start = 0;  // earlier events only warm reactive caches
};

// Replays a time-sorted trace. mtec_plan routes against the active plan;
// lru/lfu maintain per-node reactive caches of complete contents; oracle
// serves everything from cache.
MetricsReport replay(const std::vector<trace::RequestEvent>& events,
                     const PlanSchedule& schedule, const Topology& topo, Policy policy,
                     const SimOptions& opt);

// Long-format CSV: policy,updating_time,requests,hits,hit_ratio,cache_bytes,
// managed_bytes,byte_volume; one summary row per policy.
std::string metrics_csv(const std::vector<MetricsReport>& reports,
                        const std::string& header_meta);

// ---- reactive cache policies ---------------------------------------------------

class LruCache {
 public:
  explicit LruCache(int capacity);
  // hit: refresh recency. miss: insert, evicting the least recently used.
  bool access(int content_id);

 private:
  int capacity_;
  std::vector<int> order_;  // front = most recently used
};

// Perfect LFU: per-node frequency counters over the full request history,
// never decaying; eviction takes the lowest count, ties broken least-recent.
class LfuCache {
 public:
  explicit LfuCache(int capacity);
  bool access(int content_id);

 private:
  int capacity_;
  long long clock_ = 0;
  std::map<int, long long> freq_;
  std::map<int, long long> last_use_;  // cached contents only
};

}  // namespace mtec::simulator
