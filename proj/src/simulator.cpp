#include "mtec/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "mtec/common.hpp"
#include "mtec/rng.hpp"

namespace mtec::simulator {

namespace {

double dist(const trace::PlanarPoint& a, const trace::PlanarPoint& b) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

// pointy-top axial hex cell for a planar point, cell circumradius R
std::pair<int, int> hex_cell(const trace::PlanarPoint& p, double R) {
  const double qf = (std::sqrt(3.0) / 3.0 * p.x - p.y / 3.0) / R;
  const double rf = (2.0 / 3.0 * p.y) / R;
  // cube rounding
  double x = qf, z = rf, y = -x - z;
  double rx = std::round(x), ry = std::round(y), rz = std::round(z);
  const double dx = std::abs(rx - x), dy = std::abs(ry - y), dz = std::abs(rz - z);
  if (dx > dy && dx > dz)
    rx = -ry - rz;
  else if (dy > dz)
    ry = -rx - rz;
  else
    rz = -rx - ry;
  return {static_cast<int>(rx), static_cast<int>(rz)};
}

}  // namespace

KmeansResult kmeans(const std::vector<trace::PlanarPoint>& points, int k, std::uint64_t seed,
                    int max_iter) {
  if (k <= 0) throw ConfigError("kmeans needs k >= 1");
  if (static_cast<int>(points.size()) < k)
    throw DataError("kmeans needs at least k points (" + std::to_string(points.size()) +
                    " < " + std::to_string(k) + ")");
  KmeansResult res;
  Rng rng(seed);

  // k-means++ seeding
  std::vector<std::size_t> chosen;
  chosen.push_back(rng.uniform_int(points.size()));
  std::vector<double> d2(points.size());
  while (static_cast<int>(chosen.size()) < k) {
    double total = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c : chosen) best = std::min(best, dist(points[i], points[c]));
      d2[i] = best * best;
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0) {
      double u = rng.uniform() * total, acc = 0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        acc += d2[i];
        if (u <= acc) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.uniform_int(points.size());
    }
    chosen.push_back(pick);
  }
  for (std::size_t c : chosen) res.centroids.push_back(points[c]);

  res.assignment.assign(points.size(), 0);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = iter == 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      int best = 0;
      double best_d = dist(points[i], res.centroids[0]);
      for (int c = 1; c < k; ++c) {
        const double d = dist(points[i], res.centroids[static_cast<std::size_t>(c)]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (res.assignment[i] != best) {
        res.assignment[i] = best;
        changed = true;
      }
    }
    res.iterations = iter + 1;
    if (!changed) break;

    std::vector<double> sx(static_cast<std::size_t>(k), 0), sy(static_cast<std::size_t>(k), 0);
    std::vector<int> count(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      sx[static_cast<std::size_t>(res.assignment[i])] += points[i].x;
      sy[static_cast<std::size_t>(res.assignment[i])] += points[i].y;
      ++count[static_cast<std::size_t>(res.assignment[i])];
    }
    for (int c = 0; c < k; ++c) {
      if (count[static_cast<std::size_t>(c)] > 0) {
        res.centroids[static_cast<std::size_t>(c)] = {
            sx[static_cast<std::size_t>(c)] / count[static_cast<std::size_t>(c)],
            sy[static_cast<std::size_t>(c)] / count[static_cast<std::size_t>(c)]};
      } else {
        // re-seed an emptied cluster at the point farthest from all centroids
        std::size_t far = 0;
        double far_d = -1;
        for (std::size_t i = 0; i < points.size(); ++i) {
          double nearest = std::numeric_limits<double>::infinity();
          for (int c2 = 0; c2 < k; ++c2)
            nearest = std::min(nearest, dist(points[i], res.centroids[static_cast<std::size_t>(c2)]));
          if (nearest > far_d) {
            far_d = nearest;
            far = i;
          }
        }
        res.centroids[static_cast<std::size_t>(c)] = points[far];
      }
    }
  }
  return res;
}

Topology generate_topology(const TopologyConfig& cfg) {
  if (cfg.area_side <= 0) throw ConfigError("topology area must be positive");
  if (cfg.lambda_fap <= 0) throw ConfigError("FAP intensity must be positive");
  if (cfg.n_uav < 0 || cfg.n_users < 1 || cfg.gmm_components < 1)
    throw ConfigError("topology needs n_uav >= 0, n_users >= 1, gmm_components >= 1");
  if (cfg.indoor_prob < 0 || cfg.indoor_prob > 1)
    throw ConfigError("indoor probability must be in [0, 1]");
  if (cfg.speed_min < 0 || cfg.speed_max < cfg.speed_min)
    throw ConfigError("speed range invalid");
  if (cfg.cell_core_radius > cfg.fap_range)
    throw ConfigError("cell core radius must not exceed FAP range");

  const int k = placement::hex_cluster_size(cfg.w, cfg.z);
  Topology topo;
  topo.area_side = cfg.area_side;
  topo.cell_core_radius = cfg.cell_core_radius;
  topo.fap_range = cfg.fap_range;
  topo.uav_range = cfg.uav_range;
  topo.v_th = cfg.v_th;
  topo.seed = cfg.seed;

  // FAPs: Poisson count, uniform positions
  Rng fap_rng(derive_seed(cfg.seed, 11));
  const double area = cfg.area_side * cfg.area_side;
  const long long n_faps = fap_rng.poisson(cfg.lambda_fap * area);
  if (n_faps < k)
    throw DataError("PPP drew " + std::to_string(n_faps) + " FAPs, fewer than one inter-cluster (k=" +
                    std::to_string(k) + "); increase lambda_fap or area");
  for (long long i = 0; i < n_faps; ++i)
    topo.faps.push_back({fap_rng.uniform(0.0, cfg.area_side), fap_rng.uniform(0.0, cfg.area_side)});

  // user mixture
  Rng mix_rng(derive_seed(cfg.seed, 12));
  for (int c = 0; c < cfg.gmm_components; ++c) {
    GmmComponent g;
    g.mx = mix_rng.uniform(0.0, cfg.area_side);
    g.my = mix_rng.uniform(0.0, cfg.area_side);
    g.sigma = cfg.gmm_sigma;
    g.weight = 1.0 / cfg.gmm_components;
    topo.mixture.push_back(g);
  }

  Rng user_rng(derive_seed(cfg.seed, 13));
  for (int u = 0; u < cfg.n_users; ++u) {
    SimUser su;
    su.user_id = u + 1;
    su.component = static_cast<int>(user_rng.uniform_int(static_cast<std::uint64_t>(cfg.gmm_components)));
    su.speed = user_rng.uniform(cfg.speed_min, cfg.speed_max);
    su.indoor = user_rng.uniform() < cfg.indoor_prob;
    const GmmComponent& g = topo.mixture[static_cast<std::size_t>(su.component)];
    su.home_x = g.mx + user_rng.normal() * g.sigma;
    su.home_y = g.my + user_rng.normal() * g.sigma;
    topo.users.push_back(su);
  }

  // UAVs hover over user concentration centroids
  if (cfg.n_uav > 0) {
    std::vector<trace::PlanarPoint> homes;
    homes.reserve(topo.users.size());
    for (const auto& u : topo.users) homes.push_back({u.home_x, u.home_y});
    KmeansResult km = kmeans(homes, cfg.n_uav, derive_seed(cfg.seed, 14));
    topo.uavs = km.centroids;
  }

  // inter-clusters: group FAPs by hex cell, chunk oversized cells to <= k
  const double cell_r = std::sqrt(2.0 * k / (3.0 * std::sqrt(3.0) * cfg.lambda_fap));
  std::map<std::pair<int, int>, std::vector<int>> cells;
  for (std::size_t f = 0; f < topo.faps.size(); ++f)
    cells[hex_cell(topo.faps[f], cell_r)].push_back(static_cast<int>(f));
  topo.fap_cluster.assign(topo.faps.size(), -1);
  for (auto& [cell, members] : cells) {
    std::sort(members.begin(), members.end(), [&](int a, int b) {
      const auto& pa = topo.faps[static_cast<std::size_t>(a)];
      const auto& pb = topo.faps[static_cast<std::size_t>(b)];
      if (pa.y != pb.y) return pa.y < pb.y;
      if (pa.x != pb.x) return pa.x < pb.x;
      return a < b;
    });
    for (std::size_t start = 0; start < members.size(); start += static_cast<std::size_t>(k)) {
      std::vector<int> group(members.begin() + static_cast<std::ptrdiff_t>(start),
                             members.begin() + static_cast<std::ptrdiff_t>(
                                 std::min(members.size(), start + static_cast<std::size_t>(k))));
      const int cluster_id = static_cast<int>(topo.clusters.size());
      for (int f : group) topo.fap_cluster[static_cast<std::size_t>(f)] = cluster_id;
      topo.clusters.push_back(std::move(group));
    }
  }
  return topo;
}

namespace {

int nearest_node(const std::vector<trace::PlanarPoint>& nodes, trace::PlanarPoint pos,
                 double* out_dist) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const double d = dist(nodes[i], pos);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  if (out_dist) *out_dist = best_d;
  return best;
}

bool holds_complete(const placement::NodePlacement& plan, int node_id, int content_id) {
  auto it = plan.complete.find(node_id);
  if (it == plan.complete.end()) return false;
  return std::find(it->second.begin(), it->second.end(), content_id) != it->second.end();
}

}  // namespace

DeliveryOutcome route_request(const SimUser& user, trace::PlanarPoint pos, int content_id,
                              const placement::NodePlacement& plan, const Topology& topo,
                              double content_size) {
  if (content_id < 1) throw DataError("unknown content id " + std::to_string(content_id));
  DeliveryOutcome out;
  out.bytes_from_server = content_size;

  const bool fap_service = user.indoor || user.speed < topo.v_th;
  if (!fap_service) {
    double d = 0;
    const int uav = nearest_node(topo.uavs, pos, &d);
    if (uav < 0 || d > topo.uav_range) return out;  // uncovered: straight to server
    out.touched_cache = true;
    if (holds_complete(plan, placement::kUavNodeBase + uav, content_id)) {
      out.served_by = ServedBy::uav;
      out.bytes_from_cache = content_size;
      out.bytes_from_server = 0;
      out.hit = true;
    }
    return out;
  }

  double nearest_d = 0;
  const int nearest_fap = nearest_node(topo.faps, pos, &nearest_d);
  if (nearest_fap < 0 || nearest_d > topo.fap_range) return out;
  out.touched_cache = true;
  const int cluster = topo.fap_cluster[static_cast<std::size_t>(nearest_fap)];
  const auto& members = topo.clusters[static_cast<std::size_t>(cluster)];

  // complete (popular) storage: single transmission from a close holder,
  // joint transmission by the whole inter-cluster otherwise
  double holder_d = std::numeric_limits<double>::infinity();
  for (std::size_t f = 0; f < topo.faps.size(); ++f)
    if (holds_complete(plan, static_cast<int>(f), content_id))
      holder_d = std::min(holder_d, dist(topo.faps[f], pos));
  if (holder_d <= topo.cell_core_radius) {
    out.served_by = ServedBy::fap_st;
    out.bytes_from_cache = content_size;
    out.bytes_from_server = 0;
    out.hit = true;
    return out;
  }
  bool cluster_holds_all = !members.empty();
  for (int f : members)
    cluster_holds_all = cluster_holds_all && holds_complete(plan, f, content_id);
  if (cluster_holds_all) {
    out.served_by = ServedBy::fap_jt;
    out.bytes_from_cache = content_size;
    out.bytes_from_server = 0;
    out.hit = true;
    return out;
  }

  // coded (mediocre) storage: count distinct segments reachable in-cluster
  std::set<int> segments;
  for (int f : members) {
    if (dist(topo.faps[static_cast<std::size_t>(f)], pos) > topo.fap_range) continue;
    auto it = plan.segments.find(f);
    if (it == plan.segments.end()) continue;
    auto ct = it->second.find(content_id);
    if (ct != it->second.end()) segments.insert(ct->second);
  }
  if (!segments.empty()) {
    const int found = static_cast<int>(segments.size());
    out.bytes_from_cache = content_size * found / plan.n_s;
    out.bytes_from_server = content_size - out.bytes_from_cache;
    if (found == plan.n_s) {
      out.served_by = ServedBy::fap_jt;
      out.hit = true;
      out.bytes_from_server = 0;  // exact, avoids residual rounding
      out.bytes_from_cache = content_size;
    } else {
      out.served_by = ServedBy::mixed;
    }
  }
  return out;
}

std::string policy_name(Policy p) {
  switch (p) {
    case Policy::mtec_plan: return "mtec_plan";
    case Policy::lru: return "lru";
    case Policy::lfu: return "lfu";
    case Policy::oracle: return "oracle";
  }
  return "unknown";
}

LruCache::LruCache(int capacity) : capacity_(capacity) {
  if (capacity < 1) throw ConfigError("cache capacity must be >= 1");
}

bool LruCache::access(int content_id) {
  auto it = std::find(order_.begin(), order_.end(), content_id);
  if (it != order_.end()) {
    order_.erase(it);
    order_.insert(order_.begin(), content_id);
    return true;
  }
  if (static_cast<int>(order_.size()) >= capacity_) order_.pop_back();
  order_.insert(order_.begin(), content_id);
  return false;
}

LfuCache::LfuCache(int capacity) : capacity_(capacity) {
  if (capacity < 1) throw ConfigError("cache capacity must be >= 1");
}

bool LfuCache::access(int content_id) {
  ++clock_;
  ++freq_[content_id];
  auto it = last_use_.find(content_id);
  if (it != last_use_.end()) {
    it->second = clock_;
    return true;
  }
  if (static_cast<int>(last_use_.size()) >= capacity_) {
    int victim = -1;
    long long victim_freq = 0, victim_use = 0;
    for (const auto& [c, use] : last_use_) {
      const long long f = freq_.at(c);
      if (victim < 0 || f < victim_freq || (f == victim_freq && use < victim_use)) {
        victim = c;
        victim_freq = f;
        victim_use = use;
      }
    }
    last_use_.erase(victim);
  }
  last_use_[content_id] = clock_;
  return false;
}

namespace {

struct Accumulator {
  std::map<std::int64_t, IntervalMetrics> intervals;

  void add(std::int64_t key, const DeliveryOutcome& o, double size) {
    IntervalMetrics& m = intervals[key];
    m.updating_time = key;
    m.requests += 1;
    m.hits += o.hit ? 1 : 0;
    m.cache_bytes += o.bytes_from_cache;
    if (o.touched_cache) m.managed_bytes += size;
  }
};

}  // namespace

MetricsReport replay(const std::vector<trace::RequestEvent>& events,
                     const PlanSchedule& schedule, const Topology& topo, Policy policy,
                     const SimOptions& opt) {
  if (opt.content_size <= 0) throw ConfigError("content size must be positive");
  for (std::size_t i = 1; i < events.size(); ++i)
    if (events[i].timestamp < events[i - 1].timestamp)
      throw DataError("replay requires a time-sorted trace");
  if (policy == Policy::mtec_plan && schedule.entries.empty())
    throw DataError("no placement plan provided; run the place stage first");
  for (std::size_t i = 1; i < schedule.entries.size(); ++i)
    if (schedule.entries[i].first <= schedule.entries[i - 1].first)
      throw DataError("plan schedule must have strictly increasing updating times");
  if (topo.users.empty()) throw DataError("topology has no users");
  const bool reactive = policy == Policy::lru || policy == Policy::lfu;
  if (reactive && opt.reactive_c_f < 1)
    throw ConfigError("reactive policy needs a positive FAP cache capacity");
  if (reactive && !topo.uavs.empty() && opt.reactive_c_u < 1)
    throw ConfigError("reactive policy needs a positive UAV cache capacity");

  // reactive per-node caches, created lazily
  std::map<int, LruCache> lru;
  std::map<int, LfuCache> lfu;
  auto reactive_access = [&](int node_id, int capacity, int content) {
    if (policy == Policy::lru) {
      auto it = lru.find(node_id);
      if (it == lru.end()) it = lru.emplace(node_id, LruCache(capacity)).first;
      return it->second.access(content);
    }
    auto it = lfu.find(node_id);
    if (it == lfu.end()) it = lfu.emplace(node_id, LfuCache(capacity)).first;
    return it->second.access(content);
  };

  Accumulator acc;
  const std::uint64_t pos_stream = derive_seed(topo.seed, 0x706f73);
  for (std::size_t idx = 0; idx < events.size(); ++idx) {
    const auto& ev = events[idx];
    // pre-window events only matter to policies that carry state
    if (!reactive && ev.timestamp < opt.metrics_start) continue;
    if (ev.content_id < 1 || (opt.n_contents > 0 && ev.content_id > opt.n_contents))
      throw DataError("unknown content id " + std::to_string(ev.content_id) +
                      " at trace position " + std::to_string(idx));
    const SimUser& user =
        topo.users[static_cast<std::size_t>((ev.user_id - 1) % static_cast<int>(topo.users.size()))];
    // per-request position, identical for every policy
    Rng pos_rng(derive_seed(pos_stream, static_cast<std::uint64_t>(idx)));
    const GmmComponent& g = topo.mixture[static_cast<std::size_t>(user.component)];
    trace::PlanarPoint pos{g.mx + pos_rng.normal() * g.sigma,
                           g.my + pos_rng.normal() * g.sigma};

    DeliveryOutcome out;
    out.bytes_from_server = opt.content_size;
    std::int64_t interval_key = opt.metrics_start;

    switch (policy) {
      case Policy::oracle:
        out.served_by = ServedBy::fap_st;
        out.bytes_from_cache = opt.content_size;
        out.bytes_from_server = 0;
        out.hit = true;
        out.touched_cache = true;
        break;
      case Policy::mtec_plan: {
        auto it = std::upper_bound(
            schedule.entries.begin(), schedule.entries.end(), ev.timestamp,
            [](std::int64_t t, const auto& e) { return t < e.first; });
        if (it == schedule.entries.begin())
          throw DataError("no placement plan active at t=" + std::to_string(ev.timestamp) +
                          "; earliest updating time is " +
                          std::to_string(schedule.entries.front().first));
        --it;
        interval_key = it->first;
        out = route_request(user, pos, ev.content_id, it->second, topo, opt.content_size);
        break;
      }
      case Policy::lru:
      case Policy::lfu: {
        const bool fap_service = user.indoor || user.speed < topo.v_th;
        int node_id = -1;
        int capacity = 0;
        double d = 0;
        if (fap_service) {
          const int f = nearest_node(topo.faps, pos, &d);
          if (f >= 0 && d <= topo.fap_range) {
            node_id = f;
            capacity = opt.reactive_c_f;
          }
        } else {
          const int u = nearest_node(topo.uavs, pos, &d);
          if (u >= 0 && d <= topo.uav_range) {
            node_id = placement::kUavNodeBase + u;
            capacity = opt.reactive_c_u;
          }
        }
        if (node_id >= 0) {
          out.touched_cache = true;
          if (reactive_access(node_id, capacity, ev.content_id)) {
            out.served_by = fap_service ? ServedBy::fap_st : ServedBy::uav;
            out.bytes_from_cache = opt.content_size;
            out.bytes_from_server = 0;
            out.hit = true;
          }
        }
        break;
      }
    }

    if (ev.timestamp >= opt.metrics_start) acc.add(interval_key, out, opt.content_size);
  }

  MetricsReport rep;
  rep.policy = policy;
  for (auto& [key, m] : acc.intervals) {
    rep.intervals.push_back(m);
    rep.summary.requests += m.requests;
    rep.summary.hits += m.hits;
    rep.summary.cache_bytes += m.cache_bytes;
    rep.summary.managed_bytes += m.managed_bytes;
  }
  rep.cache_hit_ratio = rep.summary.requests > 0
                            ? static_cast<double>(rep.summary.hits) / rep.summary.requests
                            : 0.0;
  rep.transferred_byte_volume =
      rep.summary.managed_bytes > 0 ? rep.summary.cache_bytes / rep.summary.managed_bytes : 0.0;
  return rep;
}

std::string metrics_csv(const std::vector<MetricsReport>& reports,
                        const std::string& header_meta) {
  std::ostringstream out;
  if (!header_meta.empty()) out << "# " << header_meta << '\n';
  out << "# byte volume denominator counts only requests that touched a cache\n";
  out << "policy,updating_time,requests,hits,hit_ratio,cache_bytes,managed_bytes,byte_volume\n";
  for (const auto& rep : reports) {
    for (const auto& m : rep.intervals) {
      const double ratio = m.requests > 0 ? static_cast<double>(m.hits) / m.requests : 0.0;
      const double bv = m.managed_bytes > 0 ? m.cache_bytes / m.managed_bytes : 0.0;
      out << policy_name(rep.policy) << ',' << m.updating_time << ',' << m.requests << ','
          << m.hits << ',' << format_double(ratio) << ',' << format_double(m.cache_bytes)
          << ',' << format_double(m.managed_bytes) << ',' << format_double(bv) << '\n';
    }
    out << policy_name(rep.policy) << ",all," << rep.summary.requests << ','
        << rep.summary.hits << ',' << format_double(rep.cache_hit_ratio) << ','
        << format_double(rep.summary.cache_bytes) << ','
        << format_double(rep.summary.managed_bytes) << ','
        << format_double(rep.transferred_byte_volume) << '\n';
  }
  return out.str();
}

}  // namespace mtec::simulator
