#include <algorithm>
#include <cmath>
#include <list>
#include <map>
#include <set>
#include <vector>

#include "doctest.h"
#include "mtec/common.hpp"
#include "mtec/placement.hpp"
#include "mtec/rng.hpp"
#include "mtec/simulator.hpp"

using namespace mtec;
using namespace mtec::simulator;
using mtec::trace::PlanarPoint;
using mtec::trace::RequestEvent;

namespace {

// Hand-built single-cluster topology. With gmm_sigma = 0 every replay
// position draw lands exactly on the mixture mean, which makes geometry
// deterministic without touching the RNG.
Topology manual_topology(std::vector<PlanarPoint> faps, std::vector<PlanarPoint> uavs,
                         PlanarPoint user_pos, bool indoor, double speed) {
  Topology topo;
  topo.faps = std::move(faps);
  topo.uavs = std::move(uavs);
  std::vector<int> members;
  for (std::size_t f = 0; f < topo.faps.size(); ++f) members.push_back(static_cast<int>(f));
  topo.clusters = {members};
  topo.fap_cluster.assign(topo.faps.size(), 0);
  topo.mixture = {GmmComponent{user_pos.x, user_pos.y, 0.0, 1.0}};
  SimUser u;
  u.user_id = 1;
  u.component = 0;
  u.speed = speed;
  u.indoor = indoor;
  topo.users = {u};
  topo.area_side = 1000;
  topo.cell_core_radius = 60;
  topo.fap_range = 500;
  topo.uav_range = 500;
  topo.v_th = 10;
  topo.seed = 99;
  return topo;
}

placement::NodePlacement empty_plan(int n_s = 7) {
  placement::NodePlacement p;
  p.n_s = n_s;
  return p;
}

SimUser walker(bool indoor, double speed) {
  SimUser u;
  u.user_id = 1;
  u.component = 0;
  u.speed = speed;
  u.indoor = indoor;
  return u;
}

std::vector<RequestEvent> one_user_trace(const std::vector<std::pair<std::int64_t, int>>& reqs) {
  std::vector<RequestEvent> ev;
  for (const auto& [t, c] : reqs) ev.push_back({t, 1, c});
  return ev;
}

// Independent reference caches, deliberately written in a different style
// from the library implementations.
class RefLru {
 public:
  explicit RefLru(int cap) : cap_(cap) {}
  bool access(int id) {
    auto it = std::find(items_.begin(), items_.end(), id);
    if (it != items_.end()) {
      items_.splice(items_.begin(), items_, it);
      return true;
    }
    if (static_cast<int>(items_.size()) == cap_) items_.pop_back();
    items_.push_front(id);
    return false;
  }

 private:
  int cap_;
  std::list<int> items_;
};

class RefLfu {
 public:
  explicit RefLfu(int cap) : cap_(cap) {}
  bool access(int id) {
    ++tick_;
    ++freq_[id];
    if (cached_.count(id)) {
      cached_[id] = tick_;
      return true;
    }
    if (static_cast<int>(cached_.size()) == cap_) {
      int victim = -1;
      for (const auto& [c, used] : cached_) {
        if (victim < 0) {
          victim = c;
          continue;
        }
        const long long fv = freq_[victim], fc = freq_[c];
        if (fc < fv || (fc == fv && used < cached_[victim])) victim = c;
      }
      cached_.erase(victim);
    }
    cached_[id] = tick_;
    return false;
  }

 private:
  int cap_;
  long long tick_ = 0;
  std::map<int, long long> freq_;
  std::map<int, long long> cached_;
};

}  // namespace

TEST_SUITE("simulator") {

TEST_CASE("kmeans recovers well-separated blobs") {
  std::vector<PlanarPoint> pts;
  const std::vector<PlanarPoint> centers{{0, 0}, {100, 0}, {0, 100}};
  Rng rng(31);
  for (const auto& c : centers)
    for (int i = 0; i < 6; ++i) pts.push_back({c.x + rng.uniform(-1, 1), c.y + rng.uniform(-1, 1)});

  KmeansResult km = kmeans(pts, 3, 7);
  REQUIRE(km.centroids.size() == 3);
  // points of one blob all land in the same cluster
  for (int blob = 0; blob < 3; ++blob)
    for (int i = 1; i < 6; ++i)
      CHECK(km.assignment[static_cast<std::size_t>(blob * 6 + i)] ==
            km.assignment[static_cast<std::size_t>(blob * 6)]);
  // each centroid sits on one of the true centers
  for (const auto& c : centers) {
    bool matched = false;
    for (const auto& k : km.centroids)
      matched = matched || (std::abs(k.x - c.x) < 2 && std::abs(k.y - c.y) < 2);
    CHECK(matched);
  }

  // k = 1 converges to the global mean
  KmeansResult one = kmeans(pts, 1, 7);
  double mx = 0, my = 0;
  for (const auto& p : pts) {
    mx += p.x;
    my += p.y;
  }
  CHECK(one.centroids[0].x == doctest::Approx(mx / static_cast<double>(pts.size())).epsilon(1e-12));
  CHECK(one.centroids[0].y == doctest::Approx(my / static_cast<double>(pts.size())).epsilon(1e-12));

  // same seed, same result
  KmeansResult again = kmeans(pts, 3, 7);
  CHECK(again.assignment == km.assignment);

  CHECK_THROWS_AS(kmeans(pts, 0, 7), ConfigError);
  CHECK_THROWS_AS(kmeans({{0, 0}}, 2, 7), DataError);
}

TEST_CASE("generate_topology is seed-deterministic and clusters within k") {
  TopologyConfig cfg;
  cfg.area_side = 1000;
  cfg.lambda_fap = 6e-5;
  cfg.n_uav = 2;
  cfg.n_users = 20;
  cfg.seed = 5;

  Topology a = generate_topology(cfg);
  Topology b = generate_topology(cfg);
  REQUIRE(!a.faps.empty());
  REQUIRE(a.faps.size() == b.faps.size());
  for (std::size_t i = 0; i < a.faps.size(); ++i) {
    CHECK(a.faps[i].x == b.faps[i].x);
    CHECK(a.faps[i].y == b.faps[i].y);
  }
  CHECK(a.clusters == b.clusters);
  REQUIRE(a.users.size() == 20);
  for (std::size_t i = 0; i < a.users.size(); ++i) {
    CHECK(a.users[i].speed == b.users[i].speed);
    CHECK(a.users[i].component < static_cast<int>(a.mixture.size()));
    CHECK(a.users[i].speed >= cfg.speed_min);
    CHECK(a.users[i].speed <= cfg.speed_max);
  }
  CHECK(a.uavs.size() == 2);

  // every FAP belongs to exactly one cluster of at most k = 7 members
  std::set<int> seen;
  for (std::size_t c = 0; c < a.clusters.size(); ++c) {
    CHECK(a.clusters[c].size() <= 7);
    CHECK(!a.clusters[c].empty());
    for (int f : a.clusters[c]) {
      CHECK(seen.insert(f).second);
      CHECK(a.fap_cluster[static_cast<std::size_t>(f)] == static_cast<int>(c));
    }
  }
  CHECK(seen.size() == a.faps.size());

  TopologyConfig bad = cfg;
  bad.area_side = 0;
  CHECK_THROWS_AS(generate_topology(bad), ConfigError);
  bad = cfg;
  bad.lambda_fap = 0;
  CHECK_THROWS_AS(generate_topology(bad), ConfigError);
  bad = cfg;
  bad.indoor_prob = 1.5;
  CHECK_THROWS_AS(generate_topology(bad), ConfigError);
  bad = cfg;
  bad.cell_core_radius = bad.fap_range + 1;
  CHECK_THROWS_AS(generate_topology(bad), ConfigError);
  bad = cfg;
  bad.speed_max = -1;
  CHECK_THROWS_AS(generate_topology(bad), ConfigError);
}

TEST_CASE("LruCache follows move-to-front with back eviction") {
  LruCache c(2);
  CHECK_FALSE(c.access(1));  // miss, cache {1}
  CHECK_FALSE(c.access(2));  // miss, cache {2,1}
  CHECK(c.access(1));        // hit, refresh -> {1,2}
  CHECK_FALSE(c.access(3));  // evicts 2 -> {3,1}
  CHECK_FALSE(c.access(2));  // evicts 1 -> {2,3}
  CHECK(c.access(3));
  CHECK_FALSE(c.access(1));

  CHECK_THROWS_AS(LruCache(0), ConfigError);
}

TEST_CASE("LfuCache keeps global frequencies and breaks ties least-recent") {
  LfuCache c(2);
  CHECK_FALSE(c.access(10));  // f(10)=1
  CHECK(c.access(10));        // f=2
  CHECK(c.access(10));        // f=3
  CHECK_FALSE(c.access(20));  // f(20)=1, cache {10,20}
  CHECK_FALSE(c.access(30));  // evicts 20 (lowest f), cache {10,30}
  CHECK_FALSE(c.access(20));  // f(20)=2 now, evicts 30 (f=1), cache {10,20}
  CHECK(c.access(10));

  // tie on frequency evicts the least recently used
  LfuCache t(2);
  t.access(1);         // f=1, used@1
  t.access(2);         // f=1, used@2
  CHECK_FALSE(t.access(3));  // 1 and 2 tie at f=1; 1 is older -> evicted
  CHECK(t.access(2));
  CHECK_FALSE(t.access(1));

  CHECK_THROWS_AS(LfuCache(0), ConfigError);
}

TEST_CASE("route_request serves popular content ST inside the core, JT otherwise") {
  Topology topo = manual_topology({{0, 0}, {50, 0}, {400, 0}}, {}, {0, 0}, true, 0);
  placement::NodePlacement plan = empty_plan();
  plan.complete[1] = {1};        // content 1 complete on FAP 1 only
  for (int f : {0, 1, 2}) plan.complete[f].push_back(2);  // content 2 everywhere

  SimUser u = walker(true, 0);

  // holder FAP 1 is 50 m from the user: inside the 60 m core -> ST
  DeliveryOutcome st = route_request(u, {0, 0}, 1, plan, topo, 1.0);
  CHECK(st.served_by == ServedBy::fap_st);
  CHECK(st.hit);
  CHECK(st.bytes_from_cache == 1.0);
  CHECK(st.bytes_from_server == 0.0);

  // from (200,0) the nearest holder is 150 m away: no ST, and the cluster
  // does not hold content 1 on every member -> server
  DeliveryOutcome miss = route_request(u, {200, 0}, 1, plan, topo, 1.0);
  CHECK_FALSE(miss.hit);
  CHECK(miss.touched_cache);  // a FAP was reachable, it just lacked the content
  CHECK(miss.bytes_from_server == 1.0);

  // content 2 is on every cluster member -> joint transmission hit
  DeliveryOutcome jt = route_request(u, {200, 0}, 2, plan, topo, 1.0);
  CHECK(jt.served_by == ServedBy::fap_jt);
  CHECK(jt.hit);
  CHECK(jt.bytes_from_cache == 1.0);

  // outside every FAP's range the request goes straight to the server
  Topology far = manual_topology({{0, 0}}, {}, {0, 0}, true, 0);
  DeliveryOutcome server = route_request(u, {900, 0}, 2, plan, far, 1.0);
  CHECK_FALSE(server.touched_cache);
  CHECK(server.bytes_from_server == 1.0);

  CHECK_THROWS_AS(route_request(u, {0, 0}, 0, plan, topo, 1.0), DataError);
}

TEST_CASE("route_request sends fast outdoor users to UAVs") {
  Topology topo = manual_topology({{0, 0}}, {{10, 0}}, {0, 0}, false, 15.0);
  placement::NodePlacement plan = empty_plan();
  plan.complete[placement::kUavNodeBase] = {4};
  plan.complete[0] = {5};  // FAP content is invisible to the UAV path

  SimUser fast = walker(false, 15.0);
  DeliveryOutcome hit = route_request(fast, {0, 0}, 4, plan, topo, 2.0);
  CHECK(hit.served_by == ServedBy::uav);
  CHECK(hit.hit);
  CHECK(hit.bytes_from_cache == 2.0);

  DeliveryOutcome miss = route_request(fast, {0, 0}, 5, plan, topo, 2.0);
  CHECK_FALSE(miss.hit);
  CHECK(miss.touched_cache);
  CHECK(miss.bytes_from_server == 2.0);

  // a slow outdoor user still gets FAP service
  SimUser slow = walker(false, 3.0);
  DeliveryOutcome fap = route_request(slow, {0, 0}, 5, plan, topo, 2.0);
  CHECK(fap.hit);
  CHECK(fap.served_by == ServedBy::fap_st);

  // beyond UAV range: straight to server, no cache touched
  DeliveryOutcome far = route_request(fast, {900, 900}, 4, plan, topo, 2.0);
  CHECK_FALSE(far.touched_cache);
  CHECK(far.bytes_from_server == 2.0);
}

TEST_CASE("route_request gathers distinct coded segments") {
  std::vector<PlanarPoint> faps;
  for (int i = 0; i < 7; ++i) faps.push_back({i * 10.0, 0.0});
  Topology topo = manual_topology(faps, {}, {30, 0}, true, 0);
  SimUser u = walker(true, 0);

  placement::NodePlacement full = empty_plan(7);
  for (int f = 0; f < 7; ++f) full.segments[f][9] = f + 1;
  DeliveryOutcome all = route_request(u, {30, 0}, 9, full, topo, 1.0);
  CHECK(all.hit);  // all 7 distinct segments reachable -> complete delivery
  CHECK(all.served_by == ServedBy::fap_jt);
  CHECK(all.bytes_from_cache == 1.0);
  CHECK(all.bytes_from_server == 0.0);

  placement::NodePlacement partial = empty_plan(7);
  for (int f = 0; f < 5; ++f) partial.segments[f][9] = f + 1;
  DeliveryOutcome five = route_request(u, {30, 0}, 9, partial, topo, 1.0);
  CHECK_FALSE(five.hit);
  CHECK(five.served_by == ServedBy::mixed);
  CHECK(five.bytes_from_cache == doctest::Approx(5.0 / 7.0).epsilon(1e-15));
  CHECK(five.bytes_from_cache + five.bytes_from_server == 1.0);  // exact conservation

  // duplicate segments count once
  placement::NodePlacement dup = empty_plan(7);
  dup.segments[0][9] = 1;
  dup.segments[1][9] = 1;
  dup.segments[2][9] = 2;
  DeliveryOutcome two = route_request(u, {30, 0}, 9, dup, topo, 1.0);
  CHECK(two.bytes_from_cache == doctest::Approx(2.0 / 7.0).epsilon(1e-15));

  // out-of-range members contribute nothing
  Topology spread = topo;
  spread.faps[6] = {5000, 0};
  DeliveryOutcome six = route_request(u, {30, 0}, 9, full, spread, 1.0);
  CHECK(six.bytes_from_cache == doctest::Approx(6.0 / 7.0).epsilon(1e-15));
  CHECK_FALSE(six.hit);
}

TEST_CASE("replay validates its inputs") {
  Topology topo = manual_topology({{0, 0}}, {}, {0, 0}, true, 0);
  PlanSchedule sched;
  sched.entries.push_back({0, empty_plan()});
  SimOptions opt;

  std::vector<RequestEvent> unsorted{{10, 1, 1}, {5, 1, 1}};
  CHECK_THROWS_WITH_AS(replay(unsorted, sched, topo, Policy::mtec_plan, opt),
                       doctest::Contains("time-sorted"), DataError);

  CHECK_THROWS_WITH_AS(replay({{0, 1, 1}}, PlanSchedule{}, topo, Policy::mtec_plan, opt),
                       doctest::Contains("place"), DataError);

  PlanSchedule bad;
  bad.entries.push_back({10, empty_plan()});
  bad.entries.push_back({10, empty_plan()});
  CHECK_THROWS_WITH_AS(replay({{20, 1, 1}}, bad, topo, Policy::mtec_plan, opt),
                       doctest::Contains("increasing"), DataError);

  // an event earlier than the first updating time has no active plan
  PlanSchedule late;
  late.entries.push_back({100, empty_plan()});
  CHECK_THROWS_WITH_AS(replay({{5, 1, 1}}, late, topo, Policy::mtec_plan, opt),
                       doctest::Contains("no placement plan active"), DataError);

  Topology nobody = topo;
  nobody.users.clear();
  CHECK_THROWS_AS(replay({{0, 1, 1}}, sched, topo, Policy::lru, opt), ConfigError);  // no capacity
  CHECK_THROWS_AS(replay({{0, 1, 1}}, sched, nobody, Policy::oracle, opt), DataError);

  SimOptions sized = opt;
  sized.n_contents = 3;
  CHECK_THROWS_WITH_AS(replay({{0, 1, 9}}, sched, topo, Policy::oracle, sized),
                       doctest::Contains("unknown content id 9"), DataError);

  SimOptions zero = opt;
  zero.content_size = 0;
  CHECK_THROWS_AS(replay({{0, 1, 1}}, sched, topo, Policy::oracle, zero), ConfigError);
}

TEST_CASE("oracle policy hits every request exactly") {
  Topology topo = manual_topology({{0, 0}}, {}, {0, 0}, true, 0);
  std::vector<RequestEvent> ev = one_user_trace({{0, 1}, {1, 2}, {2, 3}, {3, 1}});
  MetricsReport rep = replay(ev, PlanSchedule{}, topo, Policy::oracle, SimOptions{});
  CHECK(rep.summary.requests == 4);
  CHECK(rep.summary.hits == 4);
  CHECK(rep.cache_hit_ratio == 1.0);
  CHECK(rep.transferred_byte_volume == 1.0);
}

TEST_CASE("metrics_start warms reactive caches but only counts later events") {
  Topology topo = manual_topology({{0, 0}}, {}, {0, 0}, true, 0);
  SimOptions opt;
  opt.reactive_c_f = 1;
  opt.metrics_start = 5;

  // the t=0 miss primes the cache; only the t=10 hit is measured
  std::vector<RequestEvent> ev = one_user_trace({{0, 7}, {10, 7}});
  MetricsReport lru = replay(ev, PlanSchedule{}, topo, Policy::lru, opt);
  CHECK(lru.summary.requests == 1);
  CHECK(lru.summary.hits == 1);
  CHECK(lru.cache_hit_ratio == 1.0);
  REQUIRE(lru.intervals.size() == 1);
  CHECK(lru.intervals[0].updating_time == 5);  // stateless interval key

  // a plan-based policy ignores pre-window events entirely
  PlanSchedule sched;
  sched.entries.push_back({0, empty_plan()});
  MetricsReport plan = replay(ev, sched, topo, Policy::mtec_plan, opt);
  CHECK(plan.summary.requests == 1);
  CHECK(plan.summary.hits == 0);
}

TEST_CASE("plan schedule switches at updating times and keys intervals") {
  Topology topo = manual_topology({{0, 0}}, {}, {0, 0}, true, 0);
  placement::NodePlacement with;
  with.n_s = 7;
  with.complete[0] = {1};

  PlanSchedule sched;
  sched.entries.push_back({0, empty_plan()});
  sched.entries.push_back({100, with});

  std::vector<RequestEvent> ev = one_user_trace({{50, 1}, {150, 1}, {160, 1}});
  MetricsReport rep = replay(ev, sched, topo, Policy::mtec_plan, SimOptions{});
  REQUIRE(rep.intervals.size() == 2);
  CHECK(rep.intervals[0].updating_time == 0);
  CHECK(rep.intervals[0].requests == 1);
  CHECK(rep.intervals[0].hits == 0);
  CHECK(rep.intervals[1].updating_time == 100);
  CHECK(rep.intervals[1].requests == 2);
  CHECK(rep.intervals[1].hits == 2);
  CHECK(rep.summary.hits == 2);
}

TEST_CASE("reactive replay matches independent reference caches") {
  Topology topo = manual_topology({{0, 0}}, {}, {0, 0}, true, 0);
  Rng rng(2718);
  for (int trial = 0; trial < 20; ++trial) {
    const int capacity = 1 + static_cast<int>(rng.uniform_int(5));
    const int n_contents = 2 + static_cast<int>(rng.uniform_int(9));
    const int n_events = 20 + static_cast<int>(rng.uniform_int(181));
    std::vector<RequestEvent> ev;
    for (int i = 0; i < n_events; ++i)
      ev.push_back({i, 1, 1 + static_cast<int>(rng.uniform_int(
                              static_cast<std::uint64_t>(n_contents)))});

    SimOptions opt;
    opt.reactive_c_f = capacity;

    RefLru ref_lru(capacity);
    RefLfu ref_lfu(capacity);
    long long lru_hits = 0, lfu_hits = 0;
    for (const auto& e : ev) {
      lru_hits += ref_lru.access(e.content_id) ? 1 : 0;
      lfu_hits += ref_lfu.access(e.content_id) ? 1 : 0;
    }

    MetricsReport lru = replay(ev, PlanSchedule{}, topo, Policy::lru, opt);
    MetricsReport lfu = replay(ev, PlanSchedule{}, topo, Policy::lfu, opt);
    CHECK(lru.summary.requests == n_events);
    CHECK(lru.summary.hits == lru_hits);
    CHECK(lfu.summary.hits == lfu_hits);
    // unit-size contents make byte volume equal the hit ratio
    CHECK(lru.transferred_byte_volume == doctest::Approx(lru.cache_hit_ratio).epsilon(1e-12));
  }
}

TEST_CASE("metrics_csv emits the pinned schema with a summary row") {
  Topology topo = manual_topology({{0, 0}}, {}, {0, 0}, true, 0);
  std::vector<RequestEvent> ev = one_user_trace({{0, 1}, {1, 1}, {2, 2}});
  SimOptions opt;
  opt.reactive_c_f = 2;
  MetricsReport lru = replay(ev, PlanSchedule{}, topo, Policy::lru, opt);
  MetricsReport oracle = replay(ev, PlanSchedule{}, topo, Policy::oracle, opt);

  const std::string csv = metrics_csv({lru, oracle}, "config=aa seed=1 tool=mtec 1.0.0");
  CHECK(csv.rfind("# config=aa seed=1 tool=mtec 1.0.0\n", 0) == 0);
  CHECK(csv.find("policy,updating_time,requests,hits,hit_ratio,cache_bytes,managed_bytes,"
                 "byte_volume\n") != std::string::npos);
  // one interval row keyed 0 plus the summary row per policy
  CHECK(csv.find("lru,0,3,1,") != std::string::npos);
  CHECK(csv.find("lru,all,3,1,") != std::string::npos);
  CHECK(csv.find("oracle,all,3,3,1,3,3,1\n") != std::string::npos);
}

}  // TEST_SUITE
