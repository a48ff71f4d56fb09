#include <algorithm>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "mtec/common.hpp"
#include "mtec/placement.hpp"

using namespace mtec;
using namespace mtec::placement;

namespace {

std::vector<int> iota_ids(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), 1);
  return v;
}

}  // namespace

TEST_SUITE("placement") {

TEST_CASE("split_popular_mediocre applies the floor split") {
  // alpha=0.3, C_f=10: N_p = 3 complete, N_a = 7*(10-3) = 49 coded
  SplitResult s = split_popular_mediocre(iota_ids(60), 0.3, 10, 7);
  CHECK(s.n_p == 3);
  CHECK(s.n_a == 49);
  CHECK(s.popular == std::vector<int>{1, 2, 3});
  REQUIRE(static_cast<int>(s.mediocre.size()) == 49);
  CHECK(s.mediocre.front() == 4);
  CHECK(s.mediocre.back() == 52);
  CHECK_FALSE(s.truncated);

  // a short ranked list truncates
  SplitResult t = split_popular_mediocre(iota_ids(5), 0.3, 10, 7);
  CHECK(t.popular == std::vector<int>{1, 2, 3});
  CHECK(t.mediocre == std::vector<int>{4, 5});
  CHECK(t.truncated);

  // alpha=1 stores everything complete
  SplitResult full = split_popular_mediocre(iota_ids(10), 1.0, 4, 7);
  CHECK(full.n_p == 4);
  CHECK(full.n_a == 0);
  CHECK(full.mediocre.empty());

  CHECK_THROWS_AS(split_popular_mediocre(iota_ids(5), -0.1, 10, 7), ConfigError);
  CHECK_THROWS_AS(split_popular_mediocre(iota_ids(5), 1.1, 10, 7), ConfigError);
  CHECK_THROWS_AS(split_popular_mediocre(iota_ids(5), 0.3, -1, 7), ConfigError);
  CHECK_THROWS_AS(split_popular_mediocre(iota_ids(5), 0.3, 10, 0), ConfigError);
}

TEST_CASE("assign_segments is rotational and pairwise orthogonal") {
  const std::vector<int> mediocre{11, 12, 13, 14, 15};
  const int n_b = 3, n_s = 4;
  std::vector<SegmentIndicator> ind = assign_segments(mediocre, n_b, n_s);
  REQUIRE(static_cast<int>(ind.size()) == n_b);

  for (int i = 0; i < n_b; ++i) {
    CHECK(ind[static_cast<std::size_t>(i)].fap_coindex == i);
    CHECK(ind[static_cast<std::size_t>(i)].n_mediocre == 5);
    CHECK(ind[static_cast<std::size_t>(i)].n_segments == n_s);
    for (int l = 0; l < 5; ++l) {
      // rotational rule: segment ((l + i) mod N_s) + 1
      CHECK(ind[static_cast<std::size_t>(i)].segment_of(l) == (l + i) % n_s + 1);
      // each row stores exactly one segment
      int row_sum = 0;
      for (int s = 0; s < n_s; ++s) row_sum += ind[static_cast<std::size_t>(i)].at(l, s);
      CHECK(row_sum == 1);
    }
  }

  // exhaustive orthogonality: distinct FAPs never share a segment of the
  // same content
  for (int a = 0; a < n_b; ++a)
    for (int b = a + 1; b < n_b; ++b)
      for (int l = 0; l < 5; ++l) {
        int dot = 0;
        for (int s = 0; s < n_s; ++s)
          dot += ind[static_cast<std::size_t>(a)].at(l, s) *
                 ind[static_cast<std::size_t>(b)].at(l, s);
        CHECK(dot == 0);
      }

  CHECK_THROWS_AS(assign_segments(mediocre, 5, 4), ConfigError);  // N_b > N_s
  CHECK_THROWS_AS(assign_segments(mediocre, 0, 4), ConfigError);
}

TEST_CASE("hex_cluster_size enumerates rhombic numbers") {
  CHECK(hex_cluster_size(1, 2) == 7);
  CHECK(hex_cluster_size(2, 1) == 7);
  CHECK(hex_cluster_size(1, 1) == 3);
  CHECK(hex_cluster_size(0, 1) == 1);
  CHECK(hex_cluster_size(1, 0) == 1);
  CHECK(hex_cluster_size(2, 2) == 12);
  CHECK(hex_cluster_size(3, 0) == 9);
  CHECK_THROWS_AS(hex_cluster_size(0, 0), ConfigError);
  CHECK_THROWS_AS(hex_cluster_size(-1, 2), ConfigError);
}

TEST_CASE("make_plan assembles a verified, orthogonal plan") {
  PlacementPlan plan = make_plan(iota_ids(60), 0.3, 10, 4, 7, 7, 1, 2);
  CHECK(plan.popular.size() == 3);
  CHECK(plan.mediocre.size() == 49);
  CHECK(plan.indicators.size() == 7);
  CHECK(plan.uav_cache == std::vector<int>{1, 2, 3, 4});  // top-C_u of the ranking
  CHECK_FALSE(plan.truncated);

  // replicate over 7 clusters of k=7 members and verify every constraint
  std::vector<std::vector<int>> clusters;
  int fap = 0;
  for (int c = 0; c < 7; ++c) {
    std::vector<int> members;
    for (int i = 0; i < 7; ++i) members.push_back(fap++);
    clusters.push_back(members);
  }
  NetworkPlan net = intercluster_copy(plan, clusters, {0, 1});
  CHECK(net.k == 7);
  VerifyReport report = verify_plan(net);
  for (const std::string& v : report.violations) { INFO(v); CHECK(false); }
  CHECK(report.ok);

  // co-indexed FAPs in different clusters carry identical indicators
  CHECK(net.fap_coindex.at(0) == net.fap_coindex.at(7));
  CHECK(net.fap_coindex.size() == 49);

  // capacity accounting: 3 complete + 49 segments of weight 1/7 = 10 = C_f
  const double used = static_cast<double>(plan.popular.size()) +
                      static_cast<double>(plan.mediocre.size()) / plan.n_s;
  CHECK(used == doctest::Approx(plan.c_f));
}

TEST_CASE("make_plan validates geometry") {
  CHECK_THROWS_AS(make_plan(iota_ids(60), 0.3, 10, 0, 7, 8, 1, 2), ConfigError);  // N_b > N_s
  CHECK_THROWS_AS(make_plan(iota_ids(60), 0.3, 10, 0, 7, 7, 0, 0), ConfigError);  // k undefined
  CHECK_NOTHROW(make_plan(iota_ids(60), 0.3, 10, 0, 7, 7, 1, 2));
}

TEST_CASE("verify_plan reports corrupted indicators") {
  PlacementPlan plan = make_plan(iota_ids(60), 0.3, 10, 0, 7, 7, 1, 2);
  std::vector<std::vector<int>> clusters{{0, 1, 2, 3, 4, 5, 6}};

  SUBCASE("double-stored segment breaks the row sum") {
    plan.indicators[0].grid[1] = 1;  // row 0 now stores two segments
    NetworkPlan net = intercluster_copy(plan, clusters, {});
    VerifyReport r = verify_plan(net);
    CHECK_FALSE(r.ok);
    REQUIRE(!r.violations.empty());
  }

  SUBCASE("duplicated indicator breaks orthogonality") {
    plan.indicators[1].grid = plan.indicators[0].grid;
    NetworkPlan net = intercluster_copy(plan, clusters, {});
    VerifyReport r = verify_plan(net);
    CHECK_FALSE(r.ok);
  }

  SUBCASE("untouched plan is clean") {
    NetworkPlan net = intercluster_copy(plan, clusters, {});
    CHECK(verify_plan(net).ok);
  }
}

TEST_CASE("intercluster_copy validates cluster shapes") {
  PlacementPlan plan = make_plan(iota_ids(60), 0.3, 10, 0, 7, 7, 1, 2);
  // oversized cluster: 8 members > k = 7
  std::vector<std::vector<int>> big{{0, 1, 2, 3, 4, 5, 6, 7}};
  CHECK_THROWS_AS(intercluster_copy(plan, big, {}), ConfigError);
  // duplicate FAP id across clusters
  std::vector<std::vector<int>> dup{{0, 1, 2}, {2, 3, 4}};
  CHECK_THROWS_AS(intercluster_copy(plan, dup, {}), ConfigError);
  // k != N_b leaves members without indicators
  PlacementPlan narrow = make_plan(iota_ids(60), 0.3, 10, 0, 7, 3, 1, 2);
  CHECK_THROWS_AS(intercluster_copy(narrow, {{0, 1, 2}}, {}), ConfigError);
  // short clusters are fine (border cells)
  CHECK_NOTHROW(intercluster_copy(plan, {{0, 1, 2}}, {}));
}

TEST_CASE("plan serialization round-trips through the CSV format") {
  PlacementPlan plan = make_plan(iota_ids(60), 0.3, 10, 2, 7, 7, 1, 2);
  std::vector<std::vector<int>> clusters{{0, 1, 2, 3, 4, 5, 6}, {7, 8, 9}};
  NetworkPlan net = intercluster_copy(plan, clusters, {0});

  const std::string csv = serialize_plan(net, "config=feed01 seed=3 tool=mtec 1.0.0");
  CHECK(csv.rfind("# mtec-plan v1 config=feed01", 0) == 0);
  CHECK(csv.find("node_id,kind,content_id,segment_id\n") != std::string::npos);

  NodePlacement direct = to_node_placement(net);
  NodePlacement parsed = parse_plan(csv);
  CHECK(parsed.alpha == direct.alpha);
  CHECK(parsed.c_f == direct.c_f);
  CHECK(parsed.c_u == direct.c_u);
  CHECK(parsed.n_s == direct.n_s);
  CHECK(parsed.n_b == direct.n_b);
  CHECK(parsed.complete == direct.complete);
  CHECK(parsed.segments == direct.segments);

  // every FAP in the first cluster holds all three popular contents plus 49
  // distinct segment entries
  CHECK(direct.complete.at(0) == std::vector<int>{1, 2, 3});
  CHECK(direct.segments.at(0).size() == 49);
  // the UAV record is complete-only
  CHECK(direct.complete.at(kUavNodeBase) == plan.uav_cache);
  CHECK(direct.segments.count(kUavNodeBase) == 0);

  // border FAP at co-index 1 of cluster 2 matches co-index 1 of cluster 1
  CHECK(parsed.segments.at(8) == parsed.segments.at(1));

  CHECK_THROWS_AS(parse_plan("node_id,kind\n1,complete\n"), DataError);
  CHECK_THROWS_AS(parse_plan(""), DataError);
}

}  // TEST_SUITE
