#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace mtec::trace {

// One content request. Timestamps are integer seconds from trace start;
// content ids are dense in [1, n_contents].
struct RequestEvent {
  std::int64_t timestamp = 0;
  int user_id = 0;
  int content_id = 0;
  bool operator==(const RequestEvent&) const = default;
};

enum class TraceFormat {
  movielens_ratings,  // comma separated userId,movieId,rating,timestamp, header row
  movielens_100k,     // tab separated "user item rating timestamp", no header
  synthetic_csv,      // canonical timestamp,user_id,content_id
};

struct ParsedTrace {
  std::vector<RequestEvent> events;         // sorted ascending by timestamp
  std::map<std::int64_t, int> content_map;  // original id -> dense id
  int n_contents = 0;
  int n_users = 0;  // distinct users seen
};

// Sorts, normalizes timestamps to start at 0 (MovieLens formats) and
// re-indexes content ids densely. The canonical format is read back verbatim:
// its ids are already dense and its timestamps already trace-relative.
ParsedTrace parse_trace(std::istream& in, TraceFormat format);

// Canonical trace CSV: optional '#' metadata lines, a header row, then
// timestamp,user_id,content_id records.
void serialize_trace(std::ostream& out, const std::vector<RequestEvent>& events,
                     const std::string& meta = "");

// ---- users / geolocation -------------------------------------------------

// Pipe separated demographics row: user id|age|gender|occupation|zip code.
struct UserRecord {
  int user_id = 0;
  int age = 0;
  std::string gender;
  std::string occupation;
  std::string zip;
};

std::vector<UserRecord> parse_users(std::istream& in);

struct UserGeo {
  int user_id = 0;
  double latitude = 0.0;   // degrees, [-90, 90]
  double longitude = 0.0;  // degrees, [-180, 180]
  bool indoor = false;
  double speed_mps = 0.0;  // >= 0
};

struct PlanarPoint {
  double x = 0.0;  // meters
  double y = 0.0;
};

struct CachingNodeSite {
  int node_id = 0;
  PlanarPoint pos;
  double range_m = 0.0;
};

struct NodeVicinity {
  int node_id = 0;
  std::set<int> user_ids;  // users within transmission range (closed ball)
};

// CSV zip,lat,lon
struct ZipTable {
  std::map<std::string, std::pair<double, double>> latlon;
};

ZipTable load_zip_table(std::istream& in);

struct GeoAssignment {
  std::vector<NodeVicinity> vicinities;        // one entry per node, node order
  std::map<int, PlanarPoint> user_positions;   // planar meters
  int unknown_zip_count = 0;
};

// Equirectangular projection about (lat0, lon0); good enough at metro scale.
PlanarPoint project_latlon(double lat, double lon, double lat0, double lon0);

// Pure geometry: users already positioned in the nodes' planar frame.
GeoAssignment assign_vicinities(const std::map<int, PlanarPoint>& user_positions,
                                const std::vector<CachingNodeSite>& nodes);

// ZIP -> (lat, lon) -> planar projection about the resolved users' centroid,
// then vicinity assignment. Unknown ZIPs fall back to a seeded deterministic
// point inside the resolved users' bounding box (counted, not dropped).
GeoAssignment geolocate_and_assign(const std::vector<UserRecord>& users,
                                   const ZipTable& zips,
                                   const std::vector<CachingNodeSite>& nodes,
                                   std::uint64_t fallback_seed);

// Per-node traces: the subsequence of events whose user lies in the node's
// vicinity. Within-node timestamp order is preserved.
std::map<int, std::vector<RequestEvent>> split_by_node(
    const std::vector<RequestEvent>& events,
    const std::vector<NodeVicinity>& vicinities);

// ---- synthetic traces ------------------------------------------------------

// Zipf request stream whose popularity ranking is re-permuted at each drift
// time. Fully determined by the seed.
struct SynthConfig {
  int n_contents = 0;
  std::int64_t duration_s = 0;
  double zipf_exponent = 1.0;
  std::vector<std::int64_t> drift_times;  // ascending, within (0, duration)
  std::uint64_t seed = 0;
  std::int64_t n_events = 0;
  int n_users = 1;
};

std::vector<RequestEvent> synth_trace(const SynthConfig& cfg);

}  // namespace mtec::trace
