#include "mtec/trace.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "mtec/common.hpp"
#include "mtec/rng.hpp"

namespace mtec::trace {

namespace {

constexpr double kEarthRadiusM = 6371000.0;
constexpr double kDegToRad = 0.017453292519943295;

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::int64_t parse_i64(const std::string& s, int line_no, const char* what) {
  try {
    std::size_t pos = 0;
    std::int64_t v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("parse error at line " + std::to_string(line_no) + ": bad " +
                    what + " '" + s + "'");
  }
}

double parse_f64(const std::string& s, int line_no, const char* what) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("parse error at line " + std::to_string(line_no) + ": bad " +
                    what + " '" + s + "'");
  }
}

struct RawEvent {
  std::int64_t timestamp;
  int user_id;
  std::int64_t content_id;  // original id
};

bool starts_with_digit(const std::string& s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c == ' ' || c == '\t') continue;
    // a leading minus still marks a numeric record (e.g. a negative
    // timestamp), which must reach field validation instead of being
    // mistaken for a header row
    if (c == '-') return i + 1 < s.size() && s[i + 1] >= '0' && s[i + 1] <= '9';
    return c >= '0' && c <= '9';
  }
  return false;
}

}  // namespace

ParsedTrace parse_trace(std::istream& in, TraceFormat format) {
  std::vector<RawEvent> raw;
  std::string line;
  int line_no = 0;
  bool canonical = format == TraceFormat::synthetic_csv;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') continue;
    if (!starts_with_digit(line)) {
      if (line_no <= 2) continue;  // header row
      throw DataError("parse error at line " + std::to_string(line_no) +
                      ": unexpected non-numeric record");
    }
    RawEvent ev{};
    switch (format) {
      case TraceFormat::movielens_ratings: {
        auto f = split(line, ',');
        if (f.size() < 4)
          throw DataError("parse error at line " + std::to_string(line_no) +
                          ": expected userId,movieId,rating,timestamp");
        ev.user_id = static_cast<int>(parse_i64(f[0], line_no, "user id"));
        ev.content_id = parse_i64(f[1], line_no, "content id");
        // the rating value is ignored; a row's presence is the request
        ev.timestamp = parse_i64(f[3], line_no, "timestamp");
        break;
      }
      case TraceFormat::movielens_100k: {
        std::istringstream ss(line);
        std::string u, c, r, t;
        if (!(ss >> u >> c >> r >> t))
          throw DataError("parse error at line " + std::to_string(line_no) +
                          ": expected user item rating timestamp");
        ev.user_id = static_cast<int>(parse_i64(u, line_no, "user id"));
        ev.content_id = parse_i64(c, line_no, "content id");
        ev.timestamp = parse_i64(t, line_no, "timestamp");
        break;
      }
      case TraceFormat::synthetic_csv: {
        auto f = split(line, ',');
        if (f.size() < 3)
          throw DataError("parse error at line " + std::to_string(line_no) +
                          ": expected timestamp,user_id,content_id");
        ev.timestamp = parse_i64(f[0], line_no, "timestamp");
        ev.user_id = static_cast<int>(parse_i64(f[1], line_no, "user id"));
        ev.content_id = parse_i64(f[2], line_no, "content id");
        break;
      }
    }
    if (ev.timestamp < 0)
      throw DataError("parse error at line " + std::to_string(line_no) +
                      ": negative timestamp");
    if (ev.content_id < 1)
      throw DataError("parse error at line " + std::to_string(line_no) +
                      ": content id must be >= 1");
    raw.push_back(ev);
  }

  ParsedTrace out;
  if (raw.empty()) return out;

  std::stable_sort(raw.begin(), raw.end(),
                   [](const RawEvent& a, const RawEvent& b) { return a.timestamp < b.timestamp; });

  std::set<int> users;
  for (const auto& ev : raw) users.insert(ev.user_id);
  out.n_users = static_cast<int>(users.size());

  if (canonical) {
    // ids are already dense; keep them and the timestamps verbatim
    std::int64_t max_id = 0;
    for (const auto& ev : raw) max_id = std::max(max_id, ev.content_id);
    out.n_contents = static_cast<int>(max_id);
    for (const auto& ev : raw) {
      out.content_map.emplace(ev.content_id, static_cast<int>(ev.content_id));
      out.events.push_back({ev.timestamp, ev.user_id, static_cast<int>(ev.content_id)});
    }
    return out;
  }

  // dense re-index in ascending original-id order
  std::set<std::int64_t> ids;
  for (const auto& ev : raw) ids.insert(ev.content_id);
  int next = 1;
  for (std::int64_t id : ids) out.content_map[id] = next++;
  out.n_contents = static_cast<int>(ids.size());

  std::int64_t t0 = raw.front().timestamp;
  for (const auto& ev : raw)
    out.events.push_back({ev.timestamp - t0, ev.user_id, out.content_map.at(ev.content_id)});
  return out;
}

void serialize_trace(std::ostream& out, const std::vector<RequestEvent>& events,
                     const std::string& meta) {
  if (!meta.empty()) out << "# " << meta << "\n";
  out << "timestamp,user_id,content_id\n";
  for (const auto& ev : events)
    out << ev.timestamp << ',' << ev.user_id << ',' << ev.content_id << '\n';
}

std::vector<UserRecord> parse_users(std::istream& in) {
  std::vector<UserRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto f = split(line, '|');
    if (f.size() < 5)
      throw DataError("parse error at line " + std::to_string(line_no) +
                      ": expected user id|age|gender|occupation|zip code");
    UserRecord u;
    u.user_id = static_cast<int>(parse_i64(f[0], line_no, "user id"));
    u.age = static_cast<int>(parse_i64(f[1], line_no, "age"));
    u.gender = f[2];
    u.occupation = f[3];
    u.zip = f[4];
    out.push_back(std::move(u));
  }
  return out;
}

ZipTable load_zip_table(std::istream& in) {
  ZipTable table;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!starts_with_digit(line) && line_no == 1) continue;  // header
    auto f = split(line, ',');
    if (f.size() < 3)
      throw DataError("parse error at line " + std::to_string(line_no) +
                      ": expected zip,lat,lon");
    double lat = parse_f64(f[1], line_no, "latitude");
    double lon = parse_f64(f[2], line_no, "longitude");
    if (lat < -90.0 || lat > 90.0 || lon < -180.0 || lon > 180.0)
      throw DataError("parse error at line " + std::to_string(line_no) +
                      ": coordinates out of range");
    table.latlon[f[0]] = {lat, lon};
  }
  return table;
}

PlanarPoint project_latlon(double lat, double lon, double lat0, double lon0) {
  double x = kEarthRadiusM * std::cos(lat0 * kDegToRad) * (lon - lon0) * kDegToRad;
  double y = kEarthRadiusM * (lat - lat0) * kDegToRad;
  return {x, y};
}

GeoAssignment assign_vicinities(const std::map<int, PlanarPoint>& user_positions,
                                const std::vector<CachingNodeSite>& nodes) {
  GeoAssignment out;
  out.user_positions = user_positions;
  out.vicinities.reserve(nodes.size());
  for (const auto& node : nodes) {
    NodeVicinity v;
    v.node_id = node.node_id;
    for (const auto& [uid, p] : user_positions) {
      double dx = p.x - node.pos.x;
      double dy = p.y - node.pos.y;
      if (std::sqrt(dx * dx + dy * dy) <= node.range_m) v.user_ids.insert(uid);
    }
    out.vicinities.push_back(std::move(v));
  }
  return out;
}

GeoAssignment geolocate_and_assign(const std::vector<UserRecord>& users,
                                   const ZipTable& zips,
                                   const std::vector<CachingNodeSite>& nodes,
                                   std::uint64_t fallback_seed) {
  // resolve known ZIPs first to fix the projection reference and the
  // fallback region
  double lat_sum = 0, lon_sum = 0;
  int known = 0;
  for (const auto& u : users) {
    auto it = zips.latlon.find(u.zip);
    if (it != zips.latlon.end()) {
      lat_sum += it->second.first;
      lon_sum += it->second.second;
      ++known;
    }
  }
  double lat0 = known ? lat_sum / known : 0.0;
  double lon0 = known ? lon_sum / known : 0.0;

  std::map<int, PlanarPoint> positions;
  double min_x = 0, max_x = 0, min_y = 0, max_y = 0;
  bool have_box = false;
  int unknown = 0;
  std::vector<const UserRecord*> deferred;
  for (const auto& u : users) {
    auto it = zips.latlon.find(u.zip);
    if (it == zips.latlon.end()) {
      deferred.push_back(&u);
      continue;
    }
    PlanarPoint p = project_latlon(it->second.first, it->second.second, lat0, lon0);
    if (!have_box) {
      min_x = max_x = p.x;
      min_y = max_y = p.y;
      have_box = true;
    } else {
      min_x = std::min(min_x, p.x);
      max_x = std::max(max_x, p.x);
      min_y = std::min(min_y, p.y);
      max_y = std::max(max_y, p.y);
    }
    positions[u.user_id] = p;
  }
  if (!have_box) {
    min_x = min_y = 0.0;
    max_x = max_y = 1000.0;
  }
  for (const UserRecord* u : deferred) {
    // deterministic hash-to-region placement keeps the trace mass
    std::uint64_t h = derive_seed(fallback_seed, fnv1a64(u->zip) ^ static_cast<std::uint64_t>(u->user_id));
    Rng rng(h);
    positions[u->user_id] = {rng.uniform(min_x, max_x), rng.uniform(min_y, max_y)};
    ++unknown;
  }

  GeoAssignment out = assign_vicinities(positions, nodes);
  out.unknown_zip_count = unknown;
  return out;
}

std::map<int, std::vector<RequestEvent>> split_by_node(
    const std::vector<RequestEvent>& events,
    const std::vector<NodeVicinity>& vicinities) {
  std::map<int, std::vector<RequestEvent>> out;
  for (const auto& v : vicinities) out[v.node_id] = {};
  for (const auto& ev : events)
    for (const auto& v : vicinities)
      if (v.user_ids.count(ev.user_id)) out[v.node_id].push_back(ev);
  return out;
}

std::vector<RequestEvent> synth_trace(const SynthConfig& cfg) {
  if (cfg.n_contents < 1) throw ConfigError("synth_trace: n_contents must be >= 1");
  if (cfg.duration_s < 1) throw ConfigError("synth_trace: duration must be >= 1");
  if (cfg.zipf_exponent < 0.0) throw ConfigError("synth_trace: zipf_exponent must be >= 0");
  if (cfg.n_events < 0) throw ConfigError("synth_trace: n_events must be >= 0");
  if (cfg.n_users < 1) throw ConfigError("synth_trace: n_users must be >= 1");

  const int n = cfg.n_contents;

  // cumulative Zipf weights over ranks 1..n
  std::vector<double> cum(n);
  double total = 0.0;
  for (int r = 0; r < n; ++r) {
    total += std::pow(static_cast<double>(r + 1), -cfg.zipf_exponent);
    cum[r] = total;
  }

  // one content permutation per drift segment; rank r maps to perm[r]
  std::vector<std::int64_t> boundaries = cfg.drift_times;
  std::sort(boundaries.begin(), boundaries.end());
  Rng perm_rng(derive_seed(cfg.seed, 1));
  std::vector<std::vector<int>> rank_to_content(boundaries.size() + 1);
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i + 1;
  rank_to_content[0] = perm;  // initial ranking is the identity
  for (std::size_t s = 1; s < rank_to_content.size(); ++s) {
    perm_rng.shuffle(perm);
    rank_to_content[s] = perm;
  }

  Rng rng(derive_seed(cfg.seed, 2));
  std::vector<RequestEvent> events;
  events.reserve(static_cast<std::size_t>(cfg.n_events));
  for (std::int64_t i = 0; i < cfg.n_events; ++i) {
    std::int64_t t = static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(cfg.duration_s)));
    std::size_t segment = static_cast<std::size_t>(
        std::upper_bound(boundaries.begin(), boundaries.end(), t) - boundaries.begin());
    double u = rng.uniform() * total;
    int rank = static_cast<int>(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
    if (rank >= n) rank = n - 1;
    int user = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(cfg.n_users)));
    events.push_back({t, user, rank_to_content[segment][rank]});
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const RequestEvent& a, const RequestEvent& b) { return a.timestamp < b.timestamp; });
  return events;
}

}  // namespace mtec::trace
