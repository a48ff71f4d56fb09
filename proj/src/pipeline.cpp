#include "mtec/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

#include "mtec/common.hpp"

namespace mtec::pipeline {

RequestMatrix build_request_matrix(const std::vector<trace::RequestEvent>& events,
                                   int n_contents, std::int64_t horizon) {
  if (n_contents <= 0) throw ConfigError("request matrix needs n_contents > 0");
  if (horizon <= 0) throw ConfigError("request matrix needs horizon > 0");
  RequestMatrix r;
  r.n_contents = n_contents;
  r.horizon = horizon;
  r.cells.assign(static_cast<std::size_t>(n_contents) * static_cast<std::size_t>(horizon), 0);
  for (const auto& e : events) {
    // content ids are dense and 1-based; row l-1 holds content l
    if (e.content_id < 1 || e.content_id > n_contents || e.timestamp < 0 ||
        e.timestamp >= horizon)
      throw DataError("event (t=" + std::to_string(e.timestamp) +
                      ", user=" + std::to_string(e.user_id) +
                      ", content=" + std::to_string(e.content_id) +
                      ") outside request matrix bounds");
    r.cells[static_cast<std::size_t>(e.content_id - 1) * static_cast<std::size_t>(r.horizon) +
            static_cast<std::size_t>(e.timestamp)] = 1;
  }
  return r;
}

std::vector<double> WindowedRequests::column(int w) const {
  std::vector<double> out(static_cast<std::size_t>(n_contents));
  for (int l = 0; l < n_contents; ++l) out[static_cast<std::size_t>(l)] = at(l, w);
  return out;
}

WindowedRequests window_counts(const RequestMatrix& r, std::int64_t window_s) {
  if (window_s <= 0) throw ConfigError("window size must be positive");
  if (window_s > r.horizon)
    throw ConfigError("window length " + std::to_string(window_s) +
                      " exceeds trace horizon " + std::to_string(r.horizon) +
                      " (no full window)");
  WindowedRequests w;
  w.n_contents = r.n_contents;
  w.window_s = window_s;
  w.n_windows = static_cast<int>(r.horizon / window_s);
  w.counts.assign(static_cast<std::size_t>(w.n_contents) * w.n_windows, 0.0);
  for (int l = 0; l < r.n_contents; ++l) {
    for (int v = 0; v < w.n_windows; ++v) {
      double acc = 0.0;
      const std::int64_t t0 = static_cast<std::int64_t>(v) * window_s;
      for (std::int64_t t = t0; t < t0 + window_s; ++t) acc += r.at(l, t);
      w.counts[static_cast<std::size_t>(l) * w.n_windows + v] = acc;
    }
  }
  return w;
}

WindowedRequests window_counts(const std::vector<trace::RequestEvent>& events, int n_contents,
                               std::int64_t horizon, std::int64_t window_s) {
  if (n_contents <= 0) throw ConfigError("request matrix needs n_contents > 0");
  if (horizon <= 0) throw ConfigError("request matrix needs horizon > 0");
  if (window_s <= 0) throw ConfigError("window size must be positive");
  if (window_s > horizon)
    throw ConfigError("window length " + std::to_string(window_s) +
                      " exceeds trace horizon " + std::to_string(horizon) +
                      " (no full window)");
  std::vector<std::pair<int, std::int64_t>> seen;  // (row, second)
  seen.reserve(events.size());
  for (const auto& e : events) {
    if (e.content_id < 1 || e.content_id > n_contents || e.timestamp < 0 ||
        e.timestamp >= horizon)
      throw DataError("event (t=" + std::to_string(e.timestamp) +
                      ", user=" + std::to_string(e.user_id) +
                      ", content=" + std::to_string(e.content_id) +
                      ") outside request matrix bounds");
    seen.emplace_back(e.content_id - 1, e.timestamp);
  }
  std::sort(seen.begin(), seen.end());
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
  WindowedRequests w;
  w.n_contents = n_contents;
  w.window_s = window_s;
  w.n_windows = static_cast<int>(horizon / window_s);
  w.counts.assign(static_cast<std::size_t>(n_contents) * w.n_windows, 0.0);
  for (const auto& [row, t] : seen) {
    const std::int64_t v = t / window_s;
    if (v >= w.n_windows) continue;  // trailing partial window discarded
    w.counts[static_cast<std::size_t>(row) * w.n_windows + static_cast<std::size_t>(v)] += 1.0;
  }
  return w;
}

std::vector<double> request_probability(const std::vector<double>& counts) {
  double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  std::vector<double> p(counts.size(), 0.0);
  if (total <= 0.0) return p;
  for (std::size_t i = 0; i < counts.size(); ++i) p[i] = counts[i] / total;
  return p;
}

double weighted_skewness(const std::vector<double>& values, const std::vector<double>& weights) {
  if (values.size() != weights.size())
    throw std::invalid_argument("weighted_skewness: size mismatch");
  double n = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("weighted_skewness: negative weight");
    n += w;
  }
  if (n < 3.0) return 0.0;
  double mean = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) mean += weights[i] * values[i];
  mean /= n;
  double m2 = 0.0, m3 = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = values[i] - mean;
    m2 += weights[i] * d * d;
    m3 += weights[i] * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  if (m2 <= 0.0) return 0.0;
  const double g1 = m3 / std::pow(m2, 1.5);
  return g1 * std::sqrt(n * (n - 1.0)) / (n - 2.0);
}

double skewness(const std::vector<double>& times) {
  std::vector<double> ones(times.size(), 1.0);
  return weighted_skewness(times, ones);
}

std::vector<std::uint8_t> label_topk(const std::vector<double>& p,
                                     const std::vector<double>& zeta, int k) {
  if (p.size() != zeta.size()) throw std::invalid_argument("label_topk: size mismatch");
  const int n = static_cast<int>(p.size());
  if (k < 0 || k > n) throw ConfigError("label_topk: k out of range");
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    const bool neg_a = zeta[static_cast<std::size_t>(a)] < 0.0;
    const bool neg_b = zeta[static_cast<std::size_t>(b)] < 0.0;
    if (neg_a != neg_b) return neg_a;  // left-skewed (recent surge) wins
    if (p[static_cast<std::size_t>(a)] != p[static_cast<std::size_t>(b)])
      return p[static_cast<std::size_t>(a)] > p[static_cast<std::size_t>(b)];
    return a < b;
  });
  std::vector<std::uint8_t> y(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < k; ++i) y[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] = 1;
  return y;
}

SampleSet segment_samples(const WindowedRequests& rw, int lookback, int topk, int stride) {
  if (lookback <= 0) throw ConfigError("lookback must be positive");
  if (stride <= 0) throw ConfigError("stride must be positive");
  if (topk <= 0 || topk > rw.n_contents) throw ConfigError("topk must be in [1, n_contents]");
  SampleSet s;
  s.n_contents = rw.n_contents;
  s.lookback = lookback;
  s.topk = topk;
  if (rw.n_windows < lookback + 1) return s;  // no full sample + label fits
  const int m = (rw.n_windows - lookback) / stride;
  s.samples.reserve(static_cast<std::size_t>(m));
  std::vector<double> window_index(static_cast<std::size_t>(lookback));
  std::iota(window_index.begin(), window_index.end(), 0.0);
  for (int u = 0; u < m; ++u) {
    const int start = u * stride;
    const int label_w = start + lookback;
    if (label_w >= rw.n_windows) break;  // stride may overshoot the last label
    Sample smp;
    smp.x.resize(static_cast<std::size_t>(rw.n_contents) * lookback);
    std::vector<double> label_counts(static_cast<std::size_t>(rw.n_contents));
    std::vector<double> zeta(static_cast<std::size_t>(rw.n_contents));
    for (int l = 0; l < rw.n_contents; ++l) {
      std::vector<double> wrow(static_cast<std::size_t>(lookback));
      for (int j = 0; j < lookback; ++j) {
        const double c = rw.at(l, start + j);
        smp.x[static_cast<std::size_t>(l) * lookback + j] = c;
        wrow[static_cast<std::size_t>(j)] = c;
      }
      label_counts[static_cast<std::size_t>(l)] = rw.at(l, label_w);
      zeta[static_cast<std::size_t>(l)] = weighted_skewness(window_index, wrow);
    }
    smp.p_next = request_probability(label_counts);
    smp.y = label_topk(smp.p_next, zeta, topk);
    s.samples.push_back(std::move(smp));
  }
  return s;
}

void minmax_normalize_rows(std::vector<double>& x, int rows, int cols) {
  if (rows <= 0 || cols <= 0) return;
  if (x.size() != static_cast<std::size_t>(rows) * cols)
    throw std::invalid_argument("minmax_normalize_rows: bad shape");
  for (int r = 0; r < rows; ++r) {
    double* row = x.data() + static_cast<std::size_t>(r) * cols;
    double lo = row[0], hi = row[0];
    for (int c = 1; c < cols; ++c) {
      lo = std::min(lo, row[c]);
      hi = std::max(hi, row[c]);
    }
    const double span = hi - lo;
    for (int c = 0; c < cols; ++c) row[c] = span > 0.0 ? (row[c] - lo) / span : 0.0;
  }
}

GafImage gaf_transform(const std::vector<double>& series) {
  GafImage g;
  g.n = static_cast<int>(series.size());
  if (g.n == 0) return g;
  double lo = series[0], hi = series[0];
  for (double v : series) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi - lo;
  std::vector<double> phi(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    double x = span > 0.0 ? 2.0 * (series[i] - lo) / span - 1.0 : 0.0;
    x = std::clamp(x, -1.0, 1.0);
    phi[i] = std::acos(x);
  }
  g.cells.resize(static_cast<std::size_t>(g.n) * g.n);
  for (int i = 0; i < g.n; ++i)
    for (int j = 0; j < g.n; ++j)
      g.cells[static_cast<std::size_t>(i) * g.n + j] =
          std::cos(phi[static_cast<std::size_t>(i)] + phi[static_cast<std::size_t>(j)]);
  return g;
}

std::vector<double> gasf_diagonal(const std::vector<double>& series01) {
  std::vector<double> out(series01.size());
  for (std::size_t i = 0; i < series01.size(); ++i) {
    const double x = std::clamp(series01[i], 0.0, 1.0) * 2.0 - 1.0;
    out[i] = 2.0 * x * x - 1.0;  // cos(2*acos(x))
  }
  return out;
}

// ---- binary artifact formats -----------------------------------------------

namespace {

void put_u32(std::string& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_i64(std::string& b, std::int64_t v) {
  const auto u = static_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

void put_f64(std::string& b, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

void put_str(std::string& b, const std::string& s) {
  put_u32(b, static_cast<std::uint32_t>(s.size()));
  b.append(s);
}

void put_meta(std::string& b, const ArtifactMeta& meta) {
  put_u32(b, static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    put_str(b, k);
    put_str(b, v);
  }
}

struct Reader {
  const std::string& b;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > b.size()) throw DataError("artifact truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::int64_t i64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[pos + i])) << (8 * i);
    pos += 8;
    return static_cast<std::int64_t>(v);
  }
  double f64() {
    const std::int64_t raw = i64();
    double d;
    std::memcpy(&d, &raw, 8);
    return d;
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(b[pos++]);
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s = b.substr(pos, n);
    pos += n;
    return s;
  }
  void expect_magic(const char* magic) {
    need(8);
    if (b.compare(pos, 8, magic) != 0)
      throw DataError(std::string("bad artifact magic, expected ") + magic);
    pos += 8;
  }
  ArtifactMeta meta() {
    ArtifactMeta m;
    const std::uint32_t n = u32();
    for (std::uint32_t i = 0; i < n; ++i) {
      std::string k = str();
      m[k] = str();
    }
    return m;
  }
};

}  // namespace

std::string serialize_samples(const SampleSet& s, const ArtifactMeta& meta) {
  std::string b;
  b.append("MTECSMP1");
  put_meta(b, meta);
  put_u32(b, static_cast<std::uint32_t>(s.n_contents));
  put_u32(b, static_cast<std::uint32_t>(s.lookback));
  put_u32(b, static_cast<std::uint32_t>(s.topk));
  put_u32(b, static_cast<std::uint32_t>(s.samples.size()));
  for (const auto& smp : s.samples) {
    for (double v : smp.x) put_f64(b, v);
    for (std::uint8_t v : smp.y) b.push_back(static_cast<char>(v));
    for (double v : smp.p_next) put_f64(b, v);
  }
  return b;
}

SampleSet deserialize_samples(const std::string& bytes, ArtifactMeta* meta_out) {
  Reader r{bytes};
  r.expect_magic("MTECSMP1");
  ArtifactMeta meta = r.meta();
  if (meta_out) *meta_out = std::move(meta);
  SampleSet s;
  s.n_contents = static_cast<int>(r.u32());
  s.lookback = static_cast<int>(r.u32());
  s.topk = static_cast<int>(r.u32());
  const std::uint32_t count = r.u32();
  if (s.n_contents <= 0 || s.lookback <= 0) throw DataError("sample artifact has bad shape");
  const std::size_t nl = static_cast<std::size_t>(s.n_contents) * s.lookback;
  s.samples.resize(count);
  for (auto& smp : s.samples) {
    smp.x.resize(nl);
    for (auto& v : smp.x) v = r.f64();
    smp.y.resize(static_cast<std::size_t>(s.n_contents));
    for (auto& v : smp.y) {
      v = r.u8();
      if (v > 1) throw DataError("sample label byte not 0/1");
    }
    smp.p_next.resize(static_cast<std::size_t>(s.n_contents));
    for (auto& v : smp.p_next) v = r.f64();
  }
  if (r.pos != bytes.size()) throw DataError("sample artifact has trailing bytes");
  return s;
}

std::string serialize_windowed(const WindowedRequests& w, const ArtifactMeta& meta) {
  std::string b;
  b.append("MTECWND1");
  put_meta(b, meta);
  put_u32(b, static_cast<std::uint32_t>(w.n_contents));
  put_u32(b, static_cast<std::uint32_t>(w.n_windows));
  put_i64(b, w.window_s);
  for (double v : w.counts) put_f64(b, v);
  return b;
}

WindowedRequests deserialize_windowed(const std::string& bytes, ArtifactMeta* meta_out) {
  Reader r{bytes};
  r.expect_magic("MTECWND1");
  ArtifactMeta meta = r.meta();
  if (meta_out) *meta_out = std::move(meta);
  WindowedRequests w;
  w.n_contents = static_cast<int>(r.u32());
  w.n_windows = static_cast<int>(r.u32());
  w.window_s = r.i64();
  if (w.n_contents < 0 || w.n_windows < 0 || w.window_s <= 0)
    throw DataError("windowed artifact has bad shape");
  w.counts.resize(static_cast<std::size_t>(w.n_contents) * w.n_windows);
  for (auto& v : w.counts) v = r.f64();
  if (r.pos != bytes.size()) throw DataError("windowed artifact has trailing bytes");
  return w;
}

}  // namespace mtec::pipeline
