#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mtec/trace.hpp"

namespace mtec::pipeline {

// Binary indicator grid: cell (l, t) is 1 iff content l+1 saw at least one
// request at second t. Multiple requests within one second clamp to 1.
struct RequestMatrix {
  int n_contents = 0;
  std::int64_t horizon = 0;  // T seconds
  std::vector<std::uint8_t> cells;  // row-major n_contents x horizon

  std::uint8_t at(int content_row, std::int64_t t) const {
    return cells[static_cast<std::size_t>(content_row) * static_cast<std::size_t>(horizon) +
                 static_cast<std::size_t>(t)];
  }
};

RequestMatrix build_request_matrix(const std::vector<trace::RequestEvent>& events,
                                   int n_contents, std::int64_t horizon);

// Per-interval cumulative counts; the trailing partial window is discarded.
struct WindowedRequests {
  int n_contents = 0;
  int n_windows = 0;
  std::int64_t window_s = 0;
  std::vector<double> counts;  // row-major n_contents x n_windows

  double at(int content_row, int w) const {
    return counts[static_cast<std::size_t>(content_row) * n_windows + w];
  }
  std::vector<double> column(int w) const;
};

WindowedRequests window_counts(const RequestMatrix& r, std::int64_t window_s);

// Event-stream form of build_request_matrix + window_counts. Distinct
// (content, second) pairs are counted, so the result matches the dense path
// exactly without materializing the per-second matrix — required for traces
// whose horizon times catalog size would not fit in memory.
WindowedRequests window_counts(const std::vector<trace::RequestEvent>& events, int n_contents,
                               std::int64_t horizon, std::int64_t window_s);

struct Sample {
  std::vector<double> x;        // n_contents x lookback, row-major, raw counts
  std::vector<std::uint8_t> y;  // n_contents, exactly K ones
  std::vector<double> p_next;   // request probabilities at the label interval
};

struct SampleSet {
  int n_contents = 0;
  int lookback = 0;  // L
  int topk = 0;      // K
  std::vector<Sample> samples;
};

// Sample u covers windows [u*stride, u*stride+L) and is labeled from window
// u*stride+L. The sample count is floor((n_windows - L) / stride).
SampleSet segment_samples(const WindowedRequests& rw, int lookback, int topk, int stride);

// counts / sum(counts); all-zero input maps to the all-zero vector so dead
// contents never outrank live ones.
std::vector<double> request_probability(const std::vector<double>& counts);

// Adjusted Fisher-Pearson sample skewness of a request-time multiset.
// Fewer than 3 points or zero variance returns 0 (neutral).
double skewness(const std::vector<double>& times);

// Same statistic with multiplicities, so windowed counts need not be
// expanded into an explicit multiset.
double weighted_skewness(const std::vector<double>& values, const std::vector<double>& weights);

// Rank key: negative skew first, then probability descending, then content id
// ascending; the first K contents get label 1.
std::vector<std::uint8_t> label_topk(const std::vector<double>& p,
                                     const std::vector<double>& zeta, int k);

// Per-row (x - min) / (max - min); constant rows map to all-zeros.
void minmax_normalize_rows(std::vector<double>& x, int rows, int cols);

struct GafImage {
  int n = 0;
  std::vector<double> cells;  // n x n, symmetric, entries in [-1, 1]
  double at(int i, int j) const { return cells[static_cast<std::size_t>(i) * n + j]; }
};

// Gramian angular summation field: rescale to [-1,1], phi = arccos, cell
// (i,j) = cos(phi_i + phi_j). A constant series rescales to 0.
GafImage gaf_transform(const std::vector<double>& series);

// Diagonal of the GASF image of a [0,1]-normalized series; this is the
// shape-preserving form fed to the classification encoders in GAF mode.
std::vector<double> gasf_diagonal(const std::vector<double>& series01);

// ---- artifact serialization ------------------------------------------------

// Binary layouts are documented in the README (MTECSMP1 / MTECWND1); both
// start with a string key-value metadata section (config hash, seed, ...).
using ArtifactMeta = std::map<std::string, std::string>;

std::string serialize_samples(const SampleSet& s, const ArtifactMeta& meta = {});
SampleSet deserialize_samples(const std::string& bytes, ArtifactMeta* meta_out = nullptr);

std::string serialize_windowed(const WindowedRequests& w, const ArtifactMeta& meta = {});
WindowedRequests deserialize_windowed(const std::string& bytes, ArtifactMeta* meta_out = nullptr);

}  // namespace mtec::pipeline
