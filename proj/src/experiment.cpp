#include "mtec/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "mtec/common.hpp"
#include "mtec/model.hpp"
#include "mtec/pipeline.hpp"
#include "mtec/placement.hpp"
#include "mtec/rng.hpp"
#include "mtec/simulator.hpp"
#include "mtec/trace.hpp"

namespace fs = std::filesystem;

namespace mtec::experiment {
namespace {

// substream indices off the run seed; one seed pins every stochastic stage
constexpr std::uint64_t kStreamTrace = 21;
constexpr std::uint64_t kStreamModel = 31;
constexpr std::uint64_t kStreamTopology = 41;

// ---- scalar parsing ---------------------------------------------------------

std::string trim(const std::string& s) {
  const std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

long long parse_i64(const std::string& v) {
  std::size_t pos = 0;
  long long r = 0;
  try {
    r = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("expected an integer");
  }
  if (pos != v.size()) throw ConfigError("expected an integer");
  return r;
}

int parse_int(const std::string& v) {
  const long long r = parse_i64(v);
  if (r < std::numeric_limits<int>::min() || r > std::numeric_limits<int>::max())
    throw ConfigError("integer out of range");
  return static_cast<int>(r);
}

std::uint64_t parse_u64(const std::string& v) {
  if (!v.empty() && v[0] == '-') throw ConfigError("expected a non-negative integer");
  std::size_t pos = 0;
  std::uint64_t r = 0;
  try {
    r = std::stoull(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("expected a non-negative integer");
  }
  if (pos != v.size()) throw ConfigError("expected a non-negative integer");
  return r;
}

double parse_f64(const std::string& v) {
  std::size_t pos = 0;
  double r = 0;
  try {
    r = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("expected a number");
  }
  if (pos != v.size() || !std::isfinite(r)) throw ConfigError("expected a number");
  return r;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("expected true or false");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  std::istringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <class T, class F>
std::string join_list(const std::vector<T>& xs, F to_str) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += to_str(xs[i]);
  }
  return out;
}

// ---- field table --------------------------------------------------------------

struct FieldDef {
  const char* section;
  const char* key;
  std::string (*get)(const ExperimentConfig&);
  void (*set)(ExperimentConfig&, const std::string&);
  bool hashed = true;  // output location does not identify an experiment
};

FieldDef unhashed(FieldDef f) {
  f.hashed = false;
  return f;
}

template <auto Outer, auto Inner>
FieldDef int_field(const char* sec, const char* key) {
  return {sec, key,
          [](const ExperimentConfig& c) { return std::to_string((c.*Outer).*Inner); },
          [](ExperimentConfig& c, const std::string& v) { (c.*Outer).*Inner = parse_int(v); }};
}

template <auto Outer, auto Inner>
FieldDef i64_field(const char* sec, const char* key) {
  return {sec, key,
          [](const ExperimentConfig& c) { return std::to_string((c.*Outer).*Inner); },
          [](ExperimentConfig& c, const std::string& v) { (c.*Outer).*Inner = parse_i64(v); }};
}

template <auto Outer, auto Inner>
FieldDef dbl_field(const char* sec, const char* key) {
  return {sec, key,
          [](const ExperimentConfig& c) { return format_double((c.*Outer).*Inner); },
          [](ExperimentConfig& c, const std::string& v) { (c.*Outer).*Inner = parse_f64(v); }};
}

template <auto Outer, auto Inner>
FieldDef bool_field(const char* sec, const char* key) {
  return {sec, key,
          [](const ExperimentConfig& c) {
            return std::string((c.*Outer).*Inner ? "true" : "false");
          },
          [](ExperimentConfig& c, const std::string& v) { (c.*Outer).*Inner = parse_bool(v); }};
}

template <auto Outer, auto Inner>
FieldDef str_field(const char* sec, const char* key) {
  return {sec, key, [](const ExperimentConfig& c) { return (c.*Outer).*Inner; },
          [](ExperimentConfig& c, const std::string& v) { (c.*Outer).*Inner = v; }};
}

template <auto Outer, auto Inner>
FieldDef i64_list_field(const char* sec, const char* key) {
  return {sec, key,
          [](const ExperimentConfig& c) {
            return join_list((c.*Outer).*Inner,
                             [](std::int64_t x) { return std::to_string(x); });
          },
          [](ExperimentConfig& c, const std::string& v) {
            std::vector<std::int64_t> xs;
            for (const auto& item : split_list(v)) xs.push_back(parse_i64(item));
            (c.*Outer).*Inner = std::move(xs);
          }};
}

template <auto Outer, auto Inner>
FieldDef dbl_list_field(const char* sec, const char* key) {
  return {sec, key,
          [](const ExperimentConfig& c) {
            return join_list((c.*Outer).*Inner, [](double x) { return format_double(x); });
          },
          [](ExperimentConfig& c, const std::string& v) {
            std::vector<double> xs;
            for (const auto& item : split_list(v)) xs.push_back(parse_f64(item));
            (c.*Outer).*Inner = std::move(xs);
          }};
}

template <auto Outer, auto Inner>
FieldDef str_list_field(const char* sec, const char* key) {
  return {sec, key,
          [](const ExperimentConfig& c) {
            return join_list((c.*Outer).*Inner, [](const std::string& x) { return x; });
          },
          [](ExperimentConfig& c, const std::string& v) { (c.*Outer).*Inner = split_list(v); }};
}

template <auto Member>
FieldDef str_field_direct(const char* sec, const char* key) {
  return {sec, key, [](const ExperimentConfig& c) { return c.*Member; },
          [](ExperimentConfig& c, const std::string& v) { c.*Member = v; }};
}

template <auto Member>
FieldDef u64_field_direct(const char* sec, const char* key) {
  return {sec, key, [](const ExperimentConfig& c) { return std::to_string(c.*Member); },
          [](ExperimentConfig& c, const std::string& v) { c.*Member = parse_u64(v); }};
}

const std::vector<FieldDef>& field_table() {
  using E = ExperimentConfig;
  using D = DatasetConfig;
  using P = PipelineStageConfig;
  using M = ModelStageConfig;
  using L = PlacementStageConfig;
  using S = SimulationStageConfig;
  static const std::vector<FieldDef> table = {
      str_field<&E::dataset, &D::source>("dataset", "source"),
      str_field<&E::dataset, &D::format>("dataset", "format"),
      str_field<&E::dataset, &D::path>("dataset", "path"),
      int_field<&E::dataset, &D::n_contents>("dataset", "n_contents"),
      int_field<&E::dataset, &D::n_users>("dataset", "n_users"),
      i64_field<&E::dataset, &D::duration>("dataset", "duration"),
      i64_field<&E::dataset, &D::n_events>("dataset", "n_events"),
      dbl_field<&E::dataset, &D::zipf_exponent>("dataset", "zipf_exponent"),
      i64_list_field<&E::dataset, &D::drift_times>("dataset", "drift_times"),

      i64_field<&E::pipeline, &P::window>("pipeline", "window"),
      int_field<&E::pipeline, &P::lookback>("pipeline", "lookback"),
      int_field<&E::pipeline, &P::topk>("pipeline", "topk"),
      int_field<&E::pipeline, &P::stride>("pipeline", "stride"),

      int_field<&E::model, &M::d_model>("model", "d_model"),
      int_field<&E::model, &M::n_heads>("model", "n_heads"),
      int_field<&E::model, &M::n_layers>("model", "n_layers"),
      int_field<&E::model, &M::mlp_layers>("model", "mlp_layers"),
      int_field<&E::model, &M::mlp_dim>("model", "mlp_dim"),
      int_field<&E::model, &M::conv_kernel>("model", "conv_kernel"),
      dbl_field<&E::model, &M::w_rpp>("model", "w_rpp"),
      dbl_field<&E::model, &M::w_c1>("model", "w_c1"),
      dbl_field<&E::model, &M::w_c2>("model", "w_c2"),
      dbl_field<&E::model, &M::w_fusion>("model", "w_fusion"),
      dbl_field<&E::model, &M::lr>("model", "lr"),
      dbl_field<&E::model, &M::weight_decay>("model", "weight_decay"),
      int_field<&E::model, &M::epochs>("model", "epochs"),
      int_field<&E::model, &M::batch_size>("model", "batch_size"),
      bool_field<&E::model, &M::gaf_mode>("model", "gaf_mode"),
      dbl_field<&E::model, &M::train_frac>("model", "train_frac"),
      dbl_field<&E::model, &M::val_frac>("model", "val_frac"),

      dbl_field<&E::placement, &L::alpha>("placement", "alpha"),
      dbl_field<&E::placement, &L::uav_cache_pct>("placement", "uav_cache_pct"),
      int_field<&E::placement, &L::n_s>("placement", "n_s"),
      int_field<&E::placement, &L::n_b>("placement", "n_b"),
      int_field<&E::placement, &L::w>("placement", "w"),
      int_field<&E::placement, &L::z>("placement", "z"),

      str_list_field<&E::simulation, &S::policies>("simulation", "policies"),
      dbl_list_field<&E::simulation, &S::sweep_cache_pct>("simulation", "sweep_cache_pct"),
      dbl_field<&E::simulation, &S::content_size>("simulation", "content_size"),
      dbl_field<&E::simulation, &S::area_side>("simulation", "area_side"),
      dbl_field<&E::simulation, &S::lambda_fap>("simulation", "lambda_fap"),
      int_field<&E::simulation, &S::n_uav>("simulation", "n_uav"),
      int_field<&E::simulation, &S::gmm_components>("simulation", "gmm_components"),
      dbl_field<&E::simulation, &S::gmm_sigma>("simulation", "gmm_sigma"),
      dbl_field<&E::simulation, &S::indoor_prob>("simulation", "indoor_prob"),
      dbl_field<&E::simulation, &S::speed_min>("simulation", "speed_min"),
      dbl_field<&E::simulation, &S::speed_max>("simulation", "speed_max"),
      dbl_field<&E::simulation, &S::v_th>("simulation", "v_th"),
      dbl_field<&E::simulation, &S::cell_core_radius>("simulation", "cell_core_radius"),
      dbl_field<&E::simulation, &S::fap_range>("simulation", "fap_range"),
      dbl_field<&E::simulation, &S::uav_range>("simulation", "uav_range"),

      unhashed(str_field_direct<&E::out_dir>("output", "dir")),
      u64_field_direct<&E::seed>("run", "seed"),
  };
  return table;
}

const FieldDef* find_field(const std::string& section, const std::string& key) {
  for (const auto& f : field_table())
    if (section == f.section && key == f.key) return &f;
  return nullptr;
}

// ---- INI parsing ----------------------------------------------------------------

struct RawEntry {
  std::string section, key, value;
  int line = 0;
};

std::vector<RawEntry> parse_ini(const std::string& text, std::vector<std::string>& errors) {
  std::vector<RawEntry> out;
  std::istringstream in(text);
  std::string line, section;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3) {
        errors.push_back("line " + std::to_string(no) + ": malformed section header '" + s + "'");
        continue;
      }
      section = trim(s.substr(1, s.size() - 2));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(no) + ": expected `key = value`, got '" + s + "'");
      continue;
    }
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (key.empty()) {
      errors.push_back("line " + std::to_string(no) + ": empty key");
      continue;
    }
    if (section.empty()) {
      errors.push_back("line " + std::to_string(no) + ": key '" + key +
                       "' appears before any [section]");
      continue;
    }
    out.push_back({section, key, value, no});
  }
  return out;
}

void apply_entry(ExperimentConfig& cfg, const std::string& section, const std::string& key,
                 const std::string& value, const std::string& where,
                 std::vector<std::string>& errors) {
  const FieldDef* f = find_field(section, key);
  if (!f) {
    errors.push_back(where + ": unknown key '" + section + "." + key + "'");
    return;
  }
  try {
    f->set(cfg, value);
  } catch (const ConfigError& e) {
    errors.push_back(where + ": " + section + "." + key + ": " + e.what() + " (got '" + value +
                     "')");
  }
}

simulator::Policy parse_policy(const std::string& name) {
  for (auto p : {simulator::Policy::mtec_plan, simulator::Policy::lru, simulator::Policy::lfu,
                 simulator::Policy::oracle})
    if (simulator::policy_name(p) == name) return p;
  throw ConfigError("unknown policy '" + name + "' (choose from mtec_plan, lru, lfu, oracle)");
}

void validate_semantics(const ExperimentConfig& c, std::vector<std::string>& errors) {
  auto bad = [&errors](const std::string& m) { errors.push_back(m); };

  if (c.dataset.source != "synthetic" && c.dataset.source != "file")
    bad("dataset.source must be 'synthetic' or 'file'");
  if (c.dataset.format != "movielens_ratings" && c.dataset.format != "movielens_100k" &&
      c.dataset.format != "synthetic_csv")
    bad("dataset.format must be movielens_ratings, movielens_100k or synthetic_csv");
  if (c.dataset.source == "file" && c.dataset.path.empty())
    bad("dataset.path is required when dataset.source = file");
  if (c.dataset.n_contents < 1) bad("dataset.n_contents must be >= 1");
  if (c.dataset.n_users < 1) bad("dataset.n_users must be >= 1");
  if (c.dataset.duration < 1) bad("dataset.duration must be >= 1");
  if (c.dataset.n_events < 1) bad("dataset.n_events must be >= 1");
  if (c.dataset.zipf_exponent <= 0) bad("dataset.zipf_exponent must be positive");
  for (auto t : c.dataset.drift_times)
    if (t < 0 || t >= c.dataset.duration) {
      bad("dataset.drift_times entries must lie in [0, dataset.duration)");
      break;
    }

  if (c.pipeline.window < 1) bad("pipeline.window must be >= 1");
  if (c.pipeline.lookback < 1) bad("pipeline.lookback must be >= 1");
  if (c.pipeline.topk < 1) bad("pipeline.topk must be >= 1");
  if (c.pipeline.stride < 1) bad("pipeline.stride must be >= 1");
  if (c.dataset.source == "synthetic" && c.pipeline.topk > c.dataset.n_contents)
    bad("pipeline.topk must not exceed dataset.n_contents");

  if (c.model.d_model < 1) bad("model.d_model must be >= 1");
  if (c.model.n_heads < 1) bad("model.n_heads must be >= 1");
  if (c.model.n_heads >= 1 && c.model.d_model >= 1 && c.model.d_model % c.model.n_heads != 0)
    bad("model.d_model must be divisible by model.n_heads");
  if (c.model.n_layers < 1) bad("model.n_layers must be >= 1");
  if (c.model.mlp_layers < 1) bad("model.mlp_layers must be >= 1");
  if (c.model.mlp_dim < 1) bad("model.mlp_dim must be >= 1");
  if (c.model.conv_kernel < 1 || c.model.conv_kernel % 2 == 0)
    bad("model.conv_kernel must be a positive odd number");
  if (c.model.w_rpp < 0 || c.model.w_c1 < 0 || c.model.w_c2 < 0 || c.model.w_fusion < 0)
    bad("model loss weights must be non-negative");
  if (c.model.w_rpp + c.model.w_c1 + c.model.w_c2 + c.model.w_fusion <= 0)
    bad("at least one model loss weight must be positive");
  if (c.model.lr <= 0) bad("model.lr must be positive");
  if (c.model.weight_decay < 0) bad("model.weight_decay must be non-negative");
  if (c.model.epochs < 1) bad("model.epochs must be >= 1");
  if (c.model.batch_size < 1) bad("model.batch_size must be >= 1");
  if (c.model.train_frac <= 0 || c.model.train_frac > 1)
    bad("model.train_frac must be in (0, 1]");
  if (c.model.val_frac < 0 || c.model.val_frac >= 1) bad("model.val_frac must be in [0, 1)");
  if (c.model.train_frac + c.model.val_frac > 1)
    bad("model.train_frac + model.val_frac must not exceed 1");

  if (c.placement.alpha < 0 || c.placement.alpha > 1) bad("placement.alpha must be in [0, 1]");
  if (c.placement.uav_cache_pct < 0 || c.placement.uav_cache_pct > 100)
    bad("placement.uav_cache_pct must be in [0, 100]");
  if (c.placement.n_s < 1) bad("placement.n_s must be >= 1");
  if (c.placement.n_b < 1) bad("placement.n_b must be >= 1");
  if (c.placement.n_b > c.placement.n_s)
    bad("placement.n_b must not exceed placement.n_s (each inter-cluster FAP needs its own "
        "segment)");
  if (c.placement.w < 0 || c.placement.z < 0 || (c.placement.w == 0 && c.placement.z == 0)) {
    bad("placement hex walk (w, z) must be non-negative and not both zero");
  } else {
    const int k =
        c.placement.w * c.placement.w + c.placement.w * c.placement.z + c.placement.z * c.placement.z;
    if (k != c.placement.n_b)
      bad("placement.n_b must equal the hex cluster size w^2+wz+z^2 = " + std::to_string(k));
  }

  if (c.simulation.policies.empty()) bad("simulation.policies must not be empty");
  std::set<std::string> seen_policies;
  bool reactive_configured = false;
  for (const auto& name : c.simulation.policies) {
    try {
      const auto p = parse_policy(name);
      reactive_configured = reactive_configured ||
                            (p == simulator::Policy::lru || p == simulator::Policy::lfu);
    } catch (const ConfigError& e) {
      bad(std::string("simulation.policies: ") + e.what());
    }
    if (!seen_policies.insert(name).second)
      bad("simulation.policies lists '" + name + "' twice");
  }
  if (c.simulation.sweep_cache_pct.empty()) bad("simulation.sweep_cache_pct must not be empty");
  for (double pct : c.simulation.sweep_cache_pct)
    if (pct <= 0 || pct > 100) {
      bad("simulation.sweep_cache_pct entries must lie in (0, 100]");
      break;
    }
  for (std::size_t i = 1; i < c.simulation.sweep_cache_pct.size(); ++i)
    if (c.simulation.sweep_cache_pct[i] <= c.simulation.sweep_cache_pct[i - 1]) {
      bad("simulation.sweep_cache_pct must be strictly increasing");
      break;
    }
  if (c.simulation.content_size <= 0) bad("simulation.content_size must be positive");
  if (c.simulation.area_side <= 0) bad("simulation.area_side must be positive");
  if (c.simulation.lambda_fap <= 0) bad("simulation.lambda_fap must be positive");
  if (c.simulation.n_uav < 0) bad("simulation.n_uav must be >= 0");
  if (c.simulation.n_uav > 0 && c.placement.uav_cache_pct <= 0 && reactive_configured)
    bad("placement.uav_cache_pct must be positive when UAVs exist and a reactive policy is "
        "configured");
  if (c.simulation.gmm_components < 1) bad("simulation.gmm_components must be >= 1");
  if (c.simulation.gmm_sigma <= 0) bad("simulation.gmm_sigma must be positive");
  if (c.simulation.indoor_prob < 0 || c.simulation.indoor_prob > 1)
    bad("simulation.indoor_prob must be in [0, 1]");
  if (c.simulation.speed_min < 0) bad("simulation.speed_min must be >= 0");
  if (c.simulation.speed_max < c.simulation.speed_min)
    bad("simulation.speed_max must be >= simulation.speed_min");
  if (c.simulation.v_th < 0) bad("simulation.v_th must be >= 0");
  if (c.simulation.cell_core_radius <= 0) bad("simulation.cell_core_radius must be positive");
  if (c.simulation.fap_range < c.simulation.cell_core_radius)
    bad("simulation.fap_range must be at least simulation.cell_core_radius");
  if (c.simulation.uav_range <= 0) bad("simulation.uav_range must be positive");

  if (c.out_dir.empty()) bad("output.dir must not be empty");
}

// ---- stage plumbing -----------------------------------------------------------

struct Paths {
  fs::path dir;
  fs::path trace() const { return dir / "trace.csv"; }
  fs::path windowed() const { return dir / "windowed.bin"; }
  fs::path samples() const { return dir / "samples.bin"; }
  fs::path model() const { return dir / "model.ckpt"; }
  fs::path history() const { return dir / "history.csv"; }
  fs::path plan(int c_f) const { return dir / ("plan_cf" + std::to_string(c_f) + ".csv"); }
  fs::path metrics(int c_f) const { return dir / ("metrics_cf" + std::to_string(c_f) + ".csv"); }
  fs::path report_hits() const { return dir / "report_hit_ratio.csv"; }
  fs::path report_bytes() const { return dir / "report_byte_volume.csv"; }
};

Paths paths_for(const ExperimentConfig& cfg) { return {fs::path(cfg.out_dir)}; }

std::string csv_meta(const ExperimentConfig& cfg) {
  return "config=" + cfg.config_hash + " seed=" + std::to_string(cfg.seed) +
         " tool=" + kToolVersion;
}

pipeline::ArtifactMeta bin_meta(const ExperimentConfig& cfg) {
  return {{"config", cfg.config_hash},
          {"seed", std::to_string(cfg.seed)},
          {"tool", kToolVersion}};
}

std::string need_artifact(const fs::path& p, const std::string& what,
                          const std::string& producer) {
  if (!fs::exists(p))
    throw DataError(what + " artifact '" + p.string() + "' not found; run `mtec " + producer +
                    "` first");
  return read_file(p.string());
}

void say(const ExperimentConfig& cfg, const std::string& msg) {
  if (!cfg.quiet) std::cout << "[mtec] " << msg << "\n";
}

int capacity_for(double pct, int n_contents) {
  return std::max(1, static_cast<int>(std::llround(pct / 100.0 * n_contents)));
}

int uav_capacity(const ExperimentConfig& cfg, int n_contents) {
  if (cfg.placement.uav_cache_pct <= 0) return 0;
  return std::max(1,
                  static_cast<int>(std::llround(cfg.placement.uav_cache_pct / 100.0 * n_contents)));
}

simulator::Topology make_topology(const ExperimentConfig& cfg) {
  simulator::TopologyConfig tc;
  tc.area_side = cfg.simulation.area_side;
  tc.lambda_fap = cfg.simulation.lambda_fap;
  tc.n_uav = cfg.simulation.n_uav;
  tc.n_users = cfg.dataset.n_users;
  tc.gmm_components = cfg.simulation.gmm_components;
  tc.gmm_sigma = cfg.simulation.gmm_sigma;
  tc.indoor_prob = cfg.simulation.indoor_prob;
  tc.speed_min = cfg.simulation.speed_min;
  tc.speed_max = cfg.simulation.speed_max;
  tc.v_th = cfg.simulation.v_th;
  tc.cell_core_radius = cfg.simulation.cell_core_radius;
  tc.fap_range = cfg.simulation.fap_range;
  tc.uav_range = cfg.simulation.uav_range;
  tc.w = cfg.placement.w;
  tc.z = cfg.placement.z;
  tc.seed = derive_seed(cfg.seed, kStreamTopology);
  return simulator::generate_topology(tc);
}

pipeline::SampleSet load_samples(const Paths& p) {
  auto set = pipeline::deserialize_samples(need_artifact(p.samples(), "samples", "preprocess"));
  if (set.samples.empty())
    throw DataError(
        "samples artifact holds no samples: the trace spans fewer than lookback + 1 full "
        "windows; lower pipeline.lookback or pipeline.window");
  return set;
}

// Timestamp of the first interval the trained model predicts: the label
// window of the chronologically last sample. Placement plans activate here
// and metrics are scored from here on.
std::int64_t eval_start(const ExperimentConfig& cfg, const pipeline::SampleSet& set) {
  const long long last =
      (static_cast<long long>(set.samples.size()) - 1) * cfg.pipeline.stride + set.lookback;
  return last * cfg.pipeline.window;
}

}  // namespace

// ---- config -------------------------------------------------------------------

std::string canonical_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& f : field_table()) {
    if (!f.hashed) continue;
    out += std::string(f.section) + "." + f.key + "=" + f.get(cfg) + "\n";
  }
  return out;
}

std::string default_config_text() {
  const ExperimentConfig d;
  std::string out = "# mtec experiment configuration\n";
  std::string section;
  for (const auto& f : field_table()) {
    if (section != f.section) {
      section = f.section;
      out += "\n[" + section + "]\n";
    }
    out += std::string(f.key) + " = " + f.get(d) + "\n";
  }
  return out;
}

ExperimentConfig load_config(
    const std::string& text,
    const std::vector<std::pair<std::string, std::string>>& overrides) {
  ExperimentConfig cfg;
  std::vector<std::string> errors;
  const auto entries = parse_ini(text, errors);
  std::map<std::string, int> first_line;
  for (const auto& e : entries) {
    const std::string id = e.section + "." + e.key;
    const auto [it, fresh] = first_line.emplace(id, e.line);
    if (!fresh) {
      errors.push_back("line " + std::to_string(e.line) + ": duplicate key '" + id +
                       "' (first set on line " + std::to_string(it->second) + ")");
      continue;
    }
    apply_entry(cfg, e.section, e.key, e.value, "line " + std::to_string(e.line), errors);
  }
  for (const auto& [key, value] : overrides) {
    const auto dot = key.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == key.size()) {
      errors.push_back("override: expected section.key=value, got '" + key + "'");
      continue;
    }
    apply_entry(cfg, key.substr(0, dot), key.substr(dot + 1), value, "override", errors);
  }
  // value-level failures leave defaults behind; cross-field checks would only
  // add noise on top of them
  if (errors.empty()) validate_semantics(cfg, errors);
  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  cfg.config_hash = hex64(fnv1a64(canonical_config(cfg)));
  return cfg;
}

// ---- stages ---------------------------------------------------------------------

void run_preprocess(const ExperimentConfig& cfg) {
  const Paths p = paths_for(cfg);
  fs::create_directories(p.dir);

  std::vector<trace::RequestEvent> events;
  int n_contents = 0;
  std::int64_t horizon = 0;
  if (cfg.dataset.source == "synthetic") {
    trace::SynthConfig sc;
    sc.n_contents = cfg.dataset.n_contents;
    sc.duration_s = cfg.dataset.duration;
    sc.zipf_exponent = cfg.dataset.zipf_exponent;
    sc.drift_times = cfg.dataset.drift_times;
    sc.seed = derive_seed(cfg.seed, kStreamTrace);
    sc.n_events = cfg.dataset.n_events;
    sc.n_users = cfg.dataset.n_users;
    events = trace::synth_trace(sc);
    n_contents = cfg.dataset.n_contents;
    horizon = cfg.dataset.duration;
  } else {
    if (!fs::exists(cfg.dataset.path))
      throw DataError("dataset file '" + cfg.dataset.path + "' not found");
    trace::TraceFormat fmt = trace::TraceFormat::synthetic_csv;
    if (cfg.dataset.format == "movielens_ratings") fmt = trace::TraceFormat::movielens_ratings;
    if (cfg.dataset.format == "movielens_100k") fmt = trace::TraceFormat::movielens_100k;
    std::istringstream in(read_file(cfg.dataset.path));
    trace::ParsedTrace parsed = trace::parse_trace(in, fmt);
    events = std::move(parsed.events);
    if (events.empty()) throw DataError("dataset '" + cfg.dataset.path + "' contains no events");
    n_contents = parsed.n_contents;
    horizon = events.back().timestamp + 1;
    if (cfg.pipeline.topk > n_contents)
      throw ConfigError("pipeline.topk=" + std::to_string(cfg.pipeline.topk) +
                        " exceeds the catalog observed in '" + cfg.dataset.path +
                        "' (n_contents=" + std::to_string(n_contents) + ")");
  }

  // the canonical trace artifact is replayed again by the simulate stage
  std::ostringstream tr;
  trace::serialize_trace(tr, events, "mtec-trace v1 " + csv_meta(cfg));
  write_file_atomic(p.trace().string(), tr.str());

  const auto win = pipeline::window_counts(events, n_contents, horizon, cfg.pipeline.window);
  const auto samples =
      pipeline::segment_samples(win, cfg.pipeline.lookback, cfg.pipeline.topk, cfg.pipeline.stride);
  write_file_atomic(p.windowed().string(), pipeline::serialize_windowed(win, bin_meta(cfg)));
  write_file_atomic(p.samples().string(), pipeline::serialize_samples(samples, bin_meta(cfg)));
  say(cfg, "preprocess: " + std::to_string(events.size()) + " events, " +
               std::to_string(n_contents) + " contents, " + std::to_string(win.n_windows) +
               " windows, " + std::to_string(samples.samples.size()) + " samples");
}

void run_train(const ExperimentConfig& cfg) {
  const Paths p = paths_for(cfg);
  const auto set = load_samples(p);
  const int n = static_cast<int>(set.samples.size());
  int n_train = std::min(n, std::max(1, static_cast<int>(std::floor(cfg.model.train_frac * n))));
  const int n_val =
      std::min(n - n_train, static_cast<int>(std::floor(cfg.model.val_frac * n)));

  pipeline::SampleSet train_set{set.n_contents, set.lookback, set.topk, {}};
  train_set.samples.assign(set.samples.begin(), set.samples.begin() + n_train);
  pipeline::SampleSet val_set{set.n_contents, set.lookback, set.topk, {}};
  val_set.samples.assign(set.samples.begin() + n_train, set.samples.begin() + n_train + n_val);

  model::MtecConfig mc;
  mc.n_contents = set.n_contents;
  mc.lookback = set.lookback;
  mc.topk = set.topk;
  mc.d_model = cfg.model.d_model;
  mc.n_heads = cfg.model.n_heads;
  mc.n_layers = cfg.model.n_layers;
  mc.mlp_layers = cfg.model.mlp_layers;
  mc.mlp_dim = cfg.model.mlp_dim;
  mc.conv_kernel = cfg.model.conv_kernel;
  mc.w_rpp = cfg.model.w_rpp;
  mc.w_c1 = cfg.model.w_c1;
  mc.w_c2 = cfg.model.w_c2;
  mc.w_fusion = cfg.model.w_fusion;
  mc.lr = cfg.model.lr;
  mc.weight_decay = cfg.model.weight_decay;
  mc.epochs = cfg.model.epochs;
  mc.batch_size = cfg.model.batch_size;
  mc.gaf_mode = cfg.model.gaf_mode;
  mc.seed = derive_seed(cfg.seed, kStreamModel);

  model::MtecModel m = model::build_model(mc);
  const model::TrainHistory hist = model::train(m, train_set, val_set);
  write_file_atomic(p.model().string(), model::serialize_model(m, bin_meta(cfg)));
  write_file_atomic(p.history().string(),
                    model::history_csv(hist, "mtec-history v1 " + csv_meta(cfg)));
  say(cfg, "train: " + std::to_string(n_train) + " train / " + std::to_string(n_val) +
               " val samples, " + std::to_string(cfg.model.epochs) +
               " epochs, best val accuracy " + format_double(hist.best_val_accuracy) +
               " (epoch " + std::to_string(hist.best_epoch) + ")");
}

void run_place(const ExperimentConfig& cfg) {
  const Paths p = paths_for(cfg);
  const auto set = load_samples(p);
  const model::MtecModel m =
      model::deserialize_model(need_artifact(p.model(), "model", "train"));
  if (m.cfg.n_contents != set.n_contents || m.cfg.lookback != set.lookback)
    throw DataError("model and samples artifacts disagree (model: n_contents=" +
                    std::to_string(m.cfg.n_contents) + ", lookback=" +
                    std::to_string(m.cfg.lookback) + "; samples: n_contents=" +
                    std::to_string(set.n_contents) + ", lookback=" +
                    std::to_string(set.lookback) + "); re-run `mtec preprocess` and `mtec train`");

  const nn::Tensor x = model::prepare_input(set.samples.back(), m.cfg);
  const int n_c = set.n_contents;
  const int c_u = uav_capacity(cfg, n_c);

  const simulator::Topology topo = make_topology(cfg);
  std::vector<int> uav_ids(topo.uavs.size());
  for (std::size_t i = 0; i < uav_ids.size(); ++i) uav_ids[i] = static_cast<int>(i);

  for (double pct : cfg.simulation.sweep_cache_pct) {
    const int c_f = capacity_for(pct, n_c);
    const int n_p = static_cast<int>(std::floor(cfg.placement.alpha * c_f));
    const int n_a = cfg.placement.n_s * (c_f - n_p);
    const int k_place = std::min(n_c, n_p + n_a);

    model::PredictionOutput pred = model::predict_topk(m, x, k_place);
    model::categorize(pred, n_p, n_a);
    std::vector<int> ranked = pred.popular;
    ranked.insert(ranked.end(), pred.mediocre.begin(), pred.mediocre.end());

    const placement::PlacementPlan plan =
        placement::make_plan(ranked, cfg.placement.alpha, c_f, c_u, cfg.placement.n_s,
                             cfg.placement.n_b, cfg.placement.w, cfg.placement.z);
    const placement::NetworkPlan net = placement::intercluster_copy(plan, topo.clusters, uav_ids);
    const placement::VerifyReport rep = placement::verify_plan(net);
    if (!rep.ok) {
      std::string msg = "generated plan failed verification:";
      for (const auto& v : rep.violations) msg += "\n  - " + v;
      throw DataError(msg);
    }
    write_file_atomic(p.plan(c_f).string(), placement::serialize_plan(net, csv_meta(cfg)));
    say(cfg, "place: C_f=" + std::to_string(c_f) + " -> " + std::to_string(plan.popular.size()) +
                 " complete + " + std::to_string(plan.mediocre.size()) + " coded contents" +
                 (plan.truncated ? " (ranking shorter than capacity)" : ""));
  }
}

void run_simulate(const ExperimentConfig& cfg) {
  const Paths p = paths_for(cfg);
  const auto set = load_samples(p);

  std::istringstream tin(need_artifact(p.trace(), "trace", "preprocess"));
  const trace::ParsedTrace parsed = trace::parse_trace(tin, trace::TraceFormat::synthetic_csv);

  const simulator::Topology topo = make_topology(cfg);
  const std::int64_t start = eval_start(cfg, set);
  const int c_u = uav_capacity(cfg, set.n_contents);

  for (double pct : cfg.simulation.sweep_cache_pct) {
    const int c_f = capacity_for(pct, set.n_contents);
    const placement::NodePlacement np =
        placement::parse_plan(need_artifact(p.plan(c_f), "plan", "place"));
    simulator::PlanSchedule sched;
    sched.entries.emplace_back(start, np);

    std::vector<simulator::MetricsReport> reports;
    std::string digest;
    for (const auto& name : cfg.simulation.policies) {
      simulator::SimOptions opt;
      opt.content_size = cfg.simulation.content_size;
      opt.n_contents = set.n_contents;
      opt.reactive_c_f = c_f;
      opt.reactive_c_u = c_u;
      opt.metrics_start = start;
      reports.push_back(simulator::replay(parsed.events, sched, topo, parse_policy(name), opt));
      digest += " " + name + "=" + format_double(reports.back().cache_hit_ratio);
    }
    write_file_atomic(p.metrics(c_f).string(),
                      simulator::metrics_csv(reports, "mtec-metrics v1 " + csv_meta(cfg)));
    say(cfg, "simulate: C_f=" + std::to_string(c_f) + " hit ratios:" + digest);
  }
}

void run_report(const ExperimentConfig& cfg) {
  const Paths p = paths_for(cfg);
  const auto set = load_samples(p);

  std::string head = "cache_pct,c_f";
  for (const auto& name : cfg.simulation.policies) head += "," + name;
  std::string hits = "# mtec-report v1 " + csv_meta(cfg) + "\n" + head + "\n";
  std::string bytes = hits;

  for (double pct : cfg.simulation.sweep_cache_pct) {
    const int c_f = capacity_for(pct, set.n_contents);
    const fs::path mpath = p.metrics(c_f);
    const std::string text = need_artifact(mpath, "metrics", "simulate");

    // policy -> (hit_ratio, byte_volume), copied verbatim from summary rows
    std::map<std::string, std::pair<std::string, std::string>> summary;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#' || line.rfind("policy,", 0) == 0) continue;
      std::vector<std::string> fields;
      std::istringstream row(line);
      std::string f;
      while (std::getline(row, f, ',')) fields.push_back(f);
      if (fields.size() != 8)
        throw DataError("metrics file '" + mpath.string() + "' line " + std::to_string(line_no) +
                        ": expected 8 fields, got " + std::to_string(fields.size()));
      if (fields[1] == "all") summary[fields[0]] = {fields[4], fields[7]};
    }

    std::string hrow = format_double(pct) + "," + std::to_string(c_f);
    std::string brow = hrow;
    for (const auto& name : cfg.simulation.policies) {
      const auto it = summary.find(name);
      if (it == summary.end())
        throw DataError("metrics file '" + mpath.string() + "' has no summary row for policy '" +
                        name + "'; re-run `mtec simulate`");
      hrow += "," + it->second.first;
      brow += "," + it->second.second;
    }
    hits += hrow + "\n";
    bytes += brow + "\n";
  }

  write_file_atomic(p.report_hits().string(), hits);
  write_file_atomic(p.report_bytes().string(), bytes);
  say(cfg, "report: wrote " + p.report_hits().string() + " and " + p.report_bytes().string());
}

void run_all(const ExperimentConfig& cfg) {
  run_preprocess(cfg);
  run_train(cfg);
  run_place(cfg);
  run_simulate(cfg);
  run_report(cfg);
}

}  // namespace mtec::experiment
