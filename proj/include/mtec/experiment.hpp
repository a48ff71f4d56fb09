#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace mtec::experiment {

struct DatasetConfig {
  std::string source = "synthetic";      // synthetic | file
  std::string format = "synthetic_csv";  // file mode: movielens_ratings |
                                         // movielens_100k | synthetic_csv
  std::string path;
  int n_contents = 200;
  int n_users = 60;
  std::int64_t duration = 260000;
  std::int64_t n_events = 40000;
  double zipf_exponent = 0.8;
  std::vector<std::int64_t> drift_times{50000, 100000, 150000, 200000};
};

struct PipelineStageConfig {
  std::int64_t window = 1000;  // W, seconds per interval
  int lookback = 49;           // L
  int topk = 20;               // K
  int stride = 1;
};

struct ModelStageConfig {
  int d_model = 64;
  int n_heads = 16;
  int n_layers = 2;
  int mlp_layers = 2;
  int mlp_dim = 256;
  int conv_kernel = 3;
  double w_rpp = 0.2;
  double w_c1 = 0.4;
  double w_c2 = 0.1;
  double w_fusion = 0.3;
  double lr = 1e-4;
  double weight_decay = 1e-5;
  int epochs = 30;
  int batch_size = 32;
  bool gaf_mode = false;
  double train_frac = 0.8;
  double val_frac = 0.1;
};

struct PlacementStageConfig {
  double alpha = 0.3;
  double uav_cache_pct = 10.0;  // C_u as percent of the catalog
  int n_s = 7;
  int n_b = 7;
  int w = 1;
  int z = 2;
};

struct SimulationStageConfig {
  std::vector<std::string> policies{"mtec_plan", "lru", "lfu", "oracle"};
  std::vector<double> sweep_cache_pct{5, 10, 15, 20};  // C_f percent sweep
  double content_size = 1.0;
  double area_side = 1000.0;
  double lambda_fap = 6e-5;
  int n_uav = 3;
  int gmm_components = 3;
  double gmm_sigma = 80.0;
  double indoor_prob = 0.5;
  double speed_min = 0.0;
  double speed_max = 20.0;
  double v_th = 10.0;
  double cell_core_radius = 120.0;
  double fap_range = 500.0;
  double uav_range = 500.0;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  PipelineStageConfig pipeline;
  ModelStageConfig model;
  PlacementStageConfig placement;
  SimulationStageConfig simulation;
  std::string out_dir = "out";
  std::uint64_t seed = 42;

  bool quiet = false;        // CLI-only, not part of the hash
  std::string config_hash;   // filled by load_config
};

// Parses the INI-style config text, applies `--set section.key=value`
// overrides, validates every field, and stamps the canonical-form hash.
// Unknown keys/sections and bad values are all reported in one error.
ExperimentConfig load_config(const std::string& text,
                             const std::vector<std::pair<std::string, std::string>>& overrides);

// Stable serialization of every field; its FNV-1a hash identifies the run.
std::string canonical_config(const ExperimentConfig& cfg);

// A default config file (the values above) for `mtec init`-style bootstrap
// and the bundled example.
std::string default_config_text();

// ---- stages -----------------------------------------------------------------

// Each stage reads the previous stage's artifacts from cfg.out_dir and writes
// its own atomically. Missing inputs raise errors naming the producing
// subcommand.
void run_preprocess(const ExperimentConfig& cfg);
void run_train(const ExperimentConfig& cfg);
void run_place(const ExperimentConfig& cfg);
void run_simulate(const ExperimentConfig& cfg);
void run_report(const ExperimentConfig& cfg);
void run_all(const ExperimentConfig& cfg);

}  // namespace mtec::experiment
