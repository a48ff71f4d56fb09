#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mtec/nn.hpp"
#include "mtec/pipeline.hpp"

namespace mtec::model {

struct MtecConfig {
  int n_contents = 0;  // N_c
  int lookback = 0;    // L
  int topk = 0;        // K
  int d_model = 64;
  int n_heads = 16;
  int n_layers = 2;
  int mlp_layers = 2;
  int mlp_dim = 256;
  int conv_kernel = 3;
  // composite loss weights: probability regression, first classifier,
  // second classifier, fusion
  double w_rpp = 0.2;
  double w_c1 = 0.4;
  double w_c2 = 0.1;
  double w_fusion = 0.3;
  double lr = 1e-4;
  double weight_decay = 1e-5;
  int epochs = 50;
  int batch_size = 32;
  bool gaf_mode = false;
  std::uint64_t seed = 1;
};

// Dual-path predictor: a plain classification path and a
// regression-then-classification path whose predicted probability vector is
// appended to the input as one extra time-step token. Mean-pooled features of
// both paths are summed and pushed through a dense fusion layer with sigmoid
// scores per content.
struct MtecModel {
  MtecConfig cfg;
  nn::ParameterStore store;
  nn::EncoderConfig enc_tc;   // classification path, seq_len = L
  nn::EncoderConfig enc_rpp;  // probability block, seq_len = L
  nn::EncoderConfig enc_cls;  // second classifier, seq_len = L + 1
};

MtecModel build_model(const MtecConfig& cfg);

// Raw sample counts -> model input: per-content min-max normalization,
// optional GASF-diagonal re-encoding, tokens = time steps (L x N_c).
nn::Tensor prepare_input(const pipeline::Sample& sample, const MtecConfig& cfg);

struct ForwardOutput {
  nn::Var tc_feat;        // (1, d)
  nn::Var cls_feat;       // (1, d)
  nn::Var p_hat;          // (1, N_c), softmax distribution
  nn::Var tc_scores;      // (1, N_c) sigmoid
  nn::Var cls_scores;     // (1, N_c) sigmoid
  nn::Var fusion_scores;  // (1, N_c) sigmoid
};

ForwardOutput forward(const MtecModel& m, const nn::Tensor& x);

struct LossTerms {
  double rpp_mse = 0;
  double c1_bce = 0;
  double c2_bce = 0;
  double fusion_bce = 0;
  double total = 0;
};

// total = w_rpp*MSE(p_hat, p_true) + w_c1*BCE(tc) + w_c2*BCE(cls2)
//       + w_fusion*BCE(fusion)
std::pair<nn::Var, LossTerms> total_loss(const ForwardOutput& out, const nn::Tensor& y,
                                         const nn::Tensor& p_true, const MtecConfig& cfg);

struct EpochStats {
  int epoch = 0;
  double loss_total = 0;
  double loss_rpp = 0;
  double loss_c1 = 0;
  double loss_c2 = 0;
  double loss_f = 0;
  double val_accuracy = 0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;
  double best_val_accuracy = 0;
};

// Mini-batch Adam with a per-epoch seeded shuffle. The best-validation
// parameter snapshot is restored at the end (final parameters kept when the
// validation set is empty). Non-finite loss aborts with diagnostics.
TrainHistory train(MtecModel& m, const pipeline::SampleSet& train_set,
                   const pipeline::SampleSet& val_set);

std::string history_csv(const TrainHistory& h, const std::string& header_meta);

struct PredictionOutput {
  std::vector<double> scores;  // fusion sigmoid scores, index l-1 = content l
  std::vector<double> p_hat;   // predicted request distribution
  std::vector<int> topk;       // content ids, best first
  std::vector<int> popular;    // filled by categorize
  std::vector<int> mediocre;   // filled by categorize
};

PredictionOutput predict_topk(const MtecModel& m, const nn::Tensor& x, int k);

// Splits the Top-K ids by predicted probability (descending, ties to the
// lower id): first n_popular stored complete, next n_mediocre stored coded.
void categorize(PredictionOutput& out, int n_popular, int n_mediocre);

// |predicted ∩ actual| / K
double accuracy(const std::vector<int>& predicted, const std::vector<int>& actual);

// Mean Top-K overlap accuracy over a sample set.
double evaluate_accuracy(const MtecModel& m, const pipeline::SampleSet& set);

std::string serialize_model(const MtecModel& m,
                            const std::map<std::string, std::string>& extra_meta);
MtecModel deserialize_model(const std::string& bytes,
                            std::map<std::string, std::string>* meta_out = nullptr);

}  // namespace mtec::model
