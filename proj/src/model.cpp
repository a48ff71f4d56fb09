#include "mtec/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "mtec/common.hpp"
#include "mtec/rng.hpp"

namespace mtec::model {

namespace {

void validate(const MtecConfig& cfg) {
  if (cfg.n_contents <= 0 || cfg.lookback <= 0) throw ConfigError("model needs N_c and L > 0");
  if (cfg.topk <= 0 || cfg.topk > cfg.n_contents)
    throw ConfigError("model topk must be in [1, n_contents]");
  if (cfg.w_rpp < 0 || cfg.w_c1 < 0 || cfg.w_c2 < 0 || cfg.w_fusion < 0)
    throw ConfigError("loss weights must be non-negative");
  if (cfg.w_rpp + cfg.w_c1 + cfg.w_c2 + cfg.w_fusion <= 0)
    throw ConfigError("loss weights must not all be zero");
  if (cfg.batch_size <= 0) throw ConfigError("batch size must be positive");
  if (cfg.epochs < 0) throw ConfigError("epochs must be non-negative");
  if (cfg.lr <= 0) throw ConfigError("learning rate must be positive");
  if (cfg.weight_decay < 0) throw ConfigError("weight decay must be non-negative");
}

nn::EncoderConfig encoder_for(const MtecConfig& cfg, int seq_len) {
  nn::EncoderConfig e;
  e.seq_len = seq_len;
  e.d_in = cfg.n_contents;
  e.d_model = cfg.d_model;
  e.n_heads = cfg.n_heads;
  e.n_layers = cfg.n_layers;
  e.mlp_layers = cfg.mlp_layers;
  e.mlp_dim = cfg.mlp_dim;
  e.conv_kernel = cfg.conv_kernel;
  return e;
}

void check_finite(const nn::Var& v, const char* block) {
  for (double x : v->value.data)
    if (!std::isfinite(x))
      throw NumericalError(std::string("non-finite activations in ") + block);
}

nn::Var head(const nn::ParameterStore& store, const std::string& prefix, const nn::Var& feat) {
  return add_rowvec(matmul(feat, store.get(prefix + ".w")), store.get(prefix + ".b"));
}

}  // namespace

MtecModel build_model(const MtecConfig& cfg) {
  validate(cfg);
  MtecModel m;
  m.cfg = cfg;
  m.enc_tc = encoder_for(cfg, cfg.lookback);
  m.enc_rpp = encoder_for(cfg, cfg.lookback);
  m.enc_cls = encoder_for(cfg, cfg.lookback + 1);
  Rng rng(derive_seed(cfg.seed, 7));
  nn::register_encoder(m.store, "tc", m.enc_tc, rng);
  nn::register_encoder(m.store, "rpp", m.enc_rpp, rng);
  nn::register_encoder(m.store, "cls", m.enc_cls, rng);
  m.store.add("tc_head.w", nn::xavier_uniform(cfg.d_model, cfg.n_contents, rng));
  m.store.add("tc_head.b", nn::Tensor(1, cfg.n_contents));
  m.store.add("rpp_head.w", nn::xavier_uniform(cfg.d_model, cfg.n_contents, rng));
  m.store.add("rpp_head.b", nn::Tensor(1, cfg.n_contents));
  m.store.add("cls_head.w", nn::xavier_uniform(cfg.d_model, cfg.n_contents, rng));
  m.store.add("cls_head.b", nn::Tensor(1, cfg.n_contents));
  m.store.add("fusion.w", nn::xavier_uniform(cfg.d_model, cfg.n_contents, rng));
  m.store.add("fusion.b", nn::Tensor(1, cfg.n_contents));
  return m;
}

nn::Tensor prepare_input(const pipeline::Sample& sample, const MtecConfig& cfg) {
  const int nc = cfg.n_contents, lb = cfg.lookback;
  if (sample.x.size() != static_cast<std::size_t>(nc) * lb)
    throw DataError("sample shape does not match model config");
  std::vector<double> rows = sample.x;  // (N_c, L) row-major
  pipeline::minmax_normalize_rows(rows, nc, lb);
  if (cfg.gaf_mode) {
    std::vector<double> series(static_cast<std::size_t>(lb));
    for (int l = 0; l < nc; ++l) {
      std::copy_n(rows.begin() + static_cast<std::size_t>(l) * lb, lb, series.begin());
      auto enc = pipeline::gasf_diagonal(series);
      std::copy_n(enc.begin(), lb, rows.begin() + static_cast<std::size_t>(l) * lb);
    }
  }
  nn::Tensor x(lb, nc);  // token t = all contents' values at window t
  for (int l = 0; l < nc; ++l)
    for (int t = 0; t < lb; ++t) x.at(t, l) = rows[static_cast<std::size_t>(l) * lb + t];
  return x;
}

ForwardOutput forward(const MtecModel& m, const nn::Tensor& x) {
  if (x.rows != m.cfg.lookback || x.cols != m.cfg.n_contents)
    throw DataError("forward input must be (lookback, n_contents)");
  ForwardOutput out;
  nn::Var input = nn::make_var(x);

  nn::Var tc_tokens = nn::transformer_encode(m.store, "tc", input, m.enc_tc);
  check_finite(tc_tokens, "tc encoder");
  out.tc_feat = nn::mean_rows(tc_tokens);
  out.tc_scores = nn::sigmoid(head(m.store, "tc_head", out.tc_feat));
  check_finite(out.tc_scores, "tc head");

  nn::Var rpp_tokens = nn::transformer_encode(m.store, "rpp", input, m.enc_rpp);
  check_finite(rpp_tokens, "rpp encoder");
  out.p_hat = nn::softmax_rows(head(m.store, "rpp_head", nn::mean_rows(rpp_tokens)));
  check_finite(out.p_hat, "rpp head");

  // predicted distribution rides along as one extra time-step token
  nn::Var cls_in = nn::concat_rows(input, out.p_hat);
  nn::Var cls_tokens = nn::transformer_encode(m.store, "cls", cls_in, m.enc_cls);
  check_finite(cls_tokens, "cls encoder");
  out.cls_feat = nn::mean_rows(cls_tokens);
  out.cls_scores = nn::sigmoid(head(m.store, "cls_head", out.cls_feat));
  check_finite(out.cls_scores, "cls head");

  out.fusion_scores = nn::sigmoid(head(m.store, "fusion", nn::add(out.tc_feat, out.cls_feat)));
  check_finite(out.fusion_scores, "fusion layer");
  return out;
}

std::pair<nn::Var, LossTerms> total_loss(const ForwardOutput& out, const nn::Tensor& y,
                                         const nn::Tensor& p_true, const MtecConfig& cfg) {
  nn::Var t_rpp = nn::mse(out.p_hat, p_true);
  nn::Var t_c1 = nn::bce(out.tc_scores, y);
  nn::Var t_c2 = nn::bce(out.cls_scores, y);
  nn::Var t_f = nn::bce(out.fusion_scores, y);
  nn::Var total = nn::add(nn::add(nn::scale(t_rpp, cfg.w_rpp), nn::scale(t_c1, cfg.w_c1)),
                          nn::add(nn::scale(t_c2, cfg.w_c2), nn::scale(t_f, cfg.w_fusion)));
  LossTerms terms;
  terms.rpp_mse = t_rpp->value.data[0];
  terms.c1_bce = t_c1->value.data[0];
  terms.c2_bce = t_c2->value.data[0];
  terms.fusion_bce = t_f->value.data[0];
  terms.total = total->value.data[0];
  return {total, terms};
}

namespace {

nn::Tensor label_tensor(const pipeline::Sample& s, int nc) {
  nn::Tensor y(1, nc);
  for (int l = 0; l < nc; ++l) y.at(0, l) = s.y[static_cast<std::size_t>(l)];
  return y;
}

nn::Tensor ptrue_tensor(const pipeline::Sample& s, int nc) {
  nn::Tensor p(1, nc);
  for (int l = 0; l < nc; ++l) p.at(0, l) = s.p_next[static_cast<std::size_t>(l)];
  return p;
}

std::vector<int> true_topk(const pipeline::Sample& s) {
  std::vector<int> ids;
  for (std::size_t l = 0; l < s.y.size(); ++l)
    if (s.y[l]) ids.push_back(static_cast<int>(l) + 1);
  return ids;
}

}  // namespace

TrainHistory train(MtecModel& m, const pipeline::SampleSet& train_set,
                   const pipeline::SampleSet& val_set) {
  const MtecConfig& cfg = m.cfg;
  if (train_set.n_contents != cfg.n_contents || train_set.lookback != cfg.lookback)
    throw DataError("training samples do not match model config");
  TrainHistory hist;
  if (cfg.epochs == 0 || train_set.samples.empty()) return hist;

  nn::AdamConfig adam;
  adam.lr = cfg.lr;
  adam.weight_decay = cfg.weight_decay;
  nn::AdamState adam_state;

  std::map<std::string, nn::Tensor> best_params;
  double best_acc = -1.0;
  int best_epoch = 0;

  const std::size_t n = train_set.samples.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, 10000 + static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    EpochStats stats;
    stats.epoch = epoch;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      const double inv_batch = 1.0 / static_cast<double>(stop - start);
      m.store.zero_grad();
      for (std::size_t i = start; i < stop; ++i) {
        const auto& smp = train_set.samples[order[i]];
        ForwardOutput out = forward(m, prepare_input(smp, cfg));
        auto [loss, terms] = total_loss(out, label_tensor(smp, cfg.n_contents),
                                        ptrue_tensor(smp, cfg.n_contents), cfg);
        if (!std::isfinite(terms.total))
          throw NumericalError("training diverged: non-finite loss at epoch " +
                               std::to_string(epoch) + ", sample " +
                               std::to_string(order[i]));
        nn::backward(nn::scale(loss, inv_batch));
        stats.loss_total += terms.total;
        stats.loss_rpp += terms.rpp_mse;
        stats.loss_c1 += terms.c1_bce;
        stats.loss_c2 += terms.c2_bce;
        stats.loss_f += terms.fusion_bce;
      }
      nn::adam_step(m.store, adam_state, adam);
    }
    stats.loss_total /= static_cast<double>(n);
    stats.loss_rpp /= static_cast<double>(n);
    stats.loss_c1 /= static_cast<double>(n);
    stats.loss_c2 /= static_cast<double>(n);
    stats.loss_f /= static_cast<double>(n);
    stats.val_accuracy = val_set.samples.empty() ? 0.0 : evaluate_accuracy(m, val_set);
    hist.epochs.push_back(stats);

    if (!val_set.samples.empty() && stats.val_accuracy > best_acc) {
      best_acc = stats.val_accuracy;
      best_epoch = epoch;
      best_params.clear();
      for (const auto& [name, var] : m.store.params) best_params.emplace(name, var->value);
    }
  }

  if (!best_params.empty()) {
    for (auto& [name, var] : m.store.params) var->value = best_params.at(name);
    hist.best_epoch = best_epoch;
    hist.best_val_accuracy = best_acc;
  } else if (!hist.epochs.empty()) {
    hist.best_epoch = hist.epochs.back().epoch;
  }
  return hist;
}

std::string history_csv(const TrainHistory& h, const std::string& header_meta) {
  std::string out;
  if (!header_meta.empty()) out += "# " + header_meta + "\n";
  out += "epoch,loss_total,loss_rpp,loss_c1,loss_c2,loss_f,val_accuracy\n";
  for (const auto& e : h.epochs) {
    out += std::to_string(e.epoch);
    for (double v : {e.loss_total, e.loss_rpp, e.loss_c1, e.loss_c2, e.loss_f, e.val_accuracy})
      out += "," + format_double(v);
    out += "\n";
  }
  return out;
}

PredictionOutput predict_topk(const MtecModel& m, const nn::Tensor& x, int k) {
  if (k < 0 || k > m.cfg.n_contents) throw ConfigError("predict_topk: k out of range");
  ForwardOutput out = forward(m, x);
  PredictionOutput pred;
  pred.scores = out.fusion_scores->value.data;
  pred.p_hat = out.p_hat->value.data;
  std::vector<int> idx(static_cast<std::size_t>(m.cfg.n_contents));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (pred.scores[static_cast<std::size_t>(a)] != pred.scores[static_cast<std::size_t>(b)])
      return pred.scores[static_cast<std::size_t>(a)] > pred.scores[static_cast<std::size_t>(b)];
    return a < b;
  });
  pred.topk.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) pred.topk.push_back(idx[static_cast<std::size_t>(i)] + 1);
  return pred;
}

void categorize(PredictionOutput& out, int n_popular, int n_mediocre) {
  if (n_popular < 0 || n_mediocre < 0) throw ConfigError("categorize: negative cardinality");
  std::vector<int> ranked = out.topk;
  std::sort(ranked.begin(), ranked.end(), [&](int a, int b) {
    const double pa = out.p_hat[static_cast<std::size_t>(a - 1)];
    const double pb = out.p_hat[static_cast<std::size_t>(b - 1)];
    if (pa != pb) return pa > pb;
    return a < b;
  });
  out.popular.clear();
  out.mediocre.clear();
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (i < static_cast<std::size_t>(n_popular))
      out.popular.push_back(ranked[i]);
    else if (i < static_cast<std::size_t>(n_popular) + static_cast<std::size_t>(n_mediocre))
      out.mediocre.push_back(ranked[i]);
  }
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& actual) {
  if (actual.empty()) return predicted.empty() ? 1.0 : 0.0;
  std::set<int> truth(actual.begin(), actual.end());
  int overlap = 0;
  for (int id : predicted) overlap += truth.count(id) ? 1 : 0;
  return static_cast<double>(overlap) / static_cast<double>(truth.size());
}

double evaluate_accuracy(const MtecModel& m, const pipeline::SampleSet& set) {
  if (set.samples.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& smp : set.samples) {
    PredictionOutput pred = predict_topk(m, prepare_input(smp, m.cfg), set.topk);
    acc += accuracy(pred.topk, true_topk(smp));
  }
  return acc / static_cast<double>(set.samples.size());
}

std::string serialize_model(const MtecModel& m,
                            const std::map<std::string, std::string>& extra_meta) {
  std::map<std::string, std::string> meta = extra_meta;
  meta["n_contents"] = std::to_string(m.cfg.n_contents);
  meta["lookback"] = std::to_string(m.cfg.lookback);
  meta["topk"] = std::to_string(m.cfg.topk);
  meta["d_model"] = std::to_string(m.cfg.d_model);
  meta["n_heads"] = std::to_string(m.cfg.n_heads);
  meta["n_layers"] = std::to_string(m.cfg.n_layers);
  meta["mlp_layers"] = std::to_string(m.cfg.mlp_layers);
  meta["mlp_dim"] = std::to_string(m.cfg.mlp_dim);
  meta["conv_kernel"] = std::to_string(m.cfg.conv_kernel);
  meta["gaf_mode"] = m.cfg.gaf_mode ? "1" : "0";
  // "model_seed", so the run-level "seed" meta key passes through untouched
  meta["model_seed"] = std::to_string(m.cfg.seed);
  return nn::serialize_checkpoint(m.store, meta);
}

MtecModel deserialize_model(const std::string& bytes,
                            std::map<std::string, std::string>* meta_out) {
  std::map<std::string, std::string> meta = nn::read_checkpoint_meta(bytes);
  auto geti = [&](const char* key) {
    auto it = meta.find(key);
    if (it == meta.end()) throw DataError(std::string("model file missing field ") + key);
    return std::stoi(it->second);
  };
  MtecConfig cfg;
  cfg.n_contents = geti("n_contents");
  cfg.lookback = geti("lookback");
  cfg.topk = geti("topk");
  cfg.d_model = geti("d_model");
  cfg.n_heads = geti("n_heads");
  cfg.n_layers = geti("n_layers");
  cfg.mlp_layers = geti("mlp_layers");
  cfg.mlp_dim = geti("mlp_dim");
  cfg.conv_kernel = geti("conv_kernel");
  cfg.gaf_mode = geti("gaf_mode") != 0;
  auto seed_it = meta.find("model_seed");
  if (seed_it == meta.end()) throw DataError("model file missing field model_seed");
  cfg.seed = std::stoull(seed_it->second);
  MtecModel m = build_model(cfg);
  nn::deserialize_checkpoint(bytes, m.store, meta);
  if (meta_out) *meta_out = meta;
  return m;
}

}  // namespace mtec::model
