#pragma once

#include <map>
#include <string>
#include <vector>

#include "mtec/autograd.hpp"
#include "mtec/rng.hpp"
#include "mtec/tensor.hpp"

namespace mtec::nn {

// Named parameter registry. std::map keeps iteration (and therefore optimizer
// update order and checkpoint layout) deterministic.
struct ParameterStore {
  std::map<std::string, Var> params;

  Var add(const std::string& name, Tensor init);
  Var get(const std::string& name) const;
  bool has(const std::string& name) const { return params.count(name) != 0; }
  void zero_grad();
  std::size_t count_scalars() const;
};

Tensor xavier_uniform(int rows, int cols, Rng& rng);
Tensor normal_init(int rows, int cols, double stddev, Rng& rng);

struct EncoderConfig {
  int seq_len = 0;      // tokens per sequence
  int d_in = 0;         // raw token width
  int d_model = 64;
  int n_heads = 16;
  int n_layers = 2;
  int mlp_layers = 2;   // linear maps per feed-forward block
  int mlp_dim = 256;
  int conv_kernel = 3;  // token embedding kernel (odd)
};

// Registers all weights for one encoder under `prefix` (embedding conv,
// positional table, per-layer attention + feed-forward + norm gains/biases,
// final norm). Parameter names are stable across runs.
void register_encoder(ParameterStore& store, const std::string& prefix,
                      const EncoderConfig& cfg, Rng& rng);

// Single-head scaled dot-product attention over row-token matrices.
Var self_attention(const Var& q, const Var& k, const Var& v);

// Multi-head block: project with Wq/Wk/Wv, split columns into heads, attend,
// concat, project with Wo.
Var multi_head_attention(const ParameterStore& store, const std::string& prefix, const Var& x,
                         int n_heads);

// Pre-norm residual layer: x + MHA(LN(x)), then x + FF(LN(x)).
Var encoder_layer(const ParameterStore& store, const std::string& prefix, const Var& x,
                  const EncoderConfig& cfg);

// Full stack: conv token embedding + positional table, n_layers encoder
// layers, final layer norm. Input is (seq_len, d_in); output (seq_len, d_model).
Var transformer_encode(const ParameterStore& store, const std::string& prefix, const Var& x,
                       const EncoderConfig& cfg);

// ---- optimizer ----------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;  // decoupled, applied before the moment update
};

struct AdamState {
  long long step = 0;
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
};

void adam_step(ParameterStore& store, AdamState& state, const AdamConfig& cfg);

// ---- checkpoints ----------------------------------------------------------------

// MTECCKP1 binary layout is documented in the README.
std::string serialize_checkpoint(const ParameterStore& store,
                                 const std::map<std::string, std::string>& meta);
void deserialize_checkpoint(const std::string& bytes, ParameterStore& store,
                            std::map<std::string, std::string>& meta);
// Reads only the metadata header (no parameter-shape validation).
std::map<std::string, std::string> read_checkpoint_meta(const std::string& bytes);

}  // namespace mtec::nn
