#include "mtec/nn.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "mtec/common.hpp"

namespace mtec::nn {

Var ParameterStore::add(const std::string& name, Tensor init) {
  if (params.count(name)) throw std::invalid_argument("duplicate parameter " + name);
  Var v = make_var(std::move(init));
  params.emplace(name, v);
  return v;
}

Var ParameterStore::get(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw std::invalid_argument("unknown parameter " + name);
  return it->second;
}

void ParameterStore::zero_grad() {
  for (auto& [name, var] : params)
    for (double& g : var->grad.data) g = 0.0;
}

std::size_t ParameterStore::count_scalars() const {
  std::size_t n = 0;
  for (const auto& [name, var] : params) n += var->value.size();
  return n;
}

Tensor xavier_uniform(int rows, int cols, Rng& rng) {
  Tensor t(rows, cols);
  const double limit = std::sqrt(6.0 / (rows + cols));
  for (double& v : t.data) v = (rng.uniform() * 2.0 - 1.0) * limit;
  return t;
}

Tensor normal_init(int rows, int cols, double stddev, Rng& rng) {
  Tensor t(rows, cols);
  for (double& v : t.data) v = rng.normal() * stddev;
  return t;
}

static void check_encoder_config(const EncoderConfig& cfg) {
  if (cfg.seq_len <= 0 || cfg.d_in <= 0) throw ConfigError("encoder needs seq_len and d_in > 0");
  if (cfg.d_model <= 0 || cfg.n_layers <= 0) throw ConfigError("encoder needs d_model, n_layers > 0");
  if (cfg.n_heads <= 0 || cfg.d_model % cfg.n_heads != 0)
    throw ConfigError("d_model must be divisible by n_heads");
  if (cfg.mlp_layers < 1 || cfg.mlp_dim <= 0) throw ConfigError("bad feed-forward shape");
  if (cfg.conv_kernel <= 0 || cfg.conv_kernel % 2 == 0)
    throw ConfigError("conv kernel must be odd");
}

void register_encoder(ParameterStore& store, const std::string& prefix,
                      const EncoderConfig& cfg, Rng& rng) {
  check_encoder_config(cfg);
  store.add(prefix + ".embed.w", xavier_uniform(cfg.conv_kernel * cfg.d_in, cfg.d_model, rng));
  store.add(prefix + ".embed.b", Tensor(1, cfg.d_model));
  store.add(prefix + ".pos", normal_init(cfg.seq_len, cfg.d_model, 0.02, rng));
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string lp = prefix + ".layer" + std::to_string(l);
    store.add(lp + ".ln1.g", Tensor(1, cfg.d_model, 1.0));
    store.add(lp + ".ln1.b", Tensor(1, cfg.d_model));
    store.add(lp + ".attn.wq", xavier_uniform(cfg.d_model, cfg.d_model, rng));
    store.add(lp + ".attn.wk", xavier_uniform(cfg.d_model, cfg.d_model, rng));
    store.add(lp + ".attn.wv", xavier_uniform(cfg.d_model, cfg.d_model, rng));
    store.add(lp + ".attn.wo", xavier_uniform(cfg.d_model, cfg.d_model, rng));
    store.add(lp + ".attn.bo", Tensor(1, cfg.d_model));
    store.add(lp + ".ln2.g", Tensor(1, cfg.d_model, 1.0));
    store.add(lp + ".ln2.b", Tensor(1, cfg.d_model));
    int din = cfg.d_model;
    for (int f = 0; f < cfg.mlp_layers; ++f) {
      const int dout = f + 1 == cfg.mlp_layers ? cfg.d_model : cfg.mlp_dim;
      store.add(lp + ".ff" + std::to_string(f) + ".w", xavier_uniform(din, dout, rng));
      store.add(lp + ".ff" + std::to_string(f) + ".b", Tensor(1, dout));
      din = dout;
    }
  }
  store.add(prefix + ".ln_out.g", Tensor(1, cfg.d_model, 1.0));
  store.add(prefix + ".ln_out.b", Tensor(1, cfg.d_model));
}

Var self_attention(const Var& q, const Var& k, const Var& v) {
  const double s = 1.0 / std::sqrt(static_cast<double>(k->value.cols));
  Var scores = scale(matmul(q, transpose(k)), s);
  return matmul(softmax_rows(scores), v);
}

Var multi_head_attention(const ParameterStore& store, const std::string& prefix, const Var& x,
                         int n_heads) {
  const int d = x->value.cols;
  const int dh = d / n_heads;
  Var q = matmul(x, store.get(prefix + ".wq"));
  Var k = matmul(x, store.get(prefix + ".wk"));
  Var v = matmul(x, store.get(prefix + ".wv"));
  Var heads;
  for (int h = 0; h < n_heads; ++h) {
    Var out = self_attention(slice_cols(q, h * dh, (h + 1) * dh),
                             slice_cols(k, h * dh, (h + 1) * dh),
                             slice_cols(v, h * dh, (h + 1) * dh));
    heads = h == 0 ? out : concat_cols(heads, out);
  }
  return add_rowvec(matmul(heads, store.get(prefix + ".wo")), store.get(prefix + ".bo"));
}

Var encoder_layer(const ParameterStore& store, const std::string& prefix, const Var& x,
                  const EncoderConfig& cfg) {
  Var h = layer_norm_rows(x, store.get(prefix + ".ln1.g"), store.get(prefix + ".ln1.b"));
  Var x1 = add(x, multi_head_attention(store, prefix + ".attn", h, cfg.n_heads));
  Var h2 = layer_norm_rows(x1, store.get(prefix + ".ln2.g"), store.get(prefix + ".ln2.b"));
  Var ff = h2;
  for (int f = 0; f < cfg.mlp_layers; ++f) {
    const std::string fp = prefix + ".ff" + std::to_string(f);
    ff = add_rowvec(matmul(ff, store.get(fp + ".w")), store.get(fp + ".b"));
    if (f + 1 < cfg.mlp_layers) ff = gelu(ff);
  }
  return add(x1, ff);
}

Var transformer_encode(const ParameterStore& store, const std::string& prefix, const Var& x,
                       const EncoderConfig& cfg) {
  if (x->value.rows != cfg.seq_len || x->value.cols != cfg.d_in)
    throw std::invalid_argument("encoder input shape does not match config");
  Var tokens = conv1d_time(x, store.get(prefix + ".embed.w"), store.get(prefix + ".embed.b"),
                           cfg.conv_kernel);
  tokens = add(tokens, store.get(prefix + ".pos"));
  for (int l = 0; l < cfg.n_layers; ++l)
    tokens = encoder_layer(store, prefix + ".layer" + std::to_string(l), tokens, cfg);
  return layer_norm_rows(tokens, store.get(prefix + ".ln_out.g"), store.get(prefix + ".ln_out.b"));
}

void adam_step(ParameterStore& store, AdamState& state, const AdamConfig& cfg) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& [name, var] : store.params) {
    auto mit = state.m.find(name);
    if (mit == state.m.end()) {
      mit = state.m.emplace(name, Tensor(var->value.rows, var->value.cols)).first;
      state.v.emplace(name, Tensor(var->value.rows, var->value.cols));
    }
    Tensor& m = mit->second;
    Tensor& v = state.v.at(name);
    for (std::size_t i = 0; i < var->value.size(); ++i) {
      double& theta = var->value.data[i];
      theta -= cfg.lr * cfg.weight_decay * theta;
      const double g = var->grad.data[i];
      m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * g;
      v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      theta -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

// ---- checkpoint io -----------------------------------------------------------

namespace {

void put_u32(std::string& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_str(std::string& b, const std::string& s) {
  put_u32(b, static_cast<std::uint32_t>(s.size()));
  b.append(s);
}

void put_f64(std::string& b, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

struct Reader {
  const std::string& b;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > b.size()) throw DataError("checkpoint truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s = b.substr(pos, n);
    pos += n;
    return s;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[pos + i])) << (8 * i);
    pos += 8;
    double d;
    std::memcpy(&d, &v, 8);
    return d;
  }
};

}  // namespace

std::string serialize_checkpoint(const ParameterStore& store,
                                 const std::map<std::string, std::string>& meta) {
  std::string b;
  b.append("MTECCKP1");
  put_u32(b, static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    put_str(b, k);
    put_str(b, v);
  }
  put_u32(b, static_cast<std::uint32_t>(store.params.size()));
  for (const auto& [name, var] : store.params) {
    put_str(b, name);
    put_u32(b, static_cast<std::uint32_t>(var->value.rows));
    put_u32(b, static_cast<std::uint32_t>(var->value.cols));
    for (double v : var->value.data) put_f64(b, v);
  }
  return b;
}

namespace {

std::uint32_t read_meta_section(Reader& r, std::map<std::string, std::string>& meta) {
  r.need(8);
  if (r.b.compare(0, 8, "MTECCKP1") != 0) throw DataError("bad checkpoint magic");
  r.pos = 8;
  meta.clear();
  const std::uint32_t n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    meta[k] = r.str();
  }
  return r.u32();  // parameter count
}

}  // namespace

std::map<std::string, std::string> read_checkpoint_meta(const std::string& bytes) {
  Reader r{bytes};
  std::map<std::string, std::string> meta;
  read_meta_section(r, meta);
  return meta;
}

void deserialize_checkpoint(const std::string& bytes, ParameterStore& store,
                            std::map<std::string, std::string>& meta) {
  Reader r{bytes};
  const std::uint32_t n_params = read_meta_section(r, meta);
  if (n_params != store.params.size())
    throw DataError("checkpoint parameter count does not match model");
  for (std::uint32_t i = 0; i < n_params; ++i) {
    const std::string name = r.str();
    auto it = store.params.find(name);
    if (it == store.params.end()) throw DataError("checkpoint has unknown parameter " + name);
    const int rows = static_cast<int>(r.u32());
    const int cols = static_cast<int>(r.u32());
    if (rows != it->second->value.rows || cols != it->second->value.cols)
      throw DataError("checkpoint shape mismatch for " + name);
    for (double& v : it->second->value.data) v = r.f64();
  }
  if (r.pos != bytes.size()) throw DataError("checkpoint has trailing bytes");
}

}  // namespace mtec::nn
