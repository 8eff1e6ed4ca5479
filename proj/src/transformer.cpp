#include "icll/transformer.hpp"

#include <cmath>

namespace icll {
namespace {

Tensor init_linear(Rng& rng, Index fan_in, Index fan_out, bool zero) {
  if (zero) return Tensor::zeros({fan_in, fan_out});
  const double std = 1.0 / std::sqrt(double(fan_in));
  Arr w(fan_in * fan_out);
  for (Index i = 0; i < w.size(); ++i) w[i] = std * rng.normal();
  return Tensor({fan_in, fan_out}, std::move(w));
}

std::string lp(const std::string& prefix, Index layer, const char* leaf) {
  return prefix + ".l" + std::to_string(layer) + "." + leaf;
}

Tensor ln_affine(const ParamStore& p, const std::string& g_name,
                 const std::string& b_name, const Tensor& x) {
  return add(mul(layer_norm(x), p.at(g_name)), p.at(b_name));
}

}  // namespace

Tensor multi_head_attention(const ParamStore& p, const std::string& prefix,
                            Index layer, const Tensor& x_norm, Index n_keys,
                            const EncoderConfig& cfg) {
  const Index d = cfg.model_dim, hd = d / cfg.heads;
  Tensor q = linear(x_norm, p.at(lp(prefix, layer, "attn.wq")), p.at(lp(prefix, layer, "attn.bq")));
  // No key bias: a constant shift of every key cancels inside the row softmax.
  Tensor k = matmul(x_norm, p.at(lp(prefix, layer, "attn.wk")));
  Tensor v = linear(x_norm, p.at(lp(prefix, layer, "attn.wv")), p.at(lp(prefix, layer, "attn.bv")));
  const Index seq = x_norm.shape()[0];
  if (n_keys < seq) {
    k = slice(k, 0, 0, n_keys);
    v = slice(v, 0, 0, n_keys);
  }
  std::vector<Tensor> heads;
  heads.reserve(cfg.heads);
  const double inv_sqrt_hd = 1.0 / std::sqrt(double(hd));
  for (Index h = 0; h < cfg.heads; ++h) {
    Tensor qh = slice(q, 1, h * hd, (h + 1) * hd);
    Tensor kh = slice(k, 1, h * hd, (h + 1) * hd);
    Tensor vh = slice(v, 1, h * hd, (h + 1) * hd);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt_hd);
    heads.push_back(matmul(softmax(scores), vh));
  }
  Tensor o = concat(heads, 1);
  return linear(o, p.at(lp(prefix, layer, "attn.wo")), p.at(lp(prefix, layer, "attn.bo")));
}

void EncoderConfig::validate() const {
  check(layers > 0 && model_dim > 0 && mlp_dim > 0 && heads > 0 && in_dim > 0 &&
            out_dim > 0,
        "encoder config: all dimensions must be positive");
  check(model_dim % heads == 0, "encoder config: model_dim " +
                                    std::to_string(model_dim) +
                                    " not divisible by heads " + std::to_string(heads));
}

void add_linear_params(ParamStore& params, const std::string& name, Index fan_in,
                       Index fan_out, Rng& rng, bool zero) {
  params.add(name + ".w", init_linear(rng, fan_in, fan_out, zero));
  params.add(name + ".b", Tensor::zeros({fan_out}));
}

void init_encoder_blocks(ParamStore& params, const std::string& prefix,
                         const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  const Index d = cfg.model_dim, m = cfg.mlp_dim;
  for (Index l = 0; l < cfg.layers; ++l) {
    params.add(lp(prefix, l, "ln1.g"), Tensor::full({d}, 1.0));
    params.add(lp(prefix, l, "ln1.b"), Tensor::zeros({d}));
    for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"})
      params.add(lp(prefix, l, w), init_linear(rng, d, d, false));
    for (const char* b : {"attn.bq", "attn.bv", "attn.bo"})
      params.add(lp(prefix, l, b), Tensor::zeros({d}));
    params.add(lp(prefix, l, "ln2.g"), Tensor::full({d}, 1.0));
    params.add(lp(prefix, l, "ln2.b"), Tensor::zeros({d}));
    params.add(lp(prefix, l, "mlp.w1"), init_linear(rng, d, m, false));
    params.add(lp(prefix, l, "mlp.b1"), Tensor::zeros({m}));
    params.add(lp(prefix, l, "mlp.w2"), init_linear(rng, m, d, false));
    params.add(lp(prefix, l, "mlp.b2"), Tensor::zeros({d}));
  }
  params.add(prefix + ".lnf.g", Tensor::full({d}, 1.0));
  params.add(prefix + ".lnf.b", Tensor::zeros({d}));
}

void init_encoder_params(ParamStore& params, const std::string& prefix,
                         const EncoderConfig& cfg, Rng& rng, bool zero_readout) {
  cfg.validate();
  add_linear_params(params, prefix + ".embed", cfg.in_dim, cfg.model_dim, rng);
  init_encoder_blocks(params, prefix, cfg, rng);
  add_linear_params(params, prefix + ".out", cfg.model_dim, cfg.out_dim, rng,
                    zero_readout);
}

Index encoder_blocks_param_count(const EncoderConfig& cfg) {
  const Index d = cfg.model_dim, m = cfg.mlp_dim;
  const Index block = 2 * (2 * d)            // ln1, ln2
                      + 4 * d * d + 3 * d    // q, k, v, o (k has no bias)
                      + (d * m + m)          // mlp in
                      + (m * d + d);         // mlp out
  return cfg.layers * block + 2 * d;         // blocks + final norm
}

Index encoder_param_count(const EncoderConfig& cfg) {
  const Index embed = cfg.in_dim * cfg.model_dim + cfg.model_dim;
  const Index out = cfg.model_dim * cfg.out_dim + cfg.out_dim;
  return embed + encoder_blocks_param_count(cfg) + out;
}

Tensor embed_pair(const ParamStore& params, const std::string& prefix,
                  const Vec& x, const Vec* y) {
  const Tensor& w = params.at(prefix + ".embed.w");
  const Index in = w.shape()[0];
  const Index y_dim = in - x.size() - 1;
  check(y_dim >= 0 && (y == nullptr || y->size() == y_dim),
        "embed_pair: input dims do not match embedding of fan-in " + std::to_string(in));
  Vec raw = Vec::Zero(in);
  raw.head(x.size()) = x;
  if (y)
    raw.segment(x.size(), y_dim) = *y;
  else
    raw[in - 1] = 1.0;  // mask flag marks the query
  return linear(Tensor::from_vec(raw), w, params.at(prefix + ".embed.b"));
}

Tensor embed_rows(const ParamStore& params, const std::string& prefix,
                  const Tensor& raw) {
  return linear(raw, params.at(prefix + ".embed.w"), params.at(prefix + ".embed.b"));
}

Tensor encoder_forward(const ParamStore& params, const std::string& prefix,
                       const TokenSequence& seq, const EncoderConfig& cfg,
                       const EncoderHooks* hooks) {
  cfg.validate();
  const Index t = seq.tokens.shape()[0];
  check(t > 0 && Index(seq.roles.size()) == t,
        "encoder_forward: roles do not match sequence length");
  Index n_keys = 0;
  for (Index i = 0; i < t; ++i) {
    if (seq.roles[size_t(i)] != TokenRole::Summary) {
      check(n_keys == i, "encoder_forward: summary tokens must be trailing");
      ++n_keys;
    }
  }
  check(n_keys > 0, "encoder_forward: no attendable tokens");

  auto at_tap = [&](Index tap, Tensor h) -> Tensor {
    if (hooks && hooks->intervene_tap == tap)
      h = set_row(h, hooks->intervene_token, hooks->intervene(
                      reshape(slice(h, 0, hooks->intervene_token, hooks->intervene_token + 1),
                              {h.shape()[1]})));
    if (hooks && hooks->trace) hooks->trace->push_back(h.to_mat());
    return h;
  };

  Tensor h = at_tap(0, seq.tokens);
  for (Index l = 0; l < cfg.layers; ++l) {
    h = add(h, multi_head_attention(params, prefix, l, ln_affine(params, lp(prefix, l, "ln1.g"), lp(prefix, l, "ln1.b"), h), n_keys, cfg));
    Tensor hn = ln_affine(params, lp(prefix, l, "ln2.g"), lp(prefix, l, "ln2.b"), h);
    Tensor ff = linear(gelu(linear(hn, params.at(lp(prefix, l, "mlp.w1")), params.at(lp(prefix, l, "mlp.b1")))),
                       params.at(lp(prefix, l, "mlp.w2")), params.at(lp(prefix, l, "mlp.b2")));
    h = at_tap(l + 1, add(h, ff));
  }
  return ln_affine(params, prefix + ".lnf.g", prefix + ".lnf.b", h);
}

Tensor readout(const ParamStore& params, const std::string& prefix,
               const Tensor& hidden, const std::vector<TokenRole>& roles,
               TokenRole role) {
  Index idx = -1;
  for (size_t i = 0; i < roles.size(); ++i) {
    if (roles[i] == role) {
      check(idx < 0, "readout: multiple tokens with the requested role");
      idx = Index(i);
    }
  }
  check(idx >= 0, "readout: no token with the requested role");
  Tensor row = reshape(slice(hidden, 0, idx, idx + 1), {hidden.shape()[1]});
  return linear(row, params.at(prefix + ".out.w"), params.at(prefix + ".out.b"));
}

}  // namespace icll
