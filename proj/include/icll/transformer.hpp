#pragma once

#include "icll/optim.hpp"

#include <string>
#include <vector>

namespace icll {

struct EncoderConfig {
  Index layers = 2;
  Index model_dim = 64;
  Index mlp_dim = 128;
  Index heads = 4;
  Index in_dim = 1;
  Index out_dim = 1;

  void validate() const;
};

enum class TokenRole { ContextPair, Query, Summary };

/// Embedded token matrix plus per-token roles. Summary tokens must sit at the
/// end of the sequence; they attend to the other tokens but are not attended
/// to (so a context summary is an order- and multiplicity-insensitive readout).
struct TokenSequence {
  Tensor tokens;  // [T, model_dim]
  std::vector<TokenRole> roles;
};

/// Optional per-forward instrumentation. Tap t is the residual stream after
/// block t (tap 0 = embeddings), giving layers+1 taps.
struct EncoderHooks {
  std::vector<Mat>* trace = nullptr;
  Index intervene_tap = -1;
  Index intervene_token = -1;
  std::function<Tensor(const Tensor& row)> intervene;
};

/// Registers a linear layer `name.w` / `name.b`; weights N(0, 1/fan_in).
void add_linear_params(ParamStore& params, const std::string& name, Index fan_in,
                       Index fan_out, Rng& rng, bool zero = false);

/// Registers the residual blocks and final norm under `prefix` (no embedding
/// or readout).
void init_encoder_blocks(ParamStore& params, const std::string& prefix,
                         const EncoderConfig& cfg, Rng& rng);

/// Registers all encoder parameters under `prefix`. Linear weights are
/// N(0, 1/fan_in); readout is zero-initialized when `zero_readout` is set.
void init_encoder_params(ParamStore& params, const std::string& prefix,
                         const EncoderConfig& cfg, Rng& rng, bool zero_readout);

/// Parameter count of the blocks + final norm registered by
/// init_encoder_blocks.
Index encoder_blocks_param_count(const EncoderConfig& cfg);

/// Closed-form parameter count of one encoder (embed + blocks + final norm +
/// readout); asserted against constructed models in tests.
Index encoder_param_count(const EncoderConfig& cfg);

/// Token for one (x, y) context pair; pass y == nullptr for the masked query.
/// The raw token is [x, y-or-zeros, mask_flag] through the learned embedding.
Tensor embed_pair(const ParamStore& params, const std::string& prefix,
                  const Vec& x, const Vec* y);

/// Fast path: rows of `raw` are pre-assembled [x, y, flag] records.
Tensor embed_rows(const ParamStore& params, const std::string& prefix,
                  const Tensor& raw);

/// Multi-head attention of layer `layer` over `x_norm`, with keys/values
/// restricted to the first `n_keys` tokens.
Tensor multi_head_attention(const ParamStore& params, const std::string& prefix,
                            Index layer, const Tensor& x_norm, Index n_keys,
                            const EncoderConfig& cfg);

/// Pre-norm residual encoder: h += MHA(LN(h)); h += MLP(LN(h)); final LN.
/// Non-causal attention over all non-summary tokens, no positional encoding.
Tensor encoder_forward(const ParamStore& params, const std::string& prefix,
                       const TokenSequence& seq, const EncoderConfig& cfg,
                       const EncoderHooks* hooks = nullptr);

/// Learned linear projection of the single token with the given role.
Tensor readout(const ParamStore& params, const std::string& prefix,
               const Tensor& hidden, const std::vector<TokenRole>& roles,
               TokenRole role);

}  // namespace icll
