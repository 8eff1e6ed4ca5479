#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "icll/transformer.hpp"

using namespace icll;

namespace {

EncoderConfig small_cfg() {
  EncoderConfig cfg;
  cfg.layers = 2;
  cfg.model_dim = 16;
  cfg.mlp_dim = 24;
  cfg.heads = 4;
  cfg.in_dim = 4;  // x(2) + y(1) + flag
  cfg.out_dim = 1;
  return cfg;
}

ParamStore make_params(const EncoderConfig& cfg, uint64_t seed, bool zero_readout = false) {
  ParamStore p;
  Rng rng(seed);
  init_encoder_params(p, "enc", cfg, rng, zero_readout);
  return p;
}

TokenSequence embed_episode(const ParamStore& p, const std::vector<Vec>& xs,
                            const std::vector<Vec>& ys, const Vec* query) {
  std::vector<Tensor> rows;
  std::vector<TokenRole> roles;
  for (size_t i = 0; i < xs.size(); ++i) {
    rows.push_back(embed_pair(p, "enc", xs[i], &ys[i]));
    roles.push_back(TokenRole::ContextPair);
  }
  if (query) {
    rows.push_back(embed_pair(p, "enc", *query, nullptr));
    roles.push_back(TokenRole::Query);
  }
  return {stack_rows(rows), roles};
}

}  // namespace

TEST_CASE("embed_pair masks the query with a flag and zeroed label slot") {
  EncoderConfig cfg = small_cfg();
  ParamStore p = make_params(cfg, 1);
  Vec x(2);
  x << 0.5, -1.0;
  Vec y(1);
  y << 2.0;

  // Masked query equals embedding of the raw record [x, 0, 1].
  Tensor masked = embed_pair(p, "enc", x, nullptr);
  Vec raw = Vec::Zero(4);
  raw.head(2) = x;
  raw[3] = 1.0;
  Tensor manual = linear(Tensor::from_vec(raw), p.at("enc.embed.w"), p.at("enc.embed.b"));
  CHECK((masked.arr() - manual.arr()).abs().maxCoeff() == 0.0);

  // Pure function: equal pairs embed equally; mask differs from labeled pair.
  Tensor a = embed_pair(p, "enc", x, &y);
  Tensor b = embed_pair(p, "enc", x, &y);
  CHECK((a.arr() - b.arr()).abs().maxCoeff() == 0.0);
  CHECK((a.arr() - masked.arr()).abs().maxCoeff() > 0.0);
}

TEST_CASE("single-token attention returns the value projection") {
  EncoderConfig cfg = small_cfg();
  cfg.heads = 2;
  ParamStore p = make_params(cfg, 2);
  Rng rng(3);
  Tensor x = Tensor::from_vec(rng.normal_vec(cfg.model_dim));
  Tensor x_row = reshape(x, {1, cfg.model_dim});

  Tensor attn = multi_head_attention(p, "enc", 0, x_row, 1, cfg);
  // With one key the softmax weight is 1 for every head, so the output is
  // the value projection pushed through the output projection.
  Tensor v = linear(x_row, p.at("enc.l0.attn.wv"), p.at("enc.l0.attn.bv"));
  Tensor expected = linear(v, p.at("enc.l0.attn.wo"), p.at("enc.l0.attn.bo"));
  CHECK((attn.arr() - expected.arr()).abs().maxCoeff() <= 1e-14);
}

TEST_CASE("encoder output shape is [n+1, model_dim] and query state is permutation invariant") {
  EncoderConfig cfg = small_cfg();
  ParamStore p = make_params(cfg, 4);
  Rng rng(5);
  const int n = 7;
  std::vector<Vec> xs, ys;
  for (int i = 0; i < n; ++i) {
    xs.push_back(rng.normal_vec(2));
    ys.push_back(rng.normal_vec(1));
  }
  Vec q = rng.normal_vec(2);

  TokenSequence seq = embed_episode(p, xs, ys, &q);
  Tensor h = encoder_forward(p, "enc", seq, cfg);
  CHECK(h.shape() == Shape{n + 1, cfg.model_dim});

  // Permute the context and rerun.
  std::vector<size_t> perm{3, 0, 6, 1, 5, 2, 4};
  std::vector<Vec> xs2, ys2;
  for (size_t i : perm) {
    xs2.push_back(xs[i]);
    ys2.push_back(ys[i]);
  }
  TokenSequence seq2 = embed_episode(p, xs2, ys2, &q);
  Tensor h2 = encoder_forward(p, "enc", seq2, cfg);

  // Pair hidden states permute along with their tokens.
  for (size_t i = 0; i < perm.size(); ++i) {
    Vec orig = h.to_mat().row(Index(perm[i]));
    Vec moved = h2.to_mat().row(Index(i));
    CHECK((orig - moved).cwiseAbs().maxCoeff() <= 1e-9);
  }
  // The query token state is unchanged.
  Vec q1 = h.to_mat().row(n), q2 = h2.to_mat().row(n);
  CHECK((q1 - q2).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("summary readout ignores context duplication and multiplicity") {
  EncoderConfig cfg = small_cfg();
  cfg.out_dim = 6;
  ParamStore p = make_params(cfg, 6);
  Rng rng(7);
  Vec x = rng.normal_vec(2), y = rng.normal_vec(1);
  Tensor summary_token = Tensor::from_vec(rng.normal_vec(cfg.model_dim));

  auto summary_of = [&](int copies) {
    std::vector<Tensor> rows;
    std::vector<TokenRole> roles;
    for (int i = 0; i < copies; ++i) {
      rows.push_back(embed_pair(p, "enc", x, &y));
      roles.push_back(TokenRole::ContextPair);
    }
    rows.push_back(summary_token);
    roles.push_back(TokenRole::Summary);
    TokenSequence seq{stack_rows(rows), roles};
    Tensor h = encoder_forward(p, "enc", seq, cfg);
    return readout(p, "enc", h, roles, TokenRole::Summary).to_vec();
  };

  // A single distinct pair repeated n times: softmax over identical keys is
  // uniform, so the summary state does not depend on n.
  const Vec base = summary_of(1);
  for (int copies : {2, 5, 17}) {
    CHECK((summary_of(copies) - base).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("readout requires exactly one token with the role and is linear without bias") {
  EncoderConfig cfg = small_cfg();
  ParamStore p = make_params(cfg, 8);
  Rng rng(9);
  Tensor h = Tensor::from_mat(rng.normal_mat(3, cfg.model_dim));

  std::vector<TokenRole> no_query{TokenRole::ContextPair, TokenRole::ContextPair,
                                  TokenRole::ContextPair};
  CHECK_THROWS(readout(p, "enc", h, no_query, TokenRole::Query));
  std::vector<TokenRole> two_queries{TokenRole::Query, TokenRole::Query,
                                     TokenRole::ContextPair};
  CHECK_THROWS(readout(p, "enc", h, two_queries, TokenRole::Query));

  std::vector<TokenRole> ok{TokenRole::ContextPair, TokenRole::Query,
                            TokenRole::ContextPair};
  p.at("enc.out.b").arr() = 0.0;  // test mode: bias disabled
  Vec r1 = readout(p, "enc", h, ok, TokenRole::Query).to_vec();
  Tensor h_scaled = scale(h, 2.5);
  Vec r2 = readout(p, "enc", h_scaled, ok, TokenRole::Query).to_vec();
  CHECK((r2 - 2.5 * r1).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("parameter count formula matches the constructed encoder") {
  for (uint64_t seed : {1ull, 2ull}) {
    EncoderConfig cfg = small_cfg();
    cfg.layers = Index(seed) + 1;
    cfg.out_dim = 3;
    ParamStore p = make_params(cfg, seed);
    CHECK(p.param_count() == encoder_param_count(cfg));
  }
  // Full-scale configuration used across experiments.
  EncoderConfig big;
  big.layers = 8;
  big.model_dim = 256;
  big.mlp_dim = 512;
  big.heads = 4;
  big.in_dim = 3;
  big.out_dim = 1;
  const double millions = double(encoder_param_count(big)) / 1e6;
  CHECK(millions == doctest::Approx(4.2).epsilon(0.02));
}

TEST_CASE("gradients flow through a 2-layer encoder") {
  EncoderConfig cfg;
  cfg.layers = 2;
  cfg.model_dim = 8;
  cfg.mlp_dim = 12;
  cfg.heads = 2;
  cfg.in_dim = 3;
  cfg.out_dim = 2;
  ParamStore p = make_params(cfg, 10);
  Rng rng(11);
  Tensor raw = Tensor::from_mat(rng.normal_mat(3, cfg.in_dim));
  Vec target = rng.normal_vec(cfg.out_dim);
  std::vector<TokenRole> roles{TokenRole::ContextPair, TokenRole::ContextPair,
                               TokenRole::Query};

  // Check every parameter of the encoder against central differences.
  std::vector<Tensor> inputs;
  std::vector<std::string> names;
  for (auto& [name, t] : p.items()) {
    inputs.push_back(t);
    names.push_back(name);
  }
  const double err = finite_diff_check(
      [&](std::vector<Tensor>& in) {
        ParamStore live;
        for (size_t i = 0; i < in.size(); ++i) live.add(names[i], in[i]);
        TokenSequence seq{embed_rows(live, "enc", raw), roles};
        Tensor h = encoder_forward(live, "enc", seq, cfg);
        Tensor pred = readout(live, "enc", h, roles, TokenRole::Query);
        return mse_loss(pred, Tensor::from_vec(target));
      },
      inputs);
  CHECK(err <= 1e-4);
}

TEST_CASE("zero-initialized readout predicts zero") {
  EncoderConfig cfg = small_cfg();
  ParamStore p = make_params(cfg, 12, /*zero_readout=*/true);
  Rng rng(13);
  Tensor raw = Tensor::from_mat(rng.normal_mat(4, cfg.in_dim));
  std::vector<TokenRole> roles(4, TokenRole::ContextPair);
  roles.back() = TokenRole::Query;
  TokenSequence seq{embed_rows(p, "enc", raw), roles};
  Tensor pred = readout(p, "enc", encoder_forward(p, "enc", seq, cfg), roles, TokenRole::Query);
  CHECK(pred.arr().abs().maxCoeff() == 0.0);
}
