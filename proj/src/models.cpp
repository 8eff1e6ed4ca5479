#include "icll/models.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace icll {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written as raw little-endian doubles");

const char* to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::Implicit: return "implicit";
    case ModelVariant::ExplicitMlp: return "explicit_mlp";
    case ModelVariant::ExplicitTsf: return "explicit_tsf";
    case ModelVariant::ExplicitKnown: return "explicit_known";
    case ModelVariant::ImplicitProxy: return "implicit_proxy";
  }
  fail("unknown model variant");
}

ModelVariant model_variant_from_string(const std::string& s) {
  for (ModelVariant v : {ModelVariant::Implicit, ModelVariant::ExplicitMlp,
                         ModelVariant::ExplicitTsf, ModelVariant::ExplicitKnown,
                         ModelVariant::ImplicitProxy})
    if (s == to_string(v)) return v;
  fail("unknown model variant: " + s);
}

void to_json(json& j, const EncoderConfig& c) {
  j = json{{"layers", c.layers},
           {"model_dim", c.model_dim},
           {"mlp_dim", c.mlp_dim},
           {"heads", c.heads}};
}

void from_json(const json& j, EncoderConfig& c) {
  c = EncoderConfig{};
  if (j.contains("layers")) j.at("layers").get_to(c.layers);
  if (j.contains("model_dim")) j.at("model_dim").get_to(c.model_dim);
  if (j.contains("mlp_dim")) j.at("mlp_dim").get_to(c.mlp_dim);
  if (j.contains("heads")) j.at("heads").get_to(c.heads);
}

void to_json(json& j, const LossSpec& c) {
  const char* aux = c.aux == AuxLoss::None ? "none"
                    : c.aux == AuxLoss::Decoded ? "decoded"
                                                : "direct";
  j = json{{"task_loss", c.task_loss}, {"aux", aux}, {"aux_weight", c.aux_weight}};
}

void from_json(const json& j, LossSpec& c) {
  c = LossSpec{};
  if (j.contains("task_loss")) j.at("task_loss").get_to(c.task_loss);
  if (j.contains("aux")) {
    const std::string s = j.at("aux").get<std::string>();
    if (s == "none") c.aux = AuxLoss::None;
    else if (s == "decoded") c.aux = AuxLoss::Decoded;
    else if (s == "direct") c.aux = AuxLoss::Direct;
    else fail("unknown aux loss: " + s);
  }
  if (j.contains("aux_weight")) j.at("aux_weight").get_to(c.aux_weight);
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"variant", to_string(c.variant)},
           {"encoder", c.encoder},
           {"context", c.context},
           {"predictor", c.predictor},
           {"predictor_hidden", c.predictor_hidden},
           {"bottleneck_dim", c.bottleneck_dim},
           {"loss", c.loss}};
}

void from_json(const json& j, ModelConfig& c) {
  c = ModelConfig{};
  c.variant = model_variant_from_string(j.at("variant").get<std::string>());
  if (j.contains("encoder")) j.at("encoder").get_to(c.encoder);
  if (j.contains("context")) j.at("context").get_to(c.context);
  if (j.contains("predictor")) j.at("predictor").get_to(c.predictor);
  if (j.contains("predictor_hidden"))
    j.at("predictor_hidden").get_to(c.predictor_hidden);
  if (j.contains("bottleneck_dim")) j.at("bottleneck_dim").get_to(c.bottleneck_dim);
  if (j.contains("loss")) j.at("loss").get_to(c.loss);
}

// ---------------------------------------------------------------------------
// Loss assembly
// ---------------------------------------------------------------------------

Tensor assemble_loss(const LossSpec& spec, const IoShape& io, const Tensor& pred,
                     const Vec& target, const Tensor* z_psi, const Vec* z_true,
                     const ParamStore* params) {
  const bool want_ce = spec.task_loss == "cross_entropy" ||
                       (spec.task_loss == "auto" && io.classification);
  if (spec.task_loss != "auto")
    check((spec.task_loss == "cross_entropy") == io.classification,
          "loss: " + spec.task_loss + " does not match the task's label type");

  Tensor task;
  if (want_ce) {
    Index off = 0;
    for (Index block : io.class_blocks) {
      Tensor logits = io.class_blocks.size() == 1 && off == 0 && block == pred.numel()
                          ? pred
                          : slice(pred, 0, off, off + block);
      Tensor t = Tensor::from_vec(target.segment(off, block));
      Tensor term = cross_entropy_loss(logits, t);
      task = task.empty() ? term : add(task, term);
      off += block;
    }
  } else {
    task = mse_loss(pred, Tensor::from_vec(target));
  }

  if (spec.aux == AuxLoss::None) return task;
  check(z_psi != nullptr && z_true != nullptr,
        "loss: auxiliary latent terms require a bottleneck and the true latent");
  Tensor decoded;
  if (spec.aux == AuxLoss::Decoded) {
    check(params != nullptr && params->contains("aux.w"),
          "loss: aux_decoded needs the learned decoding matrix");
    decoded = matmul(*z_psi, params->at("aux.w"));
  } else {
    check(z_psi->numel() == z_true->size(),
          "loss: aux_direct requires bottleneck_dim == dim(z)");
    decoded = *z_psi;
  }
  Tensor diff = sub(Tensor::from_vec(*z_true), decoded);
  return add(task, scale(sum(mul(diff, diff)), spec.aux_weight));
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

namespace {

bool has_bottleneck(ModelVariant v) { return v != ModelVariant::Implicit; }

Index linear_count(Index fan_in, Index fan_out) { return fan_in * fan_out + fan_out; }

}  // namespace

Index model_param_count(const ModelConfig& cfg, const IoShape& io) {
  const Index pair_dim = io.x_enc + io.y_enc + 1;
  if (cfg.variant == ModelVariant::Implicit) {
    EncoderConfig enc = cfg.encoder;
    enc.in_dim = pair_dim;
    enc.out_dim = io.y_enc;
    return encoder_param_count(enc);
  }
  EncoderConfig ctx = cfg.context;
  ctx.in_dim = pair_dim;
  ctx.out_dim = cfg.bottleneck_dim;
  Index total = encoder_param_count(ctx) + ctx.model_dim;  // + summary token
  switch (cfg.variant) {
    case ModelVariant::ExplicitMlp:
    case ModelVariant::ImplicitProxy: {
      Index in = cfg.bottleneck_dim + io.x_enc;
      for (Index h : cfg.predictor_hidden) {
        total += linear_count(in, h);
        in = h;
      }
      total += linear_count(in, io.y_enc);
      break;
    }
    case ModelVariant::ExplicitTsf:
      total += linear_count(cfg.bottleneck_dim, cfg.predictor.model_dim);
      total += linear_count(io.x_enc, cfg.predictor.model_dim);
      total += encoder_blocks_param_count(cfg.predictor);
      total += linear_count(cfg.predictor.model_dim, io.y_enc);
      break;
    case ModelVariant::ExplicitKnown:
      total += linear_count(cfg.bottleneck_dim, io.latent);
      break;
    default:
      fail("model_param_count: unreachable");
  }
  if (cfg.loss.aux == AuxLoss::Decoded) total += cfg.bottleneck_dim * io.latent;
  return total;
}

Model Model::build(const ModelConfig& cfg, std::shared_ptr<const TaskFamily> family,
                   uint64_t init_seed) {
  Model m;
  m.cfg_ = cfg;
  m.family_ = std::move(family);
  const IoShape& io = m.family_->io();
  const TaskKind kind = m.family_->config().kind;
  const Index pair_dim = io.x_enc + io.y_enc + 1;

  check(cfg.loss.aux == AuxLoss::None || has_bottleneck(cfg.variant),
        "model: auxiliary latent losses require a bottleneck variant");
  if (cfg.loss.aux != AuxLoss::None)
    check(io.latent > 0, "model: task has no finite latent for auxiliary losses");
  if (cfg.loss.aux == AuxLoss::Direct)
    check(cfg.bottleneck_dim == io.latent,
          "model: aux_direct requires bottleneck_dim == dim(z)");
  if (cfg.variant == ModelVariant::ExplicitKnown)
    check(supports_known_predictor(kind),
          std::string("model: no analytic prediction function for ") + to_string(kind));

  Rng rng = Rng::derive(init_seed, {0x1c1f});

  if (cfg.variant == ModelVariant::Implicit) {
    EncoderConfig enc = cfg.encoder;
    enc.in_dim = pair_dim;
    enc.out_dim = io.y_enc;
    m.cfg_.encoder = enc;
    init_encoder_params(m.params_, "imp", enc, rng, /*zero_readout=*/true);
    return m;
  }

  EncoderConfig ctx = cfg.context;
  ctx.in_dim = pair_dim;
  ctx.out_dim = cfg.bottleneck_dim;
  m.cfg_.context = ctx;
  init_encoder_params(m.params_, "ctx", ctx, rng, /*zero_readout=*/false);
  {
    Arr v(ctx.model_dim);
    for (Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
    m.params_.add("ctx.summary", Tensor({ctx.model_dim}, std::move(v)));
  }

  switch (cfg.variant) {
    case ModelVariant::ExplicitMlp:
    case ModelVariant::ImplicitProxy: {
      Index in = cfg.bottleneck_dim + io.x_enc;
      for (size_t i = 0; i < cfg.predictor_hidden.size(); ++i) {
        add_linear_params(m.params_, "pred.mlp" + std::to_string(i), in,
                          cfg.predictor_hidden[i], rng);
        in = cfg.predictor_hidden[i];
      }
      add_linear_params(m.params_, "pred.head", in, io.y_enc, rng, /*zero=*/true);
      break;
    }
    case ModelVariant::ExplicitTsf: {
      EncoderConfig pred = cfg.predictor;
      pred.in_dim = 1;  // tokens come from the two projections below
      pred.out_dim = io.y_enc;
      m.cfg_.predictor = pred;
      add_linear_params(m.params_, "pred.zproj", cfg.bottleneck_dim, pred.model_dim, rng);
      add_linear_params(m.params_, "pred.xproj", io.x_enc, pred.model_dim, rng);
      init_encoder_blocks(m.params_, "pred", pred, rng);
      add_linear_params(m.params_, "pred.out", pred.model_dim, io.y_enc, rng,
                        /*zero=*/true);
      break;
    }
    case ModelVariant::ExplicitKnown:
      add_linear_params(m.params_, "dec", cfg.bottleneck_dim, io.latent, rng);
      break;
    default:
      fail("model: unreachable variant");
  }

  if (cfg.loss.aux == AuxLoss::Decoded)
    m.params_.add("aux.w", Tensor::zeros({cfg.bottleneck_dim, io.latent}));
  return m;
}

Tensor Model::pair_rows(const Episode& ep) const {
  const IoShape& io = family_->io();
  const Index in = io.x_enc + io.y_enc + 1;
  check(ep.n() > 0, "model: episode has an empty context");
  MatRM raw = MatRM::Zero(ep.n(), in);
  for (Index i = 0; i < ep.n(); ++i) {
    raw.row(i).head(io.x_enc) = ep.xs[size_t(i)];
    raw.row(i).segment(io.x_enc, io.y_enc) = ep.ys[size_t(i)];
  }
  return Tensor({ep.n(), in}, Eigen::Map<const Arr>(raw.data(), raw.size()));
}

Tensor Model::query_row(const Vec& x) const {
  const IoShape& io = family_->io();
  const Index in = io.x_enc + io.y_enc + 1;
  Vec raw = Vec::Zero(in);
  raw.head(io.x_enc) = x;
  raw[in - 1] = 1.0;  // mask token flag
  return Tensor({1, in}, raw.array());
}

Tensor Model::context_bottleneck(const Episode& ep, bool include_query) const {
  Tensor raw = include_query ? concat({pair_rows(ep), query_row(ep.query_x)}, 0)
                             : pair_rows(ep);
  Tensor embedded = embed_rows(params_, "ctx", raw);
  Tensor summary = reshape(params_.at("ctx.summary"), {1, cfg_.context.model_dim});
  TokenSequence seq;
  seq.tokens = concat({embedded, summary}, 0);
  seq.roles.assign(size_t(ep.n()), TokenRole::ContextPair);
  if (include_query) seq.roles.push_back(TokenRole::Query);
  seq.roles.push_back(TokenRole::Summary);
  Tensor h = encoder_forward(params_, "ctx", seq, cfg_.context);
  return readout(params_, "ctx", h, seq.roles, TokenRole::Summary);
}

Tensor Model::bottleneck(const Episode& ep) const {
  check(has_bottleneck(cfg_.variant), "bottleneck: implicit model has none");
  return context_bottleneck(ep, cfg_.variant == ModelVariant::ImplicitProxy);
}

Tensor Model::mlp_prediction(const Tensor& z_psi, const Vec& query_x) const {
  Tensor h = concat({z_psi, Tensor::from_vec(query_x)}, 0);
  for (size_t i = 0; i < cfg_.predictor_hidden.size(); ++i) {
    const std::string name = "pred.mlp" + std::to_string(i);
    h = relu(linear(h, params_.at(name + ".w"), params_.at(name + ".b")));
  }
  return linear(h, params_.at("pred.head.w"), params_.at("pred.head.b"));
}

Tensor Model::known_prediction(const Tensor& z_hat, const Vec& query_x) const {
  const TaskKind kind = family_->config().kind;
  const TaskConfig& tc = family_->config();
  switch (kind) {
    case TaskKind::LinReg: {
      Tensor w = reshape(z_hat, {tc.x_dim, tc.y_dim});
      Tensor x = Tensor({1, tc.x_dim}, Arr(query_x.array()));
      return reshape(matmul(x, w), {tc.y_dim});
    }
    case TaskKind::LinCls: {
      Tensor w = reshape(z_hat, {tc.x_dim, 2});
      Tensor x = Tensor({1, tc.x_dim}, Arr(query_x.array()));
      return reshape(matmul(x, w), {2});
    }
    case TaskKind::SinReg: {
      const double s = query_x.sum();
      Vec basis(tc.sin_components);
      for (Index j = 0; j < tc.sin_components; ++j)
        basis[j] = std::sin(2.0 * M_PI * family_->sin_lambdas()[j] * s);
      return sum(mul(z_hat, Tensor::from_vec(basis)));
    }
    case TaskKind::Moe: {
      // Differentiable relaxation: mix the expert outputs by the decoded
      // per-layer softmax weights.
      Tensor logits = reshape(z_hat, {tc.moe_layers, tc.moe_experts});
      Tensor probs = softmax(logits);
      Tensor v = Tensor::from_vec(query_x);
      for (Index l = 0; l < tc.moe_layers; ++l) {
        Tensor mixed;
        for (Index k = 0; k < tc.moe_experts; ++k) {
          Tensor expert_out =
              tanh(matmul(v, Tensor::from_mat(family_->moe_experts()[size_t(k)].transpose())));
          Tensor weight = reshape(slice(slice(probs, 0, l, l + 1), 1, k, k + 1), {1});
          Tensor term = mul(expert_out, weight);
          mixed = mixed.empty() ? term : add(mixed, term);
        }
        v = mixed;
      }
      return v;
    }
    default:
      fail(std::string("known predictor: unsupported kind ") + to_string(kind));
  }
}

Tensor Model::predict_from_bottleneck(const Tensor& z_psi, const Vec& query_x) const {
  switch (cfg_.variant) {
    case ModelVariant::ExplicitMlp:
    case ModelVariant::ImplicitProxy:
      return mlp_prediction(z_psi, query_x);
    case ModelVariant::ExplicitTsf: {
      Tensor z_tok = linear(reshape(z_psi, {1, z_psi.numel()}),
                            params_.at("pred.zproj.w"), params_.at("pred.zproj.b"));
      Tensor x_tok = linear(Tensor({1, query_x.size()}, Arr(query_x.array())),
                            params_.at("pred.xproj.w"), params_.at("pred.xproj.b"));
      TokenSequence seq;
      seq.tokens = concat({z_tok, x_tok}, 0);
      seq.roles = {TokenRole::ContextPair, TokenRole::Query};
      Tensor h = encoder_forward(params_, "pred", seq, cfg_.predictor);
      return readout(params_, "pred", h, seq.roles, TokenRole::Query);
    }
    case ModelVariant::ExplicitKnown: {
      Tensor z_hat = linear(z_psi, params_.at("dec.w"), params_.at("dec.b"));
      return known_prediction(z_hat, query_x);
    }
    case ModelVariant::Implicit:
      fail("predict_from_bottleneck: implicit model has no bottleneck");
  }
  fail("predict_from_bottleneck: unreachable");
}

Tensor Model::forward(const Episode& ep) const {
  if (cfg_.variant == ModelVariant::Implicit) {
    Tensor raw = concat({pair_rows(ep), query_row(ep.query_x)}, 0);
    TokenSequence seq;
    seq.tokens = embed_rows(params_, "imp", raw);
    seq.roles.assign(size_t(ep.n()), TokenRole::ContextPair);
    seq.roles.push_back(TokenRole::Query);
    Tensor h = encoder_forward(params_, "imp", seq, cfg_.encoder);
    return readout(params_, "imp", h, seq.roles, TokenRole::Query);
  }
  return predict_from_bottleneck(bottleneck(ep), ep.query_x);
}

Tensor Model::episode_loss(const Episode& ep) const {
  const IoShape& io = family_->io();
  if (cfg_.loss.aux == AuxLoss::None && cfg_.variant == ModelVariant::Implicit)
    return assemble_loss(cfg_.loss, io, forward(ep), ep.query_y, nullptr, nullptr,
                         &params_);
  if (cfg_.variant == ModelVariant::Implicit)
    fail("loss: auxiliary latent losses require a bottleneck variant");
  Tensor z_psi = bottleneck(ep);
  Tensor pred = predict_from_bottleneck(z_psi, ep.query_x);
  Vec z_true;
  const Vec* z_ptr = nullptr;
  if (cfg_.loss.aux != AuxLoss::None) {
    z_true = family_->latent_vec(ep.instance);
    z_ptr = &z_true;
  }
  return assemble_loss(cfg_.loss, io, pred, ep.query_y,
                       cfg_.loss.aux != AuxLoss::None ? &z_psi : nullptr, z_ptr,
                       &params_);
}

Tensor Model::batch_loss(const std::vector<Episode>& batch) const {
  check(!batch.empty(), "batch_loss: empty batch");
  Tensor total;
  for (const Episode& ep : batch) {
    Tensor l = episode_loss(ep);
    total = total.empty() ? l : add(total, l);
  }
  return scale(total, 1.0 / double(batch.size()));
}

Vec Model::predict(const Episode& ep) const {
  if (cfg_.variant == ModelVariant::ExplicitKnown &&
      family_->config().kind == TaskKind::Moe) {
    // Hard decoding at evaluation: argmax expert per layer.
    const Tensor z_psi = bottleneck(ep);
    const Tensor z_hat =
        linear(z_psi, params_.at("dec.w"), params_.at("dec.b"));
    const TaskConfig& tc = family_->config();
    Vec v = ep.query_x;
    for (Index l = 0; l < tc.moe_layers; ++l) {
      Index best = 0;
      z_hat.to_vec().segment(l * tc.moe_experts, tc.moe_experts).maxCoeff(&best);
      v = family_->moe_apply(best, v);
    }
    return v;
  }
  return forward(ep).to_vec();
}

std::vector<std::string> Model::tap_locations() const {
  std::vector<std::string> locs;
  if (cfg_.variant == ModelVariant::Implicit) {
    for (Index l = 0; l <= cfg_.encoder.layers; ++l)
      locs.push_back("layer_" + std::to_string(l));
  } else {
    locs.push_back("bottleneck");
  }
  locs.push_back("raw_context");
  return locs;
}

Index Model::tap_dim(const std::string& location) const {
  const IoShape& io = family_->io();
  if (location == "bottleneck") return cfg_.bottleneck_dim;
  if (location == "raw_context")
    return family_->config().n_max * (io.x_enc + io.y_enc);
  if (location.rfind("layer_", 0) == 0) return cfg_.encoder.model_dim;
  fail("unknown tap location: " + location);
}

namespace {

Index layer_of(const std::string& location) {
  return Index(std::stol(location.substr(6)));
}

}  // namespace

Vec Model::tap_value(const Episode& ep, const std::string& location) const {
  const IoShape& io = family_->io();
  if (location == "bottleneck") return bottleneck(ep).to_vec();
  if (location == "raw_context") {
    // Zero-padded concatenation of the raw (x, y) records, in order.
    Vec v = Vec::Zero(tap_dim(location));
    const Index stride = io.x_enc + io.y_enc;
    for (Index i = 0; i < ep.n() && i < family_->config().n_max; ++i) {
      v.segment(i * stride, io.x_enc) = ep.xs[size_t(i)];
      v.segment(i * stride + io.x_enc, io.y_enc) = ep.ys[size_t(i)];
    }
    return v;
  }
  check(cfg_.variant == ModelVariant::Implicit,
        "tap_value: layer taps exist on the implicit model only");
  const auto trace = query_token_trace(ep);
  const Index l = layer_of(location);
  check(l >= 0 && l < Index(trace.size()), "tap_value: layer out of range");
  return trace[size_t(l)];
}

std::vector<Vec> Model::query_token_trace(
    const Episode& ep, const std::string& location,
    const std::function<Tensor(const Tensor&)>& fn) const {
  check(cfg_.variant == ModelVariant::Implicit,
        "query_token_trace: implicit model only");
  Tensor raw = concat({pair_rows(ep), query_row(ep.query_x)}, 0);
  TokenSequence seq;
  seq.tokens = embed_rows(params_, "imp", raw);
  seq.roles.assign(size_t(ep.n()), TokenRole::ContextPair);
  seq.roles.push_back(TokenRole::Query);
  std::vector<Mat> trace;
  EncoderHooks hooks;
  hooks.trace = &trace;
  if (fn) {
    hooks.intervene_tap = layer_of(location);
    hooks.intervene_token = ep.n();
    hooks.intervene = fn;
  }
  encoder_forward(params_, "imp", seq, cfg_.encoder, &hooks);
  std::vector<Vec> out;
  for (const Mat& h : trace) out.push_back(h.row(ep.n()));
  return out;
}

Tensor Model::forward_intervened(const Episode& ep, const std::string& location,
                                 const std::function<Tensor(const Tensor&)>& fn) const {
  if (location == "bottleneck") {
    Tensor z = bottleneck(ep);
    return predict_from_bottleneck(fn(z), ep.query_x);
  }
  check(cfg_.variant == ModelVariant::Implicit,
        "forward_intervened: layer locations exist on the implicit model only");
  Tensor raw = concat({pair_rows(ep), query_row(ep.query_x)}, 0);
  TokenSequence seq;
  seq.tokens = embed_rows(params_, "imp", raw);
  seq.roles.assign(size_t(ep.n()), TokenRole::ContextPair);
  seq.roles.push_back(TokenRole::Query);
  EncoderHooks hooks;
  hooks.intervene_tap = layer_of(location);
  hooks.intervene_token = ep.n();
  hooks.intervene = fn;
  Tensor h = encoder_forward(params_, "imp", seq, cfg_.encoder, &hooks);
  return readout(params_, "imp", h, seq.roles, TokenRole::Query);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

uint64_t config_hash(const json& config) { return fnv1a64(config.dump()); }

namespace {

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  check(bool(is), "checkpoint: truncated file");
  return v;
}

constexpr char kMagic[4] = {'I', 'C', 'L', 'L'};
constexpr uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const json& config,
                     const ParamStore& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  check(bool(os), "checkpoint: cannot open " + path.string() + " for writing");
  os.write(kMagic, 4);
  write_pod(os, kVersion);
  write_pod(os, config_hash(config));
  const std::string blob = config.dump();
  write_pod(os, uint64_t(blob.size()));
  os.write(blob.data(), std::streamsize(blob.size()));
  write_pod(os, uint64_t(params.items().size()));
  for (const auto& [name, t] : params.items()) {
    write_pod(os, uint32_t(name.size()));
    os.write(name.data(), std::streamsize(name.size()));
    write_pod(os, uint32_t(t.ndim()));
    for (Index d : t.shape()) write_pod(os, int64_t(d));
    os.write(reinterpret_cast<const char*>(t.data()),
             std::streamsize(sizeof(double) * size_t(t.numel())));
  }
  check(bool(os), "checkpoint: write failed for " + path.string());
}

CheckpointData load_checkpoint(const std::filesystem::path& path,
                               std::optional<uint64_t> expected_hash) {
  std::ifstream is(path, std::ios::binary);
  check(bool(is), "checkpoint: cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  check(bool(is) && std::memcmp(magic, kMagic, 4) == 0,
        "checkpoint: bad magic in " + path.string());
  const auto version = read_pod<uint32_t>(is);
  check(version == kVersion,
        "checkpoint: unsupported version " + std::to_string(version));
  const auto stored_hash = read_pod<uint64_t>(is);
  const auto blob_len = read_pod<uint64_t>(is);
  std::string blob(blob_len, '\0');
  is.read(blob.data(), std::streamsize(blob_len));
  check(bool(is), "checkpoint: truncated config blob");
  CheckpointData data;
  data.config = json::parse(blob);
  check(config_hash(data.config) == stored_hash, "checkpoint: config hash mismatch");
  if (expected_hash && *expected_hash != stored_hash)
    fail("checkpoint: config does not match the requested run (hash mismatch)");
  const auto n_params = read_pod<uint64_t>(is);
  for (uint64_t i = 0; i < n_params; ++i) {
    const auto name_len = read_pod<uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const auto ndim = read_pod<uint32_t>(is);
    Shape shape;
    for (uint32_t d = 0; d < ndim; ++d) shape.push_back(Index(read_pod<int64_t>(is)));
    Arr values(numel(shape));
    is.read(reinterpret_cast<char*>(values.data()),
            std::streamsize(sizeof(double) * size_t(values.size())));
    check(bool(is), "checkpoint: truncated payload for " + name);
    data.params.emplace_back(name, Tensor(shape, std::move(values)));
  }
  return data;
}

void restore_params(ParamStore& params, const CheckpointData& data) {
  check(params.items().size() == data.params.size(),
        "restore: parameter count mismatch");
  for (const auto& [name, t] : data.params) {
    Tensor& dst = params.at(name);
    check(dst.shape() == t.shape(), "restore: shape mismatch for " + name);
    dst.arr() = t.arr();
  }
}

}  // namespace icll
