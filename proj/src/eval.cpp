#include "icll/eval.hpp"

#include <cmath>
#include <numeric>
#include <ostream>

namespace icll {

const char* to_string(Protocol p) {
  switch (p) {
    case Protocol::Id: return "id";
    case Protocol::OodQuery3x: return "ood_query_3x";
    case Protocol::OodLatentHeldout: return "ood_latent_heldout";
    case Protocol::NearContextTrainFarEval: return "far_from_context";
  }
  fail("unknown protocol");
}

Protocol protocol_from_string(const std::string& s) {
  for (Protocol p : {Protocol::Id, Protocol::OodQuery3x, Protocol::OodLatentHeldout,
                     Protocol::NearContextTrainFarEval})
    if (s == to_string(p)) return p;
  fail("unknown protocol: " + s);
}

std::vector<Protocol> default_protocols(TaskKind k) {
  std::vector<Protocol> out{Protocol::Id};
  if (gaussian_query_kind(k)) out.push_back(Protocol::OodQuery3x);
  if (is_compositional(k)) out.push_back(Protocol::OodLatentHeldout);
  return out;
}

namespace {

struct Accum {
  std::vector<double> values;
  void add(double v) { values.push_back(v); }
  MetricStat stat() const {
    MetricStat s;
    s.n = long(values.size());
    if (values.empty()) return s;
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / double(s.n);
    double sq = 0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.stderr_ = s.n > 1 ? std::sqrt(sq / double(s.n - 1) / double(s.n)) : 0.0;
    return s;
  }
};

double mse_of(const Vec& pred, const Vec& target) {
  return (pred - target).squaredNorm() / double(target.size());
}

// Stable blockwise softmax cross-entropy against one-hot targets.
double log_loss_of(const Vec& logits, const Vec& target,
                   const std::vector<Index>& blocks) {
  double total = 0.0;
  Index off = 0;
  for (Index b : blocks) {
    const Vec x = logits.segment(off, b);
    const Vec t = target.segment(off, b);
    const double m = x.maxCoeff();
    const double lse = m + std::log((x.array() - m).exp().sum());
    total += lse - t.dot(x);
    off += b;
  }
  return total;
}

bool blocks_argmax_match(const Vec& a, const Vec& b, const std::vector<Index>& blocks) {
  Index off = 0;
  for (Index blk : blocks) {
    Index ia = 0, ib = 0;
    a.segment(off, blk).maxCoeff(&ia);
    b.segment(off, blk).maxCoeff(&ib);
    if (ia != ib) return false;
    off += blk;
  }
  return true;
}

}  // namespace

json EvalReport::to_json() const {
  json j;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)config_hash);
  j["config_hash"] = std::string(buf);
  j["meta"] = meta;
  json p = json::object();
  for (const auto& [proto, metrics] : protocols) {
    json m = json::object();
    for (const auto& [name, stat] : metrics)
      m[name] = {{"mean", stat.mean}, {"stderr", stat.stderr_}, {"n", stat.n}};
    p[proto] = m;
  }
  j["protocols"] = p;
  return j;
}

EvalReport EvalReport::from_json(const json& j) {
  EvalReport r;
  r.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
  r.meta = j.value("meta", json::object());
  for (const auto& [proto, metrics] : j.at("protocols").items()) {
    for (const auto& [name, stat] : metrics.items()) {
      MetricStat s;
      s.mean = stat.at("mean").get<double>();
      s.stderr_ = stat.at("stderr").get<double>();
      s.n = stat.at("n").get<long>();
      r.protocols[proto][name] = s;
    }
  }
  return r;
}

void EvalReport::write_csv(std::ostream& os) const {
  os << "protocol,metric,mean,stderr,n\n";
  for (const auto& [proto, metrics] : protocols)
    for (const auto& [name, stat] : metrics) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%ld", stat.mean, stat.stderr_, stat.n);
      os << proto << ',' << name << ',' << buf << '\n';
    }
}

EvalReport evaluate(const Model& model, const EvalConfig& cfg) {
  const TaskFamily& family = model.family();
  const TaskKind kind = family.config().kind;
  const IoShape& io = family.io();

  EvalReport report;
  report.config_hash = cfg.config_hash;
  report.meta = cfg.meta;

  std::vector<Protocol> protocols =
      cfg.protocols.empty() ? default_protocols(kind) : cfg.protocols;
  for (Protocol p : protocols) {
    if (p == Protocol::OodLatentHeldout)
      check(is_compositional(kind),
            "evaluate: latent holdout applies to compositional kinds only");
    if (p == Protocol::OodQuery3x || p == Protocol::NearContextTrainFarEval)
      check(gaussian_query_kind(kind),
            std::string("evaluate: ") + to_string(p) + " unavailable for " +
                to_string(kind));

    QueryMode mode = QueryMode::Id;
    LatentSplit split = LatentSplit::Train;
    if (p == Protocol::OodQuery3x) mode = QueryMode::Ood3x;
    if (p == Protocol::NearContextTrainFarEval) mode = QueryMode::FarFromContext;
    if (p == Protocol::OodLatentHeldout) split = LatentSplit::Heldout;

    std::map<std::string, Accum> acc;
    for (Index i = 0; i < cfg.n_episodes; ++i) {
      Rng rng = Rng::derive(cfg.seed, {0xEBA1, uint64_t(p), uint64_t(i)});
      const Episode ep = family.make_episode(rng, mode, split);
      const Vec pred = model.predict(ep);
      if (!io.classification) {
        acc["mse"].add(mse_of(pred, ep.query_y));
        if (has_closed_form_oracle(kind))
          acc["oracle_mse"].add(
              mse_of(family.oracle_predict(ep.xs, ep.ys, ep.query_x), ep.query_y));
      } else {
        const Vec truth = family.label_mean(ep.instance, ep.query_x);
        acc["log_loss"].add(log_loss_of(pred, ep.query_y, io.class_blocks));
        if (kind == TaskKind::Raven) {
          // Multiple choice: pick the candidate with the highest factored
          // log-likelihood under the predicted logits.
          Index best = -1;
          double best_score = -1e300;
          for (size_t c = 0; c < ep.choices.size(); ++c) {
            const double score = -log_loss_of(pred, ep.choices[c], io.class_blocks);
            if (score > best_score) {
              best_score = score;
              best = Index(c);
            }
          }
          acc["accuracy"].add(best == ep.answer_index ? 1.0 : 0.0);
        } else {
          acc["accuracy"].add(blocks_argmax_match(pred, truth, io.class_blocks) ? 1.0 : 0.0);
        }
      }
    }
    auto& out = report.protocols[to_string(p)];
    for (auto& [name, a] : acc) out[name] = a.stat();
  }
  return report;
}

// ---------------------------------------------------------------------------
// Probes
// ---------------------------------------------------------------------------

ProbeResult probe_fit(const Mat& features, const Mat& latents, double ridge,
                      double fit_fraction, const std::vector<Index>& class_blocks) {
  const Index n = features.rows(), d = features.cols(), k = latents.cols();
  check(n == latents.rows(), "probe_fit: feature/latent row mismatch");
  const Index n_fit = std::max<Index>(1, Index(std::floor(fit_fraction * double(n))));
  const Index n_eval = n - n_fit;
  check(n_eval > 0, "probe_fit: no held-out rows; need more episodes");

  ProbeResult result;
  result.n_fit = n_fit;
  result.n_eval = n_eval;
  result.underdetermined = n_fit < 10 * d;
  result.categorical = !class_blocks.empty();

  // Ridge on the bias-augmented design, fit rows only.
  Mat x(n_fit, d + 1);
  x.leftCols(d) = features.topRows(n_fit);
  x.col(d).setOnes();
  const Mat gram = x.transpose() * x + ridge * Mat::Identity(d + 1, d + 1);
  Eigen::LDLT<Mat> solver(gram);
  check(solver.info() == Eigen::Success, "probe_fit: singular Gram despite ridge");
  result.weights = solver.solve(x.transpose() * latents.topRows(n_fit));

  Mat x_eval(n_eval, d + 1);
  x_eval.leftCols(d) = features.bottomRows(n_eval);
  x_eval.col(d).setOnes();
  const Mat pred = x_eval * result.weights;
  const Mat truth = latents.bottomRows(n_eval);

  if (!result.categorical) {
    result.score_per_component = Vec(k);
    for (Index j = 0; j < k; ++j) {
      const double mean = truth.col(j).mean();
      const double ss_tot = (truth.col(j).array() - mean).square().sum();
      const double ss_res = (truth.col(j) - pred.col(j)).squaredNorm();
      result.score_per_component[j] = ss_tot > 1e-12 ? 1.0 - ss_res / ss_tot
                                                     : (ss_res < 1e-12 ? 1.0 : 0.0);
    }
  } else {
    result.score_per_component = Vec(Index(class_blocks.size()));
    Index off = 0;
    for (size_t b = 0; b < class_blocks.size(); ++b) {
      const Index blk = class_blocks[b];
      double correct = 0;
      for (Index r = 0; r < n_eval; ++r) {
        Index ip = 0, it = 0;
        pred.row(r).segment(off, blk).maxCoeff(&ip);
        truth.row(r).segment(off, blk).maxCoeff(&it);
        correct += ip == it ? 1.0 : 0.0;
      }
      result.score_per_component[Index(b)] = correct / double(n_eval);
      off += blk;
    }
  }
  result.score = result.score_per_component.mean();
  return result;
}

std::map<std::string, ProbeResult> probe_model(const Model& model, Index n_episodes,
                                                uint64_t seed) {
  const TaskFamily& family = model.family();
  check(has_flat_latent(family.config().kind),
        "probe_model: task has no finite latent to decode");
  std::vector<Episode> episodes;
  episodes.reserve(size_t(n_episodes));
  Mat latents(n_episodes, family.io().latent);
  for (Index i = 0; i < n_episodes; ++i) {
    Rng rng = Rng::derive(seed, {0x9807e, uint64_t(i)});
    episodes.push_back(family.make_episode(rng));
    latents.row(i) = family.latent_vec(episodes.back().instance);
  }

  std::vector<Index> blocks;
  if (is_compositional(family.config().kind)) {
    for (Index a : family.combo_arity()) blocks.push_back(a);
  }

  std::map<std::string, ProbeResult> out;
  for (const std::string& loc : model.tap_locations()) {
    Mat features(n_episodes, model.tap_dim(loc));
    for (Index i = 0; i < n_episodes; ++i)
      features.row(i) = model.tap_value(episodes[size_t(i)], loc);
    out[loc] = probe_fit(features, latents, 1e-6, 0.8, blocks);
  }
  return out;
}

json probe_report_json(const std::map<std::string, ProbeResult>& probes) {
  json j = json::object();
  for (const auto& [loc, p] : probes) {
    json comp = json::array();
    for (Index i = 0; i < p.score_per_component.size(); ++i)
      comp.push_back(p.score_per_component[i]);
    j[loc] = {{"score", p.score},
              {"metric", p.categorical ? "accuracy" : "r2"},
              {"per_component", comp},
              {"n_fit", p.n_fit},
              {"n_eval", p.n_eval},
              {"underdetermined", p.underdetermined}};
  }
  return j;
}

// ---------------------------------------------------------------------------
// DAS
// ---------------------------------------------------------------------------

double relative_accuracy(double iia, double baseline, bool* defined) {
  const bool ok = baseline < 1.0;
  if (defined) *defined = ok;
  if (!ok) return std::numeric_limits<double>::quiet_NaN();
  return (iia - baseline) / (1.0 - baseline);
}

std::vector<DasPair> make_das_pairs(const TaskFamily& family, Index latent_index,
                                    Index count, uint64_t seed) {
  std::vector<DasPair> pairs;
  pairs.reserve(size_t(count));
  for (Index i = 0; i < count; ++i) {
    Rng rng = Rng::derive(seed, {0xDA5, uint64_t(latent_index), uint64_t(i)});
    DasPair p;
    const TaskInstance base = family.sample_task(rng);
    const TaskInstance source = family.resample_component(base, latent_index, rng);
    p.base = family.make_episode_for(base, rng);
    p.source = family.make_episode_for(source, rng);
    p.source.query_x = p.base.query_x;  // shared query
    p.counterfactual = family.label_mean(source, p.base.query_x);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

namespace {

Mat orthonormalized(const Mat& m) {
  Eigen::HouseholderQR<Mat> qr(m);
  Mat q = qr.householderQ() * Mat::Identity(m.rows(), m.cols());
  const Mat r = qr.matrixQR().topRows(m.cols()).triangularView<Eigen::Upper>();
  for (Index j = 0; j < m.cols(); ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  return q;
}

bool das_success(const Vec& pred, const Vec& counterfactual, const IoShape& io,
                 double tau, double* mse_out) {
  if (io.classification) {
    Index off = 0;
    for (Index blk : io.class_blocks) {
      Index ip = 0, it = 0;
      pred.segment(off, blk).maxCoeff(&ip);
      counterfactual.segment(off, blk).maxCoeff(&it);
      if (ip != it) return false;
      off += blk;
    }
    return true;
  }
  const double mse = (pred - counterfactual).squaredNorm() / double(pred.size());
  if (mse_out) *mse_out = mse;
  return mse <= tau;
}

}  // namespace

DasResult das_train(const DasHooks& hooks, const IoShape& io,
                    const std::vector<DasPair>& train_pairs,
                    const std::vector<DasPair>& eval_pairs, const DasConfig& cfg) {
  check(cfg.k > 0 && cfg.k <= hooks.dim,
        "das: subspace dimension k must be in [1, dim]");
  check(!train_pairs.empty() && !eval_pairs.empty(), "das: need pairs");

  Rng rng = Rng::derive(cfg.seed, {0xDA50});
  ParamStore pi_params;
  pi_params.add("pi", Tensor::from_mat(orthonormalized(rng.normal_mat(hooks.dim, cfg.k))));

  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  AdamState adam(adam_cfg, pi_params);
  LossSpec loss_spec;  // task-type loss, no aux

  DasResult result;
  result.latent_index = -1;

  for (Index step = 0; step < cfg.steps; ++step) {
    Graph g;
    WatchScope watch(pi_params, g);
    const Tensor& pi = pi_params.at("pi");
    Tensor loss;
    for (Index b = 0; b < cfg.batch; ++b) {
      const DasPair& pair =
          train_pairs[size_t(rng.uniform_int(0, long(train_pairs.size()) - 1))];
      const Vec h_src = hooks.activation(pair.source);
      auto intervene = [&](const Tensor& row) {
        Tensor diff = sub(Tensor::from_vec(h_src), row);
        Tensor proj = matmul(matmul(diff, pi), transpose(pi));
        return add(row, proj);
      };
      Tensor pred = hooks.predict_intervened(pair.base, intervene);
      Tensor term = assemble_loss(loss_spec, io, pred, pair.counterfactual, nullptr,
                                  nullptr, nullptr);
      loss = loss.empty() ? term : add(loss, term);
    }
    loss = scale(loss, 1.0 / double(cfg.batch));
    g.backward(loss);
    adam.step(pi_params);
    pi_params.zero_grad();

    // Columns stay orthonormal: project back after every step.
    Mat q = orthonormalized(pi_params.at("pi").to_mat());
    MatRM q_rm = q;
    pi_params.at("pi").arr() = Eigen::Map<const Arr>(q_rm.data(), q_rm.size());
    const double orth_err =
        (q.transpose() * q - Mat::Identity(cfg.k, cfg.k)).cwiseAbs().maxCoeff();
    result.max_orth_err = std::max(result.max_orth_err, orth_err);
  }

  // Held-out evaluation.
  const Tensor pi = pi_params.at("pi").detached();
  const Mat pi_mat = pi.to_mat();
  double hits = 0, base_hits = 0, mse_sum = 0;
  for (const DasPair& pair : eval_pairs) {
    const Vec h_src = hooks.activation(pair.source);
    auto intervene = [&](const Tensor& row) {
      Tensor diff = sub(Tensor::from_vec(h_src), row);
      Tensor proj = matmul(matmul(diff, pi), transpose(pi));
      return add(row, proj);
    };
    const Vec pred = hooks.predict_intervened(pair.base, intervene).to_vec();
    double mse = 0;
    if (das_success(pred, pair.counterfactual, io, cfg.tau, &mse)) hits += 1;
    mse_sum += mse;
    if (das_success(hooks.predict_plain(pair.base), pair.counterfactual, io, cfg.tau,
                    nullptr))
      base_hits += 1;
  }
  result.pi = pi_mat;
  result.iia = hits / double(eval_pairs.size());
  result.baseline = base_hits / double(eval_pairs.size());
  result.relative = relative_accuracy(result.iia, result.baseline,
                                      &result.relative_defined);
  result.mse_mean = mse_sum / double(eval_pairs.size());
  return result;
}

DasHooks model_das_hooks(const Model& model, const std::string& location) {
  DasHooks hooks;
  hooks.dim = model.tap_dim(location);
  hooks.activation = [&model, location](const Episode& ep) {
    return model.tap_value(ep, location);
  };
  hooks.predict_intervened = [&model, location](const Episode& ep,
                                                const std::function<Tensor(const Tensor&)>& fn) {
    return model.forward_intervened(ep, location, fn);
  };
  hooks.predict_plain = [&model](const Episode& ep) { return model.predict(ep); };
  return hooks;
}

DasResult das_search_model(const Model& model, Index latent_index,
                           const DasConfig& cfg) {
  const TaskFamily& family = model.family();
  const auto train_pairs =
      make_das_pairs(family, latent_index, cfg.train_pairs, cfg.seed);
  const auto eval_pairs =
      make_das_pairs(family, latent_index, cfg.eval_pairs, cfg.seed + 1);

  std::vector<std::string> locations;
  if (model.config().variant == ModelVariant::Implicit) {
    for (Index l = 0; l <= model.config().encoder.layers; ++l)
      locations.push_back("layer_" + std::to_string(l));
  } else {
    locations.push_back("bottleneck");
  }

  DasResult best;
  bool first = true;
  for (const std::string& loc : locations) {
    DasHooks hooks = model_das_hooks(model, loc);
    DasResult r = das_train(hooks, family.io(), train_pairs, eval_pairs, cfg);
    r.location = loc;
    r.latent_index = latent_index;
    if (first || r.iia > best.iia) {
      best = r;
      first = false;
    }
  }
  return best;
}

json das_result_json(const DasResult& r) {
  json j{{"location", r.location},
         {"latent_index", r.latent_index},
         {"iia", r.iia},
         {"baseline", r.baseline},
         {"relative_defined", r.relative_defined},
         {"mse_mean", r.mse_mean},
         {"max_orth_err", r.max_orth_err},
         {"k", r.pi.cols()},
         {"dim", r.pi.rows()}};
  if (r.relative_defined)
    j["relative"] = r.relative;
  else
    j["relative"] = "undefined (baseline = 1)";
  return j;
}

}  // namespace icll
