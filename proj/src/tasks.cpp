#include "icll/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>

namespace icll {

namespace {

constexpr double kGpJitter = 1e-6;
constexpr double kRidgeLambda = 1e-8;

struct KindInfo {
  TaskKind kind;
  const char* name;
};

constexpr KindInfo kKinds[] = {
    {TaskKind::LinReg, "lin_reg"},         {TaskKind::MlpReg, "mlp_reg"},
    {TaskKind::SinReg, "sin_reg"},         {TaskKind::GpReg, "gp_reg"},
    {TaskKind::HodgkinHuxley, "hodgkin_huxley"},
    {TaskKind::LinCls, "lin_cls"},         {TaskKind::MlpCls, "mlp_cls"},
    {TaskKind::Moe, "moe"},                {TaskKind::Raven, "raven"},
    {TaskKind::Alchemy, "alchemy"},
};

double sin_phase(const Vec& x) { return x.sum(); }

Vec one_hot(Index n, Index i) {
  Vec v = Vec::Zero(n);
  v[i] = 1.0;
  return v;
}

std::vector<int> invert_perm(const std::vector<int>& p) {
  std::vector<int> inv(p.size());
  for (size_t i = 0; i < p.size(); ++i) inv[size_t(p[i])] = int(i);
  return inv;
}

}  // namespace

const char* to_string(TaskKind k) {
  for (const auto& info : kKinds)
    if (info.kind == k) return info.name;
  fail("unknown task kind");
}

TaskKind task_kind_from_string(const std::string& s) {
  for (const auto& info : kKinds)
    if (s == info.name) return info.kind;
  fail("unknown task kind: " + s);
}

bool is_classification(TaskKind k) {
  return k == TaskKind::LinCls || k == TaskKind::MlpCls || k == TaskKind::Raven ||
         k == TaskKind::Alchemy;
}

bool is_compositional(TaskKind k) {
  return k == TaskKind::Moe || k == TaskKind::Raven || k == TaskKind::Alchemy;
}

bool has_flat_latent(TaskKind k) { return k != TaskKind::GpReg; }

bool supports_known_predictor(TaskKind k) {
  return k == TaskKind::LinReg || k == TaskKind::SinReg || k == TaskKind::LinCls ||
         k == TaskKind::Moe;
}

bool has_closed_form_oracle(TaskKind k) {
  return k == TaskKind::LinReg || k == TaskKind::GpReg || k == TaskKind::SinReg;
}

bool gaussian_query_kind(TaskKind k) {
  switch (k) {
    case TaskKind::LinReg:
    case TaskKind::MlpReg:
    case TaskKind::SinReg:
    case TaskKind::GpReg:
    case TaskKind::LinCls:
    case TaskKind::MlpCls:
    case TaskKind::Moe:
      return true;
    default:
      return false;
  }
}

const char* to_string(QueryMode m) {
  switch (m) {
    case QueryMode::Id: return "id";
    case QueryMode::Ood3x: return "ood3x";
    case QueryMode::NearContext: return "near_context";
    case QueryMode::FarFromContext: return "far_from_context";
  }
  fail("unknown query mode");
}

QueryMode query_mode_from_string(const std::string& s) {
  for (QueryMode m : {QueryMode::Id, QueryMode::Ood3x, QueryMode::NearContext,
                      QueryMode::FarFromContext})
    if (s == to_string(m)) return m;
  fail("unknown query mode: " + s);
}

const char* to_string(LatentSplit s) {
  return s == LatentSplit::Train ? "train" : "heldout";
}

TaskConfig TaskConfig::defaults_for(TaskKind kind) {
  TaskConfig c;
  c.kind = kind;
  switch (kind) {
    case TaskKind::LinReg: c.x_dim = 1; c.y_dim = 1; break;
    case TaskKind::MlpReg: c.x_dim = 2; c.y_dim = 1; break;
    case TaskKind::SinReg: c.x_dim = 1; c.y_dim = 1; break;
    case TaskKind::GpReg: c.x_dim = 1; c.y_dim = 1; break;
    case TaskKind::HodgkinHuxley: c.x_dim = 1; c.y_dim = 1; break;
    case TaskKind::LinCls: c.x_dim = 2; c.y_dim = 1; break;
    case TaskKind::MlpCls: c.x_dim = 2; c.y_dim = 1; break;
    case TaskKind::Moe: c.x_dim = 4; c.y_dim = 4; break;
    case TaskKind::Raven: break;
    case TaskKind::Alchemy: break;
  }
  return c;
}

#define ICLL_TASK_FIELDS(X)                                                    \
  X(x_dim) X(y_dim) X(n_min) X(n_max) X(noise_std) X(family_seed)              \
  X(latent_train_fraction) X(sin_components) X(sin_lambda_max) X(mlp_hidden)   \
  X(gp_bandwidth) X(moe_layers) X(moe_experts) X(moe_dim)                      \
  X(raven_attributes) X(raven_values) X(raven_choices) X(alchemy_stones)       \
  X(alchemy_potions) X(alchemy_graphs) X(alchemy_potion_maps)                  \
  X(alchemy_stone_maps) X(hh_steps) X(hh_grid) X(near_context_std)             \
  X(far_min_dist)

void to_json(json& j, const TaskConfig& c) {
  j = json{{"kind", to_string(c.kind)}};
#define ICLL_X(f) j[#f] = c.f;
  ICLL_TASK_FIELDS(ICLL_X)
#undef ICLL_X
}

void from_json(const json& j, TaskConfig& c) {
  c = TaskConfig::defaults_for(task_kind_from_string(j.at("kind").get<std::string>()));
#define ICLL_X(f) if (j.contains(#f)) j.at(#f).get_to(c.f);
  ICLL_TASK_FIELDS(ICLL_X)
#undef ICLL_X
}

// ---------------------------------------------------------------------------
// Hodgkin-Huxley
// ---------------------------------------------------------------------------

namespace {

// z / (exp(z) - 1) with the small-z expansion.
double efun(double z) {
  if (std::abs(z) < 1e-4) return 1.0 - z / 2.0;
  return z / (std::exp(z) - 1.0);
}

struct HhState {
  double v, m, h, n, p;
};

struct HhRates {
  const HhConstants& c;
  double am(double v) const { return 0.32 * efun(-0.25 * (v - c.v_t - 13.0)) / 0.25; }
  double bm(double v) const { return 0.28 * efun(0.2 * (v - c.v_t - 40.0)) / 0.2; }
  double ah(double v) const { return 0.128 * std::exp(-(v - c.v_t - 17.0) / 18.0); }
  double bh(double v) const { return 4.0 / (1.0 + std::exp(-0.2 * (v - c.v_t - 40.0))); }
  double an(double v) const { return 0.032 * efun(-0.2 * (v - c.v_t - 15.0)) / 0.2; }
  double bn(double v) const { return 0.5 * std::exp(-(v - c.v_t - 10.0) / 40.0); }
  double p_inf(double v) const { return 1.0 / (1.0 + std::exp(-0.1 * (v + 35.0))); }
  double tau_p(double v) const {
    return c.tau_max / (3.3 * std::exp(0.05 * (v + 35.0)) + std::exp(-0.05 * (v + 35.0)));
  }

  HhState deriv(const HhState& s, double t, double g_na, double g_k) const {
    const double i_inj = (t >= c.t_on && t <= c.t_off) ? c.i_amp : 0.0;
    HhState d;
    d.v = (c.g_leak * (c.e_leak - s.v) +
           g_na * s.m * s.m * s.m * s.h * (c.e_na - s.v) +
           g_k * s.n * s.n * s.n * s.n * (c.e_k - s.v) +
           c.gbar_m * s.p * (c.e_k - s.v) + i_inj) /
          c.c_m;
    d.m = am(s.v) * (1.0 - s.m) - bm(s.v) * s.m;
    d.h = ah(s.v) * (1.0 - s.h) - bh(s.v) * s.h;
    d.n = an(s.v) * (1.0 - s.n) - bn(s.v) * s.n;
    d.p = (p_inf(s.v) - s.p) / tau_p(s.v);
    return d;
  }
};

HhState axpy(const HhState& s, double a, const HhState& d) {
  return {s.v + a * d.v, s.m + a * d.m, s.h + a * d.h, s.n + a * d.n, s.p + a * d.p};
}

}  // namespace

Vec hh_solve(double g_na, double g_k, Index steps, const HhConstants& c,
             Rng* noise_rng) {
  check(steps > 0, "hh_solve: steps must be positive");
  check(g_na >= 0 && g_k >= 0, "hh_solve: conductances must be nonnegative");
  const HhRates rates{c};
  const double dt = (c.t1 - c.t0) / double(steps);
  HhState s;
  s.v = c.v0;
  s.m = rates.am(s.v) / (rates.am(s.v) + rates.bm(s.v));
  s.h = rates.ah(s.v) / (rates.ah(s.v) + rates.bh(s.v));
  s.n = rates.an(s.v) / (rates.an(s.v) + rates.bn(s.v));
  s.p = rates.p_inf(s.v);

  Vec v_out(steps + 1);
  v_out[0] = s.v;
  check(c.solver_substeps >= 1, "hh_solve: substeps must be positive");
  const double h = dt / double(c.solver_substeps);
  for (Index i = 0; i < steps; ++i) {
    for (Index sub = 0; sub < c.solver_substeps; ++sub) {
      const double t = c.t0 + double(i) * dt + double(sub) * h;
      const HhState k1 = rates.deriv(s, t, g_na, g_k);
      const HhState k2 = rates.deriv(axpy(s, h / 2, k1), t + h / 2, g_na, g_k);
      const HhState k3 = rates.deriv(axpy(s, h / 2, k2), t + h / 2, g_na, g_k);
      const HhState k4 = rates.deriv(axpy(s, h, k3), t + h, g_na, g_k);
      s.v += h / 6.0 * (k1.v + 2 * k2.v + 2 * k3.v + k4.v);
      s.m += h / 6.0 * (k1.m + 2 * k2.m + 2 * k3.m + k4.m);
      s.h += h / 6.0 * (k1.h + 2 * k2.h + 2 * k3.h + k4.h);
      s.n += h / 6.0 * (k1.n + 2 * k2.n + 2 * k3.n + k4.n);
      s.p += h / 6.0 * (k1.p + 2 * k2.p + 2 * k3.p + k4.p);
      if (c.noise_std > 0 && noise_rng)
        s.v += c.noise_std * std::sqrt(h) * noise_rng->normal();
      if (!std::isfinite(s.v))
        fail("hh_solve: non-finite state at t=" + std::to_string(t) +
             " for g_na=" + std::to_string(g_na) + " g_k=" + std::to_string(g_k));
    }
    v_out[i + 1] = s.v;
  }
  return v_out;
}

std::vector<std::pair<double, double>> hh_sweep_grid(Index per_axis, double g_max) {
  check(per_axis >= 2, "hh_sweep_grid: need at least 2 points per axis");
  std::vector<std::pair<double, double>> grid;
  grid.reserve(size_t(per_axis * per_axis));
  for (Index i = 0; i < per_axis; ++i)
    for (Index j = 0; j < per_axis; ++j)
      grid.emplace_back(g_max * double(i) / double(per_axis - 1),
                        g_max * double(j) / double(per_axis - 1));
  return grid;
}

// ---------------------------------------------------------------------------
// Compositional splits
// ---------------------------------------------------------------------------

SplitResult latent_split(const std::vector<Index>& arity, double train_fraction,
                         Rng& rng) {
  check(!arity.empty(), "latent_split: empty arity");
  check(train_fraction > 0.0 && train_fraction <= 1.0,
        "latent_split: train fraction must be in (0, 1]");
  long total = 1;
  for (Index a : arity) {
    check(a > 0, "latent_split: non-positive arity");
    total *= a;
    check(total < 100'000'000, "latent_split: combination space too large");
  }
  std::vector<std::vector<int>> combos(static_cast<size_t>(total));
  for (long idx = 0; idx < total; ++idx) {
    std::vector<int> tuple(arity.size());
    long rem = idx;
    for (size_t c = arity.size(); c-- > 0;) {
      tuple[c] = int(rem % arity[c]);
      rem /= arity[c];
    }
    combos[size_t(idx)] = std::move(tuple);
  }
  rng.shuffle(combos);

  const long train_count = std::llround(train_fraction * double(total));
  check(train_count > 0, "latent_split: fraction leaves zero train combinations");

  // First pass: greedily cover every (component, value); then fill.
  std::vector<std::vector<bool>> covered(arity.size());
  for (size_t c = 0; c < arity.size(); ++c) covered[c].assign(size_t(arity[c]), false);
  long uncovered = 0;
  for (Index a : arity) uncovered += a;

  SplitResult result;
  std::vector<std::vector<int>> rest;
  for (auto& tuple : combos) {
    bool covers_new = false;
    if (uncovered > 0) {
      for (size_t c = 0; c < tuple.size(); ++c)
        if (!covered[c][size_t(tuple[c])]) covers_new = true;
    }
    if (covers_new) {
      for (size_t c = 0; c < tuple.size(); ++c) {
        if (!covered[c][size_t(tuple[c])]) {
          covered[c][size_t(tuple[c])] = true;
          --uncovered;
        }
      }
      result.train.push_back(tuple);
    } else {
      rest.push_back(tuple);
    }
  }
  check(long(result.train.size()) <= train_count,
        "latent_split: fraction too small to cover all component values");
  for (auto& tuple : rest) {
    if (long(result.train.size()) < train_count)
      result.train.push_back(std::move(tuple));
    else
      result.heldout.push_back(std::move(tuple));
  }
  return result;
}

// ---------------------------------------------------------------------------
// TaskFamily
// ---------------------------------------------------------------------------

namespace {

IoShape compute_io(const TaskConfig& c) {
  IoShape io;
  switch (c.kind) {
    case TaskKind::LinReg:
      io = {c.x_dim, c.y_dim, c.x_dim * c.y_dim, false, {}};
      break;
    case TaskKind::MlpReg:
      io = {c.x_dim, c.y_dim,
            c.mlp_hidden * c.x_dim + c.mlp_hidden + c.y_dim * c.mlp_hidden + c.y_dim,
            false, {}};
      break;
    case TaskKind::SinReg:
      io = {c.x_dim, 1, c.sin_components, false, {}};
      break;
    case TaskKind::GpReg:
      io = {c.x_dim, 1, 0, false, {}};
      break;
    case TaskKind::HodgkinHuxley:
      io = {1, 1, 2, false, {}};
      break;
    case TaskKind::LinCls:
      io = {c.x_dim, 2, c.x_dim * 2, true, {2}};
      break;
    case TaskKind::MlpCls:
      io = {c.x_dim, 2,
            c.mlp_hidden * c.x_dim + c.mlp_hidden + 2 * c.mlp_hidden + 2, true, {2}};
      break;
    case TaskKind::Moe:
      io = {c.moe_dim, c.moe_dim, c.moe_layers * c.moe_experts, false, {}};
      break;
    case TaskKind::Raven: {
      const Index cell = c.raven_attributes * c.raven_values;
      io.x_enc = 2 * cell;
      io.y_enc = cell;
      io.latent = c.raven_attributes * 4;  // one-hot over the 4 rule kinds
      io.classification = true;
      io.class_blocks.assign(size_t(c.raven_attributes), c.raven_values);
      break;
    }
    case TaskKind::Alchemy:
      io.x_enc = c.alchemy_stones + c.alchemy_potions;
      io.y_enc = c.alchemy_stones;
      io.latent = c.alchemy_graphs + c.alchemy_potion_maps + c.alchemy_stone_maps;
      io.classification = true;
      io.class_blocks = {c.alchemy_stones};
      break;
  }
  return io;
}

std::vector<int> random_perm(Index n, Rng& rng) {
  std::vector<int> p(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) p[size_t(i)] = int(i);
  rng.shuffle(p);
  return p;
}

}  // namespace

IoShape task_io(const TaskConfig& cfg) { return compute_io(cfg); }

TaskFamily::TaskFamily(const TaskConfig& cfg) : cfg_(cfg), io_(compute_io(cfg)) {
  check(cfg_.n_min >= 1 && cfg_.n_min <= cfg_.n_max, "task config: bad context range");
  std::string frozen_sig;

  if (cfg_.kind == TaskKind::SinReg) {
    Rng rng = Rng::derive(cfg_.family_seed, {1});
    sin_lambdas_ = rng.uniform_vec(cfg_.sin_components, 0.0, cfg_.sin_lambda_max);
    for (Index i = 0; i < sin_lambdas_.size(); ++i)
      frozen_sig += std::to_string(sin_lambdas_[i]) + ",";
  }
  if (cfg_.kind == TaskKind::Moe) {
    Rng rng = Rng::derive(cfg_.family_seed, {2});
    for (Index e = 0; e < cfg_.moe_experts; ++e)
      moe_experts_.push_back(0.5 * rng.normal_mat(cfg_.moe_dim, cfg_.moe_dim));
    for (const Mat& w : moe_experts_) frozen_sig += std::to_string(w.sum()) + ",";
  }
  if (cfg_.kind == TaskKind::Alchemy) {
    Rng rng = Rng::derive(cfg_.family_seed, {4});
    const Index s_count = cfg_.alchemy_stones, p_count = cfg_.alchemy_potions;
    check((s_count & (s_count - 1)) == 0 && s_count >= 2,
          "alchemy: stone count must be a power of two");
    const int bits = int(std::round(std::log2(double(s_count))));
    check(p_count <= 2 * bits, "alchemy: potion count exceeds 2 * stone bits");
    // Duplicate pool entries would create behaviorally identical
    // environments, so each pool is sampled without repetition.
    auto push_unique = [](std::vector<std::vector<int>>& pool,
                          std::vector<int> entry) {
      if (std::find(pool.begin(), pool.end(), entry) != pool.end()) return false;
      pool.push_back(std::move(entry));
      return true;
    };
    while (Index(alchemy_graphs_.size()) < cfg_.alchemy_graphs) {
      std::vector<int> table(size_t(s_count * p_count), 0);
      bool has_effect = false;
      for (Index s = 0; s < s_count; ++s) {
        for (Index p = 0; p < p_count; ++p) {
          const int axis = int(p) / 2, dir = int(p) % 2;
          int target = dir ? (int(s) | (1 << axis)) : (int(s) & ~(1 << axis));
          const bool edge = rng.uniform() < 0.8;
          const int result = edge ? target : int(s);
          table[size_t(s * p_count + p)] = result;
          if (result != int(s)) has_effect = true;
        }
      }
      if (has_effect) push_unique(alchemy_graphs_, std::move(table));
    }
    while (Index(alchemy_potion_maps_.size()) < cfg_.alchemy_potion_maps)
      push_unique(alchemy_potion_maps_, random_perm(p_count, rng));
    while (Index(alchemy_stone_maps_.size()) < cfg_.alchemy_stone_maps)
      push_unique(alchemy_stone_maps_, random_perm(s_count, rng));

    // Enumerable environment spaces also get a behavioral separation pass:
    // any two environments must disagree on enough (stone, potion) cells
    // that a medium-length context can tell them apart.
    const long env_total =
        long(cfg_.alchemy_graphs) * cfg_.alchemy_potion_maps * cfg_.alchemy_stone_maps;
    if (env_total <= 8192) {
      const int min_separation = 5;
      auto behavior = [&](int g, int pm, int sm) {
        std::vector<int> b;
        b.reserve(size_t(s_count * p_count));
        const std::vector<int> env{g, pm, sm};
        for (Index s = 0; s < s_count; ++s)
          for (Index p = 0; p < p_count; ++p)
            b.push_back(alchemy_transition(env, int(s), int(p)));
        return b;
      };
      for (int rounds = 0; rounds < 200; ++rounds) {
        std::vector<std::vector<int>> tables;
        std::vector<std::array<int, 3>> envs;
        for (int g = 0; g < cfg_.alchemy_graphs; ++g)
          for (int pm = 0; pm < cfg_.alchemy_potion_maps; ++pm)
            for (int sm = 0; sm < cfg_.alchemy_stone_maps; ++sm) {
              tables.push_back(behavior(g, pm, sm));
              envs.push_back({g, pm, sm});
            }
        int bad_i = -1, bad_j = -1;
        for (size_t i = 0; i < tables.size() && bad_i < 0; ++i) {
          for (size_t j = i + 1; j < tables.size(); ++j) {
            int dist = 0;
            for (size_t k = 0; k < tables[i].size() && dist < min_separation; ++k)
              dist += tables[i][k] != tables[j][k];
            if (dist < min_separation) {
              bad_i = int(i);
              bad_j = int(j);
              break;
            }
          }
        }
        if (bad_i < 0) break;
        check(rounds < 199, "alchemy: could not separate environment behaviors");
        // Resample one pool entry the clashing pair disagrees on (or the
        // potion map when the tuples are equal component-wise elsewhere).
        const auto& a = envs[size_t(bad_i)];
        const auto& b = envs[size_t(bad_j)];
        if (a[1] != b[1]) {
          auto& entry = alchemy_potion_maps_[size_t(b[1])];
          do entry = random_perm(p_count, rng);
          while (std::count(alchemy_potion_maps_.begin(), alchemy_potion_maps_.end(),
                            entry) > 1);
        } else if (a[2] != b[2]) {
          auto& entry = alchemy_stone_maps_[size_t(b[2])];
          do entry = random_perm(s_count, rng);
          while (std::count(alchemy_stone_maps_.begin(), alchemy_stone_maps_.end(),
                            entry) > 1);
        } else {
          auto& entry = alchemy_graphs_[size_t(b[0])];
          std::vector<int> table(size_t(s_count * p_count), 0);
          bool has_effect = false;
          for (Index s = 0; s < s_count; ++s)
            for (Index p = 0; p < p_count; ++p) {
              const int axis = int(p) / 2, dir = int(p) % 2;
              int target = dir ? (int(s) | (1 << axis)) : (int(s) & ~(1 << axis));
              const int result = rng.uniform() < 0.8 ? target : int(s);
              table[size_t(s * p_count + p)] = result;
              if (result != int(s)) has_effect = true;
            }
          if (has_effect &&
              std::find(alchemy_graphs_.begin(), alchemy_graphs_.end(), table) ==
                  alchemy_graphs_.end())
            entry = std::move(table);
        }
      }
    }
    frozen_sig += "alchemy" + std::to_string(rng.next_u64());
  }
  if (is_compositional(cfg_.kind)) {
    Rng rng = Rng::derive(cfg_.family_seed, {3});
    split_ = latent_split(combo_arity(), cfg_.latent_train_fraction, rng);
  }

  json j = cfg_;
  fingerprint_ = fnv1a64(j.dump() + frozen_sig);
}

std::vector<Index> TaskFamily::combo_arity() const {
  switch (cfg_.kind) {
    case TaskKind::Moe:
      return std::vector<Index>(size_t(cfg_.moe_layers), cfg_.moe_experts);
    case TaskKind::Raven:
      return std::vector<Index>(size_t(cfg_.raven_attributes), 4);
    case TaskKind::Alchemy:
      return {cfg_.alchemy_graphs, cfg_.alchemy_potion_maps, cfg_.alchemy_stone_maps};
    default:
      fail("combo_arity: task has no categorical latent");
  }
}

TaskInstance TaskFamily::sample_task(Rng& rng, LatentSplit split) const {
  TaskInstance inst;
  inst.kind = cfg_.kind;
  inst.split = split;
  switch (cfg_.kind) {
    case TaskKind::LinReg:
    case TaskKind::MlpReg:
    case TaskKind::LinCls:
    case TaskKind::MlpCls:
      inst.z = rng.normal_vec(io_.latent);
      break;
    case TaskKind::SinReg:
      inst.z = rng.uniform_vec(cfg_.sin_components, -1.0, 1.0);
      break;
    case TaskKind::GpReg:
      break;  // nonparametric: the latent is the sampled function itself
    case TaskKind::HodgkinHuxley: {
      const auto grid = hh_sweep_grid(cfg_.hh_grid, 40.0);
      const auto& [g_na, g_k] = grid[size_t(rng.uniform_int(0, long(grid.size()) - 1))];
      inst.z = Vec(2);
      inst.z << g_na, g_k;
      inst.hh_voltage = hh_trace(g_na, g_k);
      break;
    }
    case TaskKind::Moe:
    case TaskKind::Raven:
    case TaskKind::Alchemy: {
      const auto& pool = (split == LatentSplit::Heldout && !split_.heldout.empty())
                             ? split_.heldout
                             : split_.train;
      inst.z_tuple = pool[size_t(rng.uniform_int(0, long(pool.size()) - 1))];
      if (cfg_.kind == TaskKind::Raven) {
        for (Index a = 0; a < cfg_.raven_attributes; ++a) {
          std::array<int, 3> set{};
          std::set<int> seen;
          for (int& v : set) {
            int candidate;
            do candidate = int(rng.uniform_int(0, cfg_.raven_values - 1));
            while (seen.count(candidate));
            seen.insert(candidate);
            v = candidate;
          }
          inst.raven_d3.push_back(set);
        }
      }
      break;
    }
  }
  return inst;
}

TaskInstance TaskFamily::instance_from_z(const Vec& z) const {
  check(has_flat_latent(cfg_.kind) && !is_compositional(cfg_.kind),
        "instance_from_z: task latent is not a flat vector");
  check(z.size() == io_.latent, "instance_from_z: latent dim mismatch");
  TaskInstance inst;
  inst.kind = cfg_.kind;
  inst.z = z;
  if (cfg_.kind == TaskKind::HodgkinHuxley) inst.hh_voltage = hh_trace(z[0], z[1]);
  return inst;
}

TaskInstance TaskFamily::instance_from_tuple(const std::vector<int>& tuple,
                                             Rng& rng) const {
  const auto arity = combo_arity();
  check(tuple.size() == arity.size(), "instance_from_tuple: arity mismatch");
  for (size_t i = 0; i < tuple.size(); ++i)
    check(tuple[i] >= 0 && tuple[i] < arity[i], "instance_from_tuple: value out of range");
  TaskInstance inst;
  inst.kind = cfg_.kind;
  inst.z_tuple = tuple;
  if (cfg_.kind == TaskKind::Raven) {
    for (Index a = 0; a < cfg_.raven_attributes; ++a) {
      std::array<int, 3> set{};
      std::set<int> seen;
      for (int& v : set) {
        int candidate;
        do candidate = int(rng.uniform_int(0, cfg_.raven_values - 1));
        while (seen.count(candidate));
        seen.insert(candidate);
        v = candidate;
      }
      inst.raven_d3.push_back(set);
    }
  }
  return inst;
}

std::shared_ptr<const Vec> TaskFamily::hh_trace(double g_na, double g_k) const {
  std::lock_guard<std::mutex> lock(hh_mutex_);
  auto& slot = hh_cache_[{g_na, g_k}];
  if (!slot) slot = std::make_shared<const Vec>(hh_solve(g_na, g_k, cfg_.hh_steps));
  return slot;
}

Index TaskFamily::latent_components(const TaskInstance& inst) const {
  return is_compositional(cfg_.kind) ? Index(inst.z_tuple.size()) : inst.z.size();
}

TaskInstance TaskFamily::resample_component(const TaskInstance& base, Index component,
                                            Rng& rng) const {
  TaskInstance inst = base;
  if (is_compositional(cfg_.kind)) {
    const auto arity = combo_arity();
    check(component >= 0 && component < Index(arity.size()),
          "resample_component: index out of range");
    const int old = base.z_tuple[size_t(component)];
    int next = old;
    while (next == old) next = int(rng.uniform_int(0, arity[size_t(component)] - 1));
    inst.z_tuple[size_t(component)] = next;
    return inst;
  }
  check(component >= 0 && component < base.z.size(),
        "resample_component: index out of range");
  switch (cfg_.kind) {
    case TaskKind::SinReg:
      inst.z[component] = rng.uniform(-1.0, 1.0);
      break;
    case TaskKind::HodgkinHuxley:
      inst.z[component] = rng.uniform(0.0, 40.0);
      inst.hh_voltage = hh_trace(inst.z[0], inst.z[1]);
      break;
    case TaskKind::GpReg:
      fail("resample_component: GP task has no finite latent");
    default:
      inst.z[component] = rng.normal();
  }
  return inst;
}

Vec TaskFamily::moe_apply(Index expert, const Vec& v) const {
  return (moe_experts_[size_t(expert)] * v).array().tanh().matrix();
}

int TaskFamily::alchemy_transition(const std::vector<int>& env, int stone,
                                   int potion) const {
  const auto& graph = alchemy_graphs_[size_t(env[0])];
  const auto& potion_map = alchemy_potion_maps_[size_t(env[1])];
  const auto& stone_map = alchemy_stone_maps_[size_t(env[2])];
  const int latent_s = stone_map[size_t(stone)];
  const int latent_p = potion_map[size_t(potion)];
  const int latent_r = graph[size_t(latent_s * cfg_.alchemy_potions + latent_p)];
  return invert_perm(stone_map)[size_t(latent_r)];
}

std::vector<int> TaskFamily::raven_complete(const TaskInstance& inst,
                                            const std::vector<int>& cell1,
                                            const std::vector<int>& cell2) const {
  const Index v_count = cfg_.raven_values;
  std::vector<int> cell3(static_cast<size_t>(cfg_.raven_attributes));
  for (Index a = 0; a < cfg_.raven_attributes; ++a) {
    const int rule = inst.z_tuple[size_t(a)];
    const int c1 = cell1[size_t(a)], c2 = cell2[size_t(a)];
    switch (rule) {
      case 0: cell3[size_t(a)] = c1; break;                                // constant
      case 1: cell3[size_t(a)] = int((c2 + 1) % v_count); break;           // +1
      case 2: cell3[size_t(a)] = int((c2 - 1 + v_count) % v_count); break; // -1
      case 3: {  // distribute-three: the remaining element of the set
        const auto& set = inst.raven_d3[size_t(a)];
        for (int v : set)
          if (v != c1 && v != c2) cell3[size_t(a)] = v;
        break;
      }
      default: fail("raven: unknown rule kind");
    }
  }
  return cell3;
}

Vec TaskFamily::label_mean(const TaskInstance& inst, const Vec& x) const {
  switch (cfg_.kind) {
    case TaskKind::LinReg: {
      Eigen::Map<const MatRM> z(inst.z.data(), cfg_.x_dim, cfg_.y_dim);
      return z.transpose() * x;
    }
    case TaskKind::MlpReg:
    case TaskKind::MlpCls: {
      const Index h = cfg_.mlp_hidden;
      const Index out = cfg_.kind == TaskKind::MlpReg ? cfg_.y_dim : 2;
      const double* p = inst.z.data();
      Eigen::Map<const MatRM> w1(p, h, cfg_.x_dim);
      Eigen::Map<const Vec> b1(p + h * cfg_.x_dim, h);
      Eigen::Map<const MatRM> w2(p + h * cfg_.x_dim + h, out, h);
      Eigen::Map<const Vec> b2(p + h * cfg_.x_dim + h + out * h, out);
      const Vec hidden = ((w1 * x + b1).array().max(0.0)).matrix();
      Vec logits = w2 * hidden + b2;
      if (cfg_.kind == TaskKind::MlpReg) return logits;
      const Arr e = (logits.array() - logits.maxCoeff()).exp();
      return (e / e.sum()).matrix();
    }
    case TaskKind::SinReg: {
      const double s = sin_phase(x);
      double y = 0.0;
      for (Index i = 0; i < cfg_.sin_components; ++i)
        y += inst.z[i] * std::sin(2.0 * M_PI * sin_lambdas_[i] * s);
      Vec out(1);
      out << y;
      return out;
    }
    case TaskKind::GpReg:
      fail("label: GP labels are sampled jointly, not pointwise");
    case TaskKind::HodgkinHuxley: {
      check(inst.hh_voltage != nullptr, "label: HH instance has no solved trace");
      const HhConstants c;
      const double dt = (c.t1 - c.t0) / double(cfg_.hh_steps);
      const Index idx = Index(std::llround((x[0] - c.t0) / dt));
      check(idx >= 0 && idx < inst.hh_voltage->size(), "label: t outside the HH grid");
      Vec out(1);
      out << (*inst.hh_voltage)[idx];
      return out;
    }
    case TaskKind::LinCls: {
      Eigen::Map<const MatRM> z(inst.z.data(), cfg_.x_dim, 2);
      Vec logits = z.transpose() * x;
      const Arr e = (logits.array() - logits.maxCoeff()).exp();
      return (e / e.sum()).matrix();
    }
    case TaskKind::Moe: {
      Vec v = x;
      for (Index l = 0; l < cfg_.moe_layers; ++l)
        v = moe_apply(inst.z_tuple[size_t(l)], v);
      return v;
    }
    case TaskKind::Raven: {
      const Index cell = cfg_.raven_attributes * cfg_.raven_values;
      std::vector<int> c1(static_cast<size_t>(cfg_.raven_attributes)), c2(static_cast<size_t>(cfg_.raven_attributes));
      for (Index a = 0; a < cfg_.raven_attributes; ++a) {
        Index m1 = 0, m2 = 0;
        x.segment(a * cfg_.raven_values, cfg_.raven_values).maxCoeff(&m1);
        x.segment(cell + a * cfg_.raven_values, cfg_.raven_values).maxCoeff(&m2);
        c1[size_t(a)] = int(m1);
        c2[size_t(a)] = int(m2);
      }
      const auto c3 = raven_complete(inst, c1, c2);
      Vec y = Vec::Zero(cell);
      for (Index a = 0; a < cfg_.raven_attributes; ++a)
        y[a * cfg_.raven_values + c3[size_t(a)]] = 1.0;
      return y;
    }
    case TaskKind::Alchemy: {
      Index stone = 0, potion = 0;
      x.head(cfg_.alchemy_stones).maxCoeff(&stone);
      x.tail(cfg_.alchemy_potions).maxCoeff(&potion);
      const int result = alchemy_transition(inst.z_tuple, int(stone), int(potion));
      return one_hot(cfg_.alchemy_stones, result);
    }
  }
  fail("label_mean: unreachable");
}

Vec TaskFamily::label(const TaskInstance& inst, const Vec& x, Rng* rng) const {
  if (cfg_.kind == TaskKind::LinCls || cfg_.kind == TaskKind::MlpCls) {
    check(rng != nullptr, "label: classification sampling needs an rng");
    const Vec probs = label_mean(inst, x);
    const long cls = rng->categorical(probs);
    return one_hot(probs.size(), cls);
  }
  return label_mean(inst, x);
}

Vec TaskFamily::sample_query(const std::vector<Vec>& context_xs, QueryMode mode,
                             Rng& rng) const {
  check(gaussian_query_kind(cfg_.kind) || mode == QueryMode::Id,
        std::string("sample_query: mode ") + to_string(mode) +
            " unavailable for kind " + to_string(cfg_.kind));
  const Index d = io_.x_enc;
  switch (mode) {
    case QueryMode::Id:
      return rng.normal_vec(d);
    case QueryMode::Ood3x:
      return 3.0 * rng.normal_vec(d);
    case QueryMode::NearContext: {
      check(!context_xs.empty(), "sample_query: empty context");
      const auto& anchor =
          context_xs[size_t(rng.uniform_int(0, long(context_xs.size()) - 1))];
      return anchor + cfg_.near_context_std * rng.normal_vec(d);
    }
    case QueryMode::FarFromContext: {
      // Proposals use the widened (3x) scale; plain N(0, I) almost never
      // clears the distance bound once the context is dense.
      for (int attempt = 0; attempt < 10000; ++attempt) {
        const Vec candidate = 3.0 * rng.normal_vec(d);
        double min_dist = std::numeric_limits<double>::infinity();
        for (const Vec& cx : context_xs)
          min_dist = std::min(min_dist, (candidate - cx).norm());
        if (min_dist >= cfg_.far_min_dist) return candidate;
      }
      fail("sample_query: rejection budget exhausted for far-from-context");
    }
  }
  fail("sample_query: unreachable");
}

Mat TaskFamily::gp_kernel(const std::vector<Vec>& a, const std::vector<Vec>& b) const {
  const double denom = 2.0 * cfg_.gp_bandwidth * cfg_.gp_bandwidth;
  Mat k(Index(a.size()), Index(b.size()));
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t j = 0; j < b.size(); ++j)
      k(Index(i), Index(j)) = std::exp(-(a[i] - b[j]).squaredNorm() / denom);
  return k;
}

Vec TaskFamily::gp_sample_joint(const std::vector<Vec>& xs, Rng& rng) const {
  const Index n = Index(xs.size());
  Mat k = gp_kernel(xs, xs);
  double jitter = kGpJitter;
  for (int attempt = 0; attempt < 5; ++attempt) {
    Eigen::LLT<Mat> llt(k + jitter * Mat::Identity(n, n));
    if (llt.info() == Eigen::Success) {
      return llt.matrixL() * rng.normal_vec(n);
    }
    jitter *= 100.0;
  }
  fail("gp_sample_joint: Cholesky failed despite jitter escalation");
}

Vec TaskFamily::oracle_predict(const std::vector<Vec>& xs, const std::vector<Vec>& ys,
                               const Vec& query_x) const {
  const Index n = Index(xs.size());
  check(n > 0, "oracle_predict: empty context");
  switch (cfg_.kind) {
    case TaskKind::LinReg: {
      Mat x(n, cfg_.x_dim), y(n, cfg_.y_dim);
      for (Index i = 0; i < n; ++i) {
        x.row(i) = xs[size_t(i)];
        y.row(i) = ys[size_t(i)];
      }
      const Mat gram =
          x.transpose() * x + kRidgeLambda * Mat::Identity(cfg_.x_dim, cfg_.x_dim);
      const Mat w = gram.ldlt().solve(x.transpose() * y);
      return w.transpose() * query_x;
    }
    case TaskKind::SinReg: {
      Mat basis(n, cfg_.sin_components);
      Vec y(n);
      for (Index i = 0; i < n; ++i) {
        const double s = sin_phase(xs[size_t(i)]);
        for (Index j = 0; j < cfg_.sin_components; ++j)
          basis(i, j) = std::sin(2.0 * M_PI * sin_lambdas_[j] * s);
        y[i] = ys[size_t(i)][0];
      }
      const Vec alpha = basis.colPivHouseholderQr().solve(y);
      const double s = sin_phase(query_x);
      double out = 0.0;
      for (Index j = 0; j < cfg_.sin_components; ++j)
        out += alpha[j] * std::sin(2.0 * M_PI * sin_lambdas_[j] * s);
      Vec v(1);
      v << out;
      return v;
    }
    case TaskKind::GpReg: {
      // Posterior solve with only a hair of regularization (the 1e-6 jitter
      // belongs to the sampler); LDLT tolerates the near-singular kernel.
      Mat k = gp_kernel(xs, xs) + 1e-10 * Mat::Identity(n, n);
      Vec y(n);
      for (Index i = 0; i < n; ++i) y[i] = ys[size_t(i)][0];
      const Vec alpha = k.ldlt().solve(y);
      const Mat k_star = gp_kernel({query_x}, xs);
      Vec v(1);
      v << (k_star * alpha)(0, 0);
      return v;
    }
    default:
      fail(std::string("oracle_predict: unsupported kind ") + to_string(cfg_.kind));
  }
}

Vec TaskFamily::latent_vec(const TaskInstance& inst) const {
  if (!is_compositional(cfg_.kind)) {
    check(has_flat_latent(cfg_.kind), "latent_vec: task has no finite latent");
    return inst.z;
  }
  const auto arity = combo_arity();
  Vec v = Vec::Zero(io_.latent);
  Index off = 0;
  for (size_t c = 0; c < arity.size(); ++c) {
    v[off + inst.z_tuple[c]] = 1.0;
    off += arity[c];
  }
  return v;
}

Episode TaskFamily::make_episode(Rng& rng, QueryMode mode, LatentSplit split) const {
  const TaskInstance inst = sample_task(rng, split);
  return make_episode_for(inst, rng, mode);
}

Episode TaskFamily::make_episode_for(const TaskInstance& inst, Rng& rng,
                                     QueryMode mode) const {
  Episode ep;
  ep.instance = inst;
  ep.query_dist = mode;

  if (cfg_.kind == TaskKind::Raven) {
    check(mode == QueryMode::Id, "make_episode: raven supports only ID queries");
    const Index a_count = cfg_.raven_attributes, v_count = cfg_.raven_values;
    const Index cell = a_count * v_count;
    auto encode_cells = [&](const std::vector<int>& c1, const std::vector<int>& c2) {
      Vec x = Vec::Zero(2 * cell);
      for (Index a = 0; a < a_count; ++a) {
        x[a * v_count + c1[size_t(a)]] = 1.0;
        x[cell + a * v_count + c2[size_t(a)]] = 1.0;
      }
      return x;
    };
    auto encode_cell = [&](const std::vector<int>& c) {
      Vec y = Vec::Zero(cell);
      for (Index a = 0; a < a_count; ++a) y[a * v_count + c[size_t(a)]] = 1.0;
      return y;
    };
    std::vector<int> answer_cell;
    for (int row = 0; row < 3; ++row) {
      std::vector<int> c1(static_cast<size_t>(a_count)), c2(static_cast<size_t>(a_count));
      for (Index a = 0; a < a_count; ++a) {
        const int rule = inst.z_tuple[size_t(a)];
        switch (rule) {
          case 0: {
            const int v = int(rng.uniform_int(0, v_count - 1));
            c1[size_t(a)] = v;
            c2[size_t(a)] = v;
            break;
          }
          case 1: {
            const int s = int(rng.uniform_int(0, v_count - 1));
            c1[size_t(a)] = s;
            c2[size_t(a)] = int((s + 1) % v_count);
            break;
          }
          case 2: {
            const int s = int(rng.uniform_int(0, v_count - 1));
            c1[size_t(a)] = s;
            c2[size_t(a)] = int((s - 1 + v_count) % v_count);
            break;
          }
          case 3: {
            std::array<int, 3> perm = inst.raven_d3[size_t(a)];
            std::vector<int> order{perm[0], perm[1], perm[2]};
            rng.shuffle(order);
            c1[size_t(a)] = order[0];
            c2[size_t(a)] = order[1];
            break;
          }
          default: fail("raven: unknown rule kind");
        }
      }
      const auto c3 = raven_complete(inst, c1, c2);
      if (row < 2) {
        ep.xs.push_back(encode_cells(c1, c2));
        ep.ys.push_back(encode_cell(c3));
      } else {
        ep.query_x = encode_cells(c1, c2);
        ep.query_y = encode_cell(c3);
        answer_cell = c3;
      }
    }
    // Multiple-choice set: the answer plus distinct distractor cells.
    std::vector<std::vector<int>> cells{answer_cell};
    while (Index(cells.size()) < cfg_.raven_choices) {
      std::vector<int> cand(static_cast<size_t>(a_count));
      for (Index a = 0; a < a_count; ++a)
        cand[size_t(a)] = int(rng.uniform_int(0, v_count - 1));
      if (std::find(cells.begin(), cells.end(), cand) == cells.end())
        cells.push_back(cand);
    }
    rng.shuffle(cells);
    for (size_t i = 0; i < cells.size(); ++i) {
      ep.choices.push_back(encode_cell(cells[i]));
      if (cells[i] == answer_cell) ep.answer_index = int(i);
    }
    return ep;
  }

  const Index n = rng.uniform_int(cfg_.n_min, cfg_.n_max);

  if (cfg_.kind == TaskKind::Alchemy) {
    check(mode == QueryMode::Id, "make_episode: alchemy supports only ID queries");
    for (Index i = 0; i < n + 1; ++i) {
      const int stone = int(rng.uniform_int(0, cfg_.alchemy_stones - 1));
      const int potion = int(rng.uniform_int(0, cfg_.alchemy_potions - 1));
      Vec x = Vec::Zero(io_.x_enc);
      x[stone] = 1.0;
      x[cfg_.alchemy_stones + potion] = 1.0;
      const Vec y = label_mean(inst, x);
      if (i < n) {
        ep.xs.push_back(x);
        ep.ys.push_back(y);
      } else {
        ep.query_x = x;
        ep.query_y = y;
      }
    }
    return ep;
  }

  if (cfg_.kind == TaskKind::HodgkinHuxley) {
    check(mode == QueryMode::Id, "make_episode: HH supports only ID queries");
    const HhConstants c;
    const double dt = (c.t1 - c.t0) / double(cfg_.hh_steps);
    for (Index i = 0; i < n + 1; ++i) {
      const Index idx = rng.uniform_int(0, cfg_.hh_steps);
      Vec x(1), y(1);
      x << c.t0 + double(idx) * dt;
      y << (*inst.hh_voltage)[idx];
      if (i < n) {
        ep.xs.push_back(x);
        ep.ys.push_back(y);
      } else {
        ep.query_x = x;
        ep.query_y = y;
      }
    }
    return ep;
  }

  // Gaussian-input kinds.
  for (Index i = 0; i < n; ++i) ep.xs.push_back(rng.normal_vec(io_.x_enc));
  ep.query_x = sample_query(ep.xs, mode, rng);

  if (cfg_.kind == TaskKind::GpReg) {
    std::vector<Vec> all = ep.xs;
    all.push_back(ep.query_x);
    const Vec ys = gp_sample_joint(all, rng);
    for (Index i = 0; i < n; ++i) {
      Vec y(1);
      y << ys[i];
      ep.ys.push_back(y);
    }
    ep.query_y = Vec(1);
    ep.query_y << ys[n];
    return ep;
  }

  const bool noisy = cfg_.noise_std > 0 && !io_.classification;
  for (Index i = 0; i < n; ++i) {
    Vec y = label(inst, ep.xs[size_t(i)], &rng);
    if (noisy) y += cfg_.noise_std * rng.normal_vec(y.size());
    ep.ys.push_back(y);
  }
  ep.query_y = label(inst, ep.query_x, &rng);
  if (noisy) ep.query_y += cfg_.noise_std * rng.normal_vec(ep.query_y.size());
  return ep;
}

Episode TaskFamily::relabel_episode(const Episode& proto, const TaskInstance& inst,
                                    Rng& rng) const {
  check(cfg_.kind != TaskKind::GpReg, "relabel_episode: GP labels are joint");
  Episode ep = proto;
  ep.instance = inst;
  for (size_t i = 0; i < ep.xs.size(); ++i) ep.ys[i] = label(inst, ep.xs[i], &rng);
  ep.query_y = label(inst, ep.query_x, &rng);
  return ep;
}

// ---------------------------------------------------------------------------
// JSONL exchange
// ---------------------------------------------------------------------------

namespace {

json vec_to_json(const Vec& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vec vec_from_json(const json& a) {
  Vec v(Index(a.size()));
  for (Index i = 0; i < v.size(); ++i) v[i] = a[size_t(i)].get<double>();
  return v;
}

}  // namespace

json episode_to_json(const TaskFamily& family, const Episode& ep) {
  json j;
  j["kind"] = to_string(family.config().kind);
  if (is_compositional(family.config().kind))
    j["z"] = ep.instance.z_tuple;
  else if (has_flat_latent(family.config().kind))
    j["z"] = vec_to_json(ep.instance.z);
  else
    j["z"] = json::array();
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(family.fingerprint()));
  j["fixed_ref"] = {{"family_seed", family.config().family_seed},
                    {"fingerprint", std::string(buf)}};
  json ctx = json::array();
  for (size_t i = 0; i < ep.xs.size(); ++i) {
    json row = json::array();
    for (Index k = 0; k < ep.xs[i].size(); ++k) row.push_back(ep.xs[i][k]);
    for (Index k = 0; k < ep.ys[i].size(); ++k) row.push_back(ep.ys[i][k]);
    ctx.push_back(row);
  }
  j["context"] = ctx;
  j["query_x"] = vec_to_json(ep.query_x);
  j["query_y"] = vec_to_json(ep.query_y);
  j["tags"] = {{"query_dist", to_string(ep.query_dist)},
               {"latent_split", to_string(ep.instance.split)}};
  if (!ep.choices.empty()) {
    json ch = json::array();
    for (const Vec& c : ep.choices) ch.push_back(vec_to_json(c));
    j["choices"] = ch;
    j["answer_index"] = ep.answer_index;
    json d3 = json::array();
    for (const auto& s : ep.instance.raven_d3) d3.push_back({s[0], s[1], s[2]});
    j["raven_d3"] = d3;
  }
  return j;
}

Episode episode_from_json(const TaskFamily& family, const json& j) {
  check(j.at("kind").get<std::string>() == to_string(family.config().kind),
        "episode_from_json: kind mismatch");
  Episode ep;
  ep.instance.kind = family.config().kind;
  if (is_compositional(family.config().kind))
    ep.instance.z_tuple = j.at("z").get<std::vector<int>>();
  else if (has_flat_latent(family.config().kind))
    ep.instance.z = vec_from_json(j.at("z"));
  if (family.config().kind == TaskKind::HodgkinHuxley)
    ep.instance.hh_voltage = std::make_shared<const Vec>(
        hh_solve(ep.instance.z[0], ep.instance.z[1], family.config().hh_steps));
  const Index x_enc = family.io().x_enc;
  for (const json& row : j.at("context")) {
    const Vec full = vec_from_json(row);
    ep.xs.push_back(full.head(x_enc));
    ep.ys.push_back(full.tail(full.size() - x_enc));
  }
  ep.query_x = vec_from_json(j.at("query_x"));
  ep.query_y = vec_from_json(j.at("query_y"));
  ep.query_dist = query_mode_from_string(j.at("tags").at("query_dist").get<std::string>());
  ep.instance.split = j.at("tags").at("latent_split").get<std::string>() == "heldout"
                          ? LatentSplit::Heldout
                          : LatentSplit::Train;
  if (j.contains("choices")) {
    for (const json& c : j.at("choices")) ep.choices.push_back(vec_from_json(c));
    ep.answer_index = j.at("answer_index").get<int>();
    for (const json& s : j.at("raven_d3"))
      ep.instance.raven_d3.push_back({s[0].get<int>(), s[1].get<int>(), s[2].get<int>()});
  }
  return ep;
}

void dump_episodes_jsonl(std::ostream& os, const TaskFamily& family,
                         const std::vector<Episode>& episodes) {
  for (const Episode& ep : episodes) os << episode_to_json(family, ep).dump() << "\n";
}

}  // namespace icll
