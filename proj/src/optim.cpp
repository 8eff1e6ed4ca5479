#include "icll/optim.hpp"

#include <cmath>

namespace icll {

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  check(!contains(name), "params: duplicate name " + name);
  index_[name] = items_.size();
  items_.emplace_back(name, std::move(t));
  return items_.back().second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  check(it != index_.end(), "params: unknown name " + name);
  return items_[it->second].second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  check(it != index_.end(), "params: unknown name " + name);
  return items_[it->second].second;
}

bool ParamStore::contains(const std::string& name) const {
  return index_.count(name) > 0;
}

void ParamStore::watch_all(Graph& g) {
  for (auto& [name, t] : items_) g.watch(t);
}

void ParamStore::unwatch_all() {
  for (auto& [name, t] : items_) t = t.detached();
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : items_) t.zero_grad();
}

Index ParamStore::param_count() const {
  Index n = 0;
  for (const auto& [name, t] : items_) n += t.numel();
  return n;
}

AdamState::AdamState(AdamConfig cfg, const ParamStore& params) : cfg_(cfg) {
  for (const auto& [name, t] : params.items()) {
    m_.push_back(Arr::Zero(t.numel()));
    v_.push_back(Arr::Zero(t.numel()));
  }
}

void AdamState::step(ParamStore& params) {
  check(m_.size() == params.items().size(), "adam: parameter set changed");
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, double(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, double(step_));
  for (size_t i = 0; i < params.items().size(); ++i) {
    Tensor& t = params.items()[i].second;
    check(t.has_grad(), "adam: parameter " + params.items()[i].first + " has no gradient");
    const Arr g = t.grad();
    check(g.isFinite().all(),
          "adam: non-finite gradient in " + params.items()[i].first);
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.square();
    const Arr m_hat = m_[i] / bc1;
    const Arr v_hat = v_[i] / bc2;
    t.arr() -= cfg_.lr * m_hat / (v_hat.sqrt() + cfg_.eps);
  }
}

double clip_global_norm(ParamStore& params, double max_norm) {
  double sq = 0.0;
  for (auto& [name, t] : params.items())
    if (t.has_grad()) sq += t.grad().square().sum();
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& [name, t] : params.items())
      if (t.has_grad()) t.grad() *= s;
  }
  return norm;
}

double finite_diff_check(const TensorFn& f, std::vector<Tensor> inputs,
                         double eps) {
  // Analytic pass: watched handle copies share the data buffers.
  std::vector<Tensor> tracked = inputs;
  Graph g;
  for (Tensor& t : tracked) {
    g.watch(t);
    t.zero_grad();
  }
  Tensor loss = f(tracked);
  g.backward(loss);

  double worst = 0.0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    Tensor& x = inputs[i];
    for (Index j = 0; j < x.numel(); ++j) {
      const double orig = x.data()[j];
      x.data()[j] = orig + eps;
      const double lp = f(inputs).item();
      x.data()[j] = orig - eps;
      const double lm = f(inputs).item();
      x.data()[j] = orig;
      const double central = (lp - lm) / (2.0 * eps);
      const double analytic = tracked[i].grad()[j];
      const double rel = std::abs(analytic - central) /
                         (std::abs(analytic) + std::abs(central) + 1e-12);
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace icll
