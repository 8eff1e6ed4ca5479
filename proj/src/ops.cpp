#include "icll/ops.hpp"

#include <cmath>

namespace icll {
namespace {

Graph* pick_graph(const char* op, std::initializer_list<const Tensor*> ts) {
  Graph* g = nullptr;
  for (const Tensor* t : ts) {
    if (!t->tracked()) continue;
    check(g == nullptr || g == t->graph(),
          std::string(op) + ": inputs belong to different graphs");
    g = t->graph();
  }
  return g;
}

// Broadcast layout for elementwise binaries: `outer` repetitions of an
// `inner`-sized block. Exactly one operand may be smaller (scalar or suffix).
struct Bcast {
  Index outer, inner;
  bool a_small, b_small;
};

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  const size_t off = big.size() - small.size();
  for (size_t i = 0; i < small.size(); ++i)
    if (small[i] != big[off + i]) return false;
  return true;
}

Bcast bcast(const char* op, const Tensor& a, const Tensor& b) {
  check(!a.empty() && !b.empty(), std::string(op) + ": empty operand");
  if (a.shape() == b.shape()) return {1, a.numel(), false, false};
  if (b.is_scalar()) return {a.numel(), 1, false, true};
  if (a.is_scalar()) return {b.numel(), 1, true, false};
  if (is_suffix(b.shape(), a.shape()))
    return {a.numel() / b.numel(), b.numel(), false, true};
  if (is_suffix(a.shape(), b.shape()))
    return {b.numel() / a.numel(), a.numel(), true, false};
  fail(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
       shape_str(b.shape()) + " do not broadcast");
}

// Sum a full-size gradient down to the broadcast operand.
Arr reduce_to_small(const Arr& g, Index outer, Index inner) {
  if (outer == 1) return g;
  Arr out = Arr::Zero(inner);
  for (Index o = 0; o < outer; ++o) out += g.segment(o * inner, inner);
  return out;
}

Arr expand_from_small(const Arr& small, Index outer, Index inner) {
  Arr out(outer * inner);
  for (Index o = 0; o < outer; ++o) out.segment(o * inner, inner) = small;
  return out;
}

template <typename Fwd, typename PullA, typename PullB>
Tensor binary_op(const char* op, const Tensor& a, const Tensor& b, Fwd fwd,
                 PullA pull_a, PullB pull_b) {
  const Bcast bc = bcast(op, a, b);
  const Shape& out_shape = bc.a_small ? b.shape() : a.shape();
  const Arr av = bc.a_small ? expand_from_small(a.arr(), bc.outer, bc.inner)
                            : Arr(a.arr());
  const Arr bv = bc.b_small ? expand_from_small(b.arr(), bc.outer, bc.inner)
                            : Arr(b.arr());
  Arr out = fwd(av, bv);
  Graph* g = pick_graph(op, {&a, &b});
  if (!g) return Tensor(out_shape, std::move(out));
  return g->record(
      op, out_shape, std::move(out), {a, b},
      [bc, av, bv, pull_a, pull_b](const Tensor& o, std::vector<Tensor>& in) {
        const Arr go = o.grad();
        if (in[0].tracked()) {
          Arr ga = pull_a(go, av, bv);
          accum_grad(in[0], bc.a_small ? reduce_to_small(ga, bc.outer, bc.inner)
                                       : ga);
        }
        if (in[1].tracked()) {
          Arr gb = pull_b(go, av, bv);
          accum_grad(in[1], bc.b_small ? reduce_to_small(gb, bc.outer, bc.inner)
                                       : gb);
        }
      });
}

template <typename Fwd, typename Pull>
Tensor unary_op(const char* op, const Tensor& a, Fwd fwd, Pull pull) {
  Arr out = fwd(Arr(a.arr()));
  Graph* g = pick_graph(op, {&a});
  if (!g) return Tensor(a.shape(), std::move(out));
  Arr x = a.arr();
  return g->record(op, a.shape(), std::move(out), {a},
                   [x, pull](const Tensor& o, std::vector<Tensor>& in) {
                     accum_grad(in[0], pull(Arr(o.grad()), x, Arr(o.arr())));
                   });
}

// [outer, n, inner] decomposition around `axis`.
struct AxisView {
  Index outer, n, inner;
};

AxisView axis_view(const char* op, const Shape& s, Index axis) {
  check(axis >= 0 && axis < Index(s.size()),
        std::string(op) + ": axis " + std::to_string(axis) +
            " out of range for " + shape_str(s));
  AxisView v{1, s[axis], 1};
  for (Index i = 0; i < axis; ++i) v.outer *= s[i];
  for (Index i = axis + 1; i < Index(s.size()); ++i) v.inner *= s[i];
  return v;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](const Arr& x, const Arr& y) { return Arr(x + y); },
      [](const Arr& g, const Arr&, const Arr&) { return g; },
      [](const Arr& g, const Arr&, const Arr&) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](const Arr& x, const Arr& y) { return Arr(x - y); },
      [](const Arr& g, const Arr&, const Arr&) { return g; },
      [](const Arr& g, const Arr&, const Arr&) { return Arr(-g); });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](const Arr& x, const Arr& y) { return Arr(x * y); },
      [](const Arr& g, const Arr&, const Arr& y) { return Arr(g * y); },
      [](const Arr& g, const Arr& x, const Arr&) { return Arr(g * x); });
}

Tensor scale(const Tensor& a, double c) {
  Arr out = a.arr() * c;
  Graph* g = pick_graph("scale", {&a});
  if (!g) return Tensor(a.shape(), std::move(out));
  return g->record("scale", a.shape(), std::move(out), {a},
                   [c](const Tensor& o, std::vector<Tensor>& in) {
                     accum_grad(in[0], Arr(o.grad() * c));
                   });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check(b.ndim() == 2, "matmul: rhs must be 2-D, got " + shape_str(b.shape()));
  check(a.ndim() >= 1, "matmul: lhs must have rank >= 1");
  check(a.last_dim() == b.shape()[0],
        "matmul: inner dimensions differ: " + shape_str(a.shape()) + " vs " +
            shape_str(b.shape()));
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(b.shape()[1]);
  const Index rows = a.lead_dim(), k = a.last_dim(), m = b.shape()[1];
  Arr out(rows * m);
  Eigen::Map<MatRM>(out.data(), rows, m).noalias() = a.mat() * b.mat();
  Graph* g = pick_graph("matmul", {&a, &b});
  if (!g) return Tensor(out_shape, std::move(out));
  return g->record(
      "matmul", out_shape, std::move(out), {a, b},
      [rows, k, m](const Tensor& o, std::vector<Tensor>& in) {
        Eigen::Map<const MatRM> go(o.grad().data(), rows, m);
        if (in[0].tracked()) {
          Arr ga(rows * k);
          Eigen::Map<MatRM>(ga.data(), rows, k).noalias() =
              go * in[1].mat().transpose();
          accum_grad(in[0], ga);
        }
        if (in[1].tracked()) {
          Arr gb(k * m);
          Eigen::Map<MatRM>(gb.data(), k, m).noalias() =
              in[0].mat().transpose() * go;
          accum_grad(in[1], gb);
        }
      });
}

Tensor transpose(const Tensor& a) {
  check(a.ndim() == 2, "transpose: expected 2-D, got " + shape_str(a.shape()));
  const Index r = a.shape()[0], c = a.shape()[1];
  Arr out(r * c);
  Eigen::Map<MatRM>(out.data(), c, r) = a.mat().transpose();
  Graph* g = pick_graph("transpose", {&a});
  if (!g) return Tensor({c, r}, std::move(out));
  return g->record("transpose", {c, r}, std::move(out), {a},
                   [r, c](const Tensor& o, std::vector<Tensor>& in) {
                     Arr ga(r * c);
                     Eigen::Map<MatRM>(ga.data(), r, c) =
                         Eigen::Map<const MatRM>(o.grad().data(), c, r).transpose();
                     accum_grad(in[0], ga);
                   });
}

Tensor reshape(const Tensor& a, Shape shape) {
  check(numel(shape) == a.numel(), "reshape: " + shape_str(a.shape()) +
                                       " to " + shape_str(shape) +
                                       " changes element count");
  Arr out = a.arr();
  Graph* g = pick_graph("reshape", {&a});
  if (!g) return Tensor(std::move(shape), std::move(out));
  return g->record("reshape", std::move(shape), std::move(out), {a},
                   [](const Tensor& o, std::vector<Tensor>& in) {
                     accum_grad(in[0], Arr(o.grad()));
                   });
}

Tensor concat(const std::vector<Tensor>& parts, Index axis) {
  check(!parts.empty(), "concat: no inputs");
  const Shape& s0 = parts[0].shape();
  Shape out_shape = s0;
  Index total = 0;
  for (const Tensor& p : parts) {
    check(p.ndim() == Index(s0.size()),
          "concat: rank mismatch " + shape_str(p.shape()) + " vs " + shape_str(s0));
    for (Index i = 0; i < Index(s0.size()); ++i)
      check(i == axis || p.shape()[i] == s0[i],
            "concat: shape mismatch " + shape_str(p.shape()) + " vs " +
                shape_str(s0) + " off axis " + std::to_string(axis));
    total += p.shape()[axis];
  }
  out_shape[axis] = total;
  const AxisView v = axis_view("concat", out_shape, axis);
  Arr out(numel(out_shape));
  Index off = 0;
  for (const Tensor& p : parts) {
    const Index n_p = p.shape()[axis];
    const Index block = n_p * v.inner;
    for (Index o = 0; o < v.outer; ++o)
      out.segment(o * total * v.inner + off * v.inner, block) =
          p.arr().segment(o * block, block);
    off += n_p;
  }
  std::initializer_list<const Tensor*> dummy;
  Graph* g = nullptr;
  for (const Tensor& p : parts) {
    if (!p.tracked()) continue;
    check(g == nullptr || g == p.graph(), "concat: inputs belong to different graphs");
    g = p.graph();
  }
  (void)dummy;
  if (!g) return Tensor(out_shape, std::move(out));
  return g->record(
      "concat", out_shape, std::move(out), parts,
      [v, total, axis](const Tensor& o, std::vector<Tensor>& in) {
        const Arr go = o.grad();
        Index off = 0;
        for (Tensor& p : in) {
          const Index n_p = p.shape()[axis];
          const Index block = n_p * v.inner;
          if (p.tracked()) {
            Arr gp(p.numel());
            for (Index ou = 0; ou < v.outer; ++ou)
              gp.segment(ou * block, block) =
                  go.segment(ou * total * v.inner + off * v.inner, block);
            accum_grad(p, gp);
          }
          off += n_p;
        }
      });
}

Tensor slice(const Tensor& a, Index axis, Index start, Index stop) {
  const AxisView v = axis_view("slice", a.shape(), axis);
  check(0 <= start && start < stop && stop <= v.n,
        "slice: range [" + std::to_string(start) + "," + std::to_string(stop) +
            ") invalid for " + shape_str(a.shape()) + " axis " + std::to_string(axis));
  Shape out_shape = a.shape();
  const Index n_out = stop - start;
  out_shape[axis] = n_out;
  Arr out(numel(out_shape));
  for (Index o = 0; o < v.outer; ++o)
    out.segment(o * n_out * v.inner, n_out * v.inner) =
        a.arr().segment(o * v.n * v.inner + start * v.inner, n_out * v.inner);
  Graph* g = pick_graph("slice", {&a});
  if (!g) return Tensor(out_shape, std::move(out));
  return g->record(
      "slice", out_shape, std::move(out), {a},
      [v, start, n_out](const Tensor& o, std::vector<Tensor>& in) {
        if (!in[0].tracked()) return;
        Arr ga = Arr::Zero(in[0].numel());
        const Arr go = o.grad();
        for (Index ou = 0; ou < v.outer; ++ou)
          ga.segment(ou * v.n * v.inner + start * v.inner, n_out * v.inner) =
              go.segment(ou * n_out * v.inner, n_out * v.inner);
        accum_grad(in[0], ga);
      });
}

Tensor sum(const Tensor& a) {
  Arr out(1);
  out[0] = a.arr().sum();
  Graph* g = pick_graph("sum", {&a});
  if (!g) return Tensor({1}, std::move(out));
  return g->record("sum", {1}, std::move(out), {a},
                   [](const Tensor& o, std::vector<Tensor>& in) {
                     accum_grad(in[0], Arr(Arr::Constant(in[0].numel(), o.grad()[0])));
                   });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / double(a.numel())); }

Tensor relu(const Tensor& a) {
  return unary_op(
      "relu", a, [](const Arr& x) { return Arr(x.max(0.0)); },
      [](const Arr& g, const Arr& x, const Arr&) {
        return Arr(g * (x > 0.0).cast<double>());
      });
}

Tensor tanh(const Tensor& a) {
  return unary_op(
      "tanh", a, [](const Arr& x) { return Arr(x.tanh()); },
      [](const Arr& g, const Arr&, const Arr& y) {
        return Arr(g * (1.0 - y.square()));
      });
}

Tensor gelu(const Tensor& a) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  auto normal_cdf = [=](const Arr& x) {
    return Arr(x.unaryExpr([=](double v) { return 0.5 * (1.0 + std::erf(v * inv_sqrt2)); }));
  };
  return unary_op(
      "gelu", a,
      [=](const Arr& x) { return Arr(x * normal_cdf(x)); },
      [=](const Arr& g, const Arr& x, const Arr&) {
        const Arr pdf = inv_sqrt2pi * (-0.5 * x.square()).exp();
        return Arr(g * (normal_cdf(x) + x * pdf));
      });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      "exp", a, [](const Arr& x) { return Arr(x.exp()); },
      [](const Arr& g, const Arr&, const Arr& y) { return Arr(g * y); });
}

Tensor log(const Tensor& a) {
  check((a.arr() > 0.0).all(), "log: non-positive input");
  return unary_op(
      "log", a, [](const Arr& x) { return Arr(x.log()); },
      [](const Arr& g, const Arr& x, const Arr&) { return Arr(g / x); });
}

Tensor softmax(const Tensor& a) {
  const Index inner = a.last_dim(), outer = a.lead_dim();
  Arr out(a.numel());
  for (Index o = 0; o < outer; ++o) {
    Arr row = a.arr().segment(o * inner, inner);
    row -= row.maxCoeff();
    row = row.exp();
    out.segment(o * inner, inner) = row / row.sum();
  }
  Graph* g = pick_graph("softmax", {&a});
  if (!g) return Tensor(a.shape(), std::move(out));
  return g->record(
      "softmax", a.shape(), std::move(out), {a},
      [outer, inner](const Tensor& o, std::vector<Tensor>& in) {
        const Arr y = o.arr(), go = o.grad();
        Arr ga(y.size());
        for (Index ou = 0; ou < outer; ++ou) {
          const Arr yr = y.segment(ou * inner, inner);
          const Arr gr = go.segment(ou * inner, inner);
          ga.segment(ou * inner, inner) = yr * (gr - (gr * yr).sum());
        }
        accum_grad(in[0], ga);
      });
}

Tensor layer_norm(const Tensor& a, double eps) {
  const Index inner = a.last_dim(), outer = a.lead_dim();
  Arr out(a.numel());
  Arr inv_std(outer);
  for (Index o = 0; o < outer; ++o) {
    const Arr row = a.arr().segment(o * inner, inner);
    const double mu = row.mean();
    const double var = (row - mu).square().mean();
    inv_std[o] = 1.0 / std::sqrt(var + eps);
    out.segment(o * inner, inner) = (row - mu) * inv_std[o];
  }
  Graph* g = pick_graph("layer_norm", {&a});
  if (!g) return Tensor(a.shape(), std::move(out));
  return g->record(
      "layer_norm", a.shape(), std::move(out), {a},
      [outer, inner, inv_std](const Tensor& o, std::vector<Tensor>& in) {
        const Arr y = o.arr(), go = o.grad();
        Arr ga(y.size());
        for (Index ou = 0; ou < outer; ++ou) {
          const Arr yr = y.segment(ou * inner, inner);
          const Arr gr = go.segment(ou * inner, inner);
          ga.segment(ou * inner, inner) =
              inv_std[ou] * (gr - gr.mean() - yr * (gr * yr).mean());
        }
        accum_grad(in[0], ga);
      });
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  check(pred.shape() == target.shape(),
        "mse_loss: shapes differ: " + shape_str(pred.shape()) + " vs " +
            shape_str(target.shape()));
  const double n = double(pred.numel());
  Arr out(1);
  out[0] = (pred.arr() - target.arr()).square().mean();
  Graph* g = pick_graph("mse_loss", {&pred, &target});
  if (!g) return Tensor({1}, std::move(out));
  return g->record("mse_loss", {1}, std::move(out), {pred, target},
                   [n](const Tensor& o, std::vector<Tensor>& in) {
                     const double go = o.grad()[0];
                     const Arr diff = in[0].arr() - in[1].arr();
                     if (in[0].tracked()) accum_grad(in[0], Arr(go * 2.0 / n * diff));
                     if (in[1].tracked()) accum_grad(in[1], Arr(-go * 2.0 / n * diff));
                   });
}

Tensor cross_entropy_loss(const Tensor& logits, const Tensor& targets) {
  check(logits.shape() == targets.shape(),
        "cross_entropy_loss: shapes differ: " + shape_str(logits.shape()) +
            " vs " + shape_str(targets.shape()));
  const Index inner = logits.last_dim(), outer = logits.lead_dim();
  Arr probs(logits.numel());
  double total = 0.0;
  for (Index o = 0; o < outer; ++o) {
    const Arr x = logits.arr().segment(o * inner, inner);
    const Arr t = targets.arr().segment(o * inner, inner);
    const double m = x.maxCoeff();
    const Arr e = (x - m).exp();
    const double z = e.sum();
    probs.segment(o * inner, inner) = e / z;
    total += m + std::log(z) - (t * x).sum();
  }
  Arr out(1);
  out[0] = total / double(outer);
  Graph* g = pick_graph("cross_entropy_loss", {&logits, &targets});
  if (!g) return Tensor({1}, std::move(out));
  return g->record(
      "cross_entropy_loss", {1}, std::move(out), {logits, targets},
      [outer, inner, probs](const Tensor& o, std::vector<Tensor>& in) {
        const double go = o.grad()[0] / double(outer);
        if (in[0].tracked())
          accum_grad(in[0], Arr(go * (probs - in[1].arr())));
        if (in[1].tracked()) {
          // d/dt of (lse - sum t.x) is -x.
          accum_grad(in[1], Arr(-go * in[0].arr()));
        }
      });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  check(!rows.empty(), "stack_rows: no inputs");
  std::vector<Tensor> shaped;
  shaped.reserve(rows.size());
  for (const Tensor& r : rows) {
    check(r.ndim() == 1, "stack_rows: expected 1-D rows, got " + shape_str(r.shape()));
    shaped.push_back(reshape(r, {1, r.numel()}));
  }
  return concat(shaped, 0);
}

Tensor set_row(const Tensor& m, Index row, const Tensor& value) {
  check(m.ndim() == 2, "set_row: expected 2-D, got " + shape_str(m.shape()));
  const Index n = m.shape()[0];
  check(row >= 0 && row < n, "set_row: row out of range");
  Tensor mid = reshape(value, {1, m.shape()[1]});
  std::vector<Tensor> parts;
  if (row > 0) parts.push_back(slice(m, 0, 0, row));
  parts.push_back(mid);
  if (row + 1 < n) parts.push_back(slice(m, 0, row + 1, n));
  return concat(parts, 0);
}

}  // namespace icll
