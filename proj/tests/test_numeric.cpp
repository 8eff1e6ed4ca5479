#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "icll/ops.hpp"
#include "icll/optim.hpp"
#include "icll/rng.hpp"

#include <cmath>

using namespace icll;

namespace {

Tensor random_tensor(Rng& rng, const Shape& s, double scale = 1.0) {
  Arr a(numel(s));
  for (Index i = 0; i < a.size(); ++i) a[i] = scale * rng.normal();
  return Tensor(s, std::move(a));
}

}  // namespace

TEST_CASE("matmul identity returns operand") {
  Rng rng(1);
  for (Index k : {1, 2, 5}) {
    Tensor a = random_tensor(rng, {3, k});
    Tensor id = Tensor::from_mat(Mat::Identity(3, 3));
    Tensor out = matmul(id, a);
    CHECK((out.mat() - a.mat()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("softmax of zeros is uniform") {
  Tensor s = softmax(Tensor::zeros({3}));
  for (Index i = 0; i < 3; ++i) CHECK(s.arr()[i] == doctest::Approx(1.0 / 3).epsilon(1e-15));
}

TEST_CASE("layer_norm of a constant vector is zero") {
  Tensor x = Tensor::full({5}, 3.7);
  Tensor y = layer_norm(x);
  CHECK(y.arr().abs().maxCoeff() == 0.0);
  CHECK(y.arr().isFinite().all());
}

TEST_CASE("softmax rows sum to one and cross-entropy is nonnegative") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Index rows = rng.uniform_int(1, 6), cols = rng.uniform_int(1, 9);
    Tensor x = random_tensor(rng, {rows, cols}, 3.0);
    Tensor s = softmax(x);
    for (Index r = 0; r < rows; ++r) {
      const double rowsum = s.arr().segment(r * cols, cols).sum();
      CHECK(std::abs(rowsum - 1.0) <= 1e-12);
    }
    // One-hot targets drawn at random.
    Tensor t = Tensor::zeros({rows, cols});
    for (Index r = 0; r < rows; ++r)
      t.data()[r * cols + rng.uniform_int(0, cols - 1)] = 1.0;
    CHECK(cross_entropy_loss(x, t).item() >= 0.0);
  }
}

TEST_CASE("backward of x squared") {
  Graph g;
  Tensor x = Tensor::scalar(3.0);
  g.watch(x);
  Tensor loss = mul(x, x);
  g.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("backward of sum(matmul(A,B)) gives ones * B^T") {
  Rng rng(3);
  Tensor a = random_tensor(rng, {3, 4});
  Tensor b = random_tensor(rng, {4, 2});
  Graph g;
  g.watch(a);
  Tensor loss = sum(matmul(a, b));
  g.backward(loss);
  Mat expected = Mat::Ones(3, 2) * b.mat().transpose();
  Eigen::Map<const MatRM> ga(a.grad().data(), 3, 4);
  CHECK((ga - expected).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("backward twice on one graph is rejected") {
  Graph g;
  Tensor x = Tensor::scalar(2.0);
  g.watch(x);
  Tensor loss = mul(x, x);
  g.backward(loss);
  CHECK_THROWS(g.backward(loss));
}

TEST_CASE("backward requires scalar loss") {
  Graph g;
  Tensor x = Tensor::zeros({3});
  g.watch(x);
  Tensor y = relu(x);
  CHECK_THROWS(g.backward(y));
}

TEST_CASE("shape errors name the op and shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 5});
  try {
    matmul(a, b);
    FAIL("expected failure");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4,5]") != std::string::npos);
  }
  CHECK_THROWS(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})));
  CHECK_THROWS(slice(a, 1, 2, 5));
  CHECK_THROWS(log(Tensor::scalar(-1.0)));
}

// Finite-difference checks: the oracle for all backward implementations.

TEST_CASE("finite_diff on linear function is exact") {
  Rng rng(4);
  Tensor x = random_tensor(rng, {7});
  const double err = finite_diff_check(
      [](std::vector<Tensor>& in) { return sum(in[0]); }, {x});
  CHECK(err <= 1e-8);
}

TEST_CASE("finite_diff on softmax cross-entropy") {
  Rng rng(5);
  Tensor x = random_tensor(rng, {4, 6});
  Tensor t = Tensor::zeros({4, 6});
  for (Index r = 0; r < 4; ++r) t.data()[r * 6 + rng.uniform_int(0, 5)] = 1.0;
  const double err = finite_diff_check(
      [&](std::vector<Tensor>& in) { return cross_entropy_loss(in[0], t); }, {x});
  CHECK(err <= 1e-4);
}

TEST_CASE("finite_diff on mse of Wx vs y, w.r.t. W") {
  Rng rng(6);
  Tensor w = random_tensor(rng, {3, 4});
  Tensor x = random_tensor(rng, {5, 3});
  Tensor y = random_tensor(rng, {5, 4});
  const double err = finite_diff_check(
      [&](std::vector<Tensor>& in) { return mse_loss(matmul(x, in[0]), y); }, {w});
  CHECK(err <= 1e-6);
}

TEST_CASE("every differentiable op passes finite differences on random shapes") {
  Rng rng(7);
  auto shape3 = [&] {
    return Shape{rng.uniform_int(1, 4), rng.uniform_int(1, 8), rng.uniform_int(1, 8)};
  };

  for (int trial = 0; trial < 3; ++trial) {
    const Shape s = shape3();
    Tensor a = random_tensor(rng, s);
    Tensor b = random_tensor(rng, s);
    Tensor suffix = random_tensor(rng, {s[1], s[2]});
    Tensor scalar_t = random_tensor(rng, {1});
    const Index k = s[2], m = rng.uniform_int(1, 6);
    Tensor w = random_tensor(rng, {k, m});

    auto fd = [&](const char* what, const TensorFn& f, std::vector<Tensor> in,
                  double tol = 1e-4) {
      const double err = finite_diff_check(f, std::move(in));
      INFO(what);
      CHECK(err <= tol);
    };

    fd("add", [&](std::vector<Tensor>& in) { return sum(mul(add(in[0], in[1]), add(in[0], in[1]))); }, {a, b});
    fd("add suffix", [&](std::vector<Tensor>& in) { return sum(mul(add(in[0], in[1]), add(in[0], in[1]))); }, {a, suffix});
    fd("add scalar", [&](std::vector<Tensor>& in) { return sum(mul(add(in[0], in[1]), add(in[0], in[1]))); }, {a, scalar_t});
    fd("sub", [&](std::vector<Tensor>& in) { return sum(mul(sub(in[0], in[1]), sub(in[0], in[1]))); }, {a, suffix});
    fd("mul", [&](std::vector<Tensor>& in) { return sum(mul(in[0], in[1])); }, {a, b});
    fd("mul suffix", [&](std::vector<Tensor>& in) { return sum(mul(mul(in[0], in[1]), mul(in[0], in[1]))); }, {a, suffix});
    fd("scale", [&](std::vector<Tensor>& in) { return sum(mul(scale(in[0], -1.7), scale(in[0], -1.7))); }, {a});
    fd("matmul", [&](std::vector<Tensor>& in) { return sum(mul(matmul(in[0], in[1]), matmul(in[0], in[1]))); }, {a, w});
    fd("transpose", [&](std::vector<Tensor>& in) {
      Tensor t2 = reshape(in[0], {s[0] * s[1], s[2]});
      return sum(mul(transpose(t2), transpose(t2)));
    }, {a});
    fd("reshape", [&](std::vector<Tensor>& in) {
      Tensor r = reshape(in[0], {s[2], s[0] * s[1]});
      return sum(mul(r, r));
    }, {a});
    fd("concat", [&](std::vector<Tensor>& in) {
      Tensor c = concat({in[0], in[1]}, 1);
      return sum(mul(c, c));
    }, {a, b});
    fd("slice", [&](std::vector<Tensor>& in) {
      Tensor sl = slice(in[0], 2, 0, std::max<Index>(1, s[2] / 2));
      return sum(mul(sl, sl));
    }, {a});
    fd("mean", [&](std::vector<Tensor>& in) { return mean(mul(in[0], in[0])); }, {a});
    fd("relu", [&](std::vector<Tensor>& in) { return sum(mul(relu(in[0]), relu(in[0]))); }, {a});
    fd("tanh", [&](std::vector<Tensor>& in) { return sum(mul(tanh(in[0]), tanh(in[0]))); }, {a});
    fd("gelu", [&](std::vector<Tensor>& in) { return sum(mul(gelu(in[0]), gelu(in[0]))); }, {a});
    fd("exp", [&](std::vector<Tensor>& in) { return sum(exp(scale(in[0], 0.3))); }, {a});
    fd("log", [&](std::vector<Tensor>& in) {
      Tensor pos = add(mul(in[0], in[0]), Tensor::scalar(0.5));
      return sum(log(pos));
    }, {a});
    fd("softmax", [&](std::vector<Tensor>& in) { return sum(mul(softmax(in[0]), b)); }, {a});
    fd("layer_norm", [&](std::vector<Tensor>& in) { return sum(mul(layer_norm(in[0]), b)); }, {a});
    fd("mse", [&](std::vector<Tensor>& in) { return mse_loss(in[0], in[1]); }, {a, b});
    fd("cross_entropy", [&](std::vector<Tensor>& in) { return cross_entropy_loss(in[0], softmax(b).detached()); }, {a});
  }
}

TEST_CASE("composite graph matches finite differences") {
  Rng rng(8);
  Tensor w1 = random_tensor(rng, {6, 5}, 0.5);
  Tensor w2 = random_tensor(rng, {5, 3}, 0.5);
  Tensor x = random_tensor(rng, {4, 6});
  Tensor target = random_tensor(rng, {4, 3});
  const double err = finite_diff_check(
      [&](std::vector<Tensor>& in) {
        Tensor h = gelu(matmul(x, in[0]));
        Tensor out = matmul(layer_norm(h), in[1]);
        return mse_loss(out, target);
      },
      {w1, w2});
  CHECK(err <= 1e-4);
}

// Adam.

TEST_CASE("adam first step moves each coordinate by about lr") {
  ParamStore params;
  Tensor w = Tensor::zeros({4});
  params.add("w", w);
  Graph g;
  params.watch_all(g);
  params.at("w").grad() = Arr::Constant(4, 0.0);
  params.at("w").grad()[0] = 5.0;
  params.at("w").grad()[1] = -0.3;
  params.at("w").grad()[2] = 1e3;
  params.at("w").grad()[3] = 0.01;
  AdamConfig cfg;
  cfg.lr = 0.1;
  AdamState adam(cfg, params);
  adam.step(params);
  params.unwatch_all();
  for (Index i = 0; i < 4; ++i) {
    const double delta = std::abs(params.at("w").arr()[i]);
    CHECK(delta == doctest::Approx(cfg.lr).epsilon(1e-4));
  }
  CHECK(adam.step_count() == 1);
}

TEST_CASE("adam with zero gradient leaves fresh parameters unchanged") {
  ParamStore params;
  params.add("w", Tensor::full({3}, 1.5));
  Graph g;
  params.watch_all(g);
  params.zero_grad();
  AdamState adam(AdamConfig{}, params);
  adam.step(params);
  params.unwatch_all();
  CHECK((params.at("w").arr() == 1.5).all());
}

TEST_CASE("adam on w^2 from w=1 decreases for two steps, matching the recurrence") {
  // Independent scalar recurrence of Adam with bias correction.
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double w_ref = 1.0, m = 0.0, v = 0.0;
  std::vector<double> expected;
  for (int t = 1; t <= 2; ++t) {
    const double grad = 2.0 * w_ref;
    m = b1 * m + (1 - b1) * grad;
    v = b2 * v + (1 - b2) * grad * grad;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    w_ref -= lr * mh / (std::sqrt(vh) + eps);
    expected.push_back(w_ref);
  }

  ParamStore params;
  params.add("w", Tensor::scalar(1.0));
  AdamConfig cfg;
  cfg.lr = lr;
  AdamState adam(cfg, params);
  double prev = 1.0;
  for (int t = 0; t < 2; ++t) {
    Graph g;
    params.watch_all(g);
    Tensor& w = params.at("w");
    Tensor loss = mul(w, w);
    g.backward(loss);
    adam.step(params);
    params.unwatch_all();
    params.zero_grad();
    const double now = params.at("w").item();
    CHECK(now < prev);
    CHECK(now == doctest::Approx(expected[size_t(t)]).epsilon(1e-12));
    prev = now;
  }
}

TEST_CASE("adam rejects non-finite gradients") {
  ParamStore params;
  params.add("w", Tensor::scalar(1.0));
  Graph g;
  params.watch_all(g);
  params.at("w").grad()[0] = std::numeric_limits<double>::quiet_NaN();
  AdamState adam(AdamConfig{}, params);
  CHECK_THROWS(adam.step(params));
}

TEST_CASE("gradient clipping caps the global norm") {
  ParamStore params;
  params.add("a", Tensor::zeros({3}));
  params.add("b", Tensor::zeros({2}));
  Graph g;
  params.watch_all(g);
  params.at("a").grad() = Arr::Constant(3, 3.0);
  params.at("b").grad() = Arr::Constant(2, 4.0);
  const double pre = clip_global_norm(params, 1.0);
  CHECK(pre == doctest::Approx(std::sqrt(9.0 * 3 + 16.0 * 2)));
  double sq = params.at("a").grad().square().sum() + params.at("b").grad().square().sum();
  CHECK(std::sqrt(sq) == doctest::Approx(1.0).epsilon(1e-12));
}

// RNG.

TEST_CASE("rng streams are deterministic and order-independent") {
  Rng a = Rng::derive(42, {7, 3});
  Rng b = Rng::derive(42, {7, 3});
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng c = Rng::derive(42, {7, 4});
  Rng d = Rng::derive(42, {7, 3});
  bool all_equal = true;
  for (int i = 0; i < 16; ++i) all_equal &= (c.next_u64() == d.next_u64());
  CHECK(!all_equal);
}

TEST_CASE("rng normal moments are sane") {
  Rng rng(11);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  CHECK(std::abs(s / n) < 0.01);
  CHECK(std::abs(s2 / n - 1.0) < 0.02);
}

TEST_CASE("ops are pure eager computations when untracked") {
  Rng rng(12);
  Tensor a = random_tensor(rng, {3, 3});
  Tensor out = softmax(a);
  CHECK(!out.tracked());
  CHECK(out.arr().isFinite().all());
}
