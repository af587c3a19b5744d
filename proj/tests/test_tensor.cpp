#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "errors.hpp"
#include "optim.hpp"
#include "tensor.hpp"
#include "test_util.hpp"

using namespace bci;
using namespace bci::nn;
using testutil::finite_difference_max_err;
using testutil::random_vec;

TEST_CASE("conv1d identity kernel") {
  Graph g;
  Tensor x = g.constant({1, 4}, {1, 2, 3, 4});
  Tensor w = g.constant({1, 1, 1}, {1});
  Tensor b = g.constant({1}, {0});
  Tensor y = conv1d(x, w, b, 1, 0);
  CHECK(y.shape() == Shape{1, 4});
  CHECK(y.value() == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("conv1d edge kernel by hand") {
  Graph g;
  Tensor x = g.constant({1, 4}, {1, 2, 3, 4});
  Tensor w = g.constant({1, 1, 3}, {1, 0, -1});
  Tensor b = g.constant({1}, {0});
  Tensor y = conv1d(x, w, b, 1, 0);
  CHECK(y.value() == std::vector<double>{-2, -2});
}

TEST_CASE("conv1d stride and padding shapes") {
  Graph g;
  Tensor x = g.constant({2, 10}, std::vector<double>(20, 1.0));
  Tensor w = g.constant({3, 2, 3}, std::vector<double>(18, 0.5));
  Tensor b = g.constant({3}, {0, 0, 0});
  CHECK(conv1d(x, w, b, 1, 1).shape() == Shape{3, 10});
  CHECK(conv1d(x, w, b, 2, 1).shape() == Shape{3, 5});
  CHECK_THROWS_AS(conv1d(x, g.constant({1, 1, 3}, {1, 1, 1}), g.constant({1}, {0}), 1, 0),
                  Error);  // Cin mismatch
  Tensor short_x = g.constant({1, 2}, {1, 2});
  CHECK_THROWS_AS(conv1d(short_x, g.constant({1, 1, 3}, {1, 1, 1}), g.constant({1}, {0}), 1, 0),
                  Error);  // Lout < 1
}

TEST_CASE("conv1d gradients match finite differences") {
  Rng rng(7);
  const int cin = 3, len = 10, cout = 5, k = 3;
  std::vector<std::vector<double>> inputs = {
      random_vec(cin * len, rng), random_vec(cout * cin * k, rng), random_vec(cout, rng)};
  auto build = [&](Graph& g, const std::vector<std::vector<double>>& in, bool rg) {
    Tensor x = g.leaf({cin, len}, in[0], rg);
    Tensor w = g.leaf({cout, cin, k}, in[1], rg);
    Tensor b = g.leaf({cout}, in[2], rg);
    return std::tuple{x, w, b, sum(mul(conv1d(x, w, b, 1, 1), conv1d(x, w, b, 1, 1)))};
  };
  Graph g;
  auto [x, w, b, loss] = build(g, inputs, true);
  g.backward(loss);
  std::vector<std::vector<double>> analytic = {x.grad(), w.grad(), b.grad()};
  auto eval = [&](const std::vector<std::vector<double>>& in) {
    Graph gg;
    auto [xx, ww, bb, l] = build(gg, in, false);
    return l.value()[0];
  };
  CHECK(finite_difference_max_err(eval, inputs, analytic) < 1e-4);
}

TEST_CASE("conv1d gradient with stride 2") {
  Rng rng(11);
  const int cin = 2, len = 9, cout = 2, k = 3;
  std::vector<std::vector<double>> inputs = {
      random_vec(cin * len, rng), random_vec(cout * cin * k, rng), random_vec(cout, rng)};
  auto build = [&](Graph& g, const std::vector<std::vector<double>>& in, bool rg) {
    Tensor x = g.leaf({cin, len}, in[0], rg);
    Tensor w = g.leaf({cout, cin, k}, in[1], rg);
    Tensor b = g.leaf({cout}, in[2], rg);
    return std::tuple{x, w, b, sum(silu(conv1d(x, w, b, 2, 1)))};
  };
  Graph g;
  auto [x, w, b, loss] = build(g, inputs, true);
  g.backward(loss);
  std::vector<std::vector<double>> analytic = {x.grad(), w.grad(), b.grad()};
  auto eval = [&](const std::vector<std::vector<double>>& in) {
    Graph gg;
    auto [xx, ww, bb, l] = build(gg, in, false);
    return l.value()[0];
  };
  CHECK(finite_difference_max_err(eval, inputs, analytic) < 1e-4);
}

TEST_CASE("group_norm constant input becomes zero") {
  Graph g;
  Tensor x = g.constant({4, 6}, std::vector<double>(24, 3.7));
  Tensor gamma = g.constant({4}, {1, 1, 1, 1});
  Tensor beta = g.constant({4}, {0, 0, 0, 0});
  Tensor y = group_norm(x, 2, gamma, beta);
  for (double v : y.value()) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("group_norm normalizes each group") {
  Rng rng(3);
  Graph g;
  const int c = 4, len = 50, groups = 2;
  Tensor x = g.constant({c, len}, random_vec(c * len, rng, 5.0));
  Tensor gamma = g.constant({c}, {1, 1, 1, 1});
  Tensor beta = g.constant({c}, {0, 0, 0, 0});
  Tensor y = group_norm(x, groups, gamma, beta);
  const auto& v = y.value();
  const int gc = c / groups;
  for (int gi = 0; gi < groups; ++gi) {
    double mean = 0.0, var = 0.0;
    const int m = gc * len;
    for (int i = 0; i < m; ++i) mean += v[gi * m + i];
    mean /= m;
    for (int i = 0; i < m; ++i) var += (v[gi * m + i] - mean) * (v[gi * m + i] - mean);
    var /= m;
    CHECK(std::fabs(mean) < 1e-10);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("group_norm affine law") {
  Rng rng(5);
  Graph g;
  Tensor x = g.constant({2, 8}, random_vec(16, rng));
  Tensor ones = g.constant({2}, {1, 1});
  Tensor zeros = g.constant({2}, {0, 0});
  Tensor base = group_norm(x, 1, ones, zeros);
  Tensor scaled = group_norm(x, 1, g.constant({2}, {2, 2}), g.constant({2}, {3, 3}));
  for (size_t i = 0; i < base.value().size(); ++i) {
    CHECK(scaled.value()[i] == doctest::Approx(2.0 * base.value()[i] + 3.0).epsilon(1e-12));
  }
}

TEST_CASE("group_norm rejects indivisible groups") {
  Graph g;
  Tensor x = g.constant({3, 4}, std::vector<double>(12, 1.0));
  CHECK_THROWS_AS(group_norm(x, 2, g.constant({3}, {1, 1, 1}), g.constant({3}, {0, 0, 0})),
                  Error);
}

TEST_CASE("group_norm gradients") {
  Rng rng(13);
  const int c = 4, len = 6;
  std::vector<std::vector<double>> inputs = {random_vec(c * len, rng), random_vec(c, rng),
                                             random_vec(c, rng)};
  auto build = [&](Graph& g, const std::vector<std::vector<double>>& in, bool rg) {
    Tensor x = g.leaf({c, len}, in[0], rg);
    Tensor ga = g.leaf({c}, in[1], rg);
    Tensor be = g.leaf({c}, in[2], rg);
    return std::tuple{x, ga, be, sum(silu(group_norm(x, 2, ga, be)))};
  };
  Graph g;
  auto [x, ga, be, loss] = build(g, inputs, true);
  g.backward(loss);
  std::vector<std::vector<double>> analytic = {x.grad(), ga.grad(), be.grad()};
  auto eval = [&](const std::vector<std::vector<double>>& in) {
    Graph gg;
    auto [a, b2, c2, l] = build(gg, in, false);
    return l.value()[0];
  };
  CHECK(finite_difference_max_err(eval, inputs, analytic) < 1e-4);
}

TEST_CASE("linear identity and constant") {
  Graph g;
  Tensor x = g.constant({3}, {1, 2, 3});
  Tensor eye = g.constant({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor zero3 = g.constant({3}, {0, 0, 0});
  CHECK(linear(x, eye, zero3).value() == std::vector<double>{1, 2, 3});
  Tensor wzero = g.constant({2, 3}, std::vector<double>(6, 0.0));
  Tensor b = g.constant({2}, {5, 6});
  CHECK(linear(x, wzero, b).value() == std::vector<double>{5, 6});
  CHECK_THROWS_AS(linear(x, g.constant({2, 4}, std::vector<double>(8, 1.0)), b), Error);
}

TEST_CASE("linear gradients") {
  Rng rng(17);
  std::vector<std::vector<double>> inputs = {random_vec(4, rng), random_vec(12, rng),
                                             random_vec(3, rng)};
  auto build = [&](Graph& g, const std::vector<std::vector<double>>& in, bool rg) {
    Tensor x = g.leaf({4}, in[0], rg);
    Tensor w = g.leaf({3, 4}, in[1], rg);
    Tensor b = g.leaf({3}, in[2], rg);
    return std::tuple{x, w, b, sum(mul(linear(x, w, b), linear(x, w, b)))};
  };
  Graph g;
  auto [x, w, b, loss] = build(g, inputs, true);
  g.backward(loss);
  std::vector<std::vector<double>> analytic = {x.grad(), w.grad(), b.grad()};
  auto eval = [&](const std::vector<std::vector<double>>& in) {
    Graph gg;
    auto [a, b2, c2, l] = build(gg, in, false);
    return l.value()[0];
  };
  CHECK(finite_difference_max_err(eval, inputs, analytic) < 1e-4);
}

TEST_CASE("silu values") {
  Graph g;
  Tensor x = g.constant({3}, {0.0, 20.0, -20.0});
  Tensor y = silu(x);
  CHECK(y.value()[0] == 0.0);
  CHECK(y.value()[1] == doctest::Approx(20.0).epsilon(1e-6));
  CHECK(std::fabs(y.value()[2]) < 1e-6);
}

TEST_CASE("dropout identity paths") {
  Graph g;
  Rng rng(1);
  Tensor x = g.constant({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor y0 = dropout(x, 0.0, rng, true);
  Tensor y1 = dropout(x, 0.9, rng, false);
  CHECK(y0.value() == x.value());
  CHECK(y1.value() == x.value());
  CHECK_THROWS_AS(dropout(x, 1.0, rng, true), Error);
  CHECK_THROWS_AS(dropout(x, -0.1, rng, true), Error);
}

TEST_CASE("dropout preserves expectation") {
  const size_t n = 100000;
  Graph g;
  Rng rng(42);
  Tensor x = g.constant({static_cast<int>(n)}, std::vector<double>(n, 1.0));
  Tensor y = dropout(x, 0.5, rng, true);
  double mean = 0.0;
  for (double v : y.value()) mean += v;
  mean /= static_cast<double>(n);
  CHECK(std::fabs(mean - 1.0) < 0.02);
}

TEST_CASE("dropout gradient scales by the mask") {
  Graph g;
  Rng rng(9);
  Tensor x = g.leaf({100}, std::vector<double>(100, 2.0), true);
  Tensor y = dropout(x, 0.3, rng, true);
  g.backward(sum(y));
  const auto& yv = y.value();
  const auto& gx = x.grad();
  for (size_t i = 0; i < yv.size(); ++i) {
    const double expected = yv[i] == 0.0 ? 0.0 : 1.0 / 0.7;
    CHECK(gx[i] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("softmax cross entropy values") {
  Graph g;
  Tensor uniform = g.leaf({4}, {0.5, 0.5, 0.5, 0.5}, true);
  CHECK(softmax_cross_entropy(uniform, 2).value()[0] ==
        doctest::Approx(std::log(4.0)).epsilon(1e-9));
  Tensor confident = g.constant({4}, {100, 0, 0, 0});
  CHECK(softmax_cross_entropy(confident, 0).value()[0] < 1e-6);
  Tensor wrong = g.constant({4}, {0, 100, 0, 0});
  CHECK(softmax_cross_entropy(wrong, 0).value()[0] == doctest::Approx(100.0).epsilon(1e-6));
  CHECK_THROWS_AS(softmax_cross_entropy(uniform, 4), Error);
  CHECK_THROWS_AS(softmax_cross_entropy(uniform, -1), Error);
}

TEST_CASE("softmax cross entropy gradient") {
  Rng rng(23);
  std::vector<std::vector<double>> inputs = {random_vec(5, rng)};
  auto eval = [&](const std::vector<std::vector<double>>& in) {
    Graph gg;
    return softmax_cross_entropy(gg.leaf({5}, in[0], false), 3).value()[0];
  };
  Graph g;
  Tensor x = g.leaf({5}, inputs[0], true);
  g.backward(softmax_cross_entropy(x, 3));
  CHECK(finite_difference_max_err(eval, inputs, {x.grad()}) < 1e-4);
}

TEST_CASE("elementwise and reduction op gradients") {
  Rng rng(29);
  const int c = 3, len = 4;
  std::vector<std::vector<double>> inputs = {random_vec(c * len, rng), random_vec(c, rng),
                                             random_vec(c * len, rng)};
  auto build = [&](Graph& g, const std::vector<std::vector<double>>& in, bool rg) {
    Tensor x = g.leaf({c, len}, in[0], rg);
    Tensor v = g.leaf({c}, in[1], rg);
    Tensor w = g.leaf({c, len}, in[2], rg);
    Tensor up = upsample_nearest2(add_channel_bias(x, v));
    Tensor cat = concat_channels(up, upsample_nearest2(w));
    Tensor pooled = global_avg_pool(cat);
    Tensor a = mse(x, w);
    Tensor b = sum(mul(pooled, pooled));
    std::vector<Tensor> terms = {a, b};
    std::vector<double> weights = {0.5, 2.0};
    return std::tuple{x, v, w, weighted_sum(terms, weights)};
  };
  Graph g;
  auto [x, v, w, loss] = build(g, inputs, true);
  g.backward(loss);
  std::vector<std::vector<double>> analytic = {x.grad(), v.grad(), w.grad()};
  auto eval = [&](const std::vector<std::vector<double>>& in) {
    Graph gg;
    auto [a, b2, c2, l] = build(gg, in, false);
    return l.value()[0];
  };
  CHECK(finite_difference_max_err(eval, inputs, analytic) < 1e-4);
}

TEST_CASE("matrix_row selects and routes gradient") {
  Graph g;
  Tensor m = g.leaf({3, 2}, {1, 2, 3, 4, 5, 6}, true);
  Tensor r = matrix_row(m, 1);
  CHECK(r.value() == std::vector<double>{3, 4});
  g.backward(sum(mul(r, r)));
  CHECK(m.grad() == std::vector<double>{0, 0, 6, 8, 0, 0});
  CHECK_THROWS_AS(matrix_row(m, 3), Error);
}

TEST_CASE("backward of sum gives ones, of half square sum gives x") {
  Graph g;
  std::vector<double> data = {1.5, -2.0, 0.25};
  Tensor x = g.leaf({3}, data, true);
  g.backward(sum(x));
  CHECK(x.grad() == std::vector<double>{1, 1, 1});

  Graph g2;
  Tensor x2 = g2.leaf({3}, data, true);
  std::vector<Tensor> terms = {sum(mul(x2, x2))};
  std::vector<double> half = {0.5};
  g2.backward(weighted_sum(terms, half));
  for (int i = 0; i < 3; ++i) CHECK(x2.grad()[i] == doctest::Approx(data[i]).epsilon(1e-12));
}

TEST_CASE("backward contract errors") {
  Graph g;
  Tensor x = g.leaf({3}, {1, 2, 3}, true);
  Tensor y = silu(x);
  CHECK_THROWS_AS(g.backward(y), Error);  // non-scalar
  Tensor loss = sum(y);
  g.backward(loss);
  CHECK_THROWS_AS(g.backward(loss), Error);  // repeated without reset
  g.reset();
  g.backward(loss);  // allowed after reset
  Graph g2;
  Tensor c = g2.constant({1}, {2.0});
  CHECK_THROWS_AS(g2.backward(c), Error);  // no differentiable leaf
}

TEST_CASE("composite network gradient check") {
  // conv -> group_norm -> silu -> pool -> linear -> cross entropy
  Rng rng(31);
  const int cin = 2, len = 12, cout = 4, k = 3, classes = 3;
  std::vector<std::vector<double>> inputs = {
      random_vec(cin * len, rng),       random_vec(cout * cin * k, rng),
      random_vec(cout, rng),            random_vec(cout, rng),
      random_vec(cout, rng),            random_vec(classes * cout, rng),
      random_vec(classes, rng)};
  auto build = [&](Graph& g, const std::vector<std::vector<double>>& in, bool rg) {
    Tensor x = g.leaf({cin, len}, in[0], rg);
    Tensor w = g.leaf({cout, cin, k}, in[1], rg);
    Tensor b = g.leaf({cout}, in[2], rg);
    Tensor ga = g.leaf({cout}, in[3], rg);
    Tensor be = g.leaf({cout}, in[4], rg);
    Tensor cw = g.leaf({classes, cout}, in[5], rg);
    Tensor cb = g.leaf({classes}, in[6], rg);
    Tensor h = silu(group_norm(conv1d(x, w, b, 1, 1), 2, ga, be));
    Tensor logits = linear(global_avg_pool(h), cw, cb);
    std::vector<Tensor> ts = {x, w, b, ga, be, cw, cb};
    return std::pair{ts, softmax_cross_entropy(logits, 1)};
  };
  Graph g;
  auto [ts, loss] = build(g, inputs, true);
  g.backward(loss);
  std::vector<std::vector<double>> analytic;
  for (const Tensor& t : ts) analytic.push_back(t.grad());
  auto eval = [&](const std::vector<std::vector<double>>& in) {
    Graph gg;
    return build(gg, in, false).second.value()[0];
  };
  CHECK(finite_difference_max_err(eval, inputs, analytic) < 1e-3);
}

TEST_CASE("non-finite outputs raise naming the op") {
  Graph g;
  Tensor x = g.constant({1}, {1e200});
  try {
    Tensor y = mul(x, x);
    FAIL("expected numeric error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::numeric);
    CHECK(std::string(e.what()).find("mul") != std::string::npos);
  }
}

TEST_CASE("forward passes are deterministic") {
  auto run = [] {
    Rng rng(77);
    Graph g;
    Tensor x = g.constant({3, 20}, random_vec(60, rng));
    Tensor w = g.constant({2, 3, 5}, random_vec(30, rng));
    Tensor b = g.constant({2}, random_vec(2, rng));
    return silu(conv1d(x, w, b, 1, 2)).value();
  };
  CHECK(run() == run());
}

TEST_CASE("adam zero gradient leaves parameters unchanged") {
  ParamStore store;
  store.add("p", {3}).value = {1.0, -2.0, 0.5};
  Adam opt({}, store);
  opt.step(store, {{0.0, 0.0, 0.0}});
  CHECK(store.at("p").value == std::vector<double>{1.0, -2.0, 0.5});
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adam first step magnitude and decay on constant gradient") {
  ParamStore store;
  store.add("p", {1}).value = {1.0};
  AdamConfig cfg;
  cfg.lr = 1e-3;
  Adam opt(cfg, store);
  opt.step(store, {{0.1}});
  const double d1 = store.at("p").value[0] - 1.0;
  CHECK(d1 == doctest::Approx(-1e-3).epsilon(1e-4));
  const double before = store.at("p").value[0];
  opt.step(store, {{0.1}});
  const double d2 = store.at("p").value[0] - before;
  CHECK(std::fabs(d2) <= std::fabs(d1) + 1e-15);
}

TEST_CASE("adam rejects bad gradients") {
  ParamStore store;
  store.add("p", {2}).value = {1.0, 1.0};
  Adam opt({}, store);
  CHECK_THROWS_AS(opt.step(store, {{1.0}}), Error);  // shape mismatch
  CHECK_THROWS_AS(opt.step(store, {{1.0, std::nan("")}}), Error);
}

TEST_CASE("param store layout and f32 round trip") {
  ParamStore store;
  store.add("a", {2, 3});
  store.add("b", {4});
  CHECK(store.total_size() == 10);
  CHECK(store.index_of("b") == 1);
  CHECK_THROWS_AS(store.add("a", {1}), Error);
  Rng rng(3);
  for (auto& p : store.params())
    for (auto& v : p.value) v = rng.normal();
  auto flat = store.to_f32();
  ParamStore copy = store;
  copy.from_f32(flat);
  CHECK(copy.to_f32() == flat);  // f32 -> f64 -> f32 is exact
}
