#include "gcnnlp/adam.hpp"
#include "gcnnlp/ops.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace gcnnlp;
using namespace gcnnlp::ad;
using testing::away_from_zero;
using testing::check_gradients;
using testing::index_of;
using testing::project;
using testing::random_tensor;

TEST_CASE("relu of a small vector") {
  Tape tape;
  const Var y = relu(tape.constant(Tensor({3}, {-1.0, 0.0, 2.0})));
  CHECK(y.value().identical(Tensor({3}, {0.0, 0.0, 2.0})));
}

TEST_CASE("identity matmul is bit exact") {
  Rng rng(1);
  Tape tape;
  Tensor eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  const Tensor a = random_tensor({3, 5}, rng, -1e3, 1e3);
  CHECK(matmul(tape.constant(eye), tape.constant(a)).value().identical(a));
}

TEST_CASE("gather then scatter-add doubles the repeated row") {
  Rng rng(2);
  Tape tape;
  const Tensor x = random_tensor({4, 3}, rng);
  const auto idx = index_of({2, 2, 0});
  const Tensor back = scatter_add_rows(gather_rows(tape.constant(x), idx), idx, 4).value();
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(back.at(0, j) == x.at(0, j));
    CHECK(back.at(1, j) == 0.0);
    CHECK(back.at(2, j) == x.at(2, j) + x.at(2, j));
    CHECK(back.at(3, j) == 0.0);
  }
}

TEST_CASE("gradient of the sum of squares") {
  Parameter x("x", Tensor({3}, {1.0, 2.0, 3.0}));
  Tape tape;
  const Var v = tape.parameter(x);
  tape.backward(sum_all(mul(v, v)));
  CHECK(x.grad.identical(Tensor({3}, {2.0, 4.0, 6.0})));
}

TEST_CASE("backward needs a scalar loss") {
  Parameter x("x", Tensor({3}, {1.0, 2.0, 3.0}));
  Tape tape;
  CHECK_THROWS_AS(tape.backward(tape.parameter(x)), ShapeError);
}

TEST_CASE("shape and index errors") {
  Rng rng(3);
  Tape tape;
  const Var a = tape.constant(random_tensor({2, 3}, rng));
  const Var b = tape.constant(random_tensor({3, 2}, rng));
  CHECK_THROWS_AS(add(a, b), ShapeError);
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
  CHECK_THROWS_AS(gather_rows(a, index_of({0, 2})), ShapeError);
  CHECK_THROWS_AS(scatter_add_rows(a, index_of({0, 5}), 3), ShapeError);
  CHECK_THROWS_AS(scatter_add_rows(a, index_of({0}), 3), ShapeError);
  CHECK_THROWS_AS(concat({a, b}, 0), ShapeError);
  CHECK_THROWS_AS(add_row_bias(a, tape.constant(Tensor({2}))), ShapeError);
  CHECK_THROWS_AS(sum(a, 2), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1.0}), ShapeError);
  Tape other;
  CHECK_THROWS_AS(add(a, other.constant(random_tensor({2, 3}, rng))), ShapeError);
}

TEST_CASE("every op passes a central-difference check") {
  const auto suite = testing::op_suite();
  for (const testing::OpCase& c : suite->cases) {
    CAPTURE(c.name);
    const auto r = check_gradients(c.params, c.loss);
    CAPTURE(r.where);
    CHECK(r.worst <= 1.0);
  }
}

TEST_CASE("random composites pass a central-difference check") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    Parameter x("x", random_tensor({5, 4}, rng));
    Parameter w("w", random_tensor({4, 4}, rng));
    Parameter v("v", random_tensor({4, 2}, rng));
    const auto idx = index_of({4, 4, 2, 0, 1, 3, 0});
    auto loss = [&](Tape& t) {
      const Var h = tanh(matmul(t.parameter(x), t.parameter(w)));
      const Var g = gather_rows(concat({h, exp(scale(t.parameter(x), 0.3))}, 1), idx);
      const Var s = scatter_add_rows(g, idx, 5);
      const Var y = matmul(sub(mul(s, s), scale(concat({h, h}, 1), 0.5)), reshape(t.parameter(v), {8, 1}));
      return add(sum_all(squared_norm_rows(y)), sum_all(sum(transpose(t.parameter(x)), 1)));
    };
    const auto r = check_gradients({&x, &w, &v}, loss);
    CAPTURE(seed);
    CAPTURE(r.where);
    CHECK(r.worst <= 1.0);
  }
}

TEST_CASE("abs and sqrt have zero derivative at zero") {
  Parameter x("x", Tensor({2}, {0.0, 4.0}));
  Tape tape;
  const Var v = tape.parameter(x);
  tape.backward(sum_all(add(abs(v), sqrt(v))));
  CHECK(x.grad[0] == 0.0);
  CHECK(x.grad[1] == doctest::Approx(1.25));
}

TEST_CASE("backward is linear in the loss") {
  Rng rng(5);
  Parameter x("x", random_tensor({6, 3}, rng));
  Parameter w("w", random_tensor({3, 3}, rng));
  auto l1 = [&](Tape& t) { return sum_all(squared_norm_rows(tanh(matmul(t.parameter(x), t.parameter(w))))); };
  auto l2 = [&](Tape& t) { return sum_all(exp(scale(t.parameter(x), 0.5))); };
  auto grads = [&](const std::function<Var(Tape&)>& f) {
    x.zero_grad();
    w.zero_grad();
    Tape t;
    t.backward(f(t));
    return std::pair{x.grad, w.grad};
  };
  const double a = 1.75, b = -0.6;
  const auto [gx1, gw1] = grads(l1);
  const auto [gx2, gw2] = grads(l2);
  const auto [gx, gw] = grads([&](Tape& t) { return add(scale(l1(t), a), scale(l2(t), b)); });
  for (std::size_t i = 0; i < gx.size(); ++i) CHECK(std::abs(gx[i] - (a * gx1[i] + b * gx2[i])) <= 1e-12);
  for (std::size_t i = 0; i < gw.size(); ++i) CHECK(std::abs(gw[i] - (a * gw1[i] + b * gw2[i])) <= 1e-12);
}

TEST_CASE("gather and scatter-add are adjoint") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const std::size_t rows = 3 + rng.below(8), picks = 1 + rng.below(12), cols = 1 + rng.below(4);
    std::vector<std::uint32_t> raw(picks);
    for (auto& r : raw) r = static_cast<std::uint32_t>(rng.below(rows));
    const auto idx = index_of(raw);
    const Tensor x = random_tensor({picks, cols}, rng);
    const Tensor y = random_tensor({rows, cols}, rng);
    Tape tape;
    const Tensor sx = scatter_add_rows(tape.constant(x), idx, rows).value();
    const Tensor gy = gather_rows(tape.constant(y), idx).value();
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < sx.size(); ++i) lhs += sx[i] * y[i];
    for (std::size_t i = 0; i < gy.size(); ++i) rhs += x[i] * gy[i];
    CHECK(std::abs(lhs - rhs) <= 1e-12);
  }
}

TEST_CASE("seeded backward matches the scalar-loss backward") {
  Rng rng(6);
  Parameter x("x", random_tensor({4, 3}, rng));
  const Tensor c = random_tensor({4, 3}, rng);
  Tape t1;
  const Var y1 = tanh(t1.parameter(x));
  t1.backward(sum_all(mul(y1, t1.constant(c))));
  const Tensor g1 = x.grad;
  x.zero_grad();
  Tape t2;
  const Var y2 = tanh(t2.parameter(x));
  const Var outs[] = {y2};
  const Tensor seeds[] = {c};
  t2.backward(outs, seeds);
  CHECK(x.grad.identical(g1));
}

TEST_CASE("adam leaves parameters alone under a zero gradient") {
  Rng rng(7);
  Parameter p("p", random_tensor({3, 4}, rng));
  const Tensor before = p.value;
  Parameter* params[] = {&p};
  AdamState state = make_adam_state(params);
  for (int i = 0; i < 5; ++i) adam_step(params, state, 1e-3);
  CHECK(p.value.identical(before));
  CHECK(state.step == 5);
}

TEST_CASE("first adam step moves each coordinate by about the learning rate") {
  Parameter p("p", Tensor({4}, {1.0, -2.0, 0.5, 3.0}));
  p.grad = Tensor({4}, {0.3, -7.0, 1e-3, 42.0});
  Parameter* params[] = {&p};
  AdamState state = make_adam_state(params);
  const double lr = 1e-4;
  adam_step(params, state, lr);
  const double expect[] = {1.0 - lr, -2.0 + lr, 0.5 - lr, 3.0 - lr};
  for (std::size_t i = 0; i < 4; ++i) CHECK(p.value[i] == doctest::Approx(expect[i]).epsilon(1e-9));
}

TEST_CASE("adam matches a scalar reference over several steps") {
  const AdamConfig cfg;
  double x = 0.7, m = 0.0, v = 0.0;
  Parameter p("p", Tensor({1}, {x}));
  Parameter* params[] = {&p};
  AdamState state = make_adam_state(params);
  for (int t = 1; t <= 20; ++t) {
    const double g = 2.0 * x - 0.3 * std::sin(t);
    p.grad[0] = 2.0 * p.value[0] - 0.3 * std::sin(t);
    adam_step(params, state, 0.01, cfg);
    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
    x -= 0.01 * (m / (1 - std::pow(cfg.beta1, t))) / (std::sqrt(v / (1 - std::pow(cfg.beta2, t))) + cfg.epsilon);
    CHECK(p.value[0] == doctest::Approx(x).epsilon(1e-12));
  }
}

TEST_CASE("adam trajectories are bit reproducible") {
  auto run = [] {
    Rng rng(8);
    Parameter w("w", random_tensor({3, 2}, rng));
    Parameter* params[] = {&w};
    AdamState state = make_adam_state(params);
    const Tensor target = random_tensor({5, 2}, rng);
    const Tensor x = random_tensor({5, 3}, rng);
    for (int i = 0; i < 50; ++i) {
      w.zero_grad();
      Tape t;
      t.backward(sum_all(squared_norm_rows(sub(matmul(t.constant(x), t.parameter(w)), t.constant(target)))));
      adam_step(params, state, 1e-2);
    }
    return w.value;
  };
  CHECK(run().identical(run()));
}

TEST_CASE("adam rejects a mismatched state") {
  Parameter p("p", Tensor({2}));
  Parameter q("q", Tensor({3}));
  Parameter* one[] = {&p};
  Parameter* two[] = {&p, &q};
  AdamState state = make_adam_state(one);
  CHECK_THROWS_AS(adam_step(two, state, 1e-3), ShapeError);
}
