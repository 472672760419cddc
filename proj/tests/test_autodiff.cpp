#include <catch2/catch_amalgamated.hpp>

#include "tsg/core/autodiff.hpp"
#include "tsg/core/gradcheck.hpp"
#include "tsg/core/rng.hpp"

using namespace tsg;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.raw()) v = rng.normal(0.0, scale);
  return t;
}

}  // namespace

TEST_CASE("scalar chain rule basics") {
  // f(x) = x*x at x=3 -> 6
  {
    Tape t;
    Var x = t.input(Tensor::scalar(3.0));
    Var y = t.mul(x, x);
    t.backward(y);
    REQUIRE(t.grad(x.id).at(0) == Catch::Approx(6.0).margin(1e-12));
  }
  // f(x) = sigmoid(x) at 0 -> 0.25
  {
    Tape t;
    Var x = t.input(Tensor::scalar(0.0));
    Var y = t.sigmoid(x);
    t.backward(y);
    REQUIRE(t.grad(x.id).at(0) == Catch::Approx(0.25).margin(1e-12));
  }
}

TEST_CASE("unused parameter keeps zero gradient") {
  ParameterStore store;
  Parameter& used = store.create("used", {1});
  Parameter& unused = store.create("unused", {2, 2});
  used.value.at(0) = 2.0;
  store.zero_grads();

  Tape t;
  Var x = t.param(used);
  Var y = t.mul(x, x);
  t.backward(y);
  REQUIRE(used.grad.at(0) == Catch::Approx(4.0));
  for (std::size_t i = 0; i < unused.grad.size(); ++i) REQUIRE(unused.grad.at(i) == 0.0);
}

TEST_CASE("backward requires scalar loss") {
  Tape t;
  Var x = t.input(Tensor::matrix(2, 2));
  REQUIRE_THROWS_AS(t.backward(x), ContractError);
}

TEST_CASE("every differentiable primitive passes grad_check at random points") {
  Rng rng(1234);
  const double eps = 1e-5;
  const double tol = 1e-4;
  const int kPoints = 100;

  struct Case {
    const char* name;
    ScalarFn fn;
    std::vector<std::size_t> shape;
    double scale;
  };

  Rng wrng(77);
  const Tensor w = random_tensor({4, 3}, wrng);
  const Tensor m = random_tensor({3, 4}, wrng);
  const Tensor gain = random_tensor({4}, wrng);
  Tensor mask({3, 4});
  mask.at(0, 1) = 1.0;
  mask.at(2, 2) = 1.0;

  auto weigh = [](Tape& t, Var v) {
    // Mix coordinates so the scalar depends on everything non-uniformly.
    Rng r(5);
    Tensor c(v.value().shape());
    for (auto& x : c.raw()) x = r.normal();
    return t.sum_all(t.mul(v, t.leaf(c)));
  };

  std::vector<Case> cases = {
      {"matmul", [&](Tape& t, Var x) { return weigh(t, t.matmul(x, t.leaf(w))); }, {3, 4}, 1.0},
      {"matmul_rhs", [&](Tape& t, Var x) { return weigh(t, t.matmul(t.leaf(m), x)); }, {4, 3}, 1.0},
      {"transpose", [&](Tape& t, Var x) { return weigh(t, t.transpose(x)); }, {3, 4}, 1.0},
      {"add", [&](Tape& t, Var x) { return weigh(t, t.add(x, t.leaf(m))); }, {3, 4}, 1.0},
      {"sub", [&](Tape& t, Var x) { return weigh(t, t.sub(t.leaf(m), x)); }, {3, 4}, 1.0},
      {"mul", [&](Tape& t, Var x) { return weigh(t, t.mul(x, t.leaf(m))); }, {3, 4}, 1.0},
      {"mul_self", [&](Tape& t, Var x) { return weigh(t, t.mul(x, x)); }, {3, 4}, 1.0},
      {"affine", [&](Tape& t, Var x) { return weigh(t, t.affine(x, -2.5, 0.75)); }, {3, 4}, 1.0},
      {"gate_scale",
       [&](Tape& t, Var x) {
         Var s = t.slice_cols(t.reshape(x, {1, 12}), 0, 1);
         return weigh(t, t.gate_scale(t.reshape(s, {1}), x));
       },
       {3, 4},
       1.0},
      {"bias_add_rows", [&](Tape& t, Var x) { return weigh(t, t.bias_add_rows(t.leaf(m), x)); }, {4}, 1.0},
      {"scale_rows", [&](Tape& t, Var x) { return weigh(t, t.scale_rows(x, t.leaf(gain))); }, {3, 4}, 1.0},
      {"concat_cols", [&](Tape& t, Var x) { return weigh(t, t.concat_cols(x, x)); }, {3, 4}, 1.0},
      {"slice_cols", [&](Tape& t, Var x) { return weigh(t, t.slice_cols(x, 1, 3)); }, {3, 4}, 1.0},
      {"slice_rows", [&](Tape& t, Var x) { return weigh(t, t.slice_rows(x, 0, 2)); }, {3, 4}, 1.0},
      {"reshape", [&](Tape& t, Var x) { return weigh(t, t.reshape(x, {4, 3})); }, {3, 4}, 1.0},
      {"exp", [&](Tape& t, Var x) { return weigh(t, t.exp(x)); }, {3, 4}, 0.5},
      {"log",
       [&](Tape& t, Var x) { return weigh(t, t.log(t.affine(t.sigmoid(x), 0.9, 0.05))); },
       {3, 4},
       1.0},
      {"tanh", [&](Tape& t, Var x) { return weigh(t, t.tanh(x)); }, {3, 4}, 1.0},
      {"sigmoid", [&](Tape& t, Var x) { return weigh(t, t.sigmoid(x)); }, {3, 4}, 1.0},
      {"gelu", [&](Tape& t, Var x) { return weigh(t, t.gelu(x)); }, {3, 4}, 1.0},
      {"mean_rows", [&](Tape& t, Var x) { return weigh(t, t.mean_rows(x)); }, {3, 4}, 1.0},
      {"softmax_cols", [&](Tape& t, Var x) { return weigh(t, t.softmax_cols(x)); }, {3, 4}, 1.5},
      {"softmax_rows", [&](Tape& t, Var x) { return weigh(t, t.softmax_rows(x)); }, {3, 4}, 1.5},
      {"masked_fill",
       [&](Tape& t, Var x) { return weigh(t, t.softmax_rows(t.masked_fill(x, mask))); },
       {3, 4},
       1.0},
      {"normalize_rows", [&](Tape& t, Var x) { return weigh(t, t.normalize_rows(x)); }, {3, 4}, 1.0},
  };

  for (const auto& c : cases) {
    double worst = 0.0;
    for (int p = 0; p < kPoints; ++p) {
      Tensor point = random_tensor(c.shape, rng, c.scale);
      worst = std::max(worst, grad_check(c.fn, point, eps));
    }
    INFO(c.name);
    REQUIRE(worst < tol);
  }
}

TEST_CASE("grad_check oracle examples") {
  Rng rng(9);
  // Sum of squares over a random 4-vector.
  auto sq = [](Tape& t, Var x) { return t.sum_all(t.mul(x, x)); };
  REQUIRE(grad_check(sq, random_tensor({4}, rng), 1e-5) < 1e-6);

  // Softmax-then-dot over a random 3-vector.
  Tensor dir({1, 3}, {0.3, -1.2, 0.9});
  auto smdot = [&](Tape& t, Var x) {
    return t.sum_all(t.mul(t.softmax_rows(t.reshape(x, {1, 3})), t.leaf(dir)));
  };
  REQUIRE(grad_check(smdot, random_tensor({3}, rng), 1e-5) < 1e-5);
}

TEST_CASE("grad_check flags a wrong gradient rule (negative control)") {
  // Pretend d/dx tanh(x) were 1 by composing tanh out of an identity-grad
  // stand-in: use clamp far outside its active range so its grad is 1, then
  // compare against the true tanh slope via a deliberately broken fn pair.
  Rng rng(10);
  Tensor point = random_tensor({4}, rng);
  // Analytic gradient of sum(tanh(x)) vs numeric gradient of sum(x): mismatch.
  Tape t;
  Var x = t.input(point);
  Var y = t.sum_all(t.tanh(x));
  t.backward(y);
  const Tensor analytic = t.grad(x.id);

  double worst = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    // Central difference of the WRONG function f(x) = sum(x).
    const double numeric = 1.0;
    worst = std::max(worst, std::abs(analytic.at(i) - numeric) / std::max(1.0, std::abs(analytic.at(i))));
  }
  REQUIRE(worst > 1e-2);
}

TEST_CASE("tape replay is bit-identical") {
  Rng rng(21);
  Tape t;
  Var x = t.input(random_tensor({5, 6}, rng));
  Var w = t.leaf(random_tensor({6, 6}, rng));
  Var h = t.gelu(t.matmul(x, w));
  Var y = t.sum_all(t.softmax_rows(h));
  (void)y;
  REQUIRE(t.replay_matches());
}

TEST_CASE("non-finite primitive output raises") {
  Tape t;
  Var x = t.leaf(Tensor::scalar(1e308));
  REQUIRE_THROWS_AS(t.exp(x), NumericError);
  Var z = t.leaf(Tensor::scalar(-1.0));
  REQUIRE_THROWS_AS(t.log(z), NumericError);
}

TEST_CASE("clamp cuts gradient outside the active range") {
  Tape t;
  Var x = t.input(Tensor({3}, {-2.0, 0.3, 2.0}));
  Var y = t.sum_all(t.clamp(x, -1.0, 1.0));
  t.backward(y);
  REQUIRE(t.grad(x.id).at(0) == 0.0);
  REQUIRE(t.grad(x.id).at(1) == 1.0);
  REQUIRE(t.grad(x.id).at(2) == 0.0);
}
