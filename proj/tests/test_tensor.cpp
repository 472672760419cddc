#include <catch2/catch_amalgamated.hpp>

#include "tsg/core/kernels.hpp"
#include "tsg/core/rng.hpp"
#include "tsg/core/tensor.hpp"

using namespace tsg;

TEST_CASE("tensor shape bookkeeping") {
  Tensor m = Tensor::matrix(3, 4);
  REQUIRE(m.size() == 12);
  REQUIRE(m.rows() == 3);
  REQUIRE(m.cols() == 4);
  m.at(2, 3) = 7.0;
  REQUIRE(m.at(11) == 7.0);

  REQUIRE_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  REQUIRE_THROWS_AS(m.reshaped({5, 2}), ShapeError);
  REQUIRE(m.reshaped({4, 3}).at(3, 2) == 7.0);
}

TEST_CASE("matmul against identity and hand values") {
  Tensor id({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor a({3, 2}, {1, 2, 3, 4, 5, 6});
  REQUIRE(kern::matmul(id, a) == a);

  Tensor b({2, 2}, {1, 2, 3, 4});
  Tensor c = kern::matmul(a, b);
  REQUIRE(c.at(0, 0) == 7.0);   // 1*1 + 2*3
  REQUIRE(c.at(2, 1) == 34.0);  // 5*2 + 6*4

  REQUIRE_THROWS_AS(kern::matmul(a, a), ShapeError);
}

TEST_CASE("matmul transpose variants agree with explicit transposition") {
  Rng rng(11);
  Tensor a({4, 3});
  Tensor b({4, 5});
  for (auto& v : a.raw()) v = rng.normal();
  for (auto& v : b.raw()) v = rng.normal();

  Tensor at({3, 4});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) at.at(j, i) = a.at(i, j);

  Tensor direct = kern::matmul(at, b);
  Tensor fused = kern::matmul_at(a, b);
  for (std::size_t i = 0; i < direct.size(); ++i) {
    REQUIRE(fused.at(i) == Catch::Approx(direct.at(i)).margin(1e-14));
  }

  Tensor bt({5, 4});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j) bt.at(j, i) = b.at(i, j);
  Tensor direct2 = kern::matmul(at, b);  // (3x4)(4x5)
  Tensor fused2 = kern::matmul_bt(at, bt);
  for (std::size_t i = 0; i < direct2.size(); ++i) {
    REQUIRE(fused2.at(i) == Catch::Approx(direct2.at(i)).margin(1e-14));
  }
}

TEST_CASE("activation fixed points") {
  REQUIRE(kern::gelu(0.0) == 0.0);
  REQUIRE(std::tanh(0.0) == 0.0);
  REQUIRE(kern::sigmoid(0.0) == 0.5);
}

TEST_CASE("softmax normalization properties") {
  Rng rng(3);
  Tensor e({5, 4});
  for (auto& v : e.raw()) v = rng.normal(0.0, 3.0);

  Tensor sc = kern::softmax_cols(e);
  for (std::size_t j = 0; j < 4; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      REQUIRE(sc.at(i, j) >= 0.0);
      sum += sc.at(i, j);
    }
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
  }

  Tensor sr = kern::softmax_rows(e);
  for (std::size_t i = 0; i < 5; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 4; ++j) sum += sr.at(i, j);
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
  }

  // Uniform logits give the uniform distribution.
  Tensor flat({3, 1}, {2.0, 2.0, 2.0});
  Tensor u = kern::softmax_cols(flat);
  for (std::size_t i = 0; i < 3; ++i) REQUIRE(u.at(i, 0) == Catch::Approx(1.0 / 3.0).margin(1e-15));

  // Large-magnitude logits stay finite thanks to max subtraction.
  Tensor big({2, 1}, {1e4, 9.9e3});
  REQUIRE(kern::softmax_cols(big).all_finite());
}

TEST_CASE("rng reproducibility") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) REQUIRE(a.normal() == b.normal());
  Rng c(42);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double u = c.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
  REQUIRE(lo < 0.1);
  REQUIRE(hi > 0.9);
}
