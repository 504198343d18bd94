#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "iiht/gradcheck.hpp"
#include "iiht/ops.hpp"
#include "iiht/tensor.hpp"

using namespace iiht;

namespace {

// Independent triple-loop product for the matmul oracle.
std::vector<double> naive_matmul(const std::vector<double>& a,
                                 const std::vector<double>& b, std::size_t m,
                                 std::size_t k, std::size_t n) {
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t p = 0; p < k; ++p) {
        out[i * n + j] += a[i * k + p] * b[p * n + j];
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("matmul identity and annihilator") {
  const Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  const Tensor m = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  const Tensor prod = matmul(eye, m);
  for (std::size_t i = 0; i < 4; ++i) CHECK(prod.data()[i] == m.data()[i]);

  Rng rng(7);
  const Tensor zero = Tensor::zeros({2, 3});
  const Tensor any = Tensor::randn({3, 4}, rng);
  const Tensor annihilated = matmul(zero, any);
  CHECK(annihilated.shape() == Shape{2, 4});
  for (double v : annihilated.data()) CHECK(v == 0.0);
}

TEST_CASE("matmul matches the naive triple-loop oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = Tensor::randn({3, 3}, rng);
    const Tensor b = Tensor::randn({3, 3}, rng);
    const auto expected = naive_matmul(a.data(), b.data(), 3, 3, 3);
    const Tensor got = matmul(a, b);
    for (std::size_t i = 0; i < expected.size(); ++i) {
      CHECK(std::abs(got.data()[i] - expected[i]) < 1e-12);
    }
  }
}

TEST_CASE("matmul rejects mismatched shapes, naming both") {
  const Tensor a = Tensor::zeros({2, 3});
  const Tensor b = Tensor::zeros({4, 5});
  CHECK_THROWS_WITH_AS(matmul(a, b),
                       "matmul: shapes (2,3) and (4,5) are incompatible",
                       DimensionError);
}

TEST_CASE("softmax trivial rows") {
  const Tensor x = Tensor::from_data({1, 3}, {0, 0, 0});
  const Tensor s = softmax(x, 1);
  for (double v : s.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax shift invariance") {
  const Tensor a = Tensor::from_data({1, 4}, {0.0, 0.3, -1.2, 2.0});
  const Tensor b = Tensor::from_data({1, 4}, {100.0, 100.3, 98.8, 102.0});
  const Tensor sa = softmax(a, 1);
  const Tensor sb = softmax(b, 1);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(std::abs(sa.data()[i] - sb.data()[i]) < 1e-12);
  }
}

TEST_CASE("softmax matches an extended-precision oracle") {
  const Tensor x = Tensor::from_data({1, 3}, {1.0, 2.0, 3.0});
  const Tensor s = softmax(x, 1);
  long double denom = 0.0L;
  for (double v : x.data()) denom += expl(static_cast<long double>(v) - 3.0L);
  for (std::size_t i = 0; i < 3; ++i) {
    const long double expected =
        expl(static_cast<long double>(x.data()[i]) - 3.0L) / denom;
    CHECK(std::abs(s.data()[i] - static_cast<double>(expected)) < 1e-15);
  }
}

TEST_CASE("softmax rows are probability vectors") {
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor x = Tensor::randn({3, 5}, rng, 3.0);
    const Tensor s = softmax(x, 1);
    for (std::size_t r = 0; r < 3; ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < 5; ++c) {
        const double v = s.at(r, c);
        CHECK(v > 0.0);
        CHECK(v < 1.0);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("softmax rejects non-finite input") {
  const Tensor x =
      Tensor::from_data({1, 2}, {std::numeric_limits<double>::infinity(), 0.0});
  CHECK_THROWS_AS(softmax(x, 1), NumericError);
}

TEST_CASE("softmax over a non-trailing axis") {
  const Tensor x = Tensor::from_data({2, 2}, {0.0, 5.0, 0.0, -5.0});
  const Tensor s = softmax(x, 0);
  CHECK(s.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.at(0, 1) + s.at(1, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("backward of a linear sum is all ones") {
  const Tensor w = Tensor::from_data({3}, {0.5, -2.0, 7.0}, true);
  backward(sum_all(w));
  for (double g : w.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward of sum of squares") {
  const Tensor w = Tensor::from_data({2}, {1.0, 2.0}, true);
  backward(sum_all(mul(w, w)));
  CHECK(w.grad()[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(w.grad()[1] == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("backward rejects a non-scalar seed") {
  const Tensor w = Tensor::from_data({2}, {1.0, 2.0}, true);
  CHECK_THROWS_AS(backward(mul(w, w)), ContractError);
}

TEST_CASE("fan-out accumulation equals the sum of per-path gradients") {
  Rng rng(3);
  const Tensor x = Tensor::randn({3}, rng, 1.0, true);
  const Tensor a = Tensor::randn({3}, rng);
  const Tensor b = Tensor::randn({3}, rng);

  // Shared subexpression used on two paths.
  const Tensor shared = mul(x, x);
  backward(add(sum_all(mul(shared, a)), sum_all(mul(shared, b))));
  const std::vector<double> joint = x.grad();

  Tensor x2 = Tensor::from_data({3}, x.data(), true);
  backward(sum_all(mul(mul(x2, x2), a)));
  const std::vector<double> path_a = x2.grad();
  x2.zero_grad();
  backward(sum_all(mul(mul(x2, x2), b)));
  const std::vector<double> path_b = x2.grad();

  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(joint[i] == doctest::Approx(path_a[i] + path_b[i]).epsilon(1e-12));
  }
}

TEST_CASE("composite graph passes the finite-difference oracle") {
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Tensor> leaves = {Tensor::randn({2, 3}, rng, 1.0, true),
                                  Tensor::randn({3, 2}, rng, 1.0, true)};
    auto a = leaves[0];
    auto b = leaves[1];
    const double err = max_fd_rel_error(leaves, [a, b]() {
      return sum_all(tanh(matmul(softmax(a, 1), sigmoid(b))));
    });
    CHECK(err < 1e-4);
  }
}

TEST_CASE("relu corner values") {
  const Tensor x = Tensor::from_data({2}, {-1.0, 2.0});
  const Tensor y = relu(x);
  CHECK(y.data()[0] == 0.0);
  CHECK(y.data()[1] == 2.0);
}

TEST_CASE("layer_norm of a constant vector is zero") {
  const Tensor x = Tensor::full({1, 5}, 3.7);
  const Tensor y = layer_norm(x);
  for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("dropout is the identity when not training") {
  Rng rng(5);
  const Tensor x = Tensor::randn({4}, rng);
  const Tensor y = dropout(x, 0.5, false, rng);
  for (std::size_t i = 0; i < 4; ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("dropout scales kept entries while training") {
  Rng rng(5);
  const Tensor x = Tensor::full({1000}, 1.0);
  const Tensor y = dropout(x, 0.25, true, rng);
  std::size_t kept = 0;
  for (double v : y.data()) {
    if (v != 0.0) {
      CHECK(v == doctest::Approx(1.0 / 0.75).epsilon(1e-12));
      ++kept;
    }
  }
  CHECK(kept > 650);
  CHECK(kept < 850);
}

TEST_CASE("broadcast incompatibility raises a dimension error") {
  const Tensor a = Tensor::zeros({2, 3});
  const Tensor b = Tensor::zeros({2, 4});
  CHECK_THROWS_AS(add(a, b), DimensionError);
}

TEST_CASE("broadcast add of a row vector") {
  const Tensor m = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor r = Tensor::from_data({3}, {10, 20, 30});
  const Tensor out = add(m, r);
  CHECK(out.at(0, 0) == 11.0);
  CHECK(out.at(1, 2) == 36.0);
}

TEST_CASE("emax picks the winner and routes its gradient") {
  const Tensor a = Tensor::from_data({3}, {1.0, 5.0, 2.0}, true);
  const Tensor b = Tensor::from_data({3}, {3.0, 4.0, 2.0}, true);
  const Tensor m = emax(a, b);
  CHECK(m.data() == std::vector<double>{3.0, 5.0, 2.0});
  backward(sum_all(m));
  CHECK(a.grad() == std::vector<double>{0.0, 1.0, 1.0});  // tie routes to a
  CHECK(b.grad() == std::vector<double>{1.0, 0.0, 0.0});
}

TEST_CASE("masked_fill blocks values and gradients") {
  const Tensor x = Tensor::from_data({2, 2}, {1, 2, 3, 4}, true);
  const Tensor mask = Tensor::from_data({2, 2}, {0, 1, 0, 1});
  const Tensor y = masked_fill(x, mask, -9.0);
  CHECK(y.data() == std::vector<double>{1, -9, 3, -9});
  backward(sum_all(y));
  CHECK(x.grad() == std::vector<double>{1, 0, 1, 0});
}

TEST_CASE("log_clamped floors its argument and zeroes clamped gradients") {
  const Tensor x = Tensor::from_data({2}, {0.5, 1e-20}, true);
  const Tensor y = log_clamped(x, 1e-12);
  CHECK(y.data()[0] == doctest::Approx(std::log(0.5)).epsilon(1e-12));
  CHECK(y.data()[1] == doctest::Approx(std::log(1e-12)).epsilon(1e-12));
  backward(sum_all(y));
  CHECK(x.grad()[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(x.grad()[1] == 0.0);
}

TEST_CASE("no gradient accumulates when requires_grad is false") {
  const Tensor x = Tensor::from_data({2}, {1.0, 2.0}, false);
  const Tensor w = Tensor::from_data({2}, {3.0, 4.0}, true);
  backward(sum_all(mul(x, w)));
  CHECK(!x.has_grad());
  CHECK(w.has_grad());
}

TEST_CASE("identical inputs and seed give bit-identical outputs") {
  auto run = []() {
    Rng rng(99);
    const Tensor a = Tensor::randn({4, 4}, rng, 1.0, true);
    const Tensor b = Tensor::randn({4, 4}, rng);
    Rng drop_rng(7);
    const Tensor out = sum_all(dropout(tanh(matmul(a, b)), 0.3, true, drop_rng));
    backward(out);
    std::vector<double> result = a.grad();
    result.push_back(out.value());
    return result;
  };
  CHECK(run() == run());
}

TEST_CASE("every registered op passes the finite-difference suite (smoke)") {
  // Full 100-instance sweep runs in the acceptance suite and `gradcheck`.
  const auto reports = run_gradcheck_suite(42, 3);
  CHECK(gradcheck_all_passed(reports));
  for (const auto& report : reports) {
    INFO(report.name, " max rel err ", report.max_rel_err);
    CHECK(report.max_rel_err < 1e-4);
  }
}
