#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "hinite/balance.hpp"
#include "hinite/tensor.hpp"
#include "testutil.hpp"

using namespace hinite;
using testutil::rel_err;

namespace {

// Independent O(mkn) product for oracle comparisons.
std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b,
                                 int m, int k, int n) {
  std::vector<double> c(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int l = 0; l < k; ++l) acc += a[static_cast<std::size_t>(i) * k + l] * b[static_cast<std::size_t>(l) * n + j];
      c[static_cast<std::size_t>(i) * n + j] = acc;
    }
  }
  return c;
}

// Generic finite-difference check: `build` maps leaf tensors (one per input
// buffer, all requires_grad) to a scalar loss.
template <typename Build>
void check_gradients(std::vector<std::vector<double>> inputs, std::vector<Shape> shapes,
                     Build&& build, double tol = 1e-4) {
  Tape tape;
  std::vector<Tensor> leaves;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    leaves.push_back(tape.leaf(shapes[i], inputs[i], true));
  }
  Tensor loss = build(tape, leaves);
  tape.backward(loss);
  std::vector<std::vector<double>> analytic;
  for (const Tensor& leaf : leaves) {
    analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t e = 0; e < inputs[i].size(); ++e) {
      const double fd = testutil::central_diff(
          [&] {
            Tape t2;
            std::vector<Tensor> l2;
            for (std::size_t k = 0; k < inputs.size(); ++k) l2.push_back(t2.leaf(shapes[k], inputs[k], true));
            return build(t2, l2).scalar();
          },
          inputs[i][e]);
      INFO("input ", i, " element ", e, " analytic=", analytic[i][e], " fd=", fd);
      CHECK(rel_err(analytic[i][e], fd) <= tol);
    }
  }
}

Segments make_segments(std::vector<int> offsets) {
  Segments s;
  s.offsets = std::move(offsets);
  return s;
}

}  // namespace

TEST_CASE("matmul identity and zero cases") {
  Tape tape;
  std::vector<double> eye = {1, 0, 0, 1};
  std::vector<double> b = {5, 6, 7, 8};
  Tensor I = tape.constant(Shape{2, 2}, eye);
  Tensor B = tape.constant(Shape{2, 2}, b);
  Tensor C = tape.matmul(I, B);
  for (int i = 0; i < 4; ++i) CHECK(C.values()[i] == b[i]);

  std::vector<double> zeros(4, 0.0);
  Tensor Z = tape.constant(Shape{2, 2}, zeros);
  Tensor ZB = tape.matmul(Z, B);
  for (int i = 0; i < 4; ++i) CHECK(ZB.values()[i] == 0.0);
}

TEST_CASE("matmul matches the naive triple-loop oracle") {
  Tape tape;
  std::vector<double> a = {1, 2, 3, 4};
  std::vector<double> b = {5, 6, 7, 8};
  Tensor C = tape.matmul(tape.constant(Shape{2, 2}, a), tape.constant(Shape{2, 2}, b));
  const std::vector<double> expect = {19, 22, 43, 50};
  for (int i = 0; i < 4; ++i) CHECK(C.values()[i] == doctest::Approx(expect[i]).epsilon(1e-14));

  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const int m = 3, k = 4, n = 2;
    auto av = testutil::random_vector(rng, m * k);
    auto bv = testutil::random_vector(rng, k * n);
    Tape t;
    Tensor c = t.matmul(t.constant(Shape{m, k}, av), t.constant(Shape{k, n}, bv));
    auto oracle = naive_matmul(av, bv, m, k, n);
    for (std::size_t i = 0; i < oracle.size(); ++i) {
      CHECK(rel_err(c.values()[i], oracle[i]) < 1e-12);
    }
  }
}

TEST_CASE("matmul dimension error names both shapes") {
  Tape tape;
  std::vector<double> a(6, 1.0), b(10, 1.0);
  Tensor A = tape.constant(Shape{2, 3}, a);
  Tensor B = tape.constant(Shape{5, 2}, b);
  CHECK_THROWS_WITH_AS(tape.matmul(A, B), doctest::Contains("[2x3]"), DimensionError);
  try {
    tape.matmul(A, B);
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("[5x2]") != std::string::npos);
  }
}

TEST_CASE("leaky_relu values and derivative") {
  Tape tape;
  std::vector<double> xs = {3.0, -1.0};
  Tensor x = tape.leaf(Shape{2, 1}, xs, true);
  Tensor y = tape.leaky_relu(x, 0.2);
  CHECK(y.values()[0] == 3.0);
  CHECK(y.values()[1] == doctest::Approx(-0.2));
  Tensor loss = tape.sum(y);
  tape.backward(loss);
  CHECK(x.grad()[0] == 1.0);
  CHECK(x.grad()[1] == 0.2);

  CHECK_THROWS_AS(tape.leaky_relu(x, 0.0), ContractViolation);
  CHECK_THROWS_AS(tape.leaky_relu(x, 1.0), ContractViolation);
}

TEST_CASE("segment_softmax hand cases") {
  Tape tape;
  SUBCASE("two equal logits in one segment") {
    std::vector<double> logits = {0.0, 0.0};
    Tensor y = tape.segment_softmax(tape.constant(Shape{2, 1}, logits), make_segments({0, 2}));
    CHECK(y.values()[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(y.values()[1] == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("singleton segment normalizes to one") {
    std::vector<double> logits = {7.0};
    Tensor y = tape.segment_softmax(tape.constant(Shape{1, 1}, logits), make_segments({0, 1}));
    CHECK(y.values()[0] == 1.0);
  }
  SUBCASE("ln2 vs 0 gives 2/3 vs 1/3") {
    std::vector<double> logits = {std::log(2.0), 0.0};
    Tensor y = tape.segment_softmax(tape.constant(Shape{2, 1}, logits), make_segments({0, 2}));
    CHECK(y.values()[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(y.values()[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("empty segment is a contract violation") {
    std::vector<double> logits = {1.0, 2.0};
    Tensor l = tape.constant(Shape{2, 1}, logits);
    CHECK_THROWS_AS(tape.segment_softmax(l, make_segments({0, 0, 2})), ContractViolation);
  }
}

TEST_CASE("segment_softmax sums to one with entries in (0,1]") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_int_distribution<int> seg_count(1, 6);
    std::uniform_int_distribution<int> seg_len(1, 7);
    Segments seg;
    seg.offsets.push_back(0);
    const int segments = seg_count(rng);
    for (int s = 0; s < segments; ++s) seg.offsets.push_back(seg.offsets.back() + seg_len(rng));
    auto logits = testutil::random_vector(rng, static_cast<std::size_t>(seg.entries()), 3.0);
    Tape tape;
    Tensor y = tape.segment_softmax(tape.constant(Shape{seg.entries(), 1}, logits), seg);
    for (int s = 0; s < seg.count(); ++s) {
      double total = 0.0;
      for (int e = seg.offsets[s]; e < seg.offsets[s + 1]; ++e) {
        const double v = y.values()[static_cast<std::size_t>(e)];
        CHECK(v > 0.0);
        CHECK(v <= 1.0);
        total += v;
      }
      CHECK(std::abs(total - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("backward computes sum-of-squares gradient") {
  Tape tape;
  std::vector<double> xs = {1.0, 2.0};
  Tensor x = tape.leaf(Shape{2, 1}, xs, true);
  Tensor loss = tape.sum(tape.mul(x, x));
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("backward on a constant loss leaves gradients at zero") {
  Tape tape;
  std::vector<double> xs = {1.0, 2.0};
  Tensor x = tape.leaf(Shape{2, 1}, xs, true);
  Tensor c = tape.scalar_leaf(5.0);
  tape.backward(c);
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 0.0);
}

TEST_CASE("backward rejects non-scalar losses") {
  Tape tape;
  std::vector<double> xs = {1.0, 2.0};
  Tensor x = tape.leaf(Shape{2, 1}, xs, true);
  CHECK_THROWS_AS(tape.backward(x), ContractViolation);
}

TEST_CASE("gradient accumulates across consumers") {
  Tape tape;
  std::vector<double> xs = {1.5, -2.0, 0.25};
  Tensor x = tape.leaf(Shape{3, 1}, xs, true);
  Tensor y = tape.add(x, x);
  tape.backward(tape.sum(y));
  for (int i = 0; i < 3; ++i) CHECK(x.grad()[i] == doctest::Approx(2.0));
}

TEST_CASE("HSIC loss gradient matches finite differences on 3 points") {
  Rng rng(3);
  auto U = testutil::random_vector(rng, 3 * 2);
  std::vector<int> T = {1, 0, 1};
  Tape tape;
  Tensor u = tape.leaf(Shape{3, 2}, U, true);
  Tensor loss = hsic(tape, u, T);
  tape.backward(loss);
  for (std::size_t e = 0; e < U.size(); ++e) {
    const double fd = testutil::central_diff(
        [&] {
          Tape t2;
          Tensor u2 = t2.leaf(Shape{3, 2}, U, true);
          return hsic(t2, u2, T).scalar();
        },
        U[e]);
    CHECK(rel_err(u.grad()[e], fd) <= 1e-4);
  }
}

TEST_CASE("dropout is the identity at rate zero or in eval mode") {
  Rng rng(5);
  auto xs = testutil::random_vector(rng, 12);
  Tape tape;
  Tensor x = tape.leaf(Shape{3, 4}, xs, true);
  Tensor same_rate0 = tape.dropout(x, 0.0, rng, true);
  Tensor same_eval = tape.dropout(x, 0.5, rng, false);
  CHECK(same_rate0.id() == x.id());
  CHECK(same_eval.id() == x.id());
  CHECK_THROWS_AS(tape.dropout(x, 1.0, rng, true), ContractViolation);
}

TEST_CASE("dropout scales kept entries by 1/(1-rate) and matches its mask in backward") {
  Rng rng(9);
  auto xs = testutil::random_vector(rng, 1000);
  for (double& v : xs) v = std::abs(v) + 0.5;  // keep strictly positive
  Tape tape;
  Tensor x = tape.leaf(Shape{1000, 1}, xs, true);
  Tensor y = tape.dropout(x, 0.25, rng, true);
  int kept = 0;
  for (int i = 0; i < 1000; ++i) {
    const double v = y.values()[static_cast<std::size_t>(i)];
    if (v != 0.0) {
      ++kept;
      CHECK(v == doctest::Approx(xs[static_cast<std::size_t>(i)] / 0.75));
    }
  }
  CHECK(kept > 650);
  CHECK(kept < 850);
  tape.backward(tape.sum(y));
  for (int i = 0; i < 1000; ++i) {
    const double expected = y.values()[static_cast<std::size_t>(i)] == 0.0 ? 0.0 : 1.0 / 0.75;
    CHECK(x.grad()[static_cast<std::size_t>(i)] == doctest::Approx(expected));
  }
}

TEST_CASE("every primitive passes a finite-difference check") {
  Rng rng(21);

  SUBCASE("matmul") {
    check_gradients({testutil::random_vector(rng, 6), testutil::random_vector(rng, 6)},
                    {Shape{2, 3}, Shape{3, 2}},
                    [](Tape& t, std::vector<Tensor>& l) { return t.sum(t.matmul(l[0], l[1])); });
  }
  SUBCASE("add, sub, mul") {
    check_gradients({testutil::random_vector(rng, 6), testutil::random_vector(rng, 6)},
                    {Shape{2, 3}, Shape{2, 3}}, [](Tape& t, std::vector<Tensor>& l) {
                      return t.sum(t.mul(t.add(l[0], l[1]), t.sub(l[0], l[1])));
                    });
  }
  SUBCASE("scale and scale_by") {
    check_gradients({testutil::random_vector(rng, 4), testutil::random_vector(rng, 1)},
                    {Shape{4, 1}, Shape{1, 1}}, [](Tape& t, std::vector<Tensor>& l) {
                      return t.sum(t.scale_by(t.scale(l[0], -1.7), l[1]));
                    });
  }
  SUBCASE("add_row_bias") {
    check_gradients({testutil::random_vector(rng, 6), testutil::random_vector(rng, 3)},
                    {Shape{2, 3}, Shape{1, 3}}, [](Tape& t, std::vector<Tensor>& l) {
                      return t.sum(t.mul(t.add_row_bias(l[0], l[1]), t.add_row_bias(l[0], l[1])));
                    });
  }
  SUBCASE("relu and leaky_relu away from the kink") {
    check_gradients({testutil::random_vector_off_kink(rng, 8)}, {Shape{8, 1}},
                    [](Tape& t, std::vector<Tensor>& l) {
                      return t.sum(t.add(t.relu(l[0]), t.leaky_relu(l[0], 0.2)));
                    });
  }
  SUBCASE("exp") {
    check_gradients({testutil::random_vector(rng, 5)}, {Shape{5, 1}},
                    [](Tape& t, std::vector<Tensor>& l) { return t.sum(t.exp(l[0])); });
  }
  SUBCASE("concat_cols and column") {
    check_gradients({testutil::random_vector(rng, 4), testutil::random_vector(rng, 2)},
                    {Shape{2, 2}, Shape{2, 1}}, [](Tape& t, std::vector<Tensor>& l) {
                      Tensor c = t.concat_cols(l[0], l[1]);
                      return t.sum(t.mul(t.column(c, 1), t.column(c, 2)));
                    });
  }
  SUBCASE("gather_rows with repeated indices") {
    check_gradients({testutil::random_vector(rng, 6)}, {Shape{3, 2}},
                    [](Tape& t, std::vector<Tensor>& l) {
                      std::vector<int> idx = {0, 2, 2, 1};
                      Tensor g = t.gather_rows(l[0], idx);
                      return t.sum(t.mul(g, g));
                    });
  }
  SUBCASE("scale_rows and segment_sum_rows") {
    check_gradients({testutil::random_vector(rng, 8), testutil::random_vector(rng, 4)},
                    {Shape{4, 2}, Shape{4, 1}}, [](Tape& t, std::vector<Tensor>& l) {
                      Segments seg;
                      seg.offsets = {0, 1, 4};
                      Tensor s = t.segment_sum_rows(t.scale_rows(l[0], l[1]), seg);
                      return t.sum(t.mul(s, s));
                    });
  }
  SUBCASE("segment_softmax") {
    check_gradients({testutil::random_vector(rng, 5)}, {Shape{5, 1}},
                    [](Tape& t, std::vector<Tensor>& l) {
                      Segments seg;
                      seg.offsets = {0, 2, 5};
                      Tensor y = t.segment_softmax(l[0], seg);
                      std::vector<double> w = {0.3, -1.1, 0.7, 2.0, -0.4};
                      return t.sum(t.mul(y, t.constant(Shape{5, 1}, w)));
                    });
  }
  SUBCASE("softmax_rows") {
    check_gradients({testutil::random_vector(rng, 6)}, {Shape{2, 3}},
                    [](Tape& t, std::vector<Tensor>& l) {
                      Tensor y = t.softmax_rows(l[0]);
                      std::vector<double> w = {0.3, -1.1, 0.7, 2.0, -0.4, 1.3};
                      return t.sum(t.mul(y, t.constant(Shape{2, 3}, w)));
                    });
  }
  SUBCASE("pairwise_sqdist") {
    check_gradients({testutil::random_vector(rng, 8)}, {Shape{4, 2}},
                    [](Tape& t, std::vector<Tensor>& l) {
                      Tensor d = t.pairwise_sqdist(l[0]);
                      std::vector<double> w(16);
                      for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.1 * static_cast<double>(i) - 0.7;
                      return t.sum(t.mul(d, t.constant(Shape{4, 4}, w)));
                    });
  }
  SUBCASE("mean") {
    check_gradients({testutil::random_vector(rng, 6)}, {Shape{2, 3}},
                    [](Tape& t, std::vector<Tensor>& l) { return t.mean(t.mul(l[0], l[0])); });
  }
}

TEST_CASE("pairwise_sqdist matches the double-loop oracle with an exact zero diagonal") {
  Rng rng(31);
  const int n = 5, d = 3;
  auto U = testutil::random_vector(rng, n * d);
  Tape tape;
  Tensor dmat = tape.pairwise_sqdist(tape.constant(Shape{n, d}, U));
  for (int i = 0; i < n; ++i) {
    CHECK(dmat.at(i, i) == 0.0);
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int k = 0; k < d; ++k) {
        const double diff = U[static_cast<std::size_t>(i) * d + k] - U[static_cast<std::size_t>(j) * d + k];
        acc += diff * diff;
      }
      CHECK(std::abs(dmat.at(i, j) - acc) < 1e-12);
    }
  }
}

TEST_CASE("tape reset reuses node storage") {
  Tape tape;
  std::vector<double> xs = {1.0, 2.0, 3.0, 4.0};
  for (int round = 0; round < 3; ++round) {
    tape.reset();
    Tensor x = tape.leaf(Shape{2, 2}, xs, true);
    Tensor loss = tape.sum(tape.mul(x, x));
    tape.backward(loss);
    CHECK(loss.scalar() == doctest::Approx(30.0));
    CHECK(x.grad()[3] == doctest::Approx(8.0));
    CHECK(tape.node_count() == 3);
  }
}
