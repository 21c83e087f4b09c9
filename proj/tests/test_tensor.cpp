#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include "vitalsynth/autograd.hpp"
#include "vitalsynth/errors.hpp"
#include "vitalsynth/ops.hpp"

using namespace vitalsynth;

namespace {

bool close(double a, double b, double tol = 1e-12) { return std::abs(a - b) <= tol; }

}  // namespace

TEST_CASE("shape bookkeeping") {
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rank() == 2);
  CHECK(t.numel() == 6);
  CHECK(t.dim(1) == 3);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), ShapeError);
  CHECK(Tensor::scalar(4.0).rank() == 0);
  CHECK(Tensor::scalar(4.0).value() == 4.0);
}

TEST_CASE("elementwise arithmetic with leading-dim broadcasting") {
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from({3}, {10, 20, 30});

  Tensor s = add(a, b);
  CHECK(s.shape() == Shape{2, 3});
  CHECK(s.at(0) == 11.0);
  CHECK(s.at(5) == 36.0);

  Tensor p = mul(a, Tensor::scalar(2.0));
  CHECK(p.at(3) == 8.0);

  // Reversed operand order broadcasts the same way.
  CHECK(add(b, a).at(5) == 36.0);

  CHECK_THROWS_AS(add(a, Tensor::from({2}, {1, 2})), ShapeError);
  CHECK_THROWS_AS(div(a, Tensor::zeros({3})), DomainError);
}

TEST_CASE("concat, slice, reshape, transpose") {
  // concat([1,2],[3]) axis 0 -> [1,2,3]
  Tensor c = concat({Tensor::from({2}, {1, 2}), Tensor::from({1}, {3})}, 0);
  CHECK(c.shape() == Shape{3});
  CHECK(c.at(0) == 1.0);
  CHECK(c.at(2) == 3.0);

  Tensor m = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor col = slice(m, 1, 1, 3);
  CHECK(col.shape() == Shape{2, 2});
  CHECK(col.at(0) == 2.0);
  CHECK(col.at(3) == 6.0);
  CHECK_THROWS_AS(slice(m, 1, 2, 2), ContractError);
  CHECK_THROWS_AS(slice(m, 5, 0, 1), ShapeError);

  Tensor r = reshape(m, {3, 2});
  CHECK(r.at(1) == 2.0);
  CHECK_THROWS_AS(reshape(m, {4, 2}), ShapeError);

  Tensor tr = transpose(m);
  CHECK(tr.shape() == Shape{3, 2});
  CHECK(tr.at(1) == 4.0);

  CHECK_THROWS_AS(concat({m, Tensor::from({2, 2}, {1, 2, 3, 4})}, 0), ShapeError);
}

TEST_CASE("matmul identity and reductions") {
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor a = Tensor::from({2, 2}, {3, 1, 4, 1});
  Tensor out = matmul(eye, a);
  for (size_t i = 0; i < 4; ++i) CHECK(out.at(i) == a.at(i));
  CHECK_THROWS_AS(matmul(a, Tensor::from({3, 1}, {1, 2, 3})), ShapeError);

  // mean([2,4,6]) -> 4
  CHECK(mean(Tensor::from({3}, {2, 4, 6})).value() == 4.0);
  CHECK(sum(Tensor::from({3}, {2, 4, 6})).value() == 12.0);
  CHECK(row_sum(Tensor::from({2, 2}, {1, 2, 3, 4})).at(1) == 7.0);
  CHECK(sum_trailing(Tensor::from({2, 2, 1}, {1, 2, 3, 4})).at(0) == 3.0);
}

TEST_CASE("nonlinearities stay NaN-free on NaN-free inputs") {
  Tensor a = Tensor::from({4}, {-2, -0.5, 0.5, 2});
  for (const Tensor& t : {tanh(a), sigmoid(a), exp(a), leaky_relu(a, 0.2)}) {
    for (double v : t.values()) CHECK(std::isfinite(v));
  }
  CHECK_THROWS_AS(log(Tensor::from({1}, {0.0})), DomainError);
  CHECK_THROWS_AS(sqrt(Tensor::from({1}, {-1.0})), DomainError);

  // leaky_relu slope 0.2 examples
  Tensor lr = leaky_relu(Tensor::from({3}, {-1, 3, 0}), 0.2);
  CHECK(close(lr.at(0), -0.2));
  CHECK(lr.at(1) == 3.0);
  CHECK(lr.at(2) == 0.0);
  CHECK_THROWS_AS(leaky_relu(a, 1.5), ContractError);
}

TEST_CASE("grad: f(x) = x*x at x = 3 gives 6; second derivative gives 2") {
  Tensor x = Tensor::leaf({}, {3.0});
  Tensor y = mul(x, x);
  std::vector<Tensor> g1 = grad(y, {x}, /*higher_order=*/true);
  CHECK(g1[0].value() == 6.0);
  CHECK(g1[0].tracked());

  std::vector<Tensor> g2 = grad(g1[0], {x});
  CHECK(g2[0].value() == 2.0);
}

TEST_CASE("grad contract: non-scalar output and detached inputs") {
  Tensor x = Tensor::leaf({2}, {1, 2});
  Tensor y = mul(x, x);
  CHECK_THROWS_AS(grad(y, {x}), ContractError);

  Tensor unused = Tensor::leaf({3}, {1, 2, 3});
  Tensor detached = Tensor::from({2}, {5, 5});
  std::vector<Tensor> g = grad(sum(y), {x, unused, detached});
  CHECK(g[0].at(0) == 2.0);
  CHECK(g[0].at(1) == 4.0);
  // Non-participating and detached inputs get zero tensors of their shape.
  CHECK(g[1].shape() == Shape{3});
  for (double v : g[1].values()) CHECK(v == 0.0);
  CHECK(g[2].shape() == Shape{2});
  for (double v : g[2].values()) CHECK(v == 0.0);

  // A plain (untracked) output cannot be differentiated.
  NoGradGuard guard;
  Tensor z = mul(x, x);
  CHECK_FALSE(z.tracked());
}

TEST_CASE("gradient accumulates across repeated uses") {
  Tensor x = Tensor::leaf({}, {2.0});
  // f = x*x + 3x: df/dx = 2x + 3 = 7
  Tensor f = add(mul(x, x), mul(Tensor::scalar(3.0), x));
  CHECK(grad(f, {x})[0].value() == 7.0);
}

TEST_CASE("tape visits every reachable node exactly once") {
  Tensor x = Tensor::leaf({}, {1.5});
  Tensor a = mul(x, x);
  Tensor b = add(a, x);
  Tensor c = mul(a, b);  // diamond: `a` consumed twice
  GradientTape tape = GradientTape::build(c);

  std::set<const Node*> seen;
  for (const auto& node : tape.nodes()) {
    CHECK(seen.insert(node.get()).second);  // no duplicates
  }
  CHECK(tape.nodes().back().get() == c.node().get());
  // Parents always precede consumers.
  std::set<const Node*> emitted;
  for (const auto& node : tape.nodes()) {
    for (const Tensor& in : node->inputs) {
      if (in.tracked()) CHECK(emitted.count(in.node().get()));
    }
    emitted.insert(node.get());
  }

  // d/dx of x^2*(x^2+x) = 4x^3 + 3x^2 at 1.5
  const double expected = 4 * std::pow(1.5, 3) + 3 * std::pow(1.5, 2);
  CHECK(close(grad(c, {x})[0].value(), expected, 1e-9));
}

TEST_CASE("broadcast gradient reduces over leading dims") {
  Tensor a = Tensor::leaf({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::leaf({3}, {1, 1, 1});
  std::vector<Tensor> g = grad(sum(mul(a, b)), {a, b});
  CHECK(g[0].shape() == Shape{2, 3});
  CHECK(g[1].shape() == Shape{3});
  CHECK(g[1].at(0) == 5.0);  // a[0,0] + a[1,0]
  CHECK(g[1].at(2) == 9.0);
}

TEST_CASE("no-grad scope suppresses recording and restores state") {
  CHECK(grad_enabled());
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    Tensor x = Tensor::leaf({}, {1.0});
    CHECK_FALSE(mul(x, x).tracked());
  }
  CHECK(grad_enabled());
}
