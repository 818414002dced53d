#include <doctest.h>

#include <cmath>
#include <functional>

#include "qna/nn/layers.hpp"
#include "qna/nn/optim.hpp"

using namespace qna::nn;

namespace {

// Central differences against the analytic gradient of a scalar function.
void check_grad(Tensor& x, const std::function<Tensor()>& f, double tol = 2e-2) {
  x.zero_grad();
  Tensor y = f();
  y.backward();
  const Matrix analytic = x.grad();
  const float eps = 1e-2f;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const float orig = x.value()(i, j);
      x.mutable_value()(i, j) = orig + eps;
      const double up = f().item();
      x.mutable_value()(i, j) = orig - eps;
      const double down = f().item();
      x.mutable_value()(i, j) = orig;
      const double numeric = (up - down) / (2 * eps);
      CHECK(std::abs(numeric - analytic(i, j)) <= tol * std::max(1.0, std::abs(numeric)));
    }
  }
}

Tensor param(Eigen::Index r, Eigen::Index c, unsigned seed) {
  Rng rng(seed);
  return normal_param(r, c, 0.7f, rng);
}

}  // namespace

TEST_CASE("elementwise and matrix op gradients") {
  Tensor a = param(3, 4, 1), b = param(4, 2, 2), c = param(3, 4, 3), row = param(1, 4, 4);
  check_grad(a, [&] { return sum_all(matmul(a, b)); });
  check_grad(b, [&] { return sum_all(mul(matmul(a, b), matmul(c, b))); });
  check_grad(a, [&] { return sum_all(matmul_nt(a, c)); });
  check_grad(row, [&] { return sum_all(mul(add_row(a, row), c)); });
  check_grad(a, [&] { return sum_all(mul(sigmoid(a), c)); });
  check_grad(a, [&] { return sum_all(mul(gelu(a), c)); });
  check_grad(a, [&] { return sum_all(mul(relu(add(a, scale(c, 0.5f))), c)); });
  check_grad(a, [&] { return sum_all(mul(softmax_rows(a), c)); });
  check_grad(a, [&] { return sum_all(mul(log_softmax_rows(a), c)); });
  check_grad(a, [&] { return sum_all(mul(one_minus(a), c)); });
}

TEST_CASE("structural op gradients") {
  Tensor a = param(3, 4, 5), c = param(3, 6, 6), col = param(3, 1, 7);
  const std::vector<int> idx{0, 2, 2, 1};
  check_grad(a, [&] { return sum_all(mul(concat_cols({slice_cols(a, 1, 2), slice_cols(a, 0, 1)}), slice_cols(c, 0, 3))); });
  check_grad(a, [&] { return sum_all(mul(pad_cols(a, 6), c)); });
  check_grad(a, [&] { return sum_all(mul(scatter_cols(a, idx, 6), c)); });
  check_grad(col, [&] { return sum_all(mul(mul_col(a, col), a)); });
  check_grad(a, [&] { return sum_all(mul(slice_rows(a, 1, 2), slice_rows(a, 0, 2))); });
  const std::vector<int> targets{1, -1, 3};
  check_grad(a, [&] { return pick_nll(log_softmax_rows(a), targets); });
  Tensor table = param(5, 3, 8);
  const std::vector<int> ids{4, 0, 4};
  check_grad(table, [&] { return sum_all(mul(embedding(table, ids), slice_cols(c, 0, 3))); });
}

TEST_CASE("layer norm gradient") {
  Tensor x = param(2, 5, 9), g = param(1, 5, 10), b = param(1, 5, 11), c = param(2, 5, 12);
  check_grad(x, [&] { return sum_all(mul(layer_norm(x, g, b, 1e-6f), c)); });
  check_grad(g, [&] { return sum_all(mul(layer_norm(x, g, b, 1e-6f), c)); });
}

TEST_CASE("attention layers are differentiable end to end") {
  Rng rng(3);
  DecoderLayer layer(8, 2, 16, rng);
  Tensor x = param(3, 8, 13), mem = param(4, 8, 14), c = param(3, 8, 15);
  const Matrix mask = causal_mask(3);
  check_grad(x, [&] { return sum_all(mul(layer(x, mem, &mask, 0.0f, rng, false), c)); }, 5e-2);
  check_grad(mem, [&] { return sum_all(mul(layer(x, mem, &mask, 0.0f, rng, false), c)); }, 5e-2);
}

TEST_CASE("causal mask blocks the future") {
  const Matrix m = causal_mask(3);
  CHECK(m(0, 0) == 0.0f);
  CHECK(m(0, 1) < -1e8f);
  CHECK(m(2, 1) == 0.0f);
}

TEST_CASE("no grad guard skips graph recording") {
  Tensor a = param(2, 2, 1);
  {
    NoGradGuard g;
    CHECK_FALSE(grad_enabled());
    CHECK_FALSE(sum_all(a).requires_grad());
  }
  CHECK(grad_enabled());
  CHECK(sum_all(a).requires_grad());
}

TEST_CASE("dropout is identity at inference and rescales in training") {
  Rng rng(1);
  Tensor a(Matrix::Ones(50, 50));
  CHECK(dropout(a, 0.5f, rng, false).value() == a.value());
  const Matrix d = dropout(a, 0.5f, rng, true).value();
  for (Eigen::Index i = 0; i < d.size(); ++i) CHECK((d.data()[i] == 0.0f || d.data()[i] == 2.0f));
  CHECK(d.mean() == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("adam minimizes a quadratic") {
  Tensor w(Matrix::Constant(1, 3, 5.0f), true);
  ParamList params{{"w", &w}};
  Adam opt(params, {0.1f, 0.9f, 0.999f, 1e-8f, 0.0f});
  for (int i = 0; i < 300; ++i) {
    Tensor loss = sum_all(mul(w, w));
    loss.backward();
    opt.step();
  }
  CHECK(w.value().cwiseAbs().maxCoeff() < 0.1f);
  CHECK(opt.steps() == 300);
}

TEST_CASE("noam schedule warms up then decays") {
  LrSchedule s{LrSchedule::Kind::Noam, 100, 64};
  CHECK(s.rate(2.0f, 50) < s.rate(2.0f, 100));
  CHECK(s.rate(2.0f, 400) < s.rate(2.0f, 100));
  CHECK(s.rate(2.0f, 100) == doctest::Approx(2.0 / 8.0 / 10.0).epsilon(1e-5));
  CHECK(LrSchedule{}.rate(0.5f, 7) == 0.5f);
  CHECK(LrSchedule::parse("noam") == LrSchedule::Kind::Noam);
}

TEST_CASE("sinusoidal positions") {
  const Matrix p = sinusoidal_positions(4, 6);
  CHECK(p(0, 0) == 0.0f);
  CHECK(p(0, 1) == 1.0f);
  CHECK(p(1, 0) == doctest::Approx(std::sin(1.0)));
}
