#include <cmath>

#include <gtest/gtest.h>

#include "grad_check.hpp"
#include "tiae/autodiff.hpp"
#include "tiae/errors.hpp"

using namespace tiae;
using namespace tiae::testing;

namespace {

constexpr double kTol = 1e-6;

GradCheckResult check(std::vector<Tensor> inputs,
                      const std::function<ad::Var(ad::Graph&, const std::vector<ad::Var>&)>& build) {
    return check_graph_gradients(std::move(inputs), build);
}

} // namespace

TEST(Autodiff, ElementwiseValues) {
    ad::Graph g;
    auto a = g.leaf(Tensor::vector({1, 2, 3}));
    auto b = g.leaf(Tensor::vector({4, 5, 6}));
    EXPECT_EQ((a + b).value(), Tensor::vector({5, 7, 9}));
    EXPECT_EQ((a - b).value(), Tensor::vector({-3, -3, -3}));
    EXPECT_EQ((a * b).value(), Tensor::vector({4, 10, 18}));
    EXPECT_EQ(ad::div(b, a).value(), Tensor::vector({4, 2.5, 2}));
    EXPECT_EQ((2.0 * a).value(), Tensor::vector({2, 4, 6}));
    EXPECT_EQ(ad::add_scalar(a, 1).value(), Tensor::vector({2, 3, 4}));
    auto s = g.leaf(Tensor::scalar(10));
    EXPECT_EQ((a * s).value(), Tensor::vector({10, 20, 30}));
}

TEST(Autodiff, ShapeMismatchThrows) {
    ad::Graph g;
    auto a = g.leaf(Tensor::vector({1, 2, 3}));
    auto b = g.leaf(Tensor::vector({1, 2}));
    EXPECT_THROW(a + b, ShapeError);
    auto m = g.leaf(Tensor::matrix({{1, 2}, {3, 4}}));
    auto n = g.leaf(Tensor::matrix({{1, 2, 3}}));
    EXPECT_THROW(ad::matmul(m, n), ShapeError);
}

TEST(Autodiff, DivisionByZeroIsNumericError) {
    ad::Graph g;
    auto a = g.leaf(Tensor::vector({1, 2}));
    auto z = g.leaf(Tensor::vector({1, 0}));
    EXPECT_THROW(ad::div(a, z), NumericError);
}

TEST(Autodiff, BackwardRequiresScalarRoot) {
    ad::Graph g;
    auto a = g.leaf(Tensor::vector({1, 2}));
    EXPECT_THROW(g.backward(a), GraphError);
}

TEST(Autodiff, VarsFromAnotherGraphRejected) {
    ad::Graph g1;
    ad::Graph g2;
    auto a = g1.leaf(Tensor::vector({1, 2}));
    auto b = g2.leaf(Tensor::vector({1, 2}));
    EXPECT_THROW(a + b, GraphError);
    EXPECT_THROW(g2.backward(ad::sum(a)), GraphError);
}

TEST(Autodiff, SharedSubexpressionAccumulates) {
    ad::Graph g;
    auto x = g.leaf(Tensor::scalar(3));
    auto y = x * x + x;
    g.backward(y);
    EXPECT_DOUBLE_EQ(g.grad(x).item(), 7.0);
}

TEST(Autodiff, ConstantsReceiveNoGradient) {
    ad::Graph g;
    auto x = g.leaf(Tensor::scalar(3));
    auto c = g.constant(Tensor::scalar(5));
    g.backward(x * c);
    EXPECT_DOUBLE_EQ(g.grad(x).item(), 5.0);
    EXPECT_FALSE(g.requires_grad(c.id()));
    EXPECT_DOUBLE_EQ(g.grad(c).item(), 0.0);
}

TEST(Autodiff, TanhValueAndSlopeAtZero) {
    ad::Graph g;
    auto x = g.leaf(Tensor::scalar(0));
    auto y = ad::tanh(x);
    g.backward(y);
    EXPECT_EQ(y.value().item(), 0.0);
    EXPECT_EQ(g.grad(x).item(), 1.0);
}

TEST(Autodiff, ElementwiseGradients) {
    Rng rng(1);
    const auto a = random_tensor({3, 4}, rng);
    const auto b = random_tensor({3, 4}, rng, 0.5, 2.0);
    const auto s = random_tensor({1}, rng, 0.5, 1.5);
    EXPECT_LT(check({a, b, s}, [](ad::Graph&, const std::vector<ad::Var>& v) {
                  return ad::sum(ad::div(v[0] * v[1] - v[2], v[1]) + 3.0 * ad::add_scalar(v[0] * v[2], 0.5));
              }).max_rel_error,
              kTol);
}

TEST(Autodiff, MatrixGradients) {
    Rng rng(2);
    const auto a = random_tensor({3, 4}, rng);
    const auto b = random_tensor({4, 2}, rng);
    const auto bias = random_tensor({2}, rng);
    EXPECT_LT(check({a, b, bias}, [](ad::Graph&, const std::vector<ad::Var>& v) {
                  auto m = ad::add_rowwise(ad::matmul(v[0], v[1]), v[2]);
                  return ad::sq_l2(ad::tanh(ad::transpose(m)));
              }).max_rel_error,
              kTol);
}

TEST(Autodiff, ShapeOpGradients) {
    Rng rng(3);
    const auto a = random_tensor({3, 2, 2}, rng);
    EXPECT_LT(check({a}, [](ad::Graph&, const std::vector<ad::Var>& v) {
                  auto r = ad::repeat_rows(v[0], 2);
                  auto gathered = ad::gather_rows(ad::flatten_rows(r), {5, 0, 0, 3});
                  return ad::sq_l2(ad::reshape(gathered, {16})) + ad::sum(ad::tanh(r));
              }).max_rel_error,
              kTol);
}

TEST(Autodiff, RepeatRowsOrder) {
    ad::Graph g;
    auto a = g.leaf(Tensor::matrix({{1, 2}, {3, 4}}));
    EXPECT_EQ(ad::repeat_rows(a, 2).value(), Tensor::matrix({{1, 2}, {1, 2}, {3, 4}, {3, 4}}));
}

TEST(Autodiff, NormGradients) {
    Rng rng(4);
    const auto a = random_tensor({4, 5}, rng);
    EXPECT_LT(check({a}, [](ad::Graph&, const std::vector<ad::Var>& v) {
                  return ad::l1_norm(v[0]) + ad::l2_norm(v[0]) + ad::sum(ad::row_l1_norm(v[0])) +
                         ad::sum(ad::row_l2_norm(v[0]));
              }).max_rel_error,
              kTol);
}

TEST(Autodiff, L2NormGradientAtOriginIsDegenerate) {
    ad::Graph g;
    auto x = g.leaf(Tensor::vector({0, 0, 0}));
    auto n = ad::l2_norm(x);
    EXPECT_EQ(n.value().item(), 0.0);
    EXPECT_THROW(g.backward(n), DegenerateError);
}

TEST(Autodiff, NonFiniteForwardThrows) {
    ad::Graph g;
    auto x = g.leaf(Tensor::scalar(1e300));
    EXPECT_THROW(x * x, NumericError);
}
