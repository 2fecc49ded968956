#include "disentangle/spline_smoothing.hpp"

#include <gtest/gtest.h>

#include <random>

#include "disentangle/errors.hpp"

namespace disentangle {
namespace {

// Textbook recursive definition with the right end of the last nonempty span
// closed.
double cox_de_boor(const std::vector<double>& t, int i, int p, double x) {
  if (p == 0) {
    const bool last = x == t.back() && t[i] < t[i + 1] && t[i + 1] == t.back();
    return (t[i] <= x && x < t[i + 1]) || last ? 1.0 : 0.0;
  }
  double left = 0.0;
  double right = 0.0;
  if (t[i + p] > t[i]) left = (x - t[i]) / (t[i + p] - t[i]) * cox_de_boor(t, i, p - 1, x);
  if (t[i + p + 1] > t[i + 1]) right = (t[i + p + 1] - x) / (t[i + p + 1] - t[i + 1]) * cox_de_boor(t, i + 1, p - 1, x);
  return left + right;
}

std::vector<double> days(int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = 18900.0 + i;
  return v;
}

TEST(DifferencePenaltyTest, second_order_structure)
{
  const Eigen::MatrixXd s = difference_penalty(5, 2);
  EXPECT_EQ(5, s.rows());
  EXPECT_DOUBLE_EQ(1.0, s(0, 0));
  EXPECT_DOUBLE_EQ(-2.0, s(0, 1));
  EXPECT_DOUBLE_EQ(1.0, s(0, 2));
  EXPECT_DOUBLE_EQ(6.0, s(2, 2));
  const Eigen::VectorXd constant = Eigen::VectorXd::Ones(5);
  const Eigen::VectorXd linear = Eigen::VectorXd::LinSpaced(5, -2.0, 7.0);
  EXPECT_NEAR(0.0, (s * constant).norm(), 1e-12);
  EXPECT_NEAR(0.0, (s * linear).norm(), 1e-12);
}

TEST(BuildBasis1DTest, partition_of_unity_on_days)
{
  const auto d = days(47);
  const auto res = build_basis_1d(d, 10);
  EXPECT_EQ(10, res.design.cols());
  EXPECT_EQ(47, res.design.rows());
  EXPECT_EQ(10 + 3 + 1, static_cast<int>(res.basis.knots().size()));
  for (Eigen::Index i = 0; i < res.design.rows(); ++i) {
    EXPECT_NEAR(1.0, res.design.row(i).sum(), 1e-12);
    EXPECT_GE(res.design.row(i).minCoeff(), 0.0);
  }
}

TEST(BuildBasis1DTest, matches_recursive_definition)
{
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(-3.0, 5.0);
  std::vector<double> values(60);
  for (auto& v : values) v = u(gen);
  const auto res = build_basis_1d(values, 8, 3, 2);
  const auto& t = res.basis.knots();
  for (double x : {res.basis.lower(), -1.1, 0.0, 2.5, 4.9, res.basis.upper()}) {
    const auto row = res.basis.evaluate_one(x);
    for (int j = 0; j < 8; ++j) {
      EXPECT_NEAR(cox_de_boor(t, j, 3, x), row(j), 1e-13) << "x=" << x << " j=" << j;
    }
  }
}

TEST(BuildBasis1DTest, clamps_outside_range)
{
  const auto d = days(30);
  const auto res = build_basis_1d(d, 6);
  EXPECT_TRUE(res.basis.evaluate_one(res.basis.lower() - 10).isApprox(res.basis.evaluate_one(res.basis.lower())));
  EXPECT_TRUE(res.basis.evaluate_one(res.basis.upper() + 10).isApprox(res.basis.evaluate_one(res.basis.upper())));
}

TEST(BuildBasis1DTest, linear_coefficients_have_zero_penalty)
{
  const auto res = build_basis_1d(days(47), 10);
  const Eigen::VectorXd beta = Eigen::VectorXd::LinSpaced(10, 0.3, -1.2);
  EXPECT_NEAR(0.0, beta.dot(res.basis.penalty() * beta), 1e-12);
}

TEST(BuildBasis1DTest, penalty_is_positive_semidefinite)
{
  const auto res = build_basis_1d(days(47), 10);
  std::mt19937_64 gen(12);
  std::normal_distribution<double> z;
  for (int rep = 0; rep < 100; ++rep) {
    Eigen::VectorXd beta(10);
    for (auto& b : beta) b = z(gen);
    EXPECT_GE(beta.dot(res.basis.penalty() * beta), 0.0);
  }
}

TEST(BuildBasis1DTest, rejects_degenerate_input)
{
  const std::vector<double> constant(20, 1.5);
  EXPECT_THROW(build_basis_1d(constant, 10), ConfigError);
  EXPECT_THROW(build_basis_1d(days(47), 4, 3), ConfigError);
  EXPECT_THROW(build_basis_1d(days(47), 10, 0), ConfigError);
}

TEST(BuildBasis2DTest, tensor_product_of_marginals)
{
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> lon(6.0, 15.0);
  std::uniform_real_distribution<double> lat(47.0, 55.0);
  std::vector<double> x(80);
  std::vector<double> y(80);
  for (int i = 0; i < 80; ++i) {
    x[i] = lon(gen);
    y[i] = lat(gen);
  }
  const auto res = build_basis_2d(x, y, {5, 5});
  EXPECT_EQ(25, res.design.cols());
  const auto& bx = res.basis.marginal_x();
  const auto& by = res.basis.marginal_y();
  for (int i = 0; i < 80; i += 7) {
    const auto rx = bx.evaluate_one(x[i]);
    const auto ry = by.evaluate_one(y[i]);
    for (int a = 0; a < 5; ++a) {
      for (int b = 0; b < 5; ++b) {
        EXPECT_NEAR(rx(a) * ry(b), res.design(i, a * 5 + b), 1e-14);
      }
    }
  }
  for (Eigen::Index i = 0; i < res.design.rows(); ++i) EXPECT_NEAR(1.0, res.design.row(i).sum(), 1e-12);
}

TEST(BuildBasis2DTest, bilinear_surface_is_unpenalized)
{
  std::vector<double> x;
  std::vector<double> y;
  for (int i = 0; i < 12; ++i) {
    for (int j = 0; j < 12; ++j) {
      x.push_back(i);
      y.push_back(j * 0.5);
    }
  }
  const auto res = build_basis_2d(x, y, {5, 5});
  Eigen::VectorXd beta(25);
  for (int a = 0; a < 5; ++a) {
    for (int b = 0; b < 5; ++b) beta(a * 5 + b) = 0.7 + 0.3 * a - 0.2 * b + 0.05 * a * b;
  }
  EXPECT_NEAR(0.0, beta.dot(res.basis.penalties()[0] * beta), 1e-12);
  EXPECT_NEAR(0.0, beta.dot(res.basis.penalties()[1] * beta), 1e-12);
  Eigen::VectorXd wiggly = beta;
  wiggly(12) += 1.0;
  EXPECT_GT(wiggly.dot(res.basis.penalties()[0] * wiggly), 0.1);
  EXPECT_GT(wiggly.dot(res.basis.penalties()[1] * wiggly), 0.1);
}

TEST(ApplyConstraintTest, columns_sum_to_zero)
{
  const auto res = build_basis_1d(days(47), 10);
  const auto c = apply_constraint(res.design);
  EXPECT_EQ(9, c.design.cols());
  for (Eigen::Index j = 0; j < c.design.cols(); ++j) EXPECT_NEAR(0.0, c.design.col(j).sum(), 1e-10);
  const Eigen::MatrixXd ptp = c.transform.projection.transpose() * c.transform.projection;
  EXPECT_TRUE(ptp.isIdentity(1e-12));
}

TEST(ApplyConstraintTest, constant_direction_removed)
{
  // A partition-of-unity basis spans the constant; after the constraint no
  // coefficient vector reproduces it.
  const auto res = build_basis_1d(days(47), 8);
  const auto c = apply_constraint(res.design);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(47);
  const Eigen::VectorXd fit = c.design * c.design.colPivHouseholderQr().solve(ones);
  EXPECT_NEAR(0.0, fit.norm(), 1e-9);
}

TEST(ApplyConstraintTest, round_trip_reproduces_fitted_values)
{
  const auto d = days(47);
  const auto res = build_basis_1d(d, 10);
  const auto c = apply_constraint(res.design);
  std::mt19937_64 gen(3);
  std::normal_distribution<double> z;
  Eigen::VectorXd gamma(9);
  for (auto& g : gamma) g = z(gen);
  const Eigen::VectorXd fitted = c.design * gamma;
  EXPECT_NEAR(0.0, fitted.mean(), 1e-12);
  const Eigen::VectorXd again = res.basis.evaluate(d) * c.transform.expand(gamma);
  EXPECT_LT((fitted - again).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(ApplyConstraintTest, rejects_rank_deficient)
{
  EXPECT_THROW(apply_constraint(Eigen::MatrixXd::Ones(5, 1)), ConfigError);
  EXPECT_THROW(apply_constraint(Eigen::MatrixXd::Zero(5, 3)), ConfigError);
}

}  // namespace
}  // namespace disentangle
