#include "disentangle/pooled_inference.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "json.hpp"

#include "disentangle/errors.hpp"

namespace disentangle {
namespace {

CoefficientTrace scalar_trace(const std::vector<double>& betas, const std::vector<double>& vars,
                              const std::string& name = "x") {
  CoefficientTrace t;
  t.model = "incoming";
  t.names = {name};
  for (std::size_t k = 0; k < betas.size(); ++k) {
    t.estimates.push_back(Eigen::VectorXd::Constant(1, betas[k]));
    t.variances.push_back(Eigen::VectorXd::Constant(1, vars[k]));
  }
  return t;
}

CoefficientTrace random_trace(std::mt19937_64& gen, int k, int p) {
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(0.01, 2.0);
  CoefficientTrace t;
  t.model = "outgoing";
  for (int j = 0; j < p; ++j) t.names.push_back("b" + std::to_string(j));
  for (int i = 0; i < k; ++i) {
    Eigen::VectorXd b(p);
    Eigen::VectorXd v(p);
    for (int j = 0; j < p; ++j) {
      b(j) = j + 0.3 * z(gen);
      v(j) = u(gen);
    }
    t.estimates.push_back(b);
    t.variances.push_back(v);
  }
  return t;
}

PooledResult single_row(double beta, const std::string& name = "Intercept") {
  PooledResult r;
  r.incoming = pool_coefficients(scalar_trace({beta, beta}, {0.01, 0.01}, name), 0);
  r.incoming.model = "incoming";
  r.outgoing = r.incoming;
  r.outgoing.model = "outgoing";
  return r;
}

TEST(PoolTest, hand_computed_two_iterations)
{
  const auto m = pool_coefficients(scalar_trace({0.0, 2.0}, {1.0, 1.0}), 0);
  const auto& e = m.estimates[0];
  EXPECT_DOUBLE_EQ(1.0, e.pooled_beta);
  EXPECT_DOUBLE_EQ(1.0, e.within_variance);
  EXPECT_DOUBLE_EQ(3.0, e.between_variance);
  EXPECT_DOUBLE_EQ(4.0, e.pooled_variance);
  EXPECT_DOUBLE_EQ(2.0, e.sd());
  EXPECT_EQ(2, m.pooled_iterations);
}

TEST(PoolTest, burn_in_excludes_leading_iterations)
{
  const auto m = pool_coefficients(scalar_trace({50.0, 0.0, 2.0}, {9.0, 1.0, 1.0}), 1);
  EXPECT_DOUBLE_EQ(4.0, m.estimates[0].pooled_variance);
  EXPECT_EQ(1, m.burn_in);
  EXPECT_EQ(3, m.total_iterations);
}

TEST(PoolTest, zero_scatter_and_single_iteration)
{
  const auto m = pool_coefficients(scalar_trace({0.75, 0.75, 0.75, 0.75}, {0.25, 0.25, 0.25, 0.25}), 1);
  EXPECT_DOUBLE_EQ(0.0, m.estimates[0].between_variance);
  EXPECT_DOUBLE_EQ(0.25, m.estimates[0].pooled_variance);
  const auto single = pool_coefficients(scalar_trace({0.1, 0.9}, {0.3, 0.5}), 1);
  EXPECT_DOUBLE_EQ(0.9, single.estimates[0].pooled_beta);
  EXPECT_DOUBLE_EQ(0.0, single.estimates[0].between_variance);
  EXPECT_DOUBLE_EQ(0.5, single.estimates[0].pooled_variance);
}

TEST(PoolTest, burn_in_must_leave_iterations)
{
  const auto t = scalar_trace({1, 2, 3}, {1, 1, 1});
  EXPECT_THROW(pool_coefficients(t, 3), DomainError);
  EXPECT_THROW(pool_coefficients(t, -1), DomainError);
}

TEST(PoolTest, rubin_identity_on_random_traces)
{
  std::mt19937_64 gen(41);
  for (int rep = 0; rep < 50; ++rep) {
    const int k = 2 + rep * 7;
    const int k0 = rep % 2 == 0 ? 0 : k / 2;
    const auto t = random_trace(gen, k, 3);
    const auto m = pool_coefficients(t, k0);
    const int count = k - k0;
    for (int j = 0; j < 3; ++j) {
      double mean = 0.0;
      double within = 0.0;
      for (int i = k0; i < k; ++i) {
        mean += t.estimates[i](j);
        within += t.variances[i](j);
      }
      mean /= count;
      within /= count;
      double ss = 0.0;
      for (int i = k0; i < k; ++i) ss += (t.estimates[i](j) - mean) * (t.estimates[i](j) - mean);
      const double between = count > 1 ? ss / (count - 1) : 0.0;
      const double expected = within + (1.0 + 1.0 / count) * between;
      EXPECT_NEAR(expected, m.estimates[j].pooled_variance, 1e-12 * std::max(1.0, expected));
      EXPECT_NEAR(mean, m.estimates[j].pooled_beta, 1e-12);
    }
  }
}

TEST(PoolTest, invariant_to_iteration_order)
{
  std::mt19937_64 gen(5);
  const auto t = random_trace(gen, 40, 2);
  auto shuffled = t;
  std::vector<int> order(40);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), gen);
  for (int i = 0; i < 40; ++i) {
    shuffled.estimates[i] = t.estimates[order[i]];
    shuffled.variances[i] = t.variances[order[i]];
  }
  const auto a = pool_coefficients(t, 0);
  const auto b = pool_coefficients(shuffled, 0);
  for (int j = 0; j < 2; ++j) {
    EXPECT_NEAR(a.estimates[j].pooled_beta, b.estimates[j].pooled_beta, 1e-12);
    EXPECT_NEAR(a.estimates[j].pooled_variance, b.estimates[j].pooled_variance, 1e-12);
    EXPECT_DOUBLE_EQ(a.estimates[j].median_beta, b.estimates[j].median_beta);
  }
}

TEST(PoolTest, vanishing_scatter_recovers_within_sd)
{
  std::mt19937_64 gen(6);
  std::normal_distribution<double> z;
  std::vector<double> v;
  double within = 0.0;
  for (int i = 0; i < 100; ++i) {
    v.push_back(0.04 + 0.01 * (i % 3));
    within += v.back() / 100.0;
  }
  double previous_gap = INFINITY;
  for (double scale : {1e-1, 1e-3, 1e-6}) {
    std::vector<double> b;
    for (int i = 0; i < 100; ++i) b.push_back(1.0 + scale * z(gen));
    const double gap = pool_coefficients(scalar_trace(b, v), 0).estimates[0].sd() - std::sqrt(within);
    EXPECT_GE(gap, 0.0);
    EXPECT_LT(gap, previous_gap);
    previous_gap = gap;
  }
  EXPECT_LT(previous_gap, 1e-10);
}

TEST(PoolTest, delta_method_exp_scale)
{
  const auto m = pool_coefficients(scalar_trace({0.5, 0.5}, {0.04, 0.04}), 0);
  EXPECT_DOUBLE_EQ(std::exp(0.5), m.estimates[0].exp_scale_estimate);
  EXPECT_DOUBLE_EQ(std::exp(0.5) * 0.2, m.estimates[0].exp_scale_sd);
}

TEST(PoolTest, full_covariance_diagonal_matches_variances)
{
  std::mt19937_64 gen(8);
  auto t = random_trace(gen, 20, 3);
  for (const auto& v : t.variances) t.covariances.push_back(v.asDiagonal());
  const auto m = pool_coefficients(t, 5);
  ASSERT_EQ(3, m.covariance.rows());
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(m.estimates[j].pooled_variance, m.covariance(j, j), 1e-12);
}

TEST(ReportTableTest, identity_and_exp_rows)
{
  const auto identity = report_table(single_row(0.5), ScaleTransform::identity, PoolingStatistic::mean);
  EXPECT_NE(identity.find("0.5000"), std::string::npos) << identity;
  const auto exp0 = report_table(single_row(0.0), ScaleTransform::exponential, PoolingStatistic::mean);
  EXPECT_NE(exp0.find("1.0000"), std::string::npos) << exp0;
  EXPECT_NE(exp0.find("delta method"), std::string::npos);
  EXPECT_NE(exp0.find("mean"), std::string::npos);
}

TEST(ReportTableTest, names_and_smooth_rows)
{
  PooledResult r;
  CoefficientTrace t;
  t.model = "incoming";
  t.names = {"Intercept", "Monday", "log_rate_35_59", "s(t).1"};
  t.estimates = {Eigen::Vector4d(1, 2, 3, 4), Eigen::Vector4d(1, 2, 3, 4)};
  t.variances = {Eigen::Vector4d::Ones(), Eigen::Vector4d::Ones()};
  r.incoming = pool_coefficients(t, 0);
  t.model = "outgoing";
  r.outgoing = pool_coefficients(t, 0);
  const auto table = report_table(r, ScaleTransform::identity, PoolingStatistic::median);
  EXPECT_NE(table.find("Monday Effect"), std::string::npos);
  EXPECT_NE(table.find("Infection 35-59 yo"), std::string::npos);
  EXPECT_EQ(table.find("s(t).1"), std::string::npos);
  EXPECT_NE(table.find("median"), std::string::npos);
  const auto json = nlohmann::json::parse(report_json(r, ScaleTransform::identity, PoolingStatistic::median));
  EXPECT_FALSE(json.dump().empty());
}

TEST(ReportTableTest, mean_and_median_agree_on_symmetric_trace)
{
  std::vector<double> b;
  std::vector<double> v;
  for (int i = -50; i <= 50; ++i) {
    b.push_back(0.3 + 0.01 * i);
    v.push_back(0.01);
  }
  const auto m = pool_coefficients(scalar_trace(b, v), 0);
  EXPECT_NEAR(m.estimates[0].pooled_beta, m.estimates[0].median_beta, 1e-12);
}

TEST(ParseTest, transform_and_statistic)
{
  EXPECT_EQ(ScaleTransform::exponential, parse_transform("exp"));
  EXPECT_EQ(PoolingStatistic::median, parse_statistic("median"));
  EXPECT_THROW(parse_transform("log"), ConfigError);
  EXPECT_THROW(parse_statistic("mode"), ConfigError);
  EXPECT_EQ("identity", to_string(ScaleTransform::identity));
}

}  // namespace
}  // namespace disentangle
