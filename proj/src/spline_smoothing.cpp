#include "disentangle/spline_smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "disentangle/errors.hpp"

namespace disentangle {

namespace {

std::vector<double> distinct_sorted(std::span<const double> values) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  return sorted;
}

double quantile(const std::vector<double>& sorted, double prob) {
  const double pos = prob * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

Eigen::MatrixXd difference_penalty(int dim, int order) {
  if (order < 0 || order >= dim) {
    throw ConfigError("difference penalty order must be in [0, basis_dim)");
  }
  Eigen::MatrixXd diff = Eigen::MatrixXd::Identity(dim, dim);
  for (int r = 0; r < order; ++r) {
    const Eigen::Index rows = diff.rows() - 1;
    diff = (diff.bottomRows(rows) - diff.topRows(rows)).eval();
  }
  return diff.transpose() * diff;
}

SmoothBasis1D::SmoothBasis1D(std::vector<double> knots, int degree, int penalty_order)
    : knots_(std::move(knots)),
      degree_(degree),
      basis_dim_(static_cast<int>(knots_.size()) - degree - 1),
      penalty_order_(penalty_order),
      penalty_(difference_penalty(basis_dim_, penalty_order)) {}

Eigen::RowVectorXd SmoothBasis1D::evaluate_one(double value) const {
  const int p = degree_;
  const double x = std::clamp(value, lower(), upper());
  // Knot span: t[span] <= x < t[span+1], with the right boundary folded into
  // the last non-empty span.
  int span = basis_dim_ - 1;
  if (x < upper()) {
    const auto it = std::upper_bound(knots_.begin(), knots_.end(), x);
    span = static_cast<int>(it - knots_.begin()) - 1;
  }
  // Cox-de Boor, triangular scheme over the p+1 non-zero functions.
  std::vector<double> values(static_cast<std::size_t>(p + 1), 0.0);
  std::vector<double> left(static_cast<std::size_t>(p + 1)), right(static_cast<std::size_t>(p + 1));
  values[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = x - knots_[span + 1 - j];
    right[j] = knots_[span + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double denom = right[r + 1] + left[j - r];
      const double temp = denom == 0.0 ? 0.0 : values[r] / denom;
      values[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    values[j] = saved;
  }
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(basis_dim_);
  for (int r = 0; r <= p; ++r) {
    row(span - p + r) = values[r];
  }
  return row;
}

Eigen::MatrixXd SmoothBasis1D::evaluate(std::span<const double> values) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(values.size()), basis_dim_);
  for (std::size_t i = 0; i < values.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = evaluate_one(values[i]);
  }
  return out;
}

Basis1DResult build_basis_1d(std::span<const double> values, int basis_dim, int degree,
                             int penalty_order) {
  if (degree < 1) {
    throw ConfigError("spline degree must be at least 1");
  }
  if (basis_dim < degree + 2) {
    std::ostringstream msg;
    msg << "basis_dim=" << basis_dim << " must be at least degree+2=" << degree + 2;
    throw ConfigError(msg.str());
  }
  if (penalty_order < 0 || penalty_order >= basis_dim) {
    throw ConfigError("penalty_order must be in [0, basis_dim)");
  }
  const std::vector<double> distinct = distinct_sorted(values);
  if (static_cast<int>(distinct.size()) < basis_dim) {
    std::ostringstream msg;
    msg << "smooth needs at least " << basis_dim << " distinct values, got " << distinct.size();
    throw ConfigError(msg.str());
  }

  const int interior = basis_dim - degree - 1;
  std::vector<double> knots;
  knots.reserve(static_cast<std::size_t>(basis_dim + degree + 1));
  knots.insert(knots.end(), static_cast<std::size_t>(degree + 1), distinct.front());
  for (int j = 1; j <= interior; ++j) {
    knots.push_back(quantile(distinct, static_cast<double>(j) / (interior + 1)));
  }
  knots.insert(knots.end(), static_cast<std::size_t>(degree + 1), distinct.back());

  SmoothBasis1D basis(std::move(knots), degree, penalty_order);
  Eigen::MatrixXd design = basis.evaluate(values);
  return {std::move(basis), std::move(design)};
}

SmoothBasis2D::SmoothBasis2D(SmoothBasis1D marginal_x, SmoothBasis1D marginal_y)
    : marginal_x_(std::move(marginal_x)), marginal_y_(std::move(marginal_y)) {
  const Eigen::Index kx = marginal_x_.basis_dim();
  const Eigen::Index ky = marginal_y_.basis_dim();
  const Eigen::MatrixXd& sx = marginal_x_.penalty();
  const Eigen::MatrixXd& sy = marginal_y_.penalty();
  Eigen::MatrixXd along_x = Eigen::MatrixXd::Zero(kx * ky, kx * ky);
  Eigen::MatrixXd along_y = Eigen::MatrixXd::Zero(kx * ky, kx * ky);
  for (Eigen::Index a = 0; a < kx; ++a) {
    for (Eigen::Index b = 0; b < kx; ++b) {
      along_x.block(a * ky, b * ky, ky, ky) = sx(a, b) * Eigen::MatrixXd::Identity(ky, ky);
    }
    along_y.block(a * ky, a * ky, ky, ky) = sy;
  }
  penalties_ = {std::move(along_x), std::move(along_y)};
}

Eigen::MatrixXd SmoothBasis2D::evaluate(std::span<const double> x, std::span<const double> y) const {
  if (x.size() != y.size()) {
    throw DomainError("tensor smooth: coordinate vectors differ in length");
  }
  const Eigen::MatrixXd bx = marginal_x_.evaluate(x);
  const Eigen::MatrixXd by = marginal_y_.evaluate(y);
  const Eigen::Index ky = by.cols();
  Eigen::MatrixXd out(bx.rows(), bx.cols() * ky);
  for (Eigen::Index a = 0; a < bx.cols(); ++a) {
    out.middleCols(a * ky, ky) = by.array().colwise() * bx.col(a).array();
  }
  return out;
}

Basis2DResult build_basis_2d(std::span<const double> x, std::span<const double> y,
                             std::array<int, 2> dims, int degree, int penalty_order) {
  if (x.size() != y.size()) {
    throw DomainError("tensor smooth: coordinate vectors differ in length");
  }
  auto mx = build_basis_1d(x, dims[0], degree, penalty_order);
  auto my = build_basis_1d(y, dims[1], degree, penalty_order);
  SmoothBasis2D basis(std::move(mx.basis), std::move(my.basis));
  Eigen::MatrixXd design = basis.evaluate(x, y);
  return {std::move(basis), std::move(design)};
}

ConstrainedBlock apply_constraint(const Eigen::MatrixXd& block) {
  if (block.cols() < 2) {
    throw ConfigError("sum-to-zero constraint needs a block with at least 2 columns");
  }
  const Eigen::VectorXd column_sums = block.colwise().sum().transpose();
  if (column_sums.norm() <= 1e-12 * std::max(1.0, block.norm())) {
    throw ConfigError("sum-to-zero constraint is rank deficient (all column sums are zero)");
  }
  // Null space of the 1 x K constraint row: the trailing K-1 columns of the
  // full Q from a QR decomposition of its transpose.
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(column_sums);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(block.cols(), block.cols());
  ConstraintTransform transform{q.rightCols(block.cols() - 1)};
  Eigen::MatrixXd constrained = transform.apply(block);
  return {std::move(constrained), std::move(transform)};
}

}  // namespace disentangle
