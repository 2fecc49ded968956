#pragma once

#include <array>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace disentangle {

/// Order-th difference penalty D^T D on dim coefficients.
Eigen::MatrixXd difference_penalty(int dim, int order);

/// Clamped B-spline basis with knots at quantiles of the training values and a
/// difference penalty on adjacent coefficients (P-spline).
class SmoothBasis1D {
 public:
  SmoothBasis1D(std::vector<double> knots, int degree, int penalty_order);

  /// Evaluates all basis functions at each value (rows = values). Values
  /// outside the boundary knots are clamped to the boundary.
  Eigen::MatrixXd evaluate(std::span<const double> values) const;
  Eigen::RowVectorXd evaluate_one(double value) const;

  const std::vector<double>& knots() const { return knots_; }
  int degree() const { return degree_; }
  int basis_dim() const { return basis_dim_; }
  int penalty_order() const { return penalty_order_; }
  const Eigen::MatrixXd& penalty() const { return penalty_; }
  double lower() const { return knots_.front(); }
  double upper() const { return knots_.back(); }

 private:
  std::vector<double> knots_;
  int degree_;
  int basis_dim_;
  int penalty_order_;
  Eigen::MatrixXd penalty_;
};

struct Basis1DResult {
  SmoothBasis1D basis;
  Eigen::MatrixXd design;
};

Basis1DResult build_basis_1d(std::span<const double> values, int basis_dim, int degree = 3,
                             int penalty_order = 2);

/// Tensor product of two marginal bases. Column index is ix * dim_y + iy.
class SmoothBasis2D {
 public:
  SmoothBasis2D(SmoothBasis1D marginal_x, SmoothBasis1D marginal_y);

  Eigen::MatrixXd evaluate(std::span<const double> x, std::span<const double> y) const;

  const SmoothBasis1D& marginal_x() const { return marginal_x_; }
  const SmoothBasis1D& marginal_y() const { return marginal_y_; }
  int basis_dim() const { return marginal_x_.basis_dim() * marginal_y_.basis_dim(); }
  /// [0]: S_x kron I_y (roughness along x), [1]: I_x kron S_y.
  const std::array<Eigen::MatrixXd, 2>& penalties() const { return penalties_; }

 private:
  SmoothBasis1D marginal_x_;
  SmoothBasis1D marginal_y_;
  std::array<Eigen::MatrixXd, 2> penalties_;
};

struct Basis2DResult {
  SmoothBasis2D basis;
  Eigen::MatrixXd design;
};

Basis2DResult build_basis_2d(std::span<const double> x, std::span<const double> y,
                             std::array<int, 2> dims, int degree = 3, int penalty_order = 2);

/// Sum-to-zero reparameterization: the constrained block is block * projection,
/// whose columns sum to zero over the rows used to build it.
struct ConstraintTransform {
  Eigen::MatrixXd projection;  // K x (K-1), orthonormal columns

  Eigen::MatrixXd apply(const Eigen::MatrixXd& block) const { return block * projection; }
  Eigen::VectorXd expand(const Eigen::VectorXd& constrained) const { return projection * constrained; }
  Eigen::MatrixXd constrain_penalty(const Eigen::MatrixXd& penalty) const {
    return projection.transpose() * penalty * projection;
  }
};

struct ConstrainedBlock {
  Eigen::MatrixXd design;
  ConstraintTransform transform;
};

ConstrainedBlock apply_constraint(const Eigen::MatrixXd& block);

}  // namespace disentangle
