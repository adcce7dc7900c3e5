#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "mvred/field.hpp"

namespace mvred {

// Principal component model of one partition. Rows of c_full are the unit
// principal components, ordered by nonincreasing explained variance. The
// model is immutable once fitted except for q, which callers set after
// choosing a variance target.
struct LocalPCAModel {
  Eigen::VectorXd mu;      // d
  Eigen::MatrixXd c_full;  // d x d, row i = i-th PC
  Eigen::VectorXd ev;      // d, nonincreasing, >= 0
  int q = 0;               // retained component count, 1..d
  std::int64_t n_points = 0;

  int dim() const { return static_cast<int>(mu.size()); }
};

// Covariance eigendecomposition of an n x d sample matrix. Eigenvector
// signs are canonicalized (largest-magnitude entry positive, ties to the
// lowest index), so two fits of the same data are bit-identical. q starts
// at d.
LocalPCAModel fit_pca(const Eigen::Ref<const RowMatrixXd>& x);

// Smallest q whose cumulative explained-variance fraction reaches
// variance_target; 1 for constant data.
int select_q(const Eigen::Ref<const Eigen::VectorXd>& ev,
             double variance_target);
int select_q(const LocalPCAModel& model, double variance_target);

// W = (X - mu) C_q^T with the model's first `q` components (model.q when
// q <= 0).
RowMatrixXd project(const LocalPCAModel& model,
                    const Eigen::Ref<const RowMatrixXd>& x, int q = 0);

// X_hat = W C_q + mu; the component count is taken from w's column count.
RowMatrixXd reconstruct(const LocalPCAModel& model,
                        const Eigen::Ref<const RowMatrixXd>& w);

// Cumulative eigenvalue fraction at q (1 when total variance is 0).
double explained_variance_ratio(const LocalPCAModel& model, int q);

// ||X - (W C_q + mu)||^2 / ||X - mu||^2 for the given data and component
// count; 0 when the centered norm vanishes. Satisfies
// explained_variance_ratio(q) + normalized_residual(q) == 1 on the data
// the model was fitted to.
double normalized_residual(const Eigen::Ref<const RowMatrixXd>& x,
                           const LocalPCAModel& model, int q);

// Sorted eigenvalues (descending, clamped >= 0) of a symmetric matrix;
// shared by the k-d tree criterion, which needs spectra but not bases.
Eigen::VectorXd covariance_eigenvalues(
    const Eigen::Ref<const Eigen::MatrixXd>& cov);

}  // namespace mvred
