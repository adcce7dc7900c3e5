#include "mvred/pca.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <string>

#include "mvred/error.hpp"

namespace mvred {

namespace {

void canonicalize_signs(Eigen::MatrixXd& pcs) {
  for (Eigen::Index r = 0; r < pcs.rows(); ++r) {
    Eigen::Index pivot = 0;
    double best = -1.0;
    for (Eigen::Index j = 0; j < pcs.cols(); ++j) {
      const double mag = std::abs(pcs(r, j));
      if (mag > best) {
        best = mag;
        pivot = j;
      }
    }
    if (pcs(r, pivot) < 0.0) pcs.row(r) = -pcs.row(r);
  }
}

}  // namespace

LocalPCAModel fit_pca(const Eigen::Ref<const RowMatrixXd>& x) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (n < 1 || d < 1)
    throw ComputeError("fit_pca needs at least one row and one column");
  if (!x.allFinite()) throw ComputeError("fit_pca input has non-finite values");

  LocalPCAModel model;
  model.n_points = n;
  model.mu = x.colwise().mean();

  if (n == 1) {
    model.c_full = Eigen::MatrixXd::Identity(d, d);
    model.ev = Eigen::VectorXd::Zero(d);
    model.q = static_cast<int>(d);
    return model;
  }

  const RowMatrixXd centered = x.rowwise() - model.mu.transpose();
  const Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success)
    throw ComputeError("eigendecomposition failed");

  // Eigen reports ascending order; flip to nonincreasing.
  model.ev = solver.eigenvalues().reverse();
  model.ev = model.ev.cwiseMax(0.0);
  model.c_full = solver.eigenvectors().rowwise().reverse().transpose();
  canonicalize_signs(model.c_full);
  model.q = static_cast<int>(d);
  return model;
}

int select_q(const Eigen::Ref<const Eigen::VectorXd>& ev,
             double variance_target) {
  if (!(variance_target > 0.0 && variance_target <= 1.0))
    throw ConfigError("variance target must lie in (0, 1], got " +
                      std::to_string(variance_target));
  const double total = ev.sum();
  if (!(total > 0.0)) return 1;
  double cum = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    cum += ev[i];
    if (cum / total >= variance_target) return static_cast<int>(i) + 1;
  }
  return static_cast<int>(ev.size());
}

int select_q(const LocalPCAModel& model, double variance_target) {
  return select_q(model.ev, variance_target);
}

RowMatrixXd project(const LocalPCAModel& model,
                    const Eigen::Ref<const RowMatrixXd>& x, int q) {
  if (q <= 0) q = model.q;
  if (q < 1 || q > model.dim())
    throw ConfigError("component count out of range");
  if (x.cols() != model.dim())
    throw ConfigError("projection input has " + std::to_string(x.cols()) +
                      " variables, model has " + std::to_string(model.dim()));
  return (x.rowwise() - model.mu.transpose()) *
         model.c_full.topRows(q).transpose();
}

RowMatrixXd reconstruct(const LocalPCAModel& model,
                        const Eigen::Ref<const RowMatrixXd>& w) {
  const auto q = static_cast<int>(w.cols());
  if (q < 1 || q > model.dim())
    throw ConfigError("projected data has " + std::to_string(q) +
                      " components, model has " + std::to_string(model.dim()));
  RowMatrixXd out = w * model.c_full.topRows(q);
  out.rowwise() += model.mu.transpose();
  return out;
}

double explained_variance_ratio(const LocalPCAModel& model, int q) {
  if (q < 1 || q > model.dim())
    throw ConfigError("component count out of range");
  const double total = model.ev.sum();
  if (!(total > 0.0)) return 1.0;
  return model.ev.head(q).sum() / total;
}

double normalized_residual(const Eigen::Ref<const RowMatrixXd>& x,
                           const LocalPCAModel& model, int q) {
  if (q < 1 || q > model.dim())
    throw ConfigError("component count out of range");
  if (x.cols() != model.dim()) throw ConfigError("dimension mismatch");
  const RowMatrixXd centered = x.rowwise() - model.mu.transpose();
  const double denom = centered.squaredNorm();
  if (!(denom > 0.0)) return 0.0;
  const auto basis = model.c_full.topRows(q);
  const RowMatrixXd residual = centered - (centered * basis.transpose()) * basis;
  return residual.squaredNorm() / denom;
}

Eigen::VectorXd covariance_eigenvalues(
    const Eigen::Ref<const Eigen::MatrixXd>& cov) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(
      cov, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success)
    throw ComputeError("eigendecomposition failed");
  Eigen::VectorXd ev = solver.eigenvalues().reverse();
  return ev.cwiseMax(0.0);
}

}  // namespace mvred
