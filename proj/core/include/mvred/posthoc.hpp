#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mvred/bundle.hpp"

namespace mvred {

// Reconstructed sample rows in original variable units, sorted by global
// point index.
struct SparseReconstruction {
  std::vector<std::int64_t> indices;
  std::vector<std::int32_t> partition_ids;
  RowMatrixXd values;  // one row per sample, d columns
};

// X_s = W_s C_q + mu per partition; standardization is inverted so values
// come back in original units. An optional id filter restricts the output.
SparseReconstruction reconstruct_samples(
    const ReducedBundle& bundle,
    const std::vector<int>* partition_filter = nullptr);

struct ErrorReport {
  // Mean over partitions of ||X - X_hat||^2 / ||X - mu||^2 with the stored
  // model applied to every row of the partition; bounded by
  // 1 - variance_target.
  double norm_mv_recon_error = 0;
  // Same ratio restricted to the stored sample rows.
  double norm_mv_recon_error_sampled = 0;
  std::vector<double> var_rmse;  // per-variable RMSE / global value range
  double min_var_rmse = 0;
  double max_var_rmse = 0;
  std::vector<bool> var_degenerate;  // zero-range variables, RMSE forced 0
};

// Evaluation-mode comparison against the retained original field.
ErrorReport error_report(const ReducedBundle& bundle,
                         const MultivariateField& original);

// Desired values for a subset of variables, in original units.
struct QuerySpec {
  std::vector<std::pair<std::string, double>> values;
};

struct QueryResult {
  struct Item {
    std::int64_t index;       // global point index of the sample
    std::int32_t partition;   // owning partition id
    double distance;          // Euclidean distance in PC space
  };
  std::vector<Item> items;    // sorted by global index
  double min_distance = 0;    // display-normalization bounds
  double max_distance = 0;

  std::vector<double> normalized() const;
};

// Projects the query into each partition's PC space (unspecified variables
// pinned at the partition mean) and ranks the stored samples by distance.
QueryResult query(const ReducedBundle& bundle, const QuerySpec& spec);

// Per-partition second-moment reconstruction from the stored eigensystem:
// Cov = C_full^T diag(EV) C_full, Cor = D^-1 Cov D^-1. Variables with zero
// variance are flagged undefined rather than zeroed.
struct CorrelationReport {
  std::vector<Eigen::MatrixXd> cov;            // per partition, d x d
  std::vector<Eigen::MatrixXd> cor;            // NaN where undefined
  std::vector<std::vector<bool>> var_defined;  // per partition, per variable
};

CorrelationReport correlation(const ReducedBundle& bundle);

// Per-point raster view of one correlation entry across partitions.
struct CorrelationMap {
  ScalarField field;            // undefined partitions carry 0
  std::vector<bool> defined;    // per point
};

CorrelationMap correlation_map(const ReducedBundle& bundle,
                               const std::string& var_i,
                               const std::string& var_j);

}  // namespace mvred
