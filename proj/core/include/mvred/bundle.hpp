#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mvred/field.hpp"
#include "mvred/partition.hpp"
#include "mvred/pca.hpp"
#include "mvred/sampling.hpp"

namespace mvred {

inline constexpr std::uint32_t kBundleFormatVersion = 1;

// Everything retained for one partition: the full PC basis, its spectrum,
// the mean, and the projected sample rows.
struct ReducedPartition {
  LocalPCAModel model;
  std::vector<std::int64_t> sample_indices;  // global point indices, sorted
  RowMatrixXd w_s;                           // n_s x model.q
};

// Optional per-variable z-scoring applied before the PCA stage. `scale`
// holds the divisor actually used (1 for zero-variance variables), so the
// transform is always invertible.
struct Standardization {
  bool enabled = false;
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
};

// The reduced-data product. Self-contained: every post-hoc analysis reads
// only this structure; the raw field is needed again solely for
// evaluation-time error reports.
struct ReducedBundle {
  std::uint32_t format_version = kBundleFormatVersion;
  GridSpec grid;
  std::vector<std::string> var_names;
  std::vector<std::string> var_units;
  Scheme scheme = Scheme::Regular;
  double variance_target = 0.999;
  SamplePlan plan;
  Standardization standardization;
  Dtype precision = Dtype::f32;     // stored precision of model/sample reals
  Dtype source_dtype = Dtype::f64;  // precision of the original field

  std::vector<int> block_dims;            // Regular geometry
  std::vector<PartitionInfo> partitions;  // per-partition descriptors
  std::vector<std::int32_t> labels;       // length N, always materialized
  std::vector<ReducedPartition> parts;    // ordered by partition id

  int num_vars() const { return static_cast<int>(var_names.size()); }
  std::int64_t num_points() const { return grid.num_points(); }
  int num_partitions() const { return static_cast<int>(parts.size()); }
  int var_index(const std::string& name) const;

  void validate() const;
};

struct ReduceOptions {
  double variance_target = 0.999;
  SamplePlan plan;
  Dtype precision = Dtype::f32;
  bool standardize = false;
};

// The pipeline: per partition fit -> select q -> project -> sample on the
// local first PC -> keep the sampled rows. Values are quantized to the
// stored precision immediately, so in-memory analyses match what a reader
// of the file would see.
ReducedBundle reduce(const MultivariateField& field, const PartitionSet& pset,
                     const ReduceOptions& options);

// Label/geometry view of the bundle, usable wherever a PartitionSet is.
PartitionSet partition_view(const ReducedBundle& bundle);

struct SizeReport {
  std::int64_t raw_bytes = 0;
  std::int64_t reduced_bytes = 0;
  std::int64_t header_bytes = 0;    // magic + version + JSON (incl. geometry)
  std::int64_t model_bytes = 0;     // mu + EV + C_full
  std::int64_t index_bytes = 0;     // sample indices
  std::int64_t ws_bytes = 0;        // projected samples
  std::int64_t overhead_bytes = 0;  // per-record fixed fields + checksum
  double reduction_ratio = 0;       // raw / reduced
};

// Exact byte accounting of the serialized form; the components sum to
// reduced_bytes, which equals the size save_bundle writes.
SizeReport size_report(const ReducedBundle& bundle);

void save_bundle(const ReducedBundle& bundle,
                 const std::filesystem::path& path);
ReducedBundle load_bundle(const std::filesystem::path& path);

}  // namespace mvred
