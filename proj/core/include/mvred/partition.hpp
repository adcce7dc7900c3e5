#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "mvred/field.hpp"

namespace mvred {

enum class Scheme { Regular, KdTree, Slic };

const char* scheme_name(Scheme s);
Scheme scheme_from_name(const std::string& name);

struct PartitionInfo {
  int id = 0;
  std::int64_t point_count = 0;
  bool has_box = false;       // Regular/KdTree partitions are boxes
  std::array<int, 3> lo{0, 0, 0};
  std::array<int, 3> hi{1, 1, 1};  // exclusive
};

// Disjoint labeling of every grid point. Ids are dense 0..P-1 and every
// partition is nonempty.
struct PartitionSet {
  GridSpec grid;
  Scheme scheme = Scheme::Regular;
  std::vector<std::int32_t> labels;       // length N
  std::vector<PartitionInfo> partitions;  // indexed by id
  std::vector<int> block_dims;            // Regular only: the tiling extents

  int count() const { return static_cast<int>(partitions.size()); }

  // Point indices per partition, ascending, built in one pass.
  std::vector<std::vector<std::int64_t>> build_point_lists() const;

  void validate() const;
};

// P1: non-overlapping tiling with user block extents; edge blocks are
// truncated. Oversized extents are clamped with a warning.
PartitionSet partition_regular(const GridSpec& grid,
                               std::vector<int> block_dims);

// P2 terminating criterion: a node stays a leaf when q <= q_max components
// reach the variance fraction p, or when no axis can be split without
// dropping under min_dim points per side.
struct KdCriterion {
  int q_max = 2;
  double p = 0.99;
  int min_dim = 2;
};

PartitionSet partition_kdtree(const MultivariateField& field,
                              const KdCriterion& crit);

// P3: SLIC superpixels over the first-PC scalar field of a single global
// PCA fit. compactness < 0 selects the default of 10x the first-PC
// standard deviation.
struct SlicParams {
  int n_superpixels = 64;
  double compactness = -1.0;
  int max_iters = 10;
  bool enforce_connectivity = true;
};

// Per-iteration view of the clustering, used by tests and benchmarks.
struct SlicTrace {
  std::vector<double> objective;  // summed squared assignment distance
  int iterations = 0;
};

PartitionSet partition_slic(const MultivariateField& field,
                            const SlicParams& params,
                            SlicTrace* trace = nullptr);

// Per-point map of the component count its partition needs to reach the
// variance fraction p; renders well with the categorical colormap.
ScalarField pc_count_map(const MultivariateField& field,
                         const PartitionSet& pset, double p);

// Rows of the field belonging to one partition, gathered in index order.
RowMatrixXd gather_rows(const MultivariateField& field,
                        const std::vector<std::int64_t>& points);

}  // namespace mvred
