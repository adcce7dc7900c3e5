#include "mvred/partition.hpp"

#include <algorithm>
#include <iostream>
#include <string>
#include <tuple>

#include "mvred/error.hpp"
#include "mvred/parallel.hpp"
#include "mvred/pca.hpp"

namespace mvred {

const char* scheme_name(Scheme s) {
  switch (s) {
    case Scheme::Regular: return "regular";
    case Scheme::KdTree: return "kdtree";
    default: return "slic";
  }
}

Scheme scheme_from_name(const std::string& name) {
  if (name == "regular") return Scheme::Regular;
  if (name == "kdtree") return Scheme::KdTree;
  if (name == "slic") return Scheme::Slic;
  throw ConfigError("unknown partition scheme '" + name + "'");
}

std::vector<std::vector<std::int64_t>> PartitionSet::build_point_lists()
    const {
  std::vector<std::vector<std::int64_t>> lists(partitions.size());
  for (std::size_t p = 0; p < partitions.size(); ++p)
    lists[p].reserve(static_cast<std::size_t>(partitions[p].point_count));
  for (std::size_t i = 0; i < labels.size(); ++i)
    lists[static_cast<std::size_t>(labels[i])].push_back(
        static_cast<std::int64_t>(i));
  return lists;
}

void PartitionSet::validate() const {
  grid.validate();
  if (static_cast<std::int64_t>(labels.size()) != grid.num_points())
    throw ConfigError("label array length does not match grid");
  if (partitions.empty()) throw ConfigError("partition set is empty");
  std::vector<std::int64_t> counts(partitions.size(), 0);
  for (std::int32_t l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= partitions.size())
      throw ConfigError("label " + std::to_string(l) + " out of range");
    ++counts[static_cast<std::size_t>(l)];
  }
  for (std::size_t p = 0; p < partitions.size(); ++p) {
    if (counts[p] == 0)
      throw ConfigError("partition " + std::to_string(p) + " is empty");
    if (counts[p] != partitions[p].point_count)
      throw ConfigError("partition " + std::to_string(p) +
                        " point count mismatch");
    if (partitions[p].id != static_cast<int>(p))
      throw ConfigError("partition ids must be dense and ordered");
  }
}

RowMatrixXd gather_rows(const MultivariateField& field,
                        const std::vector<std::int64_t>& points) {
  RowMatrixXd out(static_cast<Eigen::Index>(points.size()),
                  field.data.cols());
  for (std::size_t i = 0; i < points.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = field.data.row(points[i]);
  return out;
}

namespace {

struct Box {
  std::array<int, 3> lo{0, 0, 0};
  std::array<int, 3> hi{1, 1, 1};

  int extent(int axis) const {
    return hi[static_cast<std::size_t>(axis)] -
           lo[static_cast<std::size_t>(axis)];
  }

  std::int64_t volume(int ndims) const {
    std::int64_t v = 1;
    for (int ax = 0; ax < ndims; ++ax) v *= extent(ax);
    return v;
  }
};

void fill_box_labels(const GridSpec& grid, const Box& box, std::int32_t id,
                     std::vector<std::int32_t>& labels) {
  for (int z = box.lo[2]; z < box.hi[2]; ++z)
    for (int y = box.lo[1]; y < box.hi[1]; ++y) {
      const std::int64_t base = grid.index({box.lo[0], y, z});
      for (int x = 0; x < box.extent(0); ++x)
        labels[static_cast<std::size_t>(base + x)] = id;
    }
}

PartitionInfo info_from_box(int id, const Box& box, int ndims) {
  PartitionInfo info;
  info.id = id;
  info.point_count = box.volume(ndims);
  info.has_box = true;
  info.lo = box.lo;
  info.hi = box.hi;
  return info;
}

}  // namespace

PartitionSet partition_regular(const GridSpec& grid,
                               std::vector<int> block_dims) {
  grid.validate();
  if (static_cast<int>(block_dims.size()) != grid.ndims())
    throw ConfigError("block_dims must match the grid dimensionality");
  for (int ax = 0; ax < grid.ndims(); ++ax) {
    auto& b = block_dims[static_cast<std::size_t>(ax)];
    if (b < 1) throw ConfigError("block extents must be >= 1");
    if (b > grid.dim(ax)) {
      std::cerr << "[mvred] warning: block extent " << b << " exceeds axis "
                << ax << " extent " << grid.dim(ax) << ", clamping\n";
      b = grid.dim(ax);
    }
  }

  std::array<int, 3> nblocks{1, 1, 1};
  for (int ax = 0; ax < grid.ndims(); ++ax)
    nblocks[static_cast<std::size_t>(ax)] =
        (grid.dim(ax) + block_dims[static_cast<std::size_t>(ax)] - 1) /
        block_dims[static_cast<std::size_t>(ax)];

  PartitionSet pset;
  pset.grid = grid;
  pset.scheme = Scheme::Regular;
  pset.block_dims = block_dims;
  pset.labels.assign(static_cast<std::size_t>(grid.num_points()), -1);

  int id = 0;
  for (int bz = 0; bz < nblocks[2]; ++bz)
    for (int by = 0; by < nblocks[1]; ++by)
      for (int bx = 0; bx < nblocks[0]; ++bx) {
        Box box;
        const std::array<int, 3> b{bx, by, bz};
        for (int ax = 0; ax < grid.ndims(); ++ax) {
          const int step = block_dims[static_cast<std::size_t>(ax)];
          box.lo[static_cast<std::size_t>(ax)] =
              b[static_cast<std::size_t>(ax)] * step;
          box.hi[static_cast<std::size_t>(ax)] = std::min(
              grid.dim(ax), box.lo[static_cast<std::size_t>(ax)] + step);
        }
        fill_box_labels(grid, box, id, pset.labels);
        pset.partitions.push_back(info_from_box(id, box, grid.ndims()));
        ++id;
      }
  return pset;
}

namespace {

// Covariance spectrum of the points inside a box; rows along x are
// contiguous, so the gather copies whole row blocks.
Eigen::VectorXd box_spectrum(const MultivariateField& field, const Box& box) {
  const auto d = field.data.cols();
  const std::int64_t n = box.volume(field.grid.ndims());
  RowMatrixXd x(n, d);
  std::int64_t row = 0;
  for (int z = box.lo[2]; z < box.hi[2]; ++z)
    for (int y = box.lo[1]; y < box.hi[1]; ++y) {
      const std::int64_t base = field.grid.index({box.lo[0], y, z});
      const int run = box.extent(0);
      x.middleRows(row, run) = field.data.middleRows(base, run);
      row += run;
    }
  if (n == 1) return Eigen::VectorXd::Zero(d);
  const Eigen::RowVectorXd mu = x.colwise().mean();
  const RowMatrixXd centered = x.rowwise() - mu;
  const Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(n - 1);
  return covariance_eigenvalues(cov);
}

}  // namespace

PartitionSet partition_kdtree(const MultivariateField& field,
                              const KdCriterion& crit) {
  field.validate();
  const int d = field.num_vars();
  if (crit.q_max < 1 || crit.q_max > d)
    throw ConfigError("q_max must lie in [1, d]");
  if (!(crit.p > 0.0 && crit.p <= 1.0))
    throw ConfigError("variance fraction must lie in (0, 1]");
  if (crit.min_dim < 2) throw ConfigError("min_dim must be >= 2");

  Box root;
  for (int ax = 0; ax < field.grid.ndims(); ++ax)
    root.hi[static_cast<std::size_t>(ax)] = field.grid.dim(ax);

  // Level-synchronous expansion: each level's nodes are examined in
  // parallel, and the deterministic tree structure makes the result
  // schedule-independent.
  std::vector<Box> frontier{root};
  std::vector<Box> leaves;
  while (!frontier.empty()) {
    std::vector<std::uint8_t> is_leaf(frontier.size(), 0);
    parallel_for(static_cast<std::int64_t>(frontier.size()),
                 [&](std::int64_t i) {
                   const Box& box = frontier[static_cast<std::size_t>(i)];
                   const Eigen::VectorXd ev = box_spectrum(field, box);
                   if (select_q(ev, crit.p) <= crit.q_max) {
                     is_leaf[static_cast<std::size_t>(i)] = 1;
                     return;
                   }
                   int longest = 0;
                   for (int ax = 1; ax < field.grid.ndims(); ++ax)
                     if (box.extent(ax) > box.extent(longest)) longest = ax;
                   if (box.extent(longest) < 2 * crit.min_dim)
                     is_leaf[static_cast<std::size_t>(i)] = 1;
                 });

    std::vector<Box> next;
    for (std::size_t i = 0; i < frontier.size(); ++i) {
      const Box& box = frontier[i];
      if (is_leaf[i]) {
        leaves.push_back(box);
        continue;
      }
      int axis = 0;
      for (int ax = 1; ax < field.grid.ndims(); ++ax)
        if (box.extent(ax) > box.extent(axis)) axis = ax;
      // median point split: the left child takes the upper half count
      const int mid = box.lo[static_cast<std::size_t>(axis)] +
                      (box.extent(axis) + 1) / 2;
      Box left = box, right = box;
      left.hi[static_cast<std::size_t>(axis)] = mid;
      right.lo[static_cast<std::size_t>(axis)] = mid;
      next.push_back(left);
      next.push_back(right);
    }
    frontier = std::move(next);
  }

  // Stable spatial order for labeling, independent of expansion order.
  std::sort(leaves.begin(), leaves.end(), [](const Box& a, const Box& b) {
    return std::tie(a.lo[2], a.lo[1], a.lo[0]) <
           std::tie(b.lo[2], b.lo[1], b.lo[0]);
  });

  PartitionSet pset;
  pset.grid = field.grid;
  pset.scheme = Scheme::KdTree;
  pset.labels.assign(static_cast<std::size_t>(field.grid.num_points()), -1);
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    fill_box_labels(field.grid, leaves[i], static_cast<std::int32_t>(i),
                    pset.labels);
    pset.partitions.push_back(
        info_from_box(static_cast<int>(i), leaves[i], field.grid.ndims()));
  }
  return pset;
}

ScalarField pc_count_map(const MultivariateField& field,
                         const PartitionSet& pset, double p) {
  if (field.grid != pset.grid)
    throw ConfigError("field and partition set grids differ");
  const auto lists = pset.build_point_lists();
  std::vector<int> q_of(lists.size(), 0);
  parallel_for(static_cast<std::int64_t>(lists.size()), [&](std::int64_t i) {
    const auto model = fit_pca(gather_rows(field, lists[static_cast<std::size_t>(i)]));
    q_of[static_cast<std::size_t>(i)] = select_q(model, p);
  });

  ScalarField map;
  map.grid = field.grid;
  map.values.resize(field.num_points());
  for (std::size_t i = 0; i < pset.labels.size(); ++i)
    map.values[static_cast<Eigen::Index>(i)] =
        q_of[static_cast<std::size_t>(pset.labels[i])];
  return map;
}

}  // namespace mvred
