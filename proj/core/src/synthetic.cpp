#include "mvred/synthetic.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <string>

#include "mvred/error.hpp"
#include "mvred/rng.hpp"

namespace mvred {

namespace {

// Factor n into ndims near-equal region counts, largest along x.
std::vector<int> factor_regions(int n, int ndims) {
  std::vector<int> counts(static_cast<std::size_t>(ndims), 1);
  if (ndims == 2) {
    int b = static_cast<int>(std::sqrt(static_cast<double>(n)));
    while (n % b != 0) --b;
    counts[0] = n / b;
    counts[1] = b;
  } else {
    int c = static_cast<int>(std::cbrt(static_cast<double>(n)));
    while (n % c != 0) --c;
    const int rest = n / c;
    int b = static_cast<int>(std::sqrt(static_cast<double>(rest)));
    while (rest % b != 0) --b;
    counts[0] = rest / b;
    counts[1] = b;
    counts[2] = c;
  }
  return counts;
}

std::vector<int> tile_labels(const GridSpec& grid, int n_regions) {
  const auto counts = factor_regions(n_regions, grid.ndims());
  for (int ax = 0; ax < grid.ndims(); ++ax)
    if (counts[static_cast<std::size_t>(ax)] > grid.dim(ax))
      throw ConfigError("n_regions produces zero-area regions on axis " +
                        std::to_string(ax));

  auto tile_of = [&](int coord, int axis) {
    const auto c = static_cast<std::int64_t>(
        counts[static_cast<std::size_t>(axis)]);
    return static_cast<int>(std::min<std::int64_t>(
        c - 1, static_cast<std::int64_t>(coord) * c / grid.dim(axis)));
  };

  const std::int64_t n = grid.num_points();
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const auto c = grid.coords(i);
    int label = tile_of(c[0], 0);
    int stride = counts[0];
    for (int ax = 1; ax < grid.ndims(); ++ax) {
      label += stride * tile_of(c[ax], ax);
      stride *= counts[static_cast<std::size_t>(ax)];
    }
    labels[static_cast<std::size_t>(i)] = label;
  }
  return labels;
}

std::vector<int> voronoi_labels(const GridSpec& grid, int n_regions,
                                Rng& rng) {
  const std::int64_t n = grid.num_points();
  if (n_regions > n)
    throw ConfigError("n_regions exceeds the number of grid points");

  // Distinct seed sites via partial Fisher-Yates.
  std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  std::vector<std::array<int, 3>> sites;
  sites.reserve(static_cast<std::size_t>(n_regions));
  for (int i = 0; i < n_regions; ++i) {
    const auto j =
        static_cast<std::int64_t>(i) +
        static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(perm[static_cast<std::size_t>(i)],
              perm[static_cast<std::size_t>(j)]);
    sites.push_back(grid.coords(perm[static_cast<std::size_t>(i)]));
  }

  std::vector<int> labels(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const auto c = grid.coords(i);
    int best = 0;
    std::int64_t best_d2 = -1;
    for (int s = 0; s < n_regions; ++s) {
      std::int64_t d2 = 0;
      for (int ax = 0; ax < 3; ++ax) {
        const std::int64_t d = c[static_cast<std::size_t>(ax)] -
                               sites[static_cast<std::size_t>(s)]
                                    [static_cast<std::size_t>(ax)];
        d2 += d * d;
      }
      if (best_d2 < 0 || d2 < best_d2) {
        best_d2 = d2;
        best = s;
      }
    }
    labels[static_cast<std::size_t>(i)] = best;
  }
  return labels;
}

}  // namespace

SyntheticField gen_synthetic(const SyntheticSpec& spec) {
  spec.grid.validate();
  const int d = spec.num_vars;
  if (d < 1) throw ConfigError("num_vars must be >= 1");
  if (spec.n_regions < 1) throw ConfigError("n_regions must be >= 1");
  if (spec.noise_sigma < 0) throw ConfigError("noise_sigma must be >= 0");
  if (spec.latent_dims.empty())
    throw ConfigError("latent_dims must not be empty");

  std::vector<int> ranks = spec.latent_dims;
  if (ranks.size() == 1)
    ranks.assign(static_cast<std::size_t>(spec.n_regions), ranks[0]);
  if (ranks.size() != static_cast<std::size_t>(spec.n_regions))
    throw ConfigError("latent_dims must have one entry or one per region");
  for (int k : ranks)
    if (k < 0 || k >= d)
      throw ConfigError("latent rank " + std::to_string(k) +
                        " must satisfy 0 <= k < num_vars=" + std::to_string(d));

  Rng rng(spec.seed);
  const std::int64_t n = spec.grid.num_points();

  SyntheticField out;
  out.latent_dims = ranks;
  out.region_labels = spec.layout == RegionLayout::Tiles
                          ? tile_labels(spec.grid, spec.n_regions)
                          : voronoi_labels(spec.grid, spec.n_regions, rng);

  std::vector<std::vector<std::int64_t>> members(
      static_cast<std::size_t>(spec.n_regions));
  for (std::int64_t i = 0; i < n; ++i)
    members[static_cast<std::size_t>(out.region_labels[static_cast<std::size_t>(i)])]
        .push_back(i);
  for (int r = 0; r < spec.n_regions; ++r)
    if (members[static_cast<std::size_t>(r)].empty())
      throw ConfigError("region " + std::to_string(r) + " is empty");

  RowMatrixXd data(n, d);
  for (int r = 0; r < spec.n_regions; ++r) {
    const auto& pts = members[static_cast<std::size_t>(r)];
    const auto nr = static_cast<Eigen::Index>(pts.size());
    const int k = ranks[static_cast<std::size_t>(r)];
    if (k > 0 && nr < k + 1)
      throw ConfigError("region " + std::to_string(r) + " has " +
                        std::to_string(nr) + " points, too few for rank " +
                        std::to_string(k));

    Eigen::VectorXd mean(d);
    for (int j = 0; j < d; ++j) mean[j] = spec.mean_spread * rng.normal();

    Eigen::MatrixXd block = Eigen::MatrixXd::Zero(nr, d);
    if (k > 0) {
      // Latent factors, centered and orthonormalized over the region so the
      // planted spectrum is exact rather than approximate.
      Eigen::MatrixXd latent(nr, k);
      for (Eigen::Index i = 0; i < nr; ++i)
        for (int j = 0; j < k; ++j) latent(i, j) = rng.normal();
      latent.rowwise() -= latent.colwise().mean();
      Eigen::HouseholderQR<Eigen::MatrixXd> lqr(latent);
      Eigen::MatrixXd z = lqr.householderQ() * Eigen::MatrixXd::Identity(nr, k);
      z.rowwise() -= z.colwise().mean();

      // Orthonormal d x k mixing map.
      Eigen::MatrixXd raw(d, k);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < k; ++j) raw(i, j) = rng.normal();
      Eigen::HouseholderQR<Eigen::MatrixXd> mqr(raw);
      const Eigen::MatrixXd map =
          mqr.householderQ() * Eigen::MatrixXd::Identity(d, k);

      Eigen::VectorXd scales(k);
      for (int j = 0; j < k; ++j)
        scales[j] = spec.latent_scale * std::pow(0.8, j) *
                    std::sqrt(static_cast<double>(nr - 1));
      block = z * scales.asDiagonal() * map.transpose();
    }

    for (Eigen::Index i = 0; i < nr; ++i) {
      for (int j = 0; j < d; ++j) {
        double v = block(i, j) + mean[j];
        if (spec.noise_sigma > 0) v += spec.noise_sigma * rng.normal();
        data(pts[static_cast<std::size_t>(i)], j) = v;
      }
    }
  }

  out.field.grid = spec.grid;
  out.field.data = std::move(data);
  out.field.source_dtype = Dtype::f64;
  out.field.var_names.reserve(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j)
    out.field.var_names.push_back("v" + std::to_string(j));
  out.field.var_units.assign(static_cast<std::size_t>(d), "");
  out.field.validate();
  return out;
}

}  // namespace mvred
