#pragma once

#include <cstdint>
#include <vector>

#include "mvred/field.hpp"

namespace mvred {

enum class RegionLayout {
  Tiles,    // near-square axis-aligned tiling of the grid
  Voronoi,  // nearest-site cells around random seed points
};

struct SyntheticSpec {
  GridSpec grid;
  int num_vars = 4;
  int n_regions = 1;
  // Latent rank per region, each in [0, num_vars). A single entry is
  // broadcast to all regions; 0 means a constant region.
  std::vector<int> latent_dims{2};
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  RegionLayout layout = RegionLayout::Tiles;
  double latent_scale = 1.0;  // sqrt of the leading planted eigenvalue
  double mean_spread = 8.0;   // scale of per-region mean offsets
};

// A generated field plus the ground truth the tests check against.
struct SyntheticField {
  MultivariateField field;
  std::vector<int> region_labels;  // length N
  std::vector<int> latent_dims;    // resolved per-region ranks
};

// Deterministic piecewise-linear generator. Each region holds data of
// exactly its planted latent rank: noise-free region covariance eigenvalues
// are (latent_scale * 0.8^j)^2 for j < k_r and zero beyond, which makes
// component-count recovery checkable without reference datasets.
SyntheticField gen_synthetic(const SyntheticSpec& spec);

}  // namespace mvred
