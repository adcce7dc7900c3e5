#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace mvred {

// Per-partition sampling configuration. Rates are fractions of the
// partition's point count; their sum must stay within [0, 1].
struct SamplePlan {
  double rate_random = 0.0;
  double rate_feature = 0.0;
  int histogram_bins = 32;
  std::uint64_t seed = 0;

  double total_rate() const { return rate_random + rate_feature; }
};

enum class SampleOrigin : std::uint8_t { Random = 0, Feature = 1 };

// Selected local point indices, sorted ascending, with the sampler that
// picked each one.
struct SampleSet {
  std::vector<std::int64_t> indices;
  std::vector<SampleOrigin> origin;

  std::int64_t size() const {
    return static_cast<std::int64_t>(indices.size());
  }
};

// S1: uniform without replacement. Keeps exactly
// max(1, round_half_up(rate * n)) indices for rate > 0 on a nonempty range.
SampleSet sample_random(std::int64_t n, double rate, std::uint64_t seed);

// S2: histogram-equalizing draw over an equal-width histogram of `values`.
// The budget fills bins sparsest-first, so rare value ranges are retained
// completely before dense ones are subsampled; this maximizes the sample
// histogram's entropy for the given budget. Constant input falls back to
// random sampling with a warning.
SampleSet sample_feature(const Eigen::Ref<const Eigen::VectorXd>& values,
                         double rate, int bins, std::uint64_t seed);

// Union of the two samplers at the plan's rates. Collisions keep feature
// provenance and are topped up with extra random picks so the final size is
// exactly max(1, round_half_up(total_rate * n)).
SampleSet sample_combined(const Eigen::Ref<const Eigen::VectorXd>& values,
                          const SamplePlan& plan);

}  // namespace mvred
