#include "mvred/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "mvred/error.hpp"
#include "mvred/rng.hpp"

namespace mvred {

namespace {

std::int64_t round_half_up(double x) {
  return static_cast<std::int64_t>(std::floor(x + 0.5));
}

std::int64_t budget_for(double rate, std::int64_t n) {
  if (n <= 0 || rate <= 0.0) return 0;
  return std::clamp<std::int64_t>(round_half_up(rate * static_cast<double>(n)),
                                  1, n);
}

void check_rate(double rate) {
  if (!(rate >= 0.0 && rate <= 1.0))
    throw ConfigError("sampling rate must lie in [0, 1]");
}

// Lazily extendable partial Fisher-Yates shuffle: draw(k) returns the k-th
// element of a uniformly random permutation of [0, n).
class PermutationStream {
 public:
  PermutationStream(std::int64_t n, Rng& rng) : rng_(rng) {
    perm_.resize(static_cast<std::size_t>(n));
    std::iota(perm_.begin(), perm_.end(), std::int64_t{0});
  }

  std::int64_t draw() {
    const auto n = static_cast<std::int64_t>(perm_.size());
    const std::int64_t i = drawn_++;
    const std::int64_t j =
        i + static_cast<std::int64_t>(
                rng_.below(static_cast<std::uint64_t>(n - i)));
    std::swap(perm_[static_cast<std::size_t>(i)],
              perm_[static_cast<std::size_t>(j)]);
    return perm_[static_cast<std::size_t>(i)];
  }

  std::int64_t drawn() const { return drawn_; }
  std::int64_t capacity() const {
    return static_cast<std::int64_t>(perm_.size());
  }

 private:
  Rng& rng_;
  std::vector<std::int64_t> perm_;
  std::int64_t drawn_ = 0;
};

void sort_by_index(SampleSet& set) {
  std::vector<std::size_t> order(set.indices.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return set.indices[a] < set.indices[b];
  });
  SampleSet sorted;
  sorted.indices.reserve(set.indices.size());
  sorted.origin.reserve(set.origin.size());
  for (std::size_t i : order) {
    sorted.indices.push_back(set.indices[i]);
    sorted.origin.push_back(set.origin[i]);
  }
  set = std::move(sorted);
}

SampleSet random_with_budget(std::int64_t n, std::int64_t budget, Rng& rng) {
  SampleSet set;
  PermutationStream stream(n, rng);
  set.indices.reserve(static_cast<std::size_t>(budget));
  for (std::int64_t i = 0; i < budget; ++i) set.indices.push_back(stream.draw());
  set.origin.assign(set.indices.size(), SampleOrigin::Random);
  sort_by_index(set);
  return set;
}

// Histogram-equalizing budget allocation: find the water level L such that
// sum_b min(count_b, L) <= budget, then hand the remainder to the still
// unsaturated bins in index order.
std::vector<std::int64_t> equalize_budget(const std::vector<std::int64_t>& counts,
                                          std::int64_t budget) {
  std::int64_t lo = 0;
  std::int64_t hi = *std::max_element(counts.begin(), counts.end());
  auto filled_at = [&](std::int64_t level) {
    std::int64_t s = 0;
    for (std::int64_t c : counts) s += std::min(c, level);
    return s;
  };
  while (lo < hi) {
    const std::int64_t mid = lo + (hi - lo + 1) / 2;
    if (filled_at(mid) <= budget)
      lo = mid;
    else
      hi = mid - 1;
  }
  std::vector<std::int64_t> alloc(counts.size());
  std::int64_t used = 0;
  for (std::size_t b = 0; b < counts.size(); ++b) {
    alloc[b] = std::min(counts[b], lo);
    used += alloc[b];
  }
  for (std::size_t b = 0; b < counts.size() && used < budget; ++b) {
    if (counts[b] > alloc[b]) {
      ++alloc[b];
      ++used;
    }
  }
  return alloc;
}

SampleSet feature_with_budget(const Eigen::Ref<const Eigen::VectorXd>& values,
                              std::int64_t budget, int bins, Rng& rng,
                              bool* fell_back) {
  const std::int64_t n = values.size();
  const double lo = values.minCoeff();
  const double hi = values.maxCoeff();
  if (!(hi > lo)) {
    if (fell_back) *fell_back = true;
    std::cerr << "[mvred] warning: constant values in feature sampler, "
                 "falling back to random sampling\n";
    return random_with_budget(n, budget, rng);
  }

  const double width = (hi - lo) / bins;
  auto bin_of = [&](double v) {
    return std::min<std::int64_t>(bins - 1,
                                  static_cast<std::int64_t>((v - lo) / width));
  };

  std::vector<std::vector<std::int64_t>> bin_members(
      static_cast<std::size_t>(bins));
  for (std::int64_t i = 0; i < n; ++i)
    bin_members[static_cast<std::size_t>(bin_of(values[i]))].push_back(i);

  std::vector<std::int64_t> counts(static_cast<std::size_t>(bins));
  for (std::size_t b = 0; b < counts.size(); ++b)
    counts[b] = static_cast<std::int64_t>(bin_members[b].size());
  const auto alloc = equalize_budget(counts, budget);

  SampleSet set;
  set.indices.reserve(static_cast<std::size_t>(budget));
  for (std::size_t b = 0; b < bin_members.size(); ++b) {
    auto& members = bin_members[b];
    const std::int64_t take = alloc[b];
    // partial Fisher-Yates inside the bin
    for (std::int64_t i = 0; i < take; ++i) {
      const std::int64_t j =
          i + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(
                  static_cast<std::int64_t>(members.size()) - i)));
      std::swap(members[static_cast<std::size_t>(i)],
                members[static_cast<std::size_t>(j)]);
      set.indices.push_back(members[static_cast<std::size_t>(i)]);
    }
  }
  set.origin.assign(set.indices.size(), SampleOrigin::Feature);
  sort_by_index(set);
  return set;
}

}  // namespace

SampleSet sample_random(std::int64_t n, double rate, std::uint64_t seed) {
  check_rate(rate);
  if (n < 0) throw ConfigError("negative population size");
  Rng rng(seed);
  return random_with_budget(n, budget_for(rate, n), rng);
}

SampleSet sample_feature(const Eigen::Ref<const Eigen::VectorXd>& values,
                         double rate, int bins, std::uint64_t seed) {
  check_rate(rate);
  if (bins < 2) throw ConfigError("feature sampler needs at least 2 bins");
  if (!values.allFinite())
    throw ComputeError("feature sampler input has non-finite values");
  const std::int64_t budget = budget_for(rate, values.size());
  if (budget == 0) return {};
  Rng rng(seed);
  return feature_with_budget(values, budget, bins, rng, nullptr);
}

SampleSet sample_combined(const Eigen::Ref<const Eigen::VectorXd>& values,
                          const SamplePlan& plan) {
  check_rate(plan.rate_random);
  check_rate(plan.rate_feature);
  if (plan.total_rate() > 1.0 + 1e-12)
    throw ConfigError("rate_random + rate_feature must not exceed 1");
  if (plan.histogram_bins < 2)
    throw ConfigError("feature sampler needs at least 2 bins");
  if (!values.allFinite())
    throw ComputeError("sampler input has non-finite values");

  const std::int64_t n = values.size();
  const std::int64_t total = budget_for(plan.total_rate(), n);
  if (total == 0) return {};

  // Split the exact total so the two sub-budgets always sum to it.
  std::int64_t feature_budget;
  if (plan.rate_feature <= 0.0)
    feature_budget = 0;
  else if (plan.rate_random <= 0.0)
    feature_budget = total;
  else
    feature_budget = std::min(
        total, round_half_up(plan.rate_feature * static_cast<double>(n)));

  Rng rng(plan.seed);
  SampleSet feature;
  if (feature_budget > 0)
    feature = feature_with_budget(values, feature_budget, plan.histogram_bins,
                                  rng, nullptr);

  std::vector<bool> taken(static_cast<std::size_t>(n), false);
  for (std::int64_t idx : feature.indices)
    taken[static_cast<std::size_t>(idx)] = true;

  SampleSet out = std::move(feature);
  // Random picks skip feature-owned indices (feature provenance wins) and
  // keep drawing past collisions until the advertised size is reached.
  PermutationStream stream(n, rng);
  while (out.size() < total && stream.drawn() < stream.capacity()) {
    const std::int64_t idx = stream.draw();
    if (taken[static_cast<std::size_t>(idx)]) continue;
    taken[static_cast<std::size_t>(idx)] = true;
    out.indices.push_back(idx);
    out.origin.push_back(SampleOrigin::Random);
  }
  sort_by_index(out);
  return out;
}

}  // namespace mvred
