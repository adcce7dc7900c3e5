#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "mvred/error.hpp"
#include "mvred/parallel.hpp"
#include "mvred/partition.hpp"
#include "mvred/pca.hpp"

namespace mvred {

namespace {

struct Center {
  double pos[3];
  double value;
};

struct Candidate {
  double dist2;
  double spatial2;
  int id;
};

// Lexicographic (D^2, spatial^2, id) comparison; the spatial tie-break makes
// a zero-compactness or constant-value run degenerate to a spatial Voronoi
// diagram instead of collapsing onto the lowest center id.
bool better(const Candidate& a, const Candidate& b) {
  if (a.dist2 != b.dist2) return a.dist2 < b.dist2;
  if (a.spatial2 != b.spatial2) return a.spatial2 < b.spatial2;
  return a.id < b.id;
}

std::vector<int> connected_components(const GridSpec& grid,
                                      const std::vector<std::int32_t>& labels,
                                      std::vector<std::int64_t>& comp_size,
                                      std::vector<std::int32_t>& comp_label) {
  const std::int64_t n = grid.num_points();
  std::vector<int> comp(static_cast<std::size_t>(n), -1);
  comp_size.clear();
  comp_label.clear();
  std::vector<std::int64_t> stack;
  for (std::int64_t start = 0; start < n; ++start) {
    if (comp[static_cast<std::size_t>(start)] >= 0) continue;
    const int id = static_cast<int>(comp_size.size());
    const std::int32_t label = labels[static_cast<std::size_t>(start)];
    comp_size.push_back(0);
    comp_label.push_back(label);
    stack.push_back(start);
    comp[static_cast<std::size_t>(start)] = id;
    while (!stack.empty()) {
      const std::int64_t i = stack.back();
      stack.pop_back();
      ++comp_size[static_cast<std::size_t>(id)];
      const auto c = grid.coords(i);
      for (int ax = 0; ax < grid.ndims(); ++ax)
        for (int step = -1; step <= 1; step += 2) {
          auto nc = c;
          nc[static_cast<std::size_t>(ax)] += step;
          if (nc[static_cast<std::size_t>(ax)] < 0 ||
              nc[static_cast<std::size_t>(ax)] >= grid.dim(ax))
            continue;
          const std::int64_t j = grid.index(nc);
          if (comp[static_cast<std::size_t>(j)] >= 0 ||
              labels[static_cast<std::size_t>(j)] != label)
            continue;
          comp[static_cast<std::size_t>(j)] = id;
          stack.push_back(j);
        }
    }
  }
  return comp;
}

// Reassign every connected component that is not its label's largest one.
// Orphans only ever attach to a resolved component (a keeper, or an orphan
// that already joined one), so a merge target can never move afterwards and
// the final labels stay connected. Orphans enclosed entirely by unresolved
// neighbours wait for a later pass; a fallback breaks pathological cycles.
void merge_orphans(const GridSpec& grid, std::vector<std::int32_t>& labels) {
  std::vector<std::int64_t> comp_size;
  std::vector<std::int32_t> comp_label;
  const auto comp = connected_components(grid, labels, comp_size, comp_label);

  const int ncomp = static_cast<int>(comp_size.size());
  std::vector<int> keeper_of_label;  // label -> component id to keep
  {
    std::int32_t max_label = 0;
    for (std::int32_t l : labels) max_label = std::max(max_label, l);
    keeper_of_label.assign(static_cast<std::size_t>(max_label) + 1, -1);
    for (int cidx = 0; cidx < ncomp; ++cidx) {
      auto& keeper = keeper_of_label[static_cast<std::size_t>(
          comp_label[static_cast<std::size_t>(cidx)])];
      if (keeper < 0 || comp_size[static_cast<std::size_t>(cidx)] >
                            comp_size[static_cast<std::size_t>(keeper)])
        keeper = cidx;
    }
  }

  std::vector<bool> resolved(static_cast<std::size_t>(ncomp), false);
  for (int cidx = 0; cidx < ncomp; ++cidx)
    resolved[static_cast<std::size_t>(cidx)] =
        keeper_of_label[static_cast<std::size_t>(
            comp_label[static_cast<std::size_t>(cidx)])] == cidx;

  // points per component, in ascending point order
  std::vector<std::vector<std::int64_t>> comp_points(
      static_cast<std::size_t>(ncomp));
  for (std::int64_t i = 0; i < grid.num_points(); ++i)
    comp_points[static_cast<std::size_t>(comp[static_cast<std::size_t>(i)])]
        .push_back(i);

  // shared-face counts toward an adjacent component, restricted by filter
  auto best_neighbor = [&](int cidx, bool require_resolved) {
    std::vector<std::pair<int, std::int64_t>> adjacency;  // (comp, faces)
    auto bump = [&](int target) {
      for (auto& [tc, count] : adjacency)
        if (tc == target) {
          ++count;
          return;
        }
      adjacency.emplace_back(target, 1);
    };
    for (const std::int64_t i : comp_points[static_cast<std::size_t>(cidx)]) {
      const auto c = grid.coords(i);
      for (int ax = 0; ax < grid.ndims(); ++ax)
        for (int step = -1; step <= 1; step += 2) {
          auto nc = c;
          nc[static_cast<std::size_t>(ax)] += step;
          if (nc[static_cast<std::size_t>(ax)] < 0 ||
              nc[static_cast<std::size_t>(ax)] >= grid.dim(ax))
            continue;
          const int nb = comp[static_cast<std::size_t>(grid.index(nc))];
          if (nb == cidx) continue;
          if (require_resolved && !resolved[static_cast<std::size_t>(nb)])
            continue;
          bump(nb);
        }
    }
    int target = -1;
    std::int64_t best = 0;
    for (const auto& [tc, count] : adjacency) {
      const std::int32_t tl = labels[static_cast<std::size_t>(
          comp_points[static_cast<std::size_t>(tc)][0])];
      const std::int32_t cl =
          target < 0 ? 0
                     : labels[static_cast<std::size_t>(
                           comp_points[static_cast<std::size_t>(target)][0])];
      if (target < 0 || count > best ||
          (count == best && (tl < cl || (tl == cl && tc < target)))) {
        best = count;
        target = tc;
      }
    }
    return target;
  };

  auto absorb = [&](int cidx, int target) {
    const std::int32_t new_label = labels[static_cast<std::size_t>(
        comp_points[static_cast<std::size_t>(target)][0])];
    for (const std::int64_t i : comp_points[static_cast<std::size_t>(cidx)])
      labels[static_cast<std::size_t>(i)] = new_label;
    resolved[static_cast<std::size_t>(cidx)] = true;
  };

  for (;;) {
    bool progress = false;
    bool pending = false;
    for (int cidx = 0; cidx < ncomp; ++cidx) {
      if (resolved[static_cast<std::size_t>(cidx)]) continue;
      const int target = best_neighbor(cidx, true);
      if (target >= 0) {
        absorb(cidx, target);
        progress = true;
      } else {
        pending = true;
      }
    }
    if (!pending) return;
    if (!progress) break;  // only mutually-enclosed orphans remain
  }

  // pathological leftovers (orphans enclosing each other): attach to any
  // neighbour; earlier attachments become valid anchors for later ones
  for (int cidx = 0; cidx < ncomp; ++cidx) {
    if (resolved[static_cast<std::size_t>(cidx)]) continue;
    const int target = best_neighbor(cidx, false);
    if (target >= 0) absorb(cidx, target);
    else resolved[static_cast<std::size_t>(cidx)] = true;  // lone component
  }
}

void densify_labels(std::vector<std::int32_t>& labels,
                    std::vector<std::int64_t>& counts_out) {
  std::int32_t max_label = 0;
  for (std::int32_t l : labels) max_label = std::max(max_label, l);
  std::vector<std::int64_t> counts(static_cast<std::size_t>(max_label) + 1, 0);
  for (std::int32_t l : labels) ++counts[static_cast<std::size_t>(l)];
  std::vector<std::int32_t> remap(counts.size(), -1);
  std::int32_t next = 0;
  for (std::size_t l = 0; l < counts.size(); ++l)
    if (counts[l] > 0) remap[l] = next++;
  counts_out.clear();
  counts_out.reserve(static_cast<std::size_t>(next));
  for (std::size_t l = 0; l < counts.size(); ++l)
    if (counts[l] > 0) counts_out.push_back(counts[l]);
  for (auto& l : labels) l = remap[static_cast<std::size_t>(l)];
}

}  // namespace

PartitionSet partition_slic(const MultivariateField& field,
                            const SlicParams& params, SlicTrace* trace) {
  field.validate();
  const std::int64_t n = field.num_points();
  if (params.n_superpixels < 1)
    throw ConfigError("n_superpixels must be >= 1");
  if (params.n_superpixels > n)
    throw ConfigError("n_superpixels exceeds the number of grid points");
  if (params.max_iters < 1) throw ConfigError("max_iters must be >= 1");
  if (params.compactness >= 0 && !std::isfinite(params.compactness))
    throw ConfigError("compactness must be finite");

  const GridSpec& grid = field.grid;
  const int nd = grid.ndims();

  // First-PC scalar field of one global fit.
  const LocalPCAModel global = fit_pca(field.data);
  const Eigen::VectorXd v = project(global, field.data, 1).col(0);

  const double spacing =
      std::pow(static_cast<double>(n) / params.n_superpixels, 1.0 / nd);

  double m = params.compactness;
  if (m < 0) {
    const double mean = v.mean();
    const double stddev =
        std::sqrt((v.array() - mean).square().sum() / std::max<std::int64_t>(1, n - 1));
    m = 10.0 * stddev;
  }
  const double spatial_weight = (m / spacing) * (m / spacing);

  // Seed centers on a regular lattice of roughly n_superpixels sites.
  std::array<int, 3> sites{1, 1, 1};
  for (int ax = 0; ax < nd; ++ax)
    sites[static_cast<std::size_t>(ax)] = std::clamp(
        static_cast<int>(std::lround(grid.dim(ax) / spacing)), 1,
        grid.dim(ax));

  std::vector<Center> centers;
  for (int sz = 0; sz < sites[2]; ++sz)
    for (int sy = 0; sy < sites[1]; ++sy)
      for (int sx = 0; sx < sites[0]; ++sx) {
        Center c{};
        const std::array<int, 3> s{sx, sy, sz};
        std::array<int, 3> nearest{0, 0, 0};
        for (int ax = 0; ax < 3; ++ax) {
          if (ax >= nd) {
            c.pos[ax] = 0;
            continue;
          }
          c.pos[ax] = (s[static_cast<std::size_t>(ax)] + 0.5) *
                          grid.dim(ax) /
                          sites[static_cast<std::size_t>(ax)] -
                      0.5;
          nearest[static_cast<std::size_t>(ax)] = std::clamp(
              static_cast<int>(std::lround(c.pos[ax])), 0, grid.dim(ax) - 1);
        }
        c.value = v[grid.index(nearest)];
        centers.push_back(c);
      }
  const int ncenters = static_cast<int>(centers.size());

  std::vector<std::int32_t> labels(static_cast<std::size_t>(n), -1);
  std::vector<std::int32_t> new_labels(static_cast<std::size_t>(n), -1);
  std::vector<double> point_obj(static_cast<std::size_t>(n), 0.0);
  const double window = 2.0 * spacing;

  if (trace) {
    trace->objective.clear();
    trace->iterations = 0;
  }

  // coarse bins of size `spacing` for candidate center lookup
  std::array<int, 3> nbins{1, 1, 1};
  for (int ax = 0; ax < nd; ++ax)
    nbins[static_cast<std::size_t>(ax)] = std::max(
        1, static_cast<int>(std::ceil(grid.dim(ax) / spacing)));
  auto bin_of = [&](const double* pos) {
    std::array<int, 3> b{0, 0, 0};
    for (int ax = 0; ax < nd; ++ax)
      b[static_cast<std::size_t>(ax)] = std::clamp(
          static_cast<int>(std::floor(pos[ax] / spacing)), 0,
          nbins[static_cast<std::size_t>(ax)] - 1);
    return b;
  };
  auto bin_index = [&](const std::array<int, 3>& b) {
    return (b[2] * nbins[1] + b[1]) * nbins[0] + b[0];
  };

  for (int iter = 0; iter < params.max_iters; ++iter) {
    std::vector<std::vector<int>> bin_centers(
        static_cast<std::size_t>(nbins[0] * nbins[1] * nbins[2]));
    for (int cid = 0; cid < ncenters; ++cid)
      bin_centers[static_cast<std::size_t>(
                      bin_index(bin_of(centers[static_cast<std::size_t>(cid)].pos)))]
          .push_back(cid);

    // a center within 2S of a point in bin b sits in bins [b-2, b+2];
    // flatten that neighbourhood into one candidate list per bin
    std::vector<std::vector<int>> candidates(bin_centers.size());
    for (int bz = 0; bz < (nd > 2 ? nbins[2] : 1); ++bz)
      for (int by = 0; by < nbins[1]; ++by)
        for (int bx = 0; bx < nbins[0]; ++bx) {
          auto& list =
              candidates[static_cast<std::size_t>(bin_index({bx, by, bz}))];
          const int zlo = nd > 2 ? std::max(0, bz - 2) : 0;
          const int zhi = nd > 2 ? std::min(nbins[2], bz + 3) : 1;
          for (int nz = zlo; nz < zhi; ++nz)
            for (int ny = std::max(0, by - 2);
                 ny < std::min(nbins[1], by + 3); ++ny)
              for (int nx = std::max(0, bx - 2);
                   nx < std::min(nbins[0], bx + 3); ++nx)
                for (const int cid : bin_centers[static_cast<std::size_t>(
                         bin_index({nx, ny, nz}))])
                  list.push_back(cid);
        }

    parallel_for(n, [&](std::int64_t i) {
      const auto coords = grid.coords(i);
      const double value = v[i];

      auto evaluate = [&](int cid) {
        const Center& c = centers[static_cast<std::size_t>(cid)];
        double spatial2 = 0;
        for (int ax = 0; ax < nd; ++ax) {
          const double dd = coords[static_cast<std::size_t>(ax)] - c.pos[ax];
          spatial2 += dd * dd;
        }
        const double dv = value - c.value;
        return Candidate{dv * dv + spatial_weight * spatial2, spatial2, cid};
      };
      auto in_window = [&](int cid) {
        const Center& c = centers[static_cast<std::size_t>(cid)];
        for (int ax = 0; ax < nd; ++ax)
          if (std::abs(coords[static_cast<std::size_t>(ax)] - c.pos[ax]) >
              window)
            return false;
        return true;
      };

      Candidate best{std::numeric_limits<double>::infinity(),
                     std::numeric_limits<double>::infinity(), -1};
      const std::int32_t incumbent = labels[static_cast<std::size_t>(i)];
      if (incumbent >= 0) best = evaluate(incumbent);

      const double point_pos[3] = {static_cast<double>(coords[0]),
                                   static_cast<double>(coords[1]),
                                   static_cast<double>(coords[2])};
      const auto pbin = bin_of(point_pos);
      for (const int cid :
           candidates[static_cast<std::size_t>(bin_index(pbin))]) {
        if (cid == incumbent || !in_window(cid)) continue;
        const Candidate cand = evaluate(cid);
        if (better(cand, best)) best = cand;
      }

      if (best.id < 0) {  // no center in range: global fallback
        for (int cid = 0; cid < ncenters; ++cid) {
          const Candidate cand = evaluate(cid);
          if (better(cand, best)) best = cand;
        }
      }
      new_labels[static_cast<std::size_t>(i)] = best.id;
      point_obj[static_cast<std::size_t>(i)] = best.dist2;
    });

    std::int64_t changed = 0;
    double objective = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      if (new_labels[static_cast<std::size_t>(i)] !=
          labels[static_cast<std::size_t>(i)])
        ++changed;
      objective += point_obj[static_cast<std::size_t>(i)];
    }
    labels.swap(new_labels);
    if (trace) {
      trace->objective.push_back(objective);
      trace->iterations = iter + 1;
    }
    if (changed == 0) break;

    // center update: mean position and mean value of the members
    std::vector<double> acc(static_cast<std::size_t>(ncenters) * 4, 0.0);
    std::vector<std::int64_t> counts(static_cast<std::size_t>(ncenters), 0);
    for (std::int64_t i = 0; i < n; ++i) {
      const auto l = static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]);
      const auto coords = grid.coords(i);
      for (int ax = 0; ax < 3; ++ax)
        acc[l * 4 + static_cast<std::size_t>(ax)] +=
            coords[static_cast<std::size_t>(ax)];
      acc[l * 4 + 3] += v[i];
      ++counts[l];
    }
    for (int cid = 0; cid < ncenters; ++cid) {
      const auto c = static_cast<std::size_t>(cid);
      if (counts[c] == 0) continue;  // empty cluster keeps its seed
      const auto inv = 1.0 / static_cast<double>(counts[c]);
      for (int ax = 0; ax < 3; ++ax)
        centers[c].pos[ax] = acc[c * 4 + static_cast<std::size_t>(ax)] * inv;
      centers[c].value = acc[c * 4 + 3] * inv;
    }
  }

  if (params.enforce_connectivity) merge_orphans(grid, labels);

  std::vector<std::int64_t> counts;
  densify_labels(labels, counts);

  PartitionSet pset;
  pset.grid = grid;
  pset.scheme = Scheme::Slic;
  pset.labels = std::move(labels);
  for (std::size_t p = 0; p < counts.size(); ++p) {
    PartitionInfo info;
    info.id = static_cast<int>(p);
    info.point_count = counts[p];
    info.has_box = false;
    pset.partitions.push_back(info);
  }
  return pset;
}

}  // namespace mvred
