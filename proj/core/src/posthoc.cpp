#include "mvred/posthoc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mvred/error.hpp"
#include "mvred/parallel.hpp"

namespace mvred {

namespace {

// Undo the bundle's z-scoring in place; rows are in model space.
void to_original_units(const ReducedBundle& bundle, RowMatrixXd& rows) {
  if (!bundle.standardization.enabled) return;
  rows.array().rowwise() *= bundle.standardization.scale.transpose().array();
  rows.rowwise() += bundle.standardization.mean.transpose();
}

RowMatrixXd to_model_units(const ReducedBundle& bundle,
                           const Eigen::Ref<const RowMatrixXd>& rows) {
  if (!bundle.standardization.enabled) return rows;
  RowMatrixXd out =
      rows.rowwise() - bundle.standardization.mean.transpose();
  out.array().rowwise() /= bundle.standardization.scale.transpose().array();
  return out;
}

}  // namespace

SparseReconstruction reconstruct_samples(
    const ReducedBundle& bundle, const std::vector<int>* partition_filter) {
  std::vector<int> ids;
  if (partition_filter) {
    ids = *partition_filter;
    for (int id : ids)
      if (id < 0 || id >= bundle.num_partitions())
        throw ConfigError("partition filter id out of range");
  } else {
    ids.resize(static_cast<std::size_t>(bundle.num_partitions()));
    std::iota(ids.begin(), ids.end(), 0);
  }

  std::int64_t total = 0;
  for (int id : ids)
    total += bundle.parts[static_cast<std::size_t>(id)].w_s.rows();

  SparseReconstruction out;
  out.indices.reserve(static_cast<std::size_t>(total));
  out.partition_ids.reserve(static_cast<std::size_t>(total));
  out.values.resize(total, bundle.num_vars());

  std::int64_t row = 0;
  for (int id : ids) {
    const auto& part = bundle.parts[static_cast<std::size_t>(id)];
    if (part.w_s.rows() == 0) continue;
    RowMatrixXd x = reconstruct(part.model, part.w_s);
    to_original_units(bundle, x);
    out.values.middleRows(row, x.rows()) = x;
    for (std::int64_t idx : part.sample_indices) {
      out.indices.push_back(idx);
      out.partition_ids.push_back(static_cast<std::int32_t>(id));
    }
    row += x.rows();
  }

  // Partitions interleave across the grid; present samples in index order.
  std::vector<std::int64_t> order(out.indices.size());
  std::iota(order.begin(), order.end(), std::int64_t{0});
  std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    return out.indices[static_cast<std::size_t>(a)] <
           out.indices[static_cast<std::size_t>(b)];
  });
  SparseReconstruction sorted;
  sorted.indices.resize(out.indices.size());
  sorted.partition_ids.resize(out.partition_ids.size());
  sorted.values.resize(out.values.rows(), out.values.cols());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto src = static_cast<std::size_t>(order[i]);
    sorted.indices[i] = out.indices[src];
    sorted.partition_ids[i] = out.partition_ids[src];
    sorted.values.row(static_cast<Eigen::Index>(i)) =
        out.values.row(static_cast<Eigen::Index>(src));
  }
  return sorted;
}

ErrorReport error_report(const ReducedBundle& bundle,
                         const MultivariateField& original) {
  original.validate();
  if (original.grid != bundle.grid)
    throw ConfigError("original field grid does not match the bundle");
  if (original.var_names != bundle.var_names)
    throw ConfigError("original field variables do not match the bundle");

  const int d = bundle.num_vars();
  const auto P = static_cast<std::size_t>(bundle.num_partitions());

  std::vector<std::vector<std::int64_t>> lists(P);
  for (std::size_t i = 0; i < bundle.labels.size(); ++i)
    lists[static_cast<std::size_t>(bundle.labels[i])].push_back(
        static_cast<std::int64_t>(i));

  std::vector<double> full_ratio(P, 0.0), sampled_ratio(P, 0.0);
  std::vector<Eigen::VectorXd> sq_err(P);
  std::vector<std::int64_t> sample_counts(P, 0);

  parallel_for(static_cast<std::int64_t>(P), [&](std::int64_t p) {
    const auto& part = bundle.parts[static_cast<std::size_t>(p)];
    const auto& points = lists[static_cast<std::size_t>(p)];

    RowMatrixXd x_raw(static_cast<Eigen::Index>(points.size()), d);
    for (std::size_t i = 0; i < points.size(); ++i)
      x_raw.row(static_cast<Eigen::Index>(i)) =
          original.data.row(points[i]);
    const RowMatrixXd x = to_model_units(bundle, x_raw);

    // Residual ratio over every row of the partition (the bounded
    // quantity), computed in the space the PCA was fitted in.
    const RowMatrixXd centered = x.rowwise() - part.model.mu.transpose();
    const double denom = centered.squaredNorm();
    const auto basis = part.model.c_full.topRows(part.model.q);
    const RowMatrixXd residual =
        centered - (centered * basis.transpose()) * basis;
    full_ratio[static_cast<std::size_t>(p)] =
        denom > 0 ? residual.squaredNorm() / denom : 0.0;

    // Same ratio on the stored sample rows, against the stored w_s (which
    // carries the stored-precision quantization).
    const auto n_s = static_cast<Eigen::Index>(part.sample_indices.size());
    Eigen::VectorXd err2 = Eigen::VectorXd::Zero(d);
    if (n_s > 0) {
      RowMatrixXd xs_raw(n_s, d);
      for (Eigen::Index i = 0; i < n_s; ++i)
        xs_raw.row(i) = original.data.row(
            part.sample_indices[static_cast<std::size_t>(i)]);
      const RowMatrixXd xs = to_model_units(bundle, xs_raw);
      const RowMatrixXd xs_hat = reconstruct(part.model, part.w_s);
      const RowMatrixXd xs_centered =
          xs.rowwise() - part.model.mu.transpose();
      const double s_denom = xs_centered.squaredNorm();
      sampled_ratio[static_cast<std::size_t>(p)] =
          s_denom > 0 ? (xs - xs_hat).squaredNorm() / s_denom : 0.0;

      RowMatrixXd xs_hat_raw = xs_hat;
      to_original_units(bundle, xs_hat_raw);
      const RowMatrixXd diff = xs_raw - xs_hat_raw;
      err2 = diff.array().square().colwise().sum();
    }
    sq_err[static_cast<std::size_t>(p)] = err2;
    sample_counts[static_cast<std::size_t>(p)] = n_s;
  });

  ErrorReport report;
  for (std::size_t p = 0; p < P; ++p) {
    report.norm_mv_recon_error += full_ratio[p];
    report.norm_mv_recon_error_sampled += sampled_ratio[p];
  }
  report.norm_mv_recon_error /= static_cast<double>(P);
  report.norm_mv_recon_error_sampled /= static_cast<double>(P);

  Eigen::VectorXd total_err2 = Eigen::VectorXd::Zero(d);
  std::int64_t total_samples = 0;
  for (std::size_t p = 0; p < P; ++p) {
    total_err2 += sq_err[p];
    total_samples += sample_counts[p];
  }

  report.var_rmse.resize(static_cast<std::size_t>(d));
  report.var_degenerate.assign(static_cast<std::size_t>(d), false);
  for (int j = 0; j < d; ++j) {
    const double range =
        original.data.col(j).maxCoeff() - original.data.col(j).minCoeff();
    if (!(range > 0)) {
      report.var_rmse[static_cast<std::size_t>(j)] = 0.0;
      report.var_degenerate[static_cast<std::size_t>(j)] = true;
      continue;
    }
    const double mse =
        total_samples > 0 ? total_err2[j] / static_cast<double>(total_samples)
                          : 0.0;
    report.var_rmse[static_cast<std::size_t>(j)] = std::sqrt(mse) / range;
  }
  report.min_var_rmse =
      *std::min_element(report.var_rmse.begin(), report.var_rmse.end());
  report.max_var_rmse =
      *std::max_element(report.var_rmse.begin(), report.var_rmse.end());
  return report;
}

std::vector<double> QueryResult::normalized() const {
  std::vector<double> out(items.size(), 0.0);
  const double span = max_distance - min_distance;
  for (std::size_t i = 0; i < items.size(); ++i)
    out[i] = span > 0 ? (items[i].distance - min_distance) / span : 0.0;
  return out;
}

QueryResult query(const ReducedBundle& bundle, const QuerySpec& spec) {
  if (spec.values.empty())
    throw ConfigError("query must specify at least one variable");
  std::vector<std::pair<int, double>> pinned;
  pinned.reserve(spec.values.size());
  for (const auto& [name, value] : spec.values) {
    const int j = bundle.var_index(name);
    if (j < 0) throw ConfigError("unknown query variable '" + name + "'");
    pinned.emplace_back(j, value);
  }

  QueryResult result;
  for (int p = 0; p < bundle.num_partitions(); ++p) {
    const auto& part = bundle.parts[static_cast<std::size_t>(p)];
    if (part.w_s.rows() == 0) continue;

    // Assemble the full query vector: unspecified variables sit at the
    // partition mean and vanish under centering.
    Eigen::VectorXd q_vec = part.model.mu;
    for (const auto& [j, value] : pinned) {
      double v = value;
      if (bundle.standardization.enabled)
        v = (v - bundle.standardization.mean[j]) /
            bundle.standardization.scale[j];
      q_vec[j] = v;
    }

    const Eigen::VectorXd w_q =
        part.model.c_full.topRows(part.model.q) * (q_vec - part.model.mu);
    for (Eigen::Index i = 0; i < part.w_s.rows(); ++i) {
      QueryResult::Item item;
      item.index = part.sample_indices[static_cast<std::size_t>(i)];
      item.partition = p;
      item.distance = (part.w_s.row(i).transpose() - w_q).norm();
      result.items.push_back(item);
    }
  }

  if (result.items.empty()) return result;
  std::sort(result.items.begin(), result.items.end(),
            [](const auto& a, const auto& b) { return a.index < b.index; });
  result.min_distance = std::numeric_limits<double>::infinity();
  result.max_distance = -std::numeric_limits<double>::infinity();
  for (const auto& item : result.items) {
    result.min_distance = std::min(result.min_distance, item.distance);
    result.max_distance = std::max(result.max_distance, item.distance);
  }
  return result;
}

CorrelationReport correlation(const ReducedBundle& bundle) {
  const int d = bundle.num_vars();
  const auto P = static_cast<std::size_t>(bundle.num_partitions());
  CorrelationReport report;
  report.cov.resize(P);
  report.cor.resize(P);
  report.var_defined.resize(P);

  parallel_for(static_cast<std::int64_t>(P), [&](std::int64_t p) {
    const auto& model = bundle.parts[static_cast<std::size_t>(p)].model;
    // C_full rows are PCs, so the reassembly is C^T diag(EV) C; the
    // orthonormal basis makes the inverse a transpose.
    Eigen::MatrixXd cov = model.c_full.transpose() *
                          model.ev.asDiagonal() * model.c_full;
    cov = ((cov + cov.transpose()) / 2.0).eval();  // enforce exact symmetry

    // A reassembled zero-variance diagonal carries fp noise of order
    // max_ev * quantization^2. Judge definedness in the space the PCA was
    // fitted in, where a relative floor is meaningful; raw-unit variances
    // may legitimately sit many orders of magnitude apart.
    const double max_diag = cov.diagonal().maxCoeff();
    const double floor = max_diag > 0 ? 1e-12 * max_diag : 0.0;
    std::vector<bool> defined(static_cast<std::size_t>(d), false);
    for (int j = 0; j < d; ++j)
      defined[static_cast<std::size_t>(j)] = cov(j, j) > floor;

    if (bundle.standardization.enabled) {
      cov = bundle.standardization.scale.asDiagonal() * cov *
            bundle.standardization.scale.asDiagonal();
    }
    Eigen::VectorXd stddev(d);
    for (int j = 0; j < d; ++j)
      stddev[j] = cov(j, j) > 0 ? std::sqrt(cov(j, j)) : 0.0;

    Eigen::MatrixXd cor(d, d);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (int i = 0; i < d; ++i)
      for (int j = 0; j <= i; ++j) {
        double value = nan;
        if (defined[static_cast<std::size_t>(i)] &&
            defined[static_cast<std::size_t>(j)]) {
          value = i == j ? 1.0
                         : std::clamp(cov(i, j) / (stddev[i] * stddev[j]),
                                      -1.0, 1.0);
        }
        cor(i, j) = value;
        cor(j, i) = value;
      }

    report.cov[static_cast<std::size_t>(p)] = std::move(cov);
    report.cor[static_cast<std::size_t>(p)] = std::move(cor);
    report.var_defined[static_cast<std::size_t>(p)] = std::move(defined);
  });
  return report;
}

CorrelationMap correlation_map(const ReducedBundle& bundle,
                               const std::string& var_i,
                               const std::string& var_j) {
  const int i = bundle.var_index(var_i);
  const int j = bundle.var_index(var_j);
  if (i < 0) throw ConfigError("unknown variable '" + var_i + "'");
  if (j < 0) throw ConfigError("unknown variable '" + var_j + "'");

  const CorrelationReport report = correlation(bundle);
  CorrelationMap map;
  map.field.grid = bundle.grid;
  map.field.values.resize(bundle.num_points());
  map.defined.resize(static_cast<std::size_t>(bundle.num_points()));
  for (std::size_t idx = 0; idx < bundle.labels.size(); ++idx) {
    const auto p = static_cast<std::size_t>(bundle.labels[idx]);
    const bool ok = report.var_defined[p][static_cast<std::size_t>(i)] &&
                    report.var_defined[p][static_cast<std::size_t>(j)];
    map.defined[idx] = ok;
    map.field.values[static_cast<Eigen::Index>(idx)] =
        ok ? report.cor[p](i, j) : 0.0;
  }
  return map;
}

}  // namespace mvred
