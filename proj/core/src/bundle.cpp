#include "mvred/bundle.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "mvred/crc64.hpp"
#include "mvred/error.hpp"
#include "mvred/parallel.hpp"

namespace mvred {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'M', 'V', 'R', 'B'};

const std::uint64_t* crc_table_storage() {
  static const auto table = [] {
    static std::uint64_t t[256];
    constexpr std::uint64_t poly = 0xC96C5795D7870F42ull;
    for (std::uint64_t i = 0; i < 256; ++i) {
      std::uint64_t crc = i;
      for (int bit = 0; bit < 8; ++bit)
        crc = (crc & 1) ? (crc >> 1) ^ poly : crc >> 1;
      t[i] = crc;
    }
    return t;
  }();
  return table;
}

}  // namespace

const std::uint64_t* Crc64::table() { return crc_table_storage(); }

int ReducedBundle::var_index(const std::string& name) const {
  for (std::size_t i = 0; i < var_names.size(); ++i)
    if (var_names[i] == name) return static_cast<int>(i);
  return -1;
}

void ReducedBundle::validate() const {
  grid.validate();
  const int d = num_vars();
  if (d < 1) throw ConfigError("bundle has no variables");
  if (var_units.size() != var_names.size())
    throw ConfigError("var_units length mismatch");
  if (static_cast<std::int64_t>(labels.size()) != grid.num_points())
    throw ConfigError("bundle label array does not match grid");
  if (parts.empty()) throw ConfigError("bundle has no partitions");
  if (partitions.size() != parts.size())
    throw ConfigError("partition descriptor count mismatch");
  if (standardization.enabled &&
      (standardization.mean.size() != d || standardization.scale.size() != d))
    throw ConfigError("standardization vectors must have one entry per variable");

  const auto P = static_cast<std::int32_t>(parts.size());
  std::vector<std::int64_t> counts(parts.size(), 0);
  for (std::int32_t l : labels) {
    if (l < 0 || l >= P) throw ConfigError("bundle label out of range");
    ++counts[static_cast<std::size_t>(l)];
  }
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& part = parts[p];
    if (partitions[p].id != static_cast<int>(p))
      throw ConfigError("partition ids must be dense");
    if (counts[p] == 0)
      throw ConfigError("partition " + std::to_string(p) + " is empty");
    if (partitions[p].point_count != counts[p])
      throw ConfigError("partition point count mismatch");
    if (part.model.dim() != d || part.model.c_full.rows() != d ||
        part.model.c_full.cols() != d || part.model.ev.size() != d)
      throw ConfigError("model dimensions mismatch in partition " +
                        std::to_string(p));
    if (part.model.q < 1 || part.model.q > d)
      throw ConfigError("stored q out of range in partition " +
                        std::to_string(p));
    if (part.w_s.rows() != static_cast<Eigen::Index>(part.sample_indices.size()) ||
        part.w_s.cols() != part.model.q)
      throw ConfigError("sample matrix shape mismatch in partition " +
                        std::to_string(p));
    std::int64_t prev = -1;
    for (std::int64_t idx : part.sample_indices) {
      if (idx <= prev || idx >= grid.num_points())
        throw ConfigError("sample indices must be sorted, unique, in range");
      if (labels[static_cast<std::size_t>(idx)] != static_cast<std::int32_t>(p))
        throw ConfigError("sample index labeled for a different partition");
      prev = idx;
    }
  }
}

namespace {

void quantize_array(double* data, Eigen::Index count, Dtype precision) {
  if (precision != Dtype::f32) return;
  for (Eigen::Index i = 0; i < count; ++i)
    data[i] = static_cast<double>(static_cast<float>(data[i]));
}

}  // namespace

ReducedBundle reduce(const MultivariateField& field, const PartitionSet& pset,
                     const ReduceOptions& options) {
  field.validate();
  pset.validate();
  if (field.grid != pset.grid)
    throw ConfigError("field and partition set grids differ");
  if (!(options.variance_target > 0.0 && options.variance_target <= 1.0))
    throw ConfigError("variance target must lie in (0, 1]");
  if (options.plan.rate_random < 0 || options.plan.rate_feature < 0 ||
      options.plan.total_rate() > 1.0 + 1e-12)
    throw ConfigError("invalid sampling plan rates");
  if (options.plan.histogram_bins < 2)
    throw ConfigError("histogram_bins must be >= 2");

  ReducedBundle bundle;
  bundle.grid = field.grid;
  bundle.var_names = field.var_names;
  bundle.var_units = field.var_units;
  bundle.scheme = pset.scheme;
  bundle.variance_target = options.variance_target;
  bundle.plan = options.plan;
  bundle.precision = options.precision;
  bundle.source_dtype = field.source_dtype;
  bundle.labels = pset.labels;
  bundle.partitions = pset.partitions;
  bundle.block_dims = pset.block_dims;
  if (pset.scheme == Scheme::Regular && bundle.block_dims.empty())
    throw ConfigError("regular partition set is missing its block extents");

  const int d = field.num_vars();
  const RowMatrixXd* source = &field.data;
  RowMatrixXd standardized;
  if (options.standardize) {
    bundle.standardization.enabled = true;
    bundle.standardization.mean = field.data.colwise().mean();
    Eigen::VectorXd scale(d);
    const std::int64_t n = field.num_points();
    for (int j = 0; j < d; ++j) {
      const double var =
          (field.data.col(j).array() - bundle.standardization.mean[j])
              .square()
              .sum() /
          std::max<std::int64_t>(1, n - 1);
      const double stddev = std::sqrt(var);
      scale[j] = stddev > 0 ? stddev : 1.0;
    }
    bundle.standardization.scale = scale;
    standardized =
        (field.data.rowwise() - bundle.standardization.mean.transpose())
            .array()
            .rowwise() /
        scale.transpose().array();
    source = &standardized;
  }

  const auto lists = pset.build_point_lists();
  bundle.parts.resize(lists.size());

  parallel_for(static_cast<std::int64_t>(lists.size()), [&](std::int64_t p) {
    const auto& points = lists[static_cast<std::size_t>(p)];
    RowMatrixXd x(static_cast<Eigen::Index>(points.size()), d);
    for (std::size_t i = 0; i < points.size(); ++i)
      x.row(static_cast<Eigen::Index>(i)) = source->row(points[i]);

    ReducedPartition part;
    part.model = fit_pca(x);
    part.model.q = select_q(part.model, options.variance_target);
    const RowMatrixXd w = project(part.model, x);

    SamplePlan plan = options.plan;
    plan.seed = options.plan.seed ^ static_cast<std::uint64_t>(p);
    const SampleSet samples = sample_combined(w.col(0), plan);

    part.sample_indices.reserve(samples.indices.size());
    part.w_s.resize(static_cast<Eigen::Index>(samples.indices.size()),
                    part.model.q);
    for (std::size_t i = 0; i < samples.indices.size(); ++i) {
      part.sample_indices.push_back(
          points[static_cast<std::size_t>(samples.indices[i])]);
      part.w_s.row(static_cast<Eigen::Index>(i)) =
          w.row(samples.indices[i]);
    }

    quantize_array(part.model.mu.data(), part.model.mu.size(),
                   bundle.precision);
    quantize_array(part.model.ev.data(), part.model.ev.size(),
                   bundle.precision);
    quantize_array(part.model.c_full.data(), part.model.c_full.size(),
                   bundle.precision);
    quantize_array(part.w_s.data(), part.w_s.size(), bundle.precision);

    bundle.parts[static_cast<std::size_t>(p)] = std::move(part);
  });

  return bundle;
}

PartitionSet partition_view(const ReducedBundle& bundle) {
  PartitionSet pset;
  pset.grid = bundle.grid;
  pset.scheme = bundle.scheme;
  pset.labels = bundle.labels;
  pset.partitions = bundle.partitions;
  pset.block_dims = bundle.block_dims;
  return pset;
}

namespace {

json header_json(const ReducedBundle& b) {
  json h;
  h["dims"] = b.grid.dims;
  h["num_vars"] = b.num_vars();
  h["var_names"] = b.var_names;
  h["var_units"] = b.var_units;
  h["scheme"] = scheme_name(b.scheme);
  h["variance_target"] = b.variance_target;
  h["plan"] = {{"rate_random", b.plan.rate_random},
               {"rate_feature", b.plan.rate_feature},
               {"histogram_bins", b.plan.histogram_bins},
               {"seed", b.plan.seed}};
  h["standardize"] = b.standardization.enabled;
  if (b.standardization.enabled) {
    h["standardize_mean"] = std::vector<double>(
        b.standardization.mean.data(),
        b.standardization.mean.data() + b.standardization.mean.size());
    h["standardize_scale"] = std::vector<double>(
        b.standardization.scale.data(),
        b.standardization.scale.data() + b.standardization.scale.size());
  }
  h["precision"] = dtype_name(b.precision);
  h["source_dtype"] = dtype_name(b.source_dtype);
  h["num_partitions"] = b.num_partitions();

  // Geometry encoding is scheme-dependent: regular tilings need only the
  // block extents, k-d leaves their boxes, and SLIC the full label array.
  if (b.scheme == Scheme::Regular) {
    h["geometry"] = {{"block_dims", b.block_dims}};
  } else if (b.scheme == Scheme::KdTree) {
    json boxes = json::array();
    for (const auto& part : b.partitions) {
      json box = json::array();
      for (int ax = 0; ax < b.grid.ndims(); ++ax)
        box.push_back(part.lo[static_cast<std::size_t>(ax)]);
      for (int ax = 0; ax < b.grid.ndims(); ++ax)
        box.push_back(part.hi[static_cast<std::size_t>(ax)]);
      boxes.push_back(std::move(box));
    }
    h["geometry"] = {{"boxes", std::move(boxes)}};
  } else {
    h["geometry"] = {{"labels", b.labels}};
  }
  return h;
}

class Writer {
 public:
  void bytes(const void* data, std::size_t len) {
    const auto* p = static_cast<const char*>(data);
    buffer_.insert(buffer_.end(), p, p + len);
  }
  template <typename T>
  void pod(T v) {
    bytes(&v, sizeof v);
  }
  void reals(const double* data, std::int64_t count, Dtype precision) {
    if (precision == Dtype::f64) {
      bytes(data, static_cast<std::size_t>(count) * sizeof(double));
    } else {
      std::vector<float> tmp(static_cast<std::size_t>(count));
      for (std::int64_t i = 0; i < count; ++i)
        tmp[static_cast<std::size_t>(i)] = static_cast<float>(data[i]);
      bytes(tmp.data(), tmp.size() * sizeof(float));
    }
  }
  std::vector<char>& data() { return buffer_; }

 private:
  std::vector<char> buffer_;
};

class Reader {
 public:
  Reader(const char* data, std::size_t len) : data_(data), len_(len) {}

  void bytes(void* out, std::size_t len) {
    if (pos_ + len > len_) throw IoError("bundle file truncated");
    std::memcpy(out, data_ + pos_, len);
    pos_ += len;
  }
  template <typename T>
  T pod() {
    T v;
    bytes(&v, sizeof v);
    return v;
  }
  void reals(double* out, std::int64_t count, Dtype precision) {
    if (precision == Dtype::f64) {
      bytes(out, static_cast<std::size_t>(count) * sizeof(double));
    } else {
      std::vector<float> tmp(static_cast<std::size_t>(count));
      bytes(tmp.data(), tmp.size() * sizeof(float));
      for (std::int64_t i = 0; i < count; ++i)
        out[i] = static_cast<double>(tmp[static_cast<std::size_t>(i)]);
    }
  }
  std::size_t pos() const { return pos_; }

 private:
  const char* data_;
  std::size_t len_;
  std::size_t pos_ = 0;
};

std::vector<char> serialize(const ReducedBundle& b) {
  const std::string header = header_json(b).dump();
  Writer w;
  w.bytes(kMagic, 4);
  w.pod<std::uint32_t>(b.format_version);
  w.pod<std::uint64_t>(header.size());
  w.bytes(header.data(), header.size());

  for (const auto& part : b.parts) {
    const auto& m = part.model;
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(&part - b.parts.data()));
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(part.sample_indices.size()));
    w.pod<std::uint16_t>(static_cast<std::uint16_t>(m.q));
    w.reals(m.mu.data(), m.mu.size(), b.precision);
    w.reals(m.ev.data(), m.ev.size(), b.precision);
    // c_full rows are PCs; Eigen::MatrixXd is column-major, so stage a
    // row-major copy for the pinned on-disk layout.
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                        Eigen::RowMajor>
        c_rm = m.c_full;
    w.reals(c_rm.data(), c_rm.size(), b.precision);
    std::vector<std::uint64_t> idx(part.sample_indices.begin(),
                                   part.sample_indices.end());
    w.bytes(idx.data(), idx.size() * sizeof(std::uint64_t));
    w.reals(part.w_s.data(), part.w_s.size(), b.precision);
  }

  const std::uint64_t checksum = crc64(w.data().data(), w.data().size());
  w.pod<std::uint64_t>(checksum);
  return std::move(w.data());
}

}  // namespace

SizeReport size_report(const ReducedBundle& bundle) {
  const std::string header = header_json(bundle).dump();
  const auto prec = static_cast<std::int64_t>(dtype_size(bundle.precision));
  const std::int64_t d = bundle.num_vars();

  SizeReport report;
  report.header_bytes =
      4 + 4 + 8 + static_cast<std::int64_t>(header.size());
  for (const auto& part : bundle.parts) {
    report.model_bytes += (d * d + 2 * d) * prec;
    report.index_bytes +=
        static_cast<std::int64_t>(part.sample_indices.size()) * 8;
    report.ws_bytes += static_cast<std::int64_t>(part.w_s.size()) * prec;
    report.overhead_bytes += 4 + 4 + 2;
  }
  report.overhead_bytes += 8;  // checksum trailer
  report.reduced_bytes = report.header_bytes + report.model_bytes +
                         report.index_bytes + report.ws_bytes +
                         report.overhead_bytes;
  report.raw_bytes =
      bundle.num_points() * d *
      static_cast<std::int64_t>(dtype_size(bundle.source_dtype));
  report.reduction_ratio =
      report.reduced_bytes > 0
          ? static_cast<double>(report.raw_bytes) / report.reduced_bytes
          : 0.0;
  return report;
}

void save_bundle(const ReducedBundle& bundle,
                 const std::filesystem::path& path) {
  bundle.validate();
  const auto blob = serialize(bundle);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("short write to " + path.string());
}

ReducedBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + path.string());
  const std::int64_t size = in.tellg();
  if (size < 24) throw IoError("bundle file truncated");
  std::vector<char> blob(static_cast<std::size_t>(size));
  in.seekg(0);
  in.read(blob.data(), size);
  if (!in) throw IoError("short read from " + path.string());

  if (std::memcmp(blob.data(), kMagic, 4) != 0)
    throw IoError(path.string() + " is not a bundle (bad magic)");

  std::uint64_t stored_crc;
  std::memcpy(&stored_crc, blob.data() + size - 8, 8);
  const std::uint64_t actual_crc =
      crc64(blob.data(), static_cast<std::size_t>(size - 8));
  if (stored_crc != actual_crc)
    throw IoError(path.string() + " failed its checksum");

  Reader r(blob.data(), static_cast<std::size_t>(size - 8));
  char magic[4];
  r.bytes(magic, 4);
  const auto version = r.pod<std::uint32_t>();
  if (version != kBundleFormatVersion)
    throw IoError(path.string() + " has format version " +
                  std::to_string(version) + ", this build reads " +
                  std::to_string(kBundleFormatVersion));
  const auto header_len = r.pod<std::uint64_t>();
  std::string header_text(header_len, '\0');
  r.bytes(header_text.data(), header_len);

  ReducedBundle b;
  b.format_version = version;
  int num_partitions = 0;
  try {
    const json h = json::parse(header_text);
    b.grid.dims = h.at("dims").get<std::vector<int>>();
    b.var_names = h.at("var_names").get<std::vector<std::string>>();
    b.var_units = h.at("var_units").get<std::vector<std::string>>();
    if (h.at("num_vars").get<int>() !=
        static_cast<int>(b.var_names.size()))
      throw IoError("bundle header num_vars disagrees with var_names");
    b.scheme = scheme_from_name(h.at("scheme").get<std::string>());
    b.variance_target = h.at("variance_target").get<double>();
    b.plan.rate_random = h.at("plan").at("rate_random").get<double>();
    b.plan.rate_feature = h.at("plan").at("rate_feature").get<double>();
    b.plan.histogram_bins = h.at("plan").at("histogram_bins").get<int>();
    b.plan.seed = h.at("plan").at("seed").get<std::uint64_t>();
    b.precision = dtype_from_name(h.at("precision").get<std::string>());
    b.source_dtype = dtype_from_name(h.at("source_dtype").get<std::string>());
    b.standardization.enabled = h.at("standardize").get<bool>();
    if (b.standardization.enabled) {
      const auto mean = h.at("standardize_mean").get<std::vector<double>>();
      const auto scale = h.at("standardize_scale").get<std::vector<double>>();
      b.standardization.mean =
          Eigen::Map<const Eigen::VectorXd>(mean.data(),
                                            static_cast<Eigen::Index>(mean.size()));
      b.standardization.scale = Eigen::Map<const Eigen::VectorXd>(
          scale.data(), static_cast<Eigen::Index>(scale.size()));
    }
    num_partitions = h.at("num_partitions").get<int>();
    b.grid.validate();

    // Rebuild the label array from the scheme-specific geometry.
    const auto& geometry = h.at("geometry");
    if (b.scheme == Scheme::Regular) {
      b.block_dims = geometry.at("block_dims").get<std::vector<int>>();
      const PartitionSet pset = partition_regular(b.grid, b.block_dims);
      b.labels = pset.labels;
      b.partitions = pset.partitions;
    } else if (b.scheme == Scheme::KdTree) {
      const auto boxes =
          geometry.at("boxes").get<std::vector<std::vector<int>>>();
      b.labels.assign(static_cast<std::size_t>(b.grid.num_points()), -1);
      for (std::size_t p = 0; p < boxes.size(); ++p) {
        const auto& box = boxes[p];
        if (static_cast<int>(box.size()) != 2 * b.grid.ndims())
          throw IoError("malformed box geometry");
        PartitionInfo info;
        info.id = static_cast<int>(p);
        info.has_box = true;
        std::int64_t count = 1;
        for (int ax = 0; ax < b.grid.ndims(); ++ax) {
          info.lo[static_cast<std::size_t>(ax)] =
              box[static_cast<std::size_t>(ax)];
          info.hi[static_cast<std::size_t>(ax)] =
              box[static_cast<std::size_t>(ax + b.grid.ndims())];
          count *= info.hi[static_cast<std::size_t>(ax)] -
                   info.lo[static_cast<std::size_t>(ax)];
        }
        info.point_count = count;
        b.partitions.push_back(info);
        for (int z = info.lo[2]; z < info.hi[2]; ++z)
          for (int y = info.lo[1]; y < info.hi[1]; ++y)
            for (int x = info.lo[0]; x < info.hi[0]; ++x)
              b.labels[static_cast<std::size_t>(
                  b.grid.index({x, y, z}))] = static_cast<std::int32_t>(p);
      }
    } else {
      b.labels = geometry.at("labels").get<std::vector<std::int32_t>>();
      if (static_cast<std::int64_t>(b.labels.size()) != b.grid.num_points())
        throw IoError("label geometry does not match grid");
      for (int p = 0; p < num_partitions; ++p) {
        PartitionInfo info;
        info.id = p;
        info.has_box = false;
        b.partitions.push_back(info);
      }
      for (std::int32_t l : b.labels) {
        if (l < 0 || l >= num_partitions)
          throw IoError("label geometry out of range");
        ++b.partitions[static_cast<std::size_t>(l)].point_count;
      }
    }
  } catch (const json::exception& e) {
    throw IoError("malformed bundle header: " + std::string(e.what()));
  }

  const int d = b.num_vars();
  b.parts.resize(static_cast<std::size_t>(num_partitions));
  for (int p = 0; p < num_partitions; ++p) {
    auto& part = b.parts[static_cast<std::size_t>(p)];
    const auto id = r.pod<std::uint32_t>();
    if (id != static_cast<std::uint32_t>(p))
      throw IoError("bundle records out of order");
    const auto n_s = r.pod<std::uint32_t>();
    const auto q = r.pod<std::uint16_t>();
    if (q < 1 || q > d) throw IoError("stored component count out of range");

    auto& m = part.model;
    m.q = q;
    m.n_points = b.partitions[static_cast<std::size_t>(p)].point_count;
    m.mu.resize(d);
    m.ev.resize(d);
    r.reals(m.mu.data(), d, b.precision);
    r.reals(m.ev.data(), d, b.precision);
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>
        c_rm(d, d);
    r.reals(c_rm.data(), c_rm.size(), b.precision);
    m.c_full = c_rm;

    std::vector<std::uint64_t> idx(n_s);
    r.bytes(idx.data(), idx.size() * sizeof(std::uint64_t));
    part.sample_indices.assign(idx.begin(), idx.end());
    part.w_s.resize(n_s, q);
    r.reals(part.w_s.data(), part.w_s.size(), b.precision);
  }
  if (r.pos() != static_cast<std::size_t>(size - 8))
    throw IoError("bundle has trailing bytes");

  b.validate();
  return b;
}

}  // namespace mvred
