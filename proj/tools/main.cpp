// mvred command line: gen | reduce | query | correlate | reconstruct |
// sweep | info. See README.md for the file formats and CSV schemas.

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mvred/bundle.hpp"
#include "mvred/crc64.hpp"
#include "mvred/error.hpp"
#include "mvred/parallel.hpp"
#include "mvred/partition.hpp"
#include "mvred/posthoc.hpp"
#include "mvred/raster.hpp"
#include "mvred/synthetic.hpp"

namespace {

constexpr const char* kToolVersion = "0.1.0";

// exit codes: 0 ok, 2 configuration, 3 I/O, 4 computation, 1 unexpected
enum ExitCode { kOk = 0, kUnexpected = 1, kConfig = 2, kIo = 3, kCompute = 4 };

using nlohmann::json;
using namespace mvred;

double elapsed_seconds(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                       start)
      .count();
}

// median wall time of `repeats` runs of fn (fn must be idempotent)
template <typename Fn>
double timed_median(int repeats, Fn&& fn) {
  std::vector<double> times;
  for (int r = 0; r < std::max(1, repeats); ++r) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    times.push_back(elapsed_seconds(start));
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoi(item));
  }
  if (out.empty()) throw ConfigError("expected a comma-separated int list");
  return out;
}

QuerySpec parse_query(const std::string& text) {
  QuerySpec spec;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("malformed query term '" + item +
                        "' (expected name=value)");
    try {
      spec.values.emplace_back(item.substr(0, eq),
                               std::stod(item.substr(eq + 1)));
    } catch (const std::exception&) {
      throw ConfigError("malformed query value in '" + item + "'");
    }
  }
  if (spec.values.empty()) throw ConfigError("empty query");
  return spec;
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string quoted = "\"";
  for (char c : s) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  return quoted + "\"";
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void write_manifest(const std::filesystem::path& primary_output,
                    const std::string& command, const json& config,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
  json manifest;
  manifest["tool"] = "mvred";
  manifest["version"] = kToolVersion;
  manifest["bundle_format_version"] = kBundleFormatVersion;
  manifest["command"] = command;
  manifest["config"] = config;
  const std::string dump = config.dump();
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(crc64(dump.data(),
                                                      dump.size())));
  manifest["config_hash"] = hash;
  manifest["inputs"] = inputs;
  manifest["outputs"] = outputs;

  std::filesystem::path path = primary_output;
  path += ".manifest.json";
  auto out = open_out(path);
  out << manifest.dump(2) << "\n";
}

json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------- gen ----

struct GenArgs {
  std::string out;
  std::vector<int> grid{64, 64};
  int vars = 8;
  int regions = 1;
  std::vector<int> latent{2};
  double noise = 0.0;
  std::uint64_t seed = 0;
  std::string layout = "tiles";
  double latent_scale = 1.0;
  double mean_spread = 8.0;
  std::string dtype = "f64";
};

int run_gen(const GenArgs& args) {
  SyntheticSpec spec;
  spec.grid.dims = args.grid;
  spec.num_vars = args.vars;
  spec.n_regions = args.regions;
  spec.latent_dims = args.latent;
  spec.noise_sigma = args.noise;
  spec.seed = args.seed;
  spec.layout = args.layout == "voronoi" ? RegionLayout::Voronoi
                                         : RegionLayout::Tiles;
  spec.latent_scale = args.latent_scale;
  spec.mean_spread = args.mean_spread;

  const auto synth = gen_synthetic(spec);
  const std::filesystem::path header(args.out);
  save_field(synth.field, header, dtype_from_name(args.dtype));

  // ground truth sidecar: per-region ranks plus the label volume
  std::filesystem::path labels_path = header;
  labels_path.replace_extension(".labels.bin");
  {
    std::ofstream out(labels_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + labels_path.string());
    std::vector<std::int32_t> labels(synth.region_labels.begin(),
                                     synth.region_labels.end());
    out.write(reinterpret_cast<const char*>(labels.data()),
              static_cast<std::streamsize>(labels.size() * 4));
  }
  std::filesystem::path truth_path = header;
  truth_path.replace_extension(".truth.json");
  {
    json truth;
    truth["n_regions"] = args.regions;
    truth["latent_dims"] = synth.latent_dims;
    truth["layout"] = args.layout;
    truth["labels_file"] = labels_path.filename().string();
    auto out = open_out(truth_path);
    out << truth.dump(2) << "\n";
  }

  json config;
  config["grid"] = args.grid;
  config["vars"] = args.vars;
  config["regions"] = args.regions;
  config["latent"] = args.latent;
  config["noise"] = args.noise;
  config["seed"] = args.seed;
  config["layout"] = args.layout;
  config["latent_scale"] = args.latent_scale;
  config["mean_spread"] = args.mean_spread;
  config["dtype"] = args.dtype;
  write_manifest(header, "gen", config, {},
                 {header.string(), labels_path.string(), truth_path.string()});

  std::cout << "wrote " << header.string() << " ("
            << synth.field.num_points() << " points, "
            << synth.field.num_vars() << " vars)\n";
  return kOk;
}

// ------------------------------------------------------------- reduce ----

struct SchemeArgs {
  std::string scheme = "regular";
  std::vector<int> block_dims{16, 16};
  int kd_qmax = 2;
  double kd_p = -1;  // defaults to the variance target
  int kd_min_dim = 4;
  int slic_n = 64;
  double slic_compactness = -1.0;
  int slic_iters = 10;
  bool slic_no_connectivity = false;
};

struct ReduceArgs {
  std::string input;
  std::string output;
  SchemeArgs scheme;
  double p = 0.999;
  double rate_random = 0.025;
  double rate_feature = 0.025;
  int bins = 32;
  std::uint64_t seed = 0;
  std::string precision = "f32";
  bool standardize = false;
  std::string report;
  std::string pc_map;
  int slice_axis = -1;
  int slice_index = 0;
  int threads = 0;
};

PartitionSet build_partitions(const MultivariateField& field,
                              const SchemeArgs& args, double p,
                              double* seconds = nullptr) {
  const auto start = std::chrono::steady_clock::now();
  PartitionSet pset;
  const Scheme scheme = scheme_from_name(args.scheme);
  if (scheme == Scheme::Regular) {
    pset = partition_regular(field.grid, args.block_dims);
  } else if (scheme == Scheme::KdTree) {
    KdCriterion crit;
    crit.q_max = args.kd_qmax;
    crit.p = args.kd_p > 0 ? args.kd_p : p;
    crit.min_dim = args.kd_min_dim;
    pset = partition_kdtree(field, crit);
  } else {
    SlicParams params;
    params.n_superpixels = args.slic_n;
    params.compactness = args.slic_compactness;
    params.max_iters = args.slic_iters;
    params.enforce_connectivity = !args.slic_no_connectivity;
    pset = partition_slic(field, params);
  }
  if (seconds) *seconds = elapsed_seconds(start);
  return pset;
}

void write_report_csv(std::ostream& out, const std::string& dataset,
                      const std::string& scheme, const ReducedBundle& bundle,
                      const SizeReport& sizes, const ErrorReport& errors,
                      bool header) {
  if (header)
    out << "dataset,scheme,partitions,mean_partition_size,raw_mb,reduced_mb,"
           "reduction_percent,norm_mv_recon_error,"
           "norm_mv_recon_error_sampled,min_var_rmse,max_var_rmse\n";
  const double mean_size = static_cast<double>(bundle.num_points()) /
                           bundle.num_partitions();
  char line[256];
  std::snprintf(line, sizeof line,
                ",%s,%d,%.1f,%.3f,%.3f,%.2f,%.6g,%.6g,%.6g,%.6g\n",
                scheme.c_str(), bundle.num_partitions(), mean_size,
                sizes.raw_bytes / 1048576.0, sizes.reduced_bytes / 1048576.0,
                100.0 * (1.0 - static_cast<double>(sizes.reduced_bytes) /
                                   sizes.raw_bytes),
                errors.norm_mv_recon_error,
                errors.norm_mv_recon_error_sampled, errors.min_var_rmse,
                errors.max_var_rmse);
  out << csv_cell(dataset) << line;
}

int run_reduce(const ReduceArgs& args) {
  if (args.threads > 0) set_worker_threads(args.threads);

  const auto field = load_field(args.input);
  double t_partition = 0;
  const auto pset = build_partitions(field, args.scheme, args.p, &t_partition);

  ReduceOptions options;
  options.variance_target = args.p;
  options.plan.rate_random = args.rate_random;
  options.plan.rate_feature = args.rate_feature;
  options.plan.histogram_bins = args.bins;
  options.plan.seed = args.seed;
  options.precision = dtype_from_name(args.precision);
  options.standardize = args.standardize;

  const auto start = std::chrono::steady_clock::now();
  const auto bundle = reduce(field, pset, options);
  const double t_reduce = elapsed_seconds(start);

  save_bundle(bundle, args.output);
  const auto sizes = size_report(bundle);

  std::cout << "partitions: " << bundle.num_partitions() << " ("
            << args.scheme.scheme << ", " << t_partition << "s partition, "
            << t_reduce << "s reduce)\n";
  std::cout << "reduced: " << sizes.reduced_bytes << " bytes vs raw "
            << sizes.raw_bytes << " (" << sizes.reduction_ratio << "x)\n";

  std::vector<std::string> outputs{args.output};
  if (!args.pc_map.empty()) {
    // per-partition component count map, categorical colors
    const auto map = pc_count_map(field, pset, args.p);
    RasterOptions opt;
    opt.colormap = Colormap::Categorical;
    opt.categories = field.num_vars();
    opt.slice_axis = args.slice_axis;
    opt.slice_index = args.slice_index;
    save_scalar_raster(map, args.pc_map, opt);
    outputs.push_back(args.pc_map);
  }
  if (!args.report.empty()) {
    const auto errors = error_report(bundle, field);
    auto out = open_out(args.report);
    write_report_csv(out, args.input, args.scheme.scheme, bundle, sizes,
                     errors, true);
    outputs.push_back(args.report);
    std::cout << "norm MV recon error: " << errors.norm_mv_recon_error
              << " (sampled rows: " << errors.norm_mv_recon_error_sampled
              << ")\n";
  }

  json config;
  config["input"] = args.input;
  config["scheme"] = args.scheme.scheme;
  config["block_dims"] = args.scheme.block_dims;
  config["kd"] = {{"q_max", args.scheme.kd_qmax},
                  {"p", args.scheme.kd_p},
                  {"min_dim", args.scheme.kd_min_dim}};
  config["slic"] = {{"n_superpixels", args.scheme.slic_n},
                    {"compactness", args.scheme.slic_compactness},
                    {"max_iters", args.scheme.slic_iters},
                    {"enforce_connectivity", !args.scheme.slic_no_connectivity}};
  config["p"] = args.p;
  config["rate_random"] = args.rate_random;
  config["rate_feature"] = args.rate_feature;
  config["bins"] = args.bins;
  config["seed"] = args.seed;
  config["precision"] = args.precision;
  config["standardize"] = args.standardize;
  write_manifest(args.output, "reduce", config, {args.input}, outputs);
  return kOk;
}

// -------------------------------------------------------------- query ----

struct QueryArgs {
  std::string bundle;
  std::string query;
  std::string csv;
  std::string raster;
  int slice_axis = -1;
  int slice_index = 0;
};

int run_query(const QueryArgs& args) {
  const auto bundle = load_bundle(args.bundle);
  const auto spec = parse_query(args.query);
  const auto result = query(bundle, spec);
  const auto normalized = result.normalized();

  std::vector<std::string> outputs;
  if (!args.csv.empty()) {
    auto out = open_out(args.csv);
    out << "index,x,y,z,partition,distance,normalized_distance\n";
    for (std::size_t i = 0; i < result.items.size(); ++i) {
      const auto& item = result.items[i];
      const auto c = bundle.grid.coords(item.index);
      char line[256];
      std::snprintf(line, sizeof line, "%lld,%d,%d,%d,%d,%.9g,%.9g\n",
                    static_cast<long long>(item.index), c[0], c[1], c[2],
                    item.partition, item.distance, normalized[i]);
      out << line;
    }
    outputs.push_back(args.csv);
  }

  if (!args.raster.empty()) {
    // closeness image: samples bright where the query distance is small
    ScalarField sf;
    sf.grid = bundle.grid;
    sf.values = Eigen::VectorXd::Zero(bundle.num_points());
    for (std::size_t i = 0; i < result.items.size(); ++i)
      sf.values[result.items[i].index] = 1.0 - normalized[i];
    RasterOptions opt;
    opt.colormap = Colormap::Gray;
    opt.slice_axis = args.slice_axis;
    opt.slice_index = args.slice_index;
    save_scalar_raster(sf, args.raster, opt);
    outputs.push_back(args.raster);
  }

  std::cout << "samples: " << result.items.size() << ", distance range ["
            << result.min_distance << ", " << result.max_distance << "]\n";

  if (!outputs.empty()) {
    json config;
    config["bundle"] = args.bundle;
    config["query"] = args.query;
    write_manifest(outputs.front(), "query", config, {args.bundle}, outputs);
  }
  return kOk;
}

// ---------------------------------------------------------- correlate ----

struct CorrelateArgs {
  std::string bundle;
  std::string var_i;
  std::string var_j;
  std::string csv;
  std::string matrix_csv;
  std::string raster;
  int slice_axis = -1;
  int slice_index = 0;
};

int run_correlate(const CorrelateArgs& args) {
  const auto bundle = load_bundle(args.bundle);
  std::vector<std::string> outputs;

  if (!args.matrix_csv.empty()) {
    const auto report = correlation(bundle);
    auto out = open_out(args.matrix_csv);
    out << "partition,var_i,var_j,cov,cor,defined\n";
    for (int p = 0; p < bundle.num_partitions(); ++p) {
      const auto sp = static_cast<std::size_t>(p);
      for (int i = 0; i < bundle.num_vars(); ++i)
        for (int j = 0; j < bundle.num_vars(); ++j) {
          const bool ok = report.var_defined[sp][static_cast<std::size_t>(i)] &&
                          report.var_defined[sp][static_cast<std::size_t>(j)];
          char line[320];
          std::snprintf(line, sizeof line, "%d,%s,%s,%.9g,%.9g,%d\n", p,
                        csv_cell(bundle.var_names[static_cast<std::size_t>(i)])
                            .c_str(),
                        csv_cell(bundle.var_names[static_cast<std::size_t>(j)])
                            .c_str(),
                        report.cov[sp](i, j), ok ? report.cor[sp](i, j) : 0.0,
                        ok ? 1 : 0);
          out << line;
        }
    }
    outputs.push_back(args.matrix_csv);
  }

  if (!args.var_i.empty() || !args.var_j.empty()) {
    if (args.var_i.empty() || args.var_j.empty())
      throw ConfigError("--var-i and --var-j must be given together");
    const auto map = correlation_map(bundle, args.var_i, args.var_j);
    const auto report = correlation(bundle);
    const int i = bundle.var_index(args.var_i);
    const int j = bundle.var_index(args.var_j);

    if (!args.csv.empty()) {
      auto out = open_out(args.csv);
      out << "partition,point_count,cor,defined\n";
      for (int p = 0; p < bundle.num_partitions(); ++p) {
        const auto sp = static_cast<std::size_t>(p);
        const bool ok = report.var_defined[sp][static_cast<std::size_t>(i)] &&
                        report.var_defined[sp][static_cast<std::size_t>(j)];
        char line[160];
        std::snprintf(line, sizeof line, "%d,%lld,%.9g,%d\n", p,
                      static_cast<long long>(
                          bundle.partitions[sp].point_count),
                      ok ? report.cor[sp](i, j) : 0.0, ok ? 1 : 0);
        out << line;
      }
      outputs.push_back(args.csv);
    }
    if (!args.raster.empty()) {
      RasterOptions opt;
      opt.colormap = Colormap::Diverging;
      opt.slice_axis = args.slice_axis;
      opt.slice_index = args.slice_index;
      save_scalar_raster(map.field, args.raster, opt);
      outputs.push_back(args.raster);
    }
  }

  if (outputs.empty())
    throw ConfigError("correlate needs --matrix-csv or --var-i/--var-j with "
                      "--csv/--raster");

  json config;
  config["bundle"] = args.bundle;
  config["var_i"] = args.var_i;
  config["var_j"] = args.var_j;
  write_manifest(outputs.front(), "correlate", config, {args.bundle},
                 outputs);
  return kOk;
}

// -------------------------------------------------------- reconstruct ----

struct ReconstructArgs {
  std::string bundle;
  std::string csv;
  std::string original;
  std::string error_csv;
};

int run_reconstruct(const ReconstructArgs& args) {
  const auto bundle = load_bundle(args.bundle);
  std::vector<std::string> outputs;

  if (!args.csv.empty()) {
    const auto recon = reconstruct_samples(bundle);
    auto out = open_out(args.csv);
    out << "index,x,y,z,partition";
    for (const auto& name : bundle.var_names) out << "," << csv_cell(name);
    out << "\n";
    for (std::size_t i = 0; i < recon.indices.size(); ++i) {
      const auto c = bundle.grid.coords(recon.indices[i]);
      out << recon.indices[i] << "," << c[0] << "," << c[1] << "," << c[2]
          << "," << recon.partition_ids[i];
      char cell[48];
      for (Eigen::Index j = 0; j < recon.values.cols(); ++j) {
        std::snprintf(cell, sizeof cell, ",%.9g",
                      recon.values(static_cast<Eigen::Index>(i), j));
        out << cell;
      }
      out << "\n";
    }
    outputs.push_back(args.csv);
  }

  if (!args.original.empty()) {
    const auto field = load_field(args.original);
    const auto errors = error_report(bundle, field);
    const auto sizes = size_report(bundle);
    if (!args.error_csv.empty()) {
      auto out = open_out(args.error_csv);
      write_report_csv(out, args.original, scheme_name(bundle.scheme), bundle,
                       sizes, errors, true);
      outputs.push_back(args.error_csv);
    }
    std::cout << "norm MV recon error: " << errors.norm_mv_recon_error
              << " (sampled rows: " << errors.norm_mv_recon_error_sampled
              << ")\n"
              << "var RMSE range: [" << errors.min_var_rmse << ", "
              << errors.max_var_rmse << "]\n";
  }

  if (outputs.empty() && args.original.empty())
    throw ConfigError("reconstruct needs --csv and/or --original");

  if (!outputs.empty()) {
    json config;
    config["bundle"] = args.bundle;
    config["original"] = args.original;
    write_manifest(outputs.front(), "reconstruct", config, {args.bundle},
                   outputs);
  }
  return kOk;
}

// --------------------------------------------------------------- info ----

int run_info(const std::string& path, bool as_json) {
  const auto bundle = load_bundle(path);
  const auto sizes = size_report(bundle);
  if (as_json) {
    json j;
    j["dims"] = bundle.grid.dims;
    j["num_vars"] = bundle.num_vars();
    j["var_names"] = bundle.var_names;
    j["scheme"] = scheme_name(bundle.scheme);
    j["partitions"] = bundle.num_partitions();
    j["variance_target"] = bundle.variance_target;
    j["plan"] = {{"rate_random", bundle.plan.rate_random},
                 {"rate_feature", bundle.plan.rate_feature},
                 {"histogram_bins", bundle.plan.histogram_bins},
                 {"seed", bundle.plan.seed}};
    j["precision"] = dtype_name(bundle.precision);
    j["standardize"] = bundle.standardization.enabled;
    j["bytes"] = {{"raw", sizes.raw_bytes},
                  {"reduced", sizes.reduced_bytes},
                  {"header", sizes.header_bytes},
                  {"models", sizes.model_bytes},
                  {"indices", sizes.index_bytes},
                  {"samples", sizes.ws_bytes},
                  {"overhead", sizes.overhead_bytes}};
    std::cout << j.dump(2) << "\n";
    return kOk;
  }

  std::int64_t samples = 0;
  for (const auto& part : bundle.parts)
    samples += static_cast<std::int64_t>(part.sample_indices.size());

  std::cout << "grid:";
  for (int d : bundle.grid.dims) std::cout << " " << d;
  std::cout << "\nvariables: " << bundle.num_vars()
            << "\nscheme: " << scheme_name(bundle.scheme)
            << "\npartitions: " << bundle.num_partitions()
            << "\nsamples: " << samples << "\nvariance target: "
            << bundle.variance_target
            << "\nprecision: " << dtype_name(bundle.precision)
            << "\nraw bytes: " << sizes.raw_bytes
            << "\nreduced bytes: " << sizes.reduced_bytes << " (header "
            << sizes.header_bytes << ", models " << sizes.model_bytes
            << ", indices " << sizes.index_bytes << ", samples "
            << sizes.ws_bytes << ", overhead " << sizes.overhead_bytes
            << ")\nreduction: " << sizes.reduction_ratio << "x\n";
  return kOk;
}

// -------------------------------------------------------------- sweep ----

struct SweepArgs {
  std::string config;
  std::string out;
  int repeats = 3;
  int threads = 0;
};

struct SweepCase {
  std::string scheme;
  std::string param;  // human-readable scheme parameter
  SchemeArgs args;
};

int run_sweep(const SweepArgs& args) {
  if (args.threads > 0) set_worker_threads(args.threads);
  const json cfg = load_json(args.config);

  // fields: either a list of file inputs or a seeded synthetic family
  struct FieldCase {
    std::string name;
    std::uint64_t seed;
    MultivariateField field;
  };
  std::vector<FieldCase> fields;
  if (cfg.contains("inputs")) {
    for (const auto& path : cfg.at("inputs")) {
      FieldCase fc;
      fc.name = path.get<std::string>();
      fc.seed = 0;
      fc.field = load_field(fc.name);
      fields.push_back(std::move(fc));
    }
  }
  if (cfg.contains("synthetic")) {
    const auto& syn = cfg.at("synthetic");
    SyntheticSpec spec;
    spec.grid.dims = syn.at("grid").get<std::vector<int>>();
    spec.num_vars = syn.at("vars").get<int>();
    spec.n_regions = syn.value("regions", 1);
    spec.latent_dims = syn.value("latent", std::vector<int>{2});
    spec.noise_sigma = syn.value("noise", 0.0);
    spec.layout = syn.value("layout", std::string("tiles")) == "voronoi"
                      ? RegionLayout::Voronoi
                      : RegionLayout::Tiles;
    spec.latent_scale = syn.value("latent_scale", 1.0);
    spec.mean_spread = syn.value("mean_spread", 8.0);
    for (const auto& seed : syn.value("seeds", std::vector<std::uint64_t>{0})) {
      spec.seed = seed;
      FieldCase fc;
      fc.name = "synthetic:" + std::to_string(seed);
      fc.seed = seed;
      fc.field = gen_synthetic(spec).field;
      fields.push_back(std::move(fc));
    }
  }
  if (fields.empty())
    throw ConfigError("sweep config needs \"inputs\" or \"synthetic\"");

  // scheme grid: each entry expands its listed parameter values
  std::vector<SweepCase> cases;
  for (const auto& entry : cfg.at("schemes")) {
    const auto scheme = entry.at("scheme").get<std::string>();
    if (scheme == "regular") {
      for (const auto& dims : entry.at("block_dims")) {
        SweepCase c;
        c.scheme = scheme;
        c.args.scheme = scheme;
        c.args.block_dims = dims.get<std::vector<int>>();
        std::string param = "blocks=";
        for (std::size_t i = 0; i < c.args.block_dims.size(); ++i)
          param += (i ? "x" : "") + std::to_string(c.args.block_dims[i]);
        c.param = param;
        cases.push_back(std::move(c));
      }
    } else if (scheme == "kdtree") {
      for (const auto& min_dim : entry.at("min_dim")) {
        SweepCase c;
        c.scheme = scheme;
        c.args.scheme = scheme;
        c.args.kd_qmax = entry.value("q_max", 2);
        c.args.kd_p = entry.value("p", -1.0);
        c.args.kd_min_dim = min_dim.get<int>();
        c.param = "min_dim=" + std::to_string(c.args.kd_min_dim);
        cases.push_back(std::move(c));
      }
    } else if (scheme == "slic") {
      for (const auto& n : entry.at("n_superpixels")) {
        SweepCase c;
        c.scheme = scheme;
        c.args.scheme = scheme;
        c.args.slic_n = n.get<int>();
        c.args.slic_compactness = entry.value("compactness", -1.0);
        c.args.slic_iters = entry.value("max_iters", 10);
        c.param = "n=" + std::to_string(c.args.slic_n);
        cases.push_back(std::move(c));
      }
    } else {
      throw ConfigError("unknown sweep scheme '" + scheme + "'");
    }
  }

  std::vector<SamplePlan> plans;
  for (const auto& rate : cfg.at("rates")) {
    SamplePlan plan;
    plan.rate_random = rate.value("random", 0.0);
    plan.rate_feature = rate.value("feature", 0.0);
    plan.histogram_bins = cfg.value("bins", 32);
    plan.seed = cfg.value("seed", 0);
    plans.push_back(plan);
  }
  const double p = cfg.value("p", 0.999);
  const Dtype precision =
      dtype_from_name(cfg.value("precision", std::string("f32")));

  auto out = open_out(args.out);
  out << "dataset,field_seed,scheme,scheme_param,partitions,"
         "mean_partition_size,rate_random,rate_feature,p,raw_bytes,"
         "reduced_bytes,reduction_percent,norm_mv_recon_error,"
         "norm_mv_recon_error_sampled,min_var_rmse,max_var_rmse,"
         "t_partition_s,t_reduce_s\n";

  for (const auto& fc : fields) {
    for (const auto& scheme_case : cases) {
      double t_partition = 0;
      PartitionSet pset;
      t_partition = timed_median(args.repeats, [&] {
        pset = build_partitions(fc.field, scheme_case.args, p);
      });
      for (const auto& plan : plans) {
        ReduceOptions options;
        options.variance_target = p;
        options.plan = plan;
        options.precision = precision;
        ReducedBundle bundle;
        const double t_reduce = timed_median(
            args.repeats, [&] { bundle = reduce(fc.field, pset, options); });
        const auto sizes = size_report(bundle);
        const auto errors = error_report(bundle, fc.field);
        char line[384];
        std::snprintf(
            line, sizeof line,
            ",%llu,%s,%s,%d,%.1f,%g,%g,%g,%lld,%lld,%.2f,%.6g,%.6g,%.6g,"
            "%.6g,%.4f,%.4f\n",
            static_cast<unsigned long long>(fc.seed),
            scheme_case.scheme.c_str(), scheme_case.param.c_str(),
            bundle.num_partitions(),
            static_cast<double>(bundle.num_points()) /
                bundle.num_partitions(),
            plan.rate_random, plan.rate_feature, p,
            static_cast<long long>(sizes.raw_bytes),
            static_cast<long long>(sizes.reduced_bytes),
            100.0 * (1.0 - static_cast<double>(sizes.reduced_bytes) /
                               sizes.raw_bytes),
            errors.norm_mv_recon_error, errors.norm_mv_recon_error_sampled,
            errors.min_var_rmse, errors.max_var_rmse, t_partition, t_reduce);
        out << csv_cell(fc.name) << line;
      }
    }
  }

  write_manifest(args.out, "sweep", cfg, {args.config}, {args.out});
  std::cout << "wrote " << args.out << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mvred: per-partition PCA reduction of gridded multivariate "
               "fields, with query/correlation analysis on the reduced form"};
  app.require_subcommand(1);

  GenArgs gen_args;
  auto* gen = app.add_subcommand("gen", "generate a synthetic field");
  gen->add_option("--out", gen_args.out, "output header path (.json)")
      ->required();
  std::string gen_grid = "64,64", gen_latent = "2";
  gen->add_option("--grid", gen_grid, "grid extents, e.g. 64,64 or 32,32,16");
  gen->add_option("--vars", gen_args.vars, "variable count");
  gen->add_option("--regions", gen_args.regions, "region count");
  gen->add_option("--latent", gen_latent,
                  "latent rank (one value or one per region)");
  gen->add_option("--noise", gen_args.noise, "gaussian noise sigma");
  gen->add_option("--seed", gen_args.seed, "generator seed");
  gen->add_option("--layout", gen_args.layout, "tiles|voronoi")
      ->check(CLI::IsMember({"tiles", "voronoi"}));
  gen->add_option("--latent-scale", gen_args.latent_scale,
                  "latent amplitude");
  gen->add_option("--mean-spread", gen_args.mean_spread,
                  "region mean offset scale");
  gen->add_option("--dtype", gen_args.dtype, "f32|f64")
      ->check(CLI::IsMember({"f32", "f64"}));

  ReduceArgs reduce_args;
  std::string reduce_blocks = "16,16";
  std::string config_path;
  auto* red = app.add_subcommand("reduce", "reduce a field to a bundle");
  red->add_option("--input", reduce_args.input, "field header (.json)")
      ->required();
  red->add_option("--output", reduce_args.output, "bundle path (.mvrb)")
      ->required();
  red->add_option("--config", config_path,
                  "JSON config; command line flags win");
  red->add_option("--scheme", reduce_args.scheme.scheme,
                  "regular|kdtree|slic")
      ->check(CLI::IsMember({"regular", "kdtree", "slic"}));
  red->add_option("--block-dims", reduce_blocks, "regular block extents");
  red->add_option("--kd-qmax", reduce_args.scheme.kd_qmax,
                  "k-d criterion: max components");
  red->add_option("--kd-p", reduce_args.scheme.kd_p,
                  "k-d criterion variance fraction (default: --p)");
  red->add_option("--kd-min-dim", reduce_args.scheme.kd_min_dim,
                  "k-d minimum leaf extent");
  red->add_option("--slic-n", reduce_args.scheme.slic_n,
                  "slic superpixel target");
  red->add_option("--slic-compactness", reduce_args.scheme.slic_compactness,
                  "slic compactness (<0: auto)");
  red->add_option("--slic-iters", reduce_args.scheme.slic_iters,
                  "slic iteration cap");
  red->add_flag("--no-slic-connectivity",
                reduce_args.scheme.slic_no_connectivity,
                "keep disconnected slic labels");
  red->add_option("--p", reduce_args.p, "variance target in (0,1]");
  red->add_option("--rate-random", reduce_args.rate_random,
                  "random sampling rate");
  red->add_option("--rate-feature", reduce_args.rate_feature,
                  "feature sampling rate");
  red->add_option("--bins", reduce_args.bins, "feature histogram bins");
  red->add_option("--seed", reduce_args.seed, "sampling seed");
  red->add_option("--precision", reduce_args.precision, "f32|f64")
      ->check(CLI::IsMember({"f32", "f64"}));
  red->add_flag("--standardize", reduce_args.standardize,
                "z-score variables before PCA");
  red->add_option("--report", reduce_args.report,
                  "write an evaluation CSV against the input");
  red->add_option("--pc-map", reduce_args.pc_map,
                  "write a per-partition component-count raster (PPM)");
  red->add_option("--slice-axis", reduce_args.slice_axis,
                  "slice axis for 3D --pc-map rasters");
  red->add_option("--slice-index", reduce_args.slice_index, "slice index");
  red->add_option("--threads", reduce_args.threads, "worker threads");

  QueryArgs query_args;
  auto* qry = app.add_subcommand("query", "rank samples against a query");
  qry->add_option("--bundle", query_args.bundle, "bundle path")->required();
  qry->add_option("--query", query_args.query,
                  "comma-separated name=value terms")
      ->required();
  qry->add_option("--csv", query_args.csv, "per-sample distance CSV");
  qry->add_option("--raster", query_args.raster, "closeness raster (PPM)");
  qry->add_option("--slice-axis", query_args.slice_axis,
                  "slice axis for 3D rasters");
  qry->add_option("--slice-index", query_args.slice_index, "slice index");

  CorrelateArgs cor_args;
  auto* cor = app.add_subcommand("correlate",
                                 "reconstruct correlations from a bundle");
  cor->add_option("--bundle", cor_args.bundle, "bundle path")->required();
  cor->add_option("--var-i", cor_args.var_i, "first variable");
  cor->add_option("--var-j", cor_args.var_j, "second variable");
  cor->add_option("--csv", cor_args.csv, "per-partition pair CSV");
  cor->add_option("--matrix-csv", cor_args.matrix_csv,
                  "full per-partition matrix CSV");
  cor->add_option("--raster", cor_args.raster, "correlation map raster");
  cor->add_option("--slice-axis", cor_args.slice_axis, "slice axis (3D)");
  cor->add_option("--slice-index", cor_args.slice_index, "slice index");

  ReconstructArgs rec_args;
  auto* rec = app.add_subcommand("reconstruct",
                                 "reconstruct sampled rows from a bundle");
  rec->add_option("--bundle", rec_args.bundle, "bundle path")->required();
  rec->add_option("--csv", rec_args.csv, "reconstructed sample CSV");
  rec->add_option("--original", rec_args.original,
                  "original field header for an error report");
  rec->add_option("--error-csv", rec_args.error_csv, "error report CSV");

  SweepArgs sweep_args;
  auto* swp = app.add_subcommand("sweep", "run a configured experiment grid");
  swp->add_option("--config", sweep_args.config, "sweep JSON config")
      ->required();
  swp->add_option("--out", sweep_args.out, "long-form results CSV")
      ->required();
  swp->add_option("--repeats", sweep_args.repeats,
                  "timing repetitions (median)");
  swp->add_option("--threads", sweep_args.threads, "worker threads");

  std::string info_path;
  bool info_json = false;
  auto* info = app.add_subcommand("info", "describe a bundle");
  info->add_option("--bundle", info_path, "bundle path")->required();
  info->add_flag("--json", info_json, "machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*gen) {
      gen_args.grid = parse_int_list(gen_grid);
      gen_args.latent = parse_int_list(gen_latent);
      return run_gen(gen_args);
    }
    if (*red) {
      if (!config_path.empty()) {
        const json cfg = load_json(config_path);
        auto fill = [&](const char* flag, const char* key, auto& slot) {
          using T = std::decay_t<decltype(slot)>;
          if (red->count(flag) == 0 && cfg.contains(key))
            slot = cfg.at(key).get<T>();
        };
        fill("--scheme", "scheme", reduce_args.scheme.scheme);
        fill("--kd-qmax", "kd_qmax", reduce_args.scheme.kd_qmax);
        fill("--kd-p", "kd_p", reduce_args.scheme.kd_p);
        fill("--kd-min-dim", "kd_min_dim", reduce_args.scheme.kd_min_dim);
        fill("--slic-n", "slic_n", reduce_args.scheme.slic_n);
        fill("--slic-compactness", "slic_compactness",
             reduce_args.scheme.slic_compactness);
        fill("--slic-iters", "slic_iters", reduce_args.scheme.slic_iters);
        fill("--p", "p", reduce_args.p);
        fill("--rate-random", "rate_random", reduce_args.rate_random);
        fill("--rate-feature", "rate_feature", reduce_args.rate_feature);
        fill("--bins", "bins", reduce_args.bins);
        fill("--seed", "seed", reduce_args.seed);
        fill("--precision", "precision", reduce_args.precision);
        fill("--standardize", "standardize", reduce_args.standardize);
        fill("--threads", "threads", reduce_args.threads);
        if (red->count("--block-dims") == 0 && cfg.contains("block_dims")) {
          const auto dims = cfg.at("block_dims").get<std::vector<int>>();
          reduce_blocks.clear();
          for (std::size_t i = 0; i < dims.size(); ++i)
            reduce_blocks += (i ? "," : "") + std::to_string(dims[i]);
        }
      }
      reduce_args.scheme.block_dims = parse_int_list(reduce_blocks);
      return run_reduce(reduce_args);
    }
    if (*qry) return run_query(query_args);
    if (*cor) return run_correlate(cor_args);
    if (*rec) return run_reconstruct(rec_args);
    if (*swp) return run_sweep(sweep_args);
    if (*info) return run_info(info_path, info_json);
  } catch (const ConfigError& e) {
    std::cerr << "error (config): " << e.what() << "\n";
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << "error (io): " << e.what() << "\n";
    return kIo;
  } catch (const ComputeError& e) {
    std::cerr << "error (compute): " << e.what() << "\n";
    return kCompute;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUnexpected;
  }
  return kOk;
}
