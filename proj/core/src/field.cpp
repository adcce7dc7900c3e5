#include "mvred/field.hpp"

#include <fstream>
#include <unordered_set>

#include "json.hpp"
#include "mvred/error.hpp"

namespace mvred {

using nlohmann::json;

Dtype dtype_from_name(const std::string& name) {
  if (name == "f32") return Dtype::f32;
  if (name == "f64") return Dtype::f64;
  throw ConfigError("unknown dtype '" + name + "' (expected f32 or f64)");
}

int MultivariateField::var_index(const std::string& name) const {
  for (std::size_t i = 0; i < var_names.size(); ++i)
    if (var_names[i] == name) return static_cast<int>(i);
  return -1;
}

void MultivariateField::validate() const {
  grid.validate();
  const std::int64_t n = grid.num_points();
  if (data.rows() != n)
    throw ConfigError("field has " + std::to_string(data.rows()) +
                      " rows but grid declares " + std::to_string(n) +
                      " points");
  if (data.cols() < 1) throw ConfigError("field needs at least one variable");
  const auto d = static_cast<std::size_t>(data.cols());
  if (var_names.size() != d)
    throw ConfigError("var_names length does not match variable count");
  if (var_units.size() != d)
    throw ConfigError("var_units length does not match variable count");
  std::unordered_set<std::string> seen;
  for (const auto& name : var_names)
    if (!seen.insert(name).second)
      throw ConfigError("duplicate variable name '" + name + "'");
  if (!data.allFinite())
    throw ComputeError("field contains non-finite values");
}

namespace {

template <typename T>
void read_payload(const std::filesystem::path& path, std::int64_t count,
                  RowMatrixXd& out) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open data file " + path.string());
  const std::int64_t bytes = in.tellg();
  const std::int64_t expected = count * static_cast<std::int64_t>(sizeof(T));
  if (bytes != expected)
    throw IoError("data file " + path.string() + " holds " +
                  std::to_string(bytes) + " bytes, expected " +
                  std::to_string(expected));
  in.seekg(0);
  std::vector<T> buf(static_cast<std::size_t>(count));
  in.read(reinterpret_cast<char*>(buf.data()), expected);
  if (!in) throw IoError("short read from " + path.string());
  double* dst = out.data();
  for (std::int64_t i = 0; i < count; ++i)
    dst[i] = static_cast<double>(buf[static_cast<std::size_t>(i)]);
}

}  // namespace

MultivariateField load_field(const std::filesystem::path& header_path) {
  std::ifstream in(header_path);
  if (!in) throw IoError("cannot open header " + header_path.string());
  json h;
  try {
    in >> h;
  } catch (const json::exception& e) {
    throw IoError("malformed header " + header_path.string() + ": " +
                  e.what());
  }

  MultivariateField field;
  try {
    field.grid.dims = h.at("dims").get<std::vector<int>>();
    const int d = h.at("num_vars").get<int>();
    field.var_names = h.at("var_names").get<std::vector<std::string>>();
    if (h.contains("var_units") && !h.at("var_units").empty())
      field.var_units = h.at("var_units").get<std::vector<std::string>>();
    else
      field.var_units.assign(static_cast<std::size_t>(d), "");
    field.source_dtype = dtype_from_name(h.at("dtype").get<std::string>());
    const auto endian = h.at("endian").get<std::string>();
    if (endian != "little")
      throw ConfigError("unsupported byte order '" + endian +
                        "' (headers must declare little)");
    field.grid.validate();
    if (d < 1) throw ConfigError("num_vars must be >= 1");
    if (static_cast<int>(field.var_names.size()) != d)
      throw ConfigError("var_names length does not match num_vars");

    const std::int64_t n = field.grid.num_points();
    field.data.resize(n, d);
    const auto data_file =
        header_path.parent_path() / h.at("data_file").get<std::string>();
    if (field.source_dtype == Dtype::f32)
      read_payload<float>(data_file, n * d, field.data);
    else
      read_payload<double>(data_file, n * d, field.data);
  } catch (const json::exception& e) {
    throw IoError("header " + header_path.string() +
                  " is missing fields: " + e.what());
  }

  field.validate();
  return field;
}

void save_field(const MultivariateField& field,
                const std::filesystem::path& header_path, Dtype dtype) {
  field.validate();
  std::filesystem::path data_path = header_path;
  data_path.replace_extension(".bin");

  const std::int64_t count = field.data.size();
  {
    std::ofstream out(data_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + data_path.string());
    if (dtype == Dtype::f32) {
      std::vector<float> buf(static_cast<std::size_t>(count));
      const double* src = field.data.data();
      for (std::int64_t i = 0; i < count; ++i)
        buf[static_cast<std::size_t>(i)] = static_cast<float>(src[i]);
      out.write(reinterpret_cast<const char*>(buf.data()),
                count * static_cast<std::int64_t>(sizeof(float)));
    } else {
      out.write(reinterpret_cast<const char*>(field.data.data()),
                count * static_cast<std::int64_t>(sizeof(double)));
    }
    if (!out) throw IoError("short write to " + data_path.string());
  }

  json h;
  h["dims"] = field.grid.dims;
  h["num_vars"] = field.num_vars();
  h["var_names"] = field.var_names;
  h["var_units"] = field.var_units;
  h["dtype"] = dtype_name(dtype);
  h["endian"] = "little";
  h["data_file"] = data_path.filename().string();

  std::ofstream out(header_path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + header_path.string());
  out << h.dump(2) << "\n";
  if (!out) throw IoError("short write to " + header_path.string());
}

}  // namespace mvred
