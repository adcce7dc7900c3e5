#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mvred/grid.hpp"

namespace mvred {

// Point-major data matrices: one row per grid point.
using RowMatrixXd =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Dtype { f32, f64 };

inline std::size_t dtype_size(Dtype t) { return t == Dtype::f32 ? 4 : 8; }
inline const char* dtype_name(Dtype t) { return t == Dtype::f32 ? "f32" : "f64"; }
Dtype dtype_from_name(const std::string& name);

// Gridded d-variable field. Immutable by convention once built: the
// pipeline only ever reads it, so it is safe to share across workers.
struct MultivariateField {
  GridSpec grid;
  std::vector<std::string> var_names;
  std::vector<std::string> var_units;
  RowMatrixXd data;               // N x d
  Dtype source_dtype = Dtype::f64;

  int num_vars() const { return static_cast<int>(data.cols()); }
  std::int64_t num_points() const { return data.rows(); }

  // Index of a named variable, -1 if absent.
  int var_index(const std::string& name) const;

  // Checks every documented invariant; throws on violation.
  void validate() const;
};

struct ScalarField {
  GridSpec grid;
  Eigen::VectorXd values;  // length N
};

// Reads "<header>.json" + the flat binary payload it points at.
MultivariateField load_field(const std::filesystem::path& header_path);

// Writes the JSON sidecar plus "<stem>.bin" next to it at the requested
// precision. Loading the result back reproduces the values bit-exactly at
// that precision.
void save_field(const MultivariateField& field,
                const std::filesystem::path& header_path, Dtype dtype);

}  // namespace mvred
