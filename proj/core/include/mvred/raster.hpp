#pragma once

#include <filesystem>

#include "mvred/field.hpp"

namespace mvred {

enum class Colormap { Gray, Diverging, Categorical };

struct RasterOptions {
  Colormap colormap = Colormap::Gray;
  int categories = 0;   // Categorical only; 0 = derive from value range
  int slice_axis = -1;  // required for 3D grids
  int slice_index = 0;
};

// Writes a binary PPM (P6, 8-bit) of the field, min-max normalized, plus
// "<name>.range.txt" holding the normalization bounds as two decimal
// literals. A degenerate range (min == max) renders as uniform midtone and
// emits a warning. The field itself is never modified.
void save_scalar_raster(const ScalarField& sf,
                        const std::filesystem::path& ppm_path,
                        const RasterOptions& options = {});

}  // namespace mvred
