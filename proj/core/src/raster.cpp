#include "mvred/raster.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <vector>

#include "mvred/error.hpp"

namespace mvred {

namespace {

struct Rgb {
  unsigned char r, g, b;
};

Rgb lerp(Rgb a, Rgb b, double t) {
  auto mix = [t](unsigned char x, unsigned char y) {
    return static_cast<unsigned char>(
        std::lround(x + t * (static_cast<double>(y) - x)));
  };
  return {mix(a.r, b.r), mix(a.g, b.g), mix(a.b, b.b)};
}

Rgb gray_map(double t) {
  const auto v = static_cast<unsigned char>(std::lround(255.0 * t));
  return {v, v, v};
}

// cool-warm style two-sided ramp
Rgb diverging_map(double t) {
  const Rgb lo{59, 76, 192}, mid{221, 221, 221}, hi{180, 4, 38};
  return t < 0.5 ? lerp(lo, mid, 2.0 * t) : lerp(mid, hi, 2.0 * t - 1.0);
}

// golden-angle hue walk, so neighbouring ids get far-apart hues
Rgb categorical_color(int id) {
  const double hue = std::fmod(0.12 + id * 0.61803398875, 1.0) * 6.0;
  const double sat = 0.85, val = 0.95;
  const int sector = static_cast<int>(hue) % 6;
  const double f = hue - std::floor(hue);
  const double p = val * (1 - sat);
  const double q = val * (1 - sat * f);
  const double t = val * (1 - sat * (1 - f));
  double r = 0, g = 0, b = 0;
  switch (sector) {
    case 0: r = val, g = t, b = p; break;
    case 1: r = q, g = val, b = p; break;
    case 2: r = p, g = val, b = t; break;
    case 3: r = p, g = q, b = val; break;
    case 4: r = t, g = p, b = val; break;
    default: r = val, g = p, b = q; break;
  }
  return {static_cast<unsigned char>(std::lround(255 * r)),
          static_cast<unsigned char>(std::lround(255 * g)),
          static_cast<unsigned char>(std::lround(255 * b))};
}

}  // namespace

void save_scalar_raster(const ScalarField& sf,
                        const std::filesystem::path& ppm_path,
                        const RasterOptions& options) {
  sf.grid.validate();
  if (sf.values.size() != sf.grid.num_points())
    throw ConfigError("scalar field length does not match its grid");
  if (!sf.values.allFinite())
    throw ComputeError("scalar field contains non-finite values");

  // Resolve the plane to render.
  int axis_u, axis_v;
  std::array<int, 3> fixed{0, 0, 0};
  if (sf.grid.ndims() == 2) {
    axis_u = 0;
    axis_v = 1;
  } else {
    if (options.slice_axis < 0)
      throw ConfigError("3D fields require a slice axis for raster output");
    if (options.slice_axis > 2)
      throw ConfigError("slice axis out of range");
    if (options.slice_index < 0 ||
        options.slice_index >= sf.grid.dim(options.slice_axis))
      throw ConfigError("slice index out of range");
    axis_u = options.slice_axis == 0 ? 1 : 0;
    axis_v = options.slice_axis == 2 ? 1 : 2;
    fixed[static_cast<std::size_t>(options.slice_axis)] = options.slice_index;
  }
  const int width = sf.grid.dim(axis_u);
  const int height = sf.grid.dim(axis_v);

  double lo = sf.values.minCoeff();
  double hi = sf.values.maxCoeff();
  if (sf.grid.ndims() == 3) {
    // normalize over the rendered slice, not the whole volume
    lo = std::numeric_limits<double>::infinity();
    hi = -lo;
    auto c = fixed;
    for (int v = 0; v < height; ++v)
      for (int u = 0; u < width; ++u) {
        c[static_cast<std::size_t>(axis_u)] = u;
        c[static_cast<std::size_t>(axis_v)] = v;
        const double x = sf.values[sf.grid.index(c)];
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
  }
  const bool degenerate = !(hi > lo);
  if (degenerate)
    std::cerr << "[mvred] warning: degenerate value range in "
              << ppm_path.string() << ", emitting midtone raster\n";

  std::ofstream out(ppm_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + ppm_path.string());
  out << "P6\n" << width << " " << height << "\n255\n";

  std::vector<unsigned char> row(static_cast<std::size_t>(width) * 3);
  auto c = fixed;
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      c[static_cast<std::size_t>(axis_u)] = u;
      c[static_cast<std::size_t>(axis_v)] = v;
      const double x = sf.values[sf.grid.index(c)];
      Rgb rgb;
      if (options.colormap == Colormap::Categorical) {
        int k = options.categories;
        if (k <= 0) k = static_cast<int>(std::lround(hi - lo)) + 1;
        int id = static_cast<int>(std::lround(x - lo));
        id = std::clamp(id, 0, std::max(0, k - 1));
        rgb = categorical_color(id);
      } else {
        const double t = degenerate ? 0.5 : (x - lo) / (hi - lo);
        rgb = options.colormap == Colormap::Gray ? gray_map(t)
                                                 : diverging_map(t);
      }
      row[static_cast<std::size_t>(u) * 3 + 0] = rgb.r;
      row[static_cast<std::size_t>(u) * 3 + 1] = rgb.g;
      row[static_cast<std::size_t>(u) * 3 + 2] = rgb.b;
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw IoError("short write to " + ppm_path.string());

  std::filesystem::path range_path = ppm_path;
  range_path.replace_extension(".range.txt");
  std::ofstream rt(range_path, std::ios::trunc);
  if (!rt) throw IoError("cannot write " + range_path.string());
  char buf[80];
  std::snprintf(buf, sizeof buf, "%.17g %.17g\n", lo, hi);
  rt << buf;
}

}  // namespace mvred
