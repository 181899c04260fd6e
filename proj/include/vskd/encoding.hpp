#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "vskd/common.hpp"

namespace vskd {

/// One fixed-length tri-axial accelerometer segment.
struct SensorWindow {
  std::vector<double> samples_x;
  std::vector<double> samples_y;
  std::vector<double> samples_z;
  std::vector<double> timestamps;  // seconds, strictly increasing
  int label = 0;

  std::size_t length() const { return timestamps.size(); }

  void validate() const {
    const std::size_t n = timestamps.size();
    if (n < 2) throw InvalidInput("sensor window needs at least 2 samples");
    if (samples_x.size() != n || samples_y.size() != n || samples_z.size() != n)
      throw InvalidInput("sensor window axis lengths differ from timestamps");
    for (std::size_t i = 1; i < n; ++i)
      if (!(timestamps[i] > timestamps[i - 1]))
        throw InvalidInput("sensor window timestamps not strictly increasing");
    if (label < 0) throw InvalidInput("sensor window label must be >= 0");
  }
};

/// Polar form of a normalized series: angle encodes amplitude, radius time.
struct PolarSeries {
  std::vector<double> theta;   // radians, each in [0, pi]
  std::vector<double> radius;  // copy of the source timestamps
};

/// Tri-channel GASF image. Channels ordered (x, y, z); values in [-1, 1];
/// each channel is a symmetric side x side matrix stored row-major.
struct GafImage {
  std::array<std::vector<double>, 3> channels;
  int side = 0;
  int label = 0;

  double at(int c, int i, int j) const {
    return channels[static_cast<std::size_t>(c)][static_cast<std::size_t>(i) * side + j];
  }
};

/// 8-bit RGB raster of a GafImage; channel x->R, y->G, z->B, row-major.
struct Rgb8Image {
  int side = 0;
  int label = 0;
  std::vector<std::uint8_t> rgb;  // side * side * 3
};

/// Affine map of a series onto [-1, 1]: min -> -1, max -> +1.
/// A constant series maps to all zeros so the polar angle stays well-defined.
inline std::vector<double> min_max_normalize(const std::vector<double>& series) {
  if (series.empty()) throw InvalidInput("min_max_normalize: empty series");
  const auto [lo_it, hi_it] = std::minmax_element(series.begin(), series.end());
  const double lo = *lo_it, hi = *hi_it;
  std::vector<double> out(series.size());
  if (hi == lo) return out;  // all zeros
  const double span = hi - lo;
  for (std::size_t i = 0; i < series.size(); ++i)
    out[i] = 2.0 * (series[i] - lo) / span - 1.0;
  return out;
}

/// theta_i = arccos(x_i), r_i = t_i. Inputs must already be normalized to
/// [-1, 1]; values within 1e-12 of the interval are clamped, anything further
/// out is rejected as a missing-normalization bug.
inline PolarSeries polar_encode(const std::vector<double>& normalized,
                                const std::vector<double>& timestamps) {
  constexpr double kTol = 1e-12;
  if (normalized.size() != timestamps.size())
    throw InvalidInput("polar_encode: series and timestamps length mismatch");
  PolarSeries p;
  p.theta.resize(normalized.size());
  for (std::size_t i = 0; i < normalized.size(); ++i) {
    const double v = normalized[i];
    if (v < -1.0 - kTol || v > 1.0 + kTol)
      throw InvalidInput("polar_encode: value " + std::to_string(v) +
                         " outside [-1, 1]; normalize first");
    p.theta[i] = std::acos(std::clamp(v, -1.0, 1.0));
  }
  p.radius = timestamps;
  return p;
}

/// Gramian Angular Summation Field: G[i][j] = cos(theta_i + theta_j).
/// Returned row-major, n x n; symmetric bitwise by construction.
inline std::vector<double> gasf_matrix(const std::vector<double>& theta) {
  const std::size_t n = theta.size();
  std::vector<double> g(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = std::cos(theta[i] + theta[j]);
      g[i * n + j] = v;
      g[j * n + i] = v;
    }
  }
  return g;
}

/// Piecewise aggregate approximation: frame means over an as-even-as-possible
/// partition into `target` contiguous frames (frame i starts at
/// ceil(i*n/target), so earlier frames take the extra samples).
inline std::vector<double> paa_downsample(const std::vector<double>& series,
                                          std::size_t target) {
  const std::size_t n = series.size();
  if (target < 1 || target > n)
    throw InvalidInput("paa_downsample: target must be in [1, n]");
  std::vector<double> out(target);
  for (std::size_t i = 0; i < target; ++i) {
    const std::size_t begin = (i * n + target - 1) / target;
    const std::size_t end = ((i + 1) * n + target - 1) / target;
    double acc = 0.0;
    for (std::size_t k = begin; k < end; ++k) acc += series[k];
    out[i] = acc / static_cast<double>(end - begin);
  }
  return out;
}

/// Full encoding pipeline per axis: PAA to target_side samples, min-max
/// normalization, polar encoding, GASF. Channels ordered (x, y, z).
inline GafImage encode_window(const SensorWindow& window, int target_side) {
  window.validate();
  if (target_side < 2) throw InvalidInput("encode_window: target_side must be >= 2");
  const std::size_t side = static_cast<std::size_t>(target_side);
  const std::vector<double> ts = paa_downsample(window.timestamps, side);
  GafImage img;
  img.side = target_side;
  img.label = window.label;
  const std::vector<double>* axes[3] = {&window.samples_x, &window.samples_y,
                                        &window.samples_z};
  for (int c = 0; c < 3; ++c) {
    const std::vector<double> reduced = paa_downsample(*axes[c], side);
    const std::vector<double> normalized = min_max_normalize(reduced);
    const PolarSeries polar = polar_encode(normalized, ts);
    img.channels[static_cast<std::size_t>(c)] = gasf_matrix(polar.theta);
  }
  return img;
}

/// Linear [-1, 1] -> [0, 255] quantization, round half away from zero.
inline Rgb8Image quantize_image(const GafImage& image) {
  Rgb8Image out;
  out.side = image.side;
  out.label = image.label;
  const std::size_t pixels = static_cast<std::size_t>(image.side) * image.side;
  out.rgb.resize(pixels * 3);
  for (std::size_t p = 0; p < pixels; ++p)
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = (image.channels[c][p] + 1.0) * 0.5 * 255.0;
      out.rgb[p * 3 + c] =
          static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
    }
  return out;
}

/// Inverse of quantize_image up to the 1/255 quantization error.
inline GafImage dequantize_image(const Rgb8Image& raster) {
  GafImage img;
  img.side = raster.side;
  img.label = raster.label;
  const std::size_t pixels = static_cast<std::size_t>(raster.side) * raster.side;
  for (std::size_t c = 0; c < 3; ++c) {
    img.channels[c].resize(pixels);
    for (std::size_t p = 0; p < pixels; ++p)
      img.channels[c][p] = raster.rgb[p * 3 + c] / 255.0 * 2.0 - 1.0;
  }
  return img;
}

}  // namespace vskd
