#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "pty/grid.hpp"

namespace pty::metrics {

enum class Channel { phase, amplitude };

inline const char* to_string(Channel c) { return c == Channel::phase ? "phase" : "amplitude"; }

/// Half-open pixel window [row0, row1) x [col0, col1).
struct Crop {
  std::size_t row0 = 0, row1 = 0, col0 = 0, col1 = 0;

  std::size_t rows() const noexcept { return row1 - row0; }
  std::size_t cols() const noexcept { return col1 - col0; }
  bool empty() const noexcept { return row1 <= row0 || col1 <= col0; }
  std::string str() const {
    return std::to_string(row0) + ":" + std::to_string(row1) + ";" + std::to_string(col0) + ":" + std::to_string(col1);
  }
};

inline Crop full_crop(std::size_t height, std::size_t width) { return {0, height, 0, width}; }

/// Bounding box of all probe footprints, shrunk by N/2 on every side.
inline Crop scan_crop(const ScanSet& scan, std::size_t n) {
  if (scan.empty()) fail(ErrorKind::validation, "cannot crop to an empty scan");
  int r0 = scan[0].row, r1 = scan[0].row, c0 = scan[0].col, c1 = scan[0].col;
  for (const auto& p : scan) {
    r0 = std::min(r0, p.row);
    r1 = std::max(r1, p.row);
    c0 = std::min(c0, p.col);
    c1 = std::max(c1, p.col);
  }
  const auto half = static_cast<int>(n / 2);
  Crop c{static_cast<std::size_t>(r0 + half), static_cast<std::size_t>(r1 + static_cast<int>(n) - half),
         static_cast<std::size_t>(c0 + half), static_cast<std::size_t>(c1 + static_cast<int>(n) - half)};
  if (c.empty()) fail(ErrorKind::validation, "scan crop is empty");
  return c;
}

template <class R>
struct Aligned {
  ObjectField<R> field;
  double theta = 0.0;
};

/// Removes the global phase: rec * exp(-i theta), theta = arg sum_crop conj(ref)*rec.
template <class R>
Aligned<R> align_global_phase(const ObjectField<R>& rec, const ObjectField<R>& ref, const Crop& crop) {
  if (!rec.same_shape(ref)) fail(ErrorKind::validation, "reconstruction and reference shapes differ");
  if (crop.empty() || crop.row1 > rec.rows() || crop.col1 > rec.cols()) fail(ErrorKind::validation, "crop outside image");
  std::complex<double> acc{};
  for (std::size_t r = crop.row0; r < crop.row1; ++r) {
    for (std::size_t c = crop.col0; c < crop.col1; ++c) {
      acc += std::conj(std::complex<double>(ref(r, c))) * std::complex<double>(rec(r, c));
    }
  }
  if (!(std::abs(acc) > 0.0) || !std::isfinite(std::abs(acc))) {
    fail(ErrorKind::alignment, "correlation with the reference vanishes; images are unrelated");
  }
  Aligned<R> out{ObjectField<R>(rec.rows(), rec.cols()), std::arg(acc)};
  const std::complex<double> rot = std::polar(1.0, -out.theta);
  for (std::size_t i = 0; i < rec.size(); ++i) {
    const std::complex<double> v = std::complex<double>(rec.values()[i]) * rot;
    out.field.values()[i] = Complex<R>(static_cast<R>(v.real()), static_cast<R>(v.imag()));
  }
  return out;
}

/// Real channel of a complex field inside a crop.
template <class R>
Grid<double> channel_image(const ObjectField<R>& f, const Crop& crop, Channel ch) {
  Grid<double> out(crop.rows(), crop.cols());
  for (std::size_t r = 0; r < crop.rows(); ++r) {
    for (std::size_t c = 0; c < crop.cols(); ++c) {
      const std::complex<double> v(f(crop.row0 + r, crop.col0 + c));
      out(r, c) = ch == Channel::phase ? std::arg(v) : std::abs(v);
    }
  }
  return out;
}

inline std::pair<double, double> value_range(const Grid<double>& g) {
  const auto [lo, hi] = std::minmax_element(g.begin(), g.end());
  return {*lo, *hi};
}

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Mean structural similarity over all full 11x11 Gaussian windows;
/// dynamic range L = max(b) - min(b).
inline double ssim(const Grid<double>& a, const Grid<double>& b, const SsimParams& p = {}) {
  if (!a.same_shape(b)) fail(ErrorKind::validation, "ssim inputs differ in shape");
  const auto w = static_cast<std::size_t>(p.window);
  if (a.rows() < w || a.cols() < w) fail(ErrorKind::validation, "image smaller than the SSIM window");
  const auto [lo, hi] = value_range(b);
  const double range = hi - lo;
  const double c1 = (p.k1 * range) * (p.k1 * range);
  const double c2 = (p.k2 * range) * (p.k2 * range);

  std::vector<double> taps(w);
  double tsum = 0.0;
  const double mid = static_cast<double>(w - 1) / 2.0;
  for (std::size_t k = 0; k < w; ++k) {
    const double x = static_cast<double>(k) - mid;
    taps[k] = std::exp(-x * x / (2.0 * p.sigma * p.sigma));
    tsum += taps[k];
  }
  for (auto& t : taps) t /= tsum;

  const std::size_t out_r = a.rows() - w + 1;
  const std::size_t out_c = a.cols() - w + 1;
  // Horizontal pass for a, b, a^2, b^2, ab.
  std::array<Grid<double>, 5> horiz;
  for (auto& h : horiz) h = Grid<double>(a.rows(), out_c);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < out_c; ++c) {
      std::array<double, 5> s{};
      for (std::size_t k = 0; k < w; ++k) {
        const double x = a(r, c + k);
        const double y = b(r, c + k);
        s[0] += taps[k] * x;
        s[1] += taps[k] * y;
        s[2] += taps[k] * x * x;
        s[3] += taps[k] * y * y;
        s[4] += taps[k] * x * y;
      }
      for (std::size_t q = 0; q < 5; ++q) horiz[q](r, c) = s[q];
    }
  }
  double total = 0.0;
  for (std::size_t r = 0; r < out_r; ++r) {
    for (std::size_t c = 0; c < out_c; ++c) {
      std::array<double, 5> s{};
      for (std::size_t k = 0; k < w; ++k) {
        for (std::size_t q = 0; q < 5; ++q) s[q] += taps[k] * horiz[q](r + k, c);
      }
      const double mu_a = s[0], mu_b = s[1];
      const double var_a = s[2] - mu_a * mu_a;
      const double var_b = s[3] - mu_b * mu_b;
      const double cov = s[4] - mu_a * mu_b;
      total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
    }
  }
  return total / static_cast<double>(out_r * out_c);
}

/// 10 log10(L^2 / MSE) with L = max(b) - min(b); identical images give +inf.
inline double psnr(const Grid<double>& a, const Grid<double>& b) {
  if (!a.same_shape(b)) fail(ErrorKind::validation, "psnr inputs differ in shape");
  const auto [lo, hi] = value_range(b);
  const double range = hi - lo;
  if (!(range > 0.0)) fail(ErrorKind::validation, "reference image is constant; PSNR undefined");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.values()[i] - b.values()[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(range * range / mse);
}

/// sqrt(sum |cur - prev|^2), accumulated in double.
template <class R>
double step_norm(const ObjectField<R>& cur, const ObjectField<R>& prev) {
  if (!cur.same_shape(prev)) fail(ErrorKind::validation, "step_norm inputs differ in shape");
  double acc = 0.0;
  for (std::size_t i = 0; i < cur.size(); ++i) {
    const std::complex<double> d = std::complex<double>(cur.values()[i]) - std::complex<double>(prev.values()[i]);
    acc += d.real() * d.real() + d.imag() * d.imag();
  }
  return std::sqrt(acc);
}

struct MetricReport {
  double ssim = 0.0;
  double psnr_db = 0.0;
  Channel channel = Channel::phase;
  Crop crop;
  double phase_shift = 0.0;
};

inline std::string format_db(double v) { return std::isinf(v) && v > 0 ? "inf" : std::to_string(v); }

/// Align, crop, take the channel, rescale both by the reference's range, then
/// score.
template <class R>
MetricReport evaluate(const ObjectField<R>& rec, const ObjectField<R>& ref, const Crop& crop, Channel ch) {
  const Aligned<R> al = align_global_phase(rec, ref, crop);
  Grid<double> a = channel_image(al.field, crop, ch);
  Grid<double> b = channel_image(ref, crop, ch);
  const auto [lo, hi] = value_range(b);
  const double range = hi - lo;
  if (!(range > 0.0)) fail(ErrorKind::validation, "reference channel is constant inside the crop");
  for (auto& v : a) v = (v - lo) / range;
  for (auto& v : b) v = (v - lo) / range;
  MetricReport rep;
  rep.ssim = ssim(a, b);
  rep.psnr_db = psnr(a, b);
  rep.channel = ch;
  rep.crop = crop;
  rep.phase_shift = al.theta;
  return rep;
}

}  // namespace pty::metrics
