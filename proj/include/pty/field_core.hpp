#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pty/grid.hpp"

namespace pty {

namespace detail {

inline void check_footprint(std::size_t rows, std::size_t cols, ScanPos pos, std::size_t n,
                            std::optional<std::size_t> index) {
  const bool ok = pos.row >= 0 && pos.col >= 0 && static_cast<std::size_t>(pos.row) + n <= rows &&
                  static_cast<std::size_t>(pos.col) + n <= cols;
  if (!ok) {
    std::string what = "footprint at (" + std::to_string(pos.row) + ", " + std::to_string(pos.col) + ") of side " +
                       std::to_string(n) + " outside " + std::to_string(rows) + "x" + std::to_string(cols) + " object";
    if (index) what = "pattern " + std::to_string(*index) + ": " + what;
    fail(ErrorKind::bounds, what);
  }
}

}  // namespace detail

/// Copy of the n x n window with top-left corner `pos`.
template <class T>
Grid<T> extract_patch(const Grid<T>& obj, ScanPos pos, std::size_t n, std::optional<std::size_t> index = {}) {
  detail::check_footprint(obj.rows(), obj.cols(), pos, n, index);
  Grid<T> out(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    auto src = obj.row(static_cast<std::size_t>(pos.row) + r).subspan(static_cast<std::size_t>(pos.col), n);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

/// acc[pos + (r, c)] += patch[r, c]. `patch` is n x n, row-major.
template <class T>
void scatter_add_patch(Grid<T>& acc, std::span<const T> patch, ScanPos pos, std::size_t n,
                       std::optional<std::size_t> index = {}) {
  if (patch.size() != n * n) fail(ErrorKind::validation, "patch size does not match side");
  detail::check_footprint(acc.rows(), acc.cols(), pos, n, index);
  for (std::size_t r = 0; r < n; ++r) {
    auto dst = acc.row(static_cast<std::size_t>(pos.row) + r).subspan(static_cast<std::size_t>(pos.col), n);
    const T* src = patch.data() + r * n;
    for (std::size_t c = 0; c < n; ++c) dst[c] += src[c];
  }
}

template <class T>
void scatter_add_patch(Grid<T>& acc, const Grid<T>& patch, ScanPos pos, std::optional<std::size_t> index = {}) {
  scatter_add_patch(acc, patch.values(), pos, patch.rows(), index);
}

/// Round raw (row, col) coordinates half-up and check every footprint fits.
inline ScanSet round_positions(const std::vector<std::pair<double, double>>& raw, std::size_t height,
                               std::size_t width, std::size_t n) {
  ScanSet out;
  out.reserve(raw.size());
  std::vector<std::size_t> bad;
  for (std::size_t j = 0; j < raw.size(); ++j) {
    const double r = std::floor(raw[j].first + 0.5);
    const double c = std::floor(raw[j].second + 0.5);
    const bool ok = std::isfinite(r) && std::isfinite(c) && r >= 0 && c >= 0 &&
                    r + static_cast<double>(n) <= static_cast<double>(height) &&
                    c + static_cast<double>(n) <= static_cast<double>(width);
    if (!ok) {
      bad.push_back(j);
      continue;
    }
    out.push_back({static_cast<int>(r), static_cast<int>(c)});
  }
  if (!bad.empty()) {
    std::string list;
    for (std::size_t k = 0; k < bad.size() && k < 20; ++k) list += (k ? ", " : "") + std::to_string(bad[k]);
    if (bad.size() > 20) list += ", ...";
    fail(ErrorKind::validation, std::to_string(bad.size()) + " scan position(s) out of bounds after rounding: " + list);
  }
  return out;
}

/// Bounds check for a whole scan against an object shape.
inline void validate_scan(const ScanSet& scan, std::size_t height, std::size_t width, std::size_t n) {
  if (scan.empty()) fail(ErrorKind::validation, "scan set is empty");
  for (std::size_t j = 0; j < scan.size(); ++j) detail::check_footprint(height, width, scan[j], n, j);
}

inline void validate_diffraction(const DiffractionSet& d) {
  for (float v : d.values()) {
    if (!std::isfinite(v) || v < 0.0f) fail(ErrorKind::validation, "diffraction data must be finite and non-negative");
  }
}

}  // namespace pty
