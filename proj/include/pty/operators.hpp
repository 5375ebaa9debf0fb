#pragma once

#include <complex>
#include <span>
#include <vector>

#include "pty/fft.hpp"
#include "pty/field_core.hpp"

namespace pty {

/// <a, b> = sum conj(a_i) * b_i, accumulated in double in index order.
template <class R>
std::complex<double> inner(std::span<const Complex<R>> a, std::span<const Complex<R>> b) {
  if (a.size() != b.size()) fail(ErrorKind::validation, "inner product of mismatched lengths");
  std::complex<double> acc{};
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += cmul_conj(std::complex<double>(a[i]), std::complex<double>(b[i]));
  }
  return acc;
}

template <class R>
double norm_squared(std::span<const Complex<R>> a) {
  double acc = 0.0;
  for (const auto& v : a) {
    const double re = v.real();
    const double im = v.imag();
    acc += re * re + im * im;
  }
  return acc;
}

template <class R>
double norm2(std::span<const Complex<R>> a) {
  return std::sqrt(norm_squared(a));
}

template <class R>
double norm_squared(const Grid<Complex<R>>& a) {
  return norm_squared(a.values());
}

template <class R>
double norm2(const Grid<Complex<R>>& a) {
  return std::sqrt(norm_squared(a.values()));
}

template <class R>
std::complex<double> inner(const Grid<Complex<R>>& a, const Grid<Complex<R>>& b) {
  return inner(a.values(), b.values());
}

template <class R>
double norm2(const Stack<Complex<R>>& a) {
  return std::sqrt(norm_squared(a.values()));
}

template <class R>
std::complex<double> inner(const Stack<Complex<R>>& a, const Stack<Complex<R>>& b) {
  return inner(a.values(), b.values());
}

/// Exit wave of one scan position in the far field: ufft2(p . window).
/// Reuses `plan` and writes into `out` (N*N).
template <class R>
void forward_pattern(const ObjectField<R>& obj, const Probe<R>& probe, ScanPos pos, std::size_t index, Fft2<R>& plan,
                     std::span<Complex<R>> out) {
  const std::size_t n = probe.side();
  detail::check_footprint(obj.rows(), obj.cols(), pos, n, index);
  const auto p = probe.flat();
  for (std::size_t r = 0; r < n; ++r) {
    auto src = obj.row(static_cast<std::size_t>(pos.row) + r).subspan(static_cast<std::size_t>(pos.col), n);
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = cmul(p[r * n + c], src[c]);
  }
  plan.forward(out);
}

/// Same as `forward_pattern` on the trial object psi + gamma * eta, without
/// forming it. Pixel values match `step_value` exactly.
template <class R>
void forward_pattern_at_step(const ObjectField<R>& psi, const ObjectField<R>& eta, R gamma, const Probe<R>& probe,
                             ScanPos pos, std::size_t index, Fft2<R>& plan, std::span<Complex<R>> out) {
  const std::size_t n = probe.side();
  detail::check_footprint(psi.rows(), psi.cols(), pos, n, index);
  const auto p = probe.flat();
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t row = static_cast<std::size_t>(pos.row) + r;
    auto a = psi.row(row).subspan(static_cast<std::size_t>(pos.col), n);
    auto e = eta.row(row).subspan(static_cast<std::size_t>(pos.col), n);
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = cmul(p[r * n + c], step_value(a[c], gamma, e[c]));
  }
  plan.forward(out);
}

/// conj(p) . ufft2^-1(y), scatter-added into acc. Destroys `y`.
template <class R>
void adjoint_pattern(std::span<Complex<R>> y, const Probe<R>& probe, ScanPos pos, std::size_t index, Fft2<R>& plan,
                     ObjectField<R>& acc) {
  const std::size_t n = probe.side();
  plan.inverse(y);
  const auto p = probe.flat();
  for (std::size_t i = 0; i < n * n; ++i) y[i] = cmul_conj(p[i], y[i]);
  scatter_add_patch<Complex<R>>(acc, std::span<const Complex<R>>(y.data(), y.size()), pos, n, index);
}

/// G psi for every scan position.
template <class R>
FarField<R> forward_g(const ObjectField<R>& obj, const Probe<R>& probe, const ScanSet& scan) {
  const std::size_t n = probe.side();
  FarField<R> out(scan.size(), n);
  Fft2<R> plan(n);
  for (std::size_t j = 0; j < scan.size(); ++j) forward_pattern(obj, probe, scan[j], j, plan, out.slice(j));
  return out;
}

/// G^H y into a zero object of the given shape, patterns in ascending order.
template <class R>
ObjectField<R> adjoint_gh(const FarField<R>& y, const Probe<R>& probe, const ScanSet& scan, std::size_t height,
                          std::size_t width) {
  const std::size_t n = probe.side();
  if (y.count() != scan.size()) fail(ErrorKind::validation, "far-field stack length does not match scan length");
  if (y.side() != n) fail(ErrorKind::validation, "far-field slice side does not match probe side");
  ObjectField<R> acc(height, width);
  Fft2<R> plan(n);
  std::vector<Complex<R>> buf(n * n);
  for (std::size_t j = 0; j < scan.size(); ++j) {
    auto src = y.slice(j);
    std::copy(src.begin(), src.end(), buf.begin());
    adjoint_pattern<R>(buf, probe, scan[j], j, plan, acc);
  }
  return acc;
}

}  // namespace pty
