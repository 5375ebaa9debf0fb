#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "pty/grid.hpp"

namespace pty {

/// Unitary 2D DFT on square N x N row-major grids (scale 1/N per 2D
/// transform, so the inverse is also the adjoint).
///
/// Radix-2 for power-of-two sides, direct DFT otherwise. Twiddles are
/// computed in double and rounded once, so two plans of the same side give
/// bit-identical results for identical input.
template <class R>
class Fft2 {
 public:
  explicit Fft2(std::size_t n) : n_(n), scratch_(n) {
    if (n == 0) fail(ErrorKind::validation, "FFT side must be >= 1");
    pow2_ = (n & (n - 1)) == 0;
    const double two_pi = 2.0 * std::numbers::pi;
    if (pow2_) {
      twiddle_.resize(n / 2);
      for (std::size_t k = 0; k < n / 2; ++k) {
        const double a = -two_pi * static_cast<double>(k) / static_cast<double>(n);
        twiddle_[k] = Complex<R>(static_cast<R>(std::cos(a)), static_cast<R>(std::sin(a)));
      }
      bitrev_.resize(n);
      std::size_t bits = 0;
      while ((std::size_t{1} << bits) < n) ++bits;
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t r = 0;
        for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
        bitrev_[i] = r;
      }
    } else {
      twiddle_.resize(n);
      for (std::size_t k = 0; k < n; ++k) {
        const double a = -two_pi * static_cast<double>(k) / static_cast<double>(n);
        twiddle_[k] = Complex<R>(static_cast<R>(std::cos(a)), static_cast<R>(std::sin(a)));
      }
    }
    scale_ = static_cast<R>(1.0 / static_cast<double>(n));
  }

  std::size_t side() const noexcept { return n_; }

  void forward(std::span<Complex<R>> grid) { transform(grid, false); }
  void inverse(std::span<Complex<R>> grid) { transform(grid, true); }

 private:
  void transform(std::span<Complex<R>> g, bool inv) {
    if (g.size() != n_ * n_) fail(ErrorKind::validation, "FFT input is not N x N");
    for (std::size_t r = 0; r < n_; ++r) line(g.subspan(r * n_, n_), inv);
    for (std::size_t c = 0; c < n_; ++c) {
      for (std::size_t r = 0; r < n_; ++r) column_[r] = g[r * n_ + c];
      line(column_, inv);
      for (std::size_t r = 0; r < n_; ++r) g[r * n_ + c] = column_[r] * scale_;
    }
  }

  Complex<R> tw(std::size_t k, bool inv) const {
    const Complex<R> w = twiddle_[k];
    return inv ? std::conj(w) : w;
  }

  void line(std::span<Complex<R>> x, bool inv) {
    if (pow2_) {
      for (std::size_t i = 0; i < n_; ++i) {
        if (i < bitrev_[i]) std::swap(x[i], x[bitrev_[i]]);
      }
      for (std::size_t len = 2; len <= n_; len <<= 1) {
        const std::size_t half = len / 2;
        const std::size_t stride = n_ / len;
        for (std::size_t start = 0; start < n_; start += len) {
          for (std::size_t k = 0; k < half; ++k) {
            const Complex<R> w = tw(k * stride, inv);
            const Complex<R> a = x[start + k];
            const Complex<R> b = x[start + k + half];
            const Complex<R> t(w.real() * b.real() - w.imag() * b.imag(), w.real() * b.imag() + w.imag() * b.real());
            x[start + k] = a + t;
            x[start + k + half] = a - t;
          }
        }
      }
      return;
    }
    for (std::size_t k = 0; k < n_; ++k) {
      Complex<R> acc{};
      for (std::size_t j = 0; j < n_; ++j) {
        const Complex<R> w = tw((j * k) % n_, inv);
        acc += Complex<R>(w.real() * x[j].real() - w.imag() * x[j].imag(), w.real() * x[j].imag() + w.imag() * x[j].real());
      }
      scratch_[k] = acc;
    }
    std::copy(scratch_.begin(), scratch_.end(), x.begin());
  }

  std::size_t n_;
  bool pow2_ = false;
  R scale_{};
  std::vector<Complex<R>> twiddle_;
  std::vector<std::size_t> bitrev_;
  std::vector<Complex<R>> scratch_;
  std::vector<Complex<R>> column_ = std::vector<Complex<R>>(n_);
};

/// Unitary forward transform of one N x N grid.
template <class R>
Grid<Complex<R>> ufft2(Grid<Complex<R>> grid) {
  if (grid.rows() != grid.cols()) fail(ErrorKind::validation, "ufft2 expects a square grid");
  Fft2<R> plan(grid.rows());
  plan.forward(grid.values());
  return grid;
}

template <class R>
Grid<Complex<R>> iufft2(Grid<Complex<R>> grid) {
  if (grid.rows() != grid.cols()) fail(ErrorKind::validation, "iufft2 expects a square grid");
  Fft2<R> plan(grid.rows());
  plan.inverse(grid.values());
  return grid;
}

}  // namespace pty
