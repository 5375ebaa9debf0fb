#pragma once

#include <complex>
#include <cstddef>
#include <cstring>
#include <span>
#include <vector>

#include "pty/errors.hpp"

namespace pty {

/// Dense row-major 2D grid.
template <class T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(std::size_t rows, std::size_t cols, T fill = T{}) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Grid(std::size_t rows, std::size_t cols, std::vector<T> data) : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) fail(ErrorKind::validation, "grid data length does not match shape");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  bool same_shape(const Grid& other) const noexcept { return rows_ == other.rows_ && cols_ == other.cols_; }

  /// Copy of rows [first, last).
  Grid row_range(std::size_t first, std::size_t last) const {
    Grid out(last - first, cols_);
    std::copy(data_.begin() + first * cols_, data_.begin() + last * cols_, out.data_.begin());
    return out;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// `count` stacked square `side`x`side` slices, contiguous.
template <class T>
class Stack {
 public:
  Stack() = default;
  Stack(std::size_t count, std::size_t side, T fill = T{}) : count_(count), side_(side), data_(count * side * side, fill) {}
  Stack(std::size_t count, std::size_t side, std::vector<T> data) : count_(count), side_(side), data_(std::move(data)) {
    if (data_.size() != count_ * side_ * side_) fail(ErrorKind::validation, "stack data length does not match shape");
  }

  std::size_t count() const noexcept { return count_; }
  std::size_t side() const noexcept { return side_; }
  std::size_t slice_size() const noexcept { return side_ * side_; }

  std::span<T> slice(std::size_t j) noexcept { return {data_.data() + j * slice_size(), slice_size()}; }
  std::span<const T> slice(std::size_t j) const noexcept { return {data_.data() + j * slice_size(), slice_size()}; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

 private:
  std::size_t count_ = 0;
  std::size_t side_ = 0;
  std::vector<T> data_;
};

template <class R>
using Complex = std::complex<R>;

/// Complex transmission image being reconstructed.
template <class R>
using ObjectField = Grid<Complex<R>>;

/// Far-field stack G(psi), one slice per scan position.
template <class R>
using FarField = Stack<Complex<R>>;

/// Measured intensities. Always single precision, as acquired.
using DiffractionSet = Stack<float>;

/// Known square illumination; side is even.
template <class R>
class Probe {
 public:
  Probe() = default;
  explicit Probe(Grid<Complex<R>> values) : values_(std::move(values)) {
    if (values_.rows() != values_.cols()) fail(ErrorKind::validation, "probe must be square");
    if (values_.rows() < 1 || values_.rows() % 2 != 0) fail(ErrorKind::validation, "probe side must be even and >= 1");
  }

  std::size_t side() const noexcept { return values_.rows(); }
  const Grid<Complex<R>>& values() const noexcept { return values_; }
  std::span<const Complex<R>> flat() const noexcept { return values_.values(); }

  template <class S>
  Probe<S> cast() const {
    Grid<Complex<S>> out(side(), side());
    for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = Complex<S>(values_.values()[i]);
    return Probe<S>(std::move(out));
  }

 private:
  Grid<Complex<R>> values_;
};

/// Top-left corner of a probe footprint.
struct ScanPos {
  int row = 0;
  int col = 0;
  friend bool operator==(const ScanPos&, const ScanPos&) = default;
};

using ScanSet = std::vector<ScanPos>;

template <class T>
bool bitwise_equal(std::span<const T> a, std::span<const T> b) {
  return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size_bytes()) == 0);
}

template <class T>
bool bitwise_equal(const Grid<T>& a, const Grid<T>& b) {
  return a.same_shape(b) && bitwise_equal(a.values(), b.values());
}

template <class S, class R>
ObjectField<S> cast_field(const ObjectField<R>& in) {
  ObjectField<S> out(in.rows(), in.cols());
  for (std::size_t i = 0; i < in.size(); ++i) out.values()[i] = Complex<S>(in.values()[i]);
  return out;
}

/// Plain complex product (no inf/NaN recovery), identical on every path.
template <class R>
inline Complex<R> cmul(Complex<R> a, Complex<R> b) noexcept {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

/// conj(a) * b
template <class R>
inline Complex<R> cmul_conj(Complex<R> a, Complex<R> b) noexcept {
  return {a.real() * b.real() + a.imag() * b.imag(), a.real() * b.imag() - a.imag() * b.real()};
}

/// psi + gamma * eta for one pixel. Every code path that forms a trial or
/// updated object goes through here so results match bit for bit.
template <class R>
inline Complex<R> step_value(Complex<R> psi, R gamma, Complex<R> eta) noexcept {
  return {psi.real() + gamma * eta.real(), psi.imag() + gamma * eta.imag()};
}

}  // namespace pty
