#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "pty/operators.hpp"

namespace pty {

inline constexpr double kLogFloor = 1e-16;
inline constexpr double kQuotientFloor = 1e-16;

namespace detail {

/// One pixel's contribution |u|^2 - 2 d log max(|u|, eps), in double.
template <class R>
inline double ml_term(Complex<R> u, float d) {
  const double re = u.real();
  const double im = u.imag();
  const double mod2 = re * re + im * im;
  return mod2 - 2.0 * static_cast<double>(d) * std::log(std::max(std::sqrt(mod2), kLogFloor));
}

template <class R>
inline void accumulate_pattern(double& acc, std::span<const Complex<R>> u, std::span<const float> d) {
  for (std::size_t k = 0; k < u.size(); ++k) acc += ml_term(u[k], d[k]);
}

/// u - d / conj(u), with the quotient dropped where |u| < 1e-16.
template <class R>
inline Complex<R> ml_residual(Complex<R> u, float d) {
  if (std::abs(u) < static_cast<R>(kQuotientFloor)) return u;
  const R scale = static_cast<R>(d) / std::norm(u);
  return u - u * scale;
}

inline void check_data_shape(const ScanSet& scan, std::size_t n, const DiffractionSet& d) {
  if (d.count() != scan.size()) fail(ErrorKind::validation, "diffraction stack length does not match scan length");
  if (d.side() != n) fail(ErrorKind::validation, "diffraction pattern side does not match probe side");
}

}  // namespace detail

/// Poisson negative log-likelihood (constant data-only terms dropped),
/// accumulated in double over ascending (pattern, pixel).
template <class R>
double ml_objective(const FarField<R>& far, const DiffractionSet& d) {
  if (far.count() != d.count() || far.side() != d.side()) fail(ErrorKind::validation, "far field and data shapes differ");
  double acc = 0.0;
  for (std::size_t j = 0; j < far.count(); ++j) detail::accumulate_pattern<R>(acc, far.slice(j), d.slice(j));
  return acc;
}

/// Objective over the listed patterns (ascending), evaluated at psi + gamma*eta
/// when `eta` is given, else at psi. Used for both full and partial sums.
template <class R>
double ml_objective_subset(const ObjectField<R>& psi, const ObjectField<R>* eta, R gamma, const Probe<R>& probe,
                           const ScanSet& scan, const DiffractionSet& d, std::span<const std::size_t> patterns) {
  const std::size_t n = probe.side();
  detail::check_data_shape(scan, n, d);
  Fft2<R> plan(n);
  std::vector<Complex<R>> buf(n * n);
  double acc = 0.0;
  for (std::size_t j : patterns) {
    if (eta) {
      forward_pattern_at_step(psi, *eta, gamma, probe, scan[j], j, plan, std::span<Complex<R>>(buf));
    } else {
      forward_pattern(psi, probe, scan[j], j, plan, std::span<Complex<R>>(buf));
    }
    detail::accumulate_pattern<R>(acc, std::span<const Complex<R>>(buf), d.slice(j));
  }
  return acc;
}

inline std::vector<std::size_t> all_patterns(std::size_t count) {
  std::vector<std::size_t> idx(count);
  for (std::size_t j = 0; j < count; ++j) idx[j] = j;
  return idx;
}

/// F(psi) straight from the object; same bits as ml_objective(forward_g(psi), d).
template <class R>
double ml_objective_at(const ObjectField<R>& psi, const Probe<R>& probe, const ScanSet& scan,
                       const DiffractionSet& d) {
  const auto idx = all_patterns(scan.size());
  return ml_objective_subset<R>(psi, nullptr, R(0), probe, scan, d, idx);
}

/// Wirtinger gradient G^H(G psi - d / conj(G psi)) over the listed patterns,
/// scattered in list order into a zero object shaped like psi.
template <class R>
ObjectField<R> ml_gradient_subset(const ObjectField<R>& psi, const Probe<R>& probe, const ScanSet& scan,
                                  const DiffractionSet& d, std::span<const std::size_t> patterns) {
  const std::size_t n = probe.side();
  detail::check_data_shape(scan, n, d);
  ObjectField<R> grad(psi.rows(), psi.cols());
  Fft2<R> plan(n);
  std::vector<Complex<R>> buf(n * n);
  for (std::size_t j : patterns) {
    forward_pattern(psi, probe, scan[j], j, plan, std::span<Complex<R>>(buf));
    const auto dj = d.slice(j);
    for (std::size_t k = 0; k < buf.size(); ++k) buf[k] = detail::ml_residual(buf[k], dj[k]);
    adjoint_pattern<R>(buf, probe, scan[j], j, plan, grad);
  }
  return grad;
}

template <class R>
ObjectField<R> ml_gradient(const ObjectField<R>& psi, const Probe<R>& probe, const ScanSet& scan,
                           const DiffractionSet& d) {
  const auto idx = all_patterns(scan.size());
  return ml_gradient_subset<R>(psi, probe, scan, d, idx);
}

}  // namespace pty
