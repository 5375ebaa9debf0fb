#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "pty/objective.hpp"

namespace pty {

enum class SolverKind { cg, gd };

enum class Stage { grad = 0, dir = 1, ls = 2, update = 3 };

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::grad: return "GRAD stage";
    case Stage::dir: return "DIR stage";
    case Stage::ls: return "LS stage";
    case Stage::update: return "Update stage";
  }
  return "stage";
}

/// Step-length control. Defaults are the standard experimental constants:
/// start at 1, halve on rejection, accept on plain decrease (t = 0).
struct SolverConfig {
  SolverKind kind = SolverKind::cg;
  double gamma0 = 1.0;
  double tau = 0.5;
  double t = 0.0;
  int max_shrinks = 32;
  double gd_gamma = 0.0;

  void validate() const {
    if (!(gamma0 > 0.0) || !std::isfinite(gamma0)) fail(ErrorKind::config, "gamma0 must be > 0");
    if (!(tau > 0.0 && tau < 1.0)) fail(ErrorKind::config, "tau must lie in (0, 1)");
    if (!std::isfinite(t)) fail(ErrorKind::config, "t must be finite");
    if (max_shrinks < 1) fail(ErrorKind::config, "max_shrinks must be >= 1");
    if (kind == SolverKind::gd && !(gd_gamma >= 0.0 && std::isfinite(gd_gamma))) {
      fail(ErrorKind::config, "gradient descent needs a finite non-negative step length");
    }
  }
};

/// One row of the per-iteration trace.
struct IterationTrace {
  int iter = 0;
  double objective = 0.0;
  double gamma = 0.0;
  int shrinks = 0;
  double step_norm = 0.0;
  std::array<double, 4> stage_ms{};
  bool restarted = false;
  bool stalled = false;

  // Filled by the parallel engine only.
  std::array<double, 4> wait_ms{};
  std::uint64_t bytes_gathered = 0;
  std::uint64_t bytes_scattered = 0;
  std::uint64_t bytes_border = 0;
};

/// Equality over the columns that do not depend on wall-clock time.
inline bool same_numbers(const IterationTrace& a, const IterationTrace& b) {
  return a.iter == b.iter && bitwise_equal(std::span<const double>(&a.objective, 1), std::span<const double>(&b.objective, 1)) &&
         bitwise_equal(std::span<const double>(&a.gamma, 1), std::span<const double>(&b.gamma, 1)) &&
         a.shrinks == b.shrinks &&
         bitwise_equal(std::span<const double>(&a.step_norm, 1), std::span<const double>(&b.step_norm, 1)) &&
         a.restarted == b.restarted && a.stalled == b.stalled;
}

template <class R>
struct Direction {
  ObjectField<R> dir;
  bool restarted = false;
  std::complex<double> alpha{};
};

inline constexpr double kRestartThreshold = 1e-30;

namespace detail {

template <class R>
void require_finite(const ObjectField<R>& f, const char* what) {
  for (const auto& v : f.values()) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) fail(ErrorKind::numerical, std::string("non-finite ") + what);
  }
}

}  // namespace detail

/// Dai-Yuan search direction. With no history (first iteration) this is
/// steepest descent; a vanishing denominator or non-finite alpha restarts.
template <class R>
Direction<R> dai_yuan_direction(const ObjectField<R>& grad, const ObjectField<R>* grad_prev,
                                const ObjectField<R>* dir_prev) {
  if ((grad_prev == nullptr) != (dir_prev == nullptr)) {
    fail(ErrorKind::validation, "previous gradient and direction must be given together");
  }
  detail::require_finite(grad, "gradient");
  Direction<R> out{ObjectField<R>(grad.rows(), grad.cols()), false, {}};
  auto steepest = [&] {
    for (std::size_t i = 0; i < grad.size(); ++i) out.dir.values()[i] = -grad.values()[i];
  };
  if (grad_prev == nullptr) {
    steepest();
    return out;
  }
  if (!grad.same_shape(*grad_prev) || !grad.same_shape(*dir_prev)) fail(ErrorKind::validation, "direction shapes differ");
  detail::require_finite(*grad_prev, "previous gradient");
  detail::require_finite(*dir_prev, "previous direction");

  const double num = norm_squared(grad);
  std::complex<double> den{};
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const std::complex<double> diff = std::complex<double>(grad.values()[i]) - std::complex<double>(grad_prev->values()[i]);
    den += cmul_conj(std::complex<double>(dir_prev->values()[i]), diff);
  }
  const std::complex<double> alpha = num / den;
  if (std::abs(den) < kRestartThreshold || !std::isfinite(alpha.real()) || !std::isfinite(alpha.imag())) {
    steepest();
    out.restarted = true;
    return out;
  }
  out.alpha = alpha;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const std::complex<double> v =
        -std::complex<double>(grad.values()[i]) + cmul(alpha, std::complex<double>(dir_prev->values()[i]));
    out.dir.values()[i] = Complex<R>(static_cast<R>(v.real()), static_cast<R>(v.imag()));
  }
  return out;
}

struct LineSearchResult {
  double gamma = 0.0;
  int shrinks = 0;
  int trials = 0;
  double f_new = 0.0;
  bool stalled = false;
};

/// Backtracking: trials gamma0, gamma0*tau, ... ; the first gamma with
/// eval_f(gamma) <= f0 + gamma*t is accepted. After max_shrinks rejected
/// trials the search stalls with gamma = 0 and f_new = f0.
template <class EvalF>
LineSearchResult line_search(EvalF&& eval_f, double f0, const SolverConfig& cfg) {
  double gamma = cfg.gamma0;
  for (int k = 0; k < cfg.max_shrinks; ++k) {
    const double f = eval_f(gamma);
    if (!std::isfinite(f)) fail(ErrorKind::numerical, "non-finite objective in line search at trial " + std::to_string(k));
    if (f <= f0 + gamma * cfg.t) return {gamma, k, k + 1, f, false};
    gamma *= cfg.tau;
  }
  return {0.0, cfg.max_shrinks, cfg.max_shrinks, f0, true};
}

/// A known probe, scan and measured data; the object shape is carried separately
/// because the reference image is optional.
template <class R>
struct Dataset {
  Probe<R> probe;
  ScanSet scan;
  DiffractionSet d;
  std::size_t height = 0;
  std::size_t width = 0;
  std::optional<ObjectField<R>> psi_ref;

  void validate() const {
    if (height < probe.side() || width < probe.side()) fail(ErrorKind::validation, "object smaller than probe");
    validate_scan(scan, height, width, probe.side());
    detail::check_data_shape(scan, probe.side(), d);
  }

  template <class S>
  Dataset<S> cast() const {
    Dataset<S> out{probe.template cast<S>(), scan, d, height, width, std::nullopt};
    if (psi_ref) out.psi_ref = cast_field<S>(*psi_ref);
    return out;
  }
};

template <class R>
struct SolverState {
  ObjectField<R> psi;
  ObjectField<R> grad;
  std::optional<ObjectField<R>> grad_prev;
  std::optional<ObjectField<R>> dir_prev;
  int iter = 0;
  double f_cached = 0.0;
  SolverConfig config;
};

/// Flat transmission start (all pixels 1) with F(psi_0) cached.
template <class R>
SolverState<R> initial_state(const Dataset<R>& ds, const SolverConfig& cfg) {
  cfg.validate();
  SolverState<R> s;
  s.psi = ObjectField<R>(ds.height, ds.width, Complex<R>(1, 0));
  s.f_cached = ml_objective_at(s.psi, ds.probe, ds.scan, ds.d);
  if (!std::isfinite(s.f_cached)) fail(ErrorKind::numerical, "non-finite initial objective");
  s.config = cfg;
  return s;
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point t0, Clock::time_point t1) {
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

template <class R>
void apply_step(ObjectField<R>& psi, double gamma, const ObjectField<R>& eta) {
  const R g = static_cast<R>(gamma);
  for (std::size_t i = 0; i < psi.size(); ++i) psi.values()[i] = step_value(psi.values()[i], g, eta.values()[i]);
}

template <class Fn>
auto in_stage(Stage stage, int iter, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw e.with_context(std::string(stage_name(stage)) + ", iteration " + std::to_string(iter));
  }
}

}  // namespace detail

/// One conjugate-gradient iteration; `state` advances from m to m+1.
template <class R>
IterationTrace cg_iterate(SolverState<R>& state, const Probe<R>& probe, const ScanSet& scan, const DiffractionSet& d) {
  using detail::Clock;
  const int m = state.iter;
  IterationTrace tr;
  tr.iter = m;

  const auto t0 = Clock::now();
  state.grad = detail::in_stage(Stage::grad, m, [&] { return ml_gradient(state.psi, probe, scan, d); });
  const auto t1 = Clock::now();
  Direction<R> dir = detail::in_stage(Stage::dir, m, [&] {
    return dai_yuan_direction(state.grad, state.grad_prev ? &*state.grad_prev : nullptr,
                              state.dir_prev ? &*state.dir_prev : nullptr);
  });
  const auto t2 = Clock::now();
  const auto idx = all_patterns(scan.size());
  const LineSearchResult ls = detail::in_stage(Stage::ls, m, [&] {
    return line_search(
        [&](double gamma) {
          return ml_objective_subset<R>(state.psi, &dir.dir, static_cast<R>(gamma), probe, scan, d, idx);
        },
        state.f_cached, state.config);
  });
  const auto t3 = Clock::now();
  detail::apply_step(state.psi, ls.gamma, dir.dir);
  tr.step_norm = std::abs(ls.gamma) * norm2(dir.dir);
  state.grad_prev = std::move(state.grad);
  state.grad = ObjectField<R>();
  state.dir_prev = std::move(dir.dir);
  state.f_cached = ls.f_new;
  state.iter = m + 1;
  const auto t4 = Clock::now();

  tr.objective = ls.f_new;
  tr.gamma = ls.gamma;
  tr.shrinks = ls.shrinks;
  tr.stalled = ls.stalled;
  tr.restarted = dir.restarted;
  tr.stage_ms = {detail::ms_since(t0, t1), detail::ms_since(t1, t2), detail::ms_since(t2, t3), detail::ms_since(t3, t4)};
  return tr;
}

/// One gradient-descent iteration with the constant step config.gd_gamma.
template <class R>
IterationTrace gd_iterate(SolverState<R>& state, const Probe<R>& probe, const ScanSet& scan, const DiffractionSet& d) {
  using detail::Clock;
  const int m = state.iter;
  const double gamma = state.config.gd_gamma;
  if (!(gamma >= 0.0)) fail(ErrorKind::config, "gradient descent needs gd_gamma >= 0");
  IterationTrace tr;
  tr.iter = m;

  const auto t0 = Clock::now();
  state.grad = detail::in_stage(Stage::grad, m, [&] { return ml_gradient(state.psi, probe, scan, d); });
  const auto t1 = Clock::now();
  Direction<R> dir = detail::in_stage(Stage::dir, m, [&] { return dai_yuan_direction<R>(state.grad, nullptr, nullptr); });
  const auto t2 = Clock::now();
  const auto idx = all_patterns(scan.size());
  const double f = ml_objective_subset<R>(state.psi, &dir.dir, static_cast<R>(gamma), probe, scan, d, idx);
  if (!std::isfinite(f)) {
    fail(ErrorKind::numerical, std::string(stage_name(Stage::ls)) + ", iteration " + std::to_string(m) + ": non-finite objective");
  }
  const auto t3 = Clock::now();
  detail::apply_step(state.psi, gamma, dir.dir);
  tr.step_norm = gamma * norm2(dir.dir);
  state.grad_prev = std::move(state.grad);
  state.grad = ObjectField<R>();
  state.dir_prev = std::move(dir.dir);
  state.f_cached = f;
  state.iter = m + 1;
  const auto t4 = Clock::now();

  tr.objective = f;
  tr.gamma = gamma;
  tr.shrinks = 0;
  tr.stage_ms = {detail::ms_since(t0, t1), detail::ms_since(t1, t2), detail::ms_since(t2, t3), detail::ms_since(t3, t4)};
  return tr;
}

template <class R>
struct RunResult {
  ObjectField<R> psi;
  std::vector<IterationTrace> traces;
};

/// Called after every iteration with the trace row and the updated object.
template <class R>
using IterationObserver = std::function<void(const IterationTrace&, const ObjectField<R>&)>;

/// Single-worker reference reconstruction from the flat start.
template <class R>
RunResult<R> run_reference(const Dataset<R>& ds, const SolverConfig& cfg, int iters,
                           const std::type_identity_t<IterationObserver<R>>& observer = {}) {
  if (iters < 1) fail(ErrorKind::config, "iterations must be >= 1");
  ds.validate();
  SolverState<R> state = initial_state(ds, cfg);
  RunResult<R> out;
  out.traces.reserve(static_cast<std::size_t>(iters));
  for (int m = 0; m < iters; ++m) {
    IterationTrace tr = cfg.kind == SolverKind::cg ? cg_iterate(state, ds.probe, ds.scan, ds.d)
                                                   : gd_iterate(state, ds.probe, ds.scan, ds.d);
    if (observer) observer(tr, state.psi);
    out.traces.push_back(tr);
  }
  out.psi = std::move(state.psi);
  return out;
}

}  // namespace pty
