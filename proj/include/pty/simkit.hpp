#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "pty/operators.hpp"

namespace pty::sim {

enum class Phantom { siemens, disks };

struct SimConfig {
  Phantom phantom = Phantom::siemens;
  std::size_t height = 256;
  std::size_t width = 256;
  std::size_t probe_side = 64;
  int spokes = 16;
  int step = 16;
  int jitter = 0;
  double photons = 1.0;
  bool poisson = false;
  std::uint64_t seed = 1;
  double sigma_frac = 0.25;
  double chirp = 8.0;

  void validate() const {
    if (step < 1) fail(ErrorKind::config, "scan step must be >= 1");
    if (jitter < 0 || jitter >= step) fail(ErrorKind::config, "jitter must satisfy 0 <= jitter < step");
    if (!(photons > 0.0) || !std::isfinite(photons)) fail(ErrorKind::config, "photons must be > 0");
    if (height < probe_side || width < probe_side) fail(ErrorKind::config, "object must be at least probe-sized");
    if (probe_side < 2 || probe_side % 2 != 0) fail(ErrorKind::config, "probe side must be even");
    if (static_cast<std::size_t>(step) >= probe_side) fail(ErrorKind::config, "scan step must be below the probe side (no overlap)");
  }
};

/// Purposes of the counter-based random streams.
enum class Stream : std::uint64_t { jitter = 1, poisson = 2, disks = 3, test = 4 };

/// Stateless random numbers keyed by (seed, purpose, index, draw).
/// The same key always gives the same value, independent of call order.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t bits(Stream purpose, std::uint64_t index, std::uint64_t draw = 0) const {
    std::uint64_t h = mix(seed_ ^ 0x9E3779B97F4A7C15ull);
    h = mix(h ^ static_cast<std::uint64_t>(purpose));
    h = mix(h ^ index);
    return mix(h ^ draw);
  }

  /// Uniform in [0, 1).
  double uniform(Stream purpose, std::uint64_t index, std::uint64_t draw = 0) const {
    return static_cast<double>(bits(purpose, index, draw) >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [lo, hi].
  int uniform_int(Stream purpose, std::uint64_t index, int lo, int hi) const {
    const auto span = static_cast<std::uint64_t>(hi - lo + 1);
    return lo + static_cast<int>(bits(purpose, index) % span);
  }

  /// Poisson(mean): inversion below 10, rounded normal with rejection above.
  double poisson(std::uint64_t index, double mean) const {
    if (mean <= 0.0) return 0.0;
    if (mean < 10.0) {
      const double u = uniform(Stream::poisson, index, 0);
      double p = std::exp(-mean);
      double cdf = p;
      double k = 0.0;
      while (u > cdf && k < 1000.0) {
        k += 1.0;
        p *= mean / k;
        cdf += p;
      }
      return k;
    }
    for (std::uint64_t draw = 0;; draw += 2) {
      const double u1 = 1.0 - uniform(Stream::poisson, index, draw);
      const double u2 = uniform(Stream::poisson, index, draw + 1);
      const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
      const double x = std::floor(mean + std::sqrt(mean) * z + 0.5);
      if (x >= 0.0) return x;
    }
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
};

/// Binary spoke wheel: 1 inside `spokes` bright wedges within radius
/// 0.45*min(H, W) of (H/2, W/2); the center pixel itself is 0.
inline Grid<double> siemens_star(std::size_t height, std::size_t width, int spokes) {
  if (spokes < 2 || spokes % 2 != 0) fail(ErrorKind::validation, "spokes must be even and >= 2");
  Grid<double> img(height, width, 0.0);
  const double cy = static_cast<double>(height / 2);
  const double cx = static_cast<double>(width / 2);
  const double radius = 0.45 * static_cast<double>(std::min(height, width));
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const double dy = static_cast<double>(r) - cy;
      const double dx = static_cast<double>(c) - cx;
      const double rho = std::hypot(dy, dx);
      if (rho == 0.0 || rho > radius) continue;
      const double theta = std::atan2(dy, dx);
      if (std::cos(spokes * theta) > 0.0) img(r, c) = 1.0;
    }
  }
  return img;
}

/// Random non-overlapping disks of value 1 on 0.
inline Grid<double> disks(std::size_t height, std::size_t width, std::uint64_t seed, int count = 24) {
  Grid<double> img(height, width, 0.0);
  const CounterRng rng(seed);
  struct Disk {
    double y, x, r;
  };
  std::vector<Disk> placed;
  const double min_side = static_cast<double>(std::min(height, width));
  for (std::uint64_t attempt = 0; attempt < 5000 && placed.size() < static_cast<std::size_t>(count); ++attempt) {
    const double r = min_side * (0.03 + 0.09 * rng.uniform(Stream::disks, attempt, 0));
    const double y = r + (static_cast<double>(height) - 2 * r) * rng.uniform(Stream::disks, attempt, 1);
    const double x = r + (static_cast<double>(width) - 2 * r) * rng.uniform(Stream::disks, attempt, 2);
    bool clear = true;
    for (const auto& d : placed) {
      if (std::hypot(d.y - y, d.x - x) < d.r + r + 1.0) {
        clear = false;
        break;
      }
    }
    if (clear) placed.push_back({y, x, r});
  }
  for (std::size_t row = 0; row < height; ++row) {
    for (std::size_t col = 0; col < width; ++col) {
      for (const auto& d : placed) {
        if (std::hypot(static_cast<double>(row) - d.y, static_cast<double>(col) - d.x) <= d.r) {
          img(row, col) = 1.0;
          break;
        }
      }
    }
  }
  return img;
}

/// psi = (1 - 0.3*img) * exp(i*pi/2*img).
template <class R = float>
ObjectField<R> make_object(const Grid<double>& img) {
  ObjectField<R> out(img.rows(), img.cols());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = img.values()[i];
    if (!(v >= 0.0 && v <= 1.0)) fail(ErrorKind::validation, "phantom values must lie in [0, 1]");
    const double amp = 1.0 - 0.3 * v;
    const double phase = std::numbers::pi / 2.0 * v;
    out.values()[i] = Complex<R>(static_cast<R>(amp * std::cos(phase)), static_cast<R>(amp * std::sin(phase)));
  }
  return out;
}

/// Gaussian spot with a quadratic phase chirp, scaled so sum |p|^2 = N^2.
template <class R = float>
Probe<R> make_probe(std::size_t n, double sigma_frac = 0.25, double chirp = 8.0) {
  if (n < 2 || n % 2 != 0) fail(ErrorKind::validation, "probe side must be even");
  const double sigma = sigma_frac * static_cast<double>(n);
  const double half = static_cast<double>(n) / 2.0;
  const double nn = static_cast<double>(n) * static_cast<double>(n);
  std::vector<std::complex<double>> raw(n * n);
  double energy = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double dy = static_cast<double>(r) - half;
      const double dx = static_cast<double>(c) - half;
      const double rho2 = dy * dy + dx * dx;
      const double amp = std::exp(-rho2 / (2.0 * sigma * sigma));
      const double phase = chirp * 2.0 * std::numbers::pi * rho2 / nn;
      raw[r * n + c] = std::polar(amp, phase);
      energy += amp * amp;
    }
  }
  const double scale = std::sqrt(nn / energy);
  Grid<Complex<R>> g(n, n);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    g.values()[i] = Complex<R>(static_cast<R>(raw[i].real() * scale), static_cast<R>(raw[i].imag() * scale));
  }
  return Probe<R>(std::move(g));
}

/// Raster offsets 0, step, 2*step, ... <= limit, plus `limit` itself when the
/// raster does not land on it.
inline std::vector<int> raster_axis(int limit, int step) {
  std::vector<int> out;
  for (int v = 0; v <= limit; v += step) out.push_back(v);
  if (out.back() != limit) out.push_back(limit);
  return out;
}

/// Row-major raster of top-left corners over [0, H-N] x [0, W-N], each moved by
/// an independent integer jitter in [-jitter, jitter] and clamped.
inline ScanSet make_scan(std::size_t height, std::size_t width, std::size_t n, int step, int jitter,
                         std::uint64_t seed) {
  if (step < 1) fail(ErrorKind::config, "scan step must be >= 1");
  if (static_cast<std::size_t>(step) >= n) fail(ErrorKind::config, "scan step must be below the probe side (no overlap)");
  if (jitter < 0) fail(ErrorKind::config, "jitter must be >= 0");
  if (height < n || width < n) fail(ErrorKind::config, "object must be at least probe-sized");
  const int max_row = static_cast<int>(height - n);
  const int max_col = static_cast<int>(width - n);
  const CounterRng rng(seed);
  ScanSet out;
  std::uint64_t j = 0;
  for (int r : raster_axis(max_row, step)) {
    for (int c : raster_axis(max_col, step)) {
      int rr = r, cc = c;
      if (jitter > 0) {
        rr = std::clamp(r + rng.uniform_int(Stream::jitter, 2 * j, -jitter, jitter), 0, max_row);
        cc = std::clamp(c + rng.uniform_int(Stream::jitter, 2 * j + 1, -jitter, jitter), 0, max_col);
      }
      out.push_back({rr, cc});
      ++j;
    }
  }
  return out;
}

/// d_j = photons * |G psi|_j^2, optionally Poisson-sampled per pixel.
template <class R>
DiffractionSet simulate_data(const ObjectField<R>& obj, const Probe<R>& probe, const ScanSet& scan, double photons,
                             bool poisson, std::uint64_t seed) {
  if (!(photons > 0.0) || !std::isfinite(photons)) fail(ErrorKind::validation, "photons must be > 0");
  validate_scan(scan, obj.rows(), obj.cols(), probe.side());
  const FarField<R> far = forward_g(obj, probe, scan);
  DiffractionSet d(far.count(), far.side());
  const CounterRng rng(seed);
  auto out = d.values();
  auto in = far.values();
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double re = in[k].real();
    const double im = in[k].imag();
    const double mean = photons * (re * re + im * im);
    out[k] = static_cast<float>(poisson ? rng.poisson(k, mean) : mean);
  }
  return d;
}

/// Everything a synthetic experiment produces.
struct Experiment {
  ObjectField<float> psi_true;
  Probe<float> probe;
  ScanSet scan;
  DiffractionSet d;
};

inline Experiment simulate(const SimConfig& cfg) {
  cfg.validate();
  const Grid<double> img = cfg.phantom == Phantom::siemens ? siemens_star(cfg.height, cfg.width, cfg.spokes)
                                                           : disks(cfg.height, cfg.width, cfg.seed);
  Experiment ex;
  ex.psi_true = make_object<float>(img);
  ex.probe = make_probe<float>(cfg.probe_side, cfg.sigma_frac, cfg.chirp);
  ex.scan = make_scan(cfg.height, cfg.width, cfg.probe_side, cfg.step, cfg.jitter, cfg.seed);
  ex.d = simulate_data(ex.psi_true, ex.probe, ex.scan, cfg.photons, cfg.poisson, cfg.seed);
  return ex;
}

inline const char* to_string(Phantom p) { return p == Phantom::siemens ? "siemens" : "disks"; }

}  // namespace pty::sim
