// Acceptance suite: prints one PASS/FAIL line per criterion.
// Exit status is 0 when every criterion passes, or when every failure is listed via --known-fail.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <set>
#include <sstream>
#include <string>

#include "test_util.hpp"
#include "CLI11.hpp"
#include "pty/cli.hpp"
#include "pty/metrics.hpp"
#include "pty/ptyio.hpp"

using namespace pty;
namespace fs = std::filesystem;
using pty::testing::random_field;
using pty::testing::random_probe;
using pty::testing::random_scan;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

/// 256x256 siemens star, 64x64 probe, step 16, jitter 2, noiseless.
const Dataset<float>& desk_fixture() {
  static const Dataset<float> ds = pty::testing::star_dataset(256, 64, 16, 2, 1);
  return ds;
}

Outcome adjoint_identity() {
  struct Shape {
    std::size_t h, w, n, count;
  };
  const Shape shapes[] = {{16, 16, 4, 3}, {40, 24, 8, 6}, {64, 64, 16, 9}};
  double worst = 0.0;
  int instances = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Shape& s = shapes[seed % 3];
    const auto x = random_field<float>(s.h, s.w, 100 + seed);
    const auto probe = random_probe<float>(s.n, 100 + seed);
    const auto scan = random_scan(s.count, s.h, s.w, s.n, 100 + seed);
    const auto y = pty::testing::random_far<float>(s.count, s.n, 100 + seed, 9);
    const auto gx = forward_g(x, probe, scan);
    const auto ghy = adjoint_gh(y, probe, scan, s.h, s.w);
    const double err = std::abs(inner(gx, y) - inner(x, ghy)) / (norm2(x) * norm2(y));
    worst = std::max(worst, err);
    ++instances;
  }
  return {worst <= 1e-5, fmt("%d instances, worst relative mismatch %.3g (limit 1e-5)", instances, worst)};
}

Outcome gradient_fd() {
  const std::size_t h = 32, n = 8;
  double worst = 0.0;
  for (std::uint64_t inst = 0; inst < 3; ++inst) {
    const std::uint64_t seed = 17 + inst;
    const auto psi = random_field<double>(h, h, seed);
    const auto probe = random_probe<double>(n, seed);
    const auto scan = random_scan(9, h, h, n, seed);
    auto other = psi;
    for (auto& v : other) v *= std::complex<double>(0.9, 0.2);
    const auto far = forward_g(other, probe, scan);
    DiffractionSet d(far.count(), n);
    for (std::size_t k = 0; k < d.values().size(); ++k) d.values()[k] = static_cast<float>(std::norm(far.values()[k]));
    const auto g = ml_gradient(psi, probe, scan, d);
    const double eps = 1e-4;
    for (std::uint64_t k = 0; k < 10; ++k) {
      const auto delta = random_field<double>(h, h, 1000 * seed + k);
      auto plus = psi, minus = psi;
      for (std::size_t i = 0; i < psi.size(); ++i) {
        plus.values()[i] += eps * delta.values()[i];
        minus.values()[i] -= eps * delta.values()[i];
      }
      const double fd = (ml_objective_at(plus, probe, scan, d) - ml_objective_at(minus, probe, scan, d)) / (2 * eps);
      const double analytic = 2.0 * inner(g, delta).real();
      worst = std::max(worst, std::abs(fd - analytic) / std::abs(analytic));
    }
  }
  return {worst <= 1e-4, fmt("30 directions, worst relative error %.3g (limit 1e-4)", worst)};
}

Outcome stationarity() {
  const auto ds = pty::testing::small_fixture();
  const auto g = ml_gradient(*ds.psi_ref, ds.probe, ds.scan, ds.d);
  const double r = norm2(g) / norm2(*ds.psi_ref);
  return {r <= 1e-5, fmt("|grad F(psi_true)| / |psi_true| = %.3g (limit 1e-5)", r)};
}

Outcome descent() {
  const auto& ds = desk_fixture();
  SolverConfig cfg;
  cfg.t = 0.0;
  const auto run = run_reference(ds, cfg, 128);
  int violations = 0;
  double prev = initial_state(ds, cfg).f_cached;
  for (const auto& t : run.traces) {
    if (t.objective > prev) ++violations;
    prev = t.objective;
  }
  return {violations == 0, fmt("128 iterations, %d increases, final F %.10g", violations, run.traces.back().objective)};
}

Outcome parallel_equivalence() {
  const auto ds = pty::testing::medium_fixture();
  std::vector<std::vector<ObjectField<float>>> psis(3);
  std::vector<std::vector<IterationTrace>> traces(3);
  const int counts[] = {1, 2, 4};
  for (int i = 0; i < 3; ++i) {
    EngineConfig ec;
    ec.workers = counts[i];
    ec.consistency_check = true;
    auto res = run_parallel(ds, ec, 20, [&](const IterationTrace&, const ObjectField<float>& psi) {
      psis[static_cast<std::size_t>(i)].push_back(psi);
    });
    traces[static_cast<std::size_t>(i)] = std::move(res.traces);
  }
  double worst = 0.0;
  int mismatched = 0;
  for (int i = 1; i < 3; ++i) {
    for (std::size_t m = 0; m < 20; ++m) {
      const auto& a = traces[0][m];
      const auto& b = traces[static_cast<std::size_t>(i)][m];
      if (a.shrinks != b.shrinks || std::bit_cast<std::uint64_t>(a.gamma) != std::bit_cast<std::uint64_t>(b.gamma)) {
        ++mismatched;
      }
      worst = std::max(worst, pty::testing::rel_l2(psis[static_cast<std::size_t>(i)][m], psis[0][m]));
    }
  }
  return {mismatched == 0 && worst <= 1e-5,
          fmt("P in {1,2,4}, 20 iterations: %d shrink/gamma mismatches, worst psi rel L2 %.3g (limit 1e-5)", mismatched,
              worst)};
}

Outcome desk_convergence() {
  const auto& ds = desk_fixture();
  const auto crop = metrics::scan_crop(ds.scan, ds.probe.side());
  std::string detail;
  bool any = false;
  double lo = 1.0, hi = 0.0;
  for (int p : {1, 2, 4}) {
    EngineConfig ec;
    ec.workers = p;
    const auto res = run_parallel(ds, ec, 128);
    const auto rep = metrics::evaluate(res.psi, *ds.psi_ref, crop, metrics::Channel::phase);
    any = any || (rep.ssim >= 0.9 && rep.psnr_db >= 40.0);
    lo = std::min(lo, rep.ssim);
    hi = std::max(hi, rep.ssim);
    detail += fmt("P=%d SSIM %.4f PSNR %.2f dB; ", p, rep.ssim, rep.psnr_db);
  }
  detail += fmt("SSIM spread %.2g (limit 1e-3); targets SSIM >= 0.9, PSNR >= 40 dB", hi - lo);
  return {any && hi - lo <= 1e-3, detail};
}

double tune_gd_step(const Dataset<float>& ds, int iters) {
  for (int k = 0; k < 30; ++k) {
    SolverConfig cfg;
    cfg.kind = SolverKind::gd;
    cfg.gd_gamma = std::ldexp(1.0, -k);
    SolverState<float> s = initial_state(ds, cfg);
    double prev = s.f_cached;
    bool ok = true;
    for (int m = 0; m < iters && ok; ++m) {
      try {
        const auto tr = gd_iterate(s, ds.probe, ds.scan, ds.d);
        ok = std::isfinite(tr.objective) && tr.objective < prev;
        prev = tr.objective;
      } catch (const Error&) {
        ok = false;
      }
    }
    if (ok) return cfg.gd_gamma;
  }
  return 0.0;
}

Outcome cg_beats_gd() {
  const auto& ds = desk_fixture();
  const double gamma = tune_gd_step(ds, 32);
  SolverConfig gd;
  gd.kind = SolverKind::gd;
  gd.gd_gamma = gamma;
  const double f_gd = gamma > 0.0 ? run_reference(ds, gd, 32).traces.back().objective : initial_state(ds, gd).f_cached;
  const double f_cg = run_reference(ds, SolverConfig{}, 32).traces.back().objective;
  return {f_cg < f_gd, fmt("tuned GD step %.3g; F_CG(32) = %.10g, F_GD(32) = %.10g", gamma, f_cg, f_gd)};
}

std::vector<char> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

bool same_tree(const fs::path& a, const fs::path& b) {
  std::set<std::string> na, nb;
  for (const auto& e : fs::directory_iterator(a)) na.insert(e.path().filename().string());
  for (const auto& e : fs::directory_iterator(b)) nb.insert(e.path().filename().string());
  if (na != nb) return false;
  for (const auto& n : na) {
    if (file_bytes(a / n) != file_bytes(b / n)) return false;
  }
  return true;
}

Outcome determinism() {
  const auto ds = pty::testing::small_fixture();
  const auto dir = pty::testing::scratch_dir("acceptance-determinism");
  std::vector<std::vector<IterationTrace>> traces;
  for (int r = 0; r < 2; ++r) {
    EngineConfig ec;
    ec.workers = 2;
    auto res = run_parallel(ds, ec, 8);
    io::Bundle b;
    b.put_field("psi", res.psi);
    io::write_bundle(b, dir / ("run" + std::to_string(r)));
    traces.push_back(std::move(res.traces));
  }
  bool same = traces[0].size() == traces[1].size();
  for (std::size_t m = 0; same && m < traces[0].size(); ++m) same = same_numbers(traces[0][m], traces[1][m]);
  const bool bundles = same_tree(dir / "run0", dir / "run1");
  return {same && bundles, fmt("P=2, 8 iterations: traces %s, bundles %s", same ? "identical" : "differ",
                               bundles ? "byte-identical" : "differ")};
}

Outcome format_contract() {
  const auto dir = pty::testing::scratch_dir("acceptance-format");
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto f = random_field<float>(3 + seed % 5, 2 + seed % 7, seed);
    io::Bundle b;
    b.put_field("psi", f);
    std::vector<float> d(seed % 11 + 1);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<float>(f.values()[i % f.size()].real());
    b.put_f32("v", {d.size()}, d);
    b.meta = {{"seed", seed}};
    io::write_bundle(b, dir / "b");
    const auto r = io::read_bundle(dir / "b");
    const auto g = r.get_field("psi");
    const bool eq = std::equal(f.begin(), f.end(), g.begin(), [](auto x, auto y) {
      return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
    });
    if (eq && r.get_f32("v") == d && r.meta == b.meta) ++ok;
  }
  // Hand-built bundle: one complex64 element (1, -2) and one float32 3.5.
  const fs::path hand = dir / "hand";
  fs::create_directories(hand);
  {
    std::ofstream m(hand / "manifest.json");
    m << R"({"version": 1, "meta": {}, "arrays": {)"
      << R"("z": {"dtype": "c64", "shape": [1], "file": "z.bin"},)"
      << R"("x": {"dtype": "f32", "shape": [1], "file": "x.bin"}}})";
    const unsigned char z[] = {0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xc0};
    const unsigned char x[] = {0x00, 0x00, 0x60, 0x40};
    std::ofstream(hand / "z.bin", std::ios::binary).write(reinterpret_cast<const char*>(z), sizeof z);
    std::ofstream(hand / "x.bin", std::ios::binary).write(reinterpret_cast<const char*>(x), sizeof x);
  }
  bool hand_ok = false;
  try {
    const auto r = io::read_bundle(hand);
    hand_ok = r.get_c64("z") == std::vector<std::complex<float>>{{1.0f, -2.0f}} && r.get_f32("x") == std::vector<float>{3.5f};
  } catch (const Error&) {
  }
  return {ok == 50 && hand_ok, fmt("%d/50 round trips bitwise, hand-built file %s", ok, hand_ok ? "decoded" : "rejected")};
}

Outcome bench_consistency() {
  const auto dir = pty::testing::scratch_dir("acceptance-bench");
  io::write_bundle(io::dataset_bundle(pty::testing::small_fixture()), dir / "ds");
  std::ostringstream out, err;
  const std::string csv = (dir / "bench.csv").string();
  const int code = cli::run({"ptyrecon", "bench", "--data", (dir / "ds").string(), "--workers", "1,2,4", "--iters", "4",
                             "--repeat", "2", "--out", csv},
                            out, err);
  if (code != 0) return {false, "bench exited with " + std::to_string(code) + ": " + err.str()};
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  const auto columns = [](const std::string& s) { return 1 + std::count(s.begin(), s.end(), ','); };
  int rows = 0, reconciled = 0, malformed = 0;
  double worst = 0.0;
  for (std::string line; std::getline(in, line);) {
    ++rows;
    if (columns(line) != columns(header)) {
      ++malformed;
      continue;
    }
    std::vector<double> v;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) v.push_back(std::stod(c));
    const double gap = std::abs(v[4] + v[5] + v[6] - v[3]) / v[3];
    worst = std::max(worst, gap);
    if (gap <= 0.05) ++reconciled;
    if (v[0] == 1.0 && v[6] != 0.0) ++malformed;
  }
  const bool manifest = fs::exists(csv + ".run.json");
  return {rows == 6 && reconciled == 6 && malformed == 0 && manifest,
          fmt("%d rows, %d reconciled, worst gap %.3g (limit 0.05), %d malformed, manifest %s", rows, reconciled, worst,
              malformed, manifest ? "present" : "missing")};
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;
  std::function<Outcome()> check;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::vector<int> known_fail;
  std::vector<int> only;
  app.add_option("--known-fail", known_fail, "criteria whose failure does not affect the exit status");
  app.add_option("--only", only, "run only these criteria");
  CLI11_PARSE(app, argc, argv);

  // Criteria without a stated time limit get a generous one.
  const std::vector<Criterion> criteria = {
      {1, "operator adjoint identity", 5, adjoint_identity},
      {2, "gradient finite difference", 10, gradient_fd},
      {3, "stationarity at the true object", 2, stationarity},
      {4, "monotone descent", 60, descent},
      {5, "parallel equivalence", 120, parallel_equivalence},
      {6, "desk-scale convergence", 600, desk_convergence},
      {7, "CG beats GD", 300, cg_beats_gd},
      {8, "determinism", 600, determinism},
      {9, "bundle format", 600, format_contract},
      {10, "bench report consistency", 600, bench_consistency},
  };

  int unexpected = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = s <= c.limit_s;
    const bool pass = o.pass && in_time;
    const bool known = std::find(known_fail.begin(), known_fail.end(), c.id) != known_fail.end();
    std::printf("%s criterion %d: %s: %s; %.1f s (limit %.0f s)%s\n", pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), s, c.limit_s, !pass && known ? " [known failure]" : "");
    std::fflush(stdout);
    if (!pass && !known) ++unexpected;
  }
  return unexpected == 0 ? 0 : 1;
}
