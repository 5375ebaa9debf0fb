#pragma once

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pty/engine.hpp"
#include "pty/metrics.hpp"
#include "pty/ptyio.hpp"
#include "pty/simkit.hpp"
#include "pty/trace_csv.hpp"

namespace pty::cli {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kWorkersEnv = "PTYGER_WORKERS";

enum Exit : int { ok = 0, bad_args = 2, data_error = 3, numerical_failure = 4 };

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return bad_args;
    case ErrorKind::io:
    case ErrorKind::corruption:
    case ErrorKind::unsupported_version:
    case ErrorKind::validation:
    case ErrorKind::bounds:
    case ErrorKind::alignment: return data_error;
    case ErrorKind::numerical:
    case ErrorKind::protocol:
    case ErrorKind::deadlock:
    case ErrorKind::aborted: return numerical_failure;
  }
  return numerical_failure;
}

namespace detail {

using json = nlohmann::json;

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

inline json partition_json(const StripPartition& part, const std::vector<std::vector<std::size_t>>& local,
                           const std::vector<std::size_t>& owned) {
  json workers = json::array();
  for (std::size_t i = 0; i < part.interior.size(); ++i) {
    workers.push_back({{"interior", {part.interior[i].begin, part.interior[i].end}},
                       {"extended", {part.extended[i].begin, part.extended[i].end}},
                       {"local_patterns", local[i].size()},
                       {"owned_patterns", owned[i]}});
  }
  return {{"workers", part.interior.size()}, {"halo", part.halo}, {"strips", workers}};
}

inline json partition_summary(const StripPartition& part, const ScanSet& scan) {
  const auto local = local_pattern_set(part, scan, part.probe_side);
  std::vector<std::size_t> owned(part.interior.size(), 0);
  for (const auto& p : scan) ++owned[static_cast<std::size_t>(owner_of(part, p, part.probe_side))];
  return partition_json(part, local, owned);
}

inline json solver_json(const SolverConfig& s) {
  return {{"solver", s.kind == SolverKind::cg ? "cg" : "gd"},
          {"gamma0", s.gamma0},
          {"tau", s.tau},
          {"t", s.t},
          {"max_shrinks", s.max_shrinks},
          {"gd_gamma", s.gd_gamma}};
}

inline json run_manifest(const std::vector<std::string>& argv, json config, json seeds, json partition,
                         const std::string& started) {
  std::string line;
  for (const auto& a : argv) line += (line.empty() ? "" : " ") + a;
  return {{"command_line", line},      {"config", std::move(config)}, {"seeds", std::move(seeds)},
          {"partition", std::move(partition)}, {"code_version", kVersion}, {"started", started},
          {"finished", utc_now()}};
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
}

inline int workers_from_env(int fallback) {
  const char* v = std::getenv(kWorkersEnv);
  if (v == nullptr || *v == '\0') return fallback;
  try {
    std::size_t used = 0;
    const int w = std::stoi(v, &used);
    if (used != std::string(v).size()) throw std::invalid_argument(v);
    return w;
  } catch (const std::exception&) {
    fail(ErrorKind::config, std::string(kWorkersEnv) + " is not an integer: '" + v + "'");
  }
}

inline std::vector<int> parse_worker_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int w = std::stoi(item, &used);
      if (used != item.size() || w < 1) throw std::invalid_argument(item);
      out.push_back(w);
    } catch (const std::exception&) {
      fail(ErrorKind::config, "bad worker count '" + item + "' in --workers");
    }
  }
  if (out.empty()) fail(ErrorKind::config, "--workers list is empty");
  return out;
}

}  // namespace detail

struct SimulateArgs {
  std::string phantom = "siemens";
  std::vector<std::size_t> object_size{256, 256};
  std::size_t probe_size = 64;
  int step = 16;
  int jitter = 0;
  int spokes = 16;
  double photons = 1.0;
  bool poisson = false;
  std::uint64_t seed = 1;
  std::string out;
};

struct ReconstructArgs {
  std::string data;
  std::optional<int> workers;  // unset: env or 1
  int iters = 128;
  std::string solver = "cg";
  std::optional<double> gd_gamma;
  double gamma0 = 1.0;
  double tau = 0.5;
  double t = 0.0;
  int max_shrinks = 32;
  std::uint64_t seed = 0;
  bool consistency_check = false;
  std::string out;
  std::string trace;
};

struct EvaluateArgs {
  std::string rec;
  std::string ref;
  std::string channel = "phase";
  std::string out;
};

struct BenchArgs {
  std::string data;
  std::string workers = "1";
  int iters = 8;
  int repeat = 1;
  std::uint64_t seed = 0;
  std::string out;
};

inline int cmd_simulate(const SimulateArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  const std::string started = detail::utc_now();
  sim::SimConfig cfg;
  if (a.phantom == "siemens") {
    cfg.phantom = sim::Phantom::siemens;
  } else if (a.phantom == "disks") {
    cfg.phantom = sim::Phantom::disks;
  } else {
    fail(ErrorKind::config, "unknown phantom '" + a.phantom + "'");
  }
  cfg.height = a.object_size.at(0);
  cfg.width = a.object_size.at(1);
  cfg.probe_side = a.probe_size;
  cfg.step = a.step;
  cfg.jitter = a.jitter;
  cfg.spokes = a.spokes;
  cfg.photons = a.photons;
  cfg.poisson = a.poisson;
  cfg.seed = a.seed;
  cfg.validate();

  const sim::Experiment ex = sim::simulate(cfg);
  Dataset<float> ds{ex.probe, ex.scan, ex.d, cfg.height, cfg.width, ex.psi_true};
  nlohmann::json sim_meta = {{"phantom", sim::to_string(cfg.phantom)},
                             {"object_size", {cfg.height, cfg.width}},
                             {"probe_size", cfg.probe_side},
                             {"spokes", cfg.spokes},
                             {"step", cfg.step},
                             {"jitter", cfg.jitter},
                             {"photons", cfg.photons},
                             {"poisson", cfg.poisson},
                             {"seed", cfg.seed},
                             {"probe_sigma_frac", cfg.sigma_frac},
                             {"probe_chirp", cfg.chirp},
                             {"scan_rounding", "nearest, half-up, top-left corners"}};
  io::write_bundle(io::dataset_bundle(ds, {{"sim", sim_meta}}), a.out);
  detail::write_json(std::filesystem::path(a.out) / "run.json",
                     detail::run_manifest(argv, sim_meta, {{"sim", cfg.seed}}, nullptr, started));
  const double overlap = 1.0 - static_cast<double>(cfg.step) / static_cast<double>(cfg.probe_side);
  out << "n=" << ex.scan.size() << " overlap=" << overlap << '\n';
  return ok;
}

inline int cmd_reconstruct(ReconstructArgs a, const std::vector<std::string>& argv, std::ostream& out) {
  const std::string started = detail::utc_now();
  EngineConfig ec;
  ec.workers = a.workers ? *a.workers : detail::workers_from_env(1);
  if (ec.workers < 1) fail(ErrorKind::config, "--workers must be >= 1");
  if (a.iters < 1) fail(ErrorKind::config, "--iters must be >= 1");
  if (a.solver == "cg") {
    ec.solver.kind = SolverKind::cg;
  } else if (a.solver == "gd") {
    ec.solver.kind = SolverKind::gd;
    if (!a.gd_gamma) fail(ErrorKind::config, "--solver gd requires --gd-gamma (a constant step length > 0)");
    ec.solver.gd_gamma = *a.gd_gamma;
  } else {
    fail(ErrorKind::config, "unknown solver '" + a.solver + "'");
  }
  ec.solver.gamma0 = a.gamma0;
  ec.solver.tau = a.tau;
  ec.solver.t = a.t;
  ec.solver.max_shrinks = a.max_shrinks;
  ec.consistency_check = a.consistency_check;
  ec.validate();

  const Dataset<float> ds = io::load_dataset(io::read_bundle(a.data));
  const StripPartition part = make_strips(ds.height, ds.width, ds.probe.side(), ec.workers);

  const std::string trace_path = a.trace.empty() ? a.out + ".trace.csv" : a.trace;
  std::ofstream trace(trace_path);
  if (!trace) fail(ErrorKind::io, "cannot open trace file " + trace_path);
  write_trace_header(trace, true);
  trace.flush();
  const IterationObserver<float> on_iter = [&](const IterationTrace& tr, const ObjectField<float>&) {
    write_trace_row(trace, tr, true);
    trace.flush();
  };
  ParallelResult<float> res = run_parallel(ds, ec, a.iters, on_iter);

  nlohmann::json config = detail::solver_json(ec.solver);
  config["workers"] = ec.workers;
  config["master_id"] = ec.master_id;
  config["iters"] = a.iters;
  config["consistency_check"] = ec.consistency_check;
  config["data"] = a.data;
  config["init"] = "flat 1+0i";
  const auto crop = metrics::scan_crop(ds.scan, ds.probe.side());
  nlohmann::json partition = detail::partition_summary(part, ds.scan);

  io::Bundle result;
  result.put_field("psi", res.psi);
  result.meta = {{"reconstruction", config},
                 {"partition", partition},
                 {"crop", {crop.row0, crop.row1, crop.col0, crop.col1}},
                 {"object", {{"height", ds.height}, {"width", ds.width}}}};
  io::write_bundle(result, a.out);
  detail::write_json(std::filesystem::path(a.out) / "run.json",
                     detail::run_manifest(argv, config, {{"seed", a.seed}}, partition, started));
  const auto& last = res.traces.back();
  out << "iterations=" << res.traces.size() << " objective=" << exact(last.objective)
      << " step_norm=" << exact(last.step_norm) << " workers=" << ec.workers << '\n';
  return ok;
}

inline int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  metrics::Channel ch;
  if (a.channel == "phase") {
    ch = metrics::Channel::phase;
  } else if (a.channel == "amplitude") {
    ch = metrics::Channel::amplitude;
  } else {
    fail(ErrorKind::config, "unknown channel '" + a.channel + "'");
  }
  const io::Bundle rec_b = io::read_bundle(a.rec);
  const io::Bundle ref_b = io::read_bundle(a.ref);
  const ObjectField<float> rec = rec_b.get_field(rec_b.has("psi") ? "psi" : "psi_ref");
  const ObjectField<float> ref = ref_b.get_field(ref_b.has("psi_ref") ? "psi_ref" : "psi");
  if (!rec.same_shape(ref)) {
    fail(ErrorKind::validation, "shape mismatch: reconstruction " + std::to_string(rec.rows()) + "x" +
                                    std::to_string(rec.cols()) + " vs reference " + std::to_string(ref.rows()) + "x" +
                                    std::to_string(ref.cols()));
  }
  metrics::Crop crop = metrics::full_crop(ref.rows(), ref.cols());
  if (ref_b.has("scan") && ref_b.has("probe")) {
    crop = metrics::scan_crop(io::load_dataset(ref_b).scan, ref_b.at("probe").shape[0]);
  } else if (rec_b.meta.contains("crop")) {
    const auto c = rec_b.meta["crop"].get<std::vector<std::size_t>>();
    crop = {c.at(0), c.at(1), c.at(2), c.at(3)};
  }
  const metrics::MetricReport rep = metrics::evaluate(rec, ref, crop, ch);
  std::ostringstream row;
  row << "ssim,psnr_db,channel,crop,phase_shift\n"
      << exact(rep.ssim) << ',' << metrics::format_db(rep.psnr_db) << ',' << metrics::to_string(rep.channel) << ','
      << rep.crop.str() << ',' << exact(rep.phase_shift) << '\n';
  out << row.str();
  if (!a.out.empty()) {
    std::ofstream f(a.out);
    f << row.str();
    if (!f) fail(ErrorKind::io, "cannot write " + a.out);
  }
  return ok;
}

/// One row of the bench report.
struct BenchRow {
  int workers = 1;
  int repeat = 0;
  std::uint64_t seed = 0;
  EngineTiming timing;
};

/// setup + compute + comm_wait within `tol` (relative) of total.
inline bool reconciles(const EngineTiming& t, double tol = 0.05) {
  const double parts = t.setup_s + t.compute_s + t.comm_wait_s;
  return std::abs(parts - t.total_s) <= tol * t.total_s;
}

inline std::string bench_header() {
  return "workers,repeat,seed,total_s,setup_s,compute_s,comm_wait_s,grad_ms,dir_ms,ls_ms,update_ms,reconciled";
}

inline std::string bench_line(const BenchRow& r) {
  std::ostringstream os;
  os << r.workers << ',' << r.repeat << ',' << r.seed << ',' << exact(r.timing.total_s) << ','
     << exact(r.timing.setup_s) << ',' << exact(r.timing.compute_s) << ',' << exact(r.timing.comm_wait_s);
  for (double ms : r.timing.stage_ms_mean) os << ',' << exact(ms);
  os << ',' << (reconciles(r.timing) ? 1 : 0);
  return os.str();
}

inline int cmd_bench(const BenchArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  const std::string started = detail::utc_now();
  const std::vector<int> workers = detail::parse_worker_list(a.workers);
  if (a.iters < 1) fail(ErrorKind::config, "--iters must be >= 1");
  if (a.repeat < 1) fail(ErrorKind::config, "--repeat must be >= 1");
  const Dataset<float> ds = io::load_dataset(io::read_bundle(a.data));
  for (int w : workers) make_strips(ds.height, ds.width, ds.probe.side(), w);

  std::ostringstream report;
  report << bench_header() << '\n';
  nlohmann::json seeds = nlohmann::json::array();
  nlohmann::json partitions = nlohmann::json::object();
  for (int w : workers) {
    EngineConfig ec;
    ec.workers = w;
    for (int r = 0; r < a.repeat; ++r) {
      const std::uint64_t seed = a.seed + static_cast<std::uint64_t>(r);
      const ParallelResult<float> res = run_parallel(ds, ec, a.iters);
      BenchRow row{w, r, seed, res.timing};
      report << bench_line(row) << '\n';
      seeds.push_back({{"workers", w}, {"repeat", r}, {"seed", seed}});
      partitions[std::to_string(w)] = detail::partition_summary(res.partition, ds.scan);
    }
  }
  out << report.str();
  if (!a.out.empty()) {
    std::ofstream f(a.out);
    f << report.str();
    if (!f) fail(ErrorKind::io, "cannot write " + a.out);
    nlohmann::json config = detail::solver_json(SolverConfig{});
    config["iters"] = a.iters;
    config["repeat"] = a.repeat;
    config["workers"] = workers;
    config["data"] = a.data;
    detail::write_json(a.out + ".run.json", detail::run_manifest(argv, config, seeds, partitions, started));
  }
  return ok;
}

/// Entry point shared by the executable and the tests.
inline int run(const std::vector<std::string>& argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Parallel ptychographic reconstruction (ML + Dai-Yuan CG)", "ptyrecon"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  SimulateArgs sa;
  auto* sim_cmd = app.add_subcommand("simulate", "generate a synthetic dataset bundle");
  sim_cmd->add_option("--phantom", sa.phantom, "siemens | disks")->capture_default_str();
  sim_cmd->add_option("--object-size", sa.object_size, "object height and width")->expected(2)->capture_default_str();
  sim_cmd->add_option("--probe-size", sa.probe_size, "probe side N (even)")->capture_default_str();
  sim_cmd->add_option("--step", sa.step, "raster step in pixels (< N)")->capture_default_str();
  sim_cmd->add_option("--jitter", sa.jitter, "uniform integer jitter in pixels")->capture_default_str();
  sim_cmd->add_option("--spokes", sa.spokes, "siemens star spoke count")->capture_default_str();
  sim_cmd->add_option("--photons", sa.photons, "intensity scale")->capture_default_str();
  sim_cmd->add_flag("--poisson", sa.poisson, "Poisson-sample the intensities");
  sim_cmd->add_option("--seed", sa.seed, "random seed")->capture_default_str();
  sim_cmd->add_option("--out", sa.out, "output bundle directory")->required();

  ReconstructArgs ra;
  auto* rec_cmd = app.add_subcommand("reconstruct", "reconstruct an object from a dataset bundle");
  rec_cmd->add_option("--data", ra.data, "dataset bundle directory")->required();
  rec_cmd->add_option("--workers", ra.workers, std::string("worker count (default: $") + kWorkersEnv + " or 1)");
  rec_cmd->add_option("--iters", ra.iters, "iterations")->capture_default_str();
  rec_cmd->add_option("--solver", ra.solver, "cg | gd")->capture_default_str();
  rec_cmd->add_option("--gd-gamma", ra.gd_gamma, "constant step length for gd");
  rec_cmd->add_option("--gamma0", ra.gamma0, "initial line-search step")->capture_default_str();
  rec_cmd->add_option("--tau", ra.tau, "line-search shrink factor")->capture_default_str();
  rec_cmd->add_option("--t", ra.t, "line-search termination parameter")->capture_default_str();
  rec_cmd->add_option("--max-shrinks", ra.max_shrinks, "line-search trial limit")->capture_default_str();
  rec_cmd->add_option("--seed", ra.seed, "recorded in the run manifest")->capture_default_str();
  rec_cmd->add_flag("--consistency-check", ra.consistency_check, "verify halo rows after every border exchange");
  rec_cmd->add_option("--out", ra.out, "result bundle directory")->required();
  rec_cmd->add_option("--trace", ra.trace, "trace CSV path (default: <out>.trace.csv)");

  EvaluateArgs ea;
  auto* eval_cmd = app.add_subcommand("evaluate", "compare a reconstruction with a reference");
  eval_cmd->add_option("--rec", ea.rec, "reconstruction bundle")->required();
  eval_cmd->add_option("--ref", ea.ref, "reference bundle")->required();
  eval_cmd->add_option("--channel", ea.channel, "phase | amplitude")->capture_default_str();
  eval_cmd->add_option("--out", ea.out, "report CSV path");

  BenchArgs ba;
  auto* bench_cmd = app.add_subcommand("bench", "time reconstructions per worker count");
  bench_cmd->add_option("--data", ba.data, "dataset bundle directory")->required();
  bench_cmd->add_option("--workers", ba.workers, "comma-separated worker counts")->capture_default_str();
  bench_cmd->add_option("--iters", ba.iters, "iterations per run")->capture_default_str();
  bench_cmd->add_option("--repeat", ba.repeat, "runs per worker count")->capture_default_str();
  bench_cmd->add_option("--seed", ba.seed, "base seed, incremented per repeat")->capture_default_str();
  bench_cmd->add_option("--out", ba.out, "report CSV path");

  std::vector<char*> cargv;
  std::vector<std::string> storage = argv;
  if (storage.empty()) storage.push_back("ptyrecon");
  for (auto& s : storage) cargv.push_back(s.data());
  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return ok;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return bad_args;
  }

  try {
    if (sim_cmd->parsed()) return cmd_simulate(sa, storage, out);
    if (rec_cmd->parsed()) return cmd_reconstruct(ra, storage, out);
    if (eval_cmd->parsed()) return cmd_evaluate(ea, out);
    if (bench_cmd->parsed()) return cmd_bench(ba, storage, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return numerical_failure;
  }
  return bad_args;
}

}  // namespace pty::cli
