#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "pty/partition.hpp"
#include "pty/solver.hpp"
#include "pty/transport.hpp"

namespace pty {

struct EngineConfig {
  int workers = 1;
  int master_id = 0;
  SolverConfig solver;
  bool consistency_check = false;
  std::chrono::milliseconds timeout{300000};

  void validate() const {
    if (workers < 1) fail(ErrorKind::config, "worker count must be >= 1");
    if (master_id < 0 || master_id >= workers) fail(ErrorKind::config, "master id must lie in [0, workers)");
    solver.validate();
  }
};

/// Wall-clock accounting of one run, from the master worker's point of view.
/// setup covers partitioning, shard creation, thread start, the initial
/// objective and final assembly; compute + comm_wait cover the iterations.
struct EngineTiming {
  double total_s = 0.0;
  double setup_s = 0.0;
  double compute_s = 0.0;
  double comm_wait_s = 0.0;
  std::array<double, 4> stage_ms_mean{};
};

/// Full-size arrays that only the master keeps.
template <class R>
struct MasterState {
  ObjectField<R> grad;
  std::optional<ObjectField<R>> grad_prev;
  std::optional<ObjectField<R>> dir_prev;
  double dir_norm = 0.0;
  bool restarted = false;
};

template <class R>
struct WorkerContext {
  int id = 0;
  const StripPartition* part = nullptr;
  WorkerShard<R>* shard = nullptr;
  const Probe<R>* probe = nullptr;
  Transport<R>* net = nullptr;
  const EngineConfig* cfg = nullptr;
  MasterState<R>* master = nullptr;  // non-null on the master only
  int iter = 0;
  Stage stage = Stage::grad;
  std::array<double, 4> wait_ms{};

  bool is_master() const noexcept { return master != nullptr; }
  int workers() const noexcept { return part->workers(); }

  StageMessage<R> recv(Tag tag, int ls_trial, int from) {
    const auto t0 = detail::Clock::now();
    auto msg = net->recv(id, tag, iter, ls_trial, from);
    wait_ms[static_cast<std::size_t>(stage)] += detail::ms_since(t0, detail::Clock::now());
    return msg;
  }

  void barrier() {
    if (workers() == 1) return;
    const auto t0 = detail::Clock::now();
    net->barrier(id);
    wait_ms[static_cast<std::size_t>(stage)] += detail::ms_since(t0, detail::Clock::now());
  }
};

namespace detail {

template <class R>
StageMessage<R> rows_message(Tag tag, int iter, int sender, const ObjectField<R>& src, std::size_t src_first,
                             std::size_t global_first, std::size_t count) {
  StageMessage<R> msg;
  msg.tag = tag;
  msg.iter = iter;
  msg.sender = sender;
  msg.first_row = global_first;
  msg.row_count = count;
  msg.rows.assign(src.data() + src_first * src.cols(), src.data() + (src_first + count) * src.cols());
  return msg;
}

template <class R>
void place_rows(ObjectField<R>& dst, std::size_t dst_first, const StageMessage<R>& msg) {
  if (msg.rows.size() != msg.row_count * dst.cols() || dst_first + msg.row_count > dst.rows()) {
    fail(ErrorKind::protocol, std::string(tag_name(msg.tag)) + " payload shape mismatch from worker " +
                                  std::to_string(msg.sender));
  }
  std::copy(msg.rows.begin(), msg.rows.end(), dst.data() + dst_first * dst.cols());
}

}  // namespace detail

/// GRAD stage: gradient of the shard's local patterns over the extended strip.
template <class R>
ObjectField<R> stage_grad(const WorkerShard<R>& shard, const Probe<R>& probe) {
  const auto idx = all_patterns(shard.local_scan.size());
  return ml_gradient_subset<R>(shard.psi_ext, probe, shard.local_scan, shard.local_d, idx);
}

/// Sum of per-worker scalars, added in ascending worker id at the master and
/// broadcast back; every caller returns the same bits.
template <class R>
double allreduce_sum(WorkerContext<R>& ctx, double partial, int ls_trial) {
  const int master = ctx.cfg->master_id;
  if (!ctx.is_master()) {
    StageMessage<R> msg;
    msg.tag = Tag::partial_f;
    msg.iter = ctx.iter;
    msg.ls_trial = ls_trial;
    msg.sender = ctx.id;
    msg.scalar = partial;
    ctx.net->send(master, std::move(msg));
    return ctx.recv(Tag::bcast_f, ls_trial, master).scalar;
  }
  double total = 0.0;
  for (int w = 0; w < ctx.workers(); ++w) {
    const double v = w == ctx.id ? partial : ctx.recv(Tag::partial_f, ls_trial, w).scalar;
    total = w == 0 ? v : total + v;
  }
  for (int w = 0; w < ctx.workers(); ++w) {
    if (w == ctx.id) continue;
    StageMessage<R> msg;
    msg.tag = Tag::bcast_f;
    msg.iter = ctx.iter;
    msg.ls_trial = ls_trial;
    msg.sender = ctx.id;
    msg.scalar = total;
    ctx.net->send(w, std::move(msg));
  }
  return total;
}

/// Objective over the patterns this worker owns, at psi_ext (+ gamma*eta_ext).
template <class R>
double owned_partial_objective(const WorkerShard<R>& shard, const Probe<R>& probe, const ObjectField<R>* eta_ext,
                               double gamma) {
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < shard.owned.size(); ++k) {
    if (shard.owned[k]) idx.push_back(k);
  }
  return ml_objective_subset<R>(shard.psi_ext, eta_ext, static_cast<R>(gamma), probe, shard.local_scan, shard.local_d,
                                idx);
}

/// DIR stage: the master tiles interior gradient rows into the full gradient,
/// forms the search direction and sends each worker its extended rows of it.
template <class R>
ObjectField<R> stage_dir_gather_scatter(WorkerContext<R>& ctx, const ObjectField<R>& local_grad) {
  const StripPartition& part = *ctx.part;
  const WorkerShard<R>& shard = *ctx.shard;
  const int master = ctx.cfg->master_id;
  const std::size_t off = shard.interior_offset();
  if (!ctx.is_master()) {
    ctx.net->send(master, detail::rows_message(Tag::gather_grad, ctx.iter, ctx.id, local_grad, off, shard.interior.begin,
                                               shard.interior.size()));
    StageMessage<R> msg = ctx.recv(Tag::scatter_dir, 0, master);
    ObjectField<R> eta(shard.extended.size(), part.width);
    detail::place_rows(eta, 0, msg);
    return eta;
  }

  MasterState<R>& ms = *ctx.master;
  ms.grad = ObjectField<R>(part.height, part.width);
  for (int w = 0; w < ctx.workers(); ++w) {
    const RowRange in = part.interior[static_cast<std::size_t>(w)];
    if (w == ctx.id) {
      std::copy(local_grad.data() + off * part.width, local_grad.data() + (off + in.size()) * part.width,
                ms.grad.data() + in.begin * part.width);
    } else {
      StageMessage<R> msg = ctx.recv(Tag::gather_grad, 0, w);
      if (msg.first_row != in.begin || msg.row_count != in.size()) {
        fail(ErrorKind::protocol, "GATHER_GRAD rows from worker " + std::to_string(w) + " do not match its interior");
      }
      detail::place_rows(ms.grad, in.begin, msg);
    }
  }
  Direction<R> dir = ctx.cfg->solver.kind == SolverKind::cg
                         ? dai_yuan_direction(ms.grad, ms.grad_prev ? &*ms.grad_prev : nullptr,
                                              ms.dir_prev ? &*ms.dir_prev : nullptr)
                         : dai_yuan_direction<R>(ms.grad, nullptr, nullptr);
  ms.restarted = dir.restarted;
  ms.dir_norm = norm2(dir.dir);
  for (int w = 0; w < ctx.workers(); ++w) {
    if (w == ctx.id) continue;
    const RowRange ext = part.extended[static_cast<std::size_t>(w)];
    ctx.net->send(w, detail::rows_message(Tag::scatter_dir, ctx.iter, ctx.id, dir.dir, ext.begin, ext.begin, ext.size()));
  }
  ObjectField<R> eta = dir.dir.row_range(shard.extended.begin, shard.extended.end);
  ms.grad_prev = std::move(ms.grad);
  ms.grad = ObjectField<R>();
  ms.dir_prev = std::move(dir.dir);
  return eta;
}

/// LS stage: every trial objective is the all-reduced sum of owned partials,
/// so all workers take the same accept/shrink decisions.
template <class R>
LineSearchResult stage_ls_allreduce(WorkerContext<R>& ctx, const ObjectField<R>& eta_ext, double f0) {
  const SolverConfig& sc = ctx.cfg->solver;
  int trial = 0;
  auto eval = [&](double gamma) {
    const double partial = owned_partial_objective(*ctx.shard, *ctx.probe, &eta_ext, gamma);
    return allreduce_sum(ctx, partial, trial++);
  };
  if (sc.kind == SolverKind::gd) {
    const double f = eval(sc.gd_gamma);
    if (!std::isfinite(f)) fail(ErrorKind::numerical, "non-finite objective");
    return {sc.gd_gamma, 0, 1, f, false};
  }
  return line_search(eval, f0, sc);
}

/// Update stage: step the extended strip, then trade border rows with the
/// neighbours. Received rows overwrite the halo; with consistency_check they
/// must already match bit for bit.
template <class R>
void stage_update_exchange(WorkerContext<R>& ctx, double gamma, const ObjectField<R>& eta_ext) {
  WorkerShard<R>& shard = *ctx.shard;
  const StripPartition& part = *ctx.part;
  detail::apply_step(shard.psi_ext, gamma, eta_ext);

  std::vector<int> neighbours;
  if (ctx.id > 0) neighbours.push_back(ctx.id - 1);
  if (ctx.id + 1 < ctx.workers()) neighbours.push_back(ctx.id + 1);

  for (int w : neighbours) {
    const RowRange their = part.extended[static_cast<std::size_t>(w)];
    const std::size_t first = std::max(shard.interior.begin, their.begin);
    const std::size_t last = std::min(shard.interior.end, their.end);
    if (first >= last) continue;
    ctx.net->send(w, detail::rows_message(Tag::border, ctx.iter, ctx.id, shard.psi_ext, first - shard.extended.begin,
                                          first, last - first));
  }
  for (int w : neighbours) {
    const RowRange their = part.interior[static_cast<std::size_t>(w)];
    const std::size_t first = std::max(shard.extended.begin, their.begin);
    const std::size_t last = std::min(shard.extended.end, their.end);
    if (first >= last) continue;
    StageMessage<R> msg = ctx.recv(Tag::border, 0, w);
    if (msg.first_row != first || msg.row_count != last - first) {
      fail(ErrorKind::protocol, "BORDER rows from worker " + std::to_string(w) + " do not match the halo");
    }
    const std::size_t local_first = first - shard.extended.begin;
    if (ctx.cfg->consistency_check) {
      double worst = 0.0;
      std::size_t worst_row = 0, worst_col = 0;
      bool mismatch = false;
      for (std::size_t k = 0; k < msg.rows.size(); ++k) {
        const Complex<R> mine = shard.psi_ext.values()[local_first * part.width + k];
        const Complex<R> theirs = msg.rows[k];
        if (!bitwise_equal(std::span<const Complex<R>>(&mine, 1), std::span<const Complex<R>>(&theirs, 1))) {
          mismatch = true;
          const double diff = std::abs(std::complex<double>(mine) - std::complex<double>(theirs));
          if (diff >= worst) {
            worst = diff;
            worst_row = first + k / part.width;
            worst_col = k % part.width;
          }
        }
      }
      if (mismatch) {
        fail(ErrorKind::numerical, "halo mismatch on worker " + std::to_string(ctx.id) + " vs worker " +
                                       std::to_string(w) + ": max abs discrepancy " + std::to_string(worst) +
                                       " at row " + std::to_string(worst_row) + ", col " + std::to_string(worst_col));
      }
    }
    detail::place_rows(shard.psi_ext, local_first, msg);
  }
}

template <class R>
struct ParallelResult {
  ObjectField<R> psi;
  std::vector<IterationTrace> traces;
  EngineTiming timing;
  StripPartition partition;
};

/// Interior rows of every shard, stacked in worker order.
template <class R>
ObjectField<R> assemble(const StripPartition& part, const std::vector<WorkerShard<R>>& shards) {
  ObjectField<R> out(part.height, part.width);
  for (const auto& s : shards) {
    const std::size_t off = s.interior_offset();
    std::copy(s.psi_ext.data() + off * part.width, s.psi_ext.data() + (off + s.interior.size()) * part.width,
              out.data() + s.interior.begin * part.width);
  }
  return out;
}

/// Multi-worker reconstruction from the flat start: P threads run the
/// GRAD / DIR / LS / Update stages with barriers in between.
template <class R>
ParallelResult<R> run_parallel(const Dataset<R>& ds, const EngineConfig& cfg, int iters,
                               const std::type_identity_t<IterationObserver<R>>& observer = {}) {
  using detail::Clock;
  const auto t_start = Clock::now();
  cfg.validate();
  if (iters < 1) fail(ErrorKind::config, "iterations must be >= 1");
  ds.validate();

  ParallelResult<R> result;
  result.partition = make_strips(ds.height, ds.width, ds.probe.side(), cfg.workers);
  const StripPartition& part = result.partition;
  const ObjectField<R> psi0(ds.height, ds.width, Complex<R>(1, 0));
  std::vector<WorkerShard<R>> shards = make_shards(part, psi0, ds.scan, ds.d);
  InProcessTransport<R> net(cfg.workers, cfg.timeout);
  MasterState<R> master_state;

  std::mutex fail_mu;
  std::exception_ptr failure;
  bool primary_failure = false;
  Clock::time_point loop_start{}, loop_end{};
  double compute_ms = 0.0, wait_ms = 0.0;
  std::array<double, 4> stage_sum{};

  auto body = [&](int id) {
    WorkerContext<R> ctx;
    ctx.id = id;
    ctx.part = &part;
    ctx.shard = &shards[static_cast<std::size_t>(id)];
    ctx.probe = &ds.probe;
    ctx.net = &net;
    ctx.cfg = &cfg;
    ctx.master = id == cfg.master_id ? &master_state : nullptr;
    try {
      ctx.iter = -1;
      ctx.stage = Stage::ls;
      double f0 = allreduce_sum(ctx, owned_partial_objective<R>(*ctx.shard, ds.probe, nullptr, 0.0), 0);
      if (!std::isfinite(f0)) fail(ErrorKind::numerical, "non-finite initial objective");
      ctx.barrier();
      ctx.wait_ms = {};
      auto t_prev = Clock::now();
      if (ctx.is_master()) loop_start = t_prev;
      std::array<std::uint64_t, 3> bytes_prev{};

      for (int m = 0; m < iters; ++m) {
        ctx.iter = m;
        std::array<double, 4> stage_ms{};
        auto close_stage = [&](Stage s) {
          ctx.barrier();
          const auto now = Clock::now();
          stage_ms[static_cast<std::size_t>(s)] = detail::ms_since(t_prev, now);
          t_prev = now;
        };
        const std::array<double, 4> wait_before = ctx.wait_ms;

        ctx.stage = Stage::grad;
        ObjectField<R> g = stage_grad(*ctx.shard, ds.probe);
        close_stage(Stage::grad);

        ctx.stage = Stage::dir;
        ObjectField<R> eta = stage_dir_gather_scatter(ctx, g);
        g = ObjectField<R>();
        close_stage(Stage::dir);

        ctx.stage = Stage::ls;
        const LineSearchResult ls = stage_ls_allreduce(ctx, eta, f0);
        close_stage(Stage::ls);

        ctx.stage = Stage::update;
        stage_update_exchange(ctx, ls.gamma, eta);
        close_stage(Stage::update);
        f0 = ls.f_new;

        if (ctx.is_master()) {
          IterationTrace tr;
          tr.iter = m;
          tr.objective = ls.f_new;
          tr.gamma = ls.gamma;
          tr.shrinks = ls.shrinks;
          tr.stalled = ls.stalled;
          tr.restarted = master_state.restarted;
          tr.step_norm = std::abs(ls.gamma) * master_state.dir_norm;
          tr.stage_ms = stage_ms;
          for (std::size_t s = 0; s < 4; ++s) {
            tr.wait_ms[s] = ctx.wait_ms[s] - wait_before[s];
            stage_sum[s] += stage_ms[s];
            compute_ms += stage_ms[s] - tr.wait_ms[s];
            wait_ms += tr.wait_ms[s];
          }
          const std::array<std::uint64_t, 3> bytes_now{net.bytes_sent(Tag::gather_grad), net.bytes_sent(Tag::scatter_dir),
                                                       net.bytes_sent(Tag::border)};
          tr.bytes_gathered = bytes_now[0] - bytes_prev[0];
          tr.bytes_scattered = bytes_now[1] - bytes_prev[1];
          tr.bytes_border = bytes_now[2] - bytes_prev[2];
          bytes_prev = bytes_now;
          result.traces.push_back(tr);
          loop_end = t_prev;
          if (observer) observer(tr, assemble(part, shards));
        }
      }
    } catch (const Error& e) {
      const bool primary = e.kind() != ErrorKind::aborted;
      std::lock_guard lock(fail_mu);
      if (!failure || (primary && !primary_failure)) {
        const std::string where = "worker " + std::to_string(id) + ", " + stage_name(ctx.stage) +
                                  (ctx.iter >= 0 ? ", iteration " + std::to_string(ctx.iter) : ", initial objective");
        failure = std::make_exception_ptr(e.with_context(where));
        primary_failure = primary;
      }
      if (primary) net.abort("worker " + std::to_string(id) + " failed: " + e.what());
    } catch (const std::exception& e) {
      std::lock_guard lock(fail_mu);
      if (!primary_failure) {
        failure = std::make_exception_ptr(
            Error(ErrorKind::aborted, "worker " + std::to_string(id) + ", " + stage_name(ctx.stage) + ": " + e.what()));
        primary_failure = true;
      }
      net.abort(e.what());
    }
  };

  {
    std::vector<std::jthread> threads;
    for (int id = 0; id < cfg.workers; ++id) {
      if (id == cfg.master_id) continue;
      threads.emplace_back(body, id);
    }
    body(cfg.master_id);
  }
  if (failure) std::rethrow_exception(failure);

  result.psi = assemble(part, shards);
  const auto t_end = Clock::now();
  EngineTiming& tm = result.timing;
  tm.total_s = std::chrono::duration<double>(t_end - t_start).count();
  tm.compute_s = compute_ms / 1000.0;
  tm.comm_wait_s = wait_ms / 1000.0;
  tm.setup_s = std::chrono::duration<double>(loop_start - t_start).count() +
               std::chrono::duration<double>(t_end - loop_end).count();
  for (std::size_t s = 0; s < 4; ++s) tm.stage_ms_mean[s] = stage_sum[s] / iters;
  return result;
}

}  // namespace pty
