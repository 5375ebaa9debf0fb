#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include "pty/grid.hpp"

namespace pty {

enum class Tag { gather_grad = 0, scatter_dir = 1, partial_f = 2, bcast_f = 3, border = 4 };

inline const char* tag_name(Tag t) {
  switch (t) {
    case Tag::gather_grad: return "GATHER_GRAD";
    case Tag::scatter_dir: return "SCATTER_DIR";
    case Tag::partial_f: return "PARTIAL_F";
    case Tag::bcast_f: return "BCAST_F";
    case Tag::border: return "BORDER";
  }
  return "?";
}

/// Addressed message between workers. (tag, iter, ls_trial, sender) is unique
/// per receiver. Row payloads carry full-width rows starting at `first_row`
/// (global object coordinates); scalar payloads use `scalar`.
template <class R>
struct StageMessage {
  Tag tag = Tag::gather_grad;
  int iter = 0;
  int ls_trial = 0;
  int sender = 0;
  std::size_t first_row = 0;
  std::size_t row_count = 0;
  std::vector<Complex<R>> rows;
  double scalar = 0.0;

  std::size_t payload_bytes() const noexcept {
    return tag == Tag::partial_f || tag == Tag::bcast_f ? sizeof(double) : rows.size() * sizeof(Complex<R>);
  }
};

/// Point-to-point messages plus a stage barrier. The engine only talks to
/// this interface; the in-process implementation below is the one shipped.
template <class R>
class Transport {
 public:
  virtual ~Transport() = default;
  virtual int size() const = 0;
  virtual void send(int to, StageMessage<R> msg) = 0;
  /// Blocks until the message with exactly this key arrives.
  virtual StageMessage<R> recv(int me, Tag tag, int iter, int ls_trial, int from) = 0;
  virtual void barrier(int me) = 0;
  /// Wakes every blocked call; they throw ErrorKind::aborted.
  virtual void abort(const std::string& reason) = 0;
  virtual std::uint64_t bytes_sent(Tag tag) const = 0;
};

template <class R>
class InProcessTransport final : public Transport<R> {
 public:
  InProcessTransport(int workers, std::chrono::milliseconds timeout)
      : workers_(workers), timeout_(timeout), mailbox_(static_cast<std::size_t>(workers)) {
    for (auto& b : bytes_) b.store(0);
  }

  int size() const override { return workers_; }

  void send(int to, StageMessage<R> msg) override {
    check_rank(to);
    bytes_[static_cast<std::size_t>(msg.tag)] += msg.payload_bytes();
    {
      std::lock_guard lock(mu_);
      mailbox_[static_cast<std::size_t>(to)].push_back(std::move(msg));
    }
    cv_.notify_all();
  }

  StageMessage<R> recv(int me, Tag tag, int iter, int ls_trial, int from) override {
    check_rank(me);
    check_rank(from);
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    std::unique_lock lock(mu_);
    auto& box = mailbox_[static_cast<std::size_t>(me)];
    for (;;) {
      if (aborted_) fail(ErrorKind::aborted, abort_reason_);
      for (auto it = box.begin(); it != box.end(); ++it) {
        if (it->tag != tag || it->sender != from) continue;
        if (it->iter == iter && it->ls_trial == ls_trial) {
          StageMessage<R> out = std::move(*it);
          box.erase(it);
          return out;
        }
        if (it->iter < iter || (it->iter == iter && it->ls_trial < ls_trial)) {
          fail(ErrorKind::protocol, "worker " + std::to_string(me) + " found stale " + tag_name(tag) + " from worker " +
                                        std::to_string(from) + " (iteration " + std::to_string(it->iter) + ", trial " +
                                        std::to_string(it->ls_trial) + ") while expecting iteration " +
                                        std::to_string(iter) + ", trial " + std::to_string(ls_trial));
        }
      }
      if (cv_.wait_until(lock, deadline) == std::cv_status::timeout && std::chrono::steady_clock::now() >= deadline) {
        fail(ErrorKind::deadlock, "worker " + std::to_string(me) + " timed out waiting for " + tag_name(tag) +
                                      " from worker " + std::to_string(from) + " (iteration " + std::to_string(iter) +
                                      ", trial " + std::to_string(ls_trial) + ")");
      }
    }
  }

  void barrier(int me) override {
    check_rank(me);
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    std::unique_lock lock(mu_);
    if (aborted_) fail(ErrorKind::aborted, abort_reason_);
    const std::uint64_t gen = generation_;
    if (++arrived_ == workers_) {
      arrived_ = 0;
      ++generation_;
      cv_.notify_all();
      return;
    }
    while (generation_ == gen) {
      if (aborted_) fail(ErrorKind::aborted, abort_reason_);
      if (cv_.wait_until(lock, deadline) == std::cv_status::timeout && generation_ == gen) {
        fail(ErrorKind::deadlock, "worker " + std::to_string(me) + " timed out at a stage barrier (" +
                                      std::to_string(arrived_) + " of " + std::to_string(workers_) + " arrived)");
      }
    }
  }

  void abort(const std::string& reason) override {
    {
      std::lock_guard lock(mu_);
      if (!aborted_) {
        aborted_ = true;
        abort_reason_ = reason;
      }
    }
    cv_.notify_all();
  }

  std::uint64_t bytes_sent(Tag tag) const override { return bytes_[static_cast<std::size_t>(tag)].load(); }

 private:
  void check_rank(int r) const {
    if (r < 0 || r >= workers_) fail(ErrorKind::protocol, "worker id " + std::to_string(r) + " out of range");
  }

  int workers_;
  std::chrono::milliseconds timeout_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<std::vector<StageMessage<R>>> mailbox_;
  int arrived_ = 0;
  std::uint64_t generation_ = 0;
  bool aborted_ = false;
  std::string abort_reason_;
  std::array<std::atomic<std::uint64_t>, 5> bytes_;
};

}  // namespace pty
