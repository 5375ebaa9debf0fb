#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "pty/grid.hpp"

namespace pty {

/// Half-open row interval.
struct RowRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end - begin; }
  bool contains(std::size_t row) const noexcept { return row >= begin && row < end; }
  bool intersects(std::size_t first, std::size_t last) const noexcept { return first < end && last > begin; }
  friend bool operator==(const RowRange&, const RowRange&) = default;
};

/// Row strips of the object, one per worker, each widened by a halo of
/// N-1 rows so every pattern touching the interior is computed locally.
struct StripPartition {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t probe_side = 0;
  std::size_t halo = 0;
  std::vector<RowRange> interior;
  std::vector<RowRange> extended;

  int workers() const noexcept { return static_cast<int>(interior.size()); }
};

inline StripPartition make_strips(std::size_t height, std::size_t width, std::size_t probe_side, int workers) {
  if (workers < 1) fail(ErrorKind::config, "worker count must be >= 1");
  if (probe_side < 1) fail(ErrorKind::config, "probe side must be >= 1");
  const auto p = static_cast<std::size_t>(workers);
  if (height < p * probe_side) {
    const std::size_t max_p = height / probe_side;
    fail(ErrorKind::config, "object height " + std::to_string(height) + " cannot hold " + std::to_string(workers) +
                                " strips of at least " + std::to_string(probe_side) + " rows; at most " +
                                std::to_string(max_p) + " worker(s) are feasible");
  }
  StripPartition part;
  part.height = height;
  part.width = width;
  part.probe_side = probe_side;
  part.halo = probe_side - 1;
  const std::size_t base = height / p;
  const std::size_t rem = height % p;
  std::size_t row = 0;
  for (std::size_t i = 0; i < p; ++i) {
    const std::size_t rows = base + (i < rem ? 1 : 0);
    RowRange in{row, row + rows};
    RowRange ext{in.begin >= part.halo ? in.begin - part.halo : 0, std::min(height, in.end + part.halo)};
    part.interior.push_back(in);
    part.extended.push_back(ext);
    row += rows;
  }
  return part;
}

/// Per worker, the ascending global indices of patterns whose footprint rows
/// intersect the worker's interior. Patterns near a strip edge appear twice.
inline std::vector<std::vector<std::size_t>> local_pattern_set(const StripPartition& part, const ScanSet& scan,
                                                               std::size_t n) {
  std::vector<std::vector<std::size_t>> out(part.interior.size());
  for (std::size_t j = 0; j < scan.size(); ++j) {
    const auto first = static_cast<std::size_t>(scan[j].row);
    for (std::size_t i = 0; i < part.interior.size(); ++i) {
      if (part.interior[i].intersects(first, first + n)) out[i].push_back(j);
    }
  }
  return out;
}

/// The worker whose interior holds the footprint's center row.
inline int owner_of(const StripPartition& part, ScanPos pos, std::size_t n) {
  const std::size_t center = static_cast<std::size_t>(pos.row) + n / 2;
  for (std::size_t i = 0; i < part.interior.size(); ++i) {
    if (part.interior[i].contains(center)) return static_cast<int>(i);
  }
  fail(ErrorKind::bounds, "footprint center row " + std::to_string(center) + " outside the partition");
}

/// One worker's slice of the problem, in extended-strip coordinates.
template <class R>
struct WorkerShard {
  int worker_id = 0;
  RowRange interior;
  RowRange extended;
  ObjectField<R> psi_ext;
  std::vector<std::size_t> global_index;  // ascending
  ScanSet local_scan;                     // rows re-based to extended.begin
  DiffractionSet local_d;
  std::vector<char> owned;

  std::size_t interior_offset() const noexcept { return interior.begin - extended.begin; }
};

template <class R>
std::vector<WorkerShard<R>> make_shards(const StripPartition& part, const ObjectField<R>& psi, const ScanSet& scan,
                                        const DiffractionSet& d) {
  const std::size_t n = part.probe_side;
  const auto local = local_pattern_set(part, scan, n);
  std::vector<WorkerShard<R>> shards(part.interior.size());
  for (std::size_t i = 0; i < shards.size(); ++i) {
    auto& s = shards[i];
    s.worker_id = static_cast<int>(i);
    s.interior = part.interior[i];
    s.extended = part.extended[i];
    s.psi_ext = psi.row_range(s.extended.begin, s.extended.end);
    s.global_index = local[i];
    s.local_d = DiffractionSet(local[i].size(), n);
    for (std::size_t k = 0; k < local[i].size(); ++k) {
      const std::size_t j = local[i][k];
      s.local_scan.push_back({scan[j].row - static_cast<int>(s.extended.begin), scan[j].col});
      auto src = d.slice(j);
      std::copy(src.begin(), src.end(), s.local_d.slice(k).begin());
      s.owned.push_back(owner_of(part, scan[j], n) == static_cast<int>(i) ? 1 : 0);
    }
  }
  return shards;
}

}  // namespace pty
