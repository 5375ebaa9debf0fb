#pragma once

#include <cstdio>
#include <ostream>
#include <string>

#include "pty/solver.hpp"

namespace pty {

/// Shortest text that reads back to the same double.
inline std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_trace_header(std::ostream& os, bool engine_columns) {
  os << "iter,objective,gamma,shrinks,step_norm,grad_ms,dir_ms,ls_ms,update_ms,restarted";
  if (engine_columns) {
    os << ",wait_grad_ms,wait_dir_ms,wait_ls_ms,wait_update_ms,bytes_gathered,bytes_scattered,bytes_border";
  }
  os << '\n';
}

inline void write_trace_row(std::ostream& os, const IterationTrace& t, bool engine_columns) {
  os << t.iter << ',' << exact(t.objective) << ',' << exact(t.gamma) << ',' << t.shrinks << ',' << exact(t.step_norm);
  for (double ms : t.stage_ms) os << ',' << exact(ms);
  os << ',' << (t.restarted ? 1 : 0);
  if (engine_columns) {
    for (double ms : t.wait_ms) os << ',' << exact(ms);
    os << ',' << t.bytes_gathered << ',' << t.bytes_scattered << ',' << t.bytes_border;
  }
  os << '\n';
}

}  // namespace pty
