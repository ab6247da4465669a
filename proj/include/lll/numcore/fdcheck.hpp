#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lll/numcore/adamw.hpp"
#include "lll/numcore/graph.hpp"

namespace lll::numcore {

struct FdEntry {
  std::string param;
  double max_rel_err = 0;
  std::size_t coords_checked = 0;
};

struct FdReport {
  std::vector<FdEntry> entries;
  double max_rel_err = 0;
  bool pass(double tol) const { return max_rel_err < tol; }
  std::string summary() const;
};

// Central-difference gradient check against the tape. `build_loss` must
// construct the loss from the store's current parameter values and be
// deterministic across calls (freeze any sampling noise inside it).
// Checks at most `max_coords_per_param` coordinates per parameter, sampled
// with `seed`. Report-only: never throws on mismatch.
FdReport finite_diff_check(ParamStore& store,
                           const std::function<ValueRef(Graph&)>& build_loss,
                           Real step = Real(1e-5),
                           int max_coords_per_param = 25,
                           std::uint64_t seed = 0);

}  // namespace lll::numcore
