#include "lll/numcore/fdcheck.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "lll/numcore/rng.hpp"

namespace lll::numcore {

std::string FdReport::summary() const {
  std::ostringstream os;
  os << "max relative error " << max_rel_err << " over " << entries.size() << " parameters";
  return os.str();
}

FdReport finite_diff_check(ParamStore& store, const std::function<ValueRef(Graph&)>& build_loss,
                           Real step, int max_coords_per_param, std::uint64_t seed) {
  store.zero_grads();
  {
    Graph g;
    ValueRef loss = build_loss(g);
    g.backward(loss);
  }
  // Snapshot analytic gradients before perturbing anything.
  std::vector<std::vector<Real>> analytic;
  for (Param& p : store.params()) analytic.push_back(p.tensor.grad ? *p.tensor.grad : std::vector<Real>(p.tensor.numel(), Real(0)));

  const auto eval = [&]() -> Real {
    Graph g;
    return g.scalar_value(build_loss(g));
  };

  Rng rng(seed ^ 0x5dc3f7a1u);
  FdReport report;
  std::size_t pi = 0;
  for (Param& p : store.params()) {
    const std::size_t n = p.tensor.numel();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), std::size_t(0));
    if (static_cast<int>(n) > max_coords_per_param) {
      for (int i = 0; i < max_coords_per_param; ++i) {
        const std::size_t j = i + rng.below(static_cast<std::uint32_t>(n - i));
        std::swap(coords[i], coords[j]);
      }
      coords.resize(max_coords_per_param);
    }
    FdEntry entry;
    entry.param = p.name;
    entry.coords_checked = coords.size();
    for (std::size_t c : coords) {
      const Real saved = p.tensor.data[c];
      p.tensor.data[c] = saved + step;
      const Real fp = eval();
      p.tensor.data[c] = saved - step;
      const Real fm = eval();
      p.tensor.data[c] = saved;
      const double numeric = (static_cast<double>(fp) - static_cast<double>(fm)) / (2.0 * static_cast<double>(step));
      const double a = static_cast<double>(analytic[pi][c]);
      const double denom = std::max(std::abs(a) + std::abs(numeric), 1e-3);
      entry.max_rel_err = std::max(entry.max_rel_err, std::abs(a - numeric) / denom);
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.entries.push_back(std::move(entry));
    ++pi;
  }
  return report;
}

}  // namespace lll::numcore
