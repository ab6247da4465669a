#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lll/numcore/fdcheck.hpp"
#include "lll/rvae/adapter.hpp"

using namespace lll;
using namespace lll::rvae;
using numcore::Graph;
using numcore::ParamStore;
using numcore::Real;
using numcore::Rng;
using numcore::Tensor;
using numcore::ValueRef;

namespace {

RvaeConfig small_cfg(Real alpha = 0.5, bool conditional = false) {
  RvaeConfig cfg;
  cfg.d_model = 8;
  cfg.latent_dim = 6;
  cfg.alpha = alpha;
  cfg.rho = 0.2;
  cfg.conditional = conditional;
  cfg.n_conditions = conditional ? 3 : 0;
  cfg.cond_dim = 4;
  return cfg;
}

struct Fixture {
  ParamStore ps;
  RvaeConfig cfg;
  RvaeParams params;
  Fixture(Real alpha = 0.5, bool conditional = false, std::uint64_t seed = 9)
      : cfg(small_cfg(alpha, conditional)) {
    Rng rng(seed);
    params = RvaeParams::init(ps, cfg, rng);
  }
};

}  // namespace

TEST_CASE("mixing degenerate cases") {
  Rng data(4);
  Tensor h = Tensor::randn({5, 8}, data, 1.0);

  SUBCASE("alpha = 1: output bitwise equals input regardless of parameters") {
    Fixture f(1.0);
    Graph g;
    RvaeOutput out = rvae_forward(g, f.params, f.cfg, g.constant(h), Mode::Eval, nullptr);
    CHECK(g.value(out.h_out).data == h.data);
  }
  SUBCASE("alpha = 0: output equals the decoder output exactly") {
    Fixture f(0.0);
    Graph g;
    RvaeOutput out = rvae_forward(g, f.params, f.cfg, g.constant(h), Mode::Eval, nullptr);
    CHECK(g.value(out.h_out).data == g.value(out.decoded).data);
  }
  SUBCASE("intermediate alpha satisfies the convex combination to 1e-12") {
    for (Real alpha : {Real(0.25), Real(0.5), Real(0.75)}) {
      Fixture f(alpha);
      Graph g;
      RvaeOutput out = rvae_forward(g, f.params, f.cfg, g.constant(h), Mode::Eval, nullptr);
      const auto& ho = g.value(out.h_out).data;
      const auto& hi = g.value(out.h_in).data;
      const auto& de = g.value(out.decoded).data;
      for (std::size_t i = 0; i < ho.size(); ++i)
        CHECK(std::abs(ho[i] - (alpha * hi[i] + (1 - alpha) * de[i])) < 1e-12);
    }
  }
}

TEST_CASE("eval mode is deterministic, train mode samples") {
  Fixture f;
  Rng data(5);
  Tensor h = Tensor::randn({4, 8}, data, 1.0);
  Graph g1, g2;
  RvaeOutput a = rvae_forward(g1, f.params, f.cfg, g1.constant(h), Mode::Eval, nullptr);
  RvaeOutput b = rvae_forward(g2, f.params, f.cfg, g2.constant(h), Mode::Eval, nullptr);
  CHECK(g1.value(a.h_out).data == g2.value(b.h_out).data);
  CHECK(g1.value(a.z).data == g1.value(a.mu).data);  // z = mu at eval

  Rng noise(6);
  Graph g3;
  RvaeOutput c = rvae_forward(g3, f.params, f.cfg, g3.constant(h), Mode::Train, &noise);
  CHECK(g3.value(c.z).data != g3.value(c.mu).data);
  CHECK_THROWS_AS(rvae_forward(g3, f.params, f.cfg, g3.constant(h), Mode::Train, nullptr),
                  std::invalid_argument);
}

TEST_CASE("sigma respects the floor") {
  Fixture f;
  Rng data(8);
  Tensor h = Tensor::randn({6, 8}, data, 2.0);
  Graph g;
  RvaeOutput out = rvae_forward(g, f.params, f.cfg, g.constant(h), Mode::Eval, nullptr);
  for (Real s : g.value(out.sigma).data) CHECK(s >= f.cfg.sigma_floor);
}

TEST_CASE("kl per dimension hand values") {
  SUBCASE("mu=0, sigma=1 gives zero in every dimension") {
    Graph g;
    ValueRef kl = kl_per_dimension(g, g.constant(Tensor::zeros({3, 5})), g.constant(Tensor::full({3, 5}, 1)));
    for (Real v : g.value(kl).data) CHECK(v == 0.0);
  }
  SUBCASE("mu=1, sigma=1 single position gives 0.5") {
    Graph g;
    ValueRef kl = kl_per_dimension(g, g.constant(Tensor::full({1, 2}, 1)), g.constant(Tensor::full({1, 2}, 1)));
    for (Real v : g.value(kl).data) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("mu=0, sigma=e gives (e^2 - 3)/2") {
    Graph g;
    const Real e = std::exp(Real(1));
    ValueRef kl = kl_per_dimension(g, g.constant(Tensor::zeros({1, 1})), g.constant(Tensor::full({1, 1}, e)));
    CHECK(g.value(kl).data[0] == doctest::Approx((e * e - 3) / 2).epsilon(1e-12));
    CHECK(g.value(kl).data[0] == doctest::Approx(2.1945).epsilon(1e-4));
  }
  SUBCASE("non-positive sigma rejected") {
    Graph g;
    Tensor sigma = Tensor::full({1, 2}, 1);
    sigma.data[1] = 0;
    CHECK_THROWS_AS(kl_per_dimension(g, g.constant(Tensor::zeros({1, 2})), g.constant(sigma)),
                    std::domain_error);
  }
  SUBCASE("averages over positions per dimension") {
    Graph g;
    Tensor mu = Tensor::zeros({2, 1});
    mu.data[0] = 1;  // positions: kl = 0.5 and 0
    ValueRef kl = kl_per_dimension(g, g.constant(mu), g.constant(Tensor::full({2, 1}, 1)));
    CHECK(g.value(kl).data[0] == doctest::Approx(0.25).epsilon(1e-12));
  }
}

TEST_CASE("kl is non-negative, zero only at the prior") {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    Graph g;
    Tensor mu = Tensor::randn({1, 4}, rng, 1.5);
    Tensor sigma = Tensor::zeros({1, 4});
    for (auto& s : sigma.data) s = std::exp(rng.normal());
    ValueRef kl = kl_per_dimension(g, g.constant(mu), g.constant(sigma));
    for (int i = 0; i < 4; ++i) {
      const Real v = g.value(kl).data[i];
      CHECK(v >= 0.0);
      if (std::abs(mu.data[i]) > 1e-3 || std::abs(sigma.data[i] - 1) > 1e-3) CHECK(v > 0.0);
    }
  }
}

TEST_CASE("free bits hinge") {
  SUBCASE("all kl zero, rho 0.2, 100 dims: exactly 20") {
    Graph g;
    CHECK(g.scalar_value(free_bits_kl(g, g.constant(Tensor::zeros({100})), 0.2)) == 20.0);
  }
  SUBCASE("rho 0 is the plain sum") {
    Graph g;
    Tensor kl = Tensor::of({3}, {0.1, 0.2, 0.3});
    CHECK(g.scalar_value(free_bits_kl(g, g.constant(kl), 0.0)) == doctest::Approx(0.6).epsilon(1e-12));
  }
  SUBCASE("kl [0.1, 0.5] with rho 0.2 gives 0.7") {
    Graph g;
    Tensor kl = Tensor::of({2}, {0.1, 0.5});
    CHECK(g.scalar_value(free_bits_kl(g, g.constant(kl), 0.2)) == doctest::Approx(0.7).epsilon(1e-12));
  }
  SUBCASE("bounds and monotonicity") {
    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
      const int d = 1 + static_cast<int>(rng.below(8));
      Tensor kl = Tensor::zeros({d});
      for (auto& v : kl.data) v = rng.uniform();
      const Real rho = Real(0.25) * static_cast<Real>(rng.uniform());
      Graph g;
      const Real fb = g.scalar_value(free_bits_kl(g, g.constant(kl), rho));
      Real plain = 0;
      bool all_above = true;
      for (Real v : kl.data) {
        plain += v;
        all_above = all_above && v >= rho;
      }
      CHECK(fb >= rho * d - 1e-12);
      CHECK(fb >= plain - 1e-12);
      if (all_above) CHECK(fb == doctest::Approx(plain).epsilon(1e-12));
      // raising one coordinate never lowers the hinge
      const int j = static_cast<int>(rng.below(static_cast<std::uint32_t>(d)));
      kl.data[j] += 0.3;
      Graph g2;
      CHECK(g2.scalar_value(free_bits_kl(g2, g2.constant(kl), rho)) >= fb - 1e-12);
    }
  }
}

TEST_CASE("aux loss modes") {
  Graph g;
  Tensor h = Tensor::full({2, 4}, 0.5);
  RvaeOutput out;
  out.h_in = g.constant(h);
  out.decoded = g.constant(h);
  out.kl_per_dim = g.constant(Tensor::zeros({100}));

  SUBCASE("perfect reconstruction, zero kl: pure hinge floor 20") {
    CHECK(g.scalar_value(rvae_aux_loss(g, out, ReconMode::Mse, 0.2)) == 20.0);
  }
  SUBCASE("task-nll mode equals free bits exactly") {
    const Real fb = g.scalar_value(free_bits_kl(g, out.kl_per_dim, 0.2));
    CHECK(g.scalar_value(rvae_aux_loss(g, out, ReconMode::TaskNll, 0.2)) == fb);
  }
  SUBCASE("constant offset of one adds exactly 1 to the mse term") {
    Tensor off = h;
    for (auto& v : off.data) v += 1.0;
    out.decoded = g.constant(off);
    CHECK(g.scalar_value(rvae_aux_loss(g, out, ReconMode::Mse, 0.2)) == doctest::Approx(21.0).epsilon(1e-12));
  }
  SUBCASE("mode strings") {
    CHECK(recon_mode_from_string("mse") == ReconMode::Mse);
    CHECK(recon_mode_from_string("task-nll") == ReconMode::TaskNll);
    CHECK_THROWS_AS(recon_mode_from_string("other"), std::invalid_argument);
  }
}

TEST_CASE("train-mode z is centered on mu (1e4 draws, 4 standard errors)") {
  Fixture f;
  Rng data(12);
  Tensor h = Tensor::randn({1, 8}, data, 1.0);
  Graph g0;
  RvaeOutput ref = rvae_forward(g0, f.params, f.cfg, g0.constant(h), Mode::Eval, nullptr);
  const std::vector<Real> mu = g0.value(ref.mu).data;
  const std::vector<Real> sigma = g0.value(ref.sigma).data;

  const int n = 10000;
  std::vector<double> acc(mu.size(), 0.0);
  Rng noise(99);
  for (int i = 0; i < n; ++i) {
    Graph g;
    RvaeOutput out = rvae_forward(g, f.params, f.cfg, g.constant(h), Mode::Train, &noise);
    const auto& z = g.value(out.z).data;
    for (std::size_t j = 0; j < z.size(); ++j) acc[j] += z[j];
  }
  for (std::size_t j = 0; j < mu.size(); ++j) {
    const double mean = acc[j] / n;
    const double se = sigma[j] / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(mean - mu[j]) < 4 * se + 1e-12);
  }
}

TEST_CASE("adapter gradient passes finite differences with frozen noise") {
  for (const bool conditional : {false, true}) {
    for (const ReconMode mode : {ReconMode::Mse, ReconMode::TaskNll}) {
      CAPTURE(conditional);
      Fixture f(0.5, conditional, 17);
      Rng data(13);
      Tensor h = Tensor::randn({3, 8}, data, 1.0);
      auto build = [&](Graph& g) {
        Rng frozen(555);  // same noise on every invocation
        RvaeOutput out = rvae_forward(g, f.params, f.cfg, g.constant(h), Mode::Train, &frozen,
                                      conditional ? std::optional<int>(1) : std::nullopt);
        // drive h_out so the mixing path gets gradient too
        ValueRef task_like = g.mean_all(g.square(out.h_out));
        return g.add(task_like, rvae_aux_loss(g, out, mode, f.cfg.rho));
      };
      numcore::FdReport rep = numcore::finite_diff_check(f.ps, build, 1e-5, 10, 3);
      INFO(rep.summary());
      CHECK(rep.pass(1e-4));
    }
  }
}

TEST_CASE("conditional adapter") {
  Fixture f(0.5, true);
  Rng data(19);
  Tensor h = Tensor::randn({3, 8}, data, 1.0);

  SUBCASE("different conditions decode differently on identical input") {
    Graph g;
    RvaeOutput a = rvae_forward(g, f.params, f.cfg, g.constant(h), Mode::Eval, nullptr, 0);
    RvaeOutput b = rvae_forward(g, f.params, f.cfg, g.constant(h), Mode::Eval, nullptr, 2);
    CHECK(g.value(a.decoded).data != g.value(b.decoded).data);
  }
  SUBCASE("condition errors") {
    Graph g;
    CHECK_THROWS_AS(rvae_forward(g, f.params, f.cfg, g.constant(h), Mode::Eval, nullptr), std::invalid_argument);
    CHECK_THROWS_AS(rvae_forward(g, f.params, f.cfg, g.constant(h), Mode::Eval, nullptr, 3), std::out_of_range);
    Fixture plain(0.5, false);
    Graph g2;
    CHECK_THROWS_AS(rvae_forward(g2, plain.params, plain.cfg, g2.constant(h), Mode::Eval, nullptr, 0),
                    std::invalid_argument);
  }
}

TEST_CASE("config validation") {
  RvaeConfig cfg = small_cfg();
  cfg.alpha = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_cfg();
  cfg.latent_dim = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_cfg();
  cfg.conditional = true;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);  // n_conditions missing
}
