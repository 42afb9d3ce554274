#include <doctest.h>

#include "oracles.hpp"
#include "sglmm/links.hpp"

using namespace sglmm;

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1e-3, std::abs(a), std::abs(b)});
}

const std::vector<LinkFamily> kAllFamilies = {
    LinkFamily::logit,          LinkFamily::probit,
    LinkFamily::robit,          LinkFamily::wallace_robit,
    LinkFamily::gev,            LinkFamily::modified_gev,
    LinkFamily::neg_modified_gev, LinkFamily::boxcox,
    LinkFamily::modified_boxcox, LinkFamily::log_link};

std::vector<double> nu_values(LinkFamily f) {
  switch (f) {
    case LinkFamily::robit:
    case LinkFamily::wallace_robit:
      return {0.5, 1.0, 3.0, 7.0};
    case LinkFamily::gev:
      return {-0.4, 0.0, 0.3, 1.0};
    case LinkFamily::boxcox:
      return {0.0, 0.5, 1.0};
    case LinkFamily::modified_gev:
    case LinkFamily::neg_modified_gev:
    case LinkFamily::modified_boxcox:
      return {0.0, 0.3, 1.0, 2.0};
    default:
      return {std::numeric_limits<double>::quiet_NaN()};
  }
}

// interior test z per family (away from non-invertible boundaries and the
// modified families' z = 0 second-derivative kink)
std::vector<double> z_points(LinkFamily f, double nu) {
  std::vector<double> zs = {-2.3, -0.9, 0.45, 0.8, 1.7};
  std::vector<double> out;
  for (double z : zs) {
    if (f == LinkFamily::gev && link_has_nu(f) && nu != 0.0) {
      if (nu > 0 && z <= -1.0 / nu + 0.15) continue;
      if (nu < 0 && z >= -1.0 / nu - 0.15) continue;
    }
    if (f == LinkFamily::boxcox && nu != 0.0) {
      if (nu > 0 && z <= -1.0 / nu + 0.15) continue;
      if (nu < 0 && z >= -1.0 / nu - 0.15) continue;
    }
    out.push_back(z);
  }
  return out;
}

}  // namespace

TEST_CASE("inverse link values at pinned points") {
  CHECK(inv_link_eval({LinkFamily::probit, 0}, 0.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(inv_link_eval({LinkFamily::modified_gev, 0.0}, 0.0) ==
        doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  // robit close to its fast approximation
  const double exact = inv_link_eval({LinkFamily::robit, 7.0}, 1.5);
  const double fast = inv_link_eval({LinkFamily::wallace_robit, 7.0}, 1.5);
  const double oracle = oracle::t_cdf_by_quadrature(7.0, 1.5);
  CHECK(std::abs(exact - oracle) < 1e-10);
  CHECK(std::abs(exact - fast) < 0.02);
}

TEST_CASE("link values at pinned points") {
  CHECK(link_eval({LinkFamily::boxcox, 1.0}, 2.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(link_eval({LinkFamily::modified_boxcox, 2.0}, 0.5) ==
        doctest::Approx(-1.5).epsilon(1e-12));
  CHECK(link_eval({LinkFamily::log_link, 0}, 1.0) == doctest::Approx(0.0));
}

TEST_CASE("link_eval domain errors") {
  CHECK_THROWS_AS(link_eval({LinkFamily::probit, 0}, 1.2), DomainError);
  CHECK_THROWS_AS(link_eval({LinkFamily::log_link, 0}, -0.5), DomainError);
  CHECK_THROWS_AS(link_eval({LinkFamily::modified_gev, 0.5}, 0.0), DomainError);
}

TEST_CASE("non-onto families flag boundary points") {
  CHECK_THROWS_AS(inv_link_eval({LinkFamily::boxcox, 1.0}, -2.0), DomainError);
  CHECK_THROWS_AS(inv_link_eval({LinkFamily::gev, 0.5}, -3.0), DomainError);
  // guarded jet reports the boundary value without throwing
  ZJet j = inv_link_jet({LinkFamily::gev, 0.5}, -3.0);
  CHECK(j.boundary);
  CHECK(j.f == 0.0);
  ZJet j2 = inv_link_jet({LinkFamily::gev, -0.5}, 3.0);
  CHECK(j2.boundary);
  CHECK(j2.f == 1.0);
}

TEST_CASE("link_grad pinned examples") {
  // identity transform derivative is 1 (plan-level identity site)
  TransformPlan id = make_plan(LinkFamily::log_link, PlanKind::identity);
  Vec w(1);
  w << 2.0;
  CHECK(log_jacobian({LinkFamily::log_link, 0}, id, w) == 0.0);

  // boxcox df/dnu at z=0 is 0 under f(z) = (1+nu z)^{1/nu}
  const double d = link_grad({LinkFamily::boxcox, 1.0}, 0.0, GradKind::df_dnu);
  const double fd = oracle::fd_central(
      [&](double nu) { return inv_link_eval({LinkFamily::boxcox, nu}, 0.0); }, 1.0);
  CHECK(std::abs(d) < 1e-12);
  CHECK(std::abs(fd) < 1e-6);

  // modified GEV dg/dnu against finite differences
  const double g = link_grad({LinkFamily::modified_gev, 0.5}, 0.62, GradKind::dg_dnu);
  const double gfd = oracle::fd_central(
      [&](double nu) { return link_eval({LinkFamily::modified_gev, nu}, 0.62); }, 0.5);
  CHECK(rel_err(g, gfd) < 1e-6);
}

TEST_CASE("log_jacobian matches finite-difference slopes") {
  // mu-plan for the Poisson log link: z = log w, Jacobian d z/d mu = 1/mu
  TransformPlan mu_plan = make_plan(LinkFamily::log_link, PlanKind::mu_reparam);
  Vec w(1);
  w << std::exp(2.0);
  CHECK(log_jacobian({LinkFamily::log_link, 0}, mu_plan, w) ==
        doctest::Approx(-2.0).epsilon(1e-12));

  LinkSpec mbc{LinkFamily::modified_boxcox, 0.5};
  TransformPlan plan = make_plan(LinkFamily::modified_boxcox, PlanKind::mu_reparam);
  Vec w2(2);
  w2 << 0.5, 2.0;
  double expect = 0.0;
  for (int i = 0; i < 2; ++i)
    expect += std::log(oracle::fd_central(
        [&](double x) { return link_eval(mbc, x); }, w2[i], 1e-7));
  CHECK(rel_err(log_jacobian(mbc, plan, w2), expect) < 1e-6);

  CHECK(log_jacobian(mbc, make_plan(LinkFamily::modified_boxcox, PlanKind::identity),
                     w2) == 0.0);
}

TEST_CASE("round trips on the representable grid") {
  for (LinkFamily f : kAllFamilies) {
    if (!maps_onto_reals(f)) continue;
    for (double nu : nu_values(f)) {
      LinkSpec link{f, nu};
      for (double z = -20.0; z <= 20.0; z += 0.5) {
        ZJet j = inv_link_jet(link, z);
        const double mu = j.f;
        if (!(mu > 1e-290) || !std::isfinite(mu)) continue;
        if (is_cdf_link(f) && !(1.0 - mu > 1e-14)) continue;
        const double tol = 1e-10 * std::max(1.0, std::abs(z));
        // representability guard: rounding mu to the nearest double already
        // perturbs z by about h'(mu) * ulp, so points beyond that
        // conditioning limit cannot meet the tolerance in double precision
        const double ulp = 1.1e-16 * (is_cdf_link(f) ? 1.0 : mu);
        if (link_jet(link, mu).gw * ulp > 0.2 * tol) continue;
        const double back = link_eval(link, mu);
        CHECK(std::abs(back - z) <= tol);
      }
    }
  }
}

TEST_CASE("monotonicity of the inverse link") {
  Rng rng(77);
  for (LinkFamily f : kAllFamilies) {
    for (double nu : nu_values(f)) {
      LinkSpec link{f, nu};
      for (int rep = 0; rep < 50; ++rep) {
        double z1 = -6.0 + 12.0 * rng.uniform();
        double z2 = -6.0 + 12.0 * rng.uniform();
        if (z1 > z2) std::swap(z1, z2);
        if (z2 - z1 < 1e-6) continue;
        ZJet a = inv_link_jet(link, z1);
        ZJet b = inv_link_jet(link, z2);
        if (a.boundary || b.boundary) continue;
        // strict ordering where the gap is resolvable in double precision
        const double min_gap = std::min(a.fz, b.fz) * (z2 - z1);
        if (min_gap > 8.0 * 2.2e-16 * std::max(a.f, b.f)) CHECK(a.f < b.f);
        else CHECK(a.f <= b.f);
      }
    }
  }
}

TEST_CASE("limits: small nu matches the nu = 0 forms") {
  for (double z : {-2.0, -0.5, 0.8, 2.5}) {
    const double gumbel = std::exp(-std::exp(-z));
    CHECK(std::abs(inv_link_eval({LinkFamily::modified_gev, 1e-9}, z) - gumbel) < 1e-6);
  }
  for (double mu : {0.3, 1.0, 4.0}) {
    CHECK(std::abs(link_eval({LinkFamily::boxcox, 1e-9}, mu) - std::log(mu)) < 1e-6);
    CHECK(std::abs(link_eval({LinkFamily::modified_boxcox, 1e-9}, mu) - std::log(mu)) <
          1e-6);
  }
}

TEST_CASE("negatively skewed modified GEV is the exact reflection") {
  for (double nu : {0.0, 0.4, 1.3}) {
    for (double z : {-1.7, -0.2, 0.9, 2.2}) {
      const double lhs = inv_link_eval({LinkFamily::neg_modified_gev, nu}, z);
      const double rhs = 1.0 - inv_link_eval({LinkFamily::modified_gev, nu}, -z);
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-14));
    }
  }
}

TEST_CASE("Wallace approximation stays within 0.02 of the exact t cdf") {
  for (double nu : {1.0, 3.0, 7.0}) {
    double worst = 0.0;
    for (double z = -10.0; z <= 10.0; z += 0.05) {
      const double exact = oracle::t_cdf_by_quadrature(nu, z);
      const double fast = inv_link_eval({LinkFamily::wallace_robit, nu}, z);
      worst = std::max(worst, std::abs(exact - fast));
    }
    CHECK(worst <= 0.02);
  }
}

TEST_CASE("z-direction jets match finite differences") {
  for (LinkFamily f : kAllFamilies) {
    for (double nu : nu_values(f)) {
      LinkSpec link{f, nu};
      for (double z : z_points(f, nu)) {
        CAPTURE(to_string(f));
        CAPTURE(nu);
        CAPTURE(z);
        ZJet j = inv_link_jet(link, z);
        REQUIRE(!j.boundary);
        auto fval = [&](double zz) { return inv_link_jet(link, zz).f; };
        auto fz = [&](double zz) { return inv_link_jet(link, zz).fz; };
        auto fzz = [&](double zz) { return inv_link_jet(link, zz).fzz; };
        CHECK(rel_err(j.fz, oracle::fd_central(fval, z)) < 1e-5);
        CHECK(rel_err(j.fzz, oracle::fd_central(fz, z)) < 1e-5);
        CHECK(rel_err(j.fzzz, oracle::fd_central(fzz, z)) < 1e-5);
        if (link_has_nu(f) && !(f == LinkFamily::modified_gev && nu == 0.0) &&
            !(f == LinkFamily::neg_modified_gev && nu == 0.0) &&
            !(f == LinkFamily::modified_boxcox && nu == 0.0)) {
          auto f_nu = [&](double v) { return inv_link_jet({f, v}, z).f; };
          auto fz_nu = [&](double v) { return inv_link_jet({f, v}, z).fz; };
          auto fn_nu = [&](double v) { return inv_link_jet({f, v}, z).fn; };
          auto fzz_nu = [&](double v) { return inv_link_jet({f, v}, z).fzz; };
          CHECK(rel_err(j.fn, oracle::fd_central(f_nu, nu)) < 1e-5);
          CHECK(rel_err(j.fnz, oracle::fd_central(fz_nu, nu)) < 1e-5);
          CHECK(rel_err(j.fnn, oracle::fd_central(fn_nu, nu)) < 1e-5);
          CHECK(rel_err(j.fnzz, oracle::fd_central(fzz_nu, nu)) < 1e-5);
          auto fnz_nu = [&](double v) { return inv_link_jet({f, v}, z).fnz; };
          CHECK(rel_err(j.fnnz, oracle::fd_central(fnz_nu, nu)) < 1e-5);
        }
      }
    }
  }
}

TEST_CASE("mean-direction jets match finite differences") {
  for (LinkFamily f : kAllFamilies) {
    for (double nu : nu_values(f)) {
      LinkSpec link{f, nu};
      std::vector<double> mus = is_cdf_link(f)
                                    ? std::vector<double>{0.07, 0.35, 0.62, 0.93}
                                    : std::vector<double>{0.2, 0.8, 1.7, 4.2};
      for (double mu : mus) {
        CAPTURE(to_string(f));
        CAPTURE(nu);
        CAPTURE(mu);
        WJet j = link_jet(link, mu);
        auto g = [&](double m) { return link_jet(link, m).g; };
        CHECK(rel_err(j.gw, oracle::fd_central(g, mu, 1e-7)) < 1e-5);
        if (link_has_nu(f) && !(nu == 0.0 && f != LinkFamily::gev &&
                                f != LinkFamily::boxcox)) {
          auto g_nu = [&](double v) { return link_jet({f, v}, mu).g; };
          auto gn_nu = [&](double v) { return link_jet({f, v}, mu).gn; };
          auto gw_nu = [&](double v) { return link_jet({f, v}, mu).gw; };
          auto gnw_nu = [&](double v) { return link_jet({f, v}, mu).gnw; };
          CHECK(rel_err(j.gn, oracle::fd_central(g_nu, nu)) < 1e-5);
          CHECK(rel_err(j.gnn, oracle::fd_central(gn_nu, nu)) < 1e-5);
          CHECK(rel_err(j.gnw, oracle::fd_central(gw_nu, nu)) < 1e-5);
          CHECK(rel_err(j.gnnw, oracle::fd_central(gnw_nu, nu)) < 1e-5);
        }
      }
    }
  }
}

TEST_CASE("transform plans") {
  // robit general plan picks the Wallace auxiliary family
  TransformPlan p = make_plan(LinkFamily::robit, PlanKind::general_reparam);
  CHECK(p.aux_family == LinkFamily::wallace_robit);
  CHECK(p.uses_aux());

  // Poisson Box-Cox rule: modified transform where y = 0
  std::vector<double> y = {0.0, 3.0, 0.0, 12.0};
  TransformPlan bc = make_plan(LinkFamily::boxcox, PlanKind::general_reparam, y);
  CHECK(bc.per_site[0] == SiteTransform::auxiliary);
  CHECK(bc.per_site[1] == SiteTransform::inverse_link);
  CHECK(bc.per_site[2] == SiteTransform::auxiliary);
  CHECK(bc.per_site[3] == SiteTransform::inverse_link);
  CHECK(bc.aux_family == LinkFamily::modified_boxcox);

  // mu reparameterization refuses non-onto links
  CHECK_THROWS_AS(make_plan(LinkFamily::boxcox, PlanKind::mu_reparam), ConfigError);

  // forward/back round trip through a mixed plan
  LinkSpec model_link{LinkFamily::modified_boxcox, 0.8};
  TransformPlan mixed =
      make_plan(LinkFamily::modified_boxcox, PlanKind::general_reparam, y);
  Vec z(4);
  z << -0.7, 0.3, 1.4, -1.1;
  Vec w = forward_transform(mixed, model_link, z);
  Vec z2 = back_transform(mixed, model_link, w);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(z2[i] - z[i]) < 1e-10);
}
