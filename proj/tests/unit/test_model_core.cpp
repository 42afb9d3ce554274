#include <doctest.h>

#include "oracles.hpp"
#include "sglmm/numeric.hpp"

using namespace sglmm;

namespace {

Dataset one_site_dataset(double y, double t) {
  Dataset d;
  d.locations = Mat::Zero(1, 2);
  d.y = Vec::Constant(1, y);
  d.t = Vec::Constant(1, t);
  d.X = Mat::Ones(1, 1);
  return d;
}

Prior unit_prior(double vb = 1.0) {
  Prior p;
  p.m_b = Vec::Zero(1);
  p.V_b = Mat::Constant(1, 1, vb);
  p.n_sigma = 1.0;
  p.a_sigma = 1.0;
  return p;
}

}  // namespace

TEST_CASE("observation log density at pinned points") {
  Vec y(1), t(1), mu(1);
  y << 0;
  t << 1;
  mu << 1;
  CHECK(log_obs_density(ResponseKind::poisson, y, t, mu) ==
        doctest::Approx(-1.0).epsilon(1e-14));
  y << 1;
  mu << 0.5;
  CHECK(log_obs_density(ResponseKind::binomial, y, t, mu) ==
        doctest::Approx(std::log(0.5)).epsilon(1e-14));
  y << 2;
  mu << 1;
  CHECK(log_obs_density(ResponseKind::poisson, y, t, mu) ==
        doctest::Approx(-1.0 - std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("boundary cases return the -inf sentinel deterministically") {
  CHECK(log_obs_density_site(ResponseKind::poisson, 3, 1, 0.0) == neg_inf);
  CHECK(log_obs_density_site(ResponseKind::poisson, 0, 1, 0.0) == 0.0);
  CHECK(log_obs_density_site(ResponseKind::poisson, 2, 1, pos_inf) == neg_inf);
  CHECK(log_obs_density_site(ResponseKind::binomial, 1, 3, 0.0) == neg_inf);
  CHECK(log_obs_density_site(ResponseKind::binomial, 0, 3, 0.0) == 0.0);
  CHECK(log_obs_density_site(ResponseKind::binomial, 3, 3, 1.0) == 0.0);
  CHECK(log_obs_density_site(ResponseKind::binomial, 2, 3, 1.0) == neg_inf);
}

TEST_CASE("latent Gaussian log density") {
  // n = 1 standard normal at zero
  Mat loc = Mat::Zero(1, 2);
  CovMatrices cm = build_cov(loc, {{CorrFamily::exponential, 1.0, 0}, 0.0, 1.0});
  Vec z = Vec::Zero(1), beta = Vec::Zero(1);
  Mat X = Mat::Ones(1, 1);
  CHECK(log_latent_density(z, beta, 1.0, cm.chol, X) ==
        doctest::Approx(-0.5 * std::log(2.0 * M_PI)).epsilon(1e-14));

  // two independent sites under a short-range spherical correlation
  Mat loc2(2, 2);
  loc2 << 0, 0, 10, 0;
  CovMatrices cm2 = build_cov(loc2, {{CorrFamily::spherical, 1.0, 0}, 0.0, 1.0});
  Vec z2 = Vec::Zero(2);
  Mat X2 = Mat::Ones(2, 1);
  CHECK(log_latent_density(z2, beta, 1.0, cm2.chol, X2) ==
        doctest::Approx(-std::log(2.0 * M_PI)).epsilon(1e-14));

  // n = 3 random instance against the dense-matrix oracle
  Rng rng(5);
  Mat loc3(3, 2);
  for (int i = 0; i < 3; ++i) {
    loc3(i, 0) = rng.uniform();
    loc3(i, 1) = rng.uniform();
  }
  CovMatrices cm3 = build_cov(loc3, {{CorrFamily::exponential, 0.6, 0}, 0.3, 1.0});
  Vec z3(3), b3(1);
  z3 << 0.4, -1.2, 0.7;
  b3 << 0.5;
  Mat X3 = Mat::Ones(3, 1);
  const double sigma2 = 1.7;
  const Vec r = z3 - X3 * b3;
  Mat Sigma = sigma2 * cm3.R_plus;
  const double dense = -0.5 * r.dot(Sigma.inverse() * r) -
                       0.5 * std::log(Sigma.determinant()) -
                       1.5 * std::log(2.0 * M_PI);
  CHECK(log_latent_density(z3, b3, sigma2, cm3.chol, X3) ==
        doctest::Approx(dense).epsilon(1e-10));
}

TEST_CASE("psi prior density") {
  Prior prior = unit_prior();
  Vec beta = Vec::Zero(1);
  const double normal_part = log_prior_psi(beta, 1.0, prior) -
                             log_scaled_inv_chisq(1.0, 1.0, 1.0);
  CHECK(normal_part == doctest::Approx(-0.5 * std::log(2.0 * M_PI)).epsilon(1e-12));
  CHECK_THROWS_AS(log_prior_psi(beta, -1.0, prior), DomainError);

  // ScInv-chi2 normalization against quadrature (heavy right tail in sigma2)
  const double mass = adaptive_simpson(
      [&](double v) { return std::exp(log_scaled_inv_chisq(std::exp(v), 1.0, 1.0) + v); },
      -22.0, 60.0, 1e-12);
  CHECK(std::abs(mass - 1.0) < 1e-8);

  // the joint (beta, sigma2) prior integrates to 1; beta scaled by sigma
  const double joint = adaptive_simpson(
      [&](double v) {
        const double s2 = std::exp(v);
        const double s = std::sqrt(s2);
        return adaptive_simpson(
                   [&](double u) {
                     Vec bb = Vec::Constant(1, u * s);
                     return std::exp(log_prior_psi(bb, s2, prior)) * s;
                   },
                   -14.0, 14.0, 1e-10) *
               s2;
      },
      -20.0, 56.0, 1e-9);
  CHECK(std::abs(joint - 1.0) < 1e-3);
}

TEST_CASE("log_q equals obs + latent under the identity plan") {
  ModelSpec model;
  model.response = ResponseKind::poisson;
  model.link = LinkFamily::log_link;
  model.corr = CorrFamily::exponential;
  model.prior = unit_prior();
  model.phi.value = 1.0;
  Dataset data = one_site_dataset(2, 1);
  XiPoint xi = model.base_point();
  CovMatrices cm = build_cov(data.locations, model.cov_params(xi));
  TransformPlan id = make_plan(model.link, PlanKind::identity);
  Vec beta = Vec::Constant(1, 0.3), w = Vec::Constant(1, 0.8);
  const double q = log_q(model, data, id, xi, cm.chol, beta, 1.4, w);
  Vec mu = Vec::Constant(1, std::exp(0.8));
  const double direct = log_obs_density(model.response, data.y, data.t, mu) +
                        log_latent_density(w, beta, 1.4, cm.chol, data.X);
  CHECK(q == direct);  // exact identity, zero Jacobian
}

TEST_CASE("log_q under the mean plan matches hand algebra") {
  // Poisson log link, n = 1: log q(w = mu) = log p[z = log mu | psi]
  //   - log mu + y log mu - t mu - log y!
  ModelSpec model;
  model.response = ResponseKind::poisson;
  model.link = LinkFamily::log_link;
  model.corr = CorrFamily::exponential;
  model.prior = unit_prior();
  model.phi.value = 1.0;
  Dataset data = one_site_dataset(3, 2);
  XiPoint xi = model.base_point();
  CovMatrices cm = build_cov(data.locations, model.cov_params(xi));
  TransformPlan mu_plan = make_plan(model.link, PlanKind::mu_reparam);
  Vec beta = Vec::Constant(1, 0.1);
  const double mu = 1.7, sigma2 = 0.9;
  Vec w = Vec::Constant(1, mu);
  const double q = log_q(model, data, mu_plan, xi, cm.chol, beta, sigma2, w);
  Vec zvec = Vec::Constant(1, std::log(mu));
  const double expect = log_latent_density(zvec, beta, sigma2, cm.chol, data.X) -
                        std::log(mu) + data.y[0] * std::log(data.t[0] * mu) -
                        data.t[0] * mu - std::lgamma(data.y[0] + 1.0);
  CHECK(q == doctest::Approx(expect).epsilon(1e-13));

  // plans on the same underlying state differ by exactly the log Jacobian
  TransformPlan id = make_plan(model.link, PlanKind::identity);
  const double q_id = log_q(model, data, id, xi, cm.chol, beta, sigma2, zvec);
  const double jac = log_jacobian(model.link_spec(xi), mu_plan, w);
  CHECK(q - q_id == doctest::Approx(jac).epsilon(1e-13));
}

TEST_CASE("change of variables preserves the marginal (n = 1 quadrature)") {
  ModelSpec model;
  model.response = ResponseKind::binomial;
  model.link = LinkFamily::wallace_robit;
  model.nu.value = 2.0;
  model.corr = CorrFamily::exponential;
  model.prior = unit_prior();
  model.phi.value = 1.0;
  Dataset data = one_site_dataset(4, 10);
  XiPoint xi = model.base_point();
  CovMatrices cm = build_cov(data.locations, model.cov_params(xi));
  Vec beta = Vec::Constant(1, -0.2);
  const double sigma2 = 1.3;

  TransformPlan id = make_plan(model.link, PlanKind::identity);
  TransformPlan mu_plan = make_plan(model.link, PlanKind::mu_reparam);
  const double m_z = adaptive_simpson(
      [&](double z) {
        Vec zz = Vec::Constant(1, z);
        return std::exp(log_q(model, data, id, xi, cm.chol, beta, sigma2, zz));
      },
      -12.0, 12.0, 1e-12);
  const double m_w = adaptive_simpson(
      [&](double w) {
        Vec ww = Vec::Constant(1, w);
        return std::exp(log_q(model, data, mu_plan, xi, cm.chol, beta, sigma2, ww));
      },
      1e-9, 1.0 - 1e-9, 1e-12);
  CHECK(std::abs(m_z - m_w) < 1e-6 * std::abs(m_z));
}

TEST_CASE("dataset validation") {
  Dataset d = one_site_dataset(2, 1);
  CHECK_NOTHROW(d.validate(ResponseKind::poisson));
  d.y[0] = -1;
  CHECK_THROWS_AS(d.validate(ResponseKind::poisson), DataError);
  d.y[0] = 2;
  CHECK_THROWS_AS(d.validate(ResponseKind::binomial), DataError);  // y > t
  Dataset b = one_site_dataset(1, 2);
  CHECK_NOTHROW(b.validate(ResponseKind::binomial));
  b.t[0] = 2.5;
  CHECK_THROWS_AS(b.validate(ResponseKind::binomial), DataError);
}

TEST_CASE("model validation") {
  ModelSpec m;
  m.response = ResponseKind::binomial;
  m.link = LinkFamily::log_link;
  m.corr = CorrFamily::exponential;
  m.prior = unit_prior();
  m.phi.value = 1.0;
  CHECK_THROWS_AS(m.validate(), ConfigError);  // binomial needs a (0,1) link
  m.link = LinkFamily::probit;
  CHECK_NOTHROW(m.validate());
  m.nu.estimated = true;
  m.nu.lo = 0.1;
  m.nu.hi = 2.0;
  CHECK_THROWS_AS(m.validate(), ConfigError);  // probit has no nu
}
