#include "oracles.hpp"

#include <cmath>

#include "sglmm/numeric.hpp"

namespace sglmm::oracle {

double fd_central(const std::function<double(double)>& f, double x, double h) {
  const double step = h * std::max(1.0, std::abs(x));
  return (f(x + step) - f(x - step)) / (2.0 * step);
}

double fd_second(const std::function<double(double)>& f, double x, double h) {
  const double step = h * std::max(1.0, std::abs(x));
  return (f(x + step) - 2.0 * f(x) + f(x - step)) / (step * step);
}

double t_cdf_by_quadrature(double nu, double z) {
  const double c = std::exp(std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu)) /
                   std::sqrt(nu * M_PI);
  auto pdf = [&](double x) {
    return c * std::pow(1.0 + x * x / nu, -0.5 * (nu + 1.0));
  };
  const double za = std::min(std::abs(z), 1e6);
  const double tail = adaptive_simpson(pdf, 0.0, za, 1e-13);
  return z >= 0.0 ? 0.5 + tail : 0.5 - tail;
}

namespace {

// joint density over (u in standard-normal coords, v = log sigma2)
struct MarginalIntegrand {
  const ModelSpec& model;
  const Dataset& data;
  const XiPoint& xi;
  Mat Lsig;  // chol of R_plus + X V_b X'
  Vec mean;  // X m_b

  double log_value(const Vec& u, double v) const {
    const double sigma2 = std::exp(v);
    const Vec z = mean + std::sqrt(sigma2) * (Lsig * u);
    const LinkSpec link = model.link_spec(xi);
    Vec mu(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) mu[i] = inv_link_jet(link, z[i]).f;
    double lp = log_obs_density(model.response, data.y, data.t, mu);
    if (lp == neg_inf) return neg_inf;
    for (Eigen::Index i = 0; i < u.size(); ++i)
      lp += -0.5 * u[i] * u[i] - 0.5 * std::log(2.0 * M_PI);
    // prior on sigma2 plus the log-scale Jacobian
    lp += log_scaled_inv_chisq(sigma2, model.prior.n_sigma, model.prior.a_sigma) + v;
    return lp;
  }
};

}  // namespace

double log_marginal_quadrature(const ModelSpec& model, const Dataset& data,
                               const XiPoint& xi) {
  const Eigen::Index n = data.n();
  if (n > 2) throw NumericError("quadrature oracle supports n <= 2 only");
  CovMatrices cov = build_cov(data.locations, model.cov_params(xi));
  Mat Sigma = cov.R_plus + data.X * model.prior.V_b * data.X.transpose();
  Eigen::LLT<Mat> llt(Sigma);
  MarginalIntegrand I{model, data, xi, Mat(llt.matrixL()), data.X * model.prior.m_b};

  // scale from a coarse scan
  double M = neg_inf;
  for (double v = -10.0; v <= 10.0; v += 1.0)
    for (double u1 = -6.0; u1 <= 6.0; u1 += 1.0) {
      if (n == 1) {
        Vec u(1);
        u[0] = u1;
        M = std::max(M, I.log_value(u, v));
      } else {
        for (double u2 = -6.0; u2 <= 6.0; u2 += 1.0) {
          Vec u(2);
          u << u1, u2;
          M = std::max(M, I.log_value(u, v));
        }
      }
    }
  if (M == neg_inf) return neg_inf;

  auto inner_z = [&](double v) {
    if (n == 1) {
      return adaptive_simpson(
          [&](double u1) {
            Vec u(1);
            u[0] = u1;
            const double l = I.log_value(u, v);
            return l == neg_inf ? 0.0 : std::exp(l - M);
          },
          -9.0, 9.0, 1e-11, 28);
    }
    return adaptive_simpson(
        [&](double u1) {
          return adaptive_simpson(
              [&](double u2) {
                Vec u(2);
                u << u1, u2;
                const double l = I.log_value(u, v);
                return l == neg_inf ? 0.0 : std::exp(l - M);
              },
              -9.0, 9.0, 1e-9, 22);
        },
        -9.0, 9.0, 1e-9, 22);
  };
  const double val = adaptive_simpson(inner_z, -14.0, 14.0, 1e-9, 24);
  return M + std::log(val);
}

Moments z_posterior_moments_1d(const ModelSpec& model, const Dataset& data,
                               const XiPoint& xi, double beta, double sigma2) {
  const double m0 = data.X(0, 0) * beta;
  const double sd = std::sqrt(sigma2 * (1.0 + xi.omega));
  const LinkSpec link = model.link_spec(xi);
  auto dens = [&](double z) {
    const double mu = inv_link_jet(link, z).f;
    const double lp = log_obs_density_site(model.response, data.y[0], data.t[0], mu) -
                      0.5 * (z - m0) * (z - m0) / (sd * sd);
    return lp == neg_inf ? 0.0 : std::exp(lp);
  };
  const double lo = m0 - 14.0 * sd, hi = m0 + 14.0 * sd;
  const double Z = adaptive_simpson(dens, lo, hi, 1e-13);
  const double m1 =
      adaptive_simpson([&](double z) { return z * dens(z); }, lo, hi, 1e-13) / Z;
  const double m2 =
      adaptive_simpson([&](double z) { return z * z * dens(z); }, lo, hi, 1e-13) / Z;
  return {m1, m2 - m1 * m1};
}

}  // namespace sglmm::oracle
