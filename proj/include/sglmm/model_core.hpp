#ifndef SGLMM_MODEL_CORE_HPP
#define SGLMM_MODEL_CORE_HPP

#include <string>
#include <vector>

#include "sglmm/common.hpp"
#include "sglmm/links.hpp"
#include "sglmm/spatial_cov.hpp"

namespace sglmm {

enum class ResponseKind { binomial, poisson };

ResponseKind response_from_string(const std::string& s);
std::string to_string(ResponseKind k);

// Exponential-family pieces as functions of the mean; dispersion chi = 1.
double cumulant_kpp(ResponseKind kind, double mu);   // K''(gamma)
double cumulant_kppp(ResponseKind kind, double mu);  // K'''(gamma)

struct Prior {
  Vec m_b;
  Mat V_b;
  double n_sigma = 1.0;
  double a_sigma = 1.0;

  void validate() const;
};

enum class XiName { nu, phi, kappa, omega };
std::string to_string(XiName n);

struct XiComponent {
  bool estimated = false;
  double value = std::numeric_limits<double>::quiet_NaN();  // fixed value / init
  double lo = std::numeric_limits<double>::quiet_NaN();
  double hi = std::numeric_limits<double>::quiet_NaN();
};

// A concrete parameter point xi = (nu, phi, kappa, omega).
struct XiPoint {
  double nu = std::numeric_limits<double>::quiet_NaN();
  double phi = std::numeric_limits<double>::quiet_NaN();
  double kappa = std::numeric_limits<double>::quiet_NaN();
  double omega = 0.0;

  double get(XiName n) const;
  void set(XiName n, double v);
};

struct ModelSpec {
  ResponseKind response = ResponseKind::binomial;
  LinkFamily link = LinkFamily::logit;
  CorrFamily corr = CorrFamily::exponential;
  Prior prior;
  XiComponent nu, phi, kappa, omega;

  void validate() const;
  std::vector<XiName> estimated_components() const;
  XiPoint base_point() const;  // all components at their stored values
  LinkSpec link_spec(const XiPoint& xi) const { return {link, xi.nu}; }
  CorrSpec corr_spec(const XiPoint& xi) const { return {corr, xi.phi, xi.kappa}; }
  CovParams cov_params(const XiPoint& xi, double sigma2 = 1.0) const {
    return {corr_spec(xi), xi.omega, sigma2};
  }
};

struct Dataset {
  Mat locations;  // n x 2
  Vec y;
  Vec t;  // trials (binomial) or exposure (poisson)
  Mat X;  // n x p design

  Eigen::Index n() const { return y.size(); }
  Eigen::Index p() const { return X.cols(); }
  void validate(ResponseKind kind) const;
};

// sum_i log p[y_i | mu_i]; -inf sentinel on boundary-incompatible points.
double log_obs_density(ResponseKind kind, const Vec& y, const Vec& t, const Vec& mu);
double log_obs_density_site(ResponseKind kind, double y, double t, double mu);

// Gaussian log density of z with mean X beta and covariance sigma2 * R_plus.
double log_latent_density(const Vec& z, const Vec& beta, double sigma2,
                          const CholFactor& cholR, const Mat& X);

// log N(beta; m_b, sigma2 V_b) + log ScInvChi2(sigma2; n_sigma, a_sigma)
double log_prior_psi(const Vec& beta, double sigma2, const Prior& prior);
double log_scaled_inv_chisq(double sigma2, double n_sigma, double a_sigma);

// State after pushing a w-sample back through the transform plan at a given nu.
struct TransformedState {
  Vec z;
  Vec mu;
  double log_jac = 0.0;
  bool mu_boundary = false;  // some mu at a non-invertible boundary
};

TransformedState apply_plan(const ModelSpec& model, const TransformPlan& plan,
                            double nu, const Vec& w);

// log q_xi(psi, w) = log p[y|mu] + log p[z = g(w)|psi, xi] + log Jbar(w).
// The prior on psi cancels from every ratio the estimators form, so it is
// not part of q.
double log_q(const ModelSpec& model, const Dataset& data, const TransformPlan& plan,
             const XiPoint& xi, const CholFactor& cholR, const Vec& beta,
             double sigma2, const Vec& w);

}  // namespace sglmm

#endif
