#ifndef SGLMM_SPATIAL_COV_HPP
#define SGLMM_SPATIAL_COV_HPP

#include <string>

#include "sglmm/common.hpp"

namespace sglmm {

enum class CorrFamily { exponential, gaussian, spherical, matern, exp_power };

CorrFamily corr_family_from_string(const std::string& s);
std::string to_string(CorrFamily f);
bool corr_has_kappa(CorrFamily f);

struct CorrSpec {
  CorrFamily family = CorrFamily::exponential;
  double phi = 1.0;
  double kappa = std::numeric_limits<double>::quiet_NaN();

  void validate() const;
};

struct CovParams {
  CorrSpec corr;
  double omega = 0.0;   // relative nugget tau^2/sigma^2
  double sigma2 = 1.0;  // partial sill
};

double corr_eval(const CorrSpec& corr, double d);

struct CholFactor {
  Mat L;
  double jitter = 0.0;
  double log_det = 0.0;  // log|R_plus|

  Vec solve(const Vec& b) const;
  Mat solve(const Mat& B) const;
  Mat inverse() const;
  double quad(const Vec& v) const;  // v^T R^{-1} v
  Eigen::Index n() const { return L.rows(); }
};

// R_plus = R_theta + omega * I_{s_i = s_j}
Mat build_corr_matrix(const Mat& locations, const CorrSpec& corr, double omega);

// Jitter policy: on failure add 1e-10 * mean diagonal, escalate x10 up to
// 1e-6 * mean diagonal, then throw SingularCovarianceError.
CholFactor cholesky_with_jitter(const Mat& R_plus);

struct CovMatrices {
  Mat R_plus;
  CholFactor chol;
};
CovMatrices build_cov(const Mat& locations, const CovParams& params);

// T = R^{-1} - R^{-1} X (V_b^{-1} + X' R^{-1} X)^{-1} X' R^{-1}
Mat reduced_precision(const Mat& locations, const CovParams& params, const Mat& X,
                      const Mat& V_b);
Mat reduced_precision_from(const CholFactor& cholR, const Mat& X, const Mat& V_b);
// log|T| computed from the same factorizations (log|T| = -log|R + X V_b X'|)
double reduced_precision_logdet(const CholFactor& cholR, const Mat& X, const Mat& V_b);

enum class CovComponent { phi, kappa, omega };
std::string to_string(CovComponent c);

// Elementwise derivatives of R_plus with respect to a covariance component.
Mat cov_matrix_derivative(const Mat& locations, const CorrSpec& corr, CovComponent a);
Mat cov_matrix_second_derivative(const Mat& locations, const CorrSpec& corr,
                                 CovComponent a, CovComponent b);

}  // namespace sglmm

#endif
