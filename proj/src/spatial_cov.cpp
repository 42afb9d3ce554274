#include "sglmm/spatial_cov.hpp"

#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace sglmm {

namespace {

double dist2(const Mat& loc, Eigen::Index i, Eigen::Index j) {
  double dx = loc(i, 0) - loc(j, 0);
  double dy = loc(i, 1) - loc(j, 1);
  return std::sqrt(dx * dx + dy * dy);
}

double matern_rho(double u, double kappa) {
  if (u < 1e-12) return 1.0;
  const double c = std::pow(2.0, 1.0 - kappa) / boost::math::tgamma(kappa);
  return c * std::pow(u, kappa) * boost::math::cyl_bessel_k(kappa, u);
}

// d/du [u^k K_k(u)] = -u^k K_{k-1}(u)
double matern_rho_du(double u, double kappa) {
  if (u < 1e-12) return 0.0;
  const double c = std::pow(2.0, 1.0 - kappa) / boost::math::tgamma(kappa);
  return -c * std::pow(u, kappa) * boost::math::cyl_bessel_k(kappa - 1.0, u);
}

double matern_rho_duu(double u, double kappa) {
  if (u < 1e-12) return 0.0;
  const double c = std::pow(2.0, 1.0 - kappa) / boost::math::tgamma(kappa);
  const double km1 = boost::math::cyl_bessel_k(kappa - 1.0, u);
  const double kp = -0.5 * (boost::math::cyl_bessel_k(kappa - 2.0, u) +
                            boost::math::cyl_bessel_k(kappa, u));
  return -c * (kappa * std::pow(u, kappa - 1.0) * km1 + std::pow(u, kappa) * kp);
}

struct RhoDerivs {
  double d_phi = 0, d_phiphi = 0;
  double d_kappa = 0, d_kappakappa = 0, d_phikappa = 0;
};

// Matern kappa-derivatives have no elementary closed form; fourth-order
// central differences on corr_eval serve as the documented substitute.
double matern_kappa_fd(const CorrSpec& corr, double d, int order) {
  const double h = std::min(1e-3 * std::max(1.0, corr.kappa), 0.2 * corr.kappa);
  auto at = [&](double k) {
    CorrSpec c = corr;
    c.kappa = k;
    return corr_eval(c, d);
  };
  const double k = corr.kappa;
  if (order == 1)
    return (at(k - 2 * h) - 8 * at(k - h) + 8 * at(k + h) - at(k + 2 * h)) / (12 * h);
  return (-at(k - 2 * h) + 16 * at(k - h) - 30 * at(k) + 16 * at(k + h) -
          at(k + 2 * h)) /
         (12 * h * h);
}

double matern_phikappa_fd(const CorrSpec& corr, double d) {
  const double h = std::min(1e-3 * std::max(1.0, corr.kappa), 0.2 * corr.kappa);
  auto dphi_at = [&](double k) {
    CorrSpec c = corr;
    c.kappa = k;
    const double u = d / c.phi;
    return matern_rho_du(u, k) * (-u / c.phi);
  };
  const double k = corr.kappa;
  return (dphi_at(k - 2 * h) - 8 * dphi_at(k - h) + 8 * dphi_at(k + h) -
          dphi_at(k + 2 * h)) /
         (12 * h);
}

RhoDerivs rho_derivs(const CorrSpec& corr, double d) {
  RhoDerivs out;
  if (d <= 0.0) return out;
  const double phi = corr.phi;
  switch (corr.family) {
    case CorrFamily::exponential: {
      const double rho = std::exp(-d / phi);
      out.d_phi = rho * d / (phi * phi);
      out.d_phiphi = rho * (d * d / std::pow(phi, 4) - 2.0 * d / std::pow(phi, 3));
      break;
    }
    case CorrFamily::gaussian: {
      const double a = (d / phi) * (d / phi);
      const double rho = std::exp(-a);
      out.d_phi = rho * 2.0 * a / phi;
      out.d_phiphi = rho * (4.0 * a * a - 6.0 * a) / (phi * phi);
      break;
    }
    case CorrFamily::spherical: {
      const double r = d / phi;
      if (r >= 1.0) break;
      out.d_phi = 1.5 * r * (1.0 - r * r) / phi;
      out.d_phiphi = 3.0 * r * (2.0 * r * r - 1.0) / (phi * phi);
      break;
    }
    case CorrFamily::exp_power: {
      const double kap = corr.kappa;
      const double a = std::pow(d / phi, kap);
      const double rho = std::exp(-a);
      const double L = std::log(d / phi);
      out.d_phi = rho * kap * a / phi;
      out.d_phiphi = rho * kap * a * (kap * a - kap - 1.0) / (phi * phi);
      out.d_kappa = -rho * a * L;
      out.d_kappakappa = rho * a * L * L * (a - 1.0);
      out.d_phikappa = (rho * a / phi) * (1.0 + kap * L * (1.0 - a));
      break;
    }
    case CorrFamily::matern: {
      const double u = d / phi;
      const double du = matern_rho_du(u, corr.kappa);
      const double duu = matern_rho_duu(u, corr.kappa);
      out.d_phi = du * (-u / phi);
      out.d_phiphi = duu * u * u / (phi * phi) + du * 2.0 * u / (phi * phi);
      out.d_kappa = matern_kappa_fd(corr, d, 1);
      out.d_kappakappa = matern_kappa_fd(corr, d, 2);
      out.d_phikappa = matern_phikappa_fd(corr, d);
      break;
    }
  }
  return out;
}

}  // namespace

CorrFamily corr_family_from_string(const std::string& s) {
  if (s == "exponential") return CorrFamily::exponential;
  if (s == "gaussian") return CorrFamily::gaussian;
  if (s == "spherical") return CorrFamily::spherical;
  if (s == "matern") return CorrFamily::matern;
  if (s == "exp_power") return CorrFamily::exp_power;
  throw ConfigError("unknown correlation family: " + s);
}

std::string to_string(CorrFamily f) {
  switch (f) {
    case CorrFamily::exponential: return "exponential";
    case CorrFamily::gaussian: return "gaussian";
    case CorrFamily::spherical: return "spherical";
    case CorrFamily::matern: return "matern";
    case CorrFamily::exp_power: return "exp_power";
  }
  return "?";
}

bool corr_has_kappa(CorrFamily f) {
  return f == CorrFamily::matern || f == CorrFamily::exp_power;
}

void CorrSpec::validate() const {
  if (!(phi > 0.0) || !std::isfinite(phi))
    throw DomainError("correlation range phi must be positive");
  if (family == CorrFamily::matern && !(kappa > 0.0))
    throw DomainError("matern requires kappa > 0");
  if (family == CorrFamily::exp_power && !(kappa > 0.0 && kappa <= 2.0))
    throw DomainError("exp_power requires kappa in (0,2]");
}

double corr_eval(const CorrSpec& corr, double d) {
  corr.validate();
  if (d < 0.0 || !std::isfinite(d)) throw DomainError("distance must be finite and >= 0");
  if (d == 0.0) return 1.0;
  switch (corr.family) {
    case CorrFamily::exponential: return std::exp(-d / corr.phi);
    case CorrFamily::gaussian: {
      const double r = d / corr.phi;
      return std::exp(-r * r);
    }
    case CorrFamily::spherical: {
      const double r = d / corr.phi;
      if (r >= 1.0) return 0.0;
      return 1.0 - 1.5 * r + 0.5 * r * r * r;
    }
    case CorrFamily::matern: return matern_rho(d / corr.phi, corr.kappa);
    case CorrFamily::exp_power: return std::exp(-std::pow(d / corr.phi, corr.kappa));
  }
  return 0.0;
}

Vec CholFactor::solve(const Vec& b) const {
  Vec y = L.triangularView<Eigen::Lower>().solve(b);
  return L.transpose().triangularView<Eigen::Upper>().solve(y);
}

Mat CholFactor::solve(const Mat& B) const {
  Mat y = L.triangularView<Eigen::Lower>().solve(B);
  return L.transpose().triangularView<Eigen::Upper>().solve(y);
}

Mat CholFactor::inverse() const {
  Mat eye = Mat::Identity(L.rows(), L.cols());
  return solve(eye);
}

double CholFactor::quad(const Vec& v) const {
  Vec y = L.triangularView<Eigen::Lower>().solve(v);
  return y.squaredNorm();
}

Mat build_corr_matrix(const Mat& locations, const CorrSpec& corr, double omega) {
  corr.validate();
  if (!(omega >= 0.0)) throw DomainError("relative nugget omega must be >= 0");
  const Eigen::Index n = locations.rows();
  if (n < 1) throw DataError("need at least one location");
  Mat R(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    R(i, i) = 1.0 + omega;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = dist2(locations, i, j);
      if (!std::isfinite(d)) throw DataError("non-finite pairwise distance");
      double v = corr_eval(corr, d);
      if (d == 0.0) v += omega;  // coincident distinct sites share the nugget
      R(i, j) = v;
      R(j, i) = v;
    }
  }
  return R;
}

CholFactor cholesky_with_jitter(const Mat& R_plus) {
  const double mean_diag = R_plus.diagonal().mean();
  double jitter = 0.0;
  for (int attempt = 0; attempt < 6; ++attempt) {
    Mat A = R_plus;
    if (jitter > 0.0) A.diagonal().array() += jitter;
    Eigen::LLT<Mat> llt(A);
    if (llt.info() == Eigen::Success) {
      CholFactor out;
      out.L = llt.matrixL();
      out.jitter = jitter;
      out.log_det = 2.0 * out.L.diagonal().array().log().sum();
      return out;
    }
    jitter = (jitter == 0.0) ? 1e-10 * mean_diag : 10.0 * jitter;
    if (jitter > 1e-6 * mean_diag * 1.0000001) break;
  }
  throw SingularCovarianceError(
      "covariance factorization failed after jitter up to " + std::to_string(jitter),
      jitter);
}

CovMatrices build_cov(const Mat& locations, const CovParams& params) {
  if (params.omega == 0.0) {
    const Eigen::Index n = locations.rows();
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j)
        if (dist2(locations, i, j) == 0.0)
          throw SingularCovarianceError(
              "coincident locations with zero nugget give a singular covariance", 0.0);
  }
  CovMatrices out;
  out.R_plus = build_corr_matrix(locations, params.corr, params.omega);
  out.chol = cholesky_with_jitter(out.R_plus);
  return out;
}

Mat reduced_precision_from(const CholFactor& cholR, const Mat& X, const Mat& V_b) {
  Eigen::LLT<Mat> lltVb(V_b);
  if (lltVb.info() != Eigen::Success)
    throw NumericError("prior covariance V_b is not positive definite");
  const Mat RinvX = cholR.solve(X);
  Mat inner = lltVb.solve(Mat::Identity(V_b.rows(), V_b.cols()));
  inner += X.transpose() * RinvX;
  Eigen::LLT<Mat> lltInner(inner);
  if (lltInner.info() != Eigen::Success)
    throw NumericError("reduced precision inner matrix is not positive definite");
  Mat T = cholR.inverse() - RinvX * lltInner.solve(RinvX.transpose());
  return 0.5 * (T + T.transpose());
}

double reduced_precision_logdet(const CholFactor& cholR, const Mat& X, const Mat& V_b) {
  Eigen::LLT<Mat> lltVb(V_b);
  if (lltVb.info() != Eigen::Success)
    throw NumericError("prior covariance V_b is not positive definite");
  Mat Lvb = lltVb.matrixL();
  const double logdet_Vb = 2.0 * Lvb.diagonal().array().log().sum();
  Mat inner = lltVb.solve(Mat::Identity(V_b.rows(), V_b.cols()));
  inner += X.transpose() * cholR.solve(X);
  Eigen::LLT<Mat> lltInner(inner);
  if (lltInner.info() != Eigen::Success)
    throw NumericError("reduced precision inner matrix is not positive definite");
  Mat Li = lltInner.matrixL();
  const double logdet_inner = 2.0 * Li.diagonal().array().log().sum();
  return -(cholR.log_det + logdet_Vb + logdet_inner);
}

Mat reduced_precision(const Mat& locations, const CovParams& params, const Mat& X,
                      const Mat& V_b) {
  CovMatrices cov = build_cov(locations, params);
  return reduced_precision_from(cov.chol, X, V_b);
}

std::string to_string(CovComponent c) {
  switch (c) {
    case CovComponent::phi: return "phi";
    case CovComponent::kappa: return "kappa";
    case CovComponent::omega: return "omega";
  }
  return "?";
}

Mat cov_matrix_derivative(const Mat& locations, const CorrSpec& corr, CovComponent a) {
  const Eigen::Index n = locations.rows();
  Mat D = Mat::Zero(n, n);
  if (a == CovComponent::omega) {
    for (Eigen::Index i = 0; i < n; ++i) {
      D(i, i) = 1.0;
      for (Eigen::Index j = i + 1; j < n; ++j)
        if (dist2(locations, i, j) == 0.0) D(i, j) = D(j, i) = 1.0;
    }
    return D;
  }
  if (a == CovComponent::kappa && !corr_has_kappa(corr.family)) return D;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      RhoDerivs rd = rho_derivs(corr, dist2(locations, i, j));
      double v = (a == CovComponent::phi) ? rd.d_phi : rd.d_kappa;
      D(i, j) = D(j, i) = v;
    }
  return D;
}

Mat cov_matrix_second_derivative(const Mat& locations, const CorrSpec& corr,
                                 CovComponent a, CovComponent b) {
  const Eigen::Index n = locations.rows();
  Mat D = Mat::Zero(n, n);
  if (a == CovComponent::omega || b == CovComponent::omega) return D;
  if ((a == CovComponent::kappa || b == CovComponent::kappa) &&
      !corr_has_kappa(corr.family))
    return D;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      RhoDerivs rd = rho_derivs(corr, dist2(locations, i, j));
      double v;
      if (a == CovComponent::phi && b == CovComponent::phi) v = rd.d_phiphi;
      else if (a == CovComponent::kappa && b == CovComponent::kappa) v = rd.d_kappakappa;
      else v = rd.d_phikappa;
      D(i, j) = D(j, i) = v;
    }
  return D;
}

}  // namespace sglmm
