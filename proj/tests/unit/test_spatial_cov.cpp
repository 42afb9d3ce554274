#include <doctest.h>

#include "oracles.hpp"
#include "sglmm/spatial_cov.hpp"

using namespace sglmm;

namespace {

Mat random_locations(int n, Rng& rng, double scale = 1.0) {
  Mat loc(n, 2);
  for (int i = 0; i < n; ++i) {
    loc(i, 0) = scale * rng.uniform();
    loc(i, 1) = scale * rng.uniform();
  }
  return loc;
}

const std::vector<CorrSpec> kSpecs = {
    {CorrFamily::exponential, 0.5, 0},
    {CorrFamily::gaussian, 0.7, 0},
    {CorrFamily::spherical, 1.2, 0},
    {CorrFamily::matern, 0.8, 1.3},
    {CorrFamily::matern, 2.0, 0.5},
    {CorrFamily::exp_power, 0.6, 1.4},
};

}  // namespace

TEST_CASE("correlation values at pinned points") {
  CHECK(corr_eval({CorrFamily::exponential, 0.5, 0}, 0.5) ==
        doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(corr_eval({CorrFamily::spherical, 1.0, 0}, 1.5) == 0.0);
  CHECK(corr_eval({CorrFamily::matern, 2.0, 0.5}, 1.0) ==
        doctest::Approx(std::exp(-0.5)).epsilon(1e-10));
  CHECK(corr_eval({CorrFamily::exponential, 0.5, 0}, 0.0) == 1.0);
}

TEST_CASE("parameter validation") {
  CHECK_THROWS_AS(corr_eval({CorrFamily::exp_power, 1.0, 2.5}, 0.5), DomainError);
  CHECK_THROWS_AS(corr_eval({CorrFamily::matern, 1.0, -1.0}, 0.5), DomainError);
  CHECK_THROWS_AS(corr_eval({CorrFamily::exponential, -1.0, 0}, 0.5), DomainError);
}

TEST_CASE("correlations decrease with distance") {
  for (const auto& spec : kSpecs) {
    double prev = 1.0 + 1e-12;
    for (double d = 0.0; d <= 3.0; d += 0.05) {
      const double rho = corr_eval(spec, d);
      CHECK(rho <= prev + 1e-12);
      CHECK(rho <= 1.0);
      CHECK(rho >= 0.0);
      prev = rho;
    }
  }
}

TEST_CASE("build_cov basics") {
  Mat loc1(1, 2);
  loc1 << 0.3, 0.4;
  CovMatrices one = build_cov(loc1, {{CorrFamily::exponential, 1.0, 0}, 0.25, 1.0});
  CHECK(one.R_plus(0, 0) == doctest::Approx(1.25));

  Mat dup(2, 2);
  dup << 0.1, 0.1, 0.1, 0.1;
  CHECK_THROWS_AS(build_cov(dup, {{CorrFamily::exponential, 1.0, 0}, 0.0, 1.0}),
                  SingularCovarianceError);
  // a nugget rescues coincident locations
  CHECK_NOTHROW(build_cov(dup, {{CorrFamily::exponential, 1.0, 0}, 0.5, 1.0}));

  Rng rng(11);
  Mat loc = random_locations(3, rng);
  CovMatrices cm = build_cov(loc, {{CorrFamily::exponential, 1.0, 0}, 0.5, 1.0});
  Mat recon = cm.chol.L * cm.chol.L.transpose();
  CHECK((recon - cm.R_plus).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((cm.R_plus - cm.R_plus.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("log determinant agrees with a dense oracle") {
  Rng rng(12);
  for (int n : {2, 5, 10}) {
    Mat loc = random_locations(n, rng);
    for (const auto& spec : kSpecs) {
      CovMatrices cm = build_cov(loc, {spec, 0.3, 1.0});
      const double dense = std::log(cm.R_plus.determinant());
      CHECK(std::abs(cm.chol.log_det - dense) <
            1e-8 * std::max(1.0, std::abs(dense)));
      Eigen::SelfAdjointEigenSolver<Mat> es(cm.R_plus);
      CHECK(es.eigenvalues().minCoeff() > -1e-10);
    }
  }
}

TEST_CASE("reduced precision T") {
  // vanishing prior variance: T -> R^{-1}
  Rng rng(13);
  Mat loc = random_locations(4, rng);
  Mat X = Mat::Ones(4, 1);
  CovParams cov{{CorrFamily::exponential, 0.7, 0}, 0.2, 1.0};
  CovMatrices cm = build_cov(loc, cov);
  Mat T_eps = reduced_precision(loc, cov, X, 1e-12 * Mat::Identity(1, 1));
  CHECK((T_eps - cm.chol.inverse()).cwiseAbs().maxCoeff() < 1e-8);

  // n = 2 hand algebra: X = (1,1)', R = I, V_b = [1]
  Mat loc2(2, 2);
  loc2 << 0.0, 0.0, 100.0, 0.0;  // far apart: R is the identity under spherical
  Mat X2 = Mat::Ones(2, 1);
  Mat T2 = reduced_precision(loc2, {{CorrFamily::spherical, 1.0, 0}, 0.0, 1.0}, X2,
                             Mat::Identity(1, 1));
  Mat expect = Mat::Identity(2, 2) - Mat::Ones(2, 2) / 3.0;
  CHECK((T2 - expect).cwiseAbs().maxCoeff() < 1e-12);

  // symmetric, and it equals the inverse of R + X V_b X'
  for (int n : {2, 3, 4}) {
    Mat locn = random_locations(n, rng);
    Mat Xn(n, 2);
    Xn.col(0).setOnes();
    for (int i = 0; i < n; ++i) Xn(i, 1) = rng.normal();
    Mat Vb(2, 2);
    Vb << 2.0, 0.3, 0.3, 1.5;
    CovMatrices cmn = build_cov(locn, cov);
    Mat T = reduced_precision_from(cmn.chol, Xn, Vb);
    CHECK((T - T.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    Mat Sigma = cmn.R_plus + Xn * Vb * Xn.transpose();
    Mat Sigma_inv = Sigma.inverse();
    CHECK((T - Sigma_inv).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(std::abs(reduced_precision_logdet(cmn.chol, Xn, Vb) +
                   std::log(Sigma.determinant())) < 1e-8);
  }
}

TEST_CASE("covariance derivatives match finite differences") {
  Rng rng(14);
  Mat loc = random_locations(4, rng);
  for (const auto& spec : kSpecs) {
    auto R_of = [&](double phi, double kappa, double omega) {
      CorrSpec s = spec;
      s.phi = phi;
      s.kappa = kappa;
      return build_corr_matrix(loc, s, omega);
    };
    const double h = 1e-6;
    Mat dphi = cov_matrix_derivative(loc, spec, CovComponent::phi);
    Mat fd = (R_of(spec.phi + h, spec.kappa, 0.1) - R_of(spec.phi - h, spec.kappa, 0.1)) /
             (2 * h);
    CHECK((dphi - fd).cwiseAbs().maxCoeff() < 1e-6);

    Mat domega = cov_matrix_derivative(loc, spec, CovComponent::omega);
    CHECK((domega - Mat::Identity(4, 4)).cwiseAbs().maxCoeff() == 0.0);

    Mat dphi2 = cov_matrix_second_derivative(loc, spec, CovComponent::phi,
                                             CovComponent::phi);
    Mat fd2 = (R_of(spec.phi + h, spec.kappa, 0.1) - 2 * R_of(spec.phi, spec.kappa, 0.1) +
               R_of(spec.phi - h, spec.kappa, 0.1)) /
              (h * h);
    CHECK((dphi2 - fd2).cwiseAbs().maxCoeff() < 1e-3);

    if (corr_has_kappa(spec.family)) {
      const double hk = 1e-5;
      Mat dk = cov_matrix_derivative(loc, spec, CovComponent::kappa);
      Mat fdk =
          (R_of(spec.phi, spec.kappa + hk, 0.1) - R_of(spec.phi, spec.kappa - hk, 0.1)) /
          (2 * hk);
      CHECK((dk - fdk).cwiseAbs().maxCoeff() < 1e-6);
      Mat dpk = cov_matrix_second_derivative(loc, spec, CovComponent::phi,
                                             CovComponent::kappa);
      Mat fdpk = (cov_matrix_derivative(loc, {spec.family, spec.phi, spec.kappa + hk},
                                        CovComponent::phi) -
                  cov_matrix_derivative(loc, {spec.family, spec.phi, spec.kappa - hk},
                                        CovComponent::phi)) /
                 (2 * hk);
      CHECK((dpk - fdpk).cwiseAbs().maxCoeff() < 1e-5);
    }
  }
}
