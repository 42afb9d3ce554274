#include "sglmm/predict.hpp"

#include <algorithm>

namespace sglmm {

Mat conditional_field(const ChainBundle& chain, const ModelSpec& model,
                      const Dataset& data, const Mat& new_locations,
                      const Mat& X_new, std::uint64_t seed, bool include_nugget) {
  const Eigen::Index n = data.n();
  const Eigen::Index m = new_locations.rows();
  const Eigen::Index L = chain.n_draws();
  if (X_new.rows() != m || X_new.cols() != data.p())
    throw DataError("prediction design matrix misaligned with grid");

  const CorrSpec corr = model.corr_spec(chain.xi);
  const double omega = chain.xi.omega;
  CovMatrices cov = build_cov(data.locations, model.cov_params(chain.xi));

  // cross-covariance (smooth field unless the nugget is requested)
  Mat C(n, m);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j) {
      const double dx = data.locations(i, 0) - new_locations(j, 0);
      const double dy = data.locations(i, 1) - new_locations(j, 1);
      const double d = std::sqrt(dx * dx + dy * dy);
      double v = corr_eval(corr, d);
      if (include_nugget && d == 0.0) v += omega;
      C(i, j) = v;
    }
  Mat R00(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    R00(i, i) = include_nugget ? 1.0 + omega : 1.0;
    for (Eigen::Index j = i + 1; j < m; ++j) {
      const double dx = new_locations(i, 0) - new_locations(j, 0);
      const double dy = new_locations(i, 1) - new_locations(j, 1);
      double v = corr_eval(corr, std::sqrt(dx * dx + dy * dy));
      if (include_nugget && dx == 0.0 && dy == 0.0) v += omega;
      R00(i, j) = R00(j, i) = v;
    }
  }

  const Mat W = cov.chol.solve(C);          // (R+wI)^{-1} C
  Mat cond_corr = R00 - C.transpose() * W;  // conditional correlation-scale cov
  cond_corr = 0.5 * (cond_corr + cond_corr.transpose());
  // one factorization shared across draws (theta fixed at xi_hat)
  Eigen::LLT<Mat> llt(cond_corr +
                      1e-12 * Mat::Identity(m, m) * std::max(1.0, cond_corr.trace() / m));
  if (llt.info() != Eigen::Success)
    throw NumericError("conditional covariance factorization failed");
  Mat L0 = llt.matrixL();
  // remove the stabilization floor from exact-interpolation cases
  for (Eigen::Index j = 0; j < m; ++j)
    if (cond_corr(j, j) <= 0.0) L0.row(j).setZero();

  Rng rng(seed, 0x9e11, 0x77);
  Mat z0(m, L);
  Vec u(m);
  for (Eigen::Index l = 0; l < L; ++l) {
    const Vec resid = chain.z.col(l) - data.X * chain.beta.col(l);
    const Vec mean = X_new * chain.beta.col(l) + W.transpose() * resid;
    for (Eigen::Index j = 0; j < m; ++j) u[j] = rng.normal();
    z0.col(l) = mean + std::sqrt(chain.sigma2[l]) * (L0 * u);
  }
  return z0;
}

PredictionGrid predict_mu(const ChainBundle& chain, const ModelSpec& model,
                          const Dataset& data, const Mat& new_locations,
                          const Mat& X_new, std::uint64_t seed, bool include_nugget) {
  PredictionGrid grid;
  grid.locations = new_locations;
  const Mat z0 = conditional_field(chain, model, data, new_locations, X_new, seed,
                                   include_nugget);
  const Eigen::Index m = z0.rows(), L = z0.cols();
  grid.mu_draws.resize(m, L);
  const LinkSpec link = model.link_spec(chain.xi);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index l = 0; l < L; ++l) {
      const ZJet jet = inv_link_jet(link, z0(j, l));
      grid.mu_draws(j, l) = jet.f;  // boundary values stand as-is per family
    }
  grid.mean.resize(m);
  grid.sd.resize(m);
  grid.q05.resize(m);
  grid.q50.resize(m);
  grid.q95.resize(m);
  std::vector<double> buf(static_cast<std::size_t>(L));
  for (Eigen::Index j = 0; j < m; ++j) {
    const double mean = grid.mu_draws.row(j).mean();
    grid.mean[j] = mean;
    double s2 = 0.0;
    for (Eigen::Index l = 0; l < L; ++l) {
      const double dlt = grid.mu_draws(j, l) - mean;
      s2 += dlt * dlt;
      buf[static_cast<std::size_t>(l)] = grid.mu_draws(j, l);
    }
    grid.sd[j] = std::sqrt(s2 / std::max<Eigen::Index>(L - 1, 1));
    std::sort(buf.begin(), buf.end());
    auto quant = [&](double q) {
      const double pos = q * (L - 1);
      const Eigen::Index lo = static_cast<Eigen::Index>(std::floor(pos));
      const Eigen::Index hi = std::min(lo + 1, L - 1);
      const double frac = pos - lo;
      return buf[lo] * (1.0 - frac) + buf[hi] * frac;
    };
    grid.q05[j] = quant(0.05);
    grid.q50[j] = quant(0.50);
    grid.q95[j] = quant(0.95);
  }
  return grid;
}

CVScores score_predictions(ResponseKind kind, const Vec& y, const Vec& t,
                           const Mat& mu_draws) {
  const Eigen::Index n = y.size(), L = mu_draws.cols();
  if (mu_draws.rows() != n) throw DataError("prediction draws misaligned with data");
  CVScores out;
  out.site_neg_score = Vec::Zero(n);
  out.site_sq_err = Vec::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double ns = 0.0, se = 0.0;
    for (Eigen::Index l = 0; l < L; ++l) {
      const double mu = mu_draws(i, l);
      ns -= log_obs_density_site(kind, y[i], t[i], mu);
      const double e = y[i] - t[i] * mu;
      se += e * e;
    }
    out.site_neg_score[i] = ns / L;
    out.site_sq_err[i] = se / L;
  }
  out.neg_score = out.site_neg_score.sum();
  out.rmse = std::sqrt(out.site_sq_err.sum());
  return out;
}

}  // namespace sglmm
