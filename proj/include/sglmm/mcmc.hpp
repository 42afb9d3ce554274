#ifndef SGLMM_MCMC_HPP
#define SGLMM_MCMC_HPP

#include "sglmm/model_core.hpp"

namespace sglmm {

struct ChainConfig {
  int n_samples = 1000;
  int burn_in = 300;
  int thin = 1;
  std::uint64_t seed = 0;
  bool adapt_during_burnin = true;
  double stage1_fraction = 0.8;

  void validate() const {
    if (n_samples < 1 || burn_in < 0 || thin < 1)
      throw ConfigError("chain config needs n_samples >= 1, burn_in >= 0, thin >= 1");
  }
};

struct ChainBundle {
  XiPoint xi;
  Mat beta;    // p x N
  Vec sigma2;  // N
  Mat z;       // n x N
  Mat w;       // n x N when transformed
  bool has_w = false;
  int stage_split = 0;  // first stage-2 column
  Vec accept_rate;      // per site
  Vec proposal_sd;      // frozen after burn-in
  std::uint64_t seed = 0;

  Eigen::Index n_draws() const { return sigma2.size(); }
};

// Precomputed per-covariance quantities shared by the Gibbs updates.
struct GibbsContext {
  CholFactor cholR;
  Mat precision;  // R_plus^{-1}
  Mat X;
  Mat XtRinvX;
  Eigen::LLT<Mat> cholA;  // A = X'R^{-1}X + V_b^{-1}
  Mat Vb_inv;
  Vec Vbinv_mb;
  double mb_Vbinv_mb = 0.0;

  static GibbsContext make(const Mat& locations, const CovParams& cov, const Mat& X,
                           const Prior& prior);
};

// Exact conjugate draw from pi(beta, sigma2 | z, y).
std::pair<Vec, double> update_beta_sigma2(const Vec& z, const GibbsContext& ctx,
                                          const Prior& prior, Rng& rng);

// One full sweep of single-site random-walk MH on z; returns per-site accepts.
// state vectors are updated in place: v = z - X beta, s = R^{-1} v,
// obs_logp = per-site observation log density at z.
struct ZSweepState {
  Vec z, v, s, obs_logp;
};
int mh_update_z(ZSweepState& state, const GibbsContext& ctx, const ModelSpec& model,
                const Dataset& data, const XiPoint& xi, double sigma2,
                const Vec& proposal_sd, Rng& rng,
                std::vector<int>* site_accepts = nullptr);

ChainBundle run_chain(const ModelSpec& model, const Dataset& data, const XiPoint& xi,
                      const ChainConfig& config, std::uint64_t stream_a = 0,
                      std::uint64_t stream_b = 0);

// Adds the transformed field w = gbar^{-1}(z) columnwise.
ChainBundle transform_chain(ChainBundle bundle, const TransformPlan& plan,
                            const ModelSpec& model);

// Fully-Bayesian comparison sampler: priors on (phi, omega).
struct FbPrior {
  enum class Kind { uniform, reciprocal } kind = Kind::uniform;
  double phi_lo = 0.0, phi_hi = 1.0;
  double omega_lo = 0.0, omega_hi = 1.0;
};

struct FbChain {
  Mat beta;
  Vec sigma2;
  Mat z;
  Vec phi, omega;
  double xi_accept_rate = 0.0;
};

FbChain run_fb_chain(const ModelSpec& model, const Dataset& data, const FbPrior& prior,
                     const ChainConfig& config, std::uint64_t stream_a = 0);

}  // namespace sglmm

#endif
