#include "sglmm/mcmc.hpp"

namespace sglmm {

GibbsContext GibbsContext::make(const Mat& locations, const CovParams& cov,
                                const Mat& X, const Prior& prior) {
  GibbsContext ctx;
  CovMatrices cm = build_cov(locations, cov);
  ctx.cholR = cm.chol;
  ctx.precision = ctx.cholR.inverse();
  ctx.X = X;
  ctx.XtRinvX = X.transpose() * ctx.cholR.solve(X);
  Eigen::LLT<Mat> lltVb(prior.V_b);
  if (lltVb.info() != Eigen::Success)
    throw NumericError("V_b not positive definite");
  ctx.Vb_inv = lltVb.solve(Mat::Identity(prior.V_b.rows(), prior.V_b.cols()));
  ctx.Vbinv_mb = ctx.Vb_inv * prior.m_b;
  ctx.mb_Vbinv_mb = prior.m_b.dot(ctx.Vbinv_mb);
  Mat A = ctx.XtRinvX + ctx.Vb_inv;
  ctx.cholA = Eigen::LLT<Mat>(A);
  if (ctx.cholA.info() != Eigen::Success)
    throw NumericError("conditional precision of beta not positive definite");
  return ctx;
}

std::pair<Vec, double> update_beta_sigma2(const Vec& z, const GibbsContext& ctx,
                                          const Prior& prior, Rng& rng) {
  const double n = static_cast<double>(z.size());
  const Vec XtRinvz = ctx.X.transpose() * ctx.cholR.solve(z);
  const Vec mean_beta = ctx.cholA.solve(XtRinvz + ctx.Vbinv_mb);
  // beta-marginalized quadratic form (z - X m_b)' T (z - X m_b)
  double Q = ctx.cholR.quad(z) + ctx.mb_Vbinv_mb -
             mean_beta.dot((XtRinvz + ctx.Vbinv_mb));
  Q = std::max(Q, 0.0);
  const double df = prior.n_sigma + n;
  const double scale_sum = prior.n_sigma * prior.a_sigma + Q;
  const double sigma2 = scale_sum / rng.chisq(df);
  // beta | sigma2, z ~ N(mean_beta, sigma2 A^{-1})
  Vec u(mean_beta.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = rng.normal();
  Mat Lt = ctx.cholA.matrixU();
  Vec beta = mean_beta +
             std::sqrt(sigma2) * Lt.triangularView<Eigen::Upper>().solve(u);
  return {beta, sigma2};
}

int mh_update_z(ZSweepState& st, const GibbsContext& ctx, const ModelSpec& model,
                const Dataset& data, const XiPoint& xi, double sigma2,
                const Vec& proposal_sd, Rng& rng, std::vector<int>* site_accepts) {
  const Eigen::Index n = st.z.size();
  const LinkSpec link = model.link_spec(xi);
  int accepted = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double delta = proposal_sd[i] * rng.normal();
    const double u = rng.uniform();
    const double znew = st.z[i] + delta;
    const ZJet j = inv_link_jet(link, znew);
    const double obs_new =
        log_obs_density_site(model.response, data.y[i], data.t[i], j.f);
    double log_acc = neg_inf;
    if (obs_new > neg_inf) {
      const double dquad =
          -(2.0 * delta * st.s[i] + delta * delta * ctx.precision(i, i)) /
          (2.0 * sigma2);
      log_acc = obs_new - st.obs_logp[i] + dquad;
    }
    const bool accept = std::log(u) < log_acc;
    if (accept) {
      st.z[i] = znew;
      st.v[i] += delta;
      st.s += delta * ctx.precision.col(i);
      st.obs_logp[i] = obs_new;
      ++accepted;
    }
    if (site_accepts) (*site_accepts)[i] += accept ? 1 : 0;
  }
  return accepted;
}

namespace {

ZSweepState init_sweep_state(const Vec& z, const Vec& beta, const GibbsContext& ctx,
                             const ModelSpec& model, const Dataset& data,
                             const XiPoint& xi) {
  ZSweepState st;
  st.z = z;
  st.v = z - ctx.X * beta;
  st.s = ctx.precision * st.v;
  st.obs_logp.resize(z.size());
  const LinkSpec link = model.link_spec(xi);
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const ZJet j = inv_link_jet(link, z[i]);
    st.obs_logp[i] = log_obs_density_site(model.response, data.y[i], data.t[i], j.f);
  }
  return st;
}

}  // namespace

ChainBundle run_chain(const ModelSpec& model, const Dataset& data, const XiPoint& xi,
                      const ChainConfig& config, std::uint64_t stream_a,
                      std::uint64_t stream_b) {
  config.validate();
  model.validate();
  data.validate(model.response);
  Rng rng(config.seed, stream_a, stream_b);
  const Eigen::Index n = data.n();
  const Eigen::Index p = data.p();

  GibbsContext ctx = GibbsContext::make(data.locations, model.cov_params(xi),
                                        data.X, model.prior);

  Vec beta = model.prior.m_b;
  double sigma2 = model.prior.a_sigma;
  Vec z = data.X * beta;
  // start z at a crude per-site compatible point: nudge toward the data
  const LinkSpec link = model.link_spec(xi);
  for (Eigen::Index i = 0; i < n; ++i) {
    const ZJet j = inv_link_jet(link, z[i]);
    if (log_obs_density_site(model.response, data.y[i], data.t[i], j.f) == neg_inf)
      z[i] += (data.y[i] > 0 ? 1.0 : -1.0);
  }
  ZSweepState st = init_sweep_state(z, beta, ctx, model, data, xi);

  Vec log_sd = Vec::Zero(n);
  Vec sd = log_sd.array().exp();
  std::vector<int> accepts(n, 0);
  int proposals = 0;

  ChainBundle bundle;
  bundle.xi = xi;
  bundle.seed = config.seed;
  bundle.beta.resize(p, config.n_samples);
  bundle.sigma2.resize(config.n_samples);
  bundle.z.resize(n, config.n_samples);

  const int total_iters = config.burn_in + config.n_samples * config.thin;
  int kept = 0;
  for (int iter = 0; iter < total_iters; ++iter) {
    auto [b, s2] = update_beta_sigma2(st.z, ctx, model.prior, rng);
    beta = b;
    sigma2 = s2;
    st.v = st.z - ctx.X * beta;
    st.s = ctx.precision * st.v;

    std::vector<int> site_acc(n, 0);
    mh_update_z(st, ctx, model, data, xi, sigma2, sd, rng, &site_acc);
    ++proposals;
    const bool in_burnin = iter < config.burn_in;
    if (in_burnin && config.adapt_during_burnin) {
      const double gain = std::pow(iter + 1.0, -0.6);
      for (Eigen::Index i = 0; i < n; ++i) {
        log_sd[i] += gain * (site_acc[i] - 0.44);
        sd[i] = std::exp(log_sd[i]);
      }
    }
    if (!in_burnin) {
      for (Eigen::Index i = 0; i < n; ++i) accepts[i] += site_acc[i];
      const int post = iter - config.burn_in;
      if ((post + 1) % config.thin == 0) {
        bundle.beta.col(kept) = beta;
        bundle.sigma2[kept] = sigma2;
        bundle.z.col(kept) = st.z;
        ++kept;
      }
    }
  }

  bundle.stage_split = static_cast<int>(std::lround(config.stage1_fraction *
                                                    config.n_samples));
  bundle.stage_split = std::min(std::max(bundle.stage_split, 0), config.n_samples);
  bundle.proposal_sd = sd;
  bundle.accept_rate.resize(n);
  const double post_iters =
      static_cast<double>(config.n_samples) * config.thin;
  for (Eigen::Index i = 0; i < n; ++i)
    bundle.accept_rate[i] = accepts[i] / std::max(post_iters, 1.0);
  return bundle;
}

ChainBundle transform_chain(ChainBundle bundle, const TransformPlan& plan,
                            const ModelSpec& model) {
  const LinkSpec link = model.link_spec(bundle.xi);
  bundle.w.resize(bundle.z.rows(), bundle.z.cols());
  for (Eigen::Index c = 0; c < bundle.z.cols(); ++c)
    bundle.w.col(c) = forward_transform(plan, link, bundle.z.col(c));
  bundle.has_w = true;
  return bundle;
}

FbChain run_fb_chain(const ModelSpec& model, const Dataset& data, const FbPrior& prior,
                     const ChainConfig& config, std::uint64_t stream_a) {
  config.validate();
  data.validate(model.response);
  Rng rng(config.seed, stream_a, 0xfb);
  const Eigen::Index n = data.n();

  auto log_xi_prior = [&](double phi, double omega) {
    if (phi < prior.phi_lo || phi > prior.phi_hi || omega < prior.omega_lo ||
        omega > prior.omega_hi)
      return neg_inf;
    if (prior.kind == FbPrior::Kind::reciprocal) {
      double lp = 0.0;
      if (prior.phi_lo < prior.phi_hi) lp -= std::log(phi);
      if (prior.omega_lo < prior.omega_hi) lp -= std::log(omega);
      return lp;
    }
    return 0.0;
  };

  double phi = 0.5 * (prior.phi_lo + prior.phi_hi);
  double omega = 0.5 * (prior.omega_lo + prior.omega_hi);
  XiPoint xi = model.base_point();
  xi.phi = phi;
  xi.omega = omega;
  GibbsContext ctx = GibbsContext::make(data.locations, model.cov_params(xi),
                                        data.X, model.prior);

  Vec beta = model.prior.m_b;
  double sigma2 = model.prior.a_sigma;
  Vec z = data.X * beta;
  const bool phi_free = prior.phi_lo < prior.phi_hi;
  const bool omega_free = prior.omega_lo < prior.omega_hi;

  ZSweepState st = init_sweep_state(z, beta, ctx, model, data, xi);
  Vec log_sd = Vec::Zero(n);
  Vec sd = log_sd.array().exp();
  double xi_step = 0.1;
  int xi_accepts = 0, xi_proposals = 0;

  FbChain out;
  out.beta.resize(data.p(), config.n_samples);
  out.sigma2.resize(config.n_samples);
  out.z.resize(n, config.n_samples);
  out.phi.resize(config.n_samples);
  out.omega.resize(config.n_samples);

  const int total_iters = config.burn_in + config.n_samples * config.thin;
  int kept = 0;
  for (int iter = 0; iter < total_iters; ++iter) {
    auto [b, s2] = update_beta_sigma2(st.z, ctx, model.prior, rng);
    beta = b;
    sigma2 = s2;
    st.v = st.z - ctx.X * beta;
    st.s = ctx.precision * st.v;

    std::vector<int> site_acc(n, 0);
    mh_update_z(st, ctx, model, data, xi, sigma2, sd, rng, &site_acc);

    if (phi_free || omega_free) {
      const double phi_scale = phi_free ? (prior.phi_hi - prior.phi_lo) : 0.0;
      const double omega_scale = omega_free ? (prior.omega_hi - prior.omega_lo) : 0.0;
      const double phi_new = phi + xi_step * phi_scale * rng.normal();
      const double omega_new = omega + xi_step * omega_scale * rng.normal();
      const double u = rng.uniform();
      ++xi_proposals;
      const double lp_new = log_xi_prior(phi_new, omega_new);
      bool accept = false;
      if (lp_new > neg_inf) {
        XiPoint xi_new = xi;
        xi_new.phi = phi_new;
        xi_new.omega = omega_new;
        try {
          GibbsContext ctx_new = GibbsContext::make(
              data.locations, model.cov_params(xi_new), data.X, model.prior);
          const double cur = log_latent_density(st.z, beta, sigma2, ctx.cholR, data.X) +
                             log_xi_prior(phi, omega);
          const double prop =
              log_latent_density(st.z, beta, sigma2, ctx_new.cholR, data.X) + lp_new;
          if (std::log(u) < prop - cur) {
            accept = true;
            phi = phi_new;
            omega = omega_new;
            xi = xi_new;
            ctx = std::move(ctx_new);
            st.s = ctx.precision * st.v;
          }
        } catch (const SingularCovarianceError&) {
          accept = false;
        }
      }
      if (accept) ++xi_accepts;
      if (iter < config.burn_in && config.adapt_during_burnin) {
        const double gain = std::pow(iter + 1.0, -0.6);
        xi_step = std::exp(std::log(xi_step) + gain * ((accept ? 1.0 : 0.0) - 0.25));
        xi_step = std::min(xi_step, 2.0);
      }
    }

    if (iter < config.burn_in && config.adapt_during_burnin) {
      const double gain = std::pow(iter + 1.0, -0.6);
      for (Eigen::Index i = 0; i < n; ++i) {
        log_sd[i] += gain * (site_acc[i] - 0.44);
        sd[i] = std::exp(log_sd[i]);
      }
    }
    if (iter >= config.burn_in) {
      const int post = iter - config.burn_in;
      if ((post + 1) % config.thin == 0) {
        out.beta.col(kept) = beta;
        out.sigma2[kept] = sigma2;
        out.z.col(kept) = st.z;
        out.phi[kept] = phi;
        out.omega[kept] = omega;
        ++kept;
      }
    }
  }
  out.xi_accept_rate = xi_proposals ? static_cast<double>(xi_accepts) / xi_proposals
                                    : 0.0;
  return out;
}

}  // namespace sglmm
