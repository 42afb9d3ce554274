#include "sglmm/gis_estimators.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "sglmm/laplace_skeleton.hpp"
#include "sglmm/numeric.hpp"

namespace sglmm {

namespace {

std::array<double, 3> theta_key(const XiPoint& xi) {
  auto fix = [](double x) { return std::isnan(x) ? -1e308 : x; };
  return {fix(xi.phi), fix(xi.kappa), fix(xi.omega)};
}

struct PooledDraws {
  Mat beta;
  Vec sigma2;
  Mat w;
  std::vector<int> origin;
  std::vector<int> sizes;
};

PooledDraws pool_draws(const std::vector<ChainBundle>& chains, StageSelect stage) {
  if (chains.empty()) throw NumericError("no chains to pool");
  const Eigen::Index p = chains[0].beta.rows();
  const Eigen::Index n = chains[0].z.rows();
  Eigen::Index total = 0;
  std::vector<std::pair<int, int>> ranges;
  for (const auto& c : chains) {
    int lo = 0, hi = static_cast<int>(c.n_draws());
    if (stage == StageSelect::stage1) hi = c.stage_split;
    else if (stage == StageSelect::stage2) lo = c.stage_split;
    if (hi <= lo) throw NumericError("empty stage selection in pooled draws");
    ranges.emplace_back(lo, hi);
    total += hi - lo;
  }
  PooledDraws out;
  out.beta.resize(p, total);
  out.sigma2.resize(total);
  out.w.resize(n, total);
  out.origin.resize(total);
  Eigen::Index col = 0;
  for (std::size_t j = 0; j < chains.size(); ++j) {
    const auto& c = chains[j];
    if (!c.has_w) throw NumericError("chain bundle has no transformed field");
    const auto [lo, hi] = ranges[j];
    out.sizes.push_back(hi - lo);
    for (int l = lo; l < hi; ++l, ++col) {
      out.beta.col(col) = c.beta.col(l);
      out.sigma2[col] = c.sigma2[l];
      out.w.col(col) = c.w.col(l);
      out.origin[static_cast<std::size_t>(col)] = static_cast<int>(j);
    }
  }
  return out;
}

// Per-nu transform of the pooled draws: z columns plus obs+jacobian term.
struct NuEntry {
  Mat z;
  Vec obs_plus_jac;
};

NuEntry transform_pool(const ModelSpec& model, const Dataset& data,
                       const TransformPlan& plan, double nu, const Mat& w) {
  NuEntry e;
  const Eigen::Index N = w.cols();
  e.z.resize(w.rows(), N);
  e.obs_plus_jac.resize(N);
  for (Eigen::Index s = 0; s < N; ++s) {
    TransformedState st = apply_plan(model, plan, nu, w.col(s));
    e.z.col(s) = st.z;
    const double obs = log_obs_density(model.response, data.y, data.t, st.mu);
    e.obs_plus_jac[s] = (obs == neg_inf) ? neg_inf : obs + st.log_jac;
  }
  return e;
}

double nu_key(double nu) { return std::isnan(nu) ? -1e308 : nu; }

}  // namespace

LogQMatrix build_logq_matrix(const ModelSpec& model, const Dataset& data,
                             const TransformPlan& plan,
                             const std::vector<XiPoint>& skeleton,
                             const std::vector<ChainBundle>& chains,
                             StageSelect stage) {
  PooledDraws pool = pool_draws(chains, stage);
  const Eigen::Index k = static_cast<Eigen::Index>(skeleton.size());
  const Eigen::Index N = pool.sigma2.size();
  LogQMatrix out;
  out.values.resize(k, N);
  out.origin = pool.origin;
  out.sizes = pool.sizes;

  std::map<double, NuEntry> nu_cache;
  std::map<std::array<double, 3>, CholFactor> chol_cache;
  for (Eigen::Index i = 0; i < k; ++i) {
    const XiPoint& xi = skeleton[static_cast<std::size_t>(i)];
    auto nit = nu_cache.find(nu_key(xi.nu));
    if (nit == nu_cache.end())
      nit = nu_cache.emplace(nu_key(xi.nu),
                             transform_pool(model, data, plan, xi.nu, pool.w)).first;
    auto cit = chol_cache.find(theta_key(xi));
    if (cit == chol_cache.end())
      cit = chol_cache.emplace(theta_key(xi),
                               build_cov(data.locations, model.cov_params(xi)).chol)
                .first;
    const NuEntry& ne = nit->second;
    for (Eigen::Index s = 0; s < N; ++s) {
      if (ne.obs_plus_jac[s] == neg_inf) {
        out.values(i, s) = neg_inf;
        continue;
      }
      out.values(i, s) =
          ne.obs_plus_jac[s] + log_latent_density(ne.z.col(s), pool.beta.col(s),
                                                  pool.sigma2[s], cit->second, data.X);
    }
  }
  return out;
}

std::vector<std::vector<int>> separability_blocks(const LogQMatrix& logq) {
  const int k = static_cast<int>(logq.k());
  std::vector<int> parent(k);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  auto unite = [&](int a, int b) { parent[find(a)] = find(b); };
  for (Eigen::Index s = 0; s < logq.total(); ++s) {
    double m = neg_inf;
    for (int i = 0; i < k; ++i) m = std::max(m, logq.values(i, s));
    int first = logq.origin[static_cast<std::size_t>(s)];
    for (int i = 0; i < k; ++i)
      if (logq.values(i, s) > m - 700.0) unite(first, i);
  }
  std::map<int, std::vector<int>> groups;
  for (int i = 0; i < k; ++i) groups[find(i)].push_back(i);
  std::vector<std::vector<int>> out;
  for (auto& [root, members] : groups) out.push_back(members);
  return out;
}

std::vector<SepRange> separability_report(const LogQMatrix& logq) {
  const int k = static_cast<int>(logq.k());
  const int nchains = static_cast<int>(logq.sizes.size());
  std::vector<SepRange> out;
  for (int i = 0; i < k; ++i)
    for (int i2 = i + 1; i2 < k; ++i2)
      for (int j = 0; j < nchains; ++j) {
        SepRange r{i, i2, j, pos_inf, neg_inf};
        for (Eigen::Index s = 0; s < logq.total(); ++s) {
          if (logq.origin[static_cast<std::size_t>(s)] != j) continue;
          const double d = logq.values(i, s) - logq.values(i2, s);
          r.lo = std::min(r.lo, d);
          r.hi = std::max(r.hi, d);
        }
        out.push_back(r);
      }
  return out;
}

RLEstimate rl_estimate(const LogQMatrix& logq) {
  const int k = static_cast<int>(logq.k());
  const Eigen::Index N = logq.total();
  if (k < 1) throw NumericError("empty skeleton in RL estimation");

  auto blocks = separability_blocks(logq);
  if (blocks.size() > 1) {
    std::ostringstream msg;
    msg << "separable pooled sample; skeleton blocks:";
    for (auto& b : blocks) {
      msg << " {";
      for (std::size_t i = 0; i < b.size(); ++i) msg << (i ? "," : "") << b[i];
      msg << "}";
    }
    throw SeparabilityError(msg.str(), blocks);
  }

  RLEstimate est;
  est.delta = Vec::Zero(k);
  est.log_r = Vec::Zero(k);
  if (k == 1) return est;

  const double Ntot = static_cast<double>(N);
  Vec delta(k);
  for (int j = 0; j < k; ++j) delta[j] = std::log(logq.sizes[j] / Ntot);
  delta.array() -= delta.mean();  // enforce sum = 0

  auto objective_grad = [&](const Vec& d, Vec& grad_full) {
    grad_full = Vec::Zero(k);
    for (int j = 0; j < k; ++j) grad_full[j] = logq.sizes[j];
    double obj = 0.0;
    Vec col(k);
    for (Eigen::Index s = 0; s < N; ++s) {
      for (int i = 0; i < k; ++i) col[i] = logq.values(i, s) + d[i];
      const double lse = logsumexp(col);
      obj += logq.values(logq.origin[static_cast<std::size_t>(s)], s) +
             d[logq.origin[static_cast<std::size_t>(s)]] - lse;
      for (int i = 0; i < k; ++i) grad_full[i] -= std::exp(col[i] - lse);
    }
    return obj;
  };

  Vec grad_full(k);
  double obj = objective_grad(delta, grad_full);
  for (int iter = 0; iter < 100; ++iter) {
    est.iters = iter;
    // free coordinates are delta[1..k-1]; delta[0] = -sum(rest)
    Vec gf = grad_full.tail(k - 1).array() - grad_full[0];
    if (gf.lpNorm<Eigen::Infinity>() <= 1e-10) break;
    // Hessian of the quasi-likelihood
    Mat H = Mat::Zero(k, k);
    Vec col(k), prob(k);
    for (Eigen::Index s = 0; s < N; ++s) {
      for (int i = 0; i < k; ++i) col[i] = logq.values(i, s) + delta[i];
      const double lse = logsumexp(col);
      for (int i = 0; i < k; ++i) prob[i] = std::exp(col[i] - lse);
      H -= prob.asDiagonal().toDenseMatrix();
      H += prob * prob.transpose();
    }
    Mat J = Mat::Zero(k, k - 1);
    J.row(0).setConstant(-1.0);
    J.block(1, 0, k - 1, k - 1).setIdentity();
    Mat Hf = J.transpose() * H * J;
    Mat negHf = -Hf;
    negHf.diagonal().array() += 1e-12 * (1.0 + negHf.diagonal().maxCoeff());
    Eigen::LLT<Mat> llt(negHf);
    Vec step;
    if (llt.info() == Eigen::Success) step = llt.solve(gf);
    else step = gf / (1.0 + gf.norm());
    double t = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 40; ++ls) {
      Vec df = delta.tail(k - 1) + t * step;
      Vec cand(k);
      cand[0] = -df.sum();
      cand.tail(k - 1) = df;
      Vec g2(k);
      const double o2 = objective_grad(cand, g2);
      if (o2 > obj) {
        delta = cand;
        obj = o2;
        grad_full = g2;
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved) break;
  }

  est.delta = delta;
  for (int j = 0; j < k; ++j)
    est.log_r[j] = std::log(logq.sizes[j] / Ntot) - delta[j];
  est.log_r.array() -= est.log_r[0];
  return est;
}

double batch_means_se(const Vec& values, const std::vector<int>& sizes) {
  double var = 0.0;
  const double Ntot = static_cast<double>(values.size());
  Eigen::Index off = 0;
  for (int Nj : sizes) {
    const double aj = Nj / Ntot;
    const int b = std::max(2, static_cast<int>(std::floor(std::sqrt(Nj))));
    const int m = Nj / b;
    if (m < 1) {
      off += Nj;
      continue;
    }
    const int used = b * m;
    double mean = 0.0;
    for (int l = 0; l < used; ++l) mean += values[off + l];
    mean /= used;
    double s2 = 0.0;
    for (int bi = 0; bi < b; ++bi) {
      double bm = 0.0;
      for (int l = 0; l < m; ++l) bm += values[off + bi * m + l];
      bm /= m;
      s2 += (bm - mean) * (bm - mean);
    }
    s2 *= static_cast<double>(m) / (b - 1);
    var += aj * aj * s2 / used;
    off += Nj;
  }
  return std::sqrt(var);
}

BfSurface::BfSurface(const ModelSpec& model, const Dataset& data,
                     const TransformPlan& plan, std::vector<XiPoint> skeleton,
                     const std::vector<ChainBundle>& chains, StageSelect stage,
                     Vec log_r)
    : model_(model), data_(data), plan_(plan), skeleton_(std::move(skeleton)),
      log_r_(std::move(log_r)) {
  PooledDraws pool = pool_draws(chains, stage);
  psi_beta_ = std::move(pool.beta);
  psi_sigma2_ = std::move(pool.sigma2);
  wdraws_ = std::move(pool.w);
  origin_ = std::move(pool.origin);
  sizes_ = std::move(pool.sizes);

  const Eigen::Index k = static_cast<Eigen::Index>(skeleton_.size());
  const Eigen::Index N = psi_sigma2_.size();
  skel_logq_.resize(k, N);
  for (Eigen::Index i = 0; i < k; ++i)
    skel_logq_.row(i) = log_q_at(skeleton_[static_cast<std::size_t>(i)]).transpose();

  // denominators: log sum_i a_i q_i / r_i
  denominators_.resize(N);
  const double Ntot = static_cast<double>(N);
  Vec col(k);
  for (Eigen::Index s = 0; s < N; ++s) {
    for (Eigen::Index i = 0; i < k; ++i)
      col[i] = std::log(sizes_[static_cast<std::size_t>(i)] / Ntot) +
               skel_logq_(i, s) - log_r_[i];
    denominators_[s] = logsumexp(col);
  }
}

EstimatorKind BfSurface::kind() const {
  if (plan_.all_identity()) return EstimatorKind::untransformed;
  if (plan_.uses_aux()) return EstimatorKind::general_reparam;
  return EstimatorKind::mu_reparam;
}

Vec BfSurface::log_q_at(const XiPoint& xi) const {
  auto nit = nu_cache_.find(nu_key(xi.nu));
  if (nit == nu_cache_.end()) {
    NuEntry e = transform_pool(model_, data_, plan_, xi.nu, wdraws_);
    nit = nu_cache_.emplace(nu_key(xi.nu),
                            std::make_pair(std::move(e.z), std::move(e.obs_plus_jac)))
              .first;
  }
  auto cit = chol_cache_.find(theta_key(xi));
  if (cit == chol_cache_.end())
    cit = chol_cache_
              .emplace(theta_key(xi),
                       std::make_shared<CholFactor>(
                           build_cov(data_.locations, model_.cov_params(xi)).chol))
              .first;
  const Mat& z = nit->second.first;
  const Vec& oj = nit->second.second;
  const Eigen::Index N = psi_sigma2_.size();
  Vec out(N);
  for (Eigen::Index s = 0; s < N; ++s) {
    if (oj[s] == neg_inf) {
      out[s] = neg_inf;
      continue;
    }
    out[s] = oj[s] + log_latent_density(z.col(s), psi_beta_.col(s), psi_sigma2_[s],
                                        *cit->second, data_.X);
  }
  return out;
}

Vec BfSurface::log_y(const XiPoint& xi) const {
  return log_q_at(xi) - denominators_;
}

BfEval BfSurface::eval(const XiPoint& xi) const {
  const Vec ly = log_y(xi);
  BfEval out;
  double M = ly.maxCoeff();
  if (!std::isfinite(M)) {
    out.degenerate = true;
    return out;
  }
  out.log_bf = log_mean_exp(ly);
  Vec yscaled = (ly.array() - M).exp();
  const double bhat = yscaled.mean();
  out.mc_se = batch_means_se(yscaled, sizes_) / bhat;
  // chain concentration diagnostic
  double tot = yscaled.sum();
  Eigen::Index off = 0;
  for (int Nj : sizes_) {
    double share = yscaled.segment(off, Nj).sum() / tot;
    if (share > 0.99) out.warn_concentrated = true;
    off += Nj;
  }
  return out;
}

BfEval BfSurface::eval_control_variate(const XiPoint& xi, bool force_alpha_zero,
                                       bool* ridge_warning) const {
  const Eigen::Index k = static_cast<Eigen::Index>(skeleton_.size());
  if (force_alpha_zero || k < 2) return eval(xi);

  const Vec ly = log_y(xi);
  BfEval out;
  const double M = ly.maxCoeff();
  if (!std::isfinite(M)) {
    out.degenerate = true;
    return out;
  }
  const Eigen::Index N = ly.size();
  Vec y = (ly.array() - M).exp();
  Mat X(N, k - 1);
  for (Eigen::Index s = 0; s < N; ++s)
    for (Eigen::Index j = 1; j < k; ++j)
      X(s, j - 1) = std::exp(skel_logq_(j, s) - log_r_[j] - denominators_[s]) -
                    std::exp(skel_logq_(0, s) - denominators_[s]);

  Vec xmean = X.colwise().mean();
  Mat Xc = X.rowwise() - xmean.transpose();
  const double ymean = y.mean();
  Vec yc = y.array() - ymean;
  Mat G = Xc.transpose() * Xc;
  const double tr = G.trace();
  Vec alpha = Vec::Zero(k - 1);
  if (tr > 0.0) {
    Mat Gr = G;
    Gr.diagonal().array() += 1e-10 * tr;
    Eigen::LLT<Mat> llt(Gr);
    if (llt.info() == Eigen::Success) {
      alpha = llt.solve(Xc.transpose() * yc);
    } else if (ridge_warning) {
      *ridge_warning = true;
    }
  } else if (ridge_warning) {
    *ridge_warning = true;
  }
  Vec resid = y - X * alpha;
  const double intercept = ymean - alpha.dot(xmean);
  if (!(intercept > 0.0)) {
    out.degenerate = true;
    out.log_bf = neg_inf;
    return out;
  }
  out.log_bf = M + std::log(intercept);
  out.mc_se = batch_means_se(resid, sizes_) / intercept;
  return out;
}

EBFit maximize_bf(const BfSurface& surface, const ModelSpec& model) {
  const std::vector<XiName> comps = model.estimated_components();
  const std::size_t d = comps.size();
  if (d == 0) throw ConfigError("no estimated components to maximize over");

  std::vector<double> lo(d), hi(d);
  for (std::size_t j = 0; j < d; ++j) {
    const XiComponent& c = comps[j] == XiName::nu    ? model.nu
                           : comps[j] == XiName::phi ? model.phi
                           : comps[j] == XiName::kappa ? model.kappa
                                                       : model.omega;
    double a = to_internal(model, comps[j], c.lo);
    double b = to_internal(model, comps[j], c.hi);
    lo[j] = std::min(a, b);
    hi[j] = std::max(a, b);
  }

  auto to_point = [&](const Vec& u) {
    XiPoint xi = model.base_point();
    for (std::size_t j = 0; j < d; ++j)
      xi.set(comps[j], from_internal(model, comps[j], u[j]));
    return xi;
  };
  auto feval = [&](const Vec& u) { return surface.eval(to_point(u)).log_bf; };

  // refinement grid from the skeleton's per-component values
  std::vector<std::vector<double>> grid(d);
  for (std::size_t j = 0; j < d; ++j) {
    std::vector<double> vals;
    for (const auto& xi : surface.skeleton())
      vals.push_back(to_internal(model, comps[j], xi.get(comps[j])));
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    std::vector<double> refined;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      refined.push_back(vals[i]);
      if (i + 1 < vals.size()) {
        refined.push_back(vals[i] + (vals[i + 1] - vals[i]) / 3.0);
        refined.push_back(vals[i] + 2.0 * (vals[i + 1] - vals[i]) / 3.0);
      }
    }
    for (double& v : refined) v = std::min(hi[j], std::max(lo[j], v));
    std::sort(refined.begin(), refined.end());
    refined.erase(std::unique(refined.begin(), refined.end()), refined.end());
    grid[j] = refined;
  }
  std::size_t product = 1;
  for (auto& g : grid) product *= g.size();
  if (product > 2000) {
    // fall back to the raw skeleton values when the cross product explodes
    for (std::size_t j = 0; j < d; ++j) {
      std::vector<double> vals;
      for (const auto& xi : surface.skeleton())
        vals.push_back(to_internal(model, comps[j], xi.get(comps[j])));
      std::sort(vals.begin(), vals.end());
      vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
      grid[j] = vals;
    }
  }

  // ties break toward the skeleton reference (index 0) by seeding with it
  Vec best_u(d);
  for (std::size_t j = 0; j < d; ++j)
    best_u[j] = to_internal(model, comps[j], surface.skeleton()[0].get(comps[j]));
  double best_f = feval(best_u);

  std::vector<std::size_t> idx(d, 0);
  for (;;) {
    Vec u(d);
    for (std::size_t j = 0; j < d; ++j) u[j] = grid[j][idx[j]];
    const double f = feval(u);
    if (f > best_f) {
      best_f = f;
      best_u = u;
    }
    std::size_t j = 0;
    while (j < d && ++idx[j] == grid[j].size()) {
      idx[j] = 0;
      ++j;
    }
    if (j == d) break;
  }

  Vec step(d), blo(d), bhi(d);
  for (std::size_t j = 0; j < d; ++j) {
    double g = hi[j] - lo[j];
    for (std::size_t i = 1; i < grid[j].size(); ++i)
      g = std::min(g, grid[j][i] - grid[j][i - 1]);
    step[j] = 0.5 * std::max(g, 1e-3 * (hi[j] - lo[j]));
    blo[j] = lo[j];
    bhi[j] = hi[j];
  }
  auto nm = nelder_mead_max(feval, best_u, step, blo, bhi, 160, 1e-10);
  if (nm.f >= best_f) {
    best_f = nm.f;
    best_u = nm.x;
  }

  EBFit fit;
  fit.estimated = comps;
  fit.xi_hat = to_point(best_u);
  fit.at_boundary.resize(d);
  for (std::size_t j = 0; j < d; ++j)
    fit.at_boundary[j] = (best_u[j] - lo[j] <= 1e-6 * (hi[j] - lo[j])) ||
                         (hi[j] - best_u[j] <= 1e-6 * (hi[j] - lo[j]));
  BfEval at_hat = surface.eval(fit.xi_hat);
  fit.log_bf_at_hat = at_hat.log_bf;
  fit.bf_mc_se = at_hat.mc_se;
  return fit;
}

void logq_xi_derivatives(const ModelSpec& model, const Dataset& data,
                         const TransformPlan& plan, const XiPoint& xi,
                         const std::vector<XiName>& components, const Vec& beta,
                         double sigma2, const Vec& w, Vec& score, Mat& hessian) {
  const std::size_t d = components.size();
  score = Vec::Zero(d);
  hessian = Mat::Zero(d, d);

  CovMatrices cov = build_cov(data.locations, model.cov_params(xi));
  const Mat Rinv = cov.chol.inverse();
  const CorrSpec corr = model.corr_spec(xi);

  std::vector<int> cov_idx;
  std::vector<CovComponent> cov_comps;
  int nu_idx = -1;
  for (std::size_t j = 0; j < d; ++j) {
    if (components[j] == XiName::nu) nu_idx = static_cast<int>(j);
    else {
      cov_idx.push_back(static_cast<int>(j));
      cov_comps.push_back(components[j] == XiName::phi   ? CovComponent::phi
                          : components[j] == XiName::kappa ? CovComponent::kappa
                                                           : CovComponent::omega);
    }
  }

  std::vector<Mat> dR(cov_comps.size());
  for (std::size_t a = 0; a < cov_comps.size(); ++a)
    dR[a] = cov_matrix_derivative(data.locations, corr, cov_comps[a]);
  std::vector<Mat> d2R(cov_comps.size() * cov_comps.size());
  for (std::size_t a = 0; a < cov_comps.size(); ++a)
    for (std::size_t b = a; b < cov_comps.size(); ++b)
      d2R[a * cov_comps.size() + b] = cov_matrix_second_derivative(
          data.locations, corr, cov_comps[a], cov_comps[b]);

  const TransformedState st = apply_plan(model, plan, xi.nu, w);
  const Vec v = st.z - data.X * beta;
  const Vec u = Rinv * v;

  // nu derivatives
  Vec gdot, gddot;
  if (nu_idx >= 0) {
    const Eigen::Index n = data.n();
    gdot = Vec::Zero(n);
    gddot = Vec::Zero(n);
    const LinkSpec mlink = model.link_spec(xi);
    double obs_s = 0.0, obs_h = 0.0, jac_s = 0.0, jac_h = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const SiteTransform tsel = plan.per_site.empty()
                                     ? SiteTransform::identity
                                     : plan.per_site[i % plan.per_site.size()];
      WJet tj;  // identity: g = w, gw = 1, nu-partials 0
      if (tsel != SiteTransform::identity) {
        const LinkSpec tr = site_transform_spec(plan, mlink, static_cast<int>(i));
        tj = link_jet(tr, w[i]);
        jac_s += tj.gnw / tj.gw;
        jac_h += tj.gnnw / tj.gw - (tj.gnw / tj.gw) * (tj.gnw / tj.gw);
      }
      gdot[i] = tj.gn;
      gddot[i] = tj.gnn;
      if (tsel == SiteTransform::inverse_link) continue;  // d mu / d nu = 0 exactly
      const ZJet fj = inv_link_jet(mlink, st.z[i]);
      const double dmu = fj.fz * tj.gn + fj.fn;
      const double d2mu = fj.fzz * tj.gn * tj.gn + 2.0 * fj.fnz * tj.gn +
                          fj.fz * tj.gnn + fj.fnn;
      const double kpp = cumulant_kpp(model.response, fj.f);
      const double kppp = cumulant_kppp(model.response, fj.f);
      const double dgam = dmu / kpp;
      const double d2gam = d2mu / kpp - kppp * dmu * dmu / (kpp * kpp * kpp);
      const double resid = data.y[i] - data.t[i] * fj.f;
      obs_s += resid * dgam;
      obs_h += resid * d2gam - data.t[i] * dmu * dmu / kpp;
    }
    const Vec Rinv_gdot = Rinv * gdot;
    const double lat_s = -u.dot(gdot) / sigma2;
    const double lat_h = -(gdot.dot(Rinv_gdot) + u.dot(gddot)) / sigma2;
    score[nu_idx] = obs_s + lat_s + jac_s;
    hessian(nu_idx, nu_idx) = obs_h + lat_h + jac_h;
    // cross nu-theta terms
    for (std::size_t a = 0; a < cov_comps.size(); ++a) {
      const double cross = u.dot(dR[a] * Rinv_gdot) / sigma2;
      hessian(nu_idx, cov_idx[a]) = cross;
      hessian(cov_idx[a], nu_idx) = cross;
    }
  }

  for (std::size_t a = 0; a < cov_comps.size(); ++a) {
    const Mat Aa = Rinv * dR[a];
    const Vec dRa_u = dR[a] * u;
    score[cov_idx[a]] = 0.5 * u.dot(dRa_u) / sigma2 - 0.5 * Aa.trace();
    for (std::size_t b = a; b < cov_comps.size(); ++b) {
      const Mat& D2 = d2R[a * cov_comps.size() + b];
      const Mat Ab = Rinv * dR[b];
      const Vec dRb_u = dR[b] * u;
      double h = 0.5 * u.dot(D2 * u) / sigma2 -
                 dRa_u.dot(Rinv * dRb_u) / sigma2 +
                 0.5 * (Aa * Ab).trace() - 0.5 * (Rinv * D2).trace();
      hessian(cov_idx[a], cov_idx[b]) = h;
      hessian(cov_idx[b], cov_idx[a]) = h;
    }
  }
}

Mat eb_stderr(const ModelSpec& model, const Dataset& data, const TransformPlan& plan,
              const XiPoint& xi_hat, const ChainBundle& chain,
              const std::vector<XiName>& components, bool* projected) {
  const std::size_t d = components.size();
  if (d == 0) return Mat::Zero(0, 0);
  ChainBundle local;
  const ChainBundle* ch = &chain;
  if (!chain.has_w) {
    local = transform_chain(chain, plan, model);
    ch = &local;
  }
  const Eigen::Index M = ch->n_draws();
  Mat Hsum = Mat::Zero(d, d);
  Vec ssum = Vec::Zero(d);
  Mat souter = Mat::Zero(d, d);
  Vec score;
  Mat hess;
  for (Eigen::Index l = 0; l < M; ++l) {
    logq_xi_derivatives(model, data, plan, xi_hat, components, ch->beta.col(l),
                        ch->sigma2[l], ch->w.col(l), score, hess);
    Hsum += hess;
    ssum += score;
    souter += score * score.transpose();
  }
  const double Md = static_cast<double>(M);
  Mat H = -(Hsum / Md + (souter / Md - (ssum / Md) * (ssum / Md).transpose()));
  H = 0.5 * (H + H.transpose());

  Eigen::SelfAdjointEigenSolver<Mat> es(H);
  Vec ev = es.eigenvalues();
  const double floor_ev = 1e-10 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  bool proj = false;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev[i] < floor_ev) {
      ev[i] = floor_ev;
      proj = true;
    }
  if (projected) *projected = proj;
  Mat cov = es.eigenvectors() * ev.cwiseInverse().asDiagonal() *
            es.eigenvectors().transpose();
  return 0.5 * (cov + cov.transpose());
}

}  // namespace sglmm
