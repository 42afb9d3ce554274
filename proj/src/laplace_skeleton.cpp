#include "sglmm/laplace_skeleton.hpp"

#include <map>
#include <sstream>

#include "sglmm/numeric.hpp"

namespace sglmm {

namespace {
constexpr double log_2pi = 1.8378770664093454836;

struct LaplaceContext {
  Mat T;
  double logdet_T = 0.0;
  Mat Xmb;  // X m_b as a vector
  Vec x_mb;
};

LaplaceContext make_laplace_context(const ModelSpec& model, const Dataset& data,
                                    const XiPoint& xi) {
  LaplaceContext ctx;
  CovMatrices cov = build_cov(data.locations, model.cov_params(xi));
  ctx.T = reduced_precision_from(cov.chol, data.X, model.prior.V_b);
  ctx.logdet_T = reduced_precision_logdet(cov.chol, data.X, model.prior.V_b);
  ctx.x_mb = data.X * model.prior.m_b;
  return ctx;
}

// log p[y, z | sigma2, xi] with beta integrated out; also gradient/Hessian.
struct Objective {
  const ModelSpec& model;
  const Dataset& data;
  const LaplaceContext& ctx;
  LinkSpec link;
  double sigma2;

  double value(const Vec& z) const {
    Vec mu(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      ZJet j = inv_link_jet(link, z[i]);
      mu[i] = j.f;
    }
    const double obs = log_obs_density(model.response, data.y, data.t, mu);
    if (obs == neg_inf) return neg_inf;
    const Vec r = z - ctx.x_mb;
    const double n = static_cast<double>(z.size());
    return obs - 0.5 * r.dot(ctx.T * r) / sigma2 + 0.5 * ctx.logdet_T -
           0.5 * n * (log_2pi + std::log(sigma2));
  }

  // gradient and the diagonal D of the negated observation Hessian
  void grad_diag(const Vec& z, Vec& grad, Vec& D) const {
    const Eigen::Index n = z.size();
    grad.resize(n);
    D.resize(n);
    Vec Tr = ctx.T * (z - ctx.x_mb);
    for (Eigen::Index i = 0; i < n; ++i) {
      const ZJet j = inv_link_jet(link, z[i]);
      const double kpp = cumulant_kpp(model.response, j.f);
      const double kppp = cumulant_kppp(model.response, j.f);
      const double gam1 = j.fz / kpp;
      const double gam2 = j.fzz / kpp - kppp * j.fz * j.fz / (kpp * kpp * kpp);
      const double resid = data.y[i] - data.t[i] * j.f;
      grad[i] = resid * gam1 - Tr[i] / sigma2;
      D[i] = data.t[i] * j.fz * gam1 - resid * gam2;
    }
  }
};

}  // namespace

ModeResult find_mode(const ModelSpec& model, const Dataset& data, const XiPoint& xi,
                     double sigma2, const Vec* warm_start) {
  const LaplaceContext ctx = make_laplace_context(model, data, xi);
  Objective obj{model, data, ctx, model.link_spec(xi), sigma2};
  const Eigen::Index n = data.n();
  Vec z = warm_start ? *warm_start : Vec(ctx.x_mb);
  double f = obj.value(z);
  if (f == neg_inf) {
    // nudge sites whose observation density is zero at the start
    const LinkSpec link = model.link_spec(xi);
    for (Eigen::Index i = 0; i < n; ++i) {
      ZJet j = inv_link_jet(link, z[i]);
      if (log_obs_density_site(model.response, data.y[i], data.t[i], j.f) == neg_inf)
        z[i] += (data.y[i] > 0 ? 1.0 : -1.0);
    }
    f = obj.value(z);
  }
  Vec grad, D;
  std::ostringstream trace;
  double lambda = 0.0;
  ModeResult out;
  for (int iter = 0; iter < 200; ++iter) {
    obj.grad_diag(z, grad, D);
    out.grad_inf_norm = grad.lpNorm<Eigen::Infinity>();
    out.iters = iter;
    if (out.grad_inf_norm <= 1e-8) {
      out.z_tilde = z;
      out.H_tilde = ctx.T / sigma2;
      out.H_tilde.diagonal() += D;
      return out;
    }
    Mat H = ctx.T / sigma2;
    H.diagonal() += D;
    // damped Newton with Cholesky; raise lambda until the step ascends
    bool stepped = false;
    for (int tries = 0; tries < 12 && !stepped; ++tries) {
      Mat Hl = H;
      if (lambda > 0.0) Hl.diagonal().array() += lambda;
      Eigen::LLT<Mat> llt(Hl);
      if (llt.info() != Eigen::Success) {
        lambda = (lambda == 0.0) ? 1e-6 : 10.0 * lambda;
        continue;
      }
      Vec step = llt.solve(grad);
      // near the optimum the remaining ascent is below double resolution;
      // take the (tiny) Newton step without a measurable-ascent requirement
      if (grad.dot(step) < 64.0 * 2.2e-16 * (1.0 + std::abs(f)) &&
          step.lpNorm<Eigen::Infinity>() <
              1e-5 * (1.0 + z.lpNorm<Eigen::Infinity>())) {
        Vec zc = z + step;
        const double fc = obj.value(zc);
        if (std::isfinite(fc)) {
          z = zc;
          f = fc;
          stepped = true;
          break;
        }
      }
      double t = 1.0;
      for (int ls = 0; ls < 30; ++ls) {
        Vec zc = z + t * step;
        double fc = obj.value(zc);
        if (fc > f + 1e-4 * t * grad.dot(step) && std::isfinite(fc)) {
          z = zc;
          f = fc;
          stepped = true;
          lambda *= 0.3;
          if (lambda < 1e-12) lambda = 0.0;
          break;
        }
        t *= 0.5;
      }
      if (!stepped) lambda = (lambda == 0.0) ? 1e-6 : 10.0 * lambda;
    }
    trace << "iter " << iter << " f=" << f << " |g|=" << out.grad_inf_norm
          << " lambda=" << lambda << "\n";
    if (!stepped)
      throw OptimizerError("mode finder stalled", trace.str());
  }
  throw OptimizerError("mode finder did not converge in 200 iterations", trace.str());
}

LaplaceProfile approx_marginal(const ModelSpec& model, const Dataset& data,
                               const XiPoint& xi, int grid_nodes) {
  const LaplaceContext ctx = make_laplace_context(model, data, xi);
  const double n = static_cast<double>(data.n());
  Vec warm = ctx.x_mb;

  auto log_integrand = [&](double v) {  // v = log sigma2
    const double sigma2 = std::exp(v);
    ModeResult mode = find_mode(model, data, xi, sigma2, &warm);
    warm = mode.z_tilde;
    Eigen::LLT<Mat> llt(mode.H_tilde);
    if (llt.info() != Eigen::Success)
      throw NumericError("Laplace Hessian not positive definite");
    Mat L = llt.matrixL();
    const double logdet_H = 2.0 * L.diagonal().array().log().sum();
    Objective obj{model, data, ctx, model.link_spec(xi), sigma2};
    const double peak = obj.value(mode.z_tilde);
    const double laplace = peak - 0.5 * (logdet_H - n * log_2pi);
    // + prior on sigma2 + Jacobian of v = log sigma2
    return laplace +
           log_scaled_inv_chisq(sigma2, model.prior.n_sigma, model.prior.a_sigma) + v;
  };

  // coarse scan for the peak, then golden section
  double best_v = 0.0, best_f = neg_inf;
  for (int i = 0; i <= 24; ++i) {
    const double v = -12.0 + i;
    double f;
    try {
      f = log_integrand(v);
    } catch (const NumericError&) {
      continue;
    }
    if (f > best_f) {
      best_f = f;
      best_v = v;
    }
  }
  if (best_f == neg_inf) throw NumericError("Laplace integrand everywhere degenerate");
  const double v_star = golden_section_max(log_integrand, best_v - 1.5, best_v + 1.5,
                                           1e-6);
  const double f_star = log_integrand(v_star);

  // geometric expansion (ratio 1.3 in sigma2) until 1e-6 of the peak
  const double step = std::log(1.3);
  const double drop = std::log(1e6);
  double lo = v_star, hi = v_star;
  for (int i = 0; i < 400; ++i) {
    lo -= step;
    if (log_integrand(lo) < f_star - drop) break;
  }
  warm = ctx.x_mb;
  for (int i = 0; i < 400; ++i) {
    hi += step;
    if (log_integrand(hi) < f_star - drop) break;
  }

  LaplaceProfile prof;
  prof.xi = xi;
  prof.sigma2_grid.resize(grid_nodes);
  prof.integrand.resize(grid_nodes);
  const double h = (hi - lo) / (grid_nodes - 1);
  warm = ctx.x_mb;
  std::vector<double> terms;
  terms.reserve(grid_nodes);
  for (int i = 0; i < grid_nodes; ++i) {
    const double v = lo + h * i;
    const double f = log_integrand(v);
    prof.sigma2_grid[i] = std::exp(v);
    prof.integrand[i] = f;
    const double wgt = (i == 0 || i == grid_nodes - 1) ? 0.5 : 1.0;
    terms.push_back(f + std::log(h * wgt));
  }
  prof.log_m_tilde = logsumexp(terms);
  return prof;
}

double to_internal(const ModelSpec& model, XiName name, double value) {
  if (name == XiName::nu && model.link == LinkFamily::robit)
    return std::isfinite(value) ? 1.0 / value : 0.0;
  return value;
}

double from_internal(const ModelSpec& model, XiName name, double value) {
  if (name == XiName::nu && model.link == LinkFamily::robit)
    return value > 0.0 ? 1.0 / value : pos_inf;
  return value;
}

namespace {

struct ProfileCache {
  const ModelSpec& model;
  const Dataset& data;
  std::map<std::vector<double>, double> cache;

  double eval(const XiPoint& xi) {
    std::vector<double> key{xi.nu, xi.phi, xi.kappa, xi.omega};
    for (auto& k : key)
      if (std::isnan(k)) k = -1e308;
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    double v;
    try {
      v = approx_marginal(model, data, xi).log_m_tilde;
    } catch (const NumericError&) {
      v = neg_inf;
    }
    cache.emplace(std::move(key), v);
    return v;
  }
};

}  // namespace

SkeletonSet build_skeleton(const ModelSpec& model, const Dataset& data, double alpha,
                           int T) {
  if (!(alpha > 0.0 && alpha < 1.0) && alpha != 1.0)
    throw ConfigError("skeleton alpha must lie in (0,1]");
  if (T < 2) throw ConfigError("skeleton grid resolution T must be >= 2");
  model.validate();
  const std::vector<XiName> comps = model.estimated_components();
  if (comps.empty()) throw ConfigError("no estimated xi components to build a skeleton");

  ProfileCache prof{model, data, {}};

  // bounds in internal coordinates
  std::vector<double> lo(comps.size()), hi(comps.size());
  for (std::size_t j = 0; j < comps.size(); ++j) {
    const XiComponent& c = comps[j] == XiName::nu    ? model.nu
                           : comps[j] == XiName::phi ? model.phi
                           : comps[j] == XiName::kappa ? model.kappa
                                                       : model.omega;
    double a = to_internal(model, comps[j], c.lo);
    double b = to_internal(model, comps[j], c.hi);
    lo[j] = std::min(a, b);
    hi[j] = std::max(a, b);
  }

  auto point_at = [&](const Vec& u) {
    XiPoint xi = model.base_point();
    for (std::size_t j = 0; j < comps.size(); ++j)
      xi.set(comps[j], from_internal(model, comps[j], u[j]));
    return xi;
  };
  auto value_at = [&](const Vec& u) { return prof.eval(point_at(u)); };

  // locate the profile maximizer xi_tilde
  Vec u_star(comps.size());
  double f_star;
  if (comps.size() == 1) {
    const double u = golden_section_max(
        [&](double x) {
          Vec v(1);
          v[0] = x;
          return value_at(v);
        },
        lo[0], hi[0], 1e-5);
    u_star[0] = u;
    f_star = value_at(u_star);
  } else {
    Vec x0(comps.size()), step(comps.size()), blo(comps.size()), bhi(comps.size());
    for (std::size_t j = 0; j < comps.size(); ++j) {
      x0[j] = 0.5 * (lo[j] + hi[j]);
      step[j] = 0.25 * (hi[j] - lo[j]);
      blo[j] = lo[j];
      bhi[j] = hi[j];
    }
    auto res = nelder_mead_max(value_at, x0, step, blo, bhi, 250, 1e-8);
    // one restart from the best corner-ish point guards against a bad simplex
    Vec x1 = res.x;
    for (std::size_t j = 0; j < comps.size(); ++j) step[j] = 0.08 * (hi[j] - lo[j]);
    auto res2 = nelder_mead_max(value_at, x1, step, blo, bhi, 150, 1e-9);
    u_star = res2.f > res.f ? res2.x : res.x;
    f_star = std::max(res2.f, res.f);
  }

  if (f_star == neg_inf)
    throw NumericError("skeleton search failed: profile degenerate everywhere");
  const double threshold = f_star + std::log(alpha);

  // per-component alpha-crossing interval by bisection
  std::vector<Vec> comp_grid(comps.size());
  for (std::size_t j = 0; j < comps.size(); ++j) {
    auto along = [&](double x) {
      Vec u = u_star;
      u[j] = x;
      return value_at(u);
    };
    auto crossing = [&](double inside, double outside) {
      // inside has value >= threshold, outside < threshold (or is the bound)
      for (int it = 0; it < 30; ++it) {
        const double mid = 0.5 * (inside + outside);
        if (along(mid) >= threshold) inside = mid;
        else outside = mid;
      }
      return inside;
    };
    double left = u_star[j], right = u_star[j];
    if (alpha < 1.0) {
      if (along(lo[j]) >= threshold) left = lo[j];
      else left = crossing(u_star[j], lo[j]);
      if (along(hi[j]) >= threshold) right = hi[j];
      else right = crossing(u_star[j], hi[j]);
    }
    Vec g(T);
    for (int k = 0; k < T; ++k)
      g[k] = left + (right - left) * k / (T - 1.0);
    comp_grid[j] = g;
  }

  // cross the per-component grids and prune below the threshold
  SkeletonSet skel;
  skel.alpha = alpha;
  skel.T = T;
  std::vector<int> idx(comps.size(), 0);
  std::vector<std::pair<XiPoint, double>> retained;
  int best_retained = -1;
  double best_val = neg_inf;
  XiPoint best_point;
  for (;;) {
    Vec u(comps.size());
    for (std::size_t j = 0; j < comps.size(); ++j) u[j] = comp_grid[j][idx[j]];
    const XiPoint xi = point_at(u);
    const double v = value_at(u);
    if (v > best_val) {
      best_val = v;
      best_point = xi;
    }
    if (v >= threshold) {
      auto same = [](double a, double b) {
        return a == b || (std::isnan(a) && std::isnan(b));
      };
      bool dup = false;
      for (auto& [q, qv] : retained)
        if (same(q.nu, xi.nu) && same(q.phi, xi.phi) && same(q.kappa, xi.kappa) &&
            same(q.omega, xi.omega)) {
          dup = true;
          break;
        }
      if (!dup) retained.emplace_back(xi, v);
    }
    std::size_t j = 0;
    while (j < comps.size() && ++idx[j] == T) {
      idx[j] = 0;
      ++j;
    }
    if (j == comps.size()) break;
  }
  if (retained.empty()) retained.emplace_back(best_point, best_val);

  for (std::size_t i = 0; i < retained.size(); ++i) {
    skel.points.push_back(retained[i].first);
    skel.log_m.push_back(retained[i].second);
    if (best_retained < 0 || retained[i].second > retained[best_retained].second)
      best_retained = static_cast<int>(i);
  }
  skel.reference_index = best_retained;
  return skel;
}

}  // namespace sglmm
