#include "sglmm/model_core.hpp"

namespace sglmm {

namespace {
constexpr double log_2pi = 1.8378770664093454836;

double lchoose(double n, double k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}
}  // namespace

ResponseKind response_from_string(const std::string& s) {
  if (s == "binomial") return ResponseKind::binomial;
  if (s == "poisson") return ResponseKind::poisson;
  throw ConfigError("unknown response family: " + s);
}

std::string to_string(ResponseKind k) {
  return k == ResponseKind::binomial ? "binomial" : "poisson";
}

double cumulant_kpp(ResponseKind kind, double mu) {
  return kind == ResponseKind::binomial ? mu * (1.0 - mu) : mu;
}

double cumulant_kppp(ResponseKind kind, double mu) {
  return kind == ResponseKind::binomial ? mu * (1.0 - mu) * (1.0 - 2.0 * mu) : mu;
}

void Prior::validate() const {
  if (m_b.size() != V_b.rows() || V_b.rows() != V_b.cols())
    throw ConfigError("prior dimensions inconsistent");
  Eigen::LLT<Mat> llt(V_b);
  if (llt.info() != Eigen::Success)
    throw ConfigError("prior covariance V_b must be positive definite");
  if (!(n_sigma > 0.0) || !(a_sigma > 0.0))
    throw ConfigError("sigma2 prior needs n_sigma > 0 and a_sigma > 0");
}

std::string to_string(XiName n) {
  switch (n) {
    case XiName::nu: return "nu";
    case XiName::phi: return "phi";
    case XiName::kappa: return "kappa";
    case XiName::omega: return "omega";
  }
  return "?";
}

double XiPoint::get(XiName n) const {
  switch (n) {
    case XiName::nu: return nu;
    case XiName::phi: return phi;
    case XiName::kappa: return kappa;
    case XiName::omega: return omega;
  }
  return 0.0;
}

void XiPoint::set(XiName n, double v) {
  switch (n) {
    case XiName::nu: nu = v; break;
    case XiName::phi: phi = v; break;
    case XiName::kappa: kappa = v; break;
    case XiName::omega: omega = v; break;
  }
}

void ModelSpec::validate() const {
  prior.validate();
  if (nu.estimated && !link_has_nu(link))
    throw ConfigError("cannot estimate nu: " + to_string(link) + " has no nu");
  if (kappa.estimated && !corr_has_kappa(corr))
    throw ConfigError("cannot estimate kappa: " + to_string(corr) + " has no kappa");
  if (response == ResponseKind::binomial && !is_cdf_link(link))
    throw ConfigError("binomial response needs a (0,1)-valued link");
  if (response == ResponseKind::poisson && is_cdf_link(link))
    throw ConfigError("poisson response needs a positive-mean link");
  for (auto [name, comp] :
       {std::pair{XiName::nu, nu}, {XiName::phi, phi}, {XiName::kappa, kappa},
        {XiName::omega, omega}}) {
    if (comp.estimated && !(comp.lo < comp.hi))
      throw ConfigError("estimated component " + to_string(name) +
                        " needs bounds lo < hi");
  }
}

std::vector<XiName> ModelSpec::estimated_components() const {
  std::vector<XiName> out;
  if (nu.estimated) out.push_back(XiName::nu);
  if (phi.estimated) out.push_back(XiName::phi);
  if (kappa.estimated) out.push_back(XiName::kappa);
  if (omega.estimated) out.push_back(XiName::omega);
  return out;
}

XiPoint ModelSpec::base_point() const {
  XiPoint xi;
  xi.nu = nu.value;
  xi.phi = phi.value;
  xi.kappa = kappa.value;
  xi.omega = std::isnan(omega.value) ? 0.0 : omega.value;
  return xi;
}

void Dataset::validate(ResponseKind kind) const {
  const Eigen::Index nn = y.size();
  if (locations.rows() != nn || t.size() != nn || X.rows() != nn)
    throw DataError("dataset field sizes disagree");
  if (locations.cols() != 2) throw DataError("locations must be n x 2");
  for (Eigen::Index i = 0; i < nn; ++i) {
    if (kind == ResponseKind::binomial) {
      if (!(t[i] > 0.0) || t[i] != std::floor(t[i]))
        throw DataError("binomial trials must be positive integers (row " +
                        std::to_string(i) + ")");
      if (y[i] < 0.0 || y[i] > t[i] || y[i] != std::floor(y[i]))
        throw DataError("binomial response out of range (row " + std::to_string(i) + ")");
    } else {
      if (!(t[i] > 0.0)) throw DataError("poisson exposure must be positive (row " +
                                         std::to_string(i) + ")");
      if (y[i] < 0.0 || y[i] != std::floor(y[i]))
        throw DataError("poisson response must be a count (row " + std::to_string(i) + ")");
    }
  }
}

double log_obs_density_site(ResponseKind kind, double y, double t, double mu) {
  if (std::isnan(mu)) return neg_inf;
  if (kind == ResponseKind::binomial) {
    if (mu <= 0.0) return (y == 0.0) ? 0.0 : neg_inf;
    if (mu >= 1.0) return (y == t) ? 0.0 : neg_inf;
    return lchoose(t, y) + y * std::log(mu) + (t - y) * std::log1p(-mu);
  }
  if (mu <= 0.0) return (y == 0.0) ? 0.0 : neg_inf;
  if (!std::isfinite(mu)) return neg_inf;
  const double rate = t * mu;
  return y * std::log(rate) - rate - std::lgamma(y + 1.0);
}

double log_obs_density(ResponseKind kind, const Vec& y, const Vec& t, const Vec& mu) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double l = log_obs_density_site(kind, y[i], t[i], mu[i]);
    if (l == neg_inf) return neg_inf;
    acc += l;
  }
  return acc;
}

double log_latent_density(const Vec& z, const Vec& beta, double sigma2,
                          const CholFactor& cholR, const Mat& X) {
  const double n = static_cast<double>(z.size());
  const Vec r = z - X * beta;
  return -0.5 * cholR.quad(r) / sigma2 - 0.5 * cholR.log_det -
         0.5 * n * (log_2pi + std::log(sigma2));
}

double log_scaled_inv_chisq(double sigma2, double n_sigma, double a_sigma) {
  if (!(sigma2 > 0.0)) throw DomainError("sigma2 must be positive");
  const double half_n = 0.5 * n_sigma;
  return half_n * std::log(half_n * a_sigma) - std::lgamma(half_n) -
         (half_n + 1.0) * std::log(sigma2) - half_n * a_sigma / sigma2;
}

double log_prior_psi(const Vec& beta, double sigma2, const Prior& prior) {
  if (!(sigma2 > 0.0)) throw DomainError("sigma2 must be positive");
  const double p = static_cast<double>(beta.size());
  Eigen::LLT<Mat> llt(prior.V_b);
  if (llt.info() != Eigen::Success)
    throw NumericError("V_b not positive definite");
  Mat L = llt.matrixL();
  const double logdet_Vb = 2.0 * L.diagonal().array().log().sum();
  const Vec r = beta - prior.m_b;
  const Vec s = L.triangularView<Eigen::Lower>().solve(r);
  const double normal_part = -0.5 * s.squaredNorm() / sigma2 - 0.5 * logdet_Vb -
                             0.5 * p * (log_2pi + std::log(sigma2));
  return normal_part + log_scaled_inv_chisq(sigma2, prior.n_sigma, prior.a_sigma);
}

TransformedState apply_plan(const ModelSpec& model, const TransformPlan& plan,
                            double nu, const Vec& w) {
  TransformedState st;
  const Eigen::Index n = w.size();
  st.z.resize(n);
  st.mu.resize(n);
  const LinkSpec model_link{model.link, nu};
  for (Eigen::Index i = 0; i < n; ++i) {
    const SiteTransform t = plan.per_site.empty()
                                ? SiteTransform::identity
                                : plan.per_site[i % plan.per_site.size()];
    if (t == SiteTransform::identity) {
      st.z[i] = w[i];
      ZJet j = inv_link_jet(model_link, w[i]);
      st.mu[i] = j.f;
      st.mu_boundary |= j.boundary;
      continue;
    }
    const LinkSpec tr = site_transform_spec(plan, model_link, static_cast<int>(i));
    const WJet g = link_jet(tr, w[i]);
    st.z[i] = g.g;
    if (!(g.gw > 0.0) || !std::isfinite(g.gw))
      throw DomainError("monotonicity violation in transform at site " +
                        std::to_string(i));
    st.log_jac += std::log(g.gw);
    if (t == SiteTransform::inverse_link) {
      st.mu[i] = w[i];  // f_nu(h_nu(w)) = w exactly
    } else {
      ZJet j = inv_link_jet(model_link, st.z[i]);
      st.mu[i] = j.f;
      st.mu_boundary |= j.boundary;
    }
  }
  return st;
}

double log_q(const ModelSpec& model, const Dataset& data, const TransformPlan& plan,
             const XiPoint& xi, const CholFactor& cholR, const Vec& beta,
             double sigma2, const Vec& w) {
  const TransformedState st = apply_plan(model, plan, xi.nu, w);
  const double obs = log_obs_density(model.response, data.y, data.t, st.mu);
  if (obs == neg_inf) return neg_inf;
  return obs + log_latent_density(st.z, beta, sigma2, cholR, data.X) + st.log_jac;
}

}  // namespace sglmm
