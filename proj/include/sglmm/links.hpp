#ifndef SGLMM_LINKS_HPP
#define SGLMM_LINKS_HPP

#include <string>
#include <vector>

#include "sglmm/common.hpp"

namespace sglmm {

enum class LinkFamily {
  logit,
  probit,
  robit,
  wallace_robit,
  gev,
  modified_gev,
  neg_modified_gev,
  boxcox,
  modified_boxcox,
  log_link,
};

LinkFamily link_family_from_string(const std::string& s);
std::string to_string(LinkFamily f);

bool link_has_nu(LinkFamily f);
bool maps_onto_reals(LinkFamily f);
// binomial-mean families map R -> (0,1); the rest map to (0,inf)
bool is_cdf_link(LinkFamily f);

struct LinkSpec {
  LinkFamily family = LinkFamily::logit;
  double nu = std::numeric_limits<double>::quiet_NaN();

  void validate() const;  // throws DomainError on bad nu
};

// Partial derivatives of the inverse link mu = f_nu(z) at (z, nu).
// Suffix letters: z-derivative per 'z', nu-derivative per 'n'.
struct ZJet {
  double f = 0;
  double fz = 0, fzz = 0, fzzz = 0;
  double fn = 0, fnn = 0;
  double fnz = 0, fnzz = 0, fnnz = 0;
  bool boundary = false;  // non-invertible point (gev/boxcox guard)
};

// Partial derivatives of the link z = h_nu(mu) at (mu, nu), i.e. the
// transform direction g used by the reparameterized estimators.
struct WJet {
  double g = 0;            // z
  double gw = 0;           // dz/dmu
  double gn = 0, gnn = 0;  // d/dnu, d2/dnu2 at fixed mu
  double gnw = 0, gnnw = 0;
};

// Core evaluations. inv_link_jet never throws on boundary points of the
// non-onto families; it sets ZJet::boundary instead. link_jet throws
// DomainError when mu is outside the open mean range.
ZJet inv_link_jet(const LinkSpec& link, double z);
WJet link_jet(const LinkSpec& link, double mu);

// Spec-level ops.
double inv_link_eval(const LinkSpec& link, double z);  // throws on boundary
double link_eval(const LinkSpec& link, double mu);

enum class GradKind { df_dnu, dg_dnu, d2g_dnu2, dg_dw };
double link_grad(const LinkSpec& link, double point, GradKind kind);

// Per-site transform selection for the reparameterized chains.
enum class SiteTransform { identity, inverse_link, auxiliary };

struct TransformPlan {
  std::vector<SiteTransform> per_site;
  LinkFamily aux_family = LinkFamily::wallace_robit;

  bool all_identity() const;
  bool uses_aux() const;
};

enum class PlanKind { identity, mu_reparam, general_reparam };

std::string to_string(PlanKind k);
PlanKind plan_kind_from_string(const std::string& s);

// Builds the plan for a model link. For general_reparam the auxiliary family
// is the fast counterpart of the model family (Wallace for robit, raw
// Box-Cox for Poisson links with y_i > 0 and the modified form where
// y_i = 0). y may be empty for non-mixed plans.
TransformPlan make_plan(LinkFamily model_link, PlanKind kind,
                        const std::vector<double>& y = {});

// The transform family applied at one site: the model link for
// inverse_link sites, aux_family for auxiliary sites.
LinkSpec site_transform_spec(const TransformPlan& plan, const LinkSpec& model_link,
                             int site);

// w = gbar^{-1}(z) elementwise under the plan; inverse of back_transform.
Vec forward_transform(const TransformPlan& plan, const LinkSpec& model_link,
                      const Vec& z);
// z = gbar(w) elementwise.
Vec back_transform(const TransformPlan& plan, const LinkSpec& model_link,
                   const Vec& w);

// sum_i log g'_nu(w_i); throws DomainError if any g' <= 0.
double log_jacobian(const LinkSpec& model_link, const TransformPlan& plan,
                    const Vec& w);

}  // namespace sglmm

#endif
