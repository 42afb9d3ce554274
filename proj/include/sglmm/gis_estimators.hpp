#ifndef SGLMM_GIS_ESTIMATORS_HPP
#define SGLMM_GIS_ESTIMATORS_HPP

#include <map>
#include <memory>

#include "sglmm/mcmc.hpp"

namespace sglmm {

// log q_{xi_i}(sample) for every skeleton point i over the pooled draws.
struct LogQMatrix {
  Mat values;               // k x N_total
  std::vector<int> origin;  // source chain per pooled column
  std::vector<int> sizes;   // N_j per chain

  Eigen::Index k() const { return values.rows(); }
  Eigen::Index total() const { return values.cols(); }
};

enum class StageSelect { stage1, stage2, all };

// Pools the selected draw range of each chain and evaluates every skeleton
// density at every pooled (psi, w).
LogQMatrix build_logq_matrix(const ModelSpec& model, const Dataset& data,
                             const TransformPlan& plan,
                             const std::vector<XiPoint>& skeleton,
                             const std::vector<ChainBundle>& chains,
                             StageSelect stage);

struct RLEstimate {
  Vec log_r;  // log r_hat, normalized so log_r[0] = 0
  Vec delta;  // maximizer of the quasi-likelihood, sum = 0
  int iters = 0;
};

// Reverse logistic regression; throws SeparabilityError when the pooled
// sample splits into blocks with no cross support.
RLEstimate rl_estimate(const LogQMatrix& logq);

std::vector<std::vector<int>> separability_blocks(const LogQMatrix& logq);

struct SepRange {
  int i, i2, j;  // density pair (i, i2), source chain j
  double lo, hi; // range of log L^{(i;j;l)} - log L^{(i2;j;l)}
};
std::vector<SepRange> separability_report(const LogQMatrix& logq);

struct BfEval {
  double log_bf = neg_inf;
  double mc_se = 0.0;
  bool warn_concentrated = false;  // > 99% of weight from one chain
  bool degenerate = false;         // all-(-inf) numerator
};

enum class EstimatorKind { untransformed, mu_reparam, general_reparam, control_variate };

// The deterministic BF surface built from frozen stage-2 draws and r_hat.
class BfSurface {
 public:
  BfSurface(const ModelSpec& model, const Dataset& data, const TransformPlan& plan,
            std::vector<XiPoint> skeleton, const std::vector<ChainBundle>& chains,
            StageSelect stage, Vec log_r);

  BfEval eval(const XiPoint& xi) const;
  BfEval eval_control_variate(const XiPoint& xi, bool force_alpha_zero = false,
                              bool* ridge_warning = nullptr) const;

  // per-sample log Y for diagnostics and the control-variate regression
  Vec log_y(const XiPoint& xi) const;

  const std::vector<XiPoint>& skeleton() const { return skeleton_; }
  const ModelSpec& model() const { return model_; }
  EstimatorKind kind() const;
  Eigen::Index n_samples() const { return denominators_.size(); }

 private:
  Vec log_q_at(const XiPoint& xi) const;  // over pooled samples, cached

  const ModelSpec& model_;
  const Dataset& data_;
  TransformPlan plan_;
  std::vector<XiPoint> skeleton_;
  Vec log_r_;
  Mat psi_beta_;   // p x N pooled
  Vec psi_sigma2_;
  Mat wdraws_;     // n x N pooled
  std::vector<int> origin_;
  std::vector<int> sizes_;
  Vec denominators_;  // log sum_i a_i q_i / r_i per sample
  Mat skel_logq_;     // k x N
  mutable std::map<double, std::pair<Mat, Vec>> nu_cache_;  // nu -> (z cols, logjac)
  mutable std::map<std::array<double, 3>, std::shared_ptr<CholFactor>> chol_cache_;
};

// Batch-means MC standard error of a mean over pooled chain draws, combined
// across independent chains with floor(sqrt(N_j)) batches each.
double batch_means_se(const Vec& values, const std::vector<int>& sizes);

struct EBFit {
  XiPoint xi_hat;
  std::vector<XiName> estimated;
  std::vector<bool> at_boundary;
  double log_bf_at_hat = 0.0;
  double bf_mc_se = 0.0;
  Mat hessian_inv;  // over interior components, order = estimated minus boundary
  Vec se;
  std::vector<XiName> hessian_components;
  bool hessian_projected = false;
  Vec beta_mean, beta_sd;
  double sigma2_mean = 0.0, sigma2_sd = 0.0;
};

// Two-phase surface maximization: refined skeleton grid then Nelder-Mead
// polish, in internal coordinates with box constraints.
EBFit maximize_bf(const BfSurface& surface, const ModelSpec& model);

// Monte Carlo estimate of -d2/dxi dxi' log m_xi(y) at xi_hat inverted to a
// covariance matrix; indefinite estimates are projected to PSD.
Mat eb_stderr(const ModelSpec& model, const Dataset& data, const TransformPlan& plan,
              const XiPoint& xi_hat, const ChainBundle& chain,
              const std::vector<XiName>& components, bool* projected = nullptr);

// The per-draw score/Hessian of log q in the given components (exposed for
// the derivative acceptance checks).
void logq_xi_derivatives(const ModelSpec& model, const Dataset& data,
                         const TransformPlan& plan, const XiPoint& xi,
                         const std::vector<XiName>& components, const Vec& beta,
                         double sigma2, const Vec& w, Vec& score, Mat& hessian);

}  // namespace sglmm

#endif
