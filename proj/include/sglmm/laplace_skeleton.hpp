#ifndef SGLMM_LAPLACE_SKELETON_HPP
#define SGLMM_LAPLACE_SKELETON_HPP

#include "sglmm/model_core.hpp"

namespace sglmm {

struct ModeResult {
  Vec z_tilde;
  Mat H_tilde;  // T/sigma2 + D at the mode
  int iters = 0;
  double grad_inf_norm = 0.0;
};

// Maximizes log p[y, z | sigma2, xi] over z (beta integrated out through T).
ModeResult find_mode(const ModelSpec& model, const Dataset& data, const XiPoint& xi,
                     double sigma2, const Vec* warm_start = nullptr);

struct LaplaceProfile {
  XiPoint xi;
  Vec sigma2_grid;
  Vec integrand;  // log values matched to the grid
  double log_m_tilde = neg_inf;
};

LaplaceProfile approx_marginal(const ModelSpec& model, const Dataset& data,
                               const XiPoint& xi, int grid_nodes = 61);

struct SkeletonSet {
  std::vector<XiPoint> points;
  int reference_index = 0;
  double alpha = 0.6;
  int T = 3;
  std::vector<double> log_m;  // profile value per retained point
};

// Profile-threshold construction: per-component alpha-level intervals around
// the profile maximizer, discretized to T points, crossed, then pruned.
SkeletonSet build_skeleton(const ModelSpec& model, const Dataset& data, double alpha,
                           int T);

// Search-space helpers shared with the BF maximizer: robit nu is explored on
// the reciprocal scale so that nu = inf is the finite endpoint 0.
double to_internal(const ModelSpec& model, XiName name, double value);
double from_internal(const ModelSpec& model, XiName name, double value);

}  // namespace sglmm

#endif
