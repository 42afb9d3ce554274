#ifndef SGLMM_MODEL_SELECTION_HPP
#define SGLMM_MODEL_SELECTION_HPP

#include "sglmm/gis_estimators.hpp"

namespace sglmm {

struct FittedModel {
  std::string model_id;
  ModelSpec spec;
  XiPoint xi_hat;
  ChainBundle chain_at_hat;  // final chain drawn at xi_hat
  int d = 0;                 // interior-estimated xi components
};

// log C_hat_r = log m_r / m_1 by cross-model reverse logistic regression on
// the mean-parameterized draws; log_C_hat[0] = 0.
Vec cross_model_rl(const std::vector<FittedModel>& models, const Dataset& data);

struct ModelWeights {
  Vec log_C_hat;
  Vec aic_star;
  Vec weights;
};

ModelWeights model_weights(const Vec& log_C_hat, const std::vector<int>& d);

// mu_hat(s) = sum_r weight_r mu_hat_r(s); predictions aligned by location.
Vec ensemble_mean(const Vec& weights, const Mat& predictions_per_model);

}  // namespace sglmm

#endif
