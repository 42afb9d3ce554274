#ifndef SGLMM_PREDICT_HPP
#define SGLMM_PREDICT_HPP

#include "sglmm/model_selection.hpp"

namespace sglmm {

// Per-draw conditional simulation of the latent field at new locations.
// The prediction target is the smooth (nugget-free) field unless
// include_nugget is set.
Mat conditional_field(const ChainBundle& chain, const ModelSpec& model,
                      const Dataset& data, const Mat& new_locations,
                      const Mat& X_new, std::uint64_t seed,
                      bool include_nugget = false);

struct PredictionGrid {
  Mat locations;   // m x 2
  Mat mu_draws;    // m x L
  Vec mean, sd, q05, q50, q95;
};

PredictionGrid predict_mu(const ChainBundle& chain, const ModelSpec& model,
                          const Dataset& data, const Mat& new_locations,
                          const Mat& X_new, std::uint64_t seed,
                          bool include_nugget = false);

struct CVScores {
  double neg_score = 0.0;
  double rmse = 0.0;
  Vec site_neg_score;    // per-site contributions
  Vec site_sq_err;       // per-site mean squared error contributions
  int failed_folds = 0;
};

// Scores per-site predictive draws mu_draws (n x L) against the data.
CVScores score_predictions(ResponseKind kind, const Vec& y, const Vec& t,
                           const Mat& mu_draws);

}  // namespace sglmm

#endif
