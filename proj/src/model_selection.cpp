#include "sglmm/model_selection.hpp"

namespace sglmm {

namespace {

// Every model's draws re-expressed over the shared mean coordinate: each
// model's own link pushes z to w = mu, so all densities live on the same
// space and the RL machinery applies across models.
TransformPlan cross_model_plan(const ModelSpec& spec, const Dataset& data) {
  std::vector<double> y(data.y.data(), data.y.data() + data.y.size());
  if (maps_onto_reals(spec.link))
    return make_plan(spec.link, PlanKind::mu_reparam, y);
  return make_plan(spec.link, PlanKind::general_reparam, y);
}

}  // namespace

Vec cross_model_rl(const std::vector<FittedModel>& models, const Dataset& data) {
  const int R = static_cast<int>(models.size());
  if (R < 1) throw ConfigError("no models for cross-model RL");
  if (R == 1) return Vec::Zero(1);
  for (const auto& m : models) {
    if (m.spec.response != models[0].spec.response)
      throw DataError("cross-model RL needs a common response family");
    if (m.chain_at_hat.z.rows() != data.n())
      throw DataError("fitted chains do not align with the dataset");
  }

  // pooled draws: each model's chain transformed through its own mean plan
  std::vector<Mat> wdraws(R);
  std::vector<int> sizes(R);
  Eigen::Index total = 0;
  for (int r = 0; r < R; ++r) {
    const auto& m = models[r];
    TransformPlan plan = cross_model_plan(m.spec, data);
    const LinkSpec link = m.spec.link_spec(m.xi_hat);
    const Eigen::Index L = m.chain_at_hat.n_draws();
    wdraws[r].resize(data.n(), L);
    for (Eigen::Index l = 0; l < L; ++l)
      wdraws[r].col(l) = forward_transform(plan, link, m.chain_at_hat.z.col(l));
    sizes[r] = static_cast<int>(L);
    total += L;
  }

  LogQMatrix logq;
  logq.values.resize(R, total);
  logq.sizes = sizes;
  logq.origin.resize(total);
  {
    Eigen::Index col = 0;
    for (int j = 0; j < R; ++j)
      for (Eigen::Index l = 0; l < sizes[j]; ++l, ++col)
        logq.origin[static_cast<std::size_t>(col)] = j;
  }
  for (int r = 0; r < R; ++r) {
    const auto& m = models[r];
    TransformPlan plan = cross_model_plan(m.spec, data);
    CholFactor chol =
        build_cov(data.locations, m.spec.cov_params(m.xi_hat)).chol;
    Eigen::Index col = 0;
    for (int j = 0; j < R; ++j) {
      for (Eigen::Index l = 0; l < sizes[j]; ++l, ++col) {
        logq.values(r, col) =
            log_q(m.spec, data, plan, m.xi_hat, chol,
                  models[j].chain_at_hat.beta.col(l),
                  models[j].chain_at_hat.sigma2[l], wdraws[j].col(l));
      }
    }
  }

  RLEstimate est;
  try {
    est = rl_estimate(logq);
  } catch (SeparabilityError& e) {
    std::string msg = "cross-model separability: ";
    throw SeparabilityError(msg + e.what(), e.blocks);
  }
  return est.log_r;
}

ModelWeights model_weights(const Vec& log_C_hat, const std::vector<int>& d) {
  if (static_cast<std::size_t>(log_C_hat.size()) != d.size())
    throw ConfigError("model_weights: log_C and d length mismatch");
  ModelWeights out;
  out.log_C_hat = log_C_hat;
  const Eigen::Index R = log_C_hat.size();
  out.aic_star.resize(R);
  for (Eigen::Index r = 0; r < R; ++r)
    out.aic_star[r] = -2.0 * log_C_hat[r] + 2.0 * d[static_cast<std::size_t>(r)];
  Vec half = -0.5 * out.aic_star;
  const double lse = logsumexp(half);
  out.weights = (half.array() - lse).exp();
  return out;
}

Vec ensemble_mean(const Vec& weights, const Mat& predictions_per_model) {
  if (weights.size() != predictions_per_model.rows())
    throw DataError("ensemble: weights and prediction rows misaligned");
  return predictions_per_model.transpose() * weights;
}

}  // namespace sglmm
