#ifndef SGLMM_PIPELINE_HPP
#define SGLMM_PIPELINE_HPP

#include "sglmm/io.hpp"
#include "sglmm/laplace_skeleton.hpp"
#include "sglmm/model_selection.hpp"
#include "sglmm/predict.hpp"

namespace sglmm {

struct SimTruth {
  Vec z, mu;
  SimConfig config;
};

// Draws one dataset from the generative model.
std::pair<Dataset, SimTruth> simulate_dataset(const SimConfig& sc);

// simulate command: dataset CSV plus <out>_truth.csv / <out>_truth.json.
void cmd_simulate(const SimConfig& sc);

struct FitTimings {
  double skeleton_s = 0, stage1_s = 0, stage2_s = 0, final_s = 0, total_s = 0;
};

struct FitResult {
  RunConfig config;
  SkeletonSet skeleton;
  TransformPlan plan;
  RLEstimate rl;
  EBFit eb;
  ChainBundle final_chain;
  std::vector<std::string> warnings;
  double mean_z_accept = 0.0;
  bool separability_flag = false;
  FitTimings timings;
  std::vector<std::pair<XiPoint, BfEval>> surface_evals;
};

// Two-stage empirical Bayes fit: skeleton, stage-1 chains + RL, stage-2
// chains + BF maximization, final chain at xi_hat, standard errors.
FitResult fit_model(const RunConfig& rc, const Dataset& data);

void write_fit_outputs(const FitResult& fit, const Dataset& data);
void write_skeleton_table(const std::string& path, const SkeletonSet& skel);
SkeletonSet read_skeleton_table(const std::string& path);

// Reload what select/cv need from a fit output directory.
FittedModel load_fitted_model(const std::string& out_dir);

struct SelectResult {
  ModelWeights weights;
  std::vector<std::string> model_ids;
};

SelectResult run_select(const std::vector<FittedModel>& models, const Dataset& data);

struct CvResult {
  std::vector<CVScores> per_model;
  CVScores ensemble;
  std::vector<std::string> model_ids;
};

// Leave-one-out cross-validation over R already-parsed model configs; each
// fold refits with the full-data skeleton and scores held-out draws.
CvResult run_cv(const std::vector<RunConfig>& configs, const Dataset& data,
                int draws_per_fold = 0);

}  // namespace sglmm

#endif
