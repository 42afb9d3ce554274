#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "sglmm/pipeline.hpp"

namespace fs = std::filesystem;
using namespace sglmm;

namespace {

struct CommonOpts {
  std::vector<std::string> configs;
  long seed_override = -1;
  int threads = 0;
  std::string out_dir;
};

Config load_with_overrides(const std::string& path, const CommonOpts& opts) {
  Config cfg = Config::load(path);
  if (opts.seed_override >= 0) {
    cfg.kv["chain.seed"] = std::to_string(opts.seed_override);
    cfg.kv["sim.seed"] = std::to_string(opts.seed_override);
  }
  if (opts.threads > 0) cfg.kv["threads"] = std::to_string(opts.threads);
  if (!opts.out_dir.empty()) cfg.kv["output.dir"] = opts.out_dir;
  return cfg;
}

int do_simulate(const CommonOpts& opts) {
  Config cfg = load_with_overrides(opts.configs.at(0), opts);
  cmd_simulate(parse_sim_config(cfg));
  return 0;
}

int do_skeleton(const CommonOpts& opts) {
  Config cfg = load_with_overrides(opts.configs.at(0), opts);
  RunConfig rc = parse_run_config(cfg);
  Dataset data = load_dataset(rc.data_path);
  SkeletonSet skel = build_skeleton(rc.model, data, rc.skeleton_alpha, rc.skeleton_T);
  fs::create_directories(rc.out_dir);
  write_skeleton_table(rc.out_dir + "/skeleton.txt", skel);
  std::cout << "skeleton: " << skel.points.size() << " points -> " << rc.out_dir
            << "/skeleton.txt\n";
  return 0;
}

int do_fit(const CommonOpts& opts) {
  Config cfg = load_with_overrides(opts.configs.at(0), opts);
  RunConfig rc = parse_run_config(cfg);
  Dataset data = load_dataset(rc.data_path);
  FitResult fit = fit_model(rc, data);
  write_fit_outputs(fit, data);
  std::cout << "xi_hat: nu=" << fit.eb.xi_hat.nu << " phi=" << fit.eb.xi_hat.phi
            << " kappa=" << fit.eb.xi_hat.kappa << " omega=" << fit.eb.xi_hat.omega
            << "\nlog_bf=" << fit.eb.log_bf_at_hat << " (se " << fit.eb.bf_mc_se
            << ")\noutputs -> " << rc.out_dir << "\n";
  return 0;
}

int do_predict(const CommonOpts& opts, const std::string& grid_path,
               const std::string& fit_dir) {
  Config cfg = load_with_overrides(opts.configs.at(0), opts);
  RunConfig rc = parse_run_config(cfg);
  Dataset data = load_dataset(rc.data_path);
  FittedModel fm = load_fitted_model(fit_dir.empty() ? rc.out_dir : fit_dir);

  CsvTable grid = read_csv(grid_path);
  if (grid.header.size() < 2 || grid.header[0] != "x" || grid.header[1] != "y")
    throw DataError(grid_path + ": expected header x,y[,covariates...]");
  const Eigen::Index m = grid.values.rows();
  Mat loc(m, 2);
  if (m > 0) {
    loc.col(0) = grid.values.col(0);
    loc.col(1) = grid.values.col(1);
  }
  Mat X_new = Mat::Ones(m, data.p());
  for (Eigen::Index j = 0; j + 2 < static_cast<Eigen::Index>(grid.header.size()) &&
                           j + 1 < data.p();
       ++j)
    X_new.col(j + 1) = grid.values.col(j + 2);

  fs::create_directories(rc.out_dir);
  Mat outv(m, 7);
  if (m > 0) {
    PredictionGrid pg = predict_mu(fm.chain_at_hat, fm.spec, data, loc, X_new,
                                   rc.chain.seed);
    outv.col(0) = loc.col(0);
    outv.col(1) = loc.col(1);
    outv.col(2) = pg.mean;
    outv.col(3) = pg.sd;
    outv.col(4) = pg.q05;
    outv.col(5) = pg.q50;
    outv.col(6) = pg.q95;
  }
  write_csv(rc.out_dir + "/predictions.csv",
            {"x", "y", "mean", "sd", "q05", "q50", "q95"}, outv);
  std::cout << "predictions -> " << rc.out_dir << "/predictions.csv\n";
  return 0;
}

int do_select(const CommonOpts& opts) {
  if (opts.configs.empty()) throw ConfigError("select needs at least one --config");
  std::vector<FittedModel> models;
  Dataset data;
  std::string out_dir = opts.out_dir.empty() ? "select_out" : opts.out_dir;
  for (std::size_t r = 0; r < opts.configs.size(); ++r) {
    Config cfg = load_with_overrides(opts.configs[r], opts);
    RunConfig rc = parse_run_config(cfg);
    if (r == 0) data = load_dataset(rc.data_path);
    FittedModel fm = load_fitted_model(rc.out_dir);
    fm.model_id = rc.out_dir;
    models.push_back(std::move(fm));
  }
  SelectResult sel = run_select(models, data);
  fs::create_directories(out_dir);
  std::ofstream out(out_dir + "/weights.csv");
  out << "model_id,log_C,aic_star,weight\n";
  for (std::size_t r = 0; r < models.size(); ++r)
    out << sel.model_ids[r] << "," << format_double(sel.weights.log_C_hat[r]) << ","
        << format_double(sel.weights.aic_star[r]) << ","
        << format_double(sel.weights.weights[r]) << "\n";
  std::cout << "weights -> " << out_dir << "/weights.csv\n";
  return 0;
}

int do_cv(const CommonOpts& opts) {
  if (opts.configs.empty()) throw ConfigError("cv needs at least one --config");
  std::vector<RunConfig> configs;
  Dataset data;
  std::string out_dir = opts.out_dir.empty() ? "cv_out" : opts.out_dir;
  for (std::size_t r = 0; r < opts.configs.size(); ++r) {
    Config cfg = load_with_overrides(opts.configs[r], opts);
    configs.push_back(parse_run_config(cfg));
    if (r == 0) data = load_dataset(configs[0].data_path);
  }
  CvResult cv = run_cv(configs, data);
  fs::create_directories(out_dir);
  std::ofstream out(out_dir + "/cv_scores.csv");
  out << "model_id,neg_score,rmse,failed_folds\n";
  for (std::size_t r = 0; r < configs.size(); ++r)
    out << cv.model_ids[r] << "," << format_double(cv.per_model[r].neg_score) << ","
        << format_double(cv.per_model[r].rmse) << "," << cv.per_model[r].failed_folds
        << "\n";
  out << "ensemble," << format_double(cv.ensemble.neg_score) << ","
      << format_double(cv.ensemble.rmse) << "," << cv.ensemble.failed_folds << "\n";
  std::cout << "cv scores -> " << out_dir << "/cv_scores.csv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Empirical Bayes estimation, model selection, and prediction for "
               "spatial GLMMs with parametric links"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string grid_path, fit_dir;

  auto add_common = [&](CLI::App* sub, bool multi_config) {
    auto* c = sub->add_option("--config", opts.configs, "configuration file(s)");
    c->required();
    if (!multi_config) c->expected(1);
    sub->add_option("--seed", opts.seed_override, "override chain.seed / sim.seed");
    sub->add_option("--threads", opts.threads, "override threads");
    sub->add_option("--out", opts.out_dir, "override output directory");
  };

  auto* sim = app.add_subcommand("simulate", "draw a dataset from the generative model");
  add_common(sim, false);
  auto* skel = app.add_subcommand("skeleton", "build the importance-density skeleton");
  add_common(skel, false);
  auto* fit = app.add_subcommand("fit", "two-stage empirical Bayes fit");
  add_common(fit, false);
  auto* pred = app.add_subcommand("predict", "predict the mean response on a grid");
  add_common(pred, false);
  pred->add_option("--grid", grid_path, "grid CSV with x,y columns")->required();
  pred->add_option("--fit-dir", fit_dir, "fit output directory (default: output.dir)");
  auto* sel = app.add_subcommand("select", "cross-model weights from completed fits");
  add_common(sel, true);
  auto* cv = app.add_subcommand("cv", "leave-one-out cross-validation");
  add_common(cv, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return do_simulate(opts);
    if (skel->parsed()) return do_skeleton(opts);
    if (fit->parsed()) return do_fit(opts);
    if (pred->parsed()) return do_predict(opts, grid_path, fit_dir);
    if (sel->parsed()) return do_select(opts);
    if (cv->parsed()) return do_cv(opts);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
