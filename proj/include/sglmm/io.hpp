#ifndef SGLMM_IO_HPP
#define SGLMM_IO_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sglmm/mcmc.hpp"

namespace sglmm {

std::string format_double(double x);  // %.17g, round-trip stable

struct CsvTable {
  std::vector<std::string> header;
  Mat values;  // rows x cols
};

CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Mat& values);

// Plain-text key = value configuration with dotted keys and '#' comments.
struct Config {
  std::map<std::string, std::string> kv;

  static Config load(const std::string& path);
  static Config from_string(const std::string& text);

  bool has(const std::string& key) const { return kv.count(key) > 0; }
  std::string get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& dflt) const;
  double num(const std::string& key) const;
  double num_or(const std::string& key, double dflt) const;
  long integer_or(const std::string& key, long dflt) const;
  std::vector<double> list(const std::string& key) const;
  std::vector<std::string> tokens(const std::string& key) const;
};

// Dataset CSV: columns x, y, response, trials, then covariates; the design
// is an intercept plus any covariate columns.
Dataset load_dataset(const std::string& path);
void save_dataset(const std::string& path, const Dataset& data);

enum class SkeletonMode { grid, laplace, file };

struct RunConfig {
  std::string data_path;
  ModelSpec model;
  PlanKind plan = PlanKind::general_reparam;
  ChainConfig chain;
  int final_n = 1000;
  bool strict_stage2 = false;
  SkeletonMode skeleton_mode = SkeletonMode::laplace;
  std::map<XiName, std::vector<double>> skeleton_grid;
  double skeleton_alpha = 0.6;
  int skeleton_T = 3;
  std::string skeleton_file;
  std::string out_dir = "out";
  int threads = 1;
};

RunConfig parse_run_config(const Config& cfg);

struct SimConfig {
  int n = 100;
  ResponseKind response = ResponseKind::binomial;
  LinkFamily link = LinkFamily::logit;
  double nu = std::numeric_limits<double>::quiet_NaN();
  CorrFamily corr = CorrFamily::exponential;
  double phi = 0.5;
  double kappa = std::numeric_limits<double>::quiet_NaN();
  double omega = 0.0;
  double sigma2 = 1.0;
  Vec beta;
  double t = 1.0;
  double domain = 1.0;
  std::uint64_t seed = 1;
  std::string out = "sim.csv";
};

SimConfig parse_sim_config(const Config& cfg);

}  // namespace sglmm

#endif
