#include "sglmm/pipeline.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

namespace sglmm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

double sample_poisson(double lambda, Rng& rng) {
  if (lambda <= 0.0) return 0.0;
  if (lambda < 30.0) {
    const double L = std::exp(-lambda);
    double p = 1.0;
    double k = 0.0;
    do {
      ++k;
      p *= rng.uniform();
    } while (p > L);
    return k - 1.0;
  }
  // PTRS rejection (Hormann) for large rates
  const double b = 0.931 + 2.53 * std::sqrt(lambda);
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double v_r = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double U = rng.uniform() - 0.5;
    const double V = rng.uniform();
    const double us = 0.5 - std::abs(U);
    const double k = std::floor((2.0 * a / us + b) * U + lambda + 0.43);
    if (us >= 0.07 && V <= v_r) return k;
    if (k < 0.0 || (us < 0.013 && V > us)) continue;
    const double log_acc = std::log(V * inv_alpha / (a / (us * us) + b));
    if (log_acc <= k * std::log(lambda) - lambda - std::lgamma(k + 1.0)) return k;
  }
}

double sample_binomial(double t, double mu, Rng& rng) {
  double k = 0.0;
  for (double i = 0; i < t; ++i)
    if (rng.uniform() < mu) ++k;
  return k;
}

}  // namespace

std::pair<Dataset, SimTruth> simulate_dataset(const SimConfig& sc) {
  Rng rng(sc.seed, 0x51D, 0);
  Dataset data;
  data.locations.resize(sc.n, 2);
  for (int i = 0; i < sc.n; ++i) {
    data.locations(i, 0) = sc.domain * rng.uniform();
    data.locations(i, 1) = sc.domain * rng.uniform();
  }
  data.X = Mat::Ones(sc.n, 1);
  if (sc.beta.size() != 1)
    throw ConfigError("simulate supports an intercept-only design");
  CovParams cov{{sc.corr, sc.phi, sc.kappa}, sc.omega, sc.sigma2};
  CovMatrices cm = build_cov(data.locations, cov);
  Vec u(sc.n);
  for (int i = 0; i < sc.n; ++i) u[i] = rng.normal();
  Vec z = data.X * sc.beta + std::sqrt(sc.sigma2) * (cm.chol.L * u);

  const LinkSpec link{sc.link, sc.nu};
  Vec mu(sc.n), y(sc.n), t(sc.n);
  for (int i = 0; i < sc.n; ++i) {
    ZJet j = inv_link_jet(link, z[i]);
    mu[i] = j.f;
    t[i] = sc.t;
    if (sc.response == ResponseKind::binomial) {
      if (sc.t != std::floor(sc.t) || sc.t <= 0.0)
        throw ConfigError("binomial simulation needs integer trials t >= 1");
      y[i] = sample_binomial(sc.t, mu[i], rng);
    } else {
      y[i] = sample_poisson(sc.t * mu[i], rng);
    }
  }
  data.y = y;
  data.t = t;
  data.validate(sc.response);
  SimTruth truth{z, mu, sc};
  return {data, truth};
}

void cmd_simulate(const SimConfig& sc) {
  auto [data, truth] = simulate_dataset(sc);
  save_dataset(sc.out, data);
  const std::string stem =
      sc.out.size() > 4 && sc.out.substr(sc.out.size() - 4) == ".csv"
          ? sc.out.substr(0, sc.out.size() - 4)
          : sc.out;
  Mat tv(data.n(), 4);
  tv.col(0) = data.locations.col(0);
  tv.col(1) = data.locations.col(1);
  tv.col(2) = truth.z;
  tv.col(3) = truth.mu;
  write_csv(stem + "_truth.csv", {"x", "y", "z", "mu"}, tv);
  json j;
  j["response"] = to_string(sc.response);
  j["link"] = to_string(sc.link);
  j["corr"] = to_string(sc.corr);
  j["nu"] = sc.nu;
  j["phi"] = sc.phi;
  j["kappa"] = sc.kappa;
  j["omega"] = sc.omega;
  j["sigma2"] = sc.sigma2;
  j["beta"] = std::vector<double>(sc.beta.data(), sc.beta.data() + sc.beta.size());
  j["t"] = sc.t;
  j["seed"] = sc.seed;
  std::ofstream(stem + "_truth.json") << j.dump(2) << "\n";
}

void write_skeleton_table(const std::string& path, const SkeletonSet& skel) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "# nu phi kappa omega log_m reference\n";
  for (std::size_t i = 0; i < skel.points.size(); ++i) {
    const XiPoint& xi = skel.points[i];
    out << format_double(xi.nu) << " " << format_double(xi.phi) << " "
        << format_double(xi.kappa) << " " << format_double(xi.omega) << " "
        << format_double(i < skel.log_m.size() ? skel.log_m[i] : 0.0) << " "
        << (static_cast<int>(i) == skel.reference_index ? 1 : 0) << "\n";
  }
}

SkeletonSet read_skeleton_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open skeleton file " + path);
  SkeletonSet skel;
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    XiPoint xi;
    double log_m = 0;
    int ref = 0;
    if (!(ss >> xi.nu >> xi.phi >> xi.kappa >> xi.omega >> log_m >> ref))
      throw DataError(path + ": malformed skeleton row " + std::to_string(row));
    skel.points.push_back(xi);
    skel.log_m.push_back(log_m);
    if (ref) skel.reference_index = row;
    ++row;
  }
  if (skel.points.empty()) throw DataError(path + ": empty skeleton");
  return skel;
}

namespace {

SkeletonSet grid_skeleton(const RunConfig& rc) {
  const auto comps = rc.model.estimated_components();
  std::vector<std::vector<double>> values;
  for (XiName c : comps) {
    auto it = rc.skeleton_grid.find(c);
    if (it == rc.skeleton_grid.end() || it->second.empty())
      throw ConfigError("skeleton.mode=grid needs skeleton." + to_string(c));
    values.push_back(it->second);
  }
  SkeletonSet skel;
  skel.alpha = rc.skeleton_alpha;
  skel.T = rc.skeleton_T;
  std::vector<std::size_t> idx(comps.size(), 0);
  for (;;) {
    XiPoint xi = rc.model.base_point();
    for (std::size_t j = 0; j < comps.size(); ++j)
      xi.set(comps[j], values[j][idx[j]]);
    skel.points.push_back(xi);
    skel.log_m.push_back(0.0);
    std::size_t j = 0;
    while (j < comps.size() && ++idx[j] == values[j].size()) {
      idx[j] = 0;
      ++j;
    }
    if (j == comps.size()) break;
  }
  skel.reference_index = 0;
  return skel;
}

}  // namespace

FitResult fit_model(const RunConfig& rc, const Dataset& data) {
  const double t0 = now_s();
  FitResult fit;
  fit.config = rc;
  data.validate(rc.model.response);

  // skeleton
  {
    const double s0 = now_s();
    switch (rc.skeleton_mode) {
      case SkeletonMode::grid: fit.skeleton = grid_skeleton(rc); break;
      case SkeletonMode::laplace:
        fit.skeleton =
            build_skeleton(rc.model, data, rc.skeleton_alpha, rc.skeleton_T);
        break;
      case SkeletonMode::file:
        fit.skeleton = read_skeleton_table(rc.skeleton_file);
        break;
    }
    // the reference goes first so r_1 = 1 indexes it
    if (fit.skeleton.reference_index != 0) {
      std::swap(fit.skeleton.points[0],
                fit.skeleton.points[static_cast<std::size_t>(fit.skeleton.reference_index)]);
      std::swap(fit.skeleton.log_m[0],
                fit.skeleton.log_m[static_cast<std::size_t>(fit.skeleton.reference_index)]);
      fit.skeleton.reference_index = 0;
    }
    fit.timings.skeleton_s = now_s() - s0;
  }
  const std::size_t k = fit.skeleton.points.size();

  std::vector<double> yvec(data.y.data(), data.y.data() + data.y.size());
  fit.plan = make_plan(rc.model.link, rc.plan, yvec);

  // stage 1: chains and reverse logistic regression
  std::vector<ChainBundle> stage1(k), stage2(k);
  {
    const double s0 = now_s();
    for (std::size_t j = 0; j < k; ++j) {
      ChainConfig cc = rc.chain;
      ChainBundle b = run_chain(rc.model, data, fit.skeleton.points[j], cc, 1, j);
      stage1[j] = transform_chain(std::move(b), fit.plan, rc.model);
    }
    LogQMatrix logq = build_logq_matrix(
        rc.model, data, fit.plan, fit.skeleton.points, stage1,
        rc.strict_stage2 ? StageSelect::all : StageSelect::stage1);
    try {
      fit.rl = rl_estimate(logq);
    } catch (const SeparabilityError&) {
      fit.separability_flag = true;
      throw;
    }
    fit.timings.stage1_s = now_s() - s0;
  }

  // stage 2: fresh chains in strict mode, the reserved tail otherwise
  StageSelect stage2_sel = StageSelect::stage2;
  {
    const double s0 = now_s();
    if (rc.strict_stage2) {
      for (std::size_t j = 0; j < k; ++j) {
        ChainConfig cc = rc.chain;
        cc.n_samples = std::max(1, static_cast<int>(std::lround(
                                       (1.0 - cc.stage1_fraction) * cc.n_samples)));
        ChainBundle b = run_chain(rc.model, data, fit.skeleton.points[j], cc, 2, j);
        stage2[j] = transform_chain(std::move(b), fit.plan, rc.model);
      }
      stage2_sel = StageSelect::all;
    } else {
      stage2 = stage1;
    }
    fit.timings.stage2_s = now_s() - s0;
  }

  // BF surface maximization
  {
    const double s0 = now_s();
    BfSurface surface(rc.model, data, fit.plan, fit.skeleton.points, stage2,
                      stage2_sel, fit.rl.log_r);
    fit.eb = maximize_bf(surface, rc.model);
    for (std::size_t j = 0; j < k; ++j)
      fit.surface_evals.emplace_back(fit.skeleton.points[j],
                                     surface.eval(fit.skeleton.points[j]));
    fit.surface_evals.emplace_back(fit.eb.xi_hat,
                                   surface.eval(fit.eb.xi_hat));
    fit.timings.stage2_s += now_s() - s0;
  }

  // final chain at xi_hat, posterior summaries, standard errors
  {
    const double s0 = now_s();
    ChainConfig cc = rc.chain;
    cc.n_samples = rc.final_n;
    ChainBundle fin = run_chain(rc.model, data, fit.eb.xi_hat, cc, 3, 0);
    fit.final_chain = transform_chain(std::move(fin), fit.plan, rc.model);
    fit.mean_z_accept = fit.final_chain.accept_rate.mean();

    fit.eb.beta_mean = fit.final_chain.beta.rowwise().mean();
    fit.eb.beta_sd.resize(fit.eb.beta_mean.size());
    for (Eigen::Index r = 0; r < fit.final_chain.beta.rows(); ++r) {
      const double m = fit.eb.beta_mean[r];
      double s2 = 0.0;
      for (Eigen::Index c = 0; c < fit.final_chain.beta.cols(); ++c) {
        const double d = fit.final_chain.beta(r, c) - m;
        s2 += d * d;
      }
      fit.eb.beta_sd[r] =
          std::sqrt(s2 / std::max<Eigen::Index>(fit.final_chain.beta.cols() - 1, 1));
    }
    fit.eb.sigma2_mean = fit.final_chain.sigma2.mean();
    {
      double s2 = 0.0;
      for (Eigen::Index c = 0; c < fit.final_chain.sigma2.size(); ++c) {
        const double d = fit.final_chain.sigma2[c] - fit.eb.sigma2_mean;
        s2 += d * d;
      }
      fit.eb.sigma2_sd =
          std::sqrt(s2 / std::max<Eigen::Index>(fit.final_chain.sigma2.size() - 1, 1));
    }

    fit.eb.hessian_components.clear();
    for (std::size_t j = 0; j < fit.eb.estimated.size(); ++j)
      if (!fit.eb.at_boundary[j])
        fit.eb.hessian_components.push_back(fit.eb.estimated[j]);
    if (!fit.eb.hessian_components.empty()) {
      bool projected = false;
      fit.eb.hessian_inv =
          eb_stderr(rc.model, data, fit.plan, fit.eb.xi_hat, fit.final_chain,
                    fit.eb.hessian_components, &projected);
      fit.eb.hessian_projected = projected;
      if (projected)
        fit.warnings.push_back("EB Hessian projected to positive definite");
      fit.eb.se = fit.eb.hessian_inv.diagonal().cwiseSqrt();
    }
    fit.timings.final_s = now_s() - s0;
  }
  fit.timings.total_s = now_s() - t0;
  return fit;
}

namespace {

json xi_to_json(const XiPoint& xi) {
  json j;
  j["nu"] = xi.nu;
  j["phi"] = xi.phi;
  j["kappa"] = xi.kappa;
  j["omega"] = xi.omega;
  return j;
}

json model_to_json(const ModelSpec& m) {
  json j;
  j["response"] = to_string(m.response);
  j["link"] = to_string(m.link);
  j["corr"] = to_string(m.corr);
  j["prior"] = {{"m_b", std::vector<double>(m.prior.m_b.data(),
                                            m.prior.m_b.data() + m.prior.m_b.size())},
                {"n_sigma", m.prior.n_sigma},
                {"a_sigma", m.prior.a_sigma}};
  std::vector<double> vb;
  for (Eigen::Index i = 0; i < m.prior.V_b.rows(); ++i)
    for (Eigen::Index jj = 0; jj < m.prior.V_b.cols(); ++jj)
      vb.push_back(m.prior.V_b(i, jj));
  j["prior"]["V_b"] = vb;
  auto comp = [](const XiComponent& c) {
    json cj;
    cj["estimated"] = c.estimated;
    cj["value"] = c.value;
    cj["lo"] = c.lo;
    cj["hi"] = c.hi;
    return cj;
  };
  j["xi"] = {{"nu", comp(m.nu)},
             {"phi", comp(m.phi)},
             {"kappa", comp(m.kappa)},
             {"omega", comp(m.omega)}};
  return j;
}

}  // namespace

void write_fit_outputs(const FitResult& fit, const Dataset& data) {
  fs::create_directories(fit.config.out_dir);
  const std::string dir = fit.config.out_dir + "/";

  write_skeleton_table(dir + "skeleton.txt", fit.skeleton);

  // final chain dump: one row per draw
  {
    const Eigen::Index p = fit.final_chain.beta.rows();
    const Eigen::Index n = fit.final_chain.z.rows();
    const Eigen::Index N = fit.final_chain.n_draws();
    std::vector<std::string> header;
    for (Eigen::Index j = 0; j < p; ++j) header.push_back("beta_" + std::to_string(j));
    header.push_back("sigma2");
    for (Eigen::Index i = 0; i < n; ++i) header.push_back("z_" + std::to_string(i));
    Mat rows(N, p + 1 + n);
    rows.block(0, 0, N, p) = fit.final_chain.beta.transpose();
    rows.col(p) = fit.final_chain.sigma2;
    rows.block(0, p + 1, N, n) = fit.final_chain.z.transpose();
    write_csv(dir + "final_chain.csv", header, rows);
  }

  // BF surface evaluations
  {
    Mat rows(static_cast<Eigen::Index>(fit.surface_evals.size()), 6);
    for (std::size_t i = 0; i < fit.surface_evals.size(); ++i) {
      const auto& [xi, ev] = fit.surface_evals[i];
      rows(static_cast<Eigen::Index>(i), 0) = xi.nu;
      rows(static_cast<Eigen::Index>(i), 1) = xi.phi;
      rows(static_cast<Eigen::Index>(i), 2) = xi.kappa;
      rows(static_cast<Eigen::Index>(i), 3) = xi.omega;
      rows(static_cast<Eigen::Index>(i), 4) = ev.log_bf;
      rows(static_cast<Eigen::Index>(i), 5) = ev.mc_se;
    }
    write_csv(dir + "bf_surface.csv", {"nu", "phi", "kappa", "omega", "log_bf", "mc_se"},
              rows);
  }

  json j;
  j["schema_version"] = 1;
  j["tool"] = {{"name", "sglmm"}, {"version", "0.1.0"}};
  j["data"] = {{"path", fit.config.data_path}, {"n", data.n()}, {"p", data.p()}};
  j["model"] = model_to_json(fit.config.model);
  j["plan"] = to_string(fit.config.plan);
  j["chain"] = {{"n", fit.config.chain.n_samples},
                {"burnin", fit.config.chain.burn_in},
                {"thin", fit.config.chain.thin},
                {"seed", fit.config.chain.seed},
                {"final_n", fit.config.final_n},
                {"strict_stage2", fit.config.strict_stage2}};
  j["skeleton"] = json::array();
  for (const auto& xi : fit.skeleton.points) j["skeleton"].push_back(xi_to_json(xi));
  j["rl"] = {{"log_r", std::vector<double>(fit.rl.log_r.data(),
                                           fit.rl.log_r.data() + fit.rl.log_r.size())},
             {"iterations", fit.rl.iters}};
  j["eb"] = {{"xi_hat", xi_to_json(fit.eb.xi_hat)},
             {"log_bf_at_hat", fit.eb.log_bf_at_hat},
             {"bf_mc_se", fit.eb.bf_mc_se},
             {"hessian_projected", fit.eb.hessian_projected}};
  {
    json names = json::array(), bnd = json::array();
    for (std::size_t i = 0; i < fit.eb.estimated.size(); ++i) {
      names.push_back(to_string(fit.eb.estimated[i]));
      bnd.push_back(static_cast<bool>(fit.eb.at_boundary[i]));
    }
    j["eb"]["estimated"] = names;
    j["eb"]["at_boundary"] = bnd;
    json hcomp = json::array();
    for (auto c : fit.eb.hessian_components) hcomp.push_back(to_string(c));
    j["eb"]["hessian_components"] = hcomp;
    std::vector<double> hinv;
    for (Eigen::Index a = 0; a < fit.eb.hessian_inv.rows(); ++a)
      for (Eigen::Index b = 0; b < fit.eb.hessian_inv.cols(); ++b)
        hinv.push_back(fit.eb.hessian_inv(a, b));
    j["eb"]["hessian_inv"] = hinv;
    j["eb"]["se"] =
        std::vector<double>(fit.eb.se.data(), fit.eb.se.data() + fit.eb.se.size());
  }
  j["posterior"] = {
      {"beta_mean", std::vector<double>(fit.eb.beta_mean.data(),
                                        fit.eb.beta_mean.data() + fit.eb.beta_mean.size())},
      {"beta_sd", std::vector<double>(fit.eb.beta_sd.data(),
                                      fit.eb.beta_sd.data() + fit.eb.beta_sd.size())},
      {"sigma2_mean", fit.eb.sigma2_mean},
      {"sigma2_sd", fit.eb.sigma2_sd}};
  j["diagnostics"] = {{"mean_z_accept", fit.mean_z_accept},
                      {"separability", fit.separability_flag},
                      {"warnings", fit.warnings}};
  j["stages"] = {{"stage1_n", fit.config.strict_stage2
                                  ? fit.config.chain.n_samples
                                  : fit.final_chain.stage_split},
                 {"strict", fit.config.strict_stage2}};
  j["timings"] = {{"skeleton_s", fit.timings.skeleton_s},
                  {"stage1_s", fit.timings.stage1_s},
                  {"stage2_s", fit.timings.stage2_s},
                  {"final_s", fit.timings.final_s},
                  {"total_s", fit.timings.total_s}};
  std::ofstream(dir + "runsummary.json") << j.dump(2) << "\n";
}

FittedModel load_fitted_model(const std::string& out_dir) {
  const std::string dir = out_dir + "/";
  std::ifstream in(dir + "runsummary.json");
  if (!in) throw DataError("cannot open " + dir + "runsummary.json");
  json j;
  in >> j;
  FittedModel fm;
  fm.model_id = out_dir;
  const json& m = j["model"];
  fm.spec.response = response_from_string(m["response"].get<std::string>());
  fm.spec.link = link_family_from_string(m["link"].get<std::string>());
  fm.spec.corr = corr_family_from_string(m["corr"].get<std::string>());
  const auto mb = m["prior"]["m_b"].get<std::vector<double>>();
  fm.spec.prior.m_b.resize(static_cast<Eigen::Index>(mb.size()));
  for (std::size_t i = 0; i < mb.size(); ++i)
    fm.spec.prior.m_b[static_cast<Eigen::Index>(i)] = mb[i];
  const auto vb = m["prior"]["V_b"].get<std::vector<double>>();
  const auto p = static_cast<Eigen::Index>(mb.size());
  fm.spec.prior.V_b.resize(p, p);
  for (Eigen::Index a = 0; a < p; ++a)
    for (Eigen::Index b = 0; b < p; ++b)
      fm.spec.prior.V_b(a, b) = vb[static_cast<std::size_t>(a * p + b)];
  fm.spec.prior.n_sigma = m["prior"]["n_sigma"].get<double>();
  fm.spec.prior.a_sigma = m["prior"]["a_sigma"].get<double>();
  auto comp = [&](const char* name) {
    XiComponent c;
    const json& cj = m["xi"][name];
    c.estimated = cj["estimated"].get<bool>();
    c.value = cj["value"].get<double>();
    c.lo = cj["lo"].get<double>();
    c.hi = cj["hi"].get<double>();
    return c;
  };
  fm.spec.nu = comp("nu");
  fm.spec.phi = comp("phi");
  fm.spec.kappa = comp("kappa");
  fm.spec.omega = comp("omega");

  fm.xi_hat.nu = j["eb"]["xi_hat"]["nu"].get<double>();
  fm.xi_hat.phi = j["eb"]["xi_hat"]["phi"].get<double>();
  fm.xi_hat.kappa = j["eb"]["xi_hat"]["kappa"].get<double>();
  fm.xi_hat.omega = j["eb"]["xi_hat"]["omega"].get<double>();

  fm.d = 0;
  for (const auto& b : j["eb"]["at_boundary"])
    if (!b.get<bool>()) ++fm.d;

  CsvTable chain = read_csv(dir + "final_chain.csv");
  Eigen::Index pcols = 0;
  while (pcols < static_cast<Eigen::Index>(chain.header.size()) &&
         chain.header[static_cast<std::size_t>(pcols)].rfind("beta_", 0) == 0)
    ++pcols;
  const Eigen::Index N = chain.values.rows();
  const Eigen::Index n = static_cast<Eigen::Index>(chain.header.size()) - pcols - 1;
  fm.chain_at_hat.xi = fm.xi_hat;
  fm.chain_at_hat.beta = chain.values.block(0, 0, N, pcols).transpose();
  fm.chain_at_hat.sigma2 = chain.values.col(pcols);
  fm.chain_at_hat.z = chain.values.block(0, pcols + 1, N, n).transpose();
  fm.chain_at_hat.stage_split = static_cast<int>(N);
  return fm;
}

SelectResult run_select(const std::vector<FittedModel>& models, const Dataset& data) {
  SelectResult out;
  std::vector<int> d;
  for (const auto& m : models) {
    out.model_ids.push_back(m.model_id);
    d.push_back(m.d);
  }
  const Vec log_C = cross_model_rl(models, data);
  out.weights = model_weights(log_C, d);
  return out;
}

CvResult run_cv(const std::vector<RunConfig>& configs, const Dataset& data,
                int draws_per_fold) {
  if (configs.empty()) throw ConfigError("cv needs at least one model config");
  const Eigen::Index n = data.n();
  if (n < 2) throw DataError("cross-validation needs n >= 2");
  const int R = static_cast<int>(configs.size());
  const int L = draws_per_fold > 0 ? draws_per_fold : configs[0].final_n;

  // full-data fits give the per-fold skeletons and the ensemble weights
  std::vector<FitResult> full(R);
  std::vector<FittedModel> fitted(R);
  for (int r = 0; r < R; ++r) {
    full[r] = fit_model(configs[r], data);
    fitted[r].model_id = "model" + std::to_string(r + 1);
    fitted[r].spec = configs[r].model;
    fitted[r].xi_hat = full[r].eb.xi_hat;
    fitted[r].chain_at_hat = full[r].final_chain;
    fitted[r].d = static_cast<int>(full[r].eb.hessian_components.size());
  }
  Vec weights;
  if (R > 1) {
    std::vector<int> d;
    for (auto& f : fitted) d.push_back(f.d);
    weights = model_weights(cross_model_rl(fitted, data), d).weights;
  } else {
    weights = Vec::Ones(1);
  }

  CvResult out;
  out.per_model.resize(R);
  for (int r = 0; r < R; ++r) {
    out.per_model[r].site_neg_score = Vec::Zero(n);
    out.per_model[r].site_sq_err = Vec::Zero(n);
    out.model_ids.push_back(fitted[r].model_id);
  }
  out.ensemble.site_neg_score = Vec::Zero(n);
  out.ensemble.site_sq_err = Vec::Zero(n);

  for (Eigen::Index i = 0; i < n; ++i) {
    Dataset sub;
    sub.locations.resize(n - 1, 2);
    sub.y.resize(n - 1);
    sub.t.resize(n - 1);
    sub.X.resize(n - 1, data.p());
    Eigen::Index rix = 0;
    for (Eigen::Index s = 0; s < n; ++s) {
      if (s == i) continue;
      sub.locations.row(rix) = data.locations.row(s);
      sub.y[rix] = data.y[s];
      sub.t[rix] = data.t[s];
      sub.X.row(rix) = data.X.row(s);
      ++rix;
    }
    Mat loc_new(1, 2);
    loc_new.row(0) = data.locations.row(i);
    Mat X_new(1, data.p());
    X_new.row(0) = data.X.row(i);
    Vec y_i(1), t_i(1);
    y_i[0] = data.y[i];
    t_i[0] = data.t[i];

    Mat mu_ens;
    bool fold_ok = true;
    for (int r = 0; r < R; ++r) {
      RunConfig rc = configs[r];
      rc.skeleton_mode = SkeletonMode::grid;  // reuse the full-data skeleton
      rc.skeleton_grid.clear();
      rc.final_n = L;
      rc.chain.seed = mix_seed(configs[r].chain.seed, 0xCF0 + static_cast<std::uint64_t>(i), r);
      try {
        // fixed skeleton: bypass grid construction with the full-data set
        FitResult fold = [&] {
          RunConfig rcf = rc;
          rcf.skeleton_mode = SkeletonMode::file;
          const std::string tmp = "/tmp/sglmm_cv_skel_" + std::to_string(r) + ".txt";
          write_skeleton_table(tmp, full[r].skeleton);
          rcf.skeleton_file = tmp;
          return fit_model(rcf, sub);
        }();
        PredictionGrid grid = predict_mu(fold.final_chain, rc.model, sub, loc_new,
                                         X_new, rc.chain.seed);
        const Eigen::Index Lr = std::min<Eigen::Index>(grid.mu_draws.cols(), L);
        if (mu_ens.size() == 0) mu_ens = Mat::Zero(1, Lr);
        CVScores s = score_predictions(rc.model.response, y_i, t_i,
                                       grid.mu_draws.leftCols(Lr));
        out.per_model[r].site_neg_score[i] = s.site_neg_score[0];
        out.per_model[r].site_sq_err[i] = s.site_sq_err[0];
        mu_ens.row(0) += weights[r] * grid.mu_draws.row(0).head(Lr);
      } catch (const NumericError&) {
        out.per_model[r].failed_folds += 1;
        fold_ok = false;
      }
    }
    if (fold_ok && mu_ens.size() > 0) {
      CVScores se = score_predictions(configs[0].model.response, y_i, t_i, mu_ens);
      out.ensemble.site_neg_score[i] = se.site_neg_score[0];
      out.ensemble.site_sq_err[i] = se.site_sq_err[0];
    } else {
      out.ensemble.failed_folds += 1;
    }
  }
  for (int r = 0; r < R; ++r) {
    out.per_model[r].neg_score = out.per_model[r].site_neg_score.sum();
    out.per_model[r].rmse = std::sqrt(out.per_model[r].site_sq_err.sum());
  }
  out.ensemble.neg_score = out.ensemble.site_neg_score.sum();
  out.ensemble.rmse = std::sqrt(out.ensemble.site_sq_err.sum());
  return out;
}

}  // namespace sglmm
