#include "sglmm/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace sglmm {

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_commas_ws(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

double parse_num(const std::string& tok, const std::string& where) {
  if (tok == "inf") return pos_inf;
  if (tok == "-inf") return neg_inf;
  try {
    std::size_t pos = 0;
    double v = std::stod(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw DataError("cannot parse number '" + tok + "' in " + where);
  }
}

}  // namespace

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  CsvTable tab;
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  {
    std::stringstream ss(trim(line));
    std::string cell;
    while (std::getline(ss, cell, ',')) tab.header.push_back(trim(cell));
  }
  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(t);
    std::string cell;
    while (std::getline(ss, cell, ','))
      row.push_back(parse_num(trim(cell), path + " line " + std::to_string(lineno)));
    if (row.size() != tab.header.size())
      throw DataError(path + " line " + std::to_string(lineno) + ": expected " +
                      std::to_string(tab.header.size()) + " columns, got " +
                      std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  tab.values.resize(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(tab.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      tab.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][j];
  return tab;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Mat& values) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (std::size_t j = 0; j < header.size(); ++j)
    out << (j ? "," : "") << header[j];
  out << "\n";
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j)
      out << (j ? "," : "") << format_double(values(i, j));
    out << "\n";
  }
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str());
}

Config Config::from_string(const std::string& text) {
  Config cfg;
  std::stringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    cfg.kv[key] = val;
  }
  return cfg;
}

std::string Config::get(const std::string& key) const {
  auto it = kv.find(key);
  if (it == kv.end()) throw ConfigError("missing config key: " + key);
  return it->second;
}

std::string Config::get_or(const std::string& key, const std::string& dflt) const {
  auto it = kv.find(key);
  return it == kv.end() ? dflt : it->second;
}

double Config::num(const std::string& key) const { return parse_num(get(key), key); }

double Config::num_or(const std::string& key, double dflt) const {
  auto it = kv.find(key);
  return it == kv.end() ? dflt : parse_num(it->second, key);
}

long Config::integer_or(const std::string& key, long dflt) const {
  auto it = kv.find(key);
  if (it == kv.end()) return dflt;
  return static_cast<long>(parse_num(it->second, key));
}

std::vector<double> Config::list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& tok : split_commas_ws(get(key))) out.push_back(parse_num(tok, key));
  return out;
}

std::vector<std::string> Config::tokens(const std::string& key) const {
  return split_commas_ws(get(key));
}

Dataset load_dataset(const std::string& path) {
  CsvTable tab = read_csv(path);
  if (tab.header.size() < 4 || tab.header[0] != "x" || tab.header[1] != "y" ||
      tab.header[2] != "response" || tab.header[3] != "trials")
    throw DataError(path + ": expected header x,y,response,trials[,covariates...]");
  const Eigen::Index n = tab.values.rows();
  if (n < 1) throw DataError(path + ": no data rows");
  Dataset data;
  data.locations.resize(n, 2);
  data.locations.col(0) = tab.values.col(0);
  data.locations.col(1) = tab.values.col(1);
  data.y = tab.values.col(2);
  data.t = tab.values.col(3);
  const Eigen::Index ncov = static_cast<Eigen::Index>(tab.header.size()) - 4;
  data.X.resize(n, 1 + ncov);
  data.X.col(0).setOnes();
  for (Eigen::Index j = 0; j < ncov; ++j) data.X.col(1 + j) = tab.values.col(4 + j);
  return data;
}

void save_dataset(const std::string& path, const Dataset& data) {
  std::vector<std::string> header{"x", "y", "response", "trials"};
  const Eigen::Index ncov = data.X.cols() - 1;
  for (Eigen::Index j = 0; j < ncov; ++j)
    header.push_back("cov" + std::to_string(j + 1));
  Mat values(data.n(), 4 + ncov);
  values.col(0) = data.locations.col(0);
  values.col(1) = data.locations.col(1);
  values.col(2) = data.y;
  values.col(3) = data.t;
  for (Eigen::Index j = 0; j < ncov; ++j) values.col(4 + j) = data.X.col(1 + j);
  write_csv(path, header, values);
}

namespace {

XiComponent parse_xi_component(const Config& cfg, const std::string& key,
                               double default_fixed) {
  XiComponent comp;
  if (!cfg.has(key)) {
    comp.estimated = false;
    comp.value = default_fixed;
    return comp;
  }
  const auto toks = cfg.tokens(key);
  if (toks.empty()) throw ConfigError(key + ": empty specification");
  if (toks[0] == "fixed") {
    if (toks.size() != 2) throw ConfigError(key + ": expected 'fixed <value>'");
    comp.estimated = false;
    comp.value = parse_num(toks[1], key);
  } else if (toks[0] == "estimate") {
    if (toks.size() != 3) throw ConfigError(key + ": expected 'estimate <lo> <hi>'");
    comp.estimated = true;
    comp.lo = parse_num(toks[1], key);
    comp.hi = parse_num(toks[2], key);
    comp.value = std::isfinite(comp.hi) ? 0.5 * (comp.lo + comp.hi) : 2.0 * comp.lo;
  } else {
    throw ConfigError(key + ": expected 'fixed' or 'estimate'");
  }
  return comp;
}

}  // namespace

RunConfig parse_run_config(const Config& cfg) {
  RunConfig rc;
  rc.data_path = cfg.get_or("data.path", "");

  ModelSpec& m = rc.model;
  m.response = response_from_string(cfg.get("model.response"));
  m.link = link_family_from_string(cfg.get("model.link"));
  m.corr = corr_family_from_string(cfg.get("model.corr"));

  const auto mb = cfg.has("prior.mb") ? cfg.list("prior.mb") : std::vector<double>{0.0};
  const std::size_t p = mb.size();
  m.prior.m_b.resize(static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < p; ++i) m.prior.m_b[static_cast<Eigen::Index>(i)] = mb[i];
  const auto vb = cfg.has("prior.vb") ? cfg.list("prior.vb") : std::vector<double>{100.0};
  m.prior.V_b.resize(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  if (vb.size() == 1) {
    m.prior.V_b = vb[0] * Mat::Identity(p, p);
  } else if (vb.size() == p) {
    m.prior.V_b.setZero();
    for (std::size_t i = 0; i < p; ++i)
      m.prior.V_b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = vb[i];
  } else if (vb.size() == p * p) {
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < p; ++j)
        m.prior.V_b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            vb[i * p + j];
  } else {
    throw ConfigError("prior.vb: expected scalar, diagonal, or full matrix");
  }
  m.prior.n_sigma = cfg.num_or("prior.nsigma", 1.0);
  m.prior.a_sigma = cfg.num_or("prior.asigma", 1.0);

  m.nu = parse_xi_component(cfg, "xi.nu", std::numeric_limits<double>::quiet_NaN());
  m.phi = parse_xi_component(cfg, "xi.phi", 1.0);
  m.kappa = parse_xi_component(cfg, "xi.kappa", std::numeric_limits<double>::quiet_NaN());
  m.omega = parse_xi_component(cfg, "xi.omega", 0.0);

  rc.plan = plan_kind_from_string(cfg.get_or("model.plan", "general"));

  rc.chain.n_samples = static_cast<int>(cfg.integer_or("chain.n", 1000));
  rc.chain.burn_in = static_cast<int>(cfg.integer_or("chain.burnin", 300));
  rc.chain.thin = static_cast<int>(cfg.integer_or("chain.thin", 1));
  if (!cfg.has("chain.seed")) throw ConfigError("chain.seed is required");
  rc.chain.seed = static_cast<std::uint64_t>(cfg.integer_or("chain.seed", 0));
  rc.final_n = static_cast<int>(cfg.integer_or("chain.final_n", rc.chain.n_samples));
  rc.strict_stage2 = cfg.get_or("chain.strict_stage2", "false") == "true";

  const std::string mode = cfg.get_or("skeleton.mode", "laplace");
  if (mode == "grid") rc.skeleton_mode = SkeletonMode::grid;
  else if (mode == "laplace") rc.skeleton_mode = SkeletonMode::laplace;
  else if (mode == "file") rc.skeleton_mode = SkeletonMode::file;
  else throw ConfigError("skeleton.mode must be grid|laplace|file");
  for (auto [name, key] : {std::pair{XiName::nu, "skeleton.nu"},
                           {XiName::phi, "skeleton.phi"},
                           {XiName::kappa, "skeleton.kappa"},
                           {XiName::omega, "skeleton.omega"}})
    if (cfg.has(key)) rc.skeleton_grid[name] = cfg.list(key);
  rc.skeleton_alpha = cfg.num_or("skeleton.alpha", 0.6);
  rc.skeleton_T = static_cast<int>(cfg.integer_or("skeleton.T", 3));
  rc.skeleton_file = cfg.get_or("skeleton.file", "");

  rc.out_dir = cfg.get_or("output.dir", "out");
  rc.threads = static_cast<int>(cfg.integer_or("threads", 1));

  m.validate();
  return rc;
}

SimConfig parse_sim_config(const Config& cfg) {
  SimConfig sc;
  sc.n = static_cast<int>(cfg.integer_or("sim.n", 100));
  if (sc.n < 1) throw ConfigError("sim.n must be >= 1");
  sc.response = response_from_string(cfg.get("sim.response"));
  sc.link = link_family_from_string(cfg.get("sim.link"));
  sc.nu = cfg.num_or("sim.nu", std::numeric_limits<double>::quiet_NaN());
  sc.corr = corr_family_from_string(cfg.get("sim.corr"));
  sc.phi = cfg.num("sim.phi");
  sc.kappa = cfg.num_or("sim.kappa", std::numeric_limits<double>::quiet_NaN());
  sc.omega = cfg.num_or("sim.omega", 0.0);
  sc.sigma2 = cfg.num_or("sim.sigma2", 1.0);
  const auto betas = cfg.has("sim.beta") ? cfg.list("sim.beta") : std::vector<double>{0.0};
  sc.beta.resize(static_cast<Eigen::Index>(betas.size()));
  for (std::size_t i = 0; i < betas.size(); ++i)
    sc.beta[static_cast<Eigen::Index>(i)] = betas[i];
  sc.t = cfg.num_or("sim.t", 1.0);
  if (!(sc.t > 0.0)) throw ConfigError("sim.t must be positive");
  sc.domain = cfg.num_or("sim.domain", 1.0);
  sc.seed = static_cast<std::uint64_t>(cfg.integer_or("sim.seed", 1));
  sc.out = cfg.get_or("sim.out", "sim.csv");
  return sc;
}

}  // namespace sglmm
