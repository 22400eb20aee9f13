#pragma once

#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mechanochem/grid.hpp"
#include "mechanochem/state.hpp"
#include "mechanochem/steppers.hpp"

namespace mechanochem {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Parsed INI-style run configuration: [section] headers, key = value lines,
// '#' comments. Strict mode: unknown keys are rejected at parse time.
class RunConfig {
 public:
  struct Entry {
    std::string value;
    int line = 0;
  };

  void set(const std::string& section, const std::string& key,
           const std::string& value, int line = 0) {
    sections_[section][key] = {value, line};
  }

  bool has(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    if (s == sections_.end()) return false;
    return s->second.count(key) > 0;
  }

  const Entry* find(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    if (s == sections_.end()) return nullptr;
    auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
  }

  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const {
    const Entry* e = find(section, key);
    return e ? e->value : fallback;
  }

  double get_double(const std::string& section, const std::string& key,
                    double fallback) const {
    const Entry* e = find(section, key);
    if (!e) return fallback;
    return parse_double(e->value, section, key, e->line);
  }

  int get_int(const std::string& section, const std::string& key,
              int fallback) const {
    const Entry* e = find(section, key);
    if (!e) return fallback;
    try {
      size_t pos = 0;
      const int v = std::stoi(e->value, &pos);
      if (pos != e->value.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("line " + std::to_string(e->line) +
                        ": cannot parse integer for " + section + "." + key +
                        " ('" + e->value + "')");
    }
  }

  bool get_bool(const std::string& section, const std::string& key,
                bool fallback) const {
    const Entry* e = find(section, key);
    if (!e) return fallback;
    if (e->value == "true" || e->value == "1" || e->value == "on") return true;
    if (e->value == "false" || e->value == "0" || e->value == "off")
      return false;
    throw ConfigError("line " + std::to_string(e->line) +
                      ": cannot parse boolean for " + section + "." + key);
  }

  std::vector<double> get_double_list(const std::string& section,
                                      const std::string& key,
                                      std::vector<double> fallback) const {
    const Entry* e = find(section, key);
    if (!e) return fallback;
    std::vector<double> out;
    for (const auto& tok : split_list(e->value))
      out.push_back(parse_double(tok, section, key, e->line));
    return out;
  }

  const std::map<std::string, std::map<std::string, Entry>>& sections() const {
    return sections_;
  }

  static std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
      if (c == ',') {
        out.push_back(trim(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
    return out;
  }

  static std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
  }

 private:
  static double parse_double(const std::string& v, const std::string& section,
                             const std::string& key, int line) {
    try {
      size_t pos = 0;
      const double d = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument("trailing");
      return d;
    } catch (const std::exception&) {
      throw ConfigError("line " + std::to_string(line) +
                        ": cannot parse number for " + section + "." + key +
                        " ('" + v + "')");
    }
  }

  std::map<std::string, std::map<std::string, Entry>> sections_;
};

namespace detail {

inline const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"grid", {"nx", "ny", "lx", "ly", "dirichlet_edges"}},
      {"time", {"dt", "n_steps"}},
      {"model",
       {"epsilon", "chi", "beta", "mobility", "mobility_value", "mobility_c2",
        "mobility_c3", "phi0_kind", "phi0_value", "phi0_radius",
        "phi0_center_x", "phi0_center_y", "phi0_mollify_delta", "sigma0_kind",
        "sigma0_value"}},
      {"potential", {"kind"}},
      {"elasticity",
       {"lame_lambda", "lame_mu", "eigenstrain_offset", "eigenstrain_slope",
        "traction_g"}},
      {"nutrient", {"kappa", "sigma_b"}},
      {"sources",
       {"lambda_p", "lambda_a", "lambda_c", "b", "sigma_c", "f_kind", "h_kind",
        "k_kind"}},
      {"output", {"csv", "vtk_prefix", "snapshot_every"}},
      {"experiment",
       {"beta_list", "deltas", "perturb_target", "grids", "dt_rule",
        "q_branch", "study"}},
  };
  return keys;
}

}  // namespace detail

inline RunConfig parse_config_text(const std::string& text,
                                   const std::string& name = "<config>") {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = RunConfig::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(name + ":" + std::to_string(lineno) +
                          ": malformed section header");
      section = RunConfig::trim(line.substr(1, line.size() - 2));
      if (detail::known_keys().count(section) == 0)
        throw ConfigError(name + ":" + std::to_string(lineno) +
                          ": unknown section [" + section + "]");
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(name + ":" + std::to_string(lineno) +
                        ": expected key = value");
    if (section.empty())
      throw ConfigError(name + ":" + std::to_string(lineno) +
                        ": key outside of any section");
    const std::string key = RunConfig::trim(line.substr(0, eq));
    const std::string value = RunConfig::trim(line.substr(eq + 1));
    if (detail::known_keys().at(section).count(key) == 0)
      throw ConfigError(name + ":" + std::to_string(lineno) +
                        ": unknown key " + section + "." + key);
    if (cfg.has(section, key))
      throw ConfigError(name + ":" + std::to_string(lineno) +
                        ": duplicate key " + section + "." + key);
    cfg.set(section, key, value, lineno);
  }
  return cfg;
}

// Canonical form: fixed section order, alphabetical keys, raw values.
inline std::string serialize_config(const RunConfig& cfg) {
  static const char* order[] = {"grid",      "time",    "model",
                                "potential", "elasticity", "nutrient",
                                "sources",   "output",  "experiment"};
  std::ostringstream out;
  bool first = true;
  for (const char* sec : order) {
    auto it = cfg.sections().find(sec);
    if (it == cfg.sections().end() || it->second.empty()) continue;
    if (!first) out << "\n";
    first = false;
    out << "[" << sec << "]\n";
    for (const auto& [key, entry] : it->second)
      out << key << " = " << entry.value << "\n";
  }
  return out.str();
}

inline Grid config_grid(const RunConfig& cfg) {
  const int nx = cfg.get_int("grid", "nx", 32);
  const int ny = cfg.get_int("grid", "ny", 32);
  const double lx = cfg.get_double("grid", "lx", 1.0);
  const double ly = cfg.get_double("grid", "ly", 1.0);
  const std::string edges = cfg.get_string("grid", "dirichlet_edges", "left");
  EdgeSet spec;
  for (const auto& tok : RunConfig::split_list(edges)) {
    if (tok == "left")
      spec.bits |= static_cast<unsigned>(RectEdge::Left);
    else if (tok == "right")
      spec.bits |= static_cast<unsigned>(RectEdge::Right);
    else if (tok == "bottom")
      spec.bits |= static_cast<unsigned>(RectEdge::Bottom);
    else if (tok == "top")
      spec.bits |= static_cast<unsigned>(RectEdge::Top);
    else if (!tok.empty())
      throw ConfigError("grid.dirichlet_edges: unknown edge '" + tok + "'");
  }
  try {
    return build_grid(nx, ny, lx, ly, spec);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string(e.what()) + " (section [grid])");
  }
}

namespace detail {

inline RateTable parse_rate_table(const RunConfig& cfg,
                                  const std::string& key) {
  const auto* e = cfg.find("sources", key);
  if (!e) return RateTable::constant(0.0);
  const std::string& v = e->value;
  if (v.find(':') == std::string::npos)
    return RateTable::constant(cfg.get_double("sources", key, 0.0));
  RateTable t;
  t.times.clear();
  t.values.clear();
  for (const auto& tok : RunConfig::split_list(v)) {
    const size_t c = tok.find(':');
    if (c == std::string::npos)
      throw ConfigError("line " + std::to_string(e->line) +
                        ": rate table entries must be t:value in sources." +
                        key);
    try {
      t.times.push_back(std::stod(tok.substr(0, c)));
      t.values.push_back(std::stod(tok.substr(c + 1)));
    } catch (const std::exception&) {
      throw ConfigError("line " + std::to_string(e->line) +
                        ": cannot parse rate table entry '" + tok +
                        "' in sources." + key);
    }
  }
  return t;
}

inline BoundedFnKind parse_fn_kind(const RunConfig& cfg,
                                   const std::string& key) {
  const std::string v = cfg.get_string("sources", key, "clamped_linear");
  if (v == "one") return BoundedFnKind::ONE;
  if (v == "clamped_linear") return BoundedFnKind::CLAMPED_LINEAR;
  throw ConfigError("sources." + key + ": unknown kind '" + v + "'");
}

inline SymTensor2 parse_sym_tensor(const RunConfig& cfg,
                                   const std::string& section,
                                   const std::string& key) {
  const auto vals = cfg.get_double_list(section, key, {0.0, 0.0, 0.0, 0.0});
  if (vals.size() != 4)
    throw ConfigError(section + "." + key +
                      ": expected 4 row-major entries xx,xy,yx,yy");
  try {
    return require_symmetric(Tensor2{vals[0], vals[1], vals[2], vals[3]});
  } catch (const std::invalid_argument&) {
    throw ConfigError(section + "." + key + ": tensor must be symmetric");
  }
}

}  // namespace detail

inline ModelParams config_params(const RunConfig& cfg) {
  ModelParams p;
  p.epsilon = cfg.get_double("model", "epsilon", 0.05);
  p.chi = cfg.get_double("model", "chi", 0.0);
  p.beta = cfg.get_double("model", "beta", 1.0);
  p.kappa = cfg.get_double("nutrient", "kappa", 0.0);
  p.sigma_B = cfg.get_double("nutrient", "sigma_b", 0.0);

  const std::string pot = cfg.get_string("potential", "kind", "quartic");
  if (pot != "quartic")
    throw ConfigError("potential.kind: only 'quartic' is supported");

  const std::string mob = cfg.get_string("model", "mobility", "constant");
  if (mob == "constant") {
    p.mobility =
        MobilityLaw::constant(cfg.get_double("model", "mobility_value", 1.0));
  } else if (mob == "stress_gated") {
    p.mobility =
        MobilityLaw::stress_gated(cfg.get_double("model", "mobility_c2", 0.5),
                                  cfg.get_double("model", "mobility_c3", 1.0));
  } else {
    throw ConfigError("model.mobility: unknown kind '" + mob + "'");
  }

  p.elastic.lame_lambda = cfg.get_double("elasticity", "lame_lambda", 0.0);
  p.elastic.lame_mu = cfg.get_double("elasticity", "lame_mu", 0.5);
  p.elastic.eigenstrain_offset =
      detail::parse_sym_tensor(cfg, "elasticity", "eigenstrain_offset");
  p.elastic.eigenstrain_slope =
      detail::parse_sym_tensor(cfg, "elasticity", "eigenstrain_slope");
  {
    const auto g = cfg.get_double_list("elasticity", "traction_g", {0.0, 0.0});
    if (g.size() != 2)
      throw ConfigError("elasticity.traction_g: expected gx,gy");
    p.traction_g = {g[0], g[1]};
  }

  p.sources.lambda_p = detail::parse_rate_table(cfg, "lambda_p");
  p.sources.lambda_a = detail::parse_rate_table(cfg, "lambda_a");
  p.sources.lambda_c = detail::parse_rate_table(cfg, "lambda_c");
  p.sources.supply_B = cfg.get_double("sources", "b", 0.0);
  p.sources.sigma_c = cfg.get_double("sources", "sigma_c", 0.0);
  p.sources.f_kind = detail::parse_fn_kind(cfg, "f_kind");
  p.sources.h_kind = detail::parse_fn_kind(cfg, "h_kind");
  p.sources.k_kind = detail::parse_fn_kind(cfg, "k_kind");

  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string(e.what()) +
                      " (sections [model]/[nutrient]/[sources]/[elasticity])");
  }
  return p;
}

inline std::vector<double> config_phi0(const RunConfig& cfg, const Grid& grid) {
  const std::string kind = cfg.get_string("model", "phi0_kind", "constant");
  std::vector<double> phi0(grid.n_nodes(), 0.0);
  if (kind == "constant") {
    const double v = cfg.get_double("model", "phi0_value", -1.0);
    std::fill(phi0.begin(), phi0.end(), v);
  } else if (kind == "disc") {
    const double r = cfg.get_double("model", "phi0_radius", 0.2);
    const double cx =
        cfg.get_double("model", "phi0_center_x", 0.5 * grid.lx);
    const double cy =
        cfg.get_double("model", "phi0_center_y", 0.5 * grid.ly);
    const double eps = cfg.get_double("model", "epsilon", 0.05);
    for (int i = 0; i < grid.n_nodes(); ++i) {
      const Vec2 x = grid.node_coords[i];
      const double d = std::hypot(x.x - cx, x.y - cy);
      phi0[i] = std::tanh((r - d) / (std::sqrt(2.0) * eps));
    }
  } else {
    throw ConfigError("model.phi0_kind: unknown kind '" + kind + "'");
  }
  const double delta = cfg.get_double("model", "phi0_mollify_delta", 0.0);
  if (delta > 0.0) phi0 = mollify_initial(grid, phi0, delta);
  return phi0;
}

// sigma0_kind = stationary solves the quasi-static nutrient problem for
// phi0 (well-prepared data, no initial layer in beta).
inline std::vector<double> config_sigma0(const RunConfig& cfg,
                                         const Grid& grid,
                                         const ModelParams& params,
                                         std::span<const double> phi0) {
  const std::string kind =
      cfg.get_string("model", "sigma0_kind", "constant");
  if (kind == "constant") {
    return std::vector<double>(grid.n_nodes(),
                               cfg.get_double("model", "sigma0_value", 0.0));
  }
  if (kind == "stationary") {
    ModelParams qp = params;
    qp.beta = 0.0;
    if (qp.sources.supply_B == 0.0 && qp.kappa == 0.0)
      throw ConfigError(
          "model.sigma0_kind=stationary requires B+kappa>0 (A1)");
    const auto ctx = make_stepper_context(grid, qp);
    std::vector<double> zero(grid.n_nodes(), 0.0);
    auto [sigma, rep] = nutrient_step(ctx, phi0, zero, 1.0, 0.0);
    return sigma;
  }
  throw ConfigError("model.sigma0_kind: unknown kind '" + kind + "'");
}

inline RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  RunConfig cfg = parse_config_text(ss.str(), path);
  // Surface invalid parameter combinations at parse time, with provenance.
  (void)config_params(cfg);
  (void)config_grid(cfg);
  return cfg;
}

}  // namespace mechanochem
