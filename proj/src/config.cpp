#include "msdiff/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

namespace msdiff {

namespace {

int line_of(const YAML::Node& n) { return n.Mark().line >= 0 ? n.Mark().line + 1 : 0; }

void allow_keys(const YAML::Node& map, std::initializer_list<const char*> keys,
                const std::string& where) {
  if (!map.IsMap()) throw ParseError(where + " must be a mapping", line_of(map));
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& kv : map) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key))
      throw ParseError("unknown key '" + key + "' in " + where, line_of(kv.first));
  }
}

template <typename T>
T scalar(const YAML::Node& n, const std::string& what) {
  if (!n.IsScalar()) throw ParseError(what + " must be a scalar", line_of(n));
  try {
    return n.as<T>();
  } catch (const YAML::BadConversion&) {
    throw ParseError(what + " has the wrong type: '" + n.Scalar() + "'", line_of(n));
  }
}

template <typename T>
T get_or(const YAML::Node& map, const char* key, T fallback, const std::string& where) {
  const YAML::Node n = map[key];
  return n ? scalar<T>(n, where + "." + key) : fallback;
}

// A scalar broadcast to every axis, or one entry per axis.
template <typename T>
std::array<T, 3> per_axis(const YAML::Node& n, int dim, T fallback, const std::string& what) {
  std::array<T, 3> out{fallback, fallback, fallback};
  if (!n) return out;
  if (n.IsScalar()) {
    const T v = scalar<T>(n, what);
    for (int a = 0; a < dim; ++a) out[a] = v;
    return out;
  }
  if (!n.IsSequence() || static_cast<int>(n.size()) != dim)
    throw ValidationError("dimension", what + " needs " + std::to_string(dim) + " entries",
                          line_of(n));
  for (int a = 0; a < dim; ++a) out[a] = scalar<T>(n[a], what);
  return out;
}

std::array<int, 3> parse_mode(const YAML::Node& n, int dim, const std::string& what) {
  std::array<int, 3> m{0, 0, 0};
  if (!n) {
    m[0] = 1;
    return m;
  }
  if (n.IsScalar()) {
    m[0] = scalar<int>(n, what);
    return m;
  }
  if (!n.IsSequence() || static_cast<int>(n.size()) > dim)
    throw ValidationError("dimension", what + " has more entries than the grid has axes",
                          line_of(n));
  for (std::size_t a = 0; a < n.size(); ++a) m[a] = scalar<int>(n[a], what);
  return m;
}

DiffusionMatrix parse_diffusion(const YAML::Node& n, int species) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(species, species);
  Eigen::MatrixXi seen = Eigen::MatrixXi::Zero(species, species);
  Eigen::MatrixXi where = Eigen::MatrixXi::Zero(species, species);
  if (n.IsSequence()) {
    if (static_cast<int>(n.size()) != species)
      throw ValidationError("dimension", "diffusion matrix needs " + std::to_string(species) + " rows",
                            line_of(n));
    for (int i = 0; i < species; ++i) {
      const YAML::Node row = n[i];
      if (!row.IsSequence() || static_cast<int>(row.size()) != species)
        throw ValidationError("dimension", "diffusion row " + std::to_string(i + 1) + " needs " +
                                               std::to_string(species) + " entries",
                              line_of(row));
      for (int j = 0; j < species; ++j) {
        if (i == j) continue;
        m(i, j) = scalar<double>(row[j], "diffusion entry");
        seen(i, j) = 1;
        where(i, j) = line_of(row[j]);
      }
    }
  } else if (n.IsMap()) {
    static const std::regex long_form(R"(D_(\d+)_(\d+))"), short_form(R"(D_(\d)(\d))");
    for (const auto& kv : n) {
      const auto key = kv.first.as<std::string>();
      std::smatch hit;
      if (!std::regex_match(key, hit, long_form) && !std::regex_match(key, hit, short_form))
        throw ParseError("diffusion key '" + key + "' is not of the form D_ij or D_i_j",
                         line_of(kv.first));
      const int i = std::stoi(hit[1]) - 1, j = std::stoi(hit[2]) - 1;
      if (i < 0 || j < 0 || i >= species || j >= species || i == j)
        throw ValidationError("dimension", "diffusion key '" + key + "' names no species pair",
                              line_of(kv.first));
      const double v = scalar<double>(kv.second, key);
      if (seen(i, j) && m(i, j) != v)
        throw ValidationError("symmetry", key + " is given twice with different values",
                              line_of(kv.first));
      m(i, j) = v;
      seen(i, j) = 1;
      where(i, j) = line_of(kv.first);
    }
    // A single entry per pair stands for both orders.
    for (int i = 0; i < species; ++i)
      for (int j = 0; j < species; ++j)
        if (i != j && seen(i, j) && !seen(j, i)) {
          m(j, i) = m(i, j);
          seen(j, i) = 1;
          where(j, i) = where(i, j);
        }
  } else {
    throw ParseError("diffusion must be a mapping of D_ij entries or a matrix", line_of(n));
  }
  for (int i = 0; i < species; ++i)
    for (int j = 0; j < species; ++j) {
      if (i == j) continue;
      const std::string name = "D_" + std::to_string(i + 1) + std::to_string(j + 1);
      if (!seen(i, j))
        throw ValidationError("completeness", name + " is missing", line_of(n));
      if (!(m(i, j) > 0.0) || !std::isfinite(m(i, j)))
        throw ValidationError("positivity", name + " must be positive and finite", where(i, j));
      if (m(i, j) != m(j, i))
        throw ValidationError("symmetry",
                              name + " = " + std::to_string(m(i, j)) + " differs from D_" +
                                  std::to_string(j + 1) + std::to_string(i + 1) + " = " +
                                  std::to_string(m(j, i)),
                              std::max(where(i, j), where(j, i)));
    }
  return DiffusionMatrix(m);
}

void parse_scenario(const YAML::Node& n, RunConfig& cfg) {
  allow_keys(n, {"grid", "species", "diffusion", "delta", "initial", "time", "perturbation"},
             "scenario");
  Scenario& s = cfg.scenario;

  const YAML::Node grid = n["grid"];
  if (!grid) throw ParseError("scenario.grid is required", line_of(n));
  allow_keys(grid, {"dim", "cells", "lengths"}, "scenario.grid");
  s.dim = get_or<int>(grid, "dim", 1, "scenario.grid");
  if (s.dim < 1 || s.dim > 3)
    throw ValidationError("dimension", "grid dimension must be 1, 2 or 3", line_of(grid["dim"]));
  if (!grid["cells"]) throw ParseError("scenario.grid.cells is required", line_of(grid));
  s.cells = per_axis<int>(grid["cells"], s.dim, 1, "scenario.grid.cells");
  s.lengths = per_axis<double>(grid["lengths"], s.dim, 1.0, "scenario.grid.lengths");
  for (int a = 0; a < s.dim; ++a) {
    if (s.cells[a] < 4)
      throw ValidationError("grid", "every axis needs at least 4 cells", line_of(grid["cells"]));
    if (!(s.lengths[a] > 0.0))
      throw ValidationError("grid", "domain lengths must be positive", line_of(grid));
  }

  const YAML::Node species = n["species"];
  if (!species) throw ParseError("scenario.species is required", line_of(n));
  const int count = scalar<int>(species, "scenario.species");
  if (count < 2 || count > 16)
    throw ValidationError("species", "species count must be between 2 and 16", line_of(species));

  const YAML::Node diffusion = n["diffusion"];
  if (!diffusion) throw ParseError("scenario.diffusion is required", line_of(n));
  s.D = parse_diffusion(diffusion, count);

  s.delta = get_or<double>(n, "delta", 0.05, "scenario");
  cfg.delta_line = n["delta"] ? line_of(n["delta"]) : line_of(n);
  if (!(s.delta > 0.0))
    throw ValidationError("delta-positive", "the shift delta must be positive", cfg.delta_line);

  const YAML::Node init = n["initial"];
  int init_line = line_of(n);
  if (init) {
    init_line = line_of(init);
    allow_keys(init, {"preset", "profiles"}, "scenario.initial");
    const auto preset = get_or<std::string>(init, "preset", "uniform", "scenario.initial");
    if (preset == "uniform") {
      s.initial.preset = InitialData::Preset::Uniform;
    } else if (preset == "cosine") {
      s.initial.preset = InitialData::Preset::Cosine;
      const YAML::Node profiles = init["profiles"];
      if (!profiles || !profiles.IsSequence())
        throw ParseError("cosine preset needs a profiles list", init_line);
      if (static_cast<int>(profiles.size()) != count)
        throw ValidationError("dimension", "need one profile per species", line_of(profiles));
      for (const YAML::Node& p : profiles) {
        allow_keys(p, {"base", "amplitude", "mode", "phase"}, "profile");
        SpeciesProfile sp;
        sp.base = get_or<double>(p, "base", 1.0 / count, "profile");
        sp.amplitude = get_or<double>(p, "amplitude", 0.0, "profile");
        sp.mode = parse_mode(p["mode"], s.dim, "profile.mode");
        sp.phase = get_or<double>(p, "phase", 0.0, "profile");
        s.initial.species.push_back(sp);
      }
    } else {
      throw ValidationError("preset", "unknown initial preset '" + preset + "'",
                            line_of(init["preset"]));
    }
  }

  const YAML::Node time = n["time"];
  if (!time) throw ParseError("scenario.time is required", line_of(n));
  allow_keys(time, {"final", "dt", "cfl", "cadence", "scheme"}, "scenario.time");
  s.t_final = get_or<double>(time, "final", 0.0, "scenario.time");
  if (!(s.t_final > 0.0))
    throw ValidationError("time", "final time must be positive", line_of(time));
  s.dt = get_or<double>(time, "dt", 0.0, "scenario.time");
  s.cfl = get_or<double>(time, "cfl", kDefaultCfl, "scenario.time");
  s.cadence = get_or<int>(time, "cadence", 1, "scenario.time");
  if (s.cadence < 1) throw ValidationError("time", "cadence must be at least 1", line_of(time));
  const auto scheme = get_or<std::string>(time, "scheme", "euler", "scenario.time");
  if (scheme == "euler") {
    s.scheme = TimeScheme::Euler;
  } else if (scheme == "heun") {
    s.scheme = TimeScheme::Heun;
  } else {
    throw ValidationError("scheme", "unknown time scheme '" + scheme + "'", line_of(time["scheme"]));
  }
  if (!(s.cfl > 0.0) || s.cfl > kCflHardLimit)
    throw ValidationError("cfl", "cfl must lie in (0, " + std::to_string(kCflHardLimit) + "]",
                          line_of(time));
  try {
    resolve_time_step(s);
  } catch (const CflViolation& e) {
    throw ValidationError("cfl", e.what(), time["dt"] ? line_of(time["dt"]) : line_of(time));
  }

  const YAML::Node pert = n["perturbation"];
  if (pert) {
    allow_keys(pert, {"amplitude", "mode", "species"}, "scenario.perturbation");
    s.perturbation.amplitude = get_or<double>(pert, "amplitude", 0.0, "scenario.perturbation");
    s.perturbation.mode = parse_mode(pert["mode"], s.dim, "scenario.perturbation.mode");
    if (const YAML::Node sp = pert["species"]) {
      if (!sp.IsSequence() || sp.size() != 2)
        throw ParseError("perturbation.species must list two species", line_of(sp));
      s.perturbation.species_plus = scalar<int>(sp[0], "perturbation.species") - 1;
      s.perturbation.species_minus = scalar<int>(sp[1], "perturbation.species") - 1;
      const auto& p = s.perturbation;
      if (p.species_plus < 0 || p.species_plus >= count || p.species_minus < 0 ||
          p.species_minus >= count || p.species_plus == p.species_minus)
        throw ValidationError("perturbation", "perturbation needs two distinct species in range",
                              line_of(sp));
    }
  }

  try {
    initial_state(s, false);
  } catch (const Error& e) {
    throw ValidationError("simplex", std::string("initial data: ") + e.what(), init_line);
  }
  if (pert) {
    try {
      initial_state(s, true);
    } catch (const Error& e) {
      throw ValidationError("simplex", std::string("perturbed initial data: ") + e.what(),
                            line_of(pert));
    }
  }
}

std::vector<int> int_list(const YAML::Node& n, const std::string& what) {
  if (!n.IsSequence() || n.size() < 2)
    throw ParseError(what + " must be a list of at least two entries", line_of(n));
  std::vector<int> out;
  for (const YAML::Node& v : n) out.push_back(scalar<int>(v, what));
  return out;
}

std::vector<double> double_list(const YAML::Node& n, const std::string& what) {
  if (!n.IsSequence() || n.size() < 2)
    throw ParseError(what + " must be a list of at least two entries", line_of(n));
  std::vector<double> out;
  for (const YAML::Node& v : n) out.push_back(scalar<double>(v, what));
  return out;
}

void parse_studies(const YAML::Node& n, StudySettings& st) {
  allow_keys(n,
             {"flux_samples", "operator_samples", "spectral_samples", "error_samples", "ck_points",
              "identity_cells", "mollifier_eps", "convergence_cells"},
             "studies");
  st.flux_samples = get_or<int>(n, "flux_samples", st.flux_samples, "studies");
  st.operator_samples = get_or<int>(n, "operator_samples", st.operator_samples, "studies");
  st.spectral_samples = get_or<int>(n, "spectral_samples", st.spectral_samples, "studies");
  st.error_samples = get_or<int>(n, "error_samples", st.error_samples, "studies");
  st.ck_points = get_or<int>(n, "ck_points", st.ck_points, "studies");
  if (n["identity_cells"]) st.identity_cells = int_list(n["identity_cells"], "studies.identity_cells");
  if (n["mollifier_eps"]) st.mollifier_eps = double_list(n["mollifier_eps"], "studies.mollifier_eps");
  if (n["convergence_cells"])
    st.convergence_cells = int_list(n["convergence_cells"], "studies.convergence_cells");
  for (int v : {st.flux_samples, st.operator_samples, st.spectral_samples, st.error_samples,
                st.ck_points})
    if (v < 1) throw ValidationError("studies", "sample counts must be positive", line_of(n));
}

}  // namespace

void validate_suites(const RunConfig& cfg) {
  const Scenario& s = cfg.scenario;
  for (const std::string& name : cfg.suites)
    if (std::find(known_suites().begin(), known_suites().end(), name) == known_suites().end())
      throw ValidationError("suite", "unknown suite '" + name + "'", 0);
  auto selected = [&](const char* name) {
    return std::find(cfg.suites.begin(), cfg.suites.end(), name) != cfg.suites.end();
  };
  if (selected("twin-study")) {
    if (s.delta >= 1.0)
      throw ValidationError("admissibility",
                            "twin-study needs 0 < delta < min(1, mu/(4 C4)); delta = " +
                                std::to_string(s.delta) + " is not below 1",
                            cfg.delta_line);
    const StabilityConstants k = evaluate_constants(s.D, s.delta, 0.0);
    if (!k.admissible)
      throw ValidationError("admissibility",
                            "twin-study needs 0 < delta < min(1, mu/(4 C4)) = " +
                                std::to_string(k.delta_max) + "; delta = " + std::to_string(s.delta),
                            cfg.delta_line);
  }
  if (selected("convergence-study")) {
    const bool binary = s.species() == 2 && s.initial.preset == InitialData::Preset::Cosine;
    bool single_mode = false;
    if (binary) {
      const SpeciesProfile& a = s.initial.species[0];
      const SpeciesProfile& b = s.initial.species[1];
      single_mode = a.base + b.base == 1.0 && a.amplitude == -b.amplitude && a.mode == b.mode &&
                    a.phase == b.phase;
    }
    if (!single_mode)
      throw ValidationError("convergence-scenario",
                            "convergence-study compares against the exact binary solution and needs "
                            "two species with bases summing to 1 and opposite single-mode amplitudes",
                            0);
  }
}

RunConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ParseError(e.msg, e.mark.line >= 0 ? e.mark.line + 1 : 0);
  }
  if (!root || root.IsNull()) throw ParseError("config is empty", 1);
  allow_keys(root, {"scenario", "suites", "seed", "output", "workers", "studies"}, "config");
  RunConfig cfg;
  const YAML::Node scenario = root["scenario"];
  if (!scenario) throw ParseError("scenario section is required", 1);
  parse_scenario(scenario, cfg);

  if (const YAML::Node suites = root["suites"]) {
    if (!suites.IsSequence()) throw ParseError("suites must be a list", line_of(suites));
    for (const YAML::Node& v : suites) {
      const auto name = scalar<std::string>(v, "suite");
      if (std::find(known_suites().begin(), known_suites().end(), name) == known_suites().end())
        throw ValidationError("suite", "unknown suite '" + name + "'", line_of(v));
      cfg.suites.push_back(name);
    }
  }
  cfg.seed = get_or<std::uint64_t>(root, "seed", 0, "config");
  cfg.output = get_or<std::string>(root, "output", "out", "config");
  cfg.workers = get_or<int>(root, "workers", 1, "config");
  if (cfg.workers < 1) throw ValidationError("workers", "workers must be at least 1", line_of(root["workers"]));
  if (const YAML::Node st = root["studies"]) parse_studies(st, cfg.studies);

  try {
    validate_suites(cfg);
  } catch (const ValidationError& e) {
    if (e.line() != 0) throw;
    const int line = root["suites"] ? line_of(root["suites"]) : 0;
    const std::string msg = e.what();
    throw ValidationError(e.invariant(), msg.substr(msg.find("] ") + 2), line);
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file '" + path + "'", 0);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

}  // namespace msdiff
