// Copyright 2026 the pdro authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PDRO_CONFIG_HPP
#define PDRO_CONFIG_HPP

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pdro/benders.hpp"
#include "pdro/experiment.hpp"

namespace pdro {

// Flat structured-text run configuration: `[section]` headers, `key = value`
// lines, `#` comments.  Unknown keys are rejected outright so typos cannot
// silently fall back to defaults.

struct RunConfig {
  ExperimentConfig experiment;
  std::vector<int> n_train_list;       // experiment sweep; single entry usual
  std::string samples_csv;             // optional training data override
  SolveSettings solver;
  BendersSettings benders;
  InnerCone cone = InnerCone::ia0;
  std::vector<Method> methods = {Method::ia0, Method::saa};
};

namespace cfg_detail {

struct RawConfig {
  std::map<std::string, std::map<std::string, std::string>> sections;
};

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline RawConfig parse_raw(std::istream& is) {
  RawConfig raw;
  std::string line, section = "";
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      detail::require(line.back() == ']',
                      "config line " + std::to_string(lineno) +
                          ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      raw.sections[section];
      continue;
    }
    const auto eq = line.find('=');
    detail::require(eq != std::string::npos,
                    "config line " + std::to_string(lineno) +
                        ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    detail::require(!key.empty(), "config line " + std::to_string(lineno) +
                                      ": empty key");
    detail::require(!raw.sections[section].count(key),
                    "config: duplicate key '" + key + "' in [" + section +
                        "]");
    raw.sections[section][key] = value;
  }
  return raw;
}

class SectionReader {
 public:
  SectionReader(const RawConfig& raw, const std::string& name) : name_(name) {
    auto it = raw.sections.find(name);
    if (it != raw.sections.end()) kv_ = it->second;
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return kv_.count(key) > 0;
  }
  std::string str(const std::string& key, const std::string& fallback) {
    seen_.insert(key);
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
  }
  double num(const std::string& key, double fallback) {
    seen_.insert(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
      return std::stod(it->second);
    } catch (...) {
      throw ValidationError("config: [" + name_ + "] " + key +
                            " is not a number: " + it->second);
    }
  }
  long integer(const std::string& key, long fallback) {
    const double v = num(key, static_cast<double>(fallback));
    detail::require(v == std::floor(v), "config: [" + name_ + "] " + key +
                                            " must be an integer");
    return static_cast<long>(v);
  }
  bool boolean(const std::string& key, bool fallback) {
    const std::string v = str(key, fallback ? "true" : "false");
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ValidationError("config: [" + name_ + "] " + key +
                          " must be a boolean");
  }
  std::vector<double> num_list(const std::string& key,
                               std::vector<double> fallback) {
    seen_.insert(key);
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    std::vector<double> out;
    std::istringstream ss(it->second);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(std::stod(trim(cell)));
    detail::require(!out.empty(), "config: [" + name_ + "] " + key +
                                      " list is empty");
    return out;
  }

  void reject_unknown() const {
    for (const auto& [key, value] : kv_)
      detail::require(seen_.count(key) > 0,
                      "config: unknown key '" + key + "' in [" + name_ + "]");
  }

 private:
  std::string name_;
  std::map<std::string, std::string> kv_;
  std::set<std::string> seen_;
};

}  // namespace cfg_detail

/// Parses and range-checks a config stream.  Every value is validated here;
/// downstream code may assume a well-formed configuration.
inline RunConfig validate_config(std::istream& is) {
  auto raw = cfg_detail::parse_raw(is);
  for (const auto& [name, kv] : raw.sections)
    detail::require(name == "instance" || name == "data" ||
                        name == "ambiguity" || name == "solver" ||
                        name == "benders" || name == "run",
                    "config: unknown section [" + name + "]");

  RunConfig rc;
  {
    cfg_detail::SectionReader s(raw, "instance");
    rc.experiment.family = family_from_string(s.str("family", "newsvendor"));
    rc.experiment.paper_scale = s.boolean("paper_scale", false);
    rc.experiment.M = 0;
    apply_family_defaults(rc.experiment);
    if (s.has("items"))
      rc.experiment.M = static_cast<int>(s.integer("items", rc.experiment.M));
    {
      // re-derive the family data at the requested size
      const int m = rc.experiment.M;
      rc.experiment.M = m;
      auto fam = rc.experiment.family;
      auto paper = rc.experiment.paper_scale;
      ExperimentConfig fresh;
      fresh.family = fam;
      fresh.paper_scale = paper;
      fresh.M = m;
      apply_family_defaults(fresh);
      fresh.M = m;
      std::swap(rc.experiment, fresh);
    }
    const double default_delta =
        (rc.experiment.family == Family::inventory ||
         rc.experiment.family == Family::facility)
            ? 1.0
            : 0.1;
    rc.experiment.delta = s.num("delta", default_delta);
    detail::require(rc.experiment.delta > 0.0 && rc.experiment.delta <= 1.0,
                    "config: delta must lie in (0, 1]");
    s.reject_unknown();
  }
  {
    cfg_detail::SectionReader s(raw, "data");
    auto n_train = s.num_list("n_train", {10.0});
    for (double n : n_train) {
      detail::require(n >= 1 && n == std::floor(n),
                      "config: n_train entries must be positive integers");
      rc.n_train_list.push_back(static_cast<int>(n));
    }
    rc.experiment.n_train = rc.n_train_list.front();
    rc.experiment.n_test = static_cast<int>(s.integer("n_test", 1000));
    rc.experiment.trials = static_cast<int>(s.integer("trials", 20));
    rc.experiment.K = static_cast<int>(s.integer("partitions", 0));
    rc.experiment.seed =
        static_cast<std::uint64_t>(s.integer("seed", 1));
    const std::string ctor = s.str("constructors", "halton");
    if (ctor == "halton")
      rc.experiment.constructors = ConstructorPolicy::halton;
    else if (ctor == "from-samples")
      rc.experiment.constructors = ConstructorPolicy::from_samples;
    else
      throw ValidationError("config: constructors must be halton or "
                            "from-samples");
    rc.samples_csv = s.str("samples_csv", "");
    s.reject_unknown();
  }
  {
    cfg_detail::SectionReader s(raw, "ambiguity");
    const std::string eps = s.str("epsilon", "theoretical");
    if (eps == "theoretical")
      rc.experiment.epsilon_policy = EpsilonPolicy::theoretical;
    else if (eps == "cv")
      rc.experiment.epsilon_policy = EpsilonPolicy::cross_validated;
    else {
      rc.experiment.epsilon_policy = EpsilonPolicy::fixed;
      rc.experiment.epsilon_fixed = std::stod(eps);
      detail::require(rc.experiment.epsilon_fixed >= 0.0,
                      "config: epsilon must be nonnegative");
    }
    const std::string gam = s.str("gamma", "zero");
    if (gam == "theoretical")
      rc.experiment.gamma_policy = GammaPolicy::theoretical;
    else if (gam == "zero")
      rc.experiment.gamma_policy = GammaPolicy::zero;
    else {
      rc.experiment.gamma_policy = GammaPolicy::fixed;
      rc.experiment.gamma_fixed = std::stod(gam);
      detail::require(rc.experiment.gamma_fixed >= 0.0,
                      "config: gamma must be nonnegative");
    }
    rc.experiment.rho1 = s.num("rho1", 0.1);
    rc.experiment.rho2 = s.num("rho2", 0.1);
    detail::require(rc.experiment.rho1 > 0.0, "config: rho1 must be positive");
    detail::require(rc.experiment.rho2 > 0.0 && rc.experiment.rho2 <= 1.0,
                    "config: rho2 must lie in (0, 1]");
    rc.experiment.cv_grid = s.num_list("cv_grid", rc.experiment.cv_grid);
    rc.experiment.cv_folds = static_cast<int>(s.integer("cv_folds", 2));
    detail::require(rc.experiment.cv_folds >= 2,
                    "config: cv_folds must be at least 2");
    s.reject_unknown();
  }
  {
    cfg_detail::SectionReader s(raw, "solver");
    rc.solver.feas_tol = s.num("feas_tol", rc.solver.feas_tol);
    rc.solver.gap_tol = s.num("gap_tol", rc.solver.gap_tol);
    rc.solver.max_iters = s.integer("max_iters", rc.solver.max_iters);
    rc.solver.time_limit_sec = s.num("time_limit", rc.solver.time_limit_sec);
    rc.solver.mip_gap = s.num("mip_gap", rc.solver.mip_gap);
    detail::require(rc.solver.feas_tol > 0 && rc.solver.gap_tol > 0,
                    "config: tolerances must be positive");
    s.reject_unknown();
  }
  {
    cfg_detail::SectionReader s(raw, "benders");
    rc.benders.tol = s.num("tol", rc.benders.tol);
    rc.benders.max_iters =
        static_cast<int>(s.integer("max_iters", rc.benders.max_iters));
    rc.benders.parallel =
        static_cast<int>(s.integer("parallel", rc.benders.parallel));
    detail::require(rc.benders.tol > 0.0, "config: benders tol must be positive");
    detail::require(rc.benders.parallel >= 1,
                    "config: parallel must be at least 1");
    s.reject_unknown();
  }
  {
    cfg_detail::SectionReader s(raw, "run");
    const std::string methods = s.str("methods", "");
    if (!methods.empty()) {
      rc.methods.clear();
      std::istringstream ss(methods);
      std::string cell;
      while (std::getline(ss, cell, ','))
        rc.methods.push_back(method_from_string(cfg_detail::trim(cell)));
    }
    s.reject_unknown();
  }
  rc.experiment.validate();
  rc.benders.solver = rc.solver;
  return rc;
}

inline RunConfig validate_config_file(const std::string& path) {
  std::ifstream f(path);
  detail::require(f.good(), "cannot open config file " + path);
  return validate_config(f);
}

/// Echo of the effective configuration, written beside outputs.
inline void write_effective_config(const RunConfig& rc, std::ostream& os) {
  const auto& e = rc.experiment;
  os << "[instance]\n";
  os << "family = " << to_string(e.family) << "\n";
  os << "items = " << e.M << "\n";
  os << "delta = " << e.delta << "\n";
  os << "paper_scale = " << (e.paper_scale ? "true" : "false") << "\n\n";
  os << "[data]\n";
  os << "n_train = ";
  for (std::size_t i = 0; i < rc.n_train_list.size(); ++i)
    os << (i ? "," : "") << rc.n_train_list[i];
  os << "\n";
  os << "n_test = " << e.n_test << "\n";
  os << "trials = " << e.trials << "\n";
  os << "partitions = " << e.K << "\n";
  os << "seed = " << e.seed << "\n";
  os << "constructors = "
     << (e.constructors == ConstructorPolicy::halton ? "halton"
                                                     : "from-samples")
     << "\n";
  if (!rc.samples_csv.empty()) os << "samples_csv = " << rc.samples_csv << "\n";
  os << "\n[ambiguity]\n";
  os << "epsilon = ";
  switch (e.epsilon_policy) {
    case EpsilonPolicy::theoretical: os << "theoretical"; break;
    case EpsilonPolicy::cross_validated: os << "cv"; break;
    case EpsilonPolicy::fixed: os << e.epsilon_fixed; break;
  }
  os << "\ngamma = ";
  switch (e.gamma_policy) {
    case GammaPolicy::theoretical: os << "theoretical"; break;
    case GammaPolicy::zero: os << "zero"; break;
    case GammaPolicy::fixed: os << e.gamma_fixed; break;
  }
  os << "\nrho1 = " << e.rho1 << "\nrho2 = " << e.rho2 << "\n";
  os << "cv_folds = " << e.cv_folds << "\ncv_grid = ";
  for (std::size_t i = 0; i < e.cv_grid.size(); ++i)
    os << (i ? "," : "") << e.cv_grid[i];
  os << "\n\n[solver]\n";
  os << "feas_tol = " << rc.solver.feas_tol << "\n";
  os << "gap_tol = " << rc.solver.gap_tol << "\n";
  os << "max_iters = " << rc.solver.max_iters << "\n";
  os << "time_limit = " << rc.solver.time_limit_sec << "\n\n";
  os << "[benders]\n";
  os << "tol = " << rc.benders.tol << "\n";
  os << "max_iters = " << rc.benders.max_iters << "\n";
  os << "parallel = " << rc.benders.parallel << "\n";
}

/// FNV-1a, for tying outputs to the exact configuration bytes.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace pdro

#endif  // PDRO_CONFIG_HPP
