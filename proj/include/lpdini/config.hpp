#pragma once

// Config parsing, id resolution and JSON serialization of reports and
// families.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lpdini/dyadic.hpp"
#include "lpdini/errors.hpp"
#include "lpdini/harness.hpp"
#include "lpdini/kernels.hpp"
#include "lpdini/moduli.hpp"
#include "lpdini/sampling.hpp"

namespace lpdini {

using json = nlohmann::ordered_json;

namespace detail {

inline std::pair<std::string, std::string> split_id(const std::string& s) {
  const auto c = s.find(':');
  if (c == std::string::npos) return {s, ""};
  return {s.substr(0, c), s.substr(c + 1)};
}

/// "kappa=3,beta=1.5" -> map; bare numbers are rejected.
inline std::map<std::string, double> parse_kv(const std::string& s, const std::string& where) {
  std::map<std::string, double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value, got '" + item + "'");
    try {
      out[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
    } catch (const std::exception&) {
      throw ConfigError(where + ": bad number in '" + item + "'");
    }
  }
  return out;
}

inline std::vector<std::vector<double>> read_table(const std::string& path, const std::string& where) {
  std::ifstream in(path);
  if (!in) throw ConfigError(where + ": cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ConfigError(where + ": bad number '" + cell + "' in " + path);
      }
    }
    if (row.size() != 2) throw ConfigError(where + ": expected two columns in " + path);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace detail

/// Modulus ids: power:delta, log:kappa, logsplit:kappa,beta (the w part),
/// table:path (CSV t,w).
inline Modulus parse_modulus(const std::string& id, const std::string& where = "modulus") {
  const auto [name, rest] = detail::split_id(id);
  try {
    const auto nums = name == "table" ? std::vector<double>{} : detail::parse_numbers(rest);
    if (name == "power") return moduli::power(nums.empty() ? 1.0 : nums[0]);
    if (name == "log") return moduli::log_example(nums.empty() ? 3.0 : nums[0]);
    if (name == "logsplit") {
      if (nums.size() != 2) throw ConfigError(where + ": logsplit needs kappa,beta");
      return moduli::log_split(nums[0], nums[1]).w;
    }
    if (name == "table") {
      std::vector<double> ts, ws;
      for (const auto& r : detail::read_table(rest, where)) {
        ts.push_back(r[0]);
        ws.push_back(r[1]);
      }
      return moduli::table(ts, ws, id);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(where + ": " + e.what());
  }
  throw ConfigError(where + ": unknown modulus id '" + name + "'");
}

/// Kernel ids: ex1:kappa=K, ex2:kappa=K,beta=B, ex3:kappa=K, bex1:kappa=K,
/// box, zero, csv:path (1D profile table). `box`, `zero` and `csv` take
/// their moduli from `modulus`.
inline KernelSpec parse_kernel(const std::string& id, int n, const std::string& modulus = "power:1",
                               const std::string& where = "kernel") {
  const auto [name, rest] = detail::split_id(id);
  try {
    if (name == "ex1" || name == "ex2" || name == "ex3" || name == "bex1") {
      const auto kv = detail::parse_kv(rest, where);
      ExampleParams p;
      for (const auto& [key, v] : kv) {
        if (key == "kappa") p.kappa = v;
        else if (key == "beta") p.beta = v;
        else throw ConfigError(where + ": unknown kernel parameter '" + key + "'");
      }
      const ExampleId e = name == "ex1"   ? ExampleId::ex1
                          : name == "ex2" ? ExampleId::ex2
                          : name == "ex3" ? ExampleId::ex3
                                          : ExampleId::bex1;
      return example_kernel(e, p, n);
    }
    const Modulus m = parse_modulus(modulus, where + ".modulus");
    if (name == "box") return box_kernel(n, m, m);
    if (name == "zero")
      return convolution_kernel("zero", n, [](const Point&) { return 0.0; }, m, m);
    if (name == "csv") {
      if (n != 1) throw ConfigError(where + ": csv kernels are one-dimensional");
      std::vector<double> xs, vs;
      for (const auto& r : detail::read_table(rest, where)) {
        xs.push_back(r[0]);
        vs.push_back(r[1]);
      }
      return table_kernel(xs, vs, m, m, id);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(where + ": " + e.what());
  }
  throw ConfigError(where + ": unknown kernel id '" + name + "'");
}

// ---------------------------------------------------------------------------
// Run configuration

struct Config {
  std::string campaign = "aperture";
  std::string kernel = "ex1:kappa=3";
  std::string modulus = "power:1";
  std::string function = "gaussian";
  int n = 1;
  double R = 8.0;
  double h = 1.0 / 16.0;
  double alpha = 1.0;
  double lambda = 3.0;
  ConeSpec cone;
  std::vector<double> rho_grid;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  std::string source = "<config>";
};

inline Config parse_config(const json& j, const std::string& source = "<config>") {
  Config c;
  c.source = source;
  if (!j.is_object()) throw ConfigError(source + ": top level must be an object");
  auto loc = [&](const std::string& key) { return source + ": field '" + key + "'"; };
  auto num = [&](const json& v, const std::string& key) {
    if (!v.is_number()) throw ConfigError(loc(key) + ": expected a number");
    return v.get<double>();
  };
  auto str = [&](const json& v, const std::string& key) {
    if (!v.is_string()) throw ConfigError(loc(key) + ": expected a string");
    return v.get<std::string>();
  };
  for (const auto& [key, v] : j.items()) {
    if (key == "campaign") c.campaign = str(v, key);
    else if (key == "kernel") c.kernel = str(v, key);
    else if (key == "modulus") c.modulus = str(v, key);
    else if (key == "function") c.function = str(v, key);
    else if (key == "out_dir") c.out_dir = str(v, key);
    else if (key == "n") {
      if (!v.is_number_integer() || (v.get<int>() != 1 && v.get<int>() != 2))
        throw ConfigError(loc(key) + ": expected 1 or 2");
      c.n = v.get<int>();
    } else if (key == "R") c.R = num(v, key);
    else if (key == "h") c.h = num(v, key);
    else if (key == "alpha") c.alpha = num(v, key);
    else if (key == "lambda") c.lambda = num(v, key);
    else if (key == "seed") {
      if (!v.is_number_integer()) throw ConfigError(loc(key) + ": expected an integer");
      c.seed = v.get<std::uint64_t>();
    } else if (key == "rho_grid") {
      if (!v.is_array()) throw ConfigError(loc(key) + ": expected an array");
      for (std::size_t i = 0; i < v.size(); ++i) c.rho_grid.push_back(num(v[i], key + "[" + std::to_string(i) + "]"));
    } else if (key == "cone") {
      if (!v.is_object()) throw ConfigError(loc(key) + ": expected an object");
      for (const auto& [ck, cv] : v.items()) {
        const std::string k2 = "cone." + ck;
        if (ck == "tmin") c.cone.t_min = num(cv, k2);
        else if (ck == "tmax") c.cone.t_max = num(cv, k2);
        else if (ck == "q") {
          if (!cv.is_number_integer()) throw ConfigError(loc(k2) + ": expected an integer");
          c.cone.q = cv.get<int>();
        } else throw ConfigError(loc(k2) + ": unknown field");
      }
    } else {
      throw ConfigError(loc(key) + ": unknown field");
    }
  }
  // Resolve ids early so that errors carry the config location.
  parse_kernel(c.kernel, c.n, c.modulus, loc("kernel"));
  parse_modulus(c.modulus, loc("modulus"));
  if (c.function.rfind("csv:", 0) != 0) {
    try {
      sample_function(c.function, c.n, 1.0, 1.0);
    } catch (const Error& e) {
      throw ConfigError(loc("function") + ": " + e.what());
    }
  }
  return c;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

/// Relative csv: paths in the config resolve against the config's directory.
inline Config load_config(const std::string& path) {
  json j = read_json_file(path);
  const auto dir = std::filesystem::path(path).parent_path();
  for (const char* key : {"function", "kernel", "modulus"}) {
    if (!j.contains(key) || !j[key].is_string()) continue;
    const std::string v = j[key].get<std::string>();
    const auto [id, rest] = detail::split_id(v);
    if ((id == "csv" || id == "table") && !rest.empty() && std::filesystem::path(rest).is_relative())
      j[key] = id + ":" + (dir / rest).lexically_normal().string();
  }
  return parse_config(j, path);
}

inline json to_json(const Config& c) {
  json j;
  j["campaign"] = c.campaign;
  j["kernel"] = c.kernel;
  j["modulus"] = c.modulus;
  j["function"] = c.function;
  j["n"] = c.n;
  j["R"] = c.R;
  j["h"] = c.h;
  j["alpha"] = c.alpha;
  j["lambda"] = c.lambda;
  json cone = json::object();
  if (c.cone.t_min) cone["tmin"] = *c.cone.t_min;
  if (c.cone.t_max) cone["tmax"] = *c.cone.t_max;
  cone["q"] = c.cone.q;
  j["cone"] = cone;
  j["rho_grid"] = c.rho_grid;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  return j;
}

// ---------------------------------------------------------------------------
// Reports

inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json to_json(const FitReport& r) {
  json j;
  j["name"] = r.name;
  j["statistic"] = to_string(r.statistic);
  j["fitted"] = finite_or_null(r.fitted);
  j["residual"] = finite_or_null(r.residual);
  j["lo"] = finite_or_null(r.lo);
  j["hi"] = finite_or_null(r.hi);
  j["pass"] = r.pass;
  j["param_name"] = r.param_name;
  json params = json::array(), ratios = json::array();
  for (double p : r.params) params.push_back(finite_or_null(p));
  for (double v : r.ratios) ratios.push_back(finite_or_null(v));
  j["params"] = params;
  j["ratios"] = ratios;
  json extra = json::object();
  for (const auto& [k, v] : r.extra) extra[k] = finite_or_null(v);
  j["extra"] = extra;
  j["notes"] = r.notes;
  return j;
}

inline void write_report_csv(const FitReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << r.param_name << ",ratio\n";
  char buf[64];
  for (std::size_t i = 0; i < r.ratios.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", r.params[i], r.ratios[i]);
    out << buf;
  }
}

inline void write_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Families

inline json to_json(const Cube& c) {
  json j;
  j["generation"] = c.generation;
  j["anchor"] = c.n == 2 ? json::array({c.anchor[0], c.anchor[1]}) : json::array({c.anchor[0]});
  j["shift"] = c.n == 2 ? json::array({0, 0}) : json::array({0});
  return j;
}

inline Cube cube_from_json(const json& j, int n, double base, const std::string& where) {
  if (!j.is_object() || !j.contains("generation") || !j.contains("anchor"))
    throw ConfigError(where + ": cube needs generation and anchor");
  Cube c;
  c.n = n;
  c.base = base;
  c.generation = j["generation"].get<int>();
  const auto& a = j["anchor"];
  if (!a.is_array() || static_cast<int>(a.size()) != n) throw ConfigError(where + ": anchor must have n entries");
  for (int i = 0; i < n; ++i) c.anchor[static_cast<std::size_t>(i)] = a[static_cast<std::size_t>(i)].get<std::int64_t>();
  if (j.contains("shift"))
    for (const auto& s : j["shift"])
      if (s.get<int>() != 0) throw ConfigError(where + ": only unshifted dyadic cubes are supported");
  return c;
}

inline json to_json(const SparseFamily& f) {
  json j;
  j["n"] = f.root.n;
  j["base"] = f.root.base;
  j["eta"] = f.eta;
  j["gamma"] = f.gamma;
  j["threshold_constant"] = f.threshold_constant;
  j["pool"] = f.pool;
  j["root"] = to_json(f.root);
  json cubes = json::array();
  for (std::size_t i = 0; i < f.cubes.size(); ++i) {
    json c = to_json(f.cubes[i]);
    c["parent"] = i < f.parent.size() ? f.parent[i] : -1;
    cubes.push_back(c);
  }
  j["cubes"] = cubes;
  return j;
}

inline SparseFamily sparse_family_from_json(const json& j, const std::string& where = "family") {
  for (const char* key : {"n", "base", "eta", "root", "cubes"})
    if (!j.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
  SparseFamily f;
  const int n = j["n"].get<int>();
  const double base = j["base"].get<double>();
  f.eta = j["eta"].get<double>();
  f.gamma = j.value("gamma", 0.0);
  f.threshold_constant = j.value("threshold_constant", 0.0);
  f.pool = j.value("pool", f.pool);
  f.root = cube_from_json(j["root"], n, base, where + ".root");
  const auto& cs = j["cubes"];
  for (std::size_t i = 0; i < cs.size(); ++i) {
    const std::string w = where + ".cubes[" + std::to_string(i) + "]";
    f.cubes.push_back(cube_from_json(cs[i], n, base, w));
    f.parent.push_back(cs[i].value("parent", -1L));
  }
  return f;
}

/// Writes good.csv, bad_<j>.csv and manifest.json into `dir`.
inline void write_cz(const CZDecomposition& cz, const GridFunction& like, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_grid_csv(cz.good, dir + "/good.csv");
  json m;
  m["rho"] = cz.rho;
  m["n"] = like.dimension();
  m["R"] = like.half_width();
  m["h"] = like.spacing();
  m["good"] = "good.csv";
  json bad = json::array();
  for (std::size_t i = 0; i < cz.bad.size(); ++i) {
    const std::string file = "bad_" + std::to_string(i) + ".csv";
    write_grid_csv(cz.bad[i].expand(like), dir + "/" + file);
    json b = to_json(cz.bad[i].cube);
    b["base"] = cz.bad[i].cube.base;
    b["average"] = cz.bad[i].average;
    b["abs_average"] = cz.bad[i].abs_average;
    b["file"] = file;
    bad.push_back(b);
  }
  m["bad"] = bad;
  write_json(m, dir + "/manifest.json");
}

}  // namespace lpdini
