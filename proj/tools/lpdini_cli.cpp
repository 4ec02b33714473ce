// Command-line front end. Every subcommand reads an optional JSON config,
// applies flag overrides, runs, and writes summary.json plus CSV tables into
// out_dir. Wall-clock timings go to timing.json so that the other outputs are
// byte-identical for identical config and seed.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lpdini/lpdini.hpp"

using namespace lpdini;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> kernel, modulus, function, function2, out;
  std::optional<int> n;
  std::optional<double> R, h, alpha, lambda;
  std::optional<std::uint64_t> seed;
  bool oracle = false;
};

void add_common(CLI::App* app, Overrides& o) {
  app->set_help_flag("--help", "print this help");  // frees -h/--h for the spacing
  app->add_option("--config", o.config, "JSON config file");
  app->add_option("--kernel", o.kernel, "kernel id, e.g. ex1:kappa=3");
  app->add_option("--modulus", o.modulus, "modulus id, e.g. power:0.5");
  app->add_option("--function,--input", o.function, "input function id or csv:path");
  app->add_option("--function2", o.function2, "second input for bilinear kernels");
  app->add_option("--n", o.n, "dimension (1 or 2)");
  app->add_option("--R", o.R, "box half-width");
  app->add_option("--h", o.h, "lattice spacing");
  app->add_option("--alpha", o.alpha, "cone aperture");
  app->add_option("--lambda", o.lambda, "g* exponent");
  app->add_option("--seed", o.seed, "random seed");
  app->add_option("--out", o.out, "output directory");
  app->add_flag("--oracle", o.oracle, "force brute-force evaluation");
}

Config resolve(const Overrides& o) {
  Config c = o.config.empty() ? parse_config(json::object(), "<defaults>") : load_config(o.config);
  if (o.kernel) c.kernel = *o.kernel;
  if (o.modulus) c.modulus = *o.modulus;
  if (o.function) c.function = *o.function;
  if (o.n) c.n = *o.n;
  if (o.R) c.R = *o.R;
  if (o.h) c.h = *o.h;
  if (o.alpha) c.alpha = *o.alpha;
  if (o.lambda) c.lambda = *o.lambda;
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out_dir = *o.out;
  // Re-validate the merged config so that flag errors carry a location too.
  return parse_config(to_json(c), o.config.empty() ? "<flags>" : o.config + " + flags");
}

GridFunction load_input(const std::string& id, const Config& c) {
  if (id.rfind("csv:", 0) == 0) return read_grid_csv(id.substr(4));
  return sample_function(id, c.n, c.R, c.h);
}

/// Shortest decimal rendering that keeps a decimal point (3 -> "3.0").
std::string decimal(double v) {
  std::ostringstream s;
  s.precision(12);
  s << v;
  std::string r = s.str();
  if (r.find_first_of(".eEn") == std::string::npos) r += ".0";
  return r;
}

struct Output {
  Config cfg;
  std::string command;
  json summary;
  json timing = json::object();
  std::vector<std::pair<int, FitReport>> reports;

  Output(Config c, std::string cmd) : cfg(std::move(c)), command(std::move(cmd)) {
    std::filesystem::create_directories(cfg.out_dir);
    summary["command"] = command;
    summary["config"] = to_json(cfg);
  }

  void add(int criterion, FitReport r) {
    const std::string file = r.name + ".csv";
    write_report_csv(r, cfg.out_dir + "/" + file);
    for (const auto& [k, v] : r.timing) timing[r.name + "." + k] = v;
    json j = to_json(r);
    j["criterion"] = criterion;
    j["csv"] = file;
    summary["reports"].push_back(j);
    reports.emplace_back(criterion, std::move(r));
  }

  int finish() {
    bool ok = true;
    for (const auto& [crit, r] : reports) {
      std::printf("%s: %s (%s=%.6g)\n", r.name.c_str(), r.pass ? "PASS" : "FAIL",
                  to_string(r.statistic), r.fitted);
      if (!r.pass) {
        ok = false;
        std::fprintf(stderr, "failing criterion %d (%s)\n", crit, r.name.c_str());
      }
    }
    summary["pass"] = ok;
    write_json(summary, cfg.out_dir + "/summary.json");
    write_json(timing, cfg.out_dir + "/timing.json");
    return ok ? 0 : 1;
  }
};

ConditionMode parse_mode(const std::string& m) {
  if (m == "size") return ConditionMode::size;
  if (m == "smooth_x") return ConditionMode::smooth_x;
  if (m == "smooth_y") return ConditionMode::smooth_y;
  if (m == "log_ratio") return ConditionMode::log_ratio;
  throw ConfigError("--mode: unknown condition mode '" + m + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lpdini: square functions with Dini-continuous kernels"};
  app.require_subcommand(1);

  // dini
  Overrides o_dini;
  auto* dini = app.add_subcommand("dini", "Dini constant of a modulus");
  add_common(dini, o_dini);

  // kernel-check
  Overrides o_kc;
  std::string kc_mode = "size";
  double kc_gamma = 0.5;
  int kc_samples = 10000;
  auto* kc = app.add_subcommand("kernel-check", "kernel condition ratios");
  add_common(kc, o_kc);
  kc->add_option("--mode", kc_mode, "size | smooth_x | smooth_y | log_ratio");
  kc->add_option("--gamma", kc_gamma, "exponent for log_ratio");
  kc->add_option("--samples", kc_samples, "random samples");

  // eval
  Overrides o_eval;
  std::string eval_op = "s", eval_arity = "linear";
  double halfspace_alpha = 512.0;
  auto* ev = app.add_subcommand("eval", "evaluate S_alpha or g*_lambda on the grid");
  add_common(ev, o_eval);
  ev->add_option("op", eval_op, "s | gstar")->check(CLI::IsMember({"s", "gstar"}));
  ev->add_option("arity", eval_arity, "linear | bilinear")->check(CLI::IsMember({"linear", "bilinear"}));
  ev->add_option("--halfspace-alpha", halfspace_alpha, "aperture truncating the half-space for g*");

  // cz
  Overrides o_cz;
  double cz_rho = 1.0;
  auto* cz = app.add_subcommand("cz", "Calderon-Zygmund decomposition");
  add_common(cz, o_cz);
  cz->add_option("--rho", cz_rho, "height");

  // sparse
  Overrides o_sp;
  double sp_side = 1.0;
  std::optional<double> sp_gamma;
  double sp_gamma_start = 1.0;
  auto* sp = app.add_subcommand("sparse", "stopping-time sparse family in Q0 = [0, side)^n");
  add_common(sp, o_sp);
  sp->add_option("--side", sp_side, "side of the root cube");
  sp->add_option("--gamma", sp_gamma, "fixed gamma");
  sp->add_option("--gamma-start", sp_gamma_start, "first gamma of the doubling search");

  // verify
  Overrides o_v;
  std::string v_what;
  std::string v_family;
  auto* ver = app.add_subcommand("verify", "verification campaigns");
  add_common(ver, o_v);
  ver->add_option("what", v_what, "weak | aperture | domination | weighted | marcinkiewicz | sparse")
      ->required()
      ->check(CLI::IsMember({"weak", "aperture", "domination", "weighted", "marcinkiewicz", "sparse"}));
  ver->add_option("--family", v_family, "SparseFamily JSON for `verify sparse`");

  // bench
  Overrides o_b;
  int b_repeat = 3;
  auto* bench = app.add_subcommand("bench", "fast path against direct summation");
  add_common(bench, o_b);
  bench->add_option("--repeat", b_repeat, "repetitions");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*dini) {
      Config c = resolve(o_dini);
      const auto r = dini_constant(parse_modulus(c.modulus));
      std::printf("%s\n", decimal(r.value).c_str());
      if (r.divergent) {
        std::fprintf(stderr, "%s: Dini integral diverges\n", c.modulus.c_str());
        return 1;
      }
      return 0;
    }

    if (*kc) {
      Config c = resolve(o_kc);
      const KernelSpec k = parse_kernel(c.kernel, c.n, c.modulus);
      SamplePlan plan;
      plan.seed = c.seed;
      plan.random_samples = kc_samples;
      const auto rep = kernel_condition_check(k, parse_mode(kc_mode), plan, kc_gamma);
      Output out(c, "kernel-check " + kc_mode);
      json j;
      j["max_ratio"] = finite_or_null(rep.max_ratio);
      j["extended_max_ratio"] = finite_or_null(rep.extended_max_ratio);
      j["growth"] = finite_or_null(rep.growth);
      j["samples_checked"] = rep.samples_checked;
      j["infinite_ratios"] = rep.infinite_ratios;
      j["flagged"] = rep.flagged;
      out.summary["condition"] = j;
      out.summary["pass"] = !rep.flagged;
      write_json(out.summary, c.out_dir + "/summary.json");
      std::printf("max_ratio=%.6g extended=%.6g growth=%.4g flagged=%d\n", rep.max_ratio,
                  rep.extended_max_ratio, rep.growth, rep.flagged);
      return rep.flagged ? 1 : 0;
    }

    if (*ev) {
      Config c = resolve(o_eval);
      const KernelSpec k = parse_kernel(c.kernel, c.n, c.modulus);
      EvalOptions opt;
      opt.oracle = o_eval.oracle;
      const bool bil = eval_arity == "bilinear";
      if (bil != k.is_bilinear()) throw ConfigError("kernel arity does not match '" + eval_arity + "'");
      const GridFunction f = load_input(c.function, c);
      const GridFunction f2 = bil ? load_input(o_eval.function2.value_or(c.function), c) : GridFunction();
      GridFunction result;
      Timer tm;
      if (eval_op == "s") {
        const ConeGrid cone = c.cone.build(c.alpha, c.n, c.h, c.R);
        result = bil ? square_function(k, f, f2, cone, opt) : square_function(k, f, cone, opt);
      } else {
        const ConeGrid half = c.cone.build(halfspace_alpha, c.n, c.h, c.R);
        result = bil ? g_star(k, f, f2, c.lambda, half, opt) : g_star(k, f, c.lambda, half, opt);
      }
      Output out(c, "eval " + eval_op + " " + eval_arity);
      out.timing["eval_seconds"] = tm.seconds();
      write_grid_csv(result, c.out_dir + "/result.csv");
      out.summary["result"] = "result.csv";
      out.summary["l2"] = result.l2();
      out.summary["linf"] = result.linf();
      std::printf("wrote %s/result.csv (l2=%.6g linf=%.6g)\n", c.out_dir.c_str(), result.l2(), result.linf());
      return out.finish();
    }

    if (*cz) {
      Config c = resolve(o_cz);
      const GridFunction f = load_input(c.function, c);
      const auto d = cz_decompose(f, cz_rho);
      const auto v = check_cz(f, d);
      Output out(c, "cz");
      write_cz(d, f, c.out_dir + "/cz");
      FitReport r;
      r.name = "cz";
      r.statistic = Statistic::max;
      r.lo = r.hi = 0.0;
      r.params = {cz_rho};
      r.param_name = "rho";
      r.ratios = {static_cast<double>(v.total())};
      r.extra["bad_parts"] = static_cast<double>(d.bad.size());
      out.add(3, r.finalize());
      return out.finish();
    }

    if (*sp) {
      Config c = resolve(o_sp);
      const KernelSpec k = parse_kernel(c.kernel, c.n, c.modulus);
      const GridFunction f = load_input(c.function, c);
      Cube Q0;
      Q0.n = c.n;
      Q0.base = sp_side;
      SparseOptions so;
      so.gamma = sp_gamma;
      so.gamma_start = sp_gamma_start;
      so.eval.oracle = o_sp.oracle;
      const ConeGrid cone = c.cone.build(c.alpha, c.n, c.h, c.R);
      const auto run = sparse_domination_run(k, f, Q0, cone, so);
      Output out(c, "sparse");
      write_json(to_json(run.family), c.out_dir + "/family.json");
      write_grid_csv(sparse_rhs_eval(run.family, f, 3), c.out_dir + "/sparse_rhs.csv");
      out.summary["family"] = "family.json";
      out.summary["cubes"] = run.family.cubes.size();
      out.summary["gamma"] = run.family.gamma;
      out.summary["fitted_c"] = finite_or_null(run.fitted_c);
      FitReport r;
      r.name = "sparseness";
      r.statistic = Statistic::max;
      r.lo = 0.0;
      r.hi = 1.0 - run.family.eta;
      r.params = {0.0};
      r.ratios = {run.check.worst_ratio};
      out.add(4, r.finalize());
      return out.finish();
    }

    if (*ver) {
      Config c = resolve(o_v);
      EvalOptions opt;
      opt.oracle = o_v.oracle;
      Output out(c, "verify " + v_what);
      if (v_what == "sparse") {
        if (v_family.empty()) throw ConfigError("--family: required for `verify sparse`");
        const auto fam = sparse_family_from_json(read_json_file(v_family), v_family);
        const auto chk = verify_sparse(fam, 0.5);
        FitReport r;
        r.name = "sparseness";
        r.statistic = Statistic::max;
        r.lo = 0.0;
        r.hi = 0.5;
        r.params = {0.0};
        r.ratios = {chk.worst_ratio};
        r.extra["cubes"] = static_cast<double>(chk.cubes);
        out.add(4, r.finalize());
        return out.finish();
      }
      if (v_what == "marcinkiewicz") {
        MarcinkiewiczSetup s;
        s.seed = c.seed;
        out.add(10, campaign_marcinkiewicz(parse_modulus(c.modulus), c.n, s));
        return out.finish();
      }
      const KernelSpec k = parse_kernel(c.kernel, c.n, c.modulus);
      if (v_what == "aperture") {
        ApertureSetup s{c.R, c.h, c.function, c.cone};
        out.add(2, campaign_aperture_l2(k, {1.0, 2.0, 4.0}, s, 0.05, opt));
      } else if (v_what == "weak") {
        if (k.is_bilinear()) {
          BilinearSetup s;
          s.R = c.R;
          s.h = c.h;
          s.cone = c.cone;
          out.add(9, campaign_bilinear_weak(k, s, opt));
        } else {
          ApertureSetup s{c.R, c.h, c.function, c.cone};
          out.add(5, campaign_aperture_weak(k, {1.0, 2.0, 4.0, 8.0}, s, 1.5, opt));
        }
      } else if (v_what == "domination") {
        SparseSetup s;
        s.R = c.R;
        s.h = c.h;
        s.alpha = c.alpha;
        s.cone = c.cone;
        s.seed = c.seed;
        out.add(4, campaign_sparse(k, s, opt));
      } else if (v_what == "weighted") {
        WeightedSetup s;
        s.R = c.R;
        s.h = c.h;
        s.alpha = c.alpha;
        s.cone = c.cone;
        s.seed = c.seed;
        out.add(0, campaign_weighted(k, s, opt));
      }
      return out.finish();
    }

    if (*bench) {
      Config c = resolve(o_b);
      const KernelSpec k = parse_kernel(c.kernel, c.n, c.modulus);
      const GridFunction f = load_input(c.function, c);
      const ConeGrid cone = c.cone.build(c.alpha, c.n, c.h, c.R);
      EvalOptions fast, direct;
      direct.oracle = true;
      double tf = 1e300, td = 1e300;
      GridFunction sf, sd;
      for (int i = 0; i < b_repeat; ++i) {
        Timer t1;
        sf = square_function(k, f, cone, fast);
        tf = std::min(tf, t1.seconds());
        Timer t2;
        sd = square_function(k, f, cone, direct);
        td = std::min(td, t2.seconds());
      }
      double err = 0.0;
      for (std::size_t i = 0; i < sf.size(); ++i) err = std::max(err, std::abs(sf.values()[i] - sd.values()[i]));
      const double rel = sd.linf() > 0.0 ? err / sd.linf() : err;
      Output out(c, "bench");
      out.timing["fast_seconds"] = tf;
      out.timing["direct_seconds"] = td;
      out.timing["threads"] = thread_count();
      FitReport r;
      r.name = "fast_vs_direct";
      r.statistic = Statistic::max;
      r.lo = 0.0;
      r.hi = 1e-8;
      r.params = {0.0};
      r.ratios = {rel};
      out.add(12, r.finalize());
      std::printf("fast %.4fs direct %.4fs rel_err %.3g threads %u\n", tf, td, rel, thread_count());
      return out.finish();
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
