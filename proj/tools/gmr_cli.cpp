// Batch front-end for the gmr library. Every subcommand reads one JSON object
// (--config), runs the library through its C interface and writes CSV / JSON
// artifacts into --out. Exit codes: 0 success, 1 bad input, 2 numerical failure.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gmr/gmr.h"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// Raised for anything wrong with the user's input; maps to exit code 1.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A failing C call, carrying its status code.
struct LibraryError : std::runtime_error {
  LibraryError(gmr_status s, const std::string& msg) : std::runtime_error(msg), status(s) {}
  gmr_status status;
};

void check(gmr_status s) {
  if (s != GMR_OK) throw LibraryError(s, gmr_last_error());
}

struct KernelDeleter {
  void operator()(gmr_kernel* k) const { gmr_kernel_destroy(k); }
};
struct PathDeleter {
  void operator()(gmr_path* p) const { gmr_path_destroy(p); }
};
struct EnsembleDeleter {
  void operator()(gmr_ensemble* e) const { gmr_ensemble_destroy(e); }
};
struct ObservationsDeleter {
  void operator()(gmr_observations* o) const { gmr_observations_destroy(o); }
};
using KernelPtr = std::unique_ptr<gmr_kernel, KernelDeleter>;
using PathPtr = std::unique_ptr<gmr_path, PathDeleter>;
using EnsemblePtr = std::unique_ptr<gmr_ensemble, EnsembleDeleter>;
using ObservationsPtr = std::unique_ptr<gmr_observations, ObservationsDeleter>;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Strict view of one JSON object. Accessors record which keys were read so
// that finish() can reject anything the command does not understand.
class Block {
 public:
  Block(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw InputError("config key '" + label() + "' must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  double number(const std::string& key) {
    const json& v = get(key);
    if (!v.is_number()) throw InputError("config key '" + name(key) + "' must be a number");
    return v.get<double>();
  }
  double number(const std::string& key, double fallback) {
    return has(key) ? number(key) : (seen_.insert(key), fallback);
  }

  std::uint64_t u64(const std::string& key) {
    const json& v = get(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      throw InputError("config key '" + name(key) + "' must be a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }
  std::uint64_t u64(const std::string& key, std::uint64_t fallback) {
    return has(key) ? u64(key) : (seen_.insert(key), fallback);
  }

  bool flag(const std::string& key, bool fallback) {
    if (!has(key)) return seen_.insert(key), fallback;
    const json& v = get(key);
    if (!v.is_boolean()) throw InputError("config key '" + name(key) + "' must be true or false");
    return v.get<bool>();
  }

  std::string text(const std::string& key) {
    const json& v = get(key);
    if (!v.is_string()) throw InputError("config key '" + name(key) + "' must be a string");
    return v.get<std::string>();
  }
  std::string text(const std::string& key, const std::string& fallback) {
    return has(key) ? text(key) : (seen_.insert(key), fallback);
  }

  std::vector<double> numbers(const std::string& key) {
    const json& v = get(key);
    if (!v.is_array() || v.empty()) {
      throw InputError("config key '" + name(key) + "' must be a non-empty array of numbers");
    }
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) throw InputError("config key '" + name(key) + "' must hold numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  std::vector<std::size_t> counts(const std::string& key) {
    const json& v = get(key);
    if (!v.is_array() || v.empty()) {
      throw InputError("config key '" + name(key) + "' must be a non-empty array of integers");
    }
    std::vector<std::size_t> out;
    for (const auto& e : v) {
      if (!e.is_number_unsigned()) {
        throw InputError("config key '" + name(key) + "' must hold non-negative integers");
      }
      out.push_back(e.get<std::size_t>());
    }
    return out;
  }

  const json& raw(const std::string& key) { return get(key); }

  Block child(const std::string& key) { return Block(get(key), name(key)); }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw InputError("unknown config key '" + name(key) + "'");
    }
  }

  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string label() const { return path_.empty() ? "<root>" : path_; }

  const json& get(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw InputError("missing required config key '" + name(key) + "'");
    return j_.at(key);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

struct Run {
  json config;
  std::uint64_t seed = 0;
  fs::path out_dir = ".";
};

gmr_model_params read_model(Block b) {
  gmr_model_params p{};
  p.x0 = b.number("x0");
  p.a = b.number("a");
  p.b = b.number("b");
  p.sigma = b.number("sigma");
  p.beta = b.number("beta");
  b.finish();
  return p;
}

gmr_pk_params read_pk(Block b, bool dynamics) {
  gmr_pk_params p{};
  p.dose = b.number("dose", 1.0);
  p.volume = b.number("volume", 1.0);
  if (dynamics) {
    p.absorption = b.number("absorption", 0.0);
    p.elimination = b.number("elimination");
    p.sigma = b.number("sigma");
    p.beta = b.number("beta");
  }
  b.finish();
  return p;
}

KernelPtr read_kernel(Block& root) {
  gmr_kernel* k = nullptr;
  if (!root.has("kernel")) {
    root.raw("kernel");  // reports the missing key
  }
  Block b = root.child("kernel");
  const std::string type = b.text("type");
  if (type == "fbm") {
    check(gmr_kernel_create_fbm(b.number("hurst"), &k));
  } else if (type == "brownian") {
    check(gmr_kernel_create_brownian(&k));
  } else if (type == "matrix") {
    const std::vector<double> times = b.numbers("times");
    const json& rows = b.raw("covariance");
    if (!rows.is_array() || rows.size() != times.size()) {
      throw InputError("config key '" + b.name("covariance") +
                       "' must be a square matrix matching 'times'");
    }
    std::vector<double> flat;
    for (const auto& row : rows) {
      if (!row.is_array() || row.size() != times.size()) {
        throw InputError("config key '" + b.name("covariance") +
                         "' must be a square matrix matching 'times'");
      }
      for (const auto& v : row) {
        if (!v.is_number()) throw InputError("config key '" + b.name("covariance") + "' must hold numbers");
        flat.push_back(v.get<double>());
      }
    }
    check(gmr_kernel_create_matrix(times.data(), times.size(), flat.data(), b.number("holder"), &k));
  } else {
    throw InputError("config key '" + b.name("type") + "' must be fbm, brownian or matrix");
  }
  b.finish();
  return KernelPtr(k);
}

void write_text(const fs::path& file, const std::string& body) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw InputError("cannot write " + file.string());
  out << body;
  if (!out) throw InputError("write failed: " + file.string());
}

void write_json(const fs::path& file, const json& j) { write_text(file, j.dump(2) + "\n"); }

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// ---- subcommands ---------------------------------------------------------

void cmd_simulate(Block& root, const Run& run) {
  const gmr_model_params model = read_model(root.child("model"));
  KernelPtr kernel = read_kernel(root);
  Block grid = root.child("grid");
  const double horizon = grid.number("horizon");
  const std::uint64_t steps = grid.u64("steps");
  grid.finish();
  root.finish();

  gmr_path* raw = nullptr;
  check(gmr_simulate(&model, kernel.get(), horizon, steps, run.seed, &raw));
  PathPtr path(raw);
  check(gmr_path_write_csv(path.get(), (run.out_dir / "simulate.csv").c_str()));
}

void cmd_converge(Block& root, const Run& run) {
  const gmr_model_params model = read_model(root.child("model"));
  KernelPtr kernel = read_kernel(root);
  Block grid = root.child("grid");
  const double horizon = grid.number("horizon");
  grid.finish();
  Block conv = root.child("converge");
  const std::vector<std::size_t> n_list = conv.counts("n_list");
  const std::size_t largest = n_list.empty() ? 0 : *std::max_element(n_list.begin(), n_list.end());
  const std::uint64_t ref_n = conv.u64("reference_n", 8 * largest);
  conv.finish();
  root.finish();

  std::vector<double> errors(n_list.size());
  gmr_rate_summary summary{};
  check(gmr_convergence_study(&model, kernel.get(), horizon, n_list.data(), n_list.size(), ref_n,
                              run.seed, errors.data(), &summary));

  std::string csv = "n,error\n";
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    csv += std::to_string(n_list[i]) + "," + fmt(errors[i]) + "\n";
  }
  write_text(run.out_dir / "converge.csv", csv);

  json j;
  j["n_list"] = n_list;
  j["errors"] = errors;
  j["fitted_slope"] = finite_or_null(summary.fitted_slope);
  j["theoretical_rate"] = summary.theoretical_rate;
  j["reference"] = model.sigma == 0.0 ? "closed_form_ode" : "reference_scheme";
  write_json(run.out_dir / "converge.json", j);
}

void cmd_ensemble(Block& root, const Run& run) {
  const gmr_model_params model = read_model(root.child("model"));
  KernelPtr kernel = read_kernel(root);
  Block grid = root.child("grid");
  const double horizon = grid.number("horizon");
  const std::uint64_t steps = grid.u64("steps");
  grid.finish();
  Block eb = root.child("ensemble");
  const std::uint64_t paths = eb.u64("paths");
  std::vector<double> moments = eb.has("moments") ? eb.numbers("moments")
                                                  : std::vector<double>{1.0, 2.0, 4.0, 8.0};
  const bool write_paths = eb.flag("write_paths", false);
  eb.finish();
  root.finish();

  gmr_ensemble_spec spec{};
  spec.params = model;
  spec.kernel = kernel.get();
  spec.paths = paths;
  spec.steps = steps;
  spec.horizon = horizon;
  spec.seed = run.seed;
  spec.moments = moments.data();
  spec.moment_count = moments.size();
  spec.keep_paths = write_paths ? 1 : 0;
  gmr_ensemble* raw = nullptr;
  check(gmr_ensemble_run(&spec, &raw));
  EnsemblePtr ens(raw);

  gmr_ensemble_summary s{};
  check(gmr_ensemble_summary_get(ens.get(), &s));
  std::vector<double> lp(s.moment_count);
  check(gmr_ensemble_lp(ens.get(), nullptr, lp.data()));
  std::vector<double> hits(s.hit_count);
  if (!hits.empty()) check(gmr_ensemble_hit_times(ens.get(), hits.data(), hits.size()));

  json j;
  j["paths"] = s.paths;
  j["steps"] = steps;
  j["horizon"] = horizon;
  json lpj = json::array();
  for (std::size_t i = 0; i < moments.size(); ++i) {
    lpj.push_back({{"p", moments[i]}, {"estimate", lp[i]}});
  }
  j["lp_sup_norms"] = lpj;
  j["hit_fraction"] = s.hit_fraction;
  j["hit_times"] = hits;
  j["min_y_node"] = finite_or_null(s.min_y_node);
  j["nonpositive_y_nodes"] = s.nonpositive_y_nodes;
  j["sup_bound_violations"] = s.bound_violations;
  write_json(run.out_dir / "ensemble.json", j);
  if (write_paths) check(gmr_ensemble_write_csv(ens.get(), (run.out_dir / "ensemble_paths.csv").c_str()));
}

void cmd_hit_times(Block& root, const Run& run) {
  const gmr_model_params model = read_model(root.child("model"));
  KernelPtr kernel = read_kernel(root);
  Block hb = root.child("hit");
  const std::uint64_t paths = hb.u64("paths");
  const std::uint64_t steps = hb.u64("steps");
  const std::vector<double> horizons = hb.numbers("horizons");
  hb.finish();
  root.finish();

  const std::size_t n = horizons.size();
  std::vector<double> frac(n), se(n), lo(n), hi(n);
  check(gmr_hitting_fractions(&model, kernel.get(), paths, horizons.data(), n, steps, run.seed,
                              frac.data(), se.data(), lo.data(), hi.data()));
  json j;
  j["paths"] = paths;
  j["horizons"] = horizons;
  j["fractions"] = frac;
  j["standard_errors"] = se;
  j["ci95_low"] = lo;
  j["ci95_high"] = hi;
  write_json(run.out_dir / "hit_times.json", j);
}

void cmd_survival(Block& root, const Run& run) {
  const gmr_model_params model = read_model(root.child("model"));
  KernelPtr kernel = read_kernel(root);
  Block grid = root.child("grid");
  const double horizon = grid.number("horizon");
  const std::uint64_t steps = grid.u64("steps");
  grid.finish();
  Block sb = root.child("survival");
  const std::uint64_t paths = sb.u64("paths");
  // y lives on the transformed scale; by default it starts at x0^(1-beta).
  const double y0 = sb.number("y0", std::pow(model.x0, 1.0 - model.beta));
  sb.finish();
  root.finish();

  gmr_survival_report r{};
  check(gmr_survival_check(y0, &model, kernel.get(), horizon, steps, paths, run.seed, &r));
  json j;
  j["y0"] = y0;
  j["paths"] = paths;
  j["sigma_bar2"] = r.sigma_bar2;
  j["applicable"] = r.applicable != 0;
  j["empirical_survival"] = r.empirical;
  j["standard_error"] = r.standard_error;
  j["bound"] = r.bound;
  j["pass"] = r.pass != 0;
  write_json(run.out_dir / "survival.json", j);
}

void cmd_pk_simulate(Block& root, const Run& run) {
  const gmr_pk_params pk = read_pk(root.child("pk"), true);
  KernelPtr kernel = read_kernel(root);
  Block grid = root.child("grid");
  const double horizon = grid.number("horizon");
  const std::uint64_t steps = grid.u64("steps");
  grid.finish();
  root.finish();

  gmr_path* raw = nullptr;
  check(gmr_pk_simulate(&pk, kernel.get(), horizon, steps, run.seed, 0, &raw));
  PathPtr path(raw);
  const std::size_t len = gmr_path_length(path.get());
  std::vector<double> t(len), c(len);
  check(gmr_path_copy(path.get(), t.data(), c.data(), len));

  // After the first zero the concentration stays absorbed at 0.
  std::string csv = "t,stochastic,deterministic\n";
  for (std::uint64_t k = 0; k <= steps; ++k) {
    const double tk = k < len ? t[k] : horizon * static_cast<double>(k) / static_cast<double>(steps);
    double det = 0.0;
    check(gmr_pk_deterministic(&pk, tk, &det));
    csv += fmt(tk) + "," + fmt(k < len ? c[k] : 0.0) + "," + fmt(det) + "\n";
  }
  write_text(run.out_dir / "pk_simulate.csv", csv);
}

void cmd_pk_fit(Block& root, const Run& run, const fs::path& config_dir) {
  fs::path data = root.text("data");
  if (data.is_relative()) data = config_dir / data;
  gmr_pk_params pk = read_pk(root.child("pk"), false);
  KernelPtr kernel = read_kernel(root);
  Block fb = root.child("fit");
  Block init = fb.child("init");
  pk.elimination = init.number("elimination");
  pk.sigma = init.number("sigma");
  pk.beta = init.number("beta");
  init.finish();
  const std::uint64_t quad = fb.u64("quad_steps", 200);
  gmr_fit_bounds bounds{50.0, 20.0, 0.05, 0.95};
  if (fb.has("bounds")) {
    Block bb = fb.child("bounds");
    bounds.elimination_max = bb.number("elimination_max", bounds.elimination_max);
    bounds.sigma_max = bb.number("sigma_max", bounds.sigma_max);
    bounds.beta_min = bb.number("beta_min", bounds.beta_min);
    bounds.beta_max = bb.number("beta_max", bounds.beta_max);
    bb.finish();
  }
  fb.finish();
  root.finish();

  gmr_observations* raw = nullptr;
  check(gmr_observations_read_csv(data.c_str(), &raw));
  ObservationsPtr obs(raw);
  gmr_theta_estimate est{};
  check(gmr_pk_fit(&pk, obs.get(), kernel.get(), quad, &bounds, &est));

  json j;
  j["data"] = data.filename().string();
  j["observations"] = gmr_observations_size(obs.get());
  j["elimination"] = est.elimination;
  j["sigma"] = est.sigma;
  j["beta"] = est.beta;
  j["log_likelihood"] = est.log_likelihood;
  j["converged"] = est.converged != 0;
  j["iterations"] = est.iterations;
  write_json(run.out_dir / "pk_fit.json", j);
}

struct Observable {
  double (*F)(double, void*);
  double (*Fdot)(double, void*);
};

Observable observable(const std::string& name, const std::string& key) {
  if (name == "identity") {
    return {[](double r, void*) { return r; }, [](double, void*) { return 1.0; }};
  }
  if (name == "square") {
    return {[](double r, void*) { return r * r; }, [](double r, void*) { return 2.0 * r; }};
  }
  if (name == "cube") {
    return {[](double r, void*) { return r * r * r; }, [](double r, void*) { return 3.0 * r * r; }};
  }
  if (name == "exp") {
    return {[](double r, void*) { return std::exp(r); }, [](double r, void*) { return std::exp(r); }};
  }
  throw InputError("config key '" + key + "' must be identity, square, cube or exp");
}

json report_json(const gmr_sensitivity_report& r) {
  json j;
  j["estimate"] = r.estimate;
  j["std_error"] = r.std_error;
  j["paths"] = r.paths;
  j["capped_fraction"] = r.capped_fraction;
  return j;
}

void cmd_pk_sensitivity(Block& root, const Run& run) {
  const gmr_pk_params pk = read_pk(root.child("pk"), true);
  KernelPtr kernel = read_kernel(root);
  Block grid = root.child("grid");
  const double horizon = grid.number("horizon");
  const std::uint64_t steps = grid.u64("steps");
  grid.finish();
  Block sb = root.child("sensitivity");
  const double x = sb.number("x", pk.dose / pk.volume);
  const std::string fname = sb.text("function");
  const Observable F = observable(fname, sb.name("function"));
  const std::uint64_t paths = sb.u64("paths");
  const std::string method = sb.text("method", "both");
  if (method != "both" && method != "plsin" && method != "fd") {
    throw InputError("config key '" + sb.name("method") + "' must be both, plsin or fd");
  }
  const double h = sb.number("h", 0.01 * x);
  const bool crn = sb.flag("common_random_numbers", true);
  Block tb = sb.child("tau");
  const std::string kind = tb.text("kind");
  int tau_kind = GMR_TAU_FIXED;
  if (kind == "hit_capped") {
    tau_kind = GMR_TAU_HIT_CAPPED;
  } else if (kind != "fixed") {
    throw InputError("config key '" + tb.name("kind") + "' must be fixed or hit_capped");
  }
  const double tau_time = tb.number("time", 0.5 * horizon);
  tb.finish();
  sb.finish();
  root.finish();

  gmr_sensitivity_spec spec{};
  spec.F = F.F;
  spec.Fdot = F.Fdot;
  spec.tau_kind = tau_kind;
  spec.tau_time = tau_time;
  spec.paths = paths;
  spec.seed = run.seed;
  spec.horizon = horizon;
  spec.steps = steps;
  spec.common_random_numbers = crn ? 1 : 0;

  json j;
  j["x"] = x;
  j["function"] = fname;
  j["tau"] = {{"kind", kind}, {"time", tau_time}};
  if (method != "fd") {
    gmr_sensitivity_report r{};
    check(gmr_pk_sensitivity_plsin(&pk, x, &spec, kernel.get(), &r));
    j["plsin"] = report_json(r);
  }
  if (method != "plsin") {
    gmr_sensitivity_report r{};
    check(gmr_pk_sensitivity_fd(&pk, x, h, &spec, kernel.get(), &r));
    j["finite_difference"] = report_json(r);
    j["finite_difference"]["h"] = h;
    j["finite_difference"]["common_random_numbers"] = crn;
  }
  write_json(run.out_dir / "pk_sensitivity.json", j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation and estimation for dX = (a - bX)dt + sigma X^beta dW"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_path;
  std::uint64_t seed_flag = 0;
  std::string out_flag;
  std::size_t threads = 0;
  auto* seed_opt = app.add_option("--seed", seed_flag, "RNG seed (overrides the config)");
  auto* out_opt = app.add_option("--out", out_flag, "Output directory (overrides the config)");
  app.add_option("--threads", threads, "Worker threads (default: GMR_THREADS or 1)");

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"simulate", "One solution path as CSV"},
      {"converge", "Sup-norm convergence study (CSV + JSON)"},
      {"ensemble", "Monte Carlo ensemble statistics (JSON, optional path CSV)"},
      {"hit-times", "Zero-hitting fractions for a = 0 (JSON)"},
      {"survival", "Gaussian survival bound check (JSON)"},
      {"pk-simulate", "Concentration path with deterministic overlay (CSV)"},
      {"pk-fit", "Maximum-likelihood fit of (Ke, sigma, beta) (JSON)"},
      {"pk-sensitivity", "Sensitivity of E F(C_tau) to the initial concentration (JSON)"},
  };
  for (const auto& [name, help] : commands) {
    app.add_subcommand(name, help)->add_option("--config", config_path, "JSON config")->required();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    gmr_set_threads(threads);

    json config;
    {
      std::ifstream in(config_path);
      if (!in) throw InputError("cannot read config '" + config_path + "'");
      try {
        config = json::parse(in);
      } catch (const json::parse_error& e) {
        throw InputError("config '" + config_path + "' is not valid JSON: " + e.what());
      }
    }
    Block root(config, "");
    Run run;
    // Read both keys even when a flag wins so they still count as known.
    const std::uint64_t config_seed = root.u64("seed", 0);
    const std::string config_out = root.text("out", ".");
    run.seed = seed_opt->count() ? seed_flag : config_seed;
    run.out_dir = out_opt->count() ? fs::path(out_flag) : fs::path(config_out);
    std::error_code ec;
    fs::create_directories(run.out_dir, ec);
    if (ec) throw InputError("cannot create output directory " + run.out_dir.string());

    const fs::path config_dir = fs::absolute(config_path).parent_path();
    if (command == "simulate") cmd_simulate(root, run);
    else if (command == "converge") cmd_converge(root, run);
    else if (command == "ensemble") cmd_ensemble(root, run);
    else if (command == "hit-times") cmd_hit_times(root, run);
    else if (command == "survival") cmd_survival(root, run);
    else if (command == "pk-simulate") cmd_pk_simulate(root, run);
    else if (command == "pk-fit") cmd_pk_fit(root, run, config_dir);
    else cmd_pk_sensitivity(root, run);
    return 0;
  } catch (const InputError& e) {
    std::cerr << command << ": " << e.what() << "\n";
    return 1;
  } catch (const LibraryError& e) {
    std::cerr << command << ": " << e.what() << "\n";
    return e.status == GMR_ERR_INVALID_ARGUMENT || e.status == GMR_ERR_IO ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << command << ": " << e.what() << "\n";
    return 2;
  }
}
