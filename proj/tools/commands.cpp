#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include "cli.hpp"
#include "ricci_lab/cohomo_flow.hpp"
#include "ricci_lab/deturck.hpp"
#include "ricci_lab/errors.hpp"
#include "ricci_lab/io.hpp"
#include "ricci_lab/simplex_maps.hpp"
#include "ricci_lab/soliton_ode.hpp"
#include "ricci_lab/warped_geometry.hpp"

#ifndef RICCI_LAB_VERSION
#define RICCI_LAB_VERSION "0.0.0"
#endif

namespace ricci_lab::cli {

namespace {

using nlohmann::json;
using std::numbers::pi;

struct Context {
  const RunConfig& cfg;
  std::ostream& out;
  std::vector<std::string> artifacts;

  void wrote(const std::string& path) { artifacts.push_back(path); }
};

geometry::SuspensionSpec suspension_spec(const RunConfig& cfg) {
  geometry::SuspensionSpec spec{cfg.integer("n"), cfg.list("beta")};
  spec.validate();
  return spec;
}

// ---- curvature / suspend ----

json cmd_curvature(Context& c) {
  const auto& cfg = c.cfg;
  const auto spec = suspension_spec(cfg);
  const auto chain = geometry::build_suspension(spec);
  std::vector<std::vector<double>> pts;
  if (cfg.has("point")) {
    pts.push_back(cfg.list("point"));
  } else {
    pts = geometry::interior_sample_grid(spec.n, cfg.integer("per_axis"), cfg.num("margin"));
  }
  const int d = chain.dimension();
  std::vector<std::vector<double>> coords(d);
  std::vector<double> kmin, kmax, rmin, scal;
  double exact = std::numeric_limits<double>::infinity();
  for (const auto& p : pts) {
    const auto rep = geometry::suspension_curvature(chain, p);
    for (int i = 0; i < d; ++i) coords[i].push_back(p[i]);
    kmin.push_back(rep.sectional_min);
    kmax.push_back(rep.sectional_max);
    rmin.push_back(rep.rm_operator_min_eig);
    scal.push_back(rep.scalar);
    exact = std::min(exact, rep.rm_operator_min_eig);
  }
  io::Table t;
  for (int i = 0; i < d; ++i) t.add("x" + std::to_string(i + 1), coords[i]);
  t.add("sectional_min", kmin);
  t.add("sectional_max", kmax);
  t.add("rm_min", rmin);
  t.add("scalar", scal);
  io::write_csv(t, cfg.str("out"));
  c.wrote(cfg.str("out"));
  const double bound = geometry::min_rm_over_suspension(spec, pts);
  json r = {{"spec", spec}, {"samples", pts.size()}, {"rm_min", exact}, {"rm_min_layer_bound", bound}};
  if (pts.size() == 1) r["report"] = geometry::suspension_curvature(chain, pts.front());
  if (exact < bound - 1e-8) throw InvariantViolation("curvature operator below the layer bound");
  return r;
}

json cmd_suspend(Context& c) {
  const auto spec = suspension_spec(c.cfg);
  const auto chain = geometry::build_suspension(spec);
  json layers = json::array(), strata = json::array();
  for (const auto& l : chain.layers()) layers.push_back({{"beta", l.beta}, {"fiber_dim", l.fiber_dim}});
  for (const auto& s : chain.singular_strata()) strata.push_back({{"index", s.index}, {"cause", s.cause}});
  json j = {{"spec", spec},
            {"beta", chain.beta()},
            {"dimension", chain.dimension()},
            {"circle_length", chain.circle_length()},
            {"layers", layers},
            {"singular_strata", strata}};
  io::write_json(j, c.cfg.str("out"));
  c.wrote(c.cfg.str("out"));
  return j;
}

// ---- glue / flow ----

flow::SmoothingSetup smoothing_setup(const RunConfig& cfg) {
  flow::SmoothingSetup s;
  s.beta1 = cfg.num("beta1");
  s.n = cfg.integer("n");
  s.s = cfg.num("s");
  if (const int res = cfg.integer("resolution"); res > 0) s.resolution = res;
  if (const double st = cfg.num("stretch"); st >= 0.0) s.stretch = st;
  return s;
}

double min_of(const std::vector<double>& v) { return *std::min_element(v.begin(), v.end()); }

json cmd_glue(Context& c) {
  flow::GlueDiagnostics diag;
  const auto run = flow::glued_initial_data(smoothing_setup(c.cfg), &diag);
  io::Table t;
  t.add("x", run.glued.x);
  t.add("rho", run.glued.rho);
  t.add("phi", run.glued.phi);
  t.add("rho_singular", run.singular.rho);
  t.add("phi_singular", run.singular.phi);
  t.add("cutoff", diag.cutoff);
  t.add("distance", diag.distance);
  io::write_csv(t, c.cfg.str("out"));
  c.wrote(c.cfg.str("out"));
  const auto curv = flow::grid_curvature(run.glued);
  flow::GlueParams gp;
  gp.s = c.cfg.num("s");
  return {{"closure_slope", {flow::closure_slope(run.glued, 0), flow::closure_slope(run.glued, 1)}},
          {"axis_length", flow::axis_length(run.glued)},
          {"band", {gp.band_inner(), gp.band_outer()}},
          {"rm_min", min_of(curv.rm_min)},
          {"expander", soliton::profile_metadata(run.expander)}};
}

flow::Scheme scheme_from(const std::string& s) {
  if (s == "rosenbrock") return flow::Scheme::Rosenbrock;
  if (s == "explicit") return flow::Scheme::Explicit;
  throw ConfigError("unknown scheme '" + s + "'");
}

json cmd_flow(Context& c) {
  const auto& cfg = c.cfg;
  flow::FlowOptions o;
  o.T = cfg.num("T");
  o.t_min = cfg.num("t_min");
  o.t_ratio = cfg.num("t_ratio");
  o.rtol = cfg.num("rtol");
  o.atol = cfg.num("atol");
  o.scheme = scheme_from(cfg.str("scheme"));
  o.validate();
  const std::string init = cfg.str("init");
  const int n = cfg.integer("n");
  flow::FlowTrajectory tr;
  json r;
  if (init == "round") {
    const double r0 = cfg.num("radius");
    const int res = cfg.integer("resolution");
    const double st = cfg.num("stretch");
    tr = flow::evolve_ricci_flow(flow::round_sphere_grid(r0, n, res > 0 ? res : 256, st >= 0.0 ? st : 0.0), o);
    double worst = 0.0;
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
      const double exact = r0 * r0 - 2.0 * (n - 2) * tr.times[k];
      const double v = flow::value_at(tr.states[k], tr.states[k].phi, -1, pi / 2);
      worst = std::max(worst, std::abs(v * v - exact) / exact);
    }
    r["homothetic_rel_error"] = worst;
  } else if (init == "glued") {
    tr = flow::smoothing_run(smoothing_setup(cfg), o).trajectory;
  } else {
    throw ConfigError("unknown initial data '" + init + "' (round or glued)");
  }
  flow::write_trajectory_csv(tr, cfg.str("out"));
  c.wrote(cfg.str("out"));
  r["trajectory"] = tr.metadata();
  r["rm_min"] = tr.rm_min.empty() ? json(nullptr) : json(min_of(tr.rm_min));
  return r;
}

// ---- soliton ----

json cmd_soliton(Context& c) {
  const auto& cfg = c.cfg;
  const std::string kind = cfg.str("kind");
  soliton::ShootOptions so;
  so.tolerance = cfg.num("tol");
  so.samples = cfg.integer("samples");
  double r_max = cfg.num("r_max");
  const int m = cfg.integer("dim");
  soliton::SolitonProfile p;
  soliton::ExpanderReport er;
  bool expander = false;
  if (kind == "cigar") {
    p = soliton::cigar_profile(r_max > 0 ? r_max : 20.0, so.samples);
  } else if (kind == "bryant") {
    p = soliton::bryant_shoot(m, r_max > 0 ? r_max : 20.0, so);
  } else if (kind == "product") {
    p = soliton::product_steady(cfg.integer("k"), m, r_max > 0 ? r_max : 20.0, so);
  } else if (kind == "expander") {
    p = soliton::expander_shoot(m, cfg.num("beta"), r_max > 0 ? r_max : 60.0, so, &er);
    expander = true;
  } else {
    throw ConfigError("unknown soliton kind '" + kind + "' (cigar, bryant, product, expander)");
  }
  soliton::write_profile_csv(p, cfg.str("out"));
  c.wrote(cfg.str("out"));
  json r = {{"metadata", soliton::profile_metadata(p)}, {"soliton_residual", soliton::soliton_residual(p)}};
  if (expander) {
    r["expander"] = {{"asymptotic_slope", er.asymptotic_slope},
                     {"slope_at_rmax", er.slope_at_rmax},
                     {"avr_estimate", er.avr_estimate},
                     {"positive_curvature", er.positive_curvature},
                     {"min_sectional", er.min_sectional},
                     {"max_sectional", er.max_sectional},
                     {"iterations", er.iterations}};
    return r;
  }
  r["hamilton_deviation"] = soliton::hamilton_identity_deviation(p);
  const auto ev = soliton::tip_ricci_eigenvalues(p);
  r["tip_eigenvalues"] = ev.lambdas;
  r["trace"] = ev.trace();
  if (std::abs(ev.trace() - 1.0) > 1e-6) throw InvariantViolation("tip eigenvalue trace is not 1");
  return r;
}

// ---- deturck ----

std::string numbered(const std::string& path, std::size_t i) {
  std::filesystem::path p(path);
  const auto ext = p.extension().string();
  p.replace_extension();
  return p.string() + "_" + std::to_string(i) + ext;
}

json cmd_deturck(Context& c) {
  const auto& cfg = c.cfg;
  const int n = cfg.integer("n");
  auto bg = deturck::round_background(cfg.num("radius"), n, cfg.integer("resolution"));
  deturck::DeTurckOptions o;
  o.T = cfg.num("T");
  o.rtol = cfg.num("rtol");
  o.atol = cfg.num("atol");
  o.records = cfg.integer("records");
  o.max_steps = cfg.integer("max_steps");
  o.validate();
  const auto eps = cfg.list("eps");
  if (eps.empty()) throw ConfigError("eps needs at least one value");
  json runs = json::array();
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0, worst_pullback = 0.0;
  const bool pullback = cfg.flag("pullback");
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const auto p = deturck::deturck_evolve(*bg, deturck::conformal_perturbation(bg->nodes(), eps[i]), o);
    const std::string path = eps.size() == 1 ? cfg.str("out") : numbered(cfg.str("out"), i);
    deturck::write_history_csv(p, path);
    c.wrote(path);
    const double lam = deturck::amplification(p);
    lo = std::min(lo, lam);
    hi = std::max(hi, lam);
    json run = deturck::stability_summary(lam, eps[i], p.background_id);
    run["steps"] = p.steps;
    run["rejected"] = p.rejected;
    run["history"] = path;
    if (pullback) {
      const auto pb = deturck::deturck_ode_pullback(p);
      run["pullback_ricci_residual"] = pb.ricci_residual;
      run["deturck_residual"] = pb.deturck_residual;
      worst_pullback = std::max(worst_pullback, pb.ricci_residual);
    }
    runs.push_back(run);
  }
  json r = {{"runs", runs}, {"ratio_spread", hi / lo - 1.0}, {"rtol", o.rtol}};
  if (pullback && worst_pullback >= 10.0 * o.rtol) {
    throw InvariantViolation("pullback Ricci residual " + io::format_double(worst_pullback) +
                             " exceeds 10 x rtol");
  }
  return r;
}

// ---- simplex ----

simplex::PLMap test_map(const RunConfig& cfg) {
  const int dim = cfg.integer("dim");
  const int res = cfg.integer("map_resolution");
  const std::string kind = cfg.str("map");
  if (kind == "identity") return simplex::identity_map(dim, res);
  if (kind == "perm") return simplex::vertex_permutation_map(dim, res, cfg.int_list("perm"));
  if (kind == "random") return simplex::random_face_preserving_map(dim, res, cfg.num("jitter"), cfg.seed());
  throw ConfigError("unknown map '" + kind + "' (identity, perm, random)");
}

std::vector<int> face_of(const RunConfig& cfg) {
  if (cfg.has("face")) return cfg.int_list("face");
  std::vector<int> all(cfg.integer("dim") + 1);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return all;
}

std::vector<double> point_of(const RunConfig& cfg) {
  if (!cfg.has("point")) throw ConfigError("simplex " + cfg.str("op") + " needs --point");
  auto p = cfg.list("point");
  if (static_cast<int>(p.size()) != cfg.integer("n") - 1) throw ConfigError("point must have n-1 entries");
  return p;
}

json cmd_simplex(Context& c) {
  const auto& cfg = c.cfg;
  const std::string op = cfg.str("op");
  const int n = cfg.integer("n");
  json r;
  if (op == "r") {
    const auto q = simplex::contraction_r({point_of(cfg), simplex::Space::DeltaStar});
    if (!simplex::in_space(q.coords, simplex::Space::Delta)) throw InvariantViolation("r left Delta");
    r = {{"r", q.coords}};
  } else if (op == "project") {
    const auto p = point_of(cfg);
    r = {{"projection", simplex::project_to_sigma(p)}, {"distance", simplex::distance_to_sigma(p)}};
  } else if (op == "phi") {
    simplex::PhiOptions po{cfg.num("epsilon"), cfg.num("C"), cfg.integer("resolution")};
    const auto phi = simplex::build_phi(n, po);
    const auto p = point_of(cfg);
    const auto y = phi(p);
    if (!simplex::in_space(y, simplex::Space::DeltaStar, 1e-10)) throw InvariantViolation("phi left Delta*");
    r = {{"phi", y}, {"distance_before", simplex::distance_to_sigma(p)}, {"distance_after", simplex::distance_to_sigma(y)}};
  } else if (op == "vertex") {
    const auto space = simplex::space_from_string(cfg.str("space"));
    const int k = cfg.integer("k");
    if (space == simplex::Space::Omega) {
      r = {{"vertex", simplex::omega_vertex(n, k).coords}, {"space", "Omega"}};
    } else {
      r = {{"vertex", simplex::delta_vertex(n, k).coords}, {"space", "Delta"}};
    }
  } else if (op == "degree") {
    const auto f = test_map(cfg);
    const auto face = face_of(cfg);
    r = {{"degree", simplex::pl_degree(f, face, cfg.seed())}, {"face", face}, {"map", cfg.str("map")}};
  } else if (op == "coverage") {
    r = simplex::surjectivity_check(test_map(cfg), face_of(cfg), cfg.integer("grid")).to_json();
  } else {
    throw ConfigError("unknown simplex op '" + op + "' (r, project, phi, vertex, degree, coverage)");
  }
  c.out << r.dump() << '\n';
  if (cfg.has("out")) {
    io::write_json(r, cfg.str("out"));
    c.wrote(cfg.str("out"));
  }
  return r;
}

// ---- sweep ----

std::map<std::string, std::string> parse_assignments(const std::string& s) {
  std::map<std::string, std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("sweep --set expects key=value, got '" + item + "'");
    std::string key = item.substr(0, eq);
    std::replace(key.begin(), key.end(), '-', '_');
    out[key] = item.substr(eq + 1);
  }
  return out;
}

std::vector<std::string> sweep_values(const std::string& s) {
  // ';' separates values when present so that list-valued options can be swept
  const char sep = s.find(';') != std::string::npos ? ';' : ',';
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

json cmd_sweep(Context& c, const std::map<std::string, std::string>& base_from_file) {
  const auto& cfg = c.cfg;
  const std::string command = cfg.str("command");
  if (command.empty() || command == "sweep") throw ConfigError("sweep needs --command naming another subcommand");
  options_for(command);
  const std::string param = cfg.str("param");
  const auto values = sweep_values(cfg.str("values"));
  if (param.empty() || values.empty()) throw ConfigError("sweep needs --param and --values");
  auto base = base_from_file;
  for (const auto& [k, v] : parse_assignments(cfg.str("set"))) base[k] = v;
  const std::string dir = cfg.str("out_dir");
  std::filesystem::create_directories(dir);
  std::vector<RunConfig> jobs;
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto flags = base;
    flags[param] = values[i];
    const std::string out = default_output(command);
    const std::string stem = dir + "/" + command + "_" + std::to_string(i);
    const std::string ext = out.empty() ? ".json" : std::filesystem::path(out).extension().string();
    flags["out"] = stem + ext;
    flags["summary"] = stem + ".summary.json";
    jobs.push_back(resolve(command, "", flags));
  }
  std::vector<int> codes(jobs.size(), 0);
  std::vector<std::string> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  const unsigned workers = std::min<std::size_t>(thread_limit(), jobs.size());
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();) {
        std::ostringstream sink, err;
        codes[i] = execute(jobs[i], sink, err);
        errors[i] = err.str();
      }
    });
  }
  for (auto& t : pool) t.join();
  json runs = json::array();
  int worst = kOk;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    runs.push_back({{"index", i},
                    {"value", values[i]},
                    {"exit_code", codes[i]},
                    {"summary", jobs[i].summary_path()},
                    {"config_hash", jobs[i].hash()}});
    if (!errors[i].empty()) runs.back()["error"] = errors[i];
    c.wrote(jobs[i].summary_path());
    worst = std::max(worst, codes[i]);
  }
  json r = {{"command", command}, {"param", param}, {"runs", runs}, {"workers", workers}};
  if (worst != kOk) r["worst_exit_code"] = worst;
  return r;
}

}  // namespace

int exit_code_of(std::exception_ptr e, std::string* message) {
  auto say = [&](const char* what, const std::exception& x) {
    if (message) *message = std::string(what) + ": " + x.what();
  };
  try {
    std::rethrow_exception(e);
  } catch (const ConfigError& x) {
    say("config error", x);
    return kConfigError;
  } catch (const InvalidArgument& x) {
    say("invalid argument", x);
    return kConfigError;
  } catch (const InvariantViolation& x) {
    say("invariant violation", x);
    return kInvariantViolation;
  } catch (const SolverError& x) {
    say("solver failure", x);
    return kSolverFailure;
  } catch (const SingularPointError& x) {
    say("singular point", x);
    return kSolverFailure;
  } catch (const std::exception& x) {
    say("error", x);
    return kSolverFailure;
  }
}

int execute(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return execute_with_base(cfg, {}, out, err);
}

int report_config_failure(const RunConfig& fallback, const std::string& message, std::ostream& err) {
  const std::string text = "config error: " + message;
  err << text << '\n';
  json summary = {{"tool", "ricci_lab"},       {"version", RICCI_LAB_VERSION}, {"subcommand", fallback.subcommand},
                  {"config_hash", nullptr},    {"config", fallback.to_json()}, {"exit_code", kConfigError},
                  {"status", "failed"},        {"error", text},                {"artifacts", json::array()},
                  {"wall_time_s", 0.0}};
  try {
    io::write_json(summary, fallback.summary_path());
  } catch (const std::exception& e) {
    err << "cannot write summary: " << e.what() << '\n';
  }
  return kConfigError;
}

int execute_with_base(const RunConfig& cfg, const std::map<std::string, std::string>& sweep_base, std::ostream& out,
                      std::ostream& err) {
  const auto start = std::chrono::steady_clock::now();
  Context ctx{cfg, out, {}};
  json summary = {{"tool", "ricci_lab"}, {"version", RICCI_LAB_VERSION}, {"subcommand", cfg.subcommand}};
  int code = kOk;
  std::string message;
  json result;
  try {
    summary["config_hash"] = cfg.hash();
    cfg.validate();
    const std::string& s = cfg.subcommand;
    if (s == "curvature") result = cmd_curvature(ctx);
    else if (s == "suspend") result = cmd_suspend(ctx);
    else if (s == "glue") result = cmd_glue(ctx);
    else if (s == "flow") result = cmd_flow(ctx);
    else if (s == "soliton") result = cmd_soliton(ctx);
    else if (s == "deturck") result = cmd_deturck(ctx);
    else if (s == "simplex") result = cmd_simplex(ctx);
    else if (s == "sweep") result = cmd_sweep(ctx, sweep_base);
    else throw ConfigError("unknown subcommand '" + s + "'");
    if (result.contains("worst_exit_code")) code = result["worst_exit_code"].get<int>();
  } catch (...) {
    code = exit_code_of(std::current_exception(), &message);
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  summary["config"] = cfg.to_json();
  summary["seed"] = cfg.str("seed");
  summary["exit_code"] = code;
  summary["status"] = code == kOk ? "ok" : "failed";
  summary["artifacts"] = ctx.artifacts;
  summary["result"] = result;
  summary["wall_time_s"] = wall;
  if (!message.empty()) {
    summary["error"] = message;
    err << message << '\n';
  }
  try {
    io::write_json(summary, cfg.summary_path());
  } catch (const std::exception& e) {
    err << "cannot write summary: " << e.what() << '\n';
    if (code == kOk) code = kConfigError;
  }
  return code;
}

}  // namespace ricci_lab::cli
