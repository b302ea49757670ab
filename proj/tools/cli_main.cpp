#include <algorithm>

#include <CLI11.hpp>

#include "cli.hpp"

#ifndef RICCI_LAB_VERSION
#define RICCI_LAB_VERSION "0.0.0"
#endif

namespace ricci_lab::cli {

namespace {

const char* describe(const std::string& s) {
  if (s == "curvature") return "exact curvature of a singular suspension over sample points";
  if (s == "suspend") return "describe a suspension: layers and singular strata";
  if (s == "glue") return "glue expander caps into a conical slice";
  if (s == "flow") return "Ricci flow of a cohomogeneity-one metric";
  if (s == "soliton") return "rotationally symmetric solitons (cigar, bryant, product, expander)";
  if (s == "deturck") return "Ricci-DeTurck stability of the round sphere";
  if (s == "simplex") return "simplex maps: r, project, phi, vertex, degree, coverage";
  return "run one subcommand over a list of parameter values";
}

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

struct Parsed {
  std::string config;
  std::map<std::string, std::string> store;
  std::map<std::string, bool> flags;
  std::map<std::string, CLI::Option*> opts;
};

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"ricci_lab: numerical experiments on singular Ricci flow and soliton eigenvalue maps"};
  app.set_version_flag("--version", RICCI_LAB_VERSION);
  app.require_subcommand(1);
  std::map<std::string, Parsed> parsed;
  for (const auto& name : subcommands()) {
    auto* sc = app.add_subcommand(name, describe(name));
    auto& p = parsed[name];
    sc->add_option("--config", p.config, "TOML file with a [run] table");
    for (const auto& o : options_for(name)) {
      if (o.key == "kind" || o.key == "op") {
        p.opts[o.key] = sc->add_option(o.key, p.store[o.key], o.help);
      } else if (o.is_flag) {
        p.opts[o.key] = sc->add_flag("--" + dashed(o.key), p.flags[o.key], o.help);
      } else {
        auto* opt = sc->add_option("--" + dashed(o.key), p.store[o.key], o.help);
        if (!o.fallback.empty()) opt->default_str(o.fallback);
        p.opts[o.key] = opt;
      }
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << RICCI_LAB_VERSION << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  }
  const auto* sc = app.get_subcommands().front();
  const std::string name = sc->get_name();
  auto& p = parsed[name];
  std::map<std::string, std::string> given;
  for (const auto& [key, opt] : p.opts) {
    if (opt->count() == 0) continue;
    given[key] = p.flags.count(key) ? (p.flags[key] ? "true" : "false") : p.store[key];
  }
  std::string config_path = p.config;
  RunConfig cfg;
  std::map<std::string, std::string> sweep_base;
  try {
    cfg = resolve(name, config_path, given);
    if (name == "sweep" && !config_path.empty()) sweep_base = read_toml_table(config_path, "base");
  } catch (const ConfigError& e) {
    RunConfig fallback;
    try {
      fallback = resolve(name, "", given);
    } catch (const ConfigError&) {
      fallback = resolve(name, "", {});
    }
    return report_config_failure(fallback, e.what(), err);
  }
  return execute_with_base(cfg, sweep_base, out, err);
}

}  // namespace ricci_lab::cli
