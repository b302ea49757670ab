#pragma once

#include <cstdint>
#include <exception>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ricci_lab::cli {

enum ExitCode : int { kOk = 0, kSolverFailure = 1, kConfigError = 2, kInvariantViolation = 3 };

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One declared option of a subcommand. Keys use underscores; the flag is
// --key with dashes.
struct OptionSpec {
  std::string key;
  std::string fallback;  // empty = unset
  std::string help;
  bool is_flag = false;
};

const std::vector<std::string>& subcommands();
const std::vector<OptionSpec>& options_for(const std::string& subcommand);
// The subcommand's default artifact path, e.g. "soliton.csv".
std::string default_output(const std::string& subcommand);

// Fully resolved options of one run, as text.
struct RunConfig {
  std::string subcommand;
  std::map<std::string, std::string> values;

  bool has(const std::string& key) const;
  const std::string& str(const std::string& key) const;
  double num(const std::string& key) const;
  int integer(const std::string& key) const;
  std::uint64_t seed() const;
  bool flag(const std::string& key) const;
  std::vector<double> list(const std::string& key) const;
  std::vector<int> int_list(const std::string& key) const;

  // Tolerances positive, output directories writable.
  void validate() const;
  nlohmann::json to_json() const;
  // FNV-1a of the canonical JSON of the options that affect results (paths excluded).
  std::string hash() const;
  std::string summary_path() const;
};

// Defaults, then the [run] table of the TOML file, then explicit flags.
RunConfig resolve(const std::string& subcommand, const std::string& toml_path,
                  const std::map<std::string, std::string>& flags);
// The [run] table of a TOML file as option text; `table` selects another table.
std::map<std::string, std::string> read_toml_table(const std::string& path, const std::string& table = "run");

// Runs one resolved configuration, writes its artifacts and summary JSON and
// returns the exit code. Point-in/point-out results go to `out`.
int execute(const RunConfig& cfg, std::ostream& out, std::ostream& err);
// The same for a sweep whose fixed options come from a [base] config table.
int execute_with_base(const RunConfig& cfg, const std::map<std::string, std::string>& sweep_base, std::ostream& out,
                      std::ostream& err);
// Summary for a run that failed before its configuration resolved.
int report_config_failure(const RunConfig& fallback, const std::string& message, std::ostream& err);

// Exit code and message for an exception thrown by a run.
int exit_code_of(std::exception_ptr e, std::string* message = nullptr);

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Worker cap from RICCI_LAB_THREADS, else the hardware concurrency.
unsigned thread_limit();

}  // namespace ricci_lab::cli
