// direx: command-line driver for protocol runs, Monte Carlo experiments,
// attack demonstrations and exact oracles. Reports are JSON lines.
//
// Exit status: 0 success, 2 configuration error, 3 invariant violation.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "direx/amplify.hpp"
#include "direx/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;

// Flags shared by every experiment command; names mirror the config keys.
const char* const kFlags[] = {"strategy", "k",      "input-bits", "zeta",  "delta",           "epsilon",
                              "gamma",    "mode",   "include-x1", "trials", "seed",           "trusted",
                              "stages",   "threads", "targeted-rounds", "leak-mode"};

struct CommonOptions {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  std::string config_path;
  std::string out_path;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  for (const char* f : kFlags) opts.options[f] = cmd->add_option(std::string("--") + f, opts.values[f]);
  cmd->add_option("--config", opts.config_path, "flat key = value configuration file");
  cmd->add_option("--out", opts.out_path, "write JSON lines here instead of stdout");
}

direx::ExperimentConfig resolve(const CommonOptions& opts, direx::ExperimentConfig cfg) {
  if (!opts.config_path.empty()) direx::load_config_file(cfg, opts.config_path);
  std::vector<direx::ConfigIssue> issues;
  for (const auto& [name, opt] : opts.options)
    if (opt->count() > 0) direx::set_config_field(cfg, name, opts.values.at(name), issues);
  if (!issues.empty()) throw direx::ConfigError(std::move(issues));
  return cfg;
}

int write(const direx::CommandOutput& out, const std::string& path) {
  if (path.empty()) {
    std::cout << out.jsonl;
  } else {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
      std::cerr << "cannot open " << path << " for writing\n";
      return kExitConfig;
    }
    f << out.jsonl;
  }
  return out.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Device-independent randomness expansion simulator"};
  app.require_subcommand(1);

  struct Command {
    const char* name;
    const char* help;
    direx::CommandOutput (*fn)(const direx::ExperimentConfig&);
    CLI::App* app = nullptr;
    CommonOptions opts;
  };
  Command commands[] = {
      {"run", "single protocol run with round-by-round transcript", direx::command_run, nullptr, {}},
      {"mc", "Monte Carlo over independent trials", direx::command_mc, nullptr, {}},
      {"iterate", "chain the protocol across fresh ensembles", direx::command_iterate, nullptr, {}},
      {"attack", "abort-leak and NL-box demonstrations", direx::command_attack, nullptr, {}},
      {"oracle", "classical optimum and leftover-hash enumeration", direx::command_oracle, nullptr, {}},
      {"verify-appendix", "canonical GHZ-passing instances and relation checks", direx::command_verify_appendix, nullptr, {}},
  };
  for (auto& c : commands) {
    c.app = app.add_subcommand(c.name, c.help);
    add_common(c.app, c.opts);
  }

  auto* amp = app.add_subcommand("amplify", "Toeplitz hashing and hash-family checks");
  std::string amp_x, amp_seed, amp_out;
  std::size_t amp_t = 0, amp_n = 0;
  amp->add_option("--x", amp_x, "input bit string");
  amp->add_option("--seed-string", amp_seed, "Toeplitz seed bits (n + t - 1)");
  amp->add_option("--t", amp_t, "output length")->required();
  amp->add_option("--n", amp_n, "input length for the collision check (no --x)");
  amp->add_option("--out", amp_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  try {
    for (auto& c : commands) {
      if (!c.app->parsed()) continue;
      direx::ExperimentConfig defaults;
      if (std::string(c.name) == "oracle") defaults.trials = 1000;
      if (std::string(c.name) == "verify-appendix") defaults.trials = 100;
      if (std::string(c.name) == "attack") defaults.trials = 1000;
      return write(c.fn(resolve(c.opts, defaults)), c.opts.out_path);
    }
    if (amp->parsed()) {
      direx::CommandOutput out;
      if (!amp_x.empty()) {
        const auto x = direx::BitString::parse(amp_x);
        const direx::ToeplitzSeed seed(direx::BitString::parse(amp_seed), x.size(), amp_t);
        out.emit({{"kind", "toeplitz_hash"}, {"x", amp_x}, {"seed", amp_seed}, {"t", amp_t},
                  {"s", direx::toeplitz_hash(x, seed).to_string()}});
      } else {
        const auto worst = direx::family_collision_check(direx::ToeplitzFamily(amp_n, amp_t));
        const direx::Rational limit(1, std::int64_t{1} << amp_t);
        out.emit({{"kind", "collision_check"}, {"n", amp_n}, {"t", amp_t}, {"max_collision", worst.to_string()},
                  {"two_universal", worst <= limit}});
        out.exit_code = worst <= limit ? 0 : 3;
      }
      return write(out, amp_out);
    }
  } catch (const direx::ConfigError& e) {
    nlohmann::ordered_json j;
    j["kind"] = "config_error";
    for (const auto& i : e.issues()) j["issues"].push_back({{"field", i.field}, {"message", i.message}});
    std::cerr << j.dump() << "\n";
    return kExitConfig;
  } catch (const direx::Error& e) {
    std::cerr << "{\"kind\":\"error\",\"message\":" << nlohmann::json(e.what()).dump() << "}\n";
    return e.code() == direx::ErrorCode::InvariantViolation ? 3 : kExitConfig;
  }
  return 0;
}
