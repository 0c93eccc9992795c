#include <CLI11.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <future>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "divchain/runner.hpp"

namespace fs = std::filesystem;
using namespace divchain;

namespace {

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

/// Files named on the command line; directories expand to their scenario files.
std::vector<fs::path> expand(const std::vector<std::string>& args) {
  std::vector<fs::path> out;
  for (const auto& a : args) {
    if (fs::is_directory(a)) {
      for (const auto& p : scenario_files(a)) out.push_back(p);
    } else {
      out.push_back(a);
    }
  }
  return out;
}

struct Outcome {
  fs::path file;
  int code = kExitPass;
  std::string line;
  std::vector<std::string> details;
};

Outcome run_one(const fs::path& file, const RunOptions& opt, const fs::path& out_root) {
  Outcome o;
  o.file = file;
  Scenario s;
  try {
    s = load_scenario(file);
  } catch (const Error& e) {
    o.code = exit_code_for(e.kind());
    o.line = "ERROR " + file.string();
    o.details.push_back(e.what());
    return o;
  }
  const RunResult r = run_scenario(s, opt);
  o.code = r.exit_code();
  fs::path dir;
  try {
    dir = write_artifacts(r, out_root);
  } catch (const std::exception& e) {
    o.details.push_back(std::string("cannot write artifacts: ") + e.what());
    o.code = std::max(o.code, int(kExitValidation));
  }
  int failed = 0;
  for (const auto& c : r.checks)
    if (!c.pass) {
      ++failed;
      o.details.push_back("failed " + c.experiment + "." + c.name + ": value " + detail::num(c.value) + ", limit " +
                          detail::num(c.limit));
    }
  for (const auto& [kind, ex] : r.experiments.items())
    if (ex.contains("representative_flags"))
      for (const auto& f : ex["representative_flags"])
        o.details.push_back("note " + kind + ": interface representatives disagree for " + f.get<std::string>());
  if (r.error) {
    o.line = "ERROR " + r.id;
    o.details.insert(o.details.begin(), r.error->second);
  } else {
    o.line = std::string(r.pass() ? "PASS  " : "FAIL  ") + r.id + "  " + std::to_string(r.checks.size() - std::size_t(failed)) +
             "/" + std::to_string(r.checks.size()) + " checks";
  }
  if (!dir.empty()) o.line += "  -> " + dir.string();
  return o;
}

/// Exit status over several scenarios: the largest individual code.
int combine(const std::vector<Outcome>& all) {
  int code = kExitPass;
  for (const auto& o : all) code = std::max(code, o.code);
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"divchain: scenario runner for chain-rule and conservation-law verification"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "divchain 1.0 (report schema " + std::to_string(kReportSchemaVersion) + ")");

  std::vector<std::string> run_files;
  int jobs = 1;
  std::optional<double> tol_abs, tol_rel;
  std::string out_dir;
  auto* run = app.add_subcommand("run", "run scenario files (directories expand to their *.yaml files)");
  run->add_option("files", run_files, "scenario files or directories")->required();
  run->add_option("-j,--jobs", jobs, "scenarios run in parallel (one file: parallel oracle workers)")
      ->check(CLI::PositiveNumber);
  run->add_option("--tol-abs", tol_abs, "absolute tolerance override")->check(CLI::PositiveNumber);
  run->add_option("--tol-rel", tol_rel, "relative tolerance override")->check(CLI::NonNegativeNumber);
  run->add_option("-o,--out", out_dir, "output root (default $DIVCHAIN_OUT or ./divchain-out)");

  std::vector<std::string> validate_files;
  auto* validate = app.add_subcommand("validate", "parse and validate scenario files without running numerics");
  validate->add_option("files", validate_files, "scenario files or directories")->required();

  std::string list_dir;
  auto* list = app.add_subcommand("list", "list the scenarios of a directory");
  list->add_option("dir", list_dir, "scenario directory (default $DIVCHAIN_SCENARIOS or ./scenarios)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*list) {
      const fs::path dir = list_dir.empty() ? env_or("DIVCHAIN_SCENARIOS", "scenarios") : list_dir;
      int code = kExitPass;
      for (const auto& p : scenario_files(dir)) {
        try {
          const Scenario s = load_scenario(p);
          std::string kinds;
          for (const auto& e : s.experiments) kinds += (kinds.empty() ? "" : ",") + e.kind;
          std::cout << s.id << "\t" << p.filename().string() << "\t" << kinds << "\t" << s.description << "\n";
        } catch (const Error& e) {
          std::cerr << "error: " << e.what() << "\n";
          code = std::max(code, exit_code_for(e.kind()));
        }
      }
      return code;
    }

    if (*validate) {
      int code = kExitPass;
      for (const auto& p : expand(validate_files)) {
        try {
          const Scenario s = load_scenario(p);
          std::cout << "ok  " << s.id << "  (" << p.string() << ", " << s.experiments.size() << " experiments)\n";
        } catch (const Error& e) {
          std::cerr << "error: " << e.what() << "\n";
          code = std::max(code, exit_code_for(e.kind()));
        }
      }
      return code;
    }

    const auto files = expand(run_files);
    if (files.empty()) {
      std::cerr << "error: no scenario files\n";
      return kExitUsage;
    }
    const fs::path root = out_dir.empty() ? env_or("DIVCHAIN_OUT", "divchain-out") : out_dir;
    RunOptions opt;
    opt.tol_abs = tol_abs;
    opt.tol_rel = tol_rel;
    opt.workers = files.size() == 1 ? jobs : 1;
    std::vector<Outcome> all(files.size());
    std::atomic<std::size_t> next{0};
    std::mutex print;
    auto worker = [&] {
      for (std::size_t i = next++; i < files.size(); i = next++) {
        all[i] = run_one(files[i], opt, root);
        std::lock_guard<std::mutex> lock(print);
        std::cout << all[i].line << "\n";
        for (const auto& d : all[i].details) std::cout << "      " << d << "\n";
        std::cout.flush();
      }
    };
    const int threads = std::max(1, std::min<int>(jobs, int(files.size())));
    std::vector<std::thread> pool;
    for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return combine(all);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
}
