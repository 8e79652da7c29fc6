// tevc — command-line driver: parse | analyze | optimize | run | verify.
//
// Exit codes: 0 success, 1 usage/parse error, 2 analysis failure,
// 3 verification failure.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tev/analysis.hpp"
#include "tev/codegen.hpp"
#include "tev/error.hpp"
#include "tev/interp.hpp"
#include "tev/parse.hpp"
#include "tev/print.hpp"
#include "tev/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitAnalysis = 2;
constexpr int kExitVerification = 3;

std::string readFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open '" + path + "'");
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

tev::LoopProgram loadProgram(const std::string& path,
                             const std::optional<int64_t>& tripOverride) {
  tev::LoopProgram p = tev::parseProgram(readFile(path));
  if (tripOverride) {
    if (!p.loop) {
      throw std::runtime_error("--trip-count given but '" + path + "' has no loop");
    }
    p.loop->tripCount = *tripOverride;
  }
  std::vector<tev::Diagnostic> diags = tev::validateProgram(p);
  if (!diags.empty()) {
    std::ostringstream msg;
    msg << path << " failed validation:";
    for (const tev::Diagnostic& d : diags) {
      msg << "\n  [" << d.code << "] line " << d.span.line << ", col " << d.span.col << ": "
          << d.message;
    }
    throw std::runtime_error(msg.str());
  }
  return p;
}

const char* roleName(tev::VarRole role) {
  return role == tev::VarRole::LoopCarried ? "loop-carried" : "derived";
}

nlohmann::json analysisToJson(const tev::AnalysisResult& r) {
  nlohmann::json vars = nlohmann::json::object();
  for (const auto& [name, t] : r.perVariable) {
    nlohmann::json v;
    v["role"] = roleName(r.roles.at(name));
    v["tev"] = tev::renderTev(t);
    v["closedForm"] = tev::symbolicClosedForm(t, "k");
    if (auto it = r.exitValues.find(name); it != r.exitValues.end()) {
      v["exit"] = tev::renderExpr(it->second);
      v["exitExpr"] = tev::exprToJson(it->second);
    }
    vars[name] = std::move(v);
  }
  nlohmann::json trace = nlohmann::json::array();
  for (const tev::RewriteStep& s : r.trace.steps) {
    trace.push_back({{"rule", s.rule}, {"before", s.before}, {"after", s.after}});
  }
  return {{"tripCount", r.tripCount},
          {"loopCarried", r.loopCarried},
          {"variables", std::move(vars)},
          {"failures", r.failures},
          {"exitFailures", r.exitFailures},
          {"trace", std::move(trace)}};
}

void printAnalysisText(const tev::LoopProgram& p, const tev::AnalysisResult& r) {
  if (!p.loop) {
    std::cout << "no loop to analyze\n";
    return;
  }
  std::cout << "loop: " << r.tripCount << " iterations, counter '" << p.loop->counter
            << "'\n";
  std::cout << "loop-carried:";
  for (const std::string& v : r.loopCarried) std::cout << " " << v;
  std::cout << "\n";
  for (const auto& [name, t] : r.perVariable) {
    std::cout << name << " (" << roleName(r.roles.at(name)) << "): " << tev::renderTev(t)
              << "\n";
    std::cout << "  at iteration k: " << tev::symbolicClosedForm(t, "k") << "\n";
    if (auto it = r.exitValues.find(name); it != r.exitValues.end()) {
      std::cout << "  exit value: " << tev::renderExpr(it->second) << "\n";
    } else if (auto it2 = r.exitFailures.find(name); it2 != r.exitFailures.end()) {
      std::cout << "  exit value unavailable: " << it2->second << "\n";
    }
  }
  for (const auto& [name, reason] : r.failures) {
    std::cout << name << ": no evolution (" << reason << ")\n";
  }
  std::cout << "rewrite steps: " << r.trace.steps.size() << " (use --json for the trace)\n";
}

nlohmann::json verifyToJson(const tev::VerifyReport& rep) {
  return {{"passed", rep.passed},
          {"trialsRequested", rep.trialsRequested},
          {"trialsRun", rep.trialsRun},
          {"trialsSkipped", rep.trialsSkipped},
          {"maxAbsDeviation", rep.maxAbsDeviation},
          {"maxRelDeviation", rep.maxRelDeviation},
          {"tripCount", rep.tripCount},
          {"oracleTripCount", rep.oracleTripCount},
          {"closedFormCrossChecked", rep.closedFormCrossChecked},
          {"positiveInputs", rep.positiveInputs},
          {"warning", rep.warning},
          {"failure", rep.failure}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tevc: loop analysis and loop-elimination for a small tensor IR"};
  app.require_subcommand(1);

  std::string file;
  std::string outPath;
  std::string inputsPath;
  bool jsonOut = false;
  bool recordHeaders = false;
  int trials = 200;
  uint64_t seed = 42;
  std::optional<int64_t> tripOverride;

  auto addCommon = [&](CLI::App* cmd, bool withTrip = true) {
    cmd->add_option("file", file, "program file")->required();
    cmd->add_flag("--json", jsonOut, "machine-readable JSON output");
    if (withTrip) {
      cmd->add_option("--trip-count", tripOverride, "override the loop trip count");
    }
  };

  CLI::App* cmdParse = app.add_subcommand("parse", "parse and validate; print the program");
  addCommon(cmdParse);
  CLI::App* cmdAnalyze =
      app.add_subcommand("analyze", "print per-variable evolutions and exit values");
  addCommon(cmdAnalyze);
  CLI::App* cmdOptimize = app.add_subcommand("optimize", "emit the loop-free program");
  addCommon(cmdOptimize);
  cmdOptimize->add_option("-o,--output", outPath, "write the optimized program here");
  CLI::App* cmdRun = app.add_subcommand("run", "interpret the program on given inputs");
  addCommon(cmdRun);
  cmdRun->add_option("--inputs", inputsPath, "JSON file mapping parameter name to tensor");
  cmdRun->add_flag("--record-headers", recordHeaders,
                   "log loop-carried values at each iteration start");
  CLI::App* cmdVerify =
      app.add_subcommand("verify", "compare original vs optimized on random inputs");
  addCommon(cmdVerify);
  cmdVerify->add_option("--trials", trials, "number of random environments");
  cmdVerify->add_option("--seed", seed, "random generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (cmdParse->parsed()) {
      tev::LoopProgram p = loadProgram(file, tripOverride);
      if (jsonOut) {
        std::cout << tev::programToJson(p).dump(2) << "\n";
      } else {
        std::cout << tev::serializeProgram(p);
      }
      return kExitOk;
    }

    if (cmdAnalyze->parsed()) {
      tev::LoopProgram p = loadProgram(file, tripOverride);
      tev::AnalysisResult r = tev::analyzeLoop(p);
      if (jsonOut) {
        std::cout << analysisToJson(r).dump(2) << "\n";
      } else {
        printAnalysisText(p, r);
      }
      bool anyUnknown = false;
      for (const auto& [name, t] : r.perVariable) {
        (void)name;
        anyUnknown = anyUnknown || tev::isUnknown(t);
      }
      bool complete = r.failures.empty() && r.exitFailures.empty() && !anyUnknown;
      return complete ? kExitOk : kExitAnalysis;
    }

    if (cmdOptimize->parsed()) {
      tev::LoopProgram p = loadProgram(file, tripOverride);
      tev::LoopProgram optimized = tev::emitOptimizedProgram(p, tev::analyzeLoop(p));
      std::string text = tev::serializeProgram(optimized);
      if (!outPath.empty()) {
        std::ofstream out(outPath, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write '" + outPath + "'");
        out << text;
      }
      if (jsonOut) {
        std::cout << tev::programToJson(optimized).dump(2) << "\n";
      } else if (outPath.empty()) {
        std::cout << text;
      }
      return kExitOk;
    }

    if (cmdRun->parsed()) {
      tev::LoopProgram p = loadProgram(file, tripOverride);
      tev::Bindings inputs;
      if (!inputsPath.empty()) {
        inputs = tev::bindingsFromJson(nlohmann::json::parse(readFile(inputsPath)));
      }
      tev::RunResult result = tev::runProgram(p, inputs, recordHeaders);
      nlohmann::json out;
      out["returns"] = nlohmann::json::array();
      for (const tev::Tensor& t : result.returns) out["returns"].push_back(tev::tensorToJson(t));
      if (recordHeaders) {
        nlohmann::json headers = nlohmann::json::object();
        for (const auto& [name, log] : result.headerLog) {
          nlohmann::json seq = nlohmann::json::array();
          for (const tev::Tensor& t : log) seq.push_back(tev::tensorToJson(t));
          headers[name] = std::move(seq);
        }
        out["headers"] = std::move(headers);
      }
      std::cout << out.dump(2) << "\n";
      return kExitOk;
    }

    if (cmdVerify->parsed()) {
      tev::LoopProgram p = loadProgram(file, tripOverride);
      tev::VerifyOptions opts;
      opts.trials = trials;
      opts.seed = seed;
      tev::VerifyReport rep = tev::verifyProgram(p, opts);
      if (jsonOut) {
        std::cout << verifyToJson(rep).dump(2) << "\n";
      } else {
        std::cout << "verify: " << (rep.passed ? "PASS" : "FAIL") << " (" << rep.trialsRun
                  << "/" << rep.trialsRequested << " trials, trip count " << rep.tripCount
                  << ", max abs dev " << tev::formatDouble(rep.maxAbsDeviation)
                  << ", max rel dev " << tev::formatDouble(rep.maxRelDeviation) << ")\n";
        if (!rep.warning.empty()) std::cout << "warning: " << rep.warning << "\n";
        if (!rep.failure.empty()) std::cout << "failure: " << rep.failure << "\n";
      }
      return rep.passed ? kExitOk : kExitVerification;
    }
  } catch (const tev::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == tev::ErrorKind::NotFullyAnalyzable ? kExitAnalysis : kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
