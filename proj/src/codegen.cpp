#include "tev/codegen.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <utility>

#include "tev/error.hpp"
#include "tev/print.hpp"

namespace tev {

namespace {

int exprSize(const ExprPtr& e) {
  int n = 1;
  for (const ExprPtr& c : e->args) n += exprSize(c);
  return n;
}

// Rebuilds `e` with every subtree whose rendering appears in `byRender`
// replaced by the mapped expression (outermost match wins).
ExprPtr substitute(const ExprPtr& e, const std::map<std::string, ExprPtr>& byRender) {
  if (!byRender.empty()) {
    auto hit = byRender.find(renderExpr(e));
    if (hit != byRender.end()) return hit->second;
  }
  if (e->args.empty()) return e;
  Expr copy = *e;
  copy.args.clear();
  for (const ExprPtr& c : e->args) copy.args.push_back(substitute(c, byRender));
  return std::make_shared<const Expr>(std::move(copy));
}

// Replaces reads of loop-body variables by their exit names.
ExprPtr rewireVars(const ExprPtr& e, const std::map<std::string, std::string>& renames) {
  if (e->kind == ExprKind::Var) {
    auto hit = renames.find(e->var);
    if (hit == renames.end()) return e;
    Expr copy = *e;
    copy.var = hit->second;
    return std::make_shared<const Expr>(std::move(copy));
  }
  if (e->args.empty()) return e;
  Expr copy = *e;
  copy.args.clear();
  for (const ExprPtr& c : e->args) copy.args.push_back(rewireVars(c, renames));
  return std::make_shared<const Expr>(std::move(copy));
}

void collectTakenNames(const LoopProgram& p, std::set<std::string>& taken) {
  for (const Param& param : p.params) taken.insert(param.name);
  for (const Stmt& s : p.preStmts) taken.insert(s.name);
  if (p.loop) {
    taken.insert(p.loop->counter);
    for (const Stmt& s : p.loop->body) taken.insert(s.name);
  }
  for (const Stmt& s : p.postStmts) taken.insert(s.name);
}

std::string freshName(std::string base, std::set<std::string>& taken) {
  while (taken.count(base)) base += "_";
  taken.insert(base);
  return base;
}

}  // namespace

LoopProgram emitOptimizedProgram(const LoopProgram& p, const AnalysisResult& r) {
  if (!p.loop) return p;

  std::set<std::string> bodyAssigned;
  for (const Stmt& s : p.loop->body) bodyAssigned.insert(s.name);

  // Body variables the post-loop code actually consumes, in order of first
  // appearance (post-loop statements first, then returns).
  std::vector<std::string> needed;
  std::set<std::string> seen;
  auto want = [&](const std::string& name) {
    if (bodyAssigned.count(name) && seen.insert(name).second) needed.push_back(name);
  };
  for (const Stmt& s : p.postStmts) {
    std::set<std::string> vars;
    collectVars(s.value, vars);
    for (const std::string& v : vars) want(v);
  }
  for (const std::string& v : p.returns) want(v);

  std::string blockers;
  for (const std::string& v : needed) {
    if (r.exitValues.count(v)) continue;
    std::string why;
    if (auto it = r.failures.find(v); it != r.failures.end()) {
      why = it->second;
    } else if (auto it2 = r.exitFailures.find(v); it2 != r.exitFailures.end()) {
      why = it2->second;
    } else {
      why = "no exit value";
    }
    blockers += (blockers.empty() ? "" : "; ") + ("'" + v + "': " + why);
  }
  if (!blockers.empty()) {
    fail(ErrorKind::NotFullyAnalyzable,
         "cannot remove the loop; blocking variables: " + blockers);
  }

  std::set<std::string> taken;
  collectTakenNames(p, taken);

  // With the loop gone there is no pre/post distinction left; everything
  // lands in preStmts, matching how a loop-free source file parses.
  LoopProgram out;
  out.name = p.name;
  out.params = p.params;
  out.preStmts = p.preStmts;
  out.loop.reset();

  // Count repeated non-leaf subtrees across all exit expressions; each one
  // becomes a shared temporary, emitted smallest-first so later temporaries
  // can reference earlier ones.
  struct Candidate {
    int size = 0;
    int count = 0;
    ExprPtr expr;
  };
  std::map<std::string, Candidate> counts;
  auto tally = [&](const ExprPtr& root) {
    std::function<void(const ExprPtr&)> walk = [&](const ExprPtr& e) {
      if (exprSize(e) >= 2) {
        Candidate& c = counts[renderExpr(e)];
        c.size = exprSize(e);
        c.count++;
        c.expr = e;
      }
      for (const ExprPtr& child : e->args) walk(child);
    };
    walk(root);
  };
  for (const std::string& v : needed) tally(r.exitValues.at(v));

  std::vector<std::pair<std::string, Candidate>> shared;
  for (const auto& [render, c] : counts) {
    if (c.count >= 2) shared.push_back({render, c});
  }
  std::sort(shared.begin(), shared.end(), [](const auto& a, const auto& b) {
    return a.second.size != b.second.size ? a.second.size < b.second.size
                                          : a.first < b.first;
  });

  std::map<std::string, ExprPtr> byRender;
  int tempIndex = 0;
  for (const auto& [render, c] : shared) {
    std::string name = freshName("t" + std::to_string(tempIndex++), taken);
    out.preStmts.push_back({name, substitute(c.expr, byRender), {}});
    byRender[render] = eVar(name);
  }

  std::map<std::string, std::string> renames;
  for (const std::string& v : needed) {
    std::string name = freshName(v + "_exit", taken);
    out.preStmts.push_back({name, substitute(r.exitValues.at(v), byRender), {}});
    renames[v] = name;
  }

  for (const Stmt& s : p.postStmts) {
    out.preStmts.push_back({s.name, rewireVars(s.value, renames), s.span});
  }
  for (const std::string& v : p.returns) {
    auto hit = renames.find(v);
    out.returns.push_back(hit == renames.end() ? v : hit->second);
  }
  return out;
}

}  // namespace tev
