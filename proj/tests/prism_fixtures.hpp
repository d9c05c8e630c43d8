#pragma once

#include <cmath>
#include <cstdlib>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "safemon/automaton.hpp"
#include "safemon/model_check.hpp"
#include "safemon/prism.hpp"

namespace testing {

struct PrismFixture {
  std::string name;
  safemon::ProbabilisticAutomaton pa;
  safemon::BoundedSafetyQuery query;
};

/// A --a--> {A: 0.5, BAD: 0.5}, T = 2.
inline PrismFixture prism_chain() {
  safemon::PaBuilder b;
  const auto A = b.add_state("A");
  const auto bad = b.add_state("BAD");
  b.set_initial(A);
  b.add_label(bad, "unsafe");
  b.add_transition(A, b.add_action("a"), safemon::CategoricalDistribution({{A, 0.5}, {bad, 0.5}}));
  return {"chain", std::move(b).build(), {{bad}, 2, safemon::OptimizationMode::Min}};
}

/// Nondeterministic choice between two a-transitions and a probabilistic
/// b-transition, with a label that is not a PRISM identifier.
inline PrismFixture prism_fork() {
  safemon::PaBuilder b;
  b.add_states(4);
  b.set_initial(0);
  const auto a = b.add_action("a");
  const auto go = b.add_action("2go@x");
  b.add_transition(0, a, safemon::make_point_distribution(1));
  b.add_transition(0, a, safemon::make_point_distribution(2));
  b.add_transition(0, go, safemon::CategoricalDistribution({{1, 0.25}, {3, 0.75}}));
  b.add_transition(1, a, safemon::make_point_distribution(0));
  b.add_transition(3, go, safemon::CategoricalDistribution({{2, 0.1}, {3, 0.9}}));
  return {"fork", std::move(b).build(), {{2}, 3, safemon::OptimizationMode::Min}};
}

/// Structural check against the subset of the PRISM MDP grammar the exporter
/// uses. Returns an empty string when the model is consistent.
inline std::string check_prism_syntax(const std::string& model, std::size_t states) {
  std::istringstream in(model);
  std::string line;
  std::getline(in, line);
  if (line != "mdp") return "missing model type";
  const std::regex decl(R"(  s : \[0\.\.(\d+)\] init (\d+);)");
  const std::regex command(R"(  \[([A-Za-z_][A-Za-z0-9_]*)?\] s=(\d+) -> (.+);)");
  const std::regex update(R"(([0-9.eE+-]+):\(s'=(\d+)\))");
  const std::regex label(R"(label "unsafe" = (false|s=\d+(\|s=\d+)*);)");
  bool in_module = false, ended = false, declared = false, labelled = false;
  while (std::getline(in, line)) {
    std::smatch m;
    if (line.empty()) continue;
    if (line == "module M") {
      in_module = true;
    } else if (line == "endmodule") {
      if (!in_module) return "endmodule without module";
      in_module = false;
      ended = true;
    } else if (in_module && std::regex_match(line, m, decl)) {
      if (std::stoul(m[1]) + 1 != states || std::stoul(m[2]) >= states) return "bad variable range";
      declared = true;
    } else if (in_module && std::regex_match(line, m, command)) {
      if (!declared) return "command before declaration";
      if (std::stoul(m[2]) >= states) return "guard out of range";
      double total = 0;
      const std::string rhs = m[3];
      std::size_t updates = 0;
      for (auto it = std::sregex_iterator(rhs.begin(), rhs.end(), update);
           it != std::sregex_iterator(); ++it) {
        total += std::strtod((*it)[1].str().c_str(), nullptr);
        if (std::stoul((*it)[2]) >= states) return "update out of range";
        ++updates;
      }
      if (updates == 0 || std::abs(total - 1.0) > 1e-9) return "bad distribution: " + line;
    } else if (!in_module && ended && std::regex_match(line, label)) {
      labelled = true;
    } else {
      return "unexpected line: " + line;
    }
  }
  if (!ended || !labelled) return "incomplete model";
  return {};
}

}  // namespace testing
