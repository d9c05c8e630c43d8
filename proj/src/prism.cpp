#include "safemon/prism.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace safemon {

namespace {

std::string identifier(const std::string& label) {
  std::string id;
  for (char c : label) id += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
  if (id.empty() || std::isdigit(static_cast<unsigned char>(id.front()))) id = "a_" + id;
  return id;
}

}  // namespace

PrismExport export_prism(const ProbabilisticAutomaton& pa, const BoundedSafetyQuery& query) {
  if (pa.state_count() == 0) throw ValidationError("prism: automaton has no states");
  if (pa.transition_count() > kPrismTransitionLimit)
    throw ValidationError("prism: too many transitions for a flat export");
  std::vector<StateId> unsafe = query.unsafe;
  std::sort(unsafe.begin(), unsafe.end());
  unsafe.erase(std::unique(unsafe.begin(), unsafe.end()), unsafe.end());
  for (StateId s : unsafe)
    if (s >= pa.state_count()) throw ValidationError("prism: unsafe state out of range");

  std::ostringstream m;
  m << "mdp\n\nmodule M\n";
  m << "  s : [0.." << pa.state_count() - 1 << "] init " << pa.initial().value_or(0) << ";\n\n";
  for (StateId s = 0; s < pa.state_count(); ++s) {
    const auto out = pa.outgoing(s);
    if (out.empty()) {
      m << "  [] s=" << s << " -> 1:(s'=" << s << ");\n";
      continue;
    }
    for (const auto& t : out) {
      m << "  [" << identifier(pa.action_label(t.action)) << "] s=" << s << " -> ";
      bool first = true;
      for (const auto& e : t.distribution.support()) {
        if (!first) m << " + ";
        first = false;
        m << format_exact(e.probability) << ":(s'=" << e.key << ")";
      }
      m << ";\n";
    }
  }
  m << "endmodule\n\nlabel \"unsafe\" = ";
  if (unsafe.empty()) {
    m << "false";
  } else {
    for (std::size_t i = 0; i < unsafe.size(); ++i) m << (i ? "|" : "") << "s=" << unsafe[i];
  }
  m << ";\n";

  const bool min = query.mode == OptimizationMode::Min;
  const std::string safe_op = min ? "Pmin" : "Pmax";
  const std::string reach_op = min ? "Pmax" : "Pmin";
  const std::string t = std::to_string(query.horizon);
  std::ostringstream p;
  p << safe_op << "=? [ G<=" << t << " !\"unsafe\" ]\n";
  p << reach_op << "=? [ true U<=" << t << " \"unsafe\" ]\n";
  p << "filter(print, " << safe_op << "=? [ G<=" << t << " !\"unsafe\" ], true)\n";
  return {m.str(), p.str()};
}

}  // namespace safemon
