#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "safemon/distribution.hpp"

namespace safemon {

struct Transition {
  StateId source;
  ActionId action;
  CategoricalDistribution distribution;
};

/// Finite probabilistic automaton: states, optional initial state, action
/// alphabet, a (possibly nondeterministic) transition relation and
/// per-state atomic propositions.
///
/// Instances are immutable; build them with PaBuilder. Transitions are kept
/// sorted by (source, action) with insertion order preserved among equals,
/// so the outgoing transitions of a state form one contiguous slice.
class ProbabilisticAutomaton {
 public:
  std::size_t state_count() const { return names_.size(); }
  std::size_t action_count() const { return alphabet_.size(); }
  std::size_t transition_count() const { return transitions_.size(); }

  std::optional<StateId> initial() const { return initial_; }
  const std::string& state_name(StateId s) const { return names_.at(s); }
  const std::string& action_label(ActionId a) const { return alphabet_.at(a); }
  std::optional<ActionId> find_action(std::string_view label) const;
  std::span<const std::string> alphabet() const { return alphabet_; }

  const std::set<std::string>& labels(StateId s) const { return labels_.at(s); }
  bool has_label(StateId s, const std::string& proposition) const {
    return labels_.at(s).count(proposition) > 0;
  }

  std::span<const Transition> transitions() const { return transitions_; }
  /// Outgoing transitions of `s`, sorted by action.
  std::span<const Transition> outgoing(StateId s) const;
  /// Outgoing transitions of `s` labelled `a`.
  std::span<const Transition> outgoing(StateId s, ActionId a) const;
  /// Index of the first outgoing transition of `s` in transitions().
  std::size_t first_transition(StateId s) const { return offsets_.at(s); }
  bool is_terminal(StateId s) const { return outgoing(s).empty(); }

 private:
  friend class PaBuilder;

  std::vector<std::string> names_;
  std::optional<StateId> initial_;
  std::vector<std::string> alphabet_;
  std::vector<Transition> transitions_;
  std::vector<std::size_t> offsets_;  // size state_count() + 1
  std::vector<std::set<std::string>> labels_;
};

class PaBuilder {
 public:
  StateId add_state(std::string name = {});
  void add_states(std::size_t count);
  /// Returns the id of `label`, adding it to the alphabet if new.
  ActionId add_action(const std::string& label);
  void set_initial(StateId s);
  void add_label(StateId s, std::string proposition);
  void add_transition(StateId source, ActionId action, CategoricalDistribution distribution);
  void reserve_transitions(std::size_t n) { transitions_.reserve(n); }

  std::size_t state_count() const { return names_.size(); }

  /// Validates state references and freezes the automaton.
  ProbabilisticAutomaton build() &&;

 private:
  std::vector<std::string> names_;
  std::optional<StateId> initial_;
  std::vector<std::string> alphabet_;
  std::unordered_map<std::string, ActionId> action_index_;
  std::vector<Transition> transitions_;
  std::vector<std::set<std::string>> labels_;
};

/// Memoryless scheduler: for each state, the index of the chosen transition
/// within outgoing(state). Terminal states carry no choice.
struct Scheduler {
  std::vector<std::optional<std::size_t>> choice;

  /// Throws ValidationError unless every non-terminal state selects one of
  /// its own outgoing transitions.
  void validate(const ProbabilisticAutomaton& pa) const;
};

/// Result of parallel composition; `components[s]` names the pair of
/// component states behind composed state `s`.
struct Composition {
  ProbabilisticAutomaton automaton;
  std::vector<std::pair<StateId, StateId>> components;
};

/// Parallel composition of two automata with synchronisation on shared
/// action labels and interleaving on the rest.
///
/// When both operands have an initial state only the pairs reachable from
/// (initial1, initial2) are kept, in breadth-first discovery order.
/// Otherwise the full product is produced with id s1 * |S2| + s2.
Composition parallel_compose(const ProbabilisticAutomaton& first,
                             const ProbabilisticAutomaton& second);

/// Copy of `pa` with every action relabelled by `rename`. Distinct labels may
/// collapse onto one, turning them into nondeterministic alternatives of the
/// same action.
ProbabilisticAutomaton rename_actions(const ProbabilisticAutomaton& pa,
                                      const std::function<std::string(std::string_view)>& rename);

/// Textual dump: `#` header lines for state count, initial state and labels,
/// then one transition per line as `src action prob:dst [prob:dst...]`.
void write_pa_dump(std::ostream& out, const ProbabilisticAutomaton& pa);
ProbabilisticAutomaton read_pa_dump(std::istream& in);

}  // namespace safemon
