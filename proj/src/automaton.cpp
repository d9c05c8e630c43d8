#include "safemon/automaton.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace safemon {

std::string format_exact(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

// ---------------------------------------------------------------- automaton

std::optional<ActionId> ProbabilisticAutomaton::find_action(std::string_view label) const {
  for (ActionId a = 0; a < alphabet_.size(); ++a)
    if (alphabet_[a] == label) return a;
  return std::nullopt;
}

std::span<const Transition> ProbabilisticAutomaton::outgoing(StateId s) const {
  const std::size_t begin = offsets_.at(s);
  const std::size_t end = offsets_.at(s + 1);
  return std::span<const Transition>(transitions_).subspan(begin, end - begin);
}

std::span<const Transition> ProbabilisticAutomaton::outgoing(StateId s, ActionId a) const {
  auto all = outgoing(s);
  auto lo = std::lower_bound(all.begin(), all.end(), a,
                             [](const Transition& t, ActionId x) { return t.action < x; });
  auto hi = std::upper_bound(lo, all.end(), a,
                             [](ActionId x, const Transition& t) { return x < t.action; });
  return all.subspan(static_cast<std::size_t>(lo - all.begin()),
                     static_cast<std::size_t>(hi - lo));
}

// ------------------------------------------------------------------ builder

StateId PaBuilder::add_state(std::string name) {
  const StateId id = names_.size();
  names_.push_back(name.empty() ? std::to_string(id) : std::move(name));
  labels_.emplace_back();
  return id;
}

void PaBuilder::add_states(std::size_t count) {
  names_.reserve(names_.size() + count);
  labels_.reserve(labels_.size() + count);
  for (std::size_t i = 0; i < count; ++i) add_state();
}

ActionId PaBuilder::add_action(const std::string& label) {
  auto [it, inserted] = action_index_.emplace(label, alphabet_.size());
  if (inserted) alphabet_.push_back(label);
  return it->second;
}

void PaBuilder::set_initial(StateId s) {
  if (s >= names_.size()) throw ValidationError("initial state out of range");
  initial_ = s;
}

void PaBuilder::add_label(StateId s, std::string proposition) {
  labels_.at(s).insert(std::move(proposition));
}

void PaBuilder::add_transition(StateId source, ActionId action,
                               CategoricalDistribution distribution) {
  transitions_.push_back({source, action, std::move(distribution)});
}

ProbabilisticAutomaton PaBuilder::build() && {
  const std::size_t n = names_.size();
  for (const auto& t : transitions_) {
    if (t.source >= n) throw ValidationError("transition source out of range");
    if (t.action >= alphabet_.size()) throw ValidationError("transition action out of range");
    if (t.distribution.empty()) throw ValidationError("transition with empty distribution");
    for (const auto& e : t.distribution.support())
      if (e.key >= n) throw ValidationError("transition target out of range");
  }
  std::stable_sort(transitions_.begin(), transitions_.end(),
                   [](const Transition& a, const Transition& b) {
                     return a.source != b.source ? a.source < b.source : a.action < b.action;
                   });
  ProbabilisticAutomaton pa;
  pa.offsets_.assign(n + 1, 0);
  for (const auto& t : transitions_) ++pa.offsets_[t.source + 1];
  for (std::size_t s = 0; s < n; ++s) pa.offsets_[s + 1] += pa.offsets_[s];
  pa.names_ = std::move(names_);
  pa.initial_ = initial_;
  pa.alphabet_ = std::move(alphabet_);
  pa.transitions_ = std::move(transitions_);
  pa.labels_ = std::move(labels_);
  return pa;
}

void Scheduler::validate(const ProbabilisticAutomaton& pa) const {
  if (choice.size() != pa.state_count())
    throw ValidationError("scheduler size does not match state count");
  for (StateId s = 0; s < pa.state_count(); ++s) {
    const auto n = pa.outgoing(s).size();
    if (n == 0) continue;
    if (!choice[s] || *choice[s] >= n)
      throw ValidationError("scheduler has no valid choice for state " + pa.state_name(s));
  }
}

// -------------------------------------------------------------- composition

Composition parallel_compose(const ProbabilisticAutomaton& first,
                             const ProbabilisticAutomaton& second) {
  PaBuilder builder;
  // Alphabet: labels of `first` in order, then new labels of `second`.
  std::vector<ActionId> map1(first.action_count()), map2(second.action_count());
  for (ActionId a = 0; a < first.action_count(); ++a)
    map1[a] = builder.add_action(first.action_label(a));
  for (ActionId a = 0; a < second.action_count(); ++a)
    map2[a] = builder.add_action(second.action_label(a));

  // Shared labels: partner id in the other automaton, if any.
  std::unordered_map<std::string_view, ActionId> index2;
  for (ActionId a = 0; a < second.action_count(); ++a) index2.emplace(second.action_label(a), a);
  std::vector<std::optional<ActionId>> partner1(first.action_count());
  std::vector<bool> shared2(second.action_count(), false);
  for (ActionId a = 0; a < first.action_count(); ++a) {
    auto it = index2.find(first.action_label(a));
    if (it != index2.end()) {
      partner1[a] = it->second;
      shared2[it->second] = true;
    }
  }

  const std::size_t n2 = second.state_count();
  const bool reachable_only = first.initial() && second.initial();

  Composition result;
  auto& components = result.components;
  std::unordered_map<std::size_t, StateId> ids;  // key s1 * n2 + s2
  std::deque<StateId> frontier;

  auto state_of = [&](StateId s1, StateId s2) -> StateId {
    if (!reachable_only) return s1 * n2 + s2;
    const std::size_t key = s1 * n2 + s2;
    auto [it, inserted] = ids.emplace(key, components.size());
    if (inserted) {
      components.emplace_back(s1, s2);
      builder.add_state("(" + first.state_name(s1) + "," + second.state_name(s2) + ")");
      frontier.push_back(it->second);
    }
    return it->second;
  };

  if (!reachable_only) {
    components.reserve(first.state_count() * n2);
    for (StateId s1 = 0; s1 < first.state_count(); ++s1)
      for (StateId s2 = 0; s2 < n2; ++s2) {
        components.emplace_back(s1, s2);
        builder.add_state("(" + first.state_name(s1) + "," + second.state_name(s2) + ")");
      }
    for (StateId s = 0; s < components.size(); ++s) frontier.push_back(s);
  } else {
    builder.set_initial(state_of(*first.initial(), *second.initial()));
  }

  auto lift = [&](const CategoricalDistribution& d1, const CategoricalDistribution& d2) {
    const auto joint = product_distribution(d1, d2);
    std::vector<CategoricalDistribution::Entry> entries;
    entries.reserve(joint.size());
    for (const auto& e : joint.support())
      entries.push_back({state_of(e.key.first, e.key.second), e.probability});
    return CategoricalDistribution(std::move(entries));
  };

  while (!frontier.empty()) {
    const StateId s = frontier.front();
    frontier.pop_front();
    const auto [s1, s2] = components[s];
    for (const auto& t1 : first.outgoing(s1)) {
      if (partner1[t1.action]) {
        // (i) synchronise on a shared label.
        for (const auto& t2 : second.outgoing(s2, *partner1[t1.action]))
          builder.add_transition(s, map1[t1.action], lift(t1.distribution, t2.distribution));
      } else {
        // (ii) `first` moves alone.
        builder.add_transition(s, map1[t1.action],
                               lift(t1.distribution, make_point_distribution(s2)));
      }
    }
    for (const auto& t2 : second.outgoing(s2)) {
      if (shared2[t2.action]) continue;
      // (iii) `second` moves alone.
      builder.add_transition(s, map2[t2.action],
                             lift(make_point_distribution(s1), t2.distribution));
    }
  }

  for (StateId s = 0; s < components.size(); ++s) {
    for (const auto& l : first.labels(components[s].first)) builder.add_label(s, l);
    for (const auto& l : second.labels(components[s].second)) builder.add_label(s, l);
  }
  result.automaton = std::move(builder).build();
  return result;
}

ProbabilisticAutomaton rename_actions(const ProbabilisticAutomaton& pa,
                                      const std::function<std::string(std::string_view)>& rename) {
  PaBuilder builder;
  for (StateId s = 0; s < pa.state_count(); ++s) {
    builder.add_state(pa.state_name(s));
    for (const auto& l : pa.labels(s)) builder.add_label(s, l);
  }
  if (pa.initial()) builder.set_initial(*pa.initial());
  std::vector<ActionId> mapped(pa.action_count());
  for (ActionId a = 0; a < pa.action_count(); ++a)
    mapped[a] = builder.add_action(rename(pa.action_label(a)));
  builder.reserve_transitions(pa.transition_count());
  for (const auto& t : pa.transitions())
    builder.add_transition(t.source, mapped[t.action], t.distribution);
  return std::move(builder).build();
}

// --------------------------------------------------------------------- dump

void write_pa_dump(std::ostream& out, const ProbabilisticAutomaton& pa) {
  out << "# states " << pa.state_count() << '\n';
  if (pa.initial()) out << "# initial " << *pa.initial() << '\n';
  for (StateId s = 0; s < pa.state_count(); ++s)
    for (const auto& l : pa.labels(s)) out << "# label " << s << ' ' << l << '\n';
  for (const auto& t : pa.transitions()) {
    out << t.source << ' ' << pa.action_label(t.action);
    for (const auto& e : t.distribution.support())
      out << ' ' << format_exact(e.probability) << ':' << e.key;
    out << '\n';
  }
}

ProbabilisticAutomaton read_pa_dump(std::istream& in) {
  PaBuilder builder;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& why) {
    throw ValidationError("pa dump line " + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    if (line[0] == '#') {
      std::string hash, key;
      fields >> hash >> key;
      if (key == "states") {
        std::size_t n = 0;
        if (!(fields >> n)) fail("bad state count");
        builder.add_states(n);
      } else if (key == "initial") {
        StateId s = 0;
        if (!(fields >> s)) fail("bad initial state");
        builder.set_initial(s);
      } else if (key == "label") {
        StateId s = 0;
        std::string prop;
        if (!(fields >> s >> prop) || s >= builder.state_count()) fail("bad label");
        builder.add_label(s, prop);
      }
      continue;
    }
    StateId src = 0;
    std::string action;
    if (!(fields >> src >> action)) fail("expected `src action prob:dst ...`");
    std::vector<CategoricalDistribution::Entry> entries;
    std::string item;
    while (fields >> item) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) fail("expected prob:dst");
      char* end = nullptr;
      const double p = std::strtod(item.c_str(), &end);
      if (end != item.c_str() + colon) fail("bad probability");
      entries.push_back({std::stoul(item.substr(colon + 1)), p});
    }
    if (entries.empty()) fail("transition without successors");
    builder.add_transition(src, builder.add_action(action),
                           CategoricalDistribution(std::move(entries)));
  }
  return std::move(builder).build();
}

}  // namespace safemon
