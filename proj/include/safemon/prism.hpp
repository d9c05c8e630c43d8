#pragma once

#include <cstddef>
#include <string>

#include "safemon/automaton.hpp"
#include "safemon/model_check.hpp"

namespace safemon {

inline constexpr std::size_t kPrismTransitionLimit = 1'000'000;

/// PRISM-language MDP model plus a matching properties file.
struct PrismExport {
  std::string model;
  std::string properties;
};

/// Flat encoding: one module with a single state variable `s`, one guarded
/// command per transition, an `unsafe` label for the query's unsafe set and
/// self-loops on terminal states (PRISM rejects deadlocks). The properties
/// ask for the optimal bounded-invariance probability and its dual bounded
/// reachability. Throws ValidationError above kPrismTransitionLimit
/// transitions.
PrismExport export_prism(const ProbabilisticAutomaton& pa, const BoundedSafetyQuery& query);

}  // namespace safemon
