#include "safemon/model_check.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include <Eigen/SparseCore>

namespace safemon {

std::string to_string(OptimizationMode mode) {
  return mode == OptimizationMode::Min ? "min" : "max";
}

OptimizationMode parse_mode(const std::string& text) {
  if (text == "min") return OptimizationMode::Min;
  if (text == "max") return OptimizationMode::Max;
  throw ValidationError("unknown optimisation mode `" + text + "` (expected min or max)");
}

SafetyTable::SafetyTable(std::vector<Entry> entries, std::size_t horizon, OptimizationMode mode)
    : entries_(std::move(entries)), horizon_(horizon), mode_(mode) {
  std::sort(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) {
    return a.state != b.state ? a.state < b.state : a.action < b.action;
  });
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (!(e.probability >= 0.0 && e.probability <= 1.0))
      throw ValidationError("safety table probability outside [0,1]");
    if (i > 0 && entries_[i - 1].state == e.state && entries_[i - 1].action == e.action)
      throw ValidationError("duplicate safety table entry");
  }
}

std::optional<double> SafetyTable::lookup(std::size_t state, std::size_t action) const {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), std::pair{state, action},
                             [](const Entry& e, const std::pair<std::size_t, std::size_t>& k) {
                               return e.state != k.first ? e.state < k.first : e.action < k.second;
                             });
  if (it == entries_.end() || it->state != state || it->action != action) return std::nullopt;
  return it->probability;
}

namespace {

std::vector<bool> unsafe_mask(const ProbabilisticAutomaton& pa, const BoundedSafetyQuery& q) {
  if (q.horizon > kMaxHorizon) throw ValidationError("horizon exceeds " + std::to_string(kMaxHorizon));
  std::vector<bool> unsafe(pa.state_count(), false);
  for (StateId s : q.unsafe) {
    if (s >= pa.state_count()) throw ValidationError("unsafe set references unknown state");
    unsafe[s] = true;
  }
  return unsafe;
}

double better(OptimizationMode mode, double a, double b) {
  return mode == OptimizationMode::Min ? std::min(a, b) : std::max(a, b);
}

double worst_start(OptimizationMode mode) {
  return mode == OptimizationMode::Min ? std::numeric_limits<double>::infinity()
                                       : -std::numeric_limits<double>::infinity();
}

using RowMajorMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

RowMajorMatrix transition_matrix(const ProbabilisticAutomaton& pa) {
  std::vector<Eigen::Triplet<double>> triplets;
  for (std::size_t row = 0; row < pa.transition_count(); ++row)
    for (const auto& e : pa.transitions()[row].distribution.support())
      triplets.emplace_back(static_cast<int>(row), static_cast<int>(e.key), e.probability);
  RowMajorMatrix p(static_cast<Eigen::Index>(pa.transition_count()),
                   static_cast<Eigen::Index>(pa.state_count()));
  p.setFromTriplets(triplets.begin(), triplets.end());
  return p;
}

// Expected continuation value of every transition under `values`, with
// rounding excursions past [0, 1] cut off.
Eigen::VectorXd continuation(const RowMajorMatrix& p, const Eigen::VectorXd& values, unsigned jobs) {
  Eigen::VectorXd q(p.rows());
  parallel_for_chunks(static_cast<std::size_t>(p.rows()), jobs, [&](std::size_t b, std::size_t e) {
    const auto begin = static_cast<Eigen::Index>(b);
    const auto len = static_cast<Eigen::Index>(e - b);
    q.segment(begin, len).noalias() = p.middleRows(begin, len) * values;
    q.segment(begin, len) = q.segment(begin, len).cwiseMax(0.0).cwiseMin(1.0);
  });
  return q;
}

}  // namespace

SafetyTable check_bounded_safety(const ProbabilisticAutomaton& pa, const BoundedSafetyQuery& query,
                                 unsigned jobs) {
  const auto unsafe = unsafe_mask(pa, query);
  const auto n = static_cast<Eigen::Index>(pa.state_count());
  const RowMajorMatrix p = transition_matrix(pa);

  Eigen::VectorXd values(n);
  for (Eigen::Index s = 0; s < n; ++s) values[s] = unsafe[static_cast<std::size_t>(s)] ? 0.0 : 1.0;

  auto sweep = [&](const Eigen::VectorXd& q) {
    Eigen::VectorXd next(n);
    parallel_for_chunks(pa.state_count(), jobs, [&](std::size_t b, std::size_t e) {
      for (std::size_t s = b; s < e; ++s) {
        const std::size_t first = pa.first_transition(s);
        const std::size_t count = pa.outgoing(s).size();
        if (unsafe[s]) {
          next[static_cast<Eigen::Index>(s)] = 0.0;
        } else if (count == 0) {
          next[static_cast<Eigen::Index>(s)] = 1.0;
        } else {
          double v = worst_start(query.mode);
          for (std::size_t t = first; t < first + count; ++t)
            v = better(query.mode, v, q[static_cast<Eigen::Index>(t)]);
          next[static_cast<Eigen::Index>(s)] = v;
        }
      }
    });
    return next;
  };

  for (std::size_t k = 1; k < query.horizon; ++k) values = sweep(continuation(p, values, jobs));

  std::vector<SafetyTable::Entry> entries;
  Eigen::VectorXd final_values = values;
  if (query.horizon == 0) {
    for (StateId s = 0; s < pa.state_count(); ++s) {
      const auto out = pa.outgoing(s);
      for (std::size_t i = 0; i < out.size(); ++i)
        if (i == 0 || out[i].action != out[i - 1].action)
          entries.push_back({s, out[i].action, values[static_cast<Eigen::Index>(s)]});
    }
  } else {
    const Eigen::VectorXd q = continuation(p, values, jobs);
    for (StateId s = 0; s < pa.state_count(); ++s) {
      const std::size_t first = pa.first_transition(s);
      const auto out = pa.outgoing(s);
      for (std::size_t i = 0; i < out.size();) {
        const ActionId a = out[i].action;
        double v = worst_start(query.mode);
        for (; i < out.size() && out[i].action == a; ++i)
          v = better(query.mode, v, q[static_cast<Eigen::Index>(first + i)]);
        entries.push_back({s, a, unsafe[s] ? 0.0 : v});
      }
    }
    final_values = sweep(q);
  }
  SafetyTable table(std::move(entries), query.horizon, query.mode);
  table.set_state_values(std::move(final_values));
  return table;
}

// ------------------------------------------------------------ brute force

namespace {

struct Enumerator {
  const ProbabilisticAutomaton& pa;
  const std::vector<bool>& unsafe;
  OptimizationMode mode;
  std::size_t horizon;
  std::optional<ActionId> first_action;
  double budget = kBruteForceLimit;

  // Choices available to `s` at step `k`, as indices into outgoing(s).
  std::vector<std::size_t> options(StateId s, std::size_t k) const {
    std::vector<std::size_t> idx;
    const auto out = pa.outgoing(s);
    for (std::size_t i = 0; i < out.size(); ++i)
      if (k > 0 || !first_action || out[i].action == *first_action) idx.push_back(i);
    return idx;
  }

  // `mass[s]`: probability of the safe path prefixes of length k ending in s.
  // `done`: mass of safe prefixes that reached a terminal state.
  double run(std::size_t k, const std::vector<double>& mass, double done) {
    if (k == horizon) {
      double total = done;
      for (double m : mass) total += m;
      return total;
    }
    std::vector<StateId> deciding;
    std::vector<std::vector<std::size_t>> choices;
    double finished = done;
    for (StateId s = 0; s < mass.size(); ++s) {
      if (mass[s] == 0.0) continue;
      if (pa.is_terminal(s)) {
        finished += mass[s];
        continue;
      }
      deciding.push_back(s);
      choices.push_back(options(s, k));
      if (choices.back().empty())
        throw ValidationError("brute force: first action not available in initial state");
    }
    // Enumerate the cartesian product of per-state choices: one scheduler
    // slice for step k.
    std::vector<std::size_t> pick(deciding.size(), 0);
    double best = worst_start(mode);
    while (true) {
      budget -= 1.0 + static_cast<double>(deciding.size());
      if (budget < 0) throw ValidationError("brute force: instance too large");
      std::vector<double> next(mass.size(), 0.0);
      for (std::size_t i = 0; i < deciding.size(); ++i) {
        const StateId s = deciding[i];
        const auto& t = pa.outgoing(s)[choices[i][pick[i]]];
        for (const auto& e : t.distribution.support())
          if (!unsafe[e.key]) next[e.key] += mass[s] * e.probability;
      }
      best = better(mode, best, run(k + 1, next, finished));
      std::size_t d = 0;
      while (d < pick.size() && ++pick[d] == choices[d].size()) pick[d++] = 0;
      if (d == pick.size()) break;
    }
    return best;
  }
};

}  // namespace

double brute_force_safety(const ProbabilisticAutomaton& pa, const BoundedSafetyQuery& query,
                          StateId initial, std::optional<ActionId> first_action) {
  const auto unsafe = unsafe_mask(pa, query);
  if (initial >= pa.state_count()) throw ValidationError("initial state out of range");
  if (unsafe[initial]) return 0.0;
  if (query.horizon == 0) return 1.0;
  if (pa.is_terminal(initial)) {
    if (first_action) throw ValidationError("brute force: first action not available in initial state");
    return 1.0;
  }
  std::vector<double> mass(pa.state_count(), 0.0);
  mass[initial] = 1.0;
  Enumerator en{pa, unsafe, query.mode, query.horizon, first_action};
  return en.run(0, mass, 0.0);
}

// -------------------------------------------------------------------- I/O

void write_safety_table_csv(const std::filesystem::path& path, const SafetyTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "state_index,action_index,probability\n";
  for (const auto& e : table.entries())
    out << e.state << ',' << e.action << ',' << format_exact(e.probability) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_safety_table_sidecar(const std::filesystem::path& path, const SafetyTable& table,
                                const nlohmann::json& metadata) {
  nlohmann::json j = metadata;
  j["horizon"] = table.horizon();
  j["mode"] = to_string(table.mode());
  j["entries"] = table.size();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

SafetyTable read_safety_table(const std::filesystem::path& csv,
                              const std::optional<std::filesystem::path>& sidecar) {
  std::ifstream in(csv, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + csv.string());
  std::string line;
  if (!std::getline(in, line) || line != "state_index,action_index,probability")
    throw ValidationError(csv.string() + ": unexpected safety table header");
  std::vector<SafetyTable::Entry> entries;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw ValidationError(csv.string() + ":" + std::to_string(line_no) + ": malformed row");
    SafetyTable::Entry e{};
    e.state = std::stoul(line.substr(0, c1));
    e.action = std::stoul(line.substr(c1 + 1, c2 - c1 - 1));
    e.probability = std::strtod(line.c_str() + c2 + 1, nullptr);
    entries.push_back(e);
  }
  std::size_t horizon = 0;
  OptimizationMode mode = OptimizationMode::Min;
  if (sidecar) {
    std::ifstream side(*sidecar);
    if (!side) throw std::runtime_error("cannot read " + sidecar->string());
    const auto j = nlohmann::json::parse(side);
    horizon = j.at("horizon").get<std::size_t>();
    mode = parse_mode(j.at("mode").get<std::string>());
  }
  return SafetyTable(std::move(entries), horizon, mode);
}

}  // namespace safemon
