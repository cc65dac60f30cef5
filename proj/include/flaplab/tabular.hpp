#pragma once

// Tabular SARSA and Q-Learning over discretized state keys.
//
// Both learners play a whole episode with a frozen table, store every
// transition, and only then replay the memory through the update rule, either
// first-to-last (forward) or last-to-first (backward).

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "flaplab/env.hpp"
#include "flaplab/error.hpp"
#include "flaplab/features.hpp"
#include "flaplab/rng.hpp"

namespace flaplab {

enum class UpdateOrder { kForward, kBackward };

enum class TdRule { kQLearning, kSarsa };

inline const char* to_string(UpdateOrder o) {
  return o == UpdateOrder::kForward ? "forward" : "backward";
}

inline UpdateOrder parse_order(const std::string& s) {
  if (s == "forward") return UpdateOrder::kForward;
  if (s == "backward") return UpdateOrder::kBackward;
  throw ConfigError("update order must be 'forward' or 'backward', got '" + s + "'");
}

// Map (StateKey, Action) -> Q. Absent entries read as exactly 0.
class QTable {
 public:
  double get(const StateKey& s, Action a) const {
    auto it = rows_.find(s);
    if (it == rows_.end()) return 0.0;
    return it->second.q[action_code(a)];
  }

  std::array<double, kNumActions> row(const StateKey& s) const {
    auto it = rows_.find(s);
    if (it == rows_.end()) return {0.0, 0.0};
    return it->second.q;
  }

  double max_q(const StateKey& s) const {
    const auto r = row(s);
    return std::max(r[0], r[1]);
  }

  void set(const StateKey& s, Action a, double q) {
    Row& r = rows_[s];
    const auto bit = static_cast<std::uint8_t>(1u << action_code(a));
    if (!(r.present & bit)) {
      r.present |= bit;
      ++entries_;
    }
    r.q[action_code(a)] = q;
  }

  bool contains(const StateKey& s, Action a) const {
    auto it = rows_.find(s);
    return it != rows_.end() && (it->second.present & (1u << action_code(a)));
  }

  // Number of (key, action) entries written.
  std::size_t size() const noexcept { return entries_; }
  // Number of distinct keys with at least one entry.
  std::size_t state_count() const noexcept { return rows_.size(); }

  struct Entry {
    StateKey key;
    Action action;
    double q;
  };

  // All entries sorted by (key, action); stable across runs.
  std::vector<Entry> entries() const {
    std::vector<Entry> out;
    out.reserve(entries_);
    for (const auto& [k, r] : rows_) {
      for (int a = 0; a < kNumActions; ++a)
        if (r.present & (1u << a)) out.push_back({k, static_cast<Action>(a), r.q[a]});
    }
    std::sort(out.begin(), out.end(), [](const Entry& x, const Entry& y) {
      if (x.key != y.key) return x.key < y.key;
      return action_code(x.action) < action_code(y.action);
    });
    return out;
  }

 private:
  struct Row {
    std::array<double, kNumActions> q{0.0, 0.0};
    std::uint8_t present = 0;
  };
  std::unordered_map<StateKey, Row, StateKeyHash> rows_;
  std::size_t entries_ = 0;
};

struct Transition {
  StateKey s;
  Action a = Action::kNoFlap;
  double r = 0.0;
  StateKey s_next;
  std::optional<Action> a_next;
  bool terminal_next = false;
};

struct EpisodeMemory {
  std::vector<Transition> transitions;
  double episode_return = 0.0;
  int score = 0;
  bool crashed = false;
};

struct TabularConfig {
  TdRule rule = TdRule::kQLearning;
  double eta = 0.5;
  double gamma = 1.0;
  double epsilon = 0.0;
  UpdateOrder order = UpdateOrder::kBackward;
  int grid = 10;
};

inline void validate(const TabularConfig& c) {
  if (!(c.eta > 0.0 && c.eta <= 1.0)) throw ConfigError("eta must lie in (0, 1]");
  if (!(c.gamma >= 0.0 && c.gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (!(c.epsilon >= 0.0 && c.epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0, 1]");
  if (c.grid < 1) throw ConfigError("grid must be a positive integer");
}

// Greedy action with ties going to kNoFlap.
inline Action greedy_action(const QTable& q, const StateKey& s) {
  const auto r = q.row(s);
  return r[action_code(Action::kFlap)] > r[action_code(Action::kNoFlap)] ? Action::kFlap
                                                                         : Action::kNoFlap;
}

// Random-policy baseline: flap with probability p.
inline Action baseline_action(double p, Xorshift64Star& rng) {
  return rng.bernoulli(p) ? Action::kFlap : Action::kNoFlap;
}

inline Action select_action(const QTable& q, const StateKey& s, double epsilon,
                            Xorshift64Star& rng) {
  // epsilon == 0 draws nothing so greedy rollouts leave the generator untouched.
  if (epsilon > 0.0 && rng.bernoulli(epsilon)) return baseline_action(0.5, rng);
  return greedy_action(q, s);
}

// Plays one episode. `choose(key)` picks the action for a key; when
// `record_next_action` is set the action for s_{t+1} is chosen before the
// transition is stored and then executed on the following frame (SARSA
// ordering). The table is never touched here.
template <typename Chooser>
EpisodeMemory play_episode(const EnvConfig& env, std::uint64_t env_seed, int grid,
                           Chooser&& choose, bool record_next_action) {
  EpisodeMemory m;
  GameState state = reset(env, env_seed);
  StateKey key = state_key(observe(env, state), grid);
  Action action = choose(key);
  while (!state.terminal) {
    StepResult res = step(env, std::move(state), action);
    Transition t;
    t.s = key;
    t.a = action;
    t.r = res.reward;
    t.s_next = state_key(observe(env, res.state), grid);
    t.terminal_next = res.terminal;
    m.episode_return += res.reward;
    m.crashed = res.crashed;
    state = std::move(res.state);
    if (!state.terminal) {
      const Action next = choose(t.s_next);
      if (record_next_action) t.a_next = next;
      action = next;
    }
    key = t.s_next;
    m.transitions.push_back(t);
  }
  m.score = state.score;
  return m;
}

// Epsilon-greedy episode for the given rule. SARSA stores a_{t+1}.
inline EpisodeMemory run_episode(const EnvConfig& env, std::uint64_t env_seed, const QTable& q,
                                 const TabularConfig& cfg, Xorshift64Star& rng) {
  return play_episode(
      env, env_seed, cfg.grid,
      [&](const StateKey& k) { return select_action(q, k, cfg.epsilon, rng); },
      cfg.rule == TdRule::kSarsa);
}

// Q(s,a) <- (1-eta) Q(s,a) + eta (r + gamma max_a' Q(s',a')), zero bootstrap
// at terminal s'. Returns the new value.
inline double q_update(QTable& q, const Transition& t, double eta, double gamma) {
  const double bootstrap = t.terminal_next ? 0.0 : q.max_q(t.s_next);
  const double updated = (1.0 - eta) * q.get(t.s, t.a) + eta * (t.r + gamma * bootstrap);
  q.set(t.s, t.a, updated);
  return updated;
}

// Q(s,a) <- (1-eta) Q(s,a) + eta (r + gamma Q(s',a')) with a' the action
// actually taken.
inline double sarsa_update(QTable& q, const Transition& t, double eta, double gamma) {
  double bootstrap = 0.0;
  if (!t.terminal_next) {
    if (!t.a_next) throw UsageError("SARSA update needs a_next on a non-terminal transition");
    bootstrap = q.get(t.s_next, *t.a_next);
  }
  const double updated = (1.0 - eta) * q.get(t.s, t.a) + eta * (t.r + gamma * bootstrap);
  q.set(t.s, t.a, updated);
  return updated;
}

// Applies the configured rule once to every stored transition. Returns the
// number of updates performed.
inline std::size_t replay_episode(QTable& q, const EpisodeMemory& m, const TabularConfig& cfg) {
  auto apply = [&](const Transition& t) {
    if (cfg.rule == TdRule::kSarsa)
      sarsa_update(q, t, cfg.eta, cfg.gamma);
    else
      q_update(q, t, cfg.eta, cfg.gamma);
  };
  if (cfg.order == UpdateOrder::kForward) {
    for (const auto& t : m.transitions) apply(t);
  } else {
    for (auto it = m.transitions.rbegin(); it != m.transitions.rend(); ++it) apply(*it);
  }
  return m.transitions.size();
}

// Snapshot text format:
//   flaplab-qtable v1 grid <r> entries <n>
//   <gx> <gy> <v> <action> <q>      (n lines, sorted by key then action)
// q is written in shortest round-trip decimal form.

namespace detail {

inline std::string format_double(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

inline double parse_double(const std::string& tok) {
  double x = 0.0;
  auto [end, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), x);
  if (ec != std::errc() || end != tok.data() + tok.size())
    throw FormatError("not a number: '" + tok + "'");
  return x;
}

}  // namespace detail

inline void save_qtable(std::ostream& os, const QTable& q, int grid) {
  os << "flaplab-qtable v1 grid " << grid << " entries " << q.size() << '\n';
  for (const auto& e : q.entries()) {
    os << e.key.gx << ' ' << e.key.gy << ' ' << e.key.v << ' ' << action_code(e.action) << ' '
       << detail::format_double(e.q) << '\n';
  }
  if (!os) throw IoError("failed writing Q-table snapshot");
}

struct LoadedQTable {
  QTable table;
  int grid = 1;
};

inline LoadedQTable load_qtable(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("empty Q-table snapshot");
  std::istringstream header(line);
  std::string magic, version, grid_kw, entries_kw;
  long long grid = 0, n = -1;
  header >> magic >> version >> grid_kw >> grid >> entries_kw >> n;
  if (!header || magic != "flaplab-qtable" || version != "v1" || grid_kw != "grid" ||
      entries_kw != "entries" || grid < 1 || n < 0) {
    throw FormatError("bad Q-table snapshot header: '" + line + "'");
  }
  LoadedQTable out;
  out.grid = static_cast<int>(grid);
  for (long long i = 0; i < n; ++i) {
    if (!std::getline(is, line)) throw FormatError("Q-table snapshot truncated");
    std::istringstream row(line);
    int gx = 0, gy = 0, v = 0, a = 0;
    std::string qtok, extra;
    row >> gx >> gy >> v >> a >> qtok;
    if (!row || (row >> extra)) throw FormatError("bad Q-table row: '" + line + "'");
    if (a != 0 && a != 1) throw FormatError("bad action in Q-table row: '" + line + "'");
    StateKey k{gx, gy, v, out.grid};
    if (out.table.contains(k, static_cast<Action>(a)))
      throw FormatError("duplicate Q-table entry: '" + line + "'");
    out.table.set(k, static_cast<Action>(a), detail::parse_double(qtok));
  }
  return out;
}

}  // namespace flaplab
