#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "flaplab/env.hpp"
#include "flaplab/features.hpp"
#include "flaplab/tabular.hpp"

using namespace flaplab;

namespace {

const StateKey kS1{10, 20, 0, 10};
const StateKey kS2{30, 40, 1, 10};
const StateKey kS3{50, 60, 2, 10};

Transition make(StateKey s, Action a, double r, StateKey s2, bool terminal,
                std::optional<Action> a2 = std::nullopt) {
  Transition t;
  t.s = s;
  t.a = a;
  t.r = r;
  t.s_next = s2;
  t.terminal_next = terminal;
  t.a_next = a2;
  return t;
}

// r1 = 0.5 then a crash; SARSA records the action taken in s2.
EpisodeMemory two_step_episode() {
  EpisodeMemory m;
  m.transitions.push_back(make(kS1, Action::kNoFlap, 0.5, kS2, false, Action::kFlap));
  m.transitions.push_back(make(kS2, Action::kFlap, -1000.0, kS3, true));
  return m;
}

TabularConfig sarsa_cfg(UpdateOrder order, double eta = 0.5) {
  TabularConfig c;
  c.rule = TdRule::kSarsa;
  c.eta = eta;
  c.gamma = 1.0;
  c.order = order;
  return c;
}

}  // namespace

TEST(GreedyTest, PicksArgmaxAndBreaksTiesTowardNoFlap) {
  QTable q;
  Xorshift64Star rng(1);
  q.set(kS1, Action::kFlap, 2.0);
  q.set(kS1, Action::kNoFlap, 1.0);
  EXPECT_EQ(select_action(q, kS1, 0.0, rng), Action::kFlap);
  EXPECT_EQ(select_action(q, kS2, 0.0, rng), Action::kNoFlap);
  q.set(kS3, Action::kFlap, -3.0);
  q.set(kS3, Action::kNoFlap, -3.0);
  EXPECT_EQ(greedy_action(q, kS3), Action::kNoFlap);
}

TEST(SelectActionTest, GreedyDrawsNothingFromGenerator) {
  QTable q;
  Xorshift64Star rng(9);
  const Xorshift64Star before = rng;
  for (int i = 0; i < 100; ++i) select_action(q, kS1, 0.0, rng);
  EXPECT_EQ(rng, before);
}

TEST(SelectActionTest, FullExplorationIsFair) {
  QTable q;
  q.set(kS1, Action::kNoFlap, 100.0);
  Xorshift64Star rng(12345);
  int flaps = 0;
  for (int i = 0; i < 10000; ++i) flaps += select_action(q, kS1, 1.0, rng) == Action::kFlap;
  EXPECT_GE(flaps / 10000.0, 0.47);
  EXPECT_LE(flaps / 10000.0, 0.53);
}

TEST(BaselineTest, DegenerateAndFairProbabilities) {
  Xorshift64Star rng(3);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_EQ(baseline_action(1.0, rng), Action::kFlap);
    EXPECT_EQ(baseline_action(0.0, rng), Action::kNoFlap);
  }
  int flaps = 0;
  for (int i = 0; i < 10000; ++i) flaps += baseline_action(0.5, rng) == Action::kFlap;
  EXPECT_GE(flaps / 10000.0, 0.47);
  EXPECT_LE(flaps / 10000.0, 0.53);
}

TEST(EpisodeTest, DeterministicAndOneTransitionPerFrame) {
  const EnvConfig env;
  const QTable q;
  TabularConfig cfg;
  Xorshift64Star r1(4), r2(4);
  const EpisodeMemory a = run_episode(env, 77, q, cfg, r1);
  const EpisodeMemory b = run_episode(env, 77, q, cfg, r2);
  ASSERT_EQ(a.transitions.size(), b.transitions.size());
  for (std::size_t i = 0; i < a.transitions.size(); ++i) {
    EXPECT_EQ(a.transitions[i].s, b.transitions[i].s);
    EXPECT_EQ(a.transitions[i].a, b.transitions[i].a);
  }

  GameState s = reset(env, 77);
  std::size_t frames = 0;
  while (!s.terminal) {
    s = step(env, s, Action::kNoFlap).state;
    ++frames;
  }
  EXPECT_EQ(a.transitions.size(), frames);
  EXPECT_TRUE(a.crashed);
  EXPECT_EQ(a.transitions.back().r, -1000.0);
  EXPECT_TRUE(a.transitions.back().terminal_next);
  for (std::size_t i = 0; i + 1 < a.transitions.size(); ++i) {
    EXPECT_FALSE(a.transitions[i].terminal_next);
    EXPECT_EQ(a.transitions[i].s_next, a.transitions[i + 1].s);
  }
}

TEST(EpisodeTest, SarsaRecordsTheActionActuallyTaken) {
  const EnvConfig env;
  const QTable q;
  TabularConfig cfg;
  cfg.rule = TdRule::kSarsa;
  cfg.epsilon = 0.5;
  Xorshift64Star rng(8);
  const EpisodeMemory m = run_episode(env, 5, q, cfg, rng);
  for (std::size_t i = 0; i + 1 < m.transitions.size(); ++i) {
    ASSERT_TRUE(m.transitions[i].a_next.has_value());
    EXPECT_EQ(*m.transitions[i].a_next, m.transitions[i + 1].a);
  }
  EXPECT_FALSE(m.transitions.back().a_next.has_value());
}

TEST(QUpdateTest, HandExamples) {
  QTable q;
  EXPECT_DOUBLE_EQ(q_update(q, make(kS1, Action::kFlap, -1000.0, kS2, true), 0.1, 1.0), -100.0);
  EXPECT_EQ(q.get(kS1, Action::kFlap), -100.0);

  QTable e1;
  e1.set(kS2, Action::kFlap, 4.0);
  e1.set(kS2, Action::kNoFlap, 7.0);
  e1.set(kS1, Action::kNoFlap, 123.0);
  EXPECT_EQ(q_update(e1, make(kS1, Action::kNoFlap, 0.5, kS2, false), 1.0, 0.9), 0.5 + 0.9 * 7.0);

  QTable g0;
  g0.set(kS1, Action::kFlap, 10.0);
  g0.set(kS2, Action::kFlap, 1e6);
  EXPECT_DOUBLE_EQ(q_update(g0, make(kS1, Action::kFlap, 5.0, kS2, false), 0.3, 0.0),
                   0.7 * 10.0 + 0.3 * 5.0);
}

TEST(QUpdateTest, AbsentKeysBehaveLikeZeroInitialisedKeys) {
  QTable fresh, explicit_zero;
  explicit_zero.set(kS1, Action::kFlap, 0.0);
  explicit_zero.set(kS1, Action::kNoFlap, 0.0);
  explicit_zero.set(kS2, Action::kFlap, 0.0);
  explicit_zero.set(kS2, Action::kNoFlap, 0.0);
  const Transition t = make(kS1, Action::kFlap, 0.5, kS2, false);
  EXPECT_EQ(q_update(fresh, t, 0.4, 1.0), q_update(explicit_zero, t, 0.4, 1.0));
  EXPECT_EQ(fresh.get(kS3, Action::kFlap), 0.0);
  EXPECT_FALSE(fresh.contains(kS3, Action::kFlap));
}

TEST(SarsaUpdateTest, HandExamples) {
  QTable q;
  EXPECT_EQ(sarsa_update(q, make(kS2, Action::kFlap, -1000.0, kS3, true), 0.5, 1.0), -500.0);
  EXPECT_EQ(sarsa_update(q, make(kS1, Action::kNoFlap, 0.5, kS2, false, Action::kFlap), 0.5, 1.0),
            -249.75);

  QTable t;
  t.set(kS2, Action::kFlap, -8.0);
  t.set(kS2, Action::kNoFlap, 100.0);  // SARSA ignores the better action
  EXPECT_EQ(sarsa_update(t, make(kS1, Action::kFlap, 2.0, kS2, false, Action::kFlap), 1.0, 1.0),
            -6.0);
  EXPECT_EQ(sarsa_update(t, make(kS1, Action::kFlap, 3.0, kS2, true), 1.0, 1.0), 3.0);
}

TEST(SarsaUpdateTest, MissingNextActionIsAUsageError) {
  QTable q;
  EXPECT_THROW(sarsa_update(q, make(kS1, Action::kFlap, 0.5, kS2, false), 0.5, 1.0), UsageError);
}

TEST(ReplayTest, TwoStepBackwardPropagatesPenalty) {
  QTable q;
  EXPECT_EQ(replay_episode(q, two_step_episode(), sarsa_cfg(UpdateOrder::kBackward)), 2u);
  EXPECT_EQ(q.get(kS2, Action::kFlap), -500.0);
  EXPECT_EQ(q.get(kS1, Action::kNoFlap), -249.75);
}

TEST(ReplayTest, TwoStepForwardDoesNotYetPropagate) {
  QTable q;
  replay_episode(q, two_step_episode(), sarsa_cfg(UpdateOrder::kForward));
  EXPECT_EQ(q.get(kS1, Action::kNoFlap), 0.25);
  EXPECT_EQ(q.get(kS2, Action::kFlap), -500.0);
}

TEST(ReplayTest, SingleTransitionOrderIsIrrelevant) {
  EpisodeMemory m;
  m.transitions.push_back(make(kS1, Action::kFlap, -1000.0, kS2, true));
  QTable f, b;
  replay_episode(f, m, sarsa_cfg(UpdateOrder::kForward, 0.3));
  replay_episode(b, m, sarsa_cfg(UpdateOrder::kBackward, 0.3));
  EXPECT_EQ(f.get(kS1, Action::kFlap), b.get(kS1, Action::kFlap));
}

TEST(ReplayTest, BackwardReachesFirstStateForwardDoesNot) {
  // Two episodes differing only in the final reward: the first state's value
  // after one backward pass depends on it, after one forward pass it does not.
  auto chain = [](int n, double final_reward) {
    EpisodeMemory m;
    for (int i = 0; i < n; ++i) {
      const bool last = i == n - 1;
      m.transitions.push_back(make(StateKey{i, 0, 0, 1}, Action::kNoFlap, last ? final_reward : 0.5,
                                   StateKey{i + 1, 0, 0, 1}, last,
                                   last ? std::nullopt : std::optional(Action::kNoFlap)));
    }
    return m;
  };
  const StateKey first{0, 0, 0, 1};
  for (double eta : {0.05, 0.3, 1.0}) {
    for (int n : {2, 5, 12}) {
      QTable back, back_alt, fwd, fwd_alt;
      replay_episode(back, chain(n, -1000.0), sarsa_cfg(UpdateOrder::kBackward, eta));
      replay_episode(back_alt, chain(n, 0.5), sarsa_cfg(UpdateOrder::kBackward, eta));
      replay_episode(fwd, chain(n, -1000.0), sarsa_cfg(UpdateOrder::kForward, eta));
      replay_episode(fwd_alt, chain(n, 0.5), sarsa_cfg(UpdateOrder::kForward, eta));
      EXPECT_NE(back.get(first, Action::kNoFlap), 0.0);
      EXPECT_LT(back.get(first, Action::kNoFlap), back_alt.get(first, Action::kNoFlap));
      EXPECT_EQ(fwd.get(first, Action::kNoFlap), eta * 0.5);
      EXPECT_EQ(fwd.get(first, Action::kNoFlap), fwd_alt.get(first, Action::kNoFlap));
    }
  }
}

TEST(ReplayTest, RandomInstancesMatchArithmeticOracle) {
  Xorshift64Star rng(31337);
  for (int i = 0; i < 10000; ++i) {
    QTable q;
    const StateKey s{static_cast<int>(rng.uniform_int(0, 3)), 0, 0, 1};
    const StateKey s2{static_cast<int>(rng.uniform_int(0, 3)), 1, 0, 1};
    const double q_sa = rng.uniform(-1000, 1000), q_n0 = rng.uniform(-1000, 1000),
                 q_n1 = rng.uniform(-1000, 1000);
    const Action a = rng.bernoulli(0.5) ? Action::kFlap : Action::kNoFlap;
    const Action a2 = rng.bernoulli(0.5) ? Action::kFlap : Action::kNoFlap;
    q.set(s2, Action::kFlap, q_n0);
    q.set(s2, Action::kNoFlap, q_n1);
    q.set(s, a, q_sa);
    const double r = rng.uniform(-1000, 10);
    const double eta = rng.uniform(1e-3, 1.0), gamma = rng.uniform(0.0, 1.0);
    const bool terminal = rng.bernoulli(0.2);
    const Transition t = make(s, a, r, s2, terminal, a2);
    const QTable snapshot = q;

    const double old = q.get(s, a);  // s may alias s2
    const double boot_q = terminal ? 0.0 : std::max(q.get(s2, Action::kFlap), q.get(s2, Action::kNoFlap));
    const double expect_q = old + eta * (r + gamma * boot_q - old);
    const double boot_s = terminal ? 0.0 : q.get(s2, a2);
    const double expect_s = old + eta * (r + gamma * boot_s - old);

    QTable qa = snapshot, qs = snapshot;
    ASSERT_NEAR(q_update(qa, t, eta, gamma), expect_q, 1e-12 * std::max(1.0, std::abs(expect_q)));
    ASSERT_NEAR(sarsa_update(qs, t, eta, gamma), expect_s, 1e-12 * std::max(1.0, std::abs(expect_s)));
  }
}

TEST(TrainingLoopTest, GreedyReplayIsReproducible) {
  const EnvConfig env;
  TabularConfig cfg;
  auto run = [&] {
    QTable q;
    Xorshift64Star rng(1);
    std::vector<std::size_t> lengths;
    for (std::uint64_t ep = 0; ep < 50; ++ep) {
      const EpisodeMemory m = run_episode(env, ep, q, cfg, rng);
      replay_episode(q, m, cfg);
      lengths.push_back(m.transitions.size());
    }
    std::ostringstream os;
    save_qtable(os, q, cfg.grid);
    return std::make_pair(lengths, os.str());
  };
  EXPECT_EQ(run(), run());
}

TEST(TrainingLoopTest, TableStaysWithinKeySpaceBound) {
  const EnvConfig env;
  TabularConfig cfg;
  cfg.epsilon = 1.0;  // fixed random behaviour policy
  QTable q;
  Xorshift64Star rng(6);
  for (std::uint64_t ep = 0; ep < 10000; ++ep) replay_episode(q, run_episode(env, ep, q, cfg, rng), cfg);
  const std::size_t bound = key_space_bound(env, cfg.grid);
  EXPECT_LE(q.state_count(), bound);
  EXPECT_LE(q.size(), 2 * bound);
  EXPECT_GT(q.size(), 0u);
}

TEST(ConfigTest, Validation) {
  TabularConfig c;
  EXPECT_NO_THROW(validate(c));
  c.eta = 0.0;
  EXPECT_THROW(validate(c), ConfigError);
  c = {};
  c.epsilon = 1.5;
  EXPECT_THROW(validate(c), ConfigError);
  c = {};
  c.gamma = -0.1;
  EXPECT_THROW(validate(c), ConfigError);
  c = {};
  c.grid = 0;
  EXPECT_THROW(validate(c), ConfigError);
  EXPECT_EQ(parse_order("forward"), UpdateOrder::kForward);
  EXPECT_EQ(parse_order("backward"), UpdateOrder::kBackward);
  EXPECT_THROW(parse_order("sideways"), ConfigError);
}

TEST(SnapshotTest, RoundTripIsExact) {
  QTable q;
  Xorshift64Star rng(2);
  for (int i = 0; i < 500; ++i) {
    const StateKey k{static_cast<int>(rng.uniform_int(0, 28)) * 10,
                     static_cast<int>(rng.uniform_int(-50, 50)) * 10,
                     static_cast<int>(rng.uniform_int(-9, 6)), 10};
    q.set(k, rng.bernoulli(0.5) ? Action::kFlap : Action::kNoFlap, rng.uniform(-1000, 1000) / 3.0);
  }
  std::stringstream ss;
  save_qtable(ss, q, 10);
  const std::string text = ss.str();
  const LoadedQTable loaded = load_qtable(ss);
  EXPECT_EQ(loaded.grid, 10);
  ASSERT_EQ(loaded.table.size(), q.size());
  for (const auto& e : q.entries()) EXPECT_EQ(loaded.table.get(e.key, e.action), e.q);
  std::ostringstream again;
  save_qtable(again, loaded.table, loaded.grid);
  EXPECT_EQ(again.str(), text);
}

TEST(SnapshotTest, MalformedInputIsAFormatError) {
  auto load = [](const std::string& text) {
    std::istringstream is(text);
    return load_qtable(is);
  };
  EXPECT_THROW(load(""), FormatError);
  EXPECT_THROW(load("garbage\n"), FormatError);
  EXPECT_THROW(load("flaplab-qtable v1 grid 10 entries 2\n0 0 0 1 1.5\n"), FormatError);
  EXPECT_THROW(load("flaplab-qtable v1 grid 10 entries 1\n0 0 0 7 1.5\n"), FormatError);
  EXPECT_THROW(load("flaplab-qtable v1 grid 10 entries 1\n0 0 0 1 abc\n"), FormatError);
  EXPECT_THROW(load("flaplab-qtable v1 grid 10 entries 2\n0 0 0 1 1\n0 0 0 1 2\n"), FormatError);
  EXPECT_NO_THROW(load("flaplab-qtable v1 grid 10 entries 0\n"));
}
