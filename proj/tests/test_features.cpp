#include <gtest/gtest.h>

#include <cmath>
#include <unordered_set>

#include "flaplab/env.hpp"
#include "flaplab/features.hpp"
#include "flaplab/tabular.hpp"

using namespace flaplab;

namespace {

// Independent oracle: walk down to the nearest multiple of r at or below n.
int floor_multiple(int n, int r) {
  int m = 0;
  if (n >= 0) {
    while (m + r <= n) m += r;
  } else {
    while (m > n) m -= r;
  }
  return m;
}

}  // namespace

TEST(ObserveTest, BirdAtGapBottomGivesZeroYDiff) {
  const EnvConfig c;
  GameState s = reset(c, 1);
  s.bird_y = s.pipes[0].gap_bottom_y;
  EXPECT_EQ(observe(c, s).y_diff, 0);
}

TEST(ObserveTest, XDiffIsDistanceToNextPipe) {
  const EnvConfig c;
  GameState s = reset(c, 1);
  s.pipes[0].x = c.bird_x + 100;
  EXPECT_EQ(observe(c, s).x_diff, 100);
  s.pipes[0].x = c.bird_x - 20;  // overlapping but not yet passed
  EXPECT_EQ(observe(c, s).x_diff, 0);
}

TEST(ObserveTest, YDiffPositiveWhenGapEdgeIsBelow) {
  const EnvConfig c;
  GameState s = reset(c, 1);
  s.bird_y = s.pipes[0].gap_bottom_y - 30;
  s.bird_vel = -4;
  const Observation o = observe(c, s);
  EXPECT_EQ(o.y_diff, 30);
  EXPECT_EQ(o.y_vel, -4);
}

TEST(ObserveTest, SwitchesToNextPipeOnTheScoringFrame) {
  const EnvConfig c;
  GameState s = reset(c, 1);
  s.bird_y = s.pipes[0].gap_bottom_y - 40;
  for (auto& p : s.pipes) {  // widen both gaps so any hover clears them
    p.gap_top_y = 20;
    p.gap_bottom_y = c.screen_height - 20;
  }
  int last_x = observe(c, s).x_diff;
  while (!s.terminal) {
    const StepResult r = step(c, s, s.bird_y > 250 ? Action::kFlap : Action::kNoFlap);
    s = r.state;
    const int x = observe(c, s).x_diff;
    if (r.pipe_passed) {
      // The old target sat on the bird (x_diff clamped to 0); the new one is
      // a pipe spacing behind the old pipe's left edge.
      EXPECT_EQ(last_x, 0);
      EXPECT_EQ(x, s.pipes[0].x + c.pipe_spacing - c.bird_x);
      EXPECT_GT(x, c.pipe_spacing / 2);
      return;
    }
    last_x = x;
  }
  FAIL() << "never passed a pipe";
}

TEST(DiscretizeTest, Examples) {
  EXPECT_EQ(discretize(157, 10), 150);
  EXPECT_EQ(discretize(-7, 10), -10);
  EXPECT_EQ(discretize(-10, 10), -10);
  EXPECT_EQ(discretize(0, 50), 0);
  static_assert(discretize(99, 100) == 0);
}

TEST(DiscretizeTest, IdentityGrid) {
  for (int n = -600; n <= 600; ++n) EXPECT_EQ(discretize(n, 1), n);
}

TEST(DiscretizeTest, MatchesBruteForce) {
  for (int r : {1, 5, 10, 20, 50, 100})
    for (int n = -512; n <= 512; ++n) ASSERT_EQ(discretize(n, r), floor_multiple(n, r)) << n << ' ' << r;
}

TEST(DiscretizeTest, IdempotentAndCellMembership) {
  for (int r : {1, 3, 5, 10, 20, 50, 100}) {
    for (int n = -1024; n <= 1024; ++n) {
      const int d = discretize(n, r);
      EXPECT_EQ(discretize(d, r), d);
      EXPECT_LE(d, n);
      EXPECT_LT(n, d + r);
    }
  }
}

TEST(DiscretizeTest, RejectsNonPositiveGrid) {
  EXPECT_THROW(discretize(5, 0), DomainError);
  EXPECT_THROW(discretize(5, -10), DomainError);
}

TEST(StateKeyTest, Examples) {
  EXPECT_EQ(state_key(Observation{157, -7, 3}, 10), (StateKey{150, -10, 3, 10}));
  const Observation o{123, -45, -9};
  EXPECT_EQ(state_key(o, 1), (StateKey{123, -45, -9, 1}));
}

TEST(StateKeyTest, SameCellSameKey) {
  EXPECT_EQ(state_key(Observation{151, 22, 2}, 10), state_key(Observation{159, 29, 2}, 10));
  EXPECT_NE(state_key(Observation{151, 22, 2}, 10), state_key(Observation{151, 22, 3}, 10));
}

TEST(PreprocessTest, ZeroFrameGivesZeroImage) {
  const EnvConfig c;
  const GrayImage frame(c.screen_width, c.screen_height);
  const auto out = preprocess(frame, c);
  ASSERT_EQ(out.size(), 80u * 80u);
  for (double v : out) EXPECT_EQ(v, 0.0);
}

TEST(PreprocessTest, FullIntensityMapsToOne) {
  const EnvConfig c;
  GrayImage frame(c.screen_width, c.screen_height);
  std::fill(frame.pixels.begin(), frame.pixels.end(), 255);
  for (double v : preprocess(frame, c)) EXPECT_EQ(v, 1.0);
}

TEST(PreprocessTest, RejectsWrongDimensions) {
  const EnvConfig c;
  EXPECT_THROW(preprocess(GrayImage(100, 100), c), DomainError);
}

TEST(PreprocessTest, DeterministicPerState) {
  const EnvConfig c;
  GameState s = reset(c, 8);
  for (int i = 0; i < 40; ++i) s = step(c, s, i % 9 == 0 ? Action::kFlap : Action::kNoFlap).state;
  const CnnInput a = cnn_input(c, s);
  const CnnInput b = cnn_input(c, s);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.y_vel, s.bird_vel);
  double lit = 0.0;
  for (double v : a.image) lit += v;
  EXPECT_GT(lit, 0.0);
}

TEST(KeySpaceTest, BoundValue) {
  const EnvConfig c;
  // ceil(288/10 + 1) * ceil(1024/10 + 1) * 16
  const auto expected = static_cast<std::size_t>(std::ceil(288.0 / 10 + 1) *
                                                 std::ceil(1024.0 / 10 + 1) * 16);
  EXPECT_LE(key_space_bound(c, 10), expected);
  EXPECT_EQ(key_space_bound(c, 10), 30u * 104u * 16u);
}

TEST(KeySpaceTest, FuzzedKeysStayWithinBound) {
  const EnvConfig c;
  const int r = 10;
  const auto bound = static_cast<std::size_t>(std::ceil(288.0 / r + 1) *
                                              std::ceil(1024.0 / r + 1) * 16);
  std::unordered_set<StateKey, StateKeyHash> keys;
  Xorshift64Star rng(2024);
  for (std::uint64_t ep = 0; ep < 10000; ++ep) {
    // Mix of flap rates so both climbing and falling regions are visited.
    const double p = 0.02 + 0.2 * static_cast<double>(ep % 10) / 10.0;
    GameState s = reset(c, ep);
    keys.insert(state_key(observe(c, s), r));
    while (!s.terminal) {
      s = step(c, s, baseline_action(p, rng)).state;
      keys.insert(state_key(observe(c, s), r));
    }
  }
  EXPECT_GT(keys.size(), 100u);
  EXPECT_LE(keys.size(), bound);
}
