#pragma once

// Headless Flappy Bird.
//
// Integer pixel physics, one call to step() per frame. Coordinates are
// screen pixels with the origin at the top-left and y growing downward.
// bird_y is the vertical center of the bird's square hitbox; the bird sits in
// the fixed column bird_x.

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "flaplab/error.hpp"
#include "flaplab/rng.hpp"

namespace flaplab {

enum class Action : std::uint8_t { kFlap = 0, kNoFlap = 1 };

constexpr int kNumActions = 2;

constexpr int action_code(Action a) noexcept { return static_cast<int>(a); }

inline Action action_from_code(int code) {
  if (code != 0 && code != 1) {
    throw DomainError("action code must be 0 (flap) or 1 (no flap), got " +
                      std::to_string(code));
  }
  return static_cast<Action>(code);
}

// Reward constants.
constexpr double kPipeReward = 5.0;
constexpr double kSurviveReward = 0.5;
constexpr double kCrashReward = -1000.0;

struct EnvConfig {
  int screen_width = 288;
  int screen_height = 512;
  int gravity = 1;
  int flap_impulse = -9;   // velocity set by a flap
  int max_fall_speed = 6;  // clamp for downward velocity
  int min_vel = -9;        // most negative reachable velocity
  int pipe_gap = 100;
  int pipe_speed = 4;
  int pipe_spacing = 144;  // distance between consecutive pipe left edges
  int bird_x = 57;
  int bird_half_size = 12;
  int pipe_width = 52;
  int gap_center_min = 216;
  int gap_center_max = 296;
  int first_pipe_x = 288;  // left edge of the first pipe at reset
  std::int64_t max_frames = 100000;

  friend bool operator==(const EnvConfig&, const EnvConfig&) = default;
};

// Every velocity reachable from rest under arbitrary action sequences.
inline std::vector<int> reachable_velocities(const EnvConfig& c) {
  std::set<int> seen{0};
  std::vector<int> frontier{0};
  while (!frontier.empty()) {
    const int v = frontier.back();
    frontier.pop_back();
    for (int next : {c.flap_impulse, std::min(v + c.gravity, c.max_fall_speed)}) {
      if (seen.insert(next).second) frontier.push_back(next);
    }
  }
  return {seen.begin(), seen.end()};
}

inline void validate(const EnvConfig& c) {
  auto fail = [](const std::string& msg) { throw ConfigError("env config: " + msg); };
  if (c.screen_width <= 0 || c.screen_height <= 0) fail("screen dimensions must be positive");
  if (c.gravity <= 0) fail("gravity must be positive");
  if (c.flap_impulse >= 0) fail("flap_impulse must be negative (upward)");
  if (c.max_fall_speed <= 0) fail("max_fall_speed must be positive");
  if (c.min_vel != c.flap_impulse) fail("min_vel must equal flap_impulse");
  if (c.bird_half_size <= 0) fail("bird_half_size must be positive");
  if (c.pipe_gap <= 2 * c.bird_half_size) fail("pipe_gap must exceed the bird height");
  if (c.pipe_width <= 0) fail("pipe_width must be positive");
  if (c.pipe_speed <= 0) fail("pipe_speed must be positive");
  if (c.pipe_spacing <= c.pipe_width) fail("pipe_spacing must exceed pipe_width");
  if (c.bird_x - c.bird_half_size < 0 || c.bird_x + c.bird_half_size > c.screen_width)
    fail("bird column must lie on screen");
  if (c.gap_center_min > c.gap_center_max) fail("empty gap center range");
  const int half_gap = c.pipe_gap / 2;
  if (c.gap_center_min - half_gap <= 0 ||
      c.gap_center_max - half_gap + c.pipe_gap >= c.screen_height)
    fail("gap center range leaves a pipe segment with non-positive height");
  if (c.first_pipe_x < c.bird_x) fail("first pipe must start ahead of the bird");
  if (c.max_frames <= 0) fail("max_frames must be positive");
  const auto vels = reachable_velocities(c);
  if (vels.size() != 16) {
    fail("reachable velocity set must have 16 members, has " + std::to_string(vels.size()));
  }
}

struct PipePair {
  int x = 0;  // left edge
  int gap_top_y = 0;
  int gap_bottom_y = 0;
  bool passed = false;

  friend bool operator==(const PipePair&, const PipePair&) = default;
};

struct GameState {
  int bird_y = 0;
  int bird_vel = 0;
  std::vector<PipePair> pipes;  // ascending x, always two entries
  int score = 0;
  std::int64_t frame = 0;
  bool terminal = false;
  Xorshift64Star rng;

  friend bool operator==(const GameState&, const GameState&) = default;
};

struct StepResult {
  GameState state;
  double reward = 0.0;
  bool terminal = false;
  bool pipe_passed = false;
  bool crashed = false;  // terminal by collision rather than frame cap
};

namespace detail {

inline PipePair spawn_pipe(const EnvConfig& c, Xorshift64Star& rng, int x) {
  const int center = static_cast<int>(rng.uniform_int(c.gap_center_min, c.gap_center_max));
  PipePair p;
  p.x = x;
  p.gap_top_y = center - c.pipe_gap / 2;
  p.gap_bottom_y = p.gap_top_y + c.pipe_gap;
  return p;
}

// Open-interval overlap of [a0, a1) and [b0, b1).
constexpr bool overlaps(int a0, int a1, int b0, int b1) noexcept {
  return a0 < b1 && b0 < a1;
}

}  // namespace detail

// Bird box intersects a pipe segment or the ground.
inline bool collides(const EnvConfig& c, const GameState& s) {
  const int h = c.bird_half_size;
  const int bx0 = c.bird_x - h, bx1 = c.bird_x + h;
  const int by0 = s.bird_y - h, by1 = s.bird_y + h;
  if (by1 > c.screen_height) return true;
  for (const auto& p : s.pipes) {
    if (!detail::overlaps(bx0, bx1, p.x, p.x + c.pipe_width)) continue;
    if (detail::overlaps(by0, by1, 0, p.gap_top_y)) return true;
    if (detail::overlaps(by0, by1, p.gap_bottom_y, c.screen_height)) return true;
  }
  return false;
}

inline GameState reset(const EnvConfig& config, std::uint64_t seed) {
  validate(config);
  GameState s;
  s.rng.seed(seed);
  s.bird_y = config.screen_height / 2;
  s.bird_vel = 0;
  s.pipes.push_back(detail::spawn_pipe(config, s.rng, config.first_pipe_x));
  s.pipes.push_back(
      detail::spawn_pipe(config, s.rng, config.first_pipe_x + config.pipe_spacing));
  return s;
}

// Advances one frame. Reward is exactly one of kCrashReward (collision with a
// pipe or the ground), kPipeReward (a pipe's right edge moved past bird_x this
// frame) or kSurviveReward. Reaching max_frames ends the episode without the
// crash penalty.
inline StepResult step(const EnvConfig& c, GameState state, Action action) {
  if (state.terminal) throw UsageError("step() called on a terminal state");

  if (action == Action::kFlap) {
    state.bird_vel = c.flap_impulse;
  } else {
    state.bird_vel = std::min(state.bird_vel + c.gravity, c.max_fall_speed);
  }
  state.bird_y += state.bird_vel;
  if (state.bird_y < 0) {
    state.bird_y = 0;
    state.bird_vel = 0;
  }

  for (auto& p : state.pipes) p.x -= c.pipe_speed;

  StepResult out;
  if (collides(c, state)) {
    state.bird_y = std::min(state.bird_y, c.screen_height);
    state.terminal = true;
    out.crashed = true;
    out.reward = kCrashReward;
  } else {
    for (auto& p : state.pipes) {
      if (!p.passed && p.x + c.pipe_width < c.bird_x) {
        p.passed = true;
        ++state.score;
        out.pipe_passed = true;
      }
    }
    out.reward = out.pipe_passed ? kPipeReward : kSurviveReward;
  }

  if (state.pipes.front().x + c.pipe_width < 0) {
    state.pipes.erase(state.pipes.begin());
    state.pipes.push_back(
        detail::spawn_pipe(c, state.rng, state.pipes.back().x + c.pipe_spacing));
  }

  ++state.frame;
  if (state.frame >= c.max_frames) state.terminal = true;

  out.terminal = state.terminal;
  out.state = std::move(state);
  return out;
}

// 8-bit grayscale, row-major, top-left origin.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

constexpr std::uint8_t kPipeIntensity = 128;
constexpr std::uint8_t kBirdIntensity = 255;

namespace detail {

inline void fill_rect(GrayImage& img, int x0, int y0, int x1, int y1, std::uint8_t v) {
  x0 = std::max(x0, 0);
  y0 = std::max(y0, 0);
  x1 = std::min(x1, img.width);
  y1 = std::min(y1, img.height);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) img.at(x, y) = v;
}

}  // namespace detail

// Background is 0; pipes are drawn first, the bird on top.
inline GrayImage render_raw(const EnvConfig& c, const GameState& s) {
  GrayImage img(c.screen_width, c.screen_height);
  for (const auto& p : s.pipes) {
    detail::fill_rect(img, p.x, 0, p.x + c.pipe_width, p.gap_top_y, kPipeIntensity);
    detail::fill_rect(img, p.x, p.gap_bottom_y, p.x + c.pipe_width, c.screen_height,
                      kPipeIntensity);
  }
  const int h = c.bird_half_size;
  detail::fill_rect(img, c.bird_x - h, s.bird_y - h, c.bird_x + h, s.bird_y + h, kBirdIntensity);
  return img;
}

}  // namespace flaplab
