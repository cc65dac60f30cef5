#pragma once

// State representations: the (x_diff, y_diff, y_vel) triple with its
// grid-discretized table key, and the 80x80 normalized frame used by the
// convolutional agent.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "flaplab/env.hpp"
#include "flaplab/error.hpp"

namespace flaplab {

struct Observation {
  int x_diff = 0;  // next pipe left edge minus bird_x, clamped at 0
  int y_diff = 0;  // next gap bottom edge minus bird_y; positive when the edge is below
  int y_vel = 0;

  friend bool operator==(const Observation&, const Observation&) = default;
};

struct StateKey {
  int gx = 0;
  int gy = 0;
  int v = 0;
  int grid = 1;

  friend bool operator==(const StateKey&, const StateKey&) = default;
  friend auto operator<=>(const StateKey&, const StateKey&) = default;
};

struct StateKeyHash {
  std::size_t operator()(const StateKey& k) const noexcept {
    std::uint64_t h = static_cast<std::uint32_t>(k.gx);
    h = h * 0x100000001B3ULL ^ static_cast<std::uint32_t>(k.gy);
    h = h * 0x100000001B3ULL ^ static_cast<std::uint32_t>(k.v);
    h = h * 0x100000001B3ULL ^ static_cast<std::uint32_t>(k.grid);
    return static_cast<std::size_t>(splitmix64(h));
  }
};

// The pipe the bird is heading for: least x among pipes not yet passed.
inline const PipePair& next_pipe(const GameState& s) {
  for (const auto& p : s.pipes)
    if (!p.passed) return p;
  throw UsageError("game state has no unpassed pipe");
}

inline Observation observe(const EnvConfig& c, const GameState& s) {
  const PipePair& p = next_pipe(s);
  Observation o;
  o.x_diff = std::max(p.x - c.bird_x, 0);
  o.y_diff = p.gap_bottom_y - s.bird_y;
  o.y_vel = s.bird_vel;
  return o;
}

// r * floor(n / r), flooring toward negative infinity.
constexpr int discretize(int n, int r) {
  if (r <= 0) throw DomainError("discretization level must be positive");
  int q = n / r;
  if (n % r != 0 && n < 0) --q;
  return q * r;
}

inline StateKey state_key(const Observation& obs, int r) {
  return StateKey{discretize(obs.x_diff, r), discretize(obs.y_diff, r), obs.y_vel, r};
}

// Upper bound on distinct keys reachable at grid r: one cell per r pixels of
// x_diff over the screen width, of y_diff over twice the screen height, times
// the 16 velocities.
inline std::size_t key_space_bound(const EnvConfig& c, int r) {
  auto cells = [r](int extent) {
    return static_cast<std::size_t>((extent + r - 1) / r + 1);
  };
  return cells(c.screen_width) * cells(2 * c.screen_height) * reachable_velocities(c).size();
}

constexpr int kCnnImageSize = 80;

struct CnnInput {
  std::vector<double> image;  // kCnnImageSize^2 values in [0, 1], row-major
  int y_vel = 0;
};

// Nearest-neighbour downsample to 80x80, scaled into [0, 1].
inline std::vector<double> preprocess(const GrayImage& frame, const EnvConfig& c) {
  if (frame.width != c.screen_width || frame.height != c.screen_height ||
      frame.pixels.size() != static_cast<std::size_t>(frame.width) * frame.height) {
    throw DomainError("preprocess: frame dimensions do not match the screen");
  }
  std::vector<double> out(static_cast<std::size_t>(kCnnImageSize) * kCnnImageSize);
  for (int row = 0; row < kCnnImageSize; ++row) {
    const int sy = row * frame.height / kCnnImageSize;
    for (int col = 0; col < kCnnImageSize; ++col) {
      const int sx = col * frame.width / kCnnImageSize;
      out[static_cast<std::size_t>(row) * kCnnImageSize + col] = frame.at(sx, sy) / 255.0;
    }
  }
  return out;
}

inline CnnInput cnn_input(const EnvConfig& c, const GameState& s) {
  return CnnInput{preprocess(render_raw(c, s), c), s.bird_vel};
}

}  // namespace flaplab
