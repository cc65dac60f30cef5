#pragma once

// Q-value function approximation: linear model, 3-50-20-2 feed-forward net and
// a two-layer strided CNN, all fitted with semi-gradient TD on
// 0.5 * (Q(s,a) - (r + gamma * max_a' Q(s',a')))^2.

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "flaplab/env.hpp"
#include "flaplab/error.hpp"
#include "flaplab/features.hpp"
#include "flaplab/nn/network.hpp"
#include "flaplab/rng.hpp"
#include "flaplab/stats.hpp"
#include "flaplab/tabular.hpp"

namespace flaplab {

enum class Architecture { kLinear, kFfnn, kCnn };

inline const char* to_string(Architecture a) {
  switch (a) {
    case Architecture::kLinear: return "linear";
    case Architecture::kFfnn: return "ffnn";
    case Architecture::kCnn: return "cnn";
  }
  return "?";
}

constexpr double kVelocityScale = 10.0;

// One (theta, b) pair per action: a 3 -> 2 dense layer.
inline nn::Network make_linear_net() {
  nn::Network net(nn::Shape{3});
  net.add<nn::Dense>(3, 2);
  return net;
}

inline nn::Network make_ffnn_net() {
  nn::Network net(nn::Shape{3});
  net.add<nn::Dense>(3, 50);
  net.add<nn::Relu>();
  net.add<nn::Dense>(50, 20);
  net.add<nn::Relu>();
  net.add<nn::Dense>(20, 2);
  return net;
}

// conv(16, 5x5, stride 2) -> ReLU -> conv(32, 5x5, stride 2) -> ReLU ->
// flatten (17*17*32 = 9248) -> append scaled y_vel -> dense to 2 Q-values.
inline nn::Network make_cnn_net(std::size_t image = kCnnImageSize) {
  nn::Network net(nn::Shape{1, image, image});
  net.add<nn::Conv2d>(1, 16, 5, 2, image, image);
  net.add<nn::Relu>();
  const std::size_t mid = nn::Conv2d::out_dim(image, 5, 2);
  net.add<nn::Conv2d>(16, 32, 5, 2, mid, mid);
  net.add<nn::Relu>();
  net.add<nn::Flatten>();
  net.add<nn::ConcatExtra>(1);
  const std::size_t flat = nn::element_count(net.output_shape());
  net.add<nn::Dense>(flat, 2);
  return net;
}

inline nn::Network make_net(Architecture a) {
  switch (a) {
    case Architecture::kLinear: return make_linear_net();
    case Architecture::kFfnn: return make_ffnn_net();
    case Architecture::kCnn: return make_cnn_net();
  }
  throw ConfigError("unknown architecture");
}

// Model input: the main tensor plus features appended inside the net.
struct FaInput {
  nn::Tensor x;
  std::vector<double> extra;
};

// Pixel distances divided by the screen dimensions, velocity by 10.
inline FaInput encode_observation(const EnvConfig& c, const Observation& o) {
  return {nn::Tensor(nn::Shape{3}, {static_cast<double>(o.x_diff) / c.screen_width,
                                    static_cast<double>(o.y_diff) / c.screen_height,
                                    o.y_vel / kVelocityScale}),
          {}};
}

inline FaInput encode_cnn(const CnnInput& in) {
  const auto n = static_cast<std::size_t>(kCnnImageSize);
  return {nn::Tensor(nn::Shape{1, n, n}, in.image), {in.y_vel / kVelocityScale}};
}

struct FaModel {
  Architecture arch = Architecture::kLinear;
  nn::Network net;

  static FaModel create(Architecture a, std::uint64_t seed) {
    FaModel m{a, make_net(a)};
    m.net.initialize(seed);
    return m;
  }

  FaInput encode(const EnvConfig& c, const GameState& s) const {
    if (arch == Architecture::kCnn) return encode_cnn(cnn_input(c, s));
    return encode_observation(c, observe(c, s));
  }
};

using QPair = std::array<double, kNumActions>;

inline QPair predict_q(nn::Network& net, const FaInput& in) {
  const nn::Tensor out = net.forward(in.x, in.extra);
  if (out.size() != kNumActions) throw DomainError("Q-network must have exactly 2 outputs");
  return {out[0], out[1]};
}

inline QPair predict_q(FaModel& m, const FaInput& in) { return predict_q(m.net, in); }

inline double td_target(double r, const QPair& q_next, bool terminal, double gamma) {
  if (terminal) return r;
  return r + gamma * std::max(q_next[0], q_next[1]);
}

struct FaTransition {
  FaInput s;
  Action a = Action::kNoFlap;
  double r = 0.0;
  FaInput s_next;
  bool terminal_next = false;
};

// Squared TD error of one transition under the current parameters.
inline double td_loss(nn::Network& net, const FaTransition& t, double gamma) {
  const double target =
      t.terminal_next ? t.r : td_target(t.r, predict_q(net, t.s_next), false, gamma);
  const double d = predict_q(net, t.s)[action_code(t.a)] - target;
  return d * d;
}

// One SGD step on half the squared TD error with the target held fixed.
// Returns the squared TD error before the step.
inline double fa_update(nn::Network& net, const FaTransition& t, double eta, double gamma) {
  const double target =
      t.terminal_next ? t.r : td_target(t.r, predict_q(net, t.s_next), false, gamma);
  const QPair pred = predict_q(net, t.s);
  const double err = pred[action_code(t.a)] - target;
  nn::Tensor grad(nn::Shape{kNumActions});
  grad[action_code(t.a)] = err;
  net.zero_grad();
  net.backward(grad);
  net.sgd_step(eta);
  return err * err;
}

inline double fa_update(FaModel& m, const FaTransition& t, double eta, double gamma) {
  return fa_update(m.net, t, eta, gamma);
}

// SGD step sizes that train stably within a few hundred episodes. The
// networks see TD errors near 1000, so their steps are far smaller than the
// linear model's.
inline double default_eta(Architecture a) {
  switch (a) {
    case Architecture::kLinear: return 0.1;
    case Architecture::kFfnn: return 3e-5;
    case Architecture::kCnn: return 1e-5;
  }
  return 1e-5;
}

struct FaConfig {
  Architecture arch = Architecture::kLinear;
  double eta = default_eta(Architecture::kLinear);
  double gamma = 1.0;
  double epsilon = 0.1;
  UpdateOrder order = UpdateOrder::kBackward;
};

inline void validate(const FaConfig& c) {
  if (!(c.eta > 0.0)) throw ConfigError("eta must be positive");
  if (!(c.gamma >= 0.0 && c.gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (!(c.epsilon >= 0.0 && c.epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0, 1]");
}

struct FaEpisode {
  std::vector<FaTransition> transitions;
  double episode_return = 0.0;
  int score = 0;
};

// Argmax with ties going to kNoFlap, as in the tabular agents.
inline Action greedy_action(const QPair& q) {
  return q[action_code(Action::kFlap)] > q[action_code(Action::kNoFlap)] ? Action::kFlap
                                                                         : Action::kNoFlap;
}

inline Action select_action(FaModel& m, const FaInput& in, double epsilon, Xorshift64Star& rng) {
  if (epsilon > 0.0 && rng.bernoulli(epsilon)) return baseline_action(0.5, rng);
  return greedy_action(predict_q(m, in));
}

// Plays one epsilon-greedy episode without touching the parameters.
inline FaEpisode run_fa_episode(const EnvConfig& env, std::uint64_t env_seed, FaModel& m,
                                double epsilon, Xorshift64Star& rng) {
  FaEpisode ep;
  GameState state = reset(env, env_seed);
  FaInput cur = m.encode(env, state);
  while (!state.terminal) {
    const Action a = select_action(m, cur, epsilon, rng);
    StepResult res = step(env, std::move(state), a);
    FaTransition t;
    t.s = std::move(cur);
    t.a = a;
    t.r = res.reward;
    t.s_next = m.encode(env, res.state);
    t.terminal_next = res.terminal;
    ep.episode_return += res.reward;
    state = std::move(res.state);
    cur = t.s_next;
    ep.transitions.push_back(std::move(t));
  }
  ep.score = state.score;
  return ep;
}

// Mean pre-step squared TD error over the replay.
inline double replay_fa_episode(FaModel& m, const FaEpisode& ep, const FaConfig& cfg) {
  double total = 0.0;
  if (cfg.order == UpdateOrder::kForward) {
    for (const auto& t : ep.transitions) total += fa_update(m, t, cfg.eta, cfg.gamma);
  } else {
    for (auto it = ep.transitions.rbegin(); it != ep.transitions.rend(); ++it)
      total += fa_update(m, *it, cfg.eta, cfg.gamma);
  }
  return ep.transitions.empty() ? 0.0 : total / static_cast<double>(ep.transitions.size());
}

struct FaEpisodeReport {
  std::size_t episode = 0;
  int score = 0;
  double episode_return = 0.0;
  std::size_t frames = 0;
  double mean_td_loss = 0.0;
};

// Episodic training: play with the frozen model, then replay the memory.
// Episode i uses env seed derive_seed(seed, 1, i); exploration draws come from
// a generator seeded with derive_seed(seed, 2, 0).
inline RunMetrics train_fa(const EnvConfig& env, FaModel& m, const FaConfig& cfg,
                           std::size_t episodes, std::uint64_t seed,
                           const std::function<void(const FaEpisodeReport&)>& on_episode = {}) {
  validate(cfg);
  if (m.arch != cfg.arch) throw ConfigError("model architecture does not match FaConfig.arch");
  Xorshift64Star rng(derive_seed(seed, 2, 0));
  std::vector<int> scores;
  scores.reserve(episodes);
  for (std::size_t i = 0; i < episodes; ++i) {
    const FaEpisode ep = run_fa_episode(env, derive_seed(seed, 1, i), m, cfg.epsilon, rng);
    const double loss = replay_fa_episode(m, ep, cfg);
    scores.push_back(ep.score);
    if (on_episode) on_episode({i, ep.score, ep.episode_return, ep.transitions.size(), loss});
  }
  return RunMetrics::from_scores(std::move(scores));
}

}  // namespace flaplab
