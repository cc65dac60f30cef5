#pragma once

// Experiment orchestration: episodic training loops, greedy evaluation,
// multi-seed comparisons, CSV curves and policy snapshots.
//
// Seeding: a run seed S drives three independent streams. Training episode i
// resets the env with derive_seed(S, 1, i); exploration draws come from a
// generator seeded with derive_seed(S, 2, 0); network initialization uses
// derive_seed(S, 4, 0). evaluate(policy, n, E) plays episode i with env seed
// E + i, and the evaluation pass at the end of train() uses
// E = derive_seed(S, 3, 0).

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <exception>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "flaplab/env.hpp"
#include "flaplab/error.hpp"
#include "flaplab/fa_agents.hpp"
#include "flaplab/features.hpp"
#include "flaplab/nn/serialize.hpp"
#include "flaplab/rng.hpp"
#include "flaplab/stats.hpp"
#include "flaplab/tabular.hpp"

namespace flaplab {

enum class Algorithm { kBaseline, kSarsa, kQLearning, kLinear, kFfnn, kCnn };

inline const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::kBaseline: return "baseline";
    case Algorithm::kSarsa: return "sarsa";
    case Algorithm::kQLearning: return "qlearning";
    case Algorithm::kLinear: return "linear";
    case Algorithm::kFfnn: return "ffnn";
    case Algorithm::kCnn: return "cnn";
  }
  return "?";
}

inline Algorithm parse_algorithm(const std::string& s) {
  for (auto a : {Algorithm::kBaseline, Algorithm::kSarsa, Algorithm::kQLearning,
                 Algorithm::kLinear, Algorithm::kFfnn, Algorithm::kCnn})
    if (s == to_string(a)) return a;
  throw ConfigError("unknown algorithm '" + s +
                    "' (expected baseline|sarsa|qlearning|linear|ffnn|cnn)");
}

constexpr bool is_tabular(Algorithm a) {
  return a == Algorithm::kSarsa || a == Algorithm::kQLearning;
}
constexpr bool is_function_approx(Algorithm a) {
  return a == Algorithm::kLinear || a == Algorithm::kFfnn || a == Algorithm::kCnn;
}

inline Architecture architecture_of(Algorithm a) {
  switch (a) {
    case Algorithm::kLinear: return Architecture::kLinear;
    case Algorithm::kFfnn: return Architecture::kFfnn;
    case Algorithm::kCnn: return Architecture::kCnn;
    default: throw ConfigError(std::string(to_string(a)) + " is not a function-approximation agent");
  }
}

// Grid 0 stands for "none": raw pixel keys, identical to grid 1.
constexpr int kNoGrid = 0;

inline std::string grid_label(int grid) { return grid == kNoGrid ? "none" : std::to_string(grid); }

inline int parse_grid(const std::string& s) {
  if (s == "none") return kNoGrid;
  int g = -1;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), g);
  if (ec != std::errc() || end != s.data() + s.size())
    throw ConfigError("grid must be an integer or 'none', got '" + s + "'");
  return g;
}

constexpr int effective_grid(int grid) { return grid == kNoGrid ? 1 : grid; }

struct RunConfig {
  Algorithm algorithm = Algorithm::kQLearning;
  int grid = 10;
  UpdateOrder order = UpdateOrder::kBackward;
  std::optional<double> epsilon;  // default: 0 tabular, 0.1 function approximation
  std::optional<double> eta;      // default: 0.5 tabular, default_eta(arch) otherwise
  double gamma = 1.0;
  std::size_t episodes = 1000;
  std::size_t eval_episodes = 100;
  std::uint64_t seed = 0;
  std::string out_dir;  // empty: nothing written
  double baseline_p = 0.5;
  bool record_wall_time = false;  // wall_ms column is 0 unless set
  EnvConfig env;

  double resolved_epsilon() const {
    return epsilon.value_or(is_function_approx(algorithm) ? 0.1 : 0.0);
  }
  double resolved_eta() const {
    if (eta) return *eta;
    return is_function_approx(algorithm) ? default_eta(architecture_of(algorithm)) : 0.5;
  }

  TabularConfig tabular() const {
    TabularConfig t;
    t.rule = algorithm == Algorithm::kSarsa ? TdRule::kSarsa : TdRule::kQLearning;
    t.eta = resolved_eta();
    t.gamma = gamma;
    t.epsilon = resolved_epsilon();
    t.order = order;
    t.grid = effective_grid(grid);
    return t;
  }

  FaConfig function_approx() const {
    FaConfig f;
    f.arch = architecture_of(algorithm);
    f.eta = resolved_eta();
    f.gamma = gamma;
    f.epsilon = resolved_epsilon();
    f.order = order;
    return f;
  }

  // Short identifier used for directory names and table rows.
  std::string label() const {
    std::ostringstream os;
    os << to_string(algorithm);
    if (is_tabular(algorithm)) os << "_g" << grid_label(grid);
    if (algorithm != Algorithm::kBaseline) os << '_' << to_string(order) << "_e" << resolved_epsilon();
    return os.str();
  }
};

inline void validate(const RunConfig& c) {
  validate(c.env);
  if (is_tabular(c.algorithm)) {
    static constexpr int kGrids[] = {kNoGrid, 1, 5, 10, 20, 50, 100};
    if (std::find(std::begin(kGrids), std::end(kGrids), c.grid) == std::end(kGrids))
      throw ConfigError("grid must be one of none|1|5|10|20|50|100, got " + std::to_string(c.grid));
    validate(c.tabular());
  } else if (is_function_approx(c.algorithm)) {
    validate(c.function_approx());
  } else if (!(c.baseline_p >= 0.0 && c.baseline_p <= 1.0)) {
    throw ConfigError("baseline flap probability must lie in [0, 1]");
  }
}

// ---------------------------------------------------------------------------
// Policies and snapshots

struct BaselinePolicy {
  double p = 0.5;
};

struct TabularPolicy {
  QTable table;
  int grid = 1;  // effective grid (>= 1)
};

using Policy = std::variant<BaselinePolicy, TabularPolicy, FaModel>;

inline Architecture infer_architecture(const nn::Network& net) {
  if (net.input_shape().size() == 3) return Architecture::kCnn;
  if (net.layer_count() == 1) return Architecture::kLinear;
  return Architecture::kFfnn;
}

// Snapshot files start with a magic line identifying the policy type:
// "flaplab-baseline v1", "flaplab-qtable v1 ..." or "flaplab-net v1".
inline void save_snapshot(std::ostream& os, Policy& policy) {
  if (auto* b = std::get_if<BaselinePolicy>(&policy)) {
    os << "flaplab-baseline v1\np " << detail::format_double(b->p) << '\n';
  } else if (auto* t = std::get_if<TabularPolicy>(&policy)) {
    save_qtable(os, t->table, t->grid);
  } else {
    nn::save_network(os, std::get<FaModel>(policy).net);
  }
  if (!os) throw IoError("failed writing snapshot");
}

inline Policy load_snapshot(std::istream& is) {
  std::string first;
  const auto start = is.tellg();
  if (!std::getline(is, first)) throw FormatError("empty snapshot");
  if (first.rfind("flaplab-qtable", 0) == 0) {
    is.clear();
    is.seekg(start);
    auto loaded = load_qtable(is);
    return TabularPolicy{std::move(loaded.table), loaded.grid};
  }
  if (first == "flaplab-net v1") {
    is.clear();
    is.seekg(start);
    nn::Network net = nn::load_network(is);
    const Architecture arch = infer_architecture(net);
    return FaModel{arch, std::move(net)};
  }
  if (first == "flaplab-baseline v1") {
    std::string kw, val;
    is >> kw >> val;
    if (kw != "p") throw FormatError("bad baseline snapshot");
    return BaselinePolicy{detail::parse_double(val)};
  }
  throw FormatError("unrecognized snapshot header: '" + first + "'");
}

inline void save_snapshot_file(const std::filesystem::path& path, Policy& policy) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  save_snapshot(os, policy);
}

inline Policy load_snapshot_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open snapshot " + path.string());
  return load_snapshot(is);
}

// Action the policy takes in `state` with no exploration. The baseline draws
// from `rng`; the learned policies ignore it.
inline Action policy_action(Policy& policy, const EnvConfig& env, const GameState& state,
                            Xorshift64Star& rng) {
  if (auto* b = std::get_if<BaselinePolicy>(&policy)) return baseline_action(b->p, rng);
  if (auto* t = std::get_if<TabularPolicy>(&policy))
    return greedy_action(t->table, state_key(observe(env, state), t->grid));
  auto& m = std::get<FaModel>(policy);
  return greedy_action(predict_q(m, m.encode(env, state)));
}

// ---------------------------------------------------------------------------
// Episode records and CSV

struct EpisodeRow {
  std::size_t episode = 0;
  int score = 0;
  double episode_return = 0.0;
  std::size_t frames = 0;
  int cumulative_max = 0;
  double wall_ms = 0.0;
};

inline void write_train_csv(std::ostream& os, const std::vector<EpisodeRow>& rows) {
  os << "episode_index,train_score,train_return,frames,cumulative_max_score,wall_ms\n";
  for (const auto& r : rows) {
    os << r.episode << ',' << r.score << ',' << detail::format_double(r.episode_return) << ','
       << r.frames << ',' << r.cumulative_max << ',' << detail::format_double(r.wall_ms) << '\n';
  }
}

inline void write_eval_csv(std::ostream& os, const std::vector<EpisodeRow>& rows) {
  os << "episode_index,score,return,frames\n";
  for (const auto& r : rows) {
    os << r.episode << ',' << r.score << ',' << detail::format_double(r.episode_return) << ','
       << r.frames << '\n';
  }
}

namespace detail {

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw IoError("cannot create output directory " + dir.string() +
                  (ec ? ": " + ec.message() : ""));
}

template <typename Fn>
void write_file(const std::filesystem::path& path, Fn&& fn) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  fn(os);
  os.flush();
  if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Evaluation

struct EvalResult {
  RunMetrics metrics;
  std::vector<EpisodeRow> rows;
};

// Plays `episodes` rollouts with env seeds seed + i and no learning.
inline EvalResult evaluate(Policy policy, const EnvConfig& env, std::size_t episodes,
                           std::uint64_t seed) {
  validate(env);
  EvalResult out;
  Xorshift64Star rng(derive_seed(seed, 5, 0));
  std::vector<int> scores;
  int best = 0;
  for (std::size_t i = 0; i < episodes; ++i) {
    GameState s = reset(env, seed + i);
    EpisodeRow row;
    row.episode = i;
    while (!s.terminal) {
      const Action a = policy_action(policy, env, s, rng);
      StepResult r = step(env, std::move(s), a);
      row.episode_return += r.reward;
      ++row.frames;
      s = std::move(r.state);
    }
    row.score = s.score;
    best = std::max(best, row.score);
    row.cumulative_max = best;
    scores.push_back(row.score);
    out.rows.push_back(row);
  }
  out.metrics = RunMetrics::from_scores(std::move(scores));
  return out;
}

// ---------------------------------------------------------------------------
// Training

struct TrainResult {
  RunConfig config;
  RunMetrics train_metrics;
  std::vector<EpisodeRow> train_rows;
  EvalResult eval;
  Policy policy;
};

inline std::string format_summary(const RunConfig& c, const TrainResult& r) {
  std::ostringstream os;
  os << "algorithm=" << to_string(c.algorithm) << '\n'
     << "grid=" << grid_label(c.grid) << '\n'
     << "order=" << to_string(c.order) << '\n'
     << "epsilon=" << detail::format_double(c.resolved_epsilon()) << '\n'
     << "eta=" << detail::format_double(c.resolved_eta()) << '\n'
     << "gamma=" << detail::format_double(c.gamma) << '\n'
     << "episodes=" << c.episodes << '\n'
     << "eval_episodes=" << c.eval_episodes << '\n'
     << "seed=" << c.seed << '\n'
     << "train_mean=" << detail::format_double(r.train_metrics.mean) << '\n'
     << "train_std=" << detail::format_double(r.train_metrics.stddev) << '\n'
     << "train_max=" << r.train_metrics.max << '\n'
     << "eval_mean=" << detail::format_double(r.eval.metrics.mean) << '\n'
     << "eval_std=" << detail::format_double(r.eval.metrics.stddev) << '\n'
     << "eval_max=" << r.eval.metrics.max << '\n';
  return os.str();
}

inline void write_run_artifacts(const std::filesystem::path& dir, TrainResult& r) {
  detail::ensure_dir(dir);
  detail::write_file(dir / "train.csv", [&](std::ostream& os) { write_train_csv(os, r.train_rows); });
  detail::write_file(dir / "eval.csv", [&](std::ostream& os) { write_eval_csv(os, r.eval.rows); });
  detail::write_file(dir / "snapshot.txt", [&](std::ostream& os) { save_snapshot(os, r.policy); });
  detail::write_file(dir / "summary.txt",
                     [&](std::ostream& os) { os << format_summary(r.config, r); });
}

// Runs `episodes` training episodes (one per iteration) followed by a greedy
// evaluation pass, and writes train.csv, eval.csv, snapshot.txt and
// summary.txt into out_dir when it is set.
inline TrainResult train(const RunConfig& config) {
  validate(config);
  if (!config.out_dir.empty()) detail::ensure_dir(config.out_dir);

  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  auto elapsed_ms = [&] {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  };

  TrainResult out{config, {}, {}, {}, BaselinePolicy{config.baseline_p}};
  std::vector<int> scores;
  int best = 0;
  auto record = [&](std::size_t i, int score, double ret, std::size_t frames) {
    best = std::max(best, score);
    scores.push_back(score);
    out.train_rows.push_back(
        {i, score, ret, frames, best, config.record_wall_time ? elapsed_ms() : 0.0});
  };

  const EnvConfig& env = config.env;
  Xorshift64Star rng(derive_seed(config.seed, 2, 0));

  if (config.algorithm == Algorithm::kBaseline) {
    for (std::size_t i = 0; i < config.episodes; ++i) {
      const EpisodeMemory m = play_episode(
          env, derive_seed(config.seed, 1, i), 1,
          [&](const StateKey&) { return baseline_action(config.baseline_p, rng); }, false);
      record(i, m.score, m.episode_return, m.transitions.size());
    }
  } else if (is_tabular(config.algorithm)) {
    const TabularConfig tcfg = config.tabular();
    TabularPolicy tp{QTable{}, tcfg.grid};
    for (std::size_t i = 0; i < config.episodes; ++i) {
      const EpisodeMemory m = run_episode(env, derive_seed(config.seed, 1, i), tp.table, tcfg, rng);
      replay_episode(tp.table, m, tcfg);
      record(i, m.score, m.episode_return, m.transitions.size());
    }
    out.policy = std::move(tp);
  } else {
    const FaConfig fcfg = config.function_approx();
    FaModel model = FaModel::create(fcfg.arch, derive_seed(config.seed, 4, 0));
    train_fa(env, model, fcfg, config.episodes, config.seed, [&](const FaEpisodeReport& rep) {
      record(rep.episode, rep.score, rep.episode_return, rep.frames);
    });
    out.policy = std::move(model);
  }

  out.train_metrics = RunMetrics::from_scores(std::move(scores));
  out.eval = evaluate(out.policy, env, config.eval_episodes, derive_seed(config.seed, 3, 0));
  out.train_metrics.wall_ms = elapsed_ms();
  if (!config.out_dir.empty()) write_run_artifacts(config.out_dir, out);
  return out;
}

// ---------------------------------------------------------------------------
// Comparison

struct CompareRow {
  RunConfig config;
  std::uint64_t seed = 0;
  RunMetrics eval;
  RunMetrics train;
};

struct CompareSummaryRow {
  RunConfig config;
  std::size_t seeds = 0;
  RunMetrics pooled;  // eval scores of every seed
};

struct CompareResult {
  std::vector<CompareRow> runs;           // config-major, seed-minor
  std::vector<CompareSummaryRow> summary;  // one per config
};

inline void write_compare_runs_csv(std::ostream& os, const CompareResult& r) {
  os << "algorithm,grid,order,epsilon,seed,eval_mean,eval_std,eval_max,train_mean,train_max\n";
  for (const auto& row : r.runs) {
    os << to_string(row.config.algorithm) << ',' << grid_label(row.config.grid) << ','
       << to_string(row.config.order) << ','
       << detail::format_double(row.config.resolved_epsilon()) << ',' << row.seed << ','
       << detail::format_double(row.eval.mean) << ',' << detail::format_double(row.eval.stddev)
       << ',' << row.eval.max << ',' << detail::format_double(row.train.mean) << ','
       << row.train.max << '\n';
  }
}

inline void write_compare_summary_csv(std::ostream& os, const CompareResult& r) {
  os << "algorithm,grid,order,epsilon,seeds,mean,std,max\n";
  for (const auto& row : r.summary) {
    os << to_string(row.config.algorithm) << ',' << grid_label(row.config.grid) << ','
       << to_string(row.config.order) << ','
       << detail::format_double(row.config.resolved_epsilon()) << ',' << row.seeds << ','
       << detail::format_double(row.pooled.mean) << ',' << detail::format_double(row.pooled.stddev)
       << ',' << row.pooled.max << '\n';
  }
}

inline std::string format_compare_table(const CompareResult& r) {
  std::ostringstream os;
  os << std::left << std::setw(11) << "Algorithm" << std::setw(6) << "Grid" << std::setw(10)
     << "Order" << std::setw(9) << "Epsilon" << std::right << std::setw(12) << "Mean"
     << std::setw(12) << "Std" << std::setw(8) << "Max" << '\n';
  for (const auto& row : r.summary) {
    const bool base = row.config.algorithm == Algorithm::kBaseline;
    os << std::left << std::setw(11) << to_string(row.config.algorithm) << std::setw(6)
       << (is_tabular(row.config.algorithm) ? grid_label(row.config.grid) : "none")
       << std::setw(10) << (base ? "" : to_string(row.config.order)) << std::setw(9)
       << (base ? std::string() : detail::format_double(row.config.resolved_epsilon()))
       << std::right << std::fixed << std::setprecision(3) << std::setw(12) << row.pooled.mean
       << std::setw(12) << row.pooled.stddev << std::setw(8) << row.pooled.max << '\n';
    os.unsetf(std::ios::fixed);
  }
  return os.str();
}

struct CompareOptions {
  std::size_t seeds = 3;
  std::size_t jobs = 1;  // worker threads; results do not depend on it
  std::string out_dir;   // per-run artifacts go to out_dir/<label>/seed<k>
};

// Trains every config under seeds config.seed + k, k < seeds. Runs are
// independent; with jobs > 1 they execute on a worker pool and are gathered
// afterwards in config-major order.
inline CompareResult compare(const std::vector<RunConfig>& configs, const CompareOptions& opt = {}) {
  if (configs.size() < 2) throw ConfigError("compare needs at least two configurations");
  if (opt.seeds < 1) throw ConfigError("compare needs at least one seed");
  for (const auto& c : configs) validate(c);

  std::vector<RunConfig> jobs;
  for (const auto& c : configs) {
    for (std::size_t k = 0; k < opt.seeds; ++k) {
      RunConfig rc = c;
      rc.seed = c.seed + k;
      rc.out_dir = opt.out_dir.empty()
                       ? std::string()
                       : (std::filesystem::path(opt.out_dir) / c.label() /
                          ("seed" + std::to_string(rc.seed)))
                             .string();
      jobs.push_back(std::move(rc));
    }
  }

  std::vector<std::optional<TrainResult>> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        results[i] = train(jobs[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t nthreads = std::max<std::size_t>(1, std::min(opt.jobs, jobs.size()));
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  CompareResult out;
  for (std::size_t i = 0; i < jobs.size(); ++i)
    out.runs.push_back({jobs[i], jobs[i].seed, results[i]->eval.metrics, results[i]->train_metrics});
  for (std::size_t c = 0; c < configs.size(); ++c) {
    std::vector<int> pooled;
    for (std::size_t k = 0; k < opt.seeds; ++k) {
      const auto& s = out.runs[c * opt.seeds + k].eval.scores;
      pooled.insert(pooled.end(), s.begin(), s.end());
    }
    out.summary.push_back({configs[c], opt.seeds, RunMetrics::from_scores(std::move(pooled))});
  }

  if (!opt.out_dir.empty()) {
    detail::ensure_dir(opt.out_dir);
    const std::filesystem::path dir(opt.out_dir);
    detail::write_file(dir / "compare_runs.csv",
                       [&](std::ostream& os) { write_compare_runs_csv(os, out); });
    detail::write_file(dir / "compare.csv",
                       [&](std::ostream& os) { write_compare_summary_csv(os, out); });
    detail::write_file(dir / "compare.txt",
                       [&](std::ostream& os) { os << format_compare_table(out); });
  }
  return out;
}

}  // namespace flaplab
