// flaplab: train, evaluate and compare Flappy Bird agents from the shell.
//
// Exit codes: 0 success, 2 configuration or usage error, 3 I/O or snapshot
// format error.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "flaplab/flaplab.hpp"

namespace {

using namespace flaplab;

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;

struct EnvFlags {
  std::optional<int> screen_width, screen_height, gravity, flap_impulse, max_fall_speed, pipe_gap,
      pipe_speed, pipe_spacing, bird_x, bird_half_size, pipe_width, gap_center_min, gap_center_max,
      first_pipe_x;
  std::optional<std::int64_t> max_frames;

  EnvConfig apply(EnvConfig c) const {
    auto set = [](auto& field, const auto& flag) {
      if (flag) field = *flag;
    };
    set(c.screen_width, screen_width);
    set(c.screen_height, screen_height);
    set(c.gravity, gravity);
    set(c.flap_impulse, flap_impulse);
    set(c.min_vel, flap_impulse);  // the flap impulse is the most negative velocity
    set(c.max_fall_speed, max_fall_speed);
    set(c.pipe_gap, pipe_gap);
    set(c.pipe_speed, pipe_speed);
    set(c.pipe_spacing, pipe_spacing);
    set(c.bird_x, bird_x);
    set(c.bird_half_size, bird_half_size);
    set(c.pipe_width, pipe_width);
    set(c.gap_center_min, gap_center_min);
    set(c.gap_center_max, gap_center_max);
    set(c.first_pipe_x, first_pipe_x);
    set(c.max_frames, max_frames);
    return c;
  }
};

void add_env_flags(CLI::App* app, EnvFlags& f) {
  const std::string g = "Environment";
  app->add_option("--screen-width", f.screen_width, "Screen width in pixels")->group(g);
  app->add_option("--screen-height", f.screen_height, "Screen height in pixels")->group(g);
  app->add_option("--gravity", f.gravity, "Velocity added per no-flap frame")->group(g);
  app->add_option("--flap-impulse", f.flap_impulse, "Velocity set by a flap (negative)")->group(g);
  app->add_option("--max-fall-speed", f.max_fall_speed, "Downward velocity clamp")->group(g);
  app->add_option("--pipe-gap", f.pipe_gap, "Vertical gap between pipe segments")->group(g);
  app->add_option("--pipe-speed", f.pipe_speed, "Pipe scroll speed per frame")->group(g);
  app->add_option("--pipe-spacing", f.pipe_spacing, "Distance between pipe left edges")->group(g);
  app->add_option("--bird-x", f.bird_x, "Bird column")->group(g);
  app->add_option("--bird-half-size", f.bird_half_size, "Half side of the bird hitbox")->group(g);
  app->add_option("--pipe-width", f.pipe_width, "Pipe width")->group(g);
  app->add_option("--gap-center-min", f.gap_center_min, "Lowest gap center")->group(g);
  app->add_option("--gap-center-max", f.gap_center_max, "Highest gap center")->group(g);
  app->add_option("--first-pipe-x", f.first_pipe_x, "Left edge of the first pipe")->group(g);
  app->add_option("--max-frames", f.max_frames, "Frame cap per episode")->group(g);
}

struct RunFlags {
  std::string algo = "qlearning";
  std::string grid = "10";
  std::string order = "backward";
  std::optional<double> epsilon, eta;
  double gamma = 1.0;
  std::size_t episodes = 1000;
  std::size_t eval_episodes = 100;
  std::uint64_t seed = 0;
  double p = 0.5;
  bool wall_time = false;
  EnvFlags env;

  RunConfig to_config() const {
    RunConfig c;
    c.algorithm = parse_algorithm(algo);
    c.grid = parse_grid(grid);
    c.order = parse_order(order);
    c.epsilon = epsilon;
    c.eta = eta;
    c.gamma = gamma;
    c.episodes = episodes;
    c.eval_episodes = eval_episodes;
    c.seed = seed;
    c.baseline_p = p;
    c.record_wall_time = wall_time;
    c.env = env.apply(EnvConfig{});
    return c;
  }
};

void add_run_flags(CLI::App* app, RunFlags& f) {
  app->add_option("--algo", f.algo, "baseline|sarsa|qlearning|linear|ffnn|cnn")->capture_default_str();
  app->add_option("--grid", f.grid, "Discretization level: 1|5|10|20|50|100|none")->capture_default_str();
  app->add_option("--order", f.order, "Replay order: forward|backward")->capture_default_str();
  app->add_option("--epsilon", f.epsilon, "Exploration rate (default 0 tabular, 0.1 FA)");
  app->add_option("--eta", f.eta, "Step size (default 0.5 tabular; 0.1 linear, 3e-5 ffnn, 1e-5 cnn)");
  app->add_option("--gamma", f.gamma, "Discount factor")->capture_default_str();
  app->add_option("--episodes", f.episodes, "Training episodes")->capture_default_str();
  app->add_option("--eval-episodes", f.eval_episodes, "Greedy evaluation episodes")->capture_default_str();
  app->add_option("--seed", f.seed, "Run seed")->capture_default_str();
  app->add_option("--p", f.p, "Baseline flap probability")->capture_default_str();
  app->add_flag("--wall-time", f.wall_time, "Record wall-clock ms in train.csv (breaks byte determinism)");
  add_env_flags(app, f.env);
}

// Reads key=value lines (INI syntax, '#' comments) and fills every option of
// `app` that was not given on the command line.
void apply_config_file(CLI::App* app, const std::string& path) {
  if (path.empty()) return;
  if (!std::filesystem::exists(path)) throw IoError("cannot open config file " + path);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_file(path);
  } catch (const CLI::Error& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    if (item.name == "config") throw ConfigError("config files cannot include other config files");
    CLI::Option* opt = app->get_option_no_throw("--" + item.name);
    if (opt == nullptr) throw ConfigError("unknown key '" + item.fullname() + "' in " + path);
    if (opt->count() > 0) continue;  // command line wins
    try {
      opt->add_result(item.inputs);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw ConfigError("config key '" + item.name + "': " + e.what());
    }
  }
}

void print_metrics(const std::string& prefix, const RunMetrics& m) {
  std::cout << prefix << "_mean=" << detail::format_double(m.mean) << '\n'
            << prefix << "_std=" << detail::format_double(m.stddev) << '\n'
            << prefix << "_max=" << m.max << '\n';
}

int cmd_train(const RunFlags& f, const std::string& out) {
  RunConfig c = f.to_config();
  c.out_dir = out;
  const TrainResult r = train(c);
  std::cout << format_summary(c, r);
  if (!out.empty()) std::cout << "artifacts written to " << out << '\n';
  return 0;
}

void write_eval_outputs(const std::string& out, const EvalResult& r, std::size_t episodes,
                        std::uint64_t seed) {
  if (out.empty()) return;
  detail::ensure_dir(out);
  const std::filesystem::path dir(out);
  detail::write_file(dir / "eval.csv", [&](std::ostream& os) { write_eval_csv(os, r.rows); });
  detail::write_file(dir / "summary.txt", [&](std::ostream& os) {
    os << "eval_episodes=" << episodes << '\n'
       << "seed=" << seed << '\n'
       << "eval_mean=" << detail::format_double(r.metrics.mean) << '\n'
       << "eval_std=" << detail::format_double(r.metrics.stddev) << '\n'
       << "eval_max=" << r.metrics.max << '\n';
  });
}

int cmd_eval(const std::string& snapshot, std::size_t episodes, std::uint64_t seed,
             const EnvFlags& env, const std::string& out) {
  if (snapshot.empty()) throw ConfigError("eval needs --snapshot");
  Policy policy = load_snapshot_file(snapshot);
  const EvalResult r = evaluate(std::move(policy), env.apply(EnvConfig{}), episodes, seed);
  print_metrics("eval", r.metrics);
  write_eval_outputs(out, r, episodes, seed);
  return 0;
}

int cmd_play_baseline(double p, std::size_t episodes, std::uint64_t seed, const EnvFlags& env,
                      const std::string& out) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("--p must lie in [0, 1]");
  const EvalResult r = evaluate(BaselinePolicy{p}, env.apply(EnvConfig{}), episodes, seed);
  print_metrics("baseline", r.metrics);
  write_eval_outputs(out, r, episodes, seed);
  return 0;
}

// "algo=sarsa,grid=none,order=forward" applied on top of the shared flags.
RunConfig parse_run_entry(const std::string& entry, RunFlags base) {
  std::istringstream in(entry);
  std::string pair;
  while (std::getline(in, pair, ',')) {
    if (pair.empty()) continue;
    const auto eq = pair.find('=');
    if (eq == std::string::npos) throw ConfigError("--run entry '" + pair + "' is not key=value");
    const std::string key = pair.substr(0, eq), value = pair.substr(eq + 1);
    auto number = [&](const std::string& v) {
      try {
        return detail::parse_double(v);
      } catch (const FormatError&) {
        throw ConfigError("--run value for '" + key + "' is not a number: '" + v + "'");
      }
    };
    auto count = [&](const std::string& v) {
      const double d = number(v);
      if (d < 0 || d != static_cast<double>(static_cast<std::uint64_t>(d)))
        throw ConfigError("--run value for '" + key + "' must be a non-negative integer");
      return static_cast<std::uint64_t>(d);
    };
    if (key == "algo") base.algo = value;
    else if (key == "grid") base.grid = value;
    else if (key == "order") base.order = value;
    else if (key == "epsilon") base.epsilon = number(value);
    else if (key == "eta") base.eta = number(value);
    else if (key == "gamma") base.gamma = number(value);
    else if (key == "episodes") base.episodes = count(value);
    else if (key == "eval-episodes") base.eval_episodes = count(value);
    else if (key == "seed") base.seed = count(value);
    else if (key == "p") base.p = number(value);
    else throw ConfigError("unknown --run key '" + key + "'");
  }
  return base.to_config();
}

int cmd_compare(const RunFlags& base, const std::vector<std::string>& entries, std::size_t seeds,
                std::size_t jobs, const std::string& out) {
  std::vector<RunConfig> configs;
  for (const auto& s : entries) configs.push_back(parse_run_entry(s, base));
  CompareOptions opt;
  opt.seeds = seeds;
  opt.jobs = jobs;
  opt.out_dir = out;
  const CompareResult r = compare(configs, opt);
  std::cout << format_compare_table(r);
  if (!out.empty()) std::cout << "artifacts written to " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flaplab: reinforcement-learning agents for a headless Flappy Bird"};
  app.require_subcommand(1);

  RunFlags train_flags;
  std::string train_out, train_config;
  auto* train_cmd = app.add_subcommand("train", "Train one agent, evaluate it greedily, write artifacts");
  add_run_flags(train_cmd, train_flags);
  train_cmd->add_option("--out", train_out, "Output directory for train.csv, eval.csv, snapshot.txt, summary.txt");
  train_cmd->add_option("--config", train_config, "key=value file; command-line flags take precedence");

  std::string snapshot, eval_out, eval_config;
  std::size_t eval_episodes = 100;
  std::uint64_t eval_seed = 0;
  EnvFlags eval_env;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a saved snapshot with greedy rollouts");
  eval_cmd->add_option("--snapshot", snapshot, "Snapshot written by train");
  eval_cmd->add_option("--eval-episodes", eval_episodes, "Evaluation episodes")->capture_default_str();
  eval_cmd->add_option("--seed", eval_seed, "Episode i uses env seed seed+i")->capture_default_str();
  eval_cmd->add_option("--out", eval_out, "Output directory for eval.csv and summary.txt");
  eval_cmd->add_option("--config", eval_config, "key=value file; command-line flags take precedence");
  add_env_flags(eval_cmd, eval_env);

  RunFlags compare_flags;
  std::vector<std::string> run_entries;
  std::size_t seeds = 3, jobs = 1;
  std::string compare_out, compare_config;
  auto* compare_cmd = app.add_subcommand("compare", "Train several configurations over several seeds");
  add_run_flags(compare_cmd, compare_flags);
  compare_cmd->add_option("--run", run_entries, "Configuration as key=value,... over the shared flags (repeat)");
  compare_cmd->add_option("--seeds", seeds, "Seeds per configuration")->capture_default_str();
  compare_cmd->add_option("--jobs", jobs, "Worker threads")->capture_default_str();
  compare_cmd->add_option("--out", compare_out, "Output directory for compare.csv, compare.txt, per-run artifacts");
  compare_cmd->add_option("--config", compare_config, "key=value file; command-line flags take precedence");

  double baseline_p = 0.5;
  std::size_t baseline_episodes = 1000;
  std::uint64_t baseline_seed = 0;
  std::string baseline_out, baseline_config;
  EnvFlags baseline_env;
  auto* baseline_cmd = app.add_subcommand("play-baseline", "Play the random flap-with-probability-p policy");
  baseline_cmd->add_option("--p", baseline_p, "Flap probability")->capture_default_str();
  baseline_cmd->add_option("--episodes", baseline_episodes, "Episodes")->capture_default_str();
  baseline_cmd->add_option("--seed", baseline_seed, "Episode i uses env seed seed+i")->capture_default_str();
  baseline_cmd->add_option("--out", baseline_out, "Output directory for eval.csv and summary.txt");
  baseline_cmd->add_option("--config", baseline_config, "key=value file; command-line flags take precedence");
  add_env_flags(baseline_cmd, baseline_env);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (train_cmd->parsed()) {
      apply_config_file(train_cmd, train_config);
      return cmd_train(train_flags, train_out);
    }
    if (eval_cmd->parsed()) {
      apply_config_file(eval_cmd, eval_config);
      return cmd_eval(snapshot, eval_episodes, eval_seed, eval_env, eval_out);
    }
    if (compare_cmd->parsed()) {
      apply_config_file(compare_cmd, compare_config);
      return cmd_compare(compare_flags, run_entries, seeds, jobs, compare_out);
    }
    apply_config_file(baseline_cmd, baseline_config);
    return cmd_play_baseline(baseline_p, baseline_episodes, baseline_seed, baseline_env,
                             baseline_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::logic_error& e) {  // UsageError, DomainError
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kExitIo;
  }
}
