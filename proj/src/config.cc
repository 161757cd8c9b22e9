#include "seedling/config.h"

#include <charconv>
#include <fstream>
#include <sstream>

namespace seedling {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("expected a number for " + key + ", got '" + v + "'");
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    // Accept integral values written in floating/scientific form (1e6).
    const double d = to_double(key, v);
    if (d < 0 || d != static_cast<double>(static_cast<std::uint64_t>(d))) {
      throw ConfigError("expected a non-negative integer for " + key);
    }
    return static_cast<std::uint64_t>(d);
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("expected a boolean for " + key);
}

std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_uint(key, item));
  }
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

}  // namespace

Algo parse_algo(const std::string& name) {
  if (name == "vtrace") return Algo::kVTrace;
  if (name == "r2d2") return Algo::kR2D2;
  throw ConfigError("unknown algorithm: " + name);
}

std::string algo_name(Algo algo) {
  return algo == Algo::kVTrace ? "vtrace" : "r2d2";
}

double RunConfig::effective_learning_rate() const {
  if (learning_rate) return *learning_rate;
  return algo == Algo::kR2D2 ? 1e-4 : 5e-4;
}

double RunConfig::effective_adam_epsilon() const {
  if (adam_epsilon) return *adam_epsilon;
  return algo == Algo::kR2D2 ? 1e-3 : 1e-5;
}

double RunConfig::effective_gradient_clip() const {
  if (gradient_clip) return *gradient_clip;
  return algo == Algo::kR2D2 ? 80.0 : 40.0;
}

std::size_t RunConfig::effective_queue_capacity() const {
  return queue_capacity != 0 ? queue_capacity : 4 * batch_size;
}

nn::NetworkSpec RunConfig::network_spec() const {
  nn::NetworkSpec s;
  s.input_dim = env.obs_dim();
  s.mlp_hidden_sizes = mlp_hidden;
  s.lstm_units = lstm_units;
  s.head = algo == Algo::kR2D2 ? nn::HeadKind::kDuelingQ
                               : nn::HeadKind::kPolicyValue;
  s.num_actions = env.num_actions();
  s.dueling_hidden_units = dueling_hidden;
  return s;
}

void RunConfig::validate() const {
  env.validate();
  network_spec().validate();
  if (unroll_length < 1) throw ConfigError("unroll_length must be >= 1");
  if (batch_size < 1) throw ConfigError("training batch size must be >= 1");
  if (inference_batch_size < 1) {
    throw ConfigError("inference batch size must be >= 1");
  }
  if (inference_workers < 1) throw ConfigError("need at least one inference worker");
  if (prefetch_workers < 1) throw ConfigError("need at least one prefetch worker");
  if (!(effective_learning_rate() > 0.0)) {
    throw ConfigError("learning_rate must be positive");
  }
  if (!(effective_adam_epsilon() > 0.0)) {
    throw ConfigError("adam_epsilon must be positive");
  }
  if (!(effective_gradient_clip() > 0.0)) {
    throw ConfigError("gradient_norm_clipping must be positive");
  }
  if (algo == Algo::kVTrace) {
    vtrace.validate();
  } else {
    q.validate();
    if (replay_min_size > replay_capacity) {
      throw ConfigError("min_replay_buffer_size exceeds replay_buffer_size");
    }
    if (exploration_streams < 1) {
      throw ConfigError("exploration_streams must be >= 1");
    }
  }
  if (eval_epsilon && !(*eval_epsilon >= 0.0 && *eval_epsilon <= 1.0)) {
    throw ConfigError("eval_epsilon must be in [0, 1]");
  }
}

void RunConfig::set(const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string v = trim(raw_value);
  auto num = [&] { return to_double(key, v); };
  auto uint = [&] { return to_uint(key, v); };

  if (key == "algo") algo = parse_algo(v);
  else if (key == "env") {
    const auto kind = envs::parse_env_kind(v);
    const auto seed = env.seed;
    env = envs::EnvSpec::defaults(kind);
    env.seed = seed;
  }
  else if (key == "catch_width" || key == "grid_size") env.width = uint();
  else if (key == "catch_height") env.height = uint();
  else if (key == "chain_length") env.chain_length = uint();
  else if (key == "episode_cap") env.episode_cap = uint();
  else if (key == "listen") listen = v;
  else if (key == "mlp_hidden_sizes") mlp_hidden = to_sizes(key, v);
  else if (key == "lstm_units") lstm_units = uint();
  else if (key == "dueling_hidden_units") dueling_hidden = uint();
  else if (key == "unroll_length") unroll_length = uint();
  else if (key == "training_batch_size") batch_size = uint();
  else if (key == "inference_batch_size") inference_batch_size = uint();
  else if (key == "inference_timeout_us") inference_timeout_us = uint();
  else if (key == "total_frames") total_frames = uint();
  else if (key == "learning_rate") learning_rate = num();
  else if (key == "adam_epsilon") adam_epsilon = num();
  else if (key == "adam_beta1") adam_beta1 = num();
  else if (key == "adam_beta2") adam_beta2 = num();
  else if (key == "gradient_norm_clipping") gradient_clip = num();
  else if (key == "discount") {
    vtrace.discount = num();
    q.discount = num();
  }
  else if (key == "vtrace_lambda") vtrace.lambda = num();
  else if (key == "rho_bar") vtrace.rho_bar = num();
  else if (key == "c_bar") vtrace.c_bar = num();
  else if (key == "entropy_coefficient") vtrace.entropy_coefficient = num();
  else if (key == "value_function_coefficient") vtrace.value_coefficient = num();
  else if (key == "n_steps") q.n_steps = uint();
  else if (key == "burn_in") q.burn_in = uint();
  else if (key == "sequence_length") q.sequence_length = uint();
  else if (key == "sequence_overlap") q.sequence_overlap = uint();
  else if (key == "target_update_interval") q.target_update_interval = uint();
  else if (key == "priority_eta") q.priority_eta = num();
  else if (key == "priority_exponent") q.priority_exponent = num();
  else if (key == "importance_sampling_exponent") q.importance_exponent = num();
  else if (key == "value_function_rescaling_epsilon") q.rescale_epsilon = num();
  else if (key == "replay_ratio") q.replay_ratio = num();
  else if (key == "replay_buffer_size") replay_capacity = uint();
  else if (key == "min_replay_buffer_size") replay_min_size = uint();
  else if (key == "queue_capacity") queue_capacity = uint();
  else if (key == "queue_overflow") {
    if (v == "block") queue_policy = replay::OverflowPolicy::kBlock;
    else if (v == "drop_oldest") queue_policy = replay::OverflowPolicy::kDropOldest;
    else throw ConfigError("queue_overflow must be block or drop_oldest");
  }
  else if (key == "inference_workers") inference_workers = uint();
  else if (key == "prefetch_workers") prefetch_workers = uint();
  else if (key == "exploration_streams") exploration_streams = uint();
  else if (key == "eval_epsilon") {
    eval_epsilon = num();
    q.eval_epsilon = *eval_epsilon;
  }
  else if (key == "train") train = to_bool(key, v);
  else if (key == "retain_snapshots") retain_snapshots = to_bool(key, v);
  else if (key == "retained_trajectories") retained_trajectories = uint();
  else if (key == "checkpoint") checkpoint = v;
  else if (key == "restore") restore = v;
  else if (key == "metrics") metrics = v;
  else if (key == "metrics_interval_s") metrics_interval_s = num();
  else if (key == "seed") {
    seed = uint();
    env.seed = seed;
  }
  else throw ConfigError("unknown config key: " + key);
}

void RunConfig::apply_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.resize(hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    }
    set(line.substr(0, eq), line.substr(eq + 1));
  }
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  apply_text(ss.str());
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  return {
      {"algo", algo_name(algo)},
      {"env", envs::env_kind_name(env.kind)},
      {"listen", listen},
      {"mlp_hidden_sizes", join(mlp_hidden)},
      {"lstm_units", std::to_string(lstm_units)},
      {"dueling_hidden_units", std::to_string(dueling_hidden)},
      {"unroll_length", std::to_string(unroll_length)},
      {"training_batch_size", std::to_string(batch_size)},
      {"inference_batch_size", std::to_string(inference_batch_size)},
      {"inference_timeout_us", std::to_string(inference_timeout_us)},
      {"total_frames", std::to_string(total_frames)},
      {"learning_rate", fmt(effective_learning_rate())},
      {"adam_epsilon", fmt(effective_adam_epsilon())},
      {"adam_beta1", fmt(adam_beta1)},
      {"adam_beta2", fmt(adam_beta2)},
      {"gradient_norm_clipping", fmt(effective_gradient_clip())},
      {"discount", fmt(algo == Algo::kR2D2 ? q.discount : vtrace.discount)},
      {"vtrace_lambda", fmt(vtrace.lambda)},
      {"rho_bar", fmt(vtrace.rho_bar)},
      {"c_bar", fmt(vtrace.c_bar)},
      {"entropy_coefficient", fmt(vtrace.entropy_coefficient)},
      {"value_function_coefficient", fmt(vtrace.value_coefficient)},
      {"n_steps", std::to_string(q.n_steps)},
      {"burn_in", std::to_string(q.burn_in)},
      {"sequence_length", std::to_string(q.sequence_length)},
      {"sequence_overlap", std::to_string(q.sequence_overlap)},
      {"target_update_interval", std::to_string(q.target_update_interval)},
      {"priority_eta", fmt(q.priority_eta)},
      {"priority_exponent", fmt(q.priority_exponent)},
      {"importance_sampling_exponent", fmt(q.importance_exponent)},
      {"value_function_rescaling_epsilon", fmt(q.rescale_epsilon)},
      {"replay_ratio", fmt(q.replay_ratio)},
      {"replay_buffer_size", std::to_string(replay_capacity)},
      {"min_replay_buffer_size", std::to_string(replay_min_size)},
      {"inference_workers", std::to_string(inference_workers)},
      {"prefetch_workers", std::to_string(prefetch_workers)},
      {"exploration_streams", std::to_string(exploration_streams)},
      {"seed", std::to_string(seed)},
  };
}

}  // namespace seedling
