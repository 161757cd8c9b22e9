#include <atomic>
#include <csignal>
#include <iostream>
#include <thread>

#include "CLI11.hpp"

#include "seedling/learner.h"

namespace {

volatile std::sig_atomic_t g_signal = 0;

void on_signal(int) { g_signal = 1; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seedling learner: batched inference and training service"};
  std::string algo, env, listen, config_file, checkpoint, restore, metrics;
  std::optional<std::size_t> unroll, batch, inference_batch;
  std::optional<std::uint64_t> frames, seed;
  std::optional<double> eval_epsilon;
  std::vector<std::string> overrides;
  bool no_train = false;
  app.add_option("--algo", algo, "vtrace or r2d2");
  app.add_option("--env", env, "catch, chain or grid");
  app.add_option("--listen", listen, "HOST:PORT or unix:PATH");
  app.add_option("--unroll", unroll, "unroll length (V-trace)");
  app.add_option("--batch", batch, "training batch size");
  app.add_option("--inference-batch", inference_batch, "inference batch size");
  app.add_option("--frames", frames, "frame budget (0 = unlimited)");
  app.add_option("--config", config_file, "key=value configuration file");
  app.add_option("--checkpoint", checkpoint, "write final parameters here");
  app.add_option("--restore", restore, "start from these parameters");
  app.add_option("--metrics", metrics, "metrics output file ('-' = stdout)");
  app.add_option("--seed", seed, "random seed");
  app.add_option("--eval-epsilon", eval_epsilon,
                 "act epsilon-greedily with this epsilon for every slot");
  app.add_option("--set", overrides, "extra key=value setting (repeatable)");
  app.add_flag("--no-train", no_train, "serve inference only");
  CLI11_PARSE(app, argc, argv);

  seedling::RunConfig cfg;
  try {
    if (!algo.empty()) cfg.set("algo", algo);
    if (!config_file.empty()) cfg.load_file(config_file);
    if (!algo.empty()) cfg.set("algo", algo);
    if (!env.empty()) cfg.set("env", env);
    if (!listen.empty()) cfg.listen = listen;
    if (unroll) cfg.unroll_length = *unroll;
    if (batch) cfg.batch_size = *batch;
    if (inference_batch) cfg.inference_batch_size = *inference_batch;
    if (frames) cfg.total_frames = *frames;
    if (seed) cfg.set("seed", std::to_string(*seed));
    if (eval_epsilon) cfg.set("eval_epsilon", std::to_string(*eval_epsilon));
    if (!checkpoint.empty()) cfg.checkpoint = checkpoint;
    if (!restore.empty()) cfg.restore = restore;
    if (!metrics.empty()) cfg.metrics = metrics;
    if (no_train) cfg.train = false;
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw seedling::ConfigError("--set needs key=value");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
  } catch (const seedling::Error& e) {
    std::cerr << "seedling-learner: " << e.what() << '\n';
    return 2;
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::signal(SIGPIPE, SIG_IGN);

  try {
    seedling::learner::LearnerService service(cfg);
    service.start();
    std::cerr << "seedling-learner listening on " << service.address() << std::endl;
    std::thread watcher([&] {
      while (!service.stopping()) {
        if (g_signal) service.stop();
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
      }
    });
    service.wait();
    watcher.join();
    if (cfg.metrics != "-") {
      std::cout << seedling::learner::to_json(service.summary()) << std::endl;
    }
  } catch (const std::exception& e) {
    std::cerr << "seedling-learner: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
