#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "seedling/bench.h"
#include "seedling/envs.h"
#include "seedling/error.h"
#include "seedling/qlearn.h"
#include "seedling/replay.h"
#include "seedling/vtrace.h"
#include "seedling/wire.h"

namespace py = pybind11;
using namespace seedling;

namespace {

std::vector<std::uint8_t> to_bytes(const py::bytes& b) {
  const std::string s = b;
  return {s.begin(), s.end()};
}

py::bytes from_bytes(const std::vector<std::uint8_t>& v) {
  return py::bytes(reinterpret_cast<const char*>(v.data()), v.size());
}

}  // namespace

PYBIND11_MODULE(_seedling, m) {
  m.doc() = "seedling core bindings";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ProtocolError>(m, "ProtocolError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  // Q-learning helpers.
  m.def("rescale", &qlearn::rescale, py::arg("x"), py::arg("eps") = 1e-3);
  m.def("rescale_inverse", &qlearn::rescale_inverse, py::arg("y"), py::arg("eps") = 1e-3);
  m.def("epsilon_for_actor", &qlearn::epsilon_for_actor, py::arg("i"), py::arg("n"));
  m.def(
      "sequence_priority",
      [](const std::vector<double>& abs_td, double eta) {
        return qlearn::sequence_priority(abs_td, eta);
      },
      py::arg("abs_td"), py::arg("eta") = 0.9);

  m.def(
      "vtrace_targets",
      [](std::vector<double> behavior_log_prob, std::vector<double> target_log_prob,
         std::vector<double> reward, std::vector<std::uint8_t> done, std::vector<double> value,
         double bootstrap_value, double discount, double lambda, double rho_bar, double c_bar) {
        vtrace::VTraceInputs in;
        in.behavior_log_prob = std::move(behavior_log_prob);
        in.target_log_prob = std::move(target_log_prob);
        in.reward = std::move(reward);
        in.done = std::move(done);
        in.value = std::move(value);
        in.bootstrap_value = bootstrap_value;
        vtrace::VTraceConfig cfg;
        cfg.discount = discount;
        cfg.lambda = lambda;
        cfg.rho_bar = rho_bar;
        cfg.c_bar = c_bar;
        const auto out = vtrace::vtrace_targets(in, cfg);
        py::dict d;
        d["vs"] = out.vs;
        d["pg_advantages"] = out.pg_advantages;
        d["rhos"] = out.rhos;
        return d;
      },
      py::arg("behavior_log_prob"), py::arg("target_log_prob"), py::arg("reward"),
      py::arg("done"), py::arg("value"), py::arg("bootstrap_value"),
      py::arg("discount") = 0.99, py::arg("lambda_") = 1.0, py::arg("rho_bar") = 1.0,
      py::arg("c_bar") = 1.0);

  m.def(
      "cost_per_billion",
      [](double fps, double cpu_cores, const std::vector<std::pair<std::string, double>>& accel,
         double cpu_price, double p100_price, double tpu_price) {
        std::vector<bench::Accelerators> a;
        for (const auto& [kind, count] : accel) a.push_back({kind, count});
        bench::ResourcePricing p;
        p.cpu_core_per_hour = cpu_price;
        p.p100_per_hour = p100_price;
        p.tpu_core_per_hour = tpu_price;
        return bench::cost_per_billion(fps, cpu_cores, a, p);
      },
      py::arg("fps"), py::arg("cpu_cores"), py::arg("accelerators") = py::list(),
      py::arg("cpu_price") = 0.0475, py::arg("p100_price") = 1.46, py::arg("tpu_price") = 1.00);

  // Wire protocol.
  py::class_<wire::Hello>(m, "Hello")
      .def(py::init<std::uint32_t, std::uint32_t>(), py::arg("actor_id") = 0,
           py::arg("num_envs") = 0)
      .def_readwrite("actor_id", &wire::Hello::actor_id)
      .def_readwrite("num_envs", &wire::Hello::num_envs)
      .def(py::self == py::self);
  py::class_<wire::StepRequest>(m, "StepRequest")
      .def(py::init([](std::uint32_t env_id, float reward, std::uint8_t done,
                       std::vector<float> obs) {
             return wire::StepRequest{env_id, reward, done, std::move(obs)};
           }),
           py::arg("env_id") = 0, py::arg("reward") = 0.0f, py::arg("done") = 0,
           py::arg("obs") = std::vector<float>{})
      .def_readwrite("env_id", &wire::StepRequest::env_id)
      .def_readwrite("reward", &wire::StepRequest::reward)
      .def_readwrite("done", &wire::StepRequest::done)
      .def_readwrite("obs", &wire::StepRequest::obs)
      .def(py::self == py::self);
  py::class_<wire::ActionResponse>(m, "ActionResponse")
      .def(py::init<std::uint32_t, std::uint32_t>(), py::arg("env_id") = 0,
           py::arg("action") = 0)
      .def_readwrite("env_id", &wire::ActionResponse::env_id)
      .def_readwrite("action", &wire::ActionResponse::action)
      .def(py::self == py::self);
  py::class_<wire::ErrorMsg>(m, "ErrorMsg")
      .def(py::init([](std::uint16_t code, std::string message) {
             return wire::ErrorMsg{code, std::move(message)};
           }),
           py::arg("code") = 0, py::arg("message") = "")
      .def_readwrite("code", &wire::ErrorMsg::code)
      .def_readwrite("message", &wire::ErrorMsg::message)
      .def(py::self == py::self);

  m.def(
      "encode", [](const wire::Message& msg) { return from_bytes(wire::encode(msg)); },
      py::arg("message"));
  m.def(
      "decode",
      [](const py::bytes& data) -> py::tuple {
        const auto bytes = to_bytes(data);
        std::size_t used = 0;
        auto msg = wire::decode(bytes, used);
        if (!msg) return py::make_tuple(py::none(), 0);
        return py::make_tuple(py::cast(*msg), used);
      },
      py::arg("data"),
      "Decodes the frame at the front of `data`; returns (message, bytes used) or "
      "(None, 0) when the frame is incomplete.");

  // Replay.
  py::class_<Trajectory, std::shared_ptr<Trajectory>>(m, "Trajectory")
      .def(py::init<>())
      .def_readwrite("actor_id", &Trajectory::actor_id)
      .def_readwrite("env_id", &Trajectory::env_id)
      .def_readwrite("obs_dim", &Trajectory::obs_dim)
      .def_readwrite("num_actions", &Trajectory::num_actions)
      .def_readwrite("obs", &Trajectory::obs)
      .def_readwrite("reward_in", &Trajectory::reward_in)
      .def_readwrite("done_in", &Trajectory::done_in)
      .def_readwrite("prev_action", &Trajectory::prev_action)
      .def_readwrite("action", &Trajectory::action)
      .def_readwrite("behavior", &Trajectory::behavior)
      .def_readwrite("version", &Trajectory::version)
      .def("records", &Trajectory::records);

  py::class_<replay::PrioritizedBuffer>(m, "PrioritizedBuffer")
      .def(py::init([](std::size_t capacity, std::size_t min_size, double priority_exponent,
                       double importance_exponent, std::uint64_t seed) {
             replay::PrioritizedConfig c;
             c.capacity = capacity;
             c.min_size = min_size;
             c.priority_exponent = priority_exponent;
             c.importance_exponent = importance_exponent;
             c.seed = seed;
             return std::make_unique<replay::PrioritizedBuffer>(c);
           }),
           py::arg("capacity"), py::arg("min_size") = 1, py::arg("priority_exponent") = 0.9,
           py::arg("importance_exponent") = 0.6, py::arg("seed") = 0)
      .def(
          "insert",
          [](replay::PrioritizedBuffer& b, const Trajectory& t, std::optional<double> p) {
            return b.insert(t, p);
          },
          py::arg("sequence"), py::arg("priority") = py::none())
      .def(
          "sample",
          [](replay::PrioritizedBuffer& b, std::size_t batch) -> py::object {
            auto s = b.sample(batch);
            if (!s) return py::none();
            py::dict d;
            d["ids"] = s->ids;
            d["probabilities"] = s->probabilities;
            d["weights"] = s->weights;
            py::list seqs;
            for (const auto& t : s->sequences) seqs.append(*t);
            d["sequences"] = seqs;
            return d;
          },
          py::arg("batch_size"))
      .def(
          "update_priorities",
          [](replay::PrioritizedBuffer& b, const std::vector<std::uint64_t>& ids,
             const std::vector<double>& p) { b.update_priorities(ids, p); },
          py::arg("ids"), py::arg("priorities"))
      .def("__len__", &replay::PrioritizedBuffer::size)
      .def("contains", &replay::PrioritizedBuffer::contains)
      .def("priority", &replay::PrioritizedBuffer::priority)
      .def("max_priority", &replay::PrioritizedBuffer::max_priority)
      .def("tree_total", &replay::PrioritizedBuffer::tree_total)
      .def("exact_total", &replay::PrioritizedBuffer::exact_total);

  // Environments.
  py::class_<envs::EnvSpec>(m, "EnvSpec")
      .def(py::init([](const std::string& kind) {
             return envs::EnvSpec::defaults(envs::parse_env_kind(kind));
           }),
           py::arg("kind") = "catch")
      .def_property_readonly("kind",
                             [](const envs::EnvSpec& s) { return envs::env_kind_name(s.kind); })
      .def_readwrite("width", &envs::EnvSpec::width)
      .def_readwrite("height", &envs::EnvSpec::height)
      .def_readwrite("chain_length", &envs::EnvSpec::chain_length)
      .def_readwrite("episode_cap", &envs::EnvSpec::episode_cap)
      .def_readwrite("seed", &envs::EnvSpec::seed)
      .def_property_readonly("obs_dim", &envs::EnvSpec::obs_dim)
      .def_property_readonly("num_actions", &envs::EnvSpec::num_actions)
      .def("validate", &envs::EnvSpec::validate);

  py::class_<envs::Environment>(m, "Environment")
      .def("reset", &envs::Environment::reset)
      .def(
          "step",
          [](envs::Environment& e, int action) {
            const auto r = e.step(action);
            return py::make_tuple(r.obs, r.reward, r.done);
          },
          py::arg("action"), "Returns (obs, reward, done).")
      .def_property_readonly("episode_steps", &envs::Environment::episode_steps);

  m.def("make_env", &envs::make_env, py::arg("spec"));
  m.def("oracle_q", &envs::oracle_q, py::arg("spec"), py::arg("discount"),
        py::arg("tolerance") = 1e-10,
        "Optimal Q-values by value iteration, flattened as [state * actions + action].");
}
