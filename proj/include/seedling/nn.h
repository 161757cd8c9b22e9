#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seedling/tensor.h"

namespace seedling::nn {

enum class HeadKind { kPolicyValue, kDuelingQ };

// Architecture: ReLU MLP torso -> optional LSTM (fed the torso output, the
// one-hot previous action and the previous reward) -> policy/value or dueling
// Q head.
struct NetworkSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> mlp_hidden_sizes{64};
  std::size_t lstm_units = 64;  // 0 = feed-forward
  HeadKind head = HeadKind::kPolicyValue;
  std::size_t num_actions = 2;
  std::size_t dueling_hidden_units = 64;

  void validate() const;
  std::size_t torso_dim() const;
  std::size_t lstm_input_dim() const { return torso_dim() + num_actions + 1; }
  std::size_t feature_dim() const;
  bool recurrent() const { return lstm_units > 0; }
};

// Immutable, versioned set of named parameters. Always handled through
// SnapshotPtr once published so readers never observe a partial update.
struct ParamSnapshot {
  std::uint64_t version = 0;
  std::vector<std::string> names;
  std::vector<Tensor> tensors;

  std::size_t parameter_count() const;
  const Tensor& get(std::string_view name) const;
  bool operator==(const ParamSnapshot&) const = default;
};

using SnapshotPtr = std::shared_ptr<const ParamSnapshot>;
using Gradients = std::vector<Tensor>;

// Single-writer/many-reader publication point for the live parameters.
class SnapshotCell {
 public:
  SnapshotCell() = default;
  explicit SnapshotCell(SnapshotPtr initial) : current_(std::move(initial)) {}

  SnapshotPtr load() const {
    std::lock_guard lock(mu_);
    return current_;
  }
  // Rejects versions that do not increase.
  void publish(SnapshotPtr next);

 private:
  mutable std::mutex mu_;
  SnapshotPtr current_;
};

struct RecurrentState {
  Tensor hidden;  // [B, units]
  Tensor cell;    // [B, units]

  static RecurrentState zeros(std::size_t batch, std::size_t units);
  std::size_t batch() const { return hidden.rank() ? hidden.dim(0) : 0; }
  // Copies row `r` out as a batch-1 state.
  RecurrentState slice(std::size_t r) const;
  void assign_row(std::size_t r, const RecurrentState& src, std::size_t src_row);
};

struct StepInput {
  std::size_t batch = 0;
  std::span<const float> obs;                 // [batch * input_dim]
  std::span<const std::int32_t> prev_action;  // [batch]
  std::span<const float> prev_reward;         // [batch]
  // Nonzero marks an episode start: recurrent state, previous action and
  // previous reward are zeroed for that row before the step. May be empty.
  std::span<const std::uint8_t> reset;
};

struct StepOutput {
  Tensor head;      // [B, A] policy logits or Q-values
  Tensor value;     // [B], policy/value head only
  Tensor features;  // [B, F] input to the head
  RecurrentState next;
};

// Activations kept by a forward step for its backward pass.
struct StepTape {
  std::size_t batch = 0;
  std::vector<std::uint8_t> reset;
  Tensor input;                  // [B, input_dim]
  std::vector<Tensor> mlp_out;   // post-ReLU, one per hidden layer
  Tensor lstm_in;                // [B, lstm_input_dim]
  RecurrentState prev;           // after reset masking
  Tensor gates;                  // [B, 4U] activated i, f, g, o
  Tensor cell;                   // [B, U]
  Tensor cell_tanh;              // [B, U]
  Tensor features;               // [B, F]
  Tensor value_hidden;           // dueling only
  Tensor adv_hidden;             // dueling only
};

struct OutputGrad {
  Tensor head;   // [B, A]
  Tensor value;  // [B], may be empty
};

struct RecurrentGrad {
  Tensor hidden;
  Tensor cell;
};

class Network {
 public:
  explicit Network(NetworkSpec spec);

  const NetworkSpec& spec() const { return spec_; }
  // Names and shapes in canonical order.
  const std::vector<std::string>& param_names() const { return names_; }
  const std::vector<std::vector<std::size_t>>& param_shapes() const {
    return shapes_;
  }
  std::size_t parameter_count() const;

  // Glorot-uniform weights, zero biases (forget gate bias 1), version 0.
  ParamSnapshot init_params(std::uint64_t seed) const;
  ParamSnapshot zero_params() const;
  Gradients zero_gradients() const;
  // Throws ConfigError if `params` does not match this architecture.
  void check_params(const ParamSnapshot& params) const;

  // One time step for a batch. When `tape` is non-null it receives what
  // backward() needs. Throws ConfigError on shape mismatch and NumericError
  // naming the layer on a non-finite activation.
  StepOutput forward(const ParamSnapshot& params, const StepInput& input,
                     const RecurrentState& prev, StepTape* tape = nullptr) const;

  // Accumulates parameter gradients of one step into `grads` and returns the
  // gradient with respect to the incoming recurrent state. `from_next` is the
  // gradient flowing into this step's output state (may be empty).
  RecurrentGrad backward(const ParamSnapshot& params, const StepTape& tape,
                         const OutputGrad& out_grad,
                         const RecurrentGrad& from_next,
                         Gradients& grads) const;

  // Single-step convenience form.
  Gradients backward(const ParamSnapshot& params, const StepTape& tape,
                     const OutputGrad& out_grad) const;

 private:
  struct DenseIndex {
    std::size_t w = 0;
    std::size_t b = 0;
  };

  void add_param(std::string name, std::vector<std::size_t> shape);
  DenseIndex add_dense(const std::string& prefix, std::size_t in,
                       std::size_t out);

  NetworkSpec spec_;
  std::vector<std::string> names_;
  std::vector<std::vector<std::size_t>> shapes_;
  std::vector<DenseIndex> mlp_;
  std::size_t lstm_wx_ = 0, lstm_wh_ = 0, lstm_b_ = 0;
  DenseIndex policy_, value_;
  DenseIndex value_hidden_, value_out_, adv_hidden_, adv_out_;
};

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-3;
};

// Adam with bias correction. Moment accumulators start at zero and are owned
// here; each successful step returns a snapshot with version + 1.
class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(config) {}

  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  std::uint64_t steps() const { return steps_; }

  // Throws NumericError (leaving optimizer state untouched) if any gradient
  // is non-finite.
  ParamSnapshot step(const ParamSnapshot& params, const Gradients& grads);

 private:
  AdamConfig config_;
  std::uint64_t steps_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

double global_norm(const Gradients& grads);
// Scales all gradients by max_norm / norm when norm > max_norm. Returns the
// norm before clipping.
double clip_global_norm(Gradients& grads, double max_norm);
bool all_finite(const Gradients& grads);

// Parameter checkpoint: "SEEDLING", u32 LE version, then per tensor
// u16 name length, name, u8 rank, u32 dims..., raw LE f32 data.
std::vector<std::uint8_t> encode_checkpoint(const ParamSnapshot& params);
ParamSnapshot decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::string& path, const ParamSnapshot& params);
ParamSnapshot load_checkpoint(const std::string& path);

}  // namespace seedling::nn
