#include "seedling/nn.h"

#include <algorithm>
#include <cmath>
#include <random>

namespace seedling::nn {
namespace {

// y[r][j] += sum_k x[r][k] * w[k][j] for R consecutive rows, accumulating in
// increasing k. The accumulation order per output element is the same for
// every R, so a row's result never depends on its batch neighbours.
template <std::size_t R>
void matmul_rows(const float* x, std::size_t K, const float* w, std::size_t N,
                 float* y) {
  constexpr std::size_t kCols = 8;
  std::size_t j0 = 0;
  for (; j0 + kCols <= N; j0 += kCols) {
    float acc[R][kCols];
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t j = 0; j < kCols; ++j) acc[r][j] = y[r * N + j0 + j];
    }
    for (std::size_t k = 0; k < K; ++k) {
      float xv[R];
      bool any = false;
      for (std::size_t r = 0; r < R; ++r) {
        xv[r] = x[r * K + k];
        any |= xv[r] != 0.0f;
      }
      if (!any) continue;
      const float* wk = w + k * N + j0;
      for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t j = 0; j < kCols; ++j) acc[r][j] += xv[r] * wk[j];
      }
    }
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t j = 0; j < kCols; ++j) y[r * N + j0 + j] = acc[r][j];
    }
  }
  for (; j0 < N; ++j0) {
    for (std::size_t r = 0; r < R; ++r) {
      float a = y[r * N + j0];
      for (std::size_t k = 0; k < K; ++k) {
        const float xv = x[r * K + k];
        if (xv != 0.0f) a += xv * w[k * N + j0];
      }
      y[r * N + j0] = a;
    }
  }
}

void matmul_acc(const float* x, std::size_t B, std::size_t K, const float* w,
                std::size_t N, float* y) {
  std::size_t r = 0;
  for (; r + 4 <= B; r += 4) matmul_rows<4>(x + r * K, K, w, N, y + r * N);
  for (; r < B; ++r) matmul_rows<1>(x + r * K, K, w, N, y + r * N);
}

void fill_bias(float* y, std::size_t B, const float* bias, std::size_t N) {
  for (std::size_t r = 0; r < B; ++r) std::copy_n(bias, N, y + r * N);
}

float dot(const float* a, const float* b, std::size_t n) {
  float acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  }
  float s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) +
            ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

// dw[k][j] += sum_b x[b][k] * dy[b][j]
void weight_grad(const float* x, std::size_t B, std::size_t K, const float* dy,
                 std::size_t N, float* dw) {
  for (std::size_t b = 0; b < B; ++b) {
    const float* dyb = dy + b * N;
    for (std::size_t k = 0; k < K; ++k) {
      const float xv = x[b * K + k];
      if (xv == 0.0f) continue;
      float* dwk = dw + k * N;
      for (std::size_t j = 0; j < N; ++j) dwk[j] += xv * dyb[j];
    }
  }
}

void bias_grad(const float* dy, std::size_t B, std::size_t N, float* db) {
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t j = 0; j < N; ++j) db[j] += dy[b * N + j];
  }
}

// dx[b][k] += sum_j dy[b][j] * w[k][j]; dx has row stride ldx.
void input_grad(const float* dy, std::size_t B, std::size_t N, const float* w,
                std::size_t K, float* dx, std::size_t ldx) {
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t k = 0; k < K; ++k) {
      dx[b * ldx + k] += dot(dy + b * N, w + k * N, N);
    }
  }
}

void relu_inplace(Tensor& t) {
  for (float& v : t.data) v = v > 0.0f ? v : 0.0f;
}

void check_finite(const Tensor& t, const char* layer) {
  for (float v : t.data) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite activation in layer ") +
                         layer);
    }
  }
}

inline float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t B = x.dim(0), K = x.dim(1), N = w.dim(1);
  Tensor y({B, N});
  fill_bias(y.ptr(), B, b.ptr(), N);
  matmul_acc(x.ptr(), B, K, w.ptr(), N, y.ptr());
  return y;
}

}  // namespace

void NetworkSpec::validate() const {
  if (input_dim < 1) throw ConfigError("network input_dim must be >= 1");
  if (num_actions < 2) throw ConfigError("network num_actions must be >= 2");
  for (std::size_t h : mlp_hidden_sizes) {
    if (h < 1) throw ConfigError("mlp hidden sizes must be >= 1");
  }
  if (head == HeadKind::kDuelingQ && dueling_hidden_units < 1) {
    throw ConfigError("dueling_hidden_units must be >= 1");
  }
}

std::size_t NetworkSpec::torso_dim() const {
  return mlp_hidden_sizes.empty() ? input_dim : mlp_hidden_sizes.back();
}

std::size_t NetworkSpec::feature_dim() const {
  return recurrent() ? lstm_units : torso_dim();
}

std::size_t ParamSnapshot::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

const Tensor& ParamSnapshot::get(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return tensors[i];
  }
  throw ConfigError("no parameter named " + std::string(name));
}

void SnapshotCell::publish(SnapshotPtr next) {
  std::lock_guard lock(mu_);
  if (current_ && next->version <= current_->version) {
    throw ConfigError("published snapshot version must increase");
  }
  current_ = std::move(next);
}

RecurrentState RecurrentState::zeros(std::size_t batch, std::size_t units) {
  return {Tensor({batch, units}), Tensor({batch, units})};
}

RecurrentState RecurrentState::slice(std::size_t r) const {
  const std::size_t U = hidden.dim(1);
  RecurrentState out = zeros(1, U);
  std::copy_n(hidden.ptr() + r * U, U, out.hidden.ptr());
  std::copy_n(cell.ptr() + r * U, U, out.cell.ptr());
  return out;
}

void RecurrentState::assign_row(std::size_t r, const RecurrentState& src,
                                std::size_t src_row) {
  const std::size_t U = hidden.dim(1);
  std::copy_n(src.hidden.ptr() + src_row * U, U, hidden.ptr() + r * U);
  std::copy_n(src.cell.ptr() + src_row * U, U, cell.ptr() + r * U);
}

Network::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::size_t in = spec_.input_dim;
  for (std::size_t i = 0; i < spec_.mlp_hidden_sizes.size(); ++i) {
    const std::size_t out = spec_.mlp_hidden_sizes[i];
    mlp_.push_back(add_dense("torso/dense" + std::to_string(i), in, out));
    in = out;
  }
  if (spec_.recurrent()) {
    const std::size_t U = spec_.lstm_units;
    lstm_wx_ = names_.size();
    add_param("lstm/wx", {spec_.lstm_input_dim(), 4 * U});
    lstm_wh_ = names_.size();
    add_param("lstm/wh", {U, 4 * U});
    lstm_b_ = names_.size();
    add_param("lstm/b", {4 * U});
  }
  const std::size_t F = spec_.feature_dim();
  const std::size_t A = spec_.num_actions;
  if (spec_.head == HeadKind::kPolicyValue) {
    policy_ = add_dense("policy", F, A);
    value_ = add_dense("value", F, 1);
  } else {
    const std::size_t H = spec_.dueling_hidden_units;
    value_hidden_ = add_dense("dueling/value_hidden", F, H);
    value_out_ = add_dense("dueling/value", H, 1);
    adv_hidden_ = add_dense("dueling/adv_hidden", F, H);
    adv_out_ = add_dense("dueling/adv", H, A);
  }
}

void Network::add_param(std::string name, std::vector<std::size_t> shape) {
  names_.push_back(std::move(name));
  shapes_.push_back(std::move(shape));
}

Network::DenseIndex Network::add_dense(const std::string& prefix,
                                       std::size_t in, std::size_t out) {
  DenseIndex idx;
  idx.w = names_.size();
  add_param(prefix + "/w", {in, out});
  idx.b = names_.size();
  add_param(prefix + "/b", {out});
  return idx;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& s : shapes_) n += Tensor::element_count(s);
  return n;
}

ParamSnapshot Network::zero_params() const {
  ParamSnapshot p;
  p.names = names_;
  for (const auto& s : shapes_) p.tensors.emplace_back(s);
  return p;
}

Gradients Network::zero_gradients() const {
  Gradients g;
  g.reserve(shapes_.size());
  for (const auto& s : shapes_) g.emplace_back(s);
  return g;
}

ParamSnapshot Network::init_params(std::uint64_t seed) const {
  ParamSnapshot p = zero_params();
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < shapes_.size(); ++i) {
    Tensor& t = p.tensors[i];
    if (t.rank() == 2) {
      const double limit =
          std::sqrt(6.0 / static_cast<double>(t.dim(0) + t.dim(1)));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (float& v : t.data) v = static_cast<float>(dist(rng));
    }
  }
  if (spec_.recurrent()) {
    // Gate order is i, f, g, o; a unit forget bias keeps early memory open.
    const std::size_t U = spec_.lstm_units;
    std::fill_n(p.tensors[lstm_b_].ptr() + U, U, 1.0f);
  }
  return p;
}

void Network::check_params(const ParamSnapshot& params) const {
  if (params.tensors.size() != shapes_.size()) {
    throw ConfigError("parameter count does not match network");
  }
  for (std::size_t i = 0; i < shapes_.size(); ++i) {
    if (params.tensors[i].shape != shapes_[i]) {
      throw ConfigError("parameter " + names_[i] + " has the wrong shape");
    }
  }
}

StepOutput Network::forward(const ParamSnapshot& params, const StepInput& in,
                            const RecurrentState& prev, StepTape* tape) const {
  if (params.tensors.size() != shapes_.size()) {
    throw ConfigError("parameter count does not match network");
  }
  const std::size_t B = in.batch;
  const std::size_t A = spec_.num_actions;
  if (B == 0) throw ConfigError("forward called with an empty batch");
  if (in.obs.size() != B * spec_.input_dim) {
    throw ConfigError("observation batch has the wrong size");
  }
  if (!in.reset.empty() && in.reset.size() != B) {
    throw ConfigError("reset flags have the wrong size");
  }
  const auto& P = params.tensors;
  auto is_reset = [&](std::size_t b) {
    return !in.reset.empty() && in.reset[b] != 0;
  };

  Tensor x({B, spec_.input_dim},
           std::vector<float>(in.obs.begin(), in.obs.end()));
  check_finite(x, "input");
  std::vector<Tensor> mlp_out;
  const Tensor* torso = &x;
  for (std::size_t i = 0; i < mlp_.size(); ++i) {
    Tensor h = dense(*torso, P[mlp_[i].w], P[mlp_[i].b]);
    relu_inplace(h);
    check_finite(h, names_[mlp_[i].w].c_str());
    mlp_out.push_back(std::move(h));
    torso = &mlp_out.back();
  }

  StepOutput out;
  Tensor lstm_in, gates, cell_tanh;
  RecurrentState prev_masked;
  if (spec_.recurrent()) {
    const std::size_t U = spec_.lstm_units;
    const std::size_t T = spec_.torso_dim();
    const std::size_t L = spec_.lstm_input_dim();
    if (in.prev_action.size() != B || in.prev_reward.size() != B) {
      throw ConfigError("previous action/reward batch has the wrong size");
    }
    if (prev.batch() != 0 &&
        (prev.batch() != B || prev.hidden.dim(1) != U ||
         prev.cell.rank() != 2 || prev.cell.dim(0) != B ||
         prev.cell.dim(1) != U)) {
      throw ConfigError("recurrent state has the wrong shape");
    }
    lstm_in = Tensor({B, L});
    prev_masked = RecurrentState::zeros(B, U);
    for (std::size_t b = 0; b < B; ++b) {
      float* row = lstm_in.ptr() + b * L;
      std::copy_n(torso->ptr() + b * T, T, row);
      if (is_reset(b)) continue;
      const std::int32_t a = in.prev_action[b];
      if (a >= 0) {
        if (static_cast<std::size_t>(a) >= A) {
          throw ConfigError("previous action out of range");
        }
        row[T + a] = 1.0f;
      }
      row[T + A] = in.prev_reward[b];
      if (prev.batch() != 0) prev_masked.assign_row(b, prev, b);
    }
    check_finite(lstm_in, "lstm/input");

    gates = Tensor({B, 4 * U});
    fill_bias(gates.ptr(), B, P[lstm_b_].ptr(), 4 * U);
    matmul_acc(lstm_in.ptr(), B, L, P[lstm_wx_].ptr(), 4 * U, gates.ptr());
    matmul_acc(prev_masked.hidden.ptr(), B, U, P[lstm_wh_].ptr(), 4 * U,
               gates.ptr());
    out.next = RecurrentState::zeros(B, U);
    cell_tanh = Tensor({B, U});
    for (std::size_t b = 0; b < B; ++b) {
      float* g = gates.ptr() + b * 4 * U;
      const float* c_prev = prev_masked.cell.ptr() + b * U;
      float* c = out.next.cell.ptr() + b * U;
      float* h = out.next.hidden.ptr() + b * U;
      float* tc = cell_tanh.ptr() + b * U;
      for (std::size_t u = 0; u < U; ++u) {
        const float ig = sigmoid(g[u]);
        const float fg = sigmoid(g[U + u]);
        const float gg = std::tanh(g[2 * U + u]);
        const float og = sigmoid(g[3 * U + u]);
        g[u] = ig;
        g[U + u] = fg;
        g[2 * U + u] = gg;
        g[3 * U + u] = og;
        c[u] = fg * c_prev[u] + ig * gg;
        tc[u] = std::tanh(c[u]);
        h[u] = og * tc[u];
      }
    }
    check_finite(out.next.cell, "lstm");
    out.features = out.next.hidden;
  } else {
    out.features = *torso;
  }

  Tensor value_hidden, adv_hidden;
  if (spec_.head == HeadKind::kPolicyValue) {
    out.head = dense(out.features, P[policy_.w], P[policy_.b]);
    check_finite(out.head, "policy");
    Tensor v = dense(out.features, P[value_.w], P[value_.b]);
    check_finite(v, "value");
    out.value = Tensor({B}, std::move(v.data));
  } else {
    value_hidden = dense(out.features, P[value_hidden_.w], P[value_hidden_.b]);
    relu_inplace(value_hidden);
    adv_hidden = dense(out.features, P[adv_hidden_.w], P[adv_hidden_.b]);
    relu_inplace(adv_hidden);
    Tensor v = dense(value_hidden, P[value_out_.w], P[value_out_.b]);
    Tensor adv = dense(adv_hidden, P[adv_out_.w], P[adv_out_.b]);
    out.head = Tensor({B, A});
    for (std::size_t b = 0; b < B; ++b) {
      float mean = 0.0f;
      for (std::size_t a = 0; a < A; ++a) mean += adv.data[b * A + a];
      mean /= static_cast<float>(A);
      for (std::size_t a = 0; a < A; ++a) {
        out.head.data[b * A + a] = v.data[b] + (adv.data[b * A + a] - mean);
      }
    }
    check_finite(out.head, "dueling");
  }

  if (tape != nullptr) {
    tape->batch = B;
    tape->reset.assign(B, 0);
    for (std::size_t b = 0; b < B; ++b) tape->reset[b] = is_reset(b) ? 1 : 0;
    tape->input = std::move(x);
    tape->mlp_out = std::move(mlp_out);
    tape->lstm_in = std::move(lstm_in);
    tape->prev = std::move(prev_masked);
    tape->gates = std::move(gates);
    tape->cell = spec_.recurrent() ? out.next.cell : Tensor();
    tape->cell_tanh = std::move(cell_tanh);
    tape->features = out.features;
    tape->value_hidden = std::move(value_hidden);
    tape->adv_hidden = std::move(adv_hidden);
  }
  return out;
}

RecurrentGrad Network::backward(const ParamSnapshot& params,
                                const StepTape& tape,
                                const OutputGrad& out_grad,
                                const RecurrentGrad& from_next,
                                Gradients& grads) const {
  const std::size_t B = tape.batch;
  const std::size_t A = spec_.num_actions;
  const std::size_t F = spec_.feature_dim();
  if (grads.size() != shapes_.size() || params.tensors.size() != shapes_.size()) {
    throw ConfigError("gradient/parameter list does not match network");
  }
  if (B == 0 || tape.features.size() != B * F) {
    throw ConfigError("tape does not match network");
  }
  if (out_grad.head.size() != B * A) {
    throw ConfigError("head gradient has the wrong size");
  }
  const auto& P = params.tensors;
  Tensor dfeat({B, F});

  auto dense_back = [&](const DenseIndex& idx, const Tensor& in,
                        std::size_t K, const float* dy, std::size_t N,
                        float* dx) {
    weight_grad(in.ptr(), B, K, dy, N, grads[idx.w].ptr());
    bias_grad(dy, B, N, grads[idx.b].ptr());
    if (dx != nullptr) input_grad(dy, B, N, P[idx.w].ptr(), K, dx, K);
  };

  if (spec_.head == HeadKind::kPolicyValue) {
    dense_back(policy_, tape.features, F, out_grad.head.ptr(), A, dfeat.ptr());
    if (!out_grad.value.data.empty()) {
      if (out_grad.value.size() != B) {
        throw ConfigError("value gradient has the wrong size");
      }
      dense_back(value_, tape.features, F, out_grad.value.ptr(), 1,
                 dfeat.ptr());
    }
  } else {
    const std::size_t H = spec_.dueling_hidden_units;
    Tensor dv({B}), dadv({B, A});
    for (std::size_t b = 0; b < B; ++b) {
      float sum = 0.0f;
      for (std::size_t a = 0; a < A; ++a) sum += out_grad.head.data[b * A + a];
      dv.data[b] = sum;
      const float mean = sum / static_cast<float>(A);
      for (std::size_t a = 0; a < A; ++a) {
        dadv.data[b * A + a] = out_grad.head.data[b * A + a] - mean;
      }
    }
    Tensor dvh({B, H}), dah({B, H});
    dense_back(value_out_, tape.value_hidden, H, dv.ptr(), 1, dvh.ptr());
    dense_back(adv_out_, tape.adv_hidden, H, dadv.ptr(), A, dah.ptr());
    for (std::size_t i = 0; i < B * H; ++i) {
      if (tape.value_hidden.data[i] <= 0.0f) dvh.data[i] = 0.0f;
      if (tape.adv_hidden.data[i] <= 0.0f) dah.data[i] = 0.0f;
    }
    dense_back(value_hidden_, tape.features, F, dvh.ptr(), H, dfeat.ptr());
    dense_back(adv_hidden_, tape.features, F, dah.ptr(), H, dfeat.ptr());
  }

  RecurrentGrad to_prev;
  const std::size_t T = spec_.torso_dim();
  Tensor dtorso({B, T});
  if (spec_.recurrent()) {
    const std::size_t U = spec_.lstm_units;
    const std::size_t L = spec_.lstm_input_dim();
    const bool has_next = !from_next.hidden.data.empty();
    Tensor dz({B, 4 * U});
    to_prev = {Tensor({B, U}), Tensor({B, U})};
    for (std::size_t b = 0; b < B; ++b) {
      const float* g = tape.gates.ptr() + b * 4 * U;
      const float* c_prev = tape.prev.cell.ptr() + b * U;
      const float* tc = tape.cell_tanh.ptr() + b * U;
      float* z = dz.ptr() + b * 4 * U;
      float* dc_prev = to_prev.cell.ptr() + b * U;
      for (std::size_t u = 0; u < U; ++u) {
        const float ig = g[u], fg = g[U + u], gg = g[2 * U + u],
                    og = g[3 * U + u];
        float dh = dfeat.data[b * U + u];
        float dc = 0.0f;
        if (has_next) {
          dh += from_next.hidden.data[b * U + u];
          dc = from_next.cell.data[b * U + u];
        }
        const float d_o = dh * tc[u];
        dc += dh * og * (1.0f - tc[u] * tc[u]);
        const float d_i = dc * gg;
        const float d_g = dc * ig;
        const float d_f = dc * c_prev[u];
        dc_prev[u] = dc * fg;
        z[u] = d_i * ig * (1.0f - ig);
        z[U + u] = d_f * fg * (1.0f - fg);
        z[2 * U + u] = d_g * (1.0f - gg * gg);
        z[3 * U + u] = d_o * og * (1.0f - og);
      }
    }
    weight_grad(tape.lstm_in.ptr(), B, L, dz.ptr(), 4 * U,
                grads[lstm_wx_].ptr());
    weight_grad(tape.prev.hidden.ptr(), B, U, dz.ptr(), 4 * U,
                grads[lstm_wh_].ptr());
    bias_grad(dz.ptr(), B, 4 * U, grads[lstm_b_].ptr());
    // Only the torso slice of the LSTM input needs a gradient.
    input_grad(dz.ptr(), B, 4 * U, P[lstm_wx_].ptr(), T, dtorso.ptr(), T);
    input_grad(dz.ptr(), B, 4 * U, P[lstm_wh_].ptr(), U, to_prev.hidden.ptr(),
               U);
    for (std::size_t b = 0; b < B; ++b) {
      if (tape.reset[b]) {
        std::fill_n(to_prev.hidden.ptr() + b * U, U, 0.0f);
        std::fill_n(to_prev.cell.ptr() + b * U, U, 0.0f);
      }
    }
  } else {
    dtorso = std::move(dfeat);
  }

  for (std::size_t i = mlp_.size(); i-- > 0;) {
    const Tensor& out = tape.mlp_out[i];
    const std::size_t N = out.dim(1);
    for (std::size_t j = 0; j < B * N; ++j) {
      if (out.data[j] <= 0.0f) dtorso.data[j] = 0.0f;
    }
    const Tensor& in = i == 0 ? tape.input : tape.mlp_out[i - 1];
    const std::size_t K = in.dim(1);
    Tensor dx;
    if (i > 0) dx = Tensor({B, K});
    dense_back(mlp_[i], in, K, dtorso.ptr(), N, i > 0 ? dx.ptr() : nullptr);
    if (i > 0) dtorso = std::move(dx);
  }
  return to_prev;
}

Gradients Network::backward(const ParamSnapshot& params, const StepTape& tape,
                            const OutputGrad& out_grad) const {
  Gradients g = zero_gradients();
  backward(params, tape, out_grad, RecurrentGrad{}, g);
  return g;
}

ParamSnapshot Adam::step(const ParamSnapshot& params, const Gradients& grads) {
  if (grads.size() != params.tensors.size()) {
    throw ConfigError("gradient list does not match parameters");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].size() != params.tensors[i].size()) {
      throw ConfigError("gradient shape does not match parameter " +
                        (i < params.names.size() ? params.names[i] : ""));
    }
  }
  if (!all_finite(grads)) {
    throw NumericError("non-finite gradient; update rejected");
  }
  if (m_.empty()) {
    for (const auto& t : params.tensors) {
      m_.emplace_back(t.size(), 0.0);
      v_.emplace_back(t.size(), 0.0);
    }
  }
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  ParamSnapshot next;
  next.version = params.version + 1;
  next.names = params.names;
  next.tensors = params.tensors;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    float* w = next.tensors[i].ptr();
    const float* g = grads[i].ptr();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < m.size(); ++j) {
      const double gj = g[j];
      m[j] = b1 * m[j] + (1.0 - b1) * gj;
      v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] = static_cast<float>(
          w[j] - config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon));
    }
  }
  return next;
}

double global_norm(const Gradients& grads) {
  double sq = 0.0;
  for (const auto& t : grads) {
    for (float v : t.data) sq += static_cast<double>(v) * v;
  }
  return std::sqrt(sq);
}

double clip_global_norm(Gradients& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("max_norm must be positive");
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const float scale = static_cast<float>(max_norm / norm);
    for (auto& t : grads) {
      for (float& v : t.data) v *= scale;
    }
  }
  return norm;
}

bool all_finite(const Gradients& grads) {
  for (const auto& t : grads) {
    for (float v : t.data) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

}  // namespace seedling::nn
