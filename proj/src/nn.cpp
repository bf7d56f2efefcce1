#include "nccqr/nn.hpp"

#include "nccqr/kernels.hpp"
#include "nccqr/rng.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace nccqr {

std::size_t NetworkParams::parameter_count() const {
  std::size_t count = 0;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    count += static_cast<std::size_t>(widths[i + 1] * (widths[i] + 1));
  return count;
}

void NetworkParams::validate() const {
  if (widths.size() < 3) throw std::invalid_argument("network needs at least one hidden layer");
  if (widths.back() != 2) throw std::invalid_argument("network must have exactly 2 outputs");
  for (const auto w : widths)
    if (w < 1) throw std::invalid_argument("layer widths must be positive");
  if (weights.size() != widths.size() - 1 || biases.size() != widths.size() - 1)
    throw std::invalid_argument("layer count does not match widths");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i].rows() != widths[i + 1] || weights[i].cols() != widths[i] ||
        biases[i].size() != widths[i + 1])
      throw std::invalid_argument("shape mismatch in layer " + std::to_string(i));
    if (!weights[i].allFinite() || !biases[i].allFinite())
      throw std::invalid_argument("non-finite parameter in layer " + std::to_string(i));
  }
  if (output_bound && !(*output_bound > 0.0))
    throw std::invalid_argument("output bound must be positive");
}

Gradients Gradients::zeros_like(const NetworkParams& params) {
  Gradients g;
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    g.weights.push_back(Eigen::MatrixXd::Zero(params.weights[i].rows(), params.weights[i].cols()));
    g.biases.push_back(Eigen::VectorXd::Zero(params.biases[i].size()));
  }
  return g;
}

bool Gradients::all_finite() const {
  for (std::size_t i = 0; i < weights.size(); ++i)
    if (!weights[i].allFinite() || !biases[i].allFinite()) return false;
  return true;
}

AdamState AdamState::for_params(const NetworkParams& params, AdamHyper hyper) {
  return AdamState{Gradients::zeros_like(params), Gradients::zeros_like(params), 0, hyper};
}

NetworkParams init_network(Eigen::Index input_dim, std::span<const Eigen::Index> hidden_widths,
                           std::uint64_t seed) {
  if (input_dim <= 0) throw std::invalid_argument("init_network: input dimension must be >= 1");
  if (hidden_widths.empty()) throw std::invalid_argument("init_network: no hidden layers");
  NetworkParams params;
  params.widths.push_back(input_dim);
  for (const auto w : hidden_widths) {
    if (w < 1) throw std::invalid_argument("init_network: hidden width must be >= 1");
    params.widths.push_back(w);
  }
  params.widths.push_back(2);

  Rng rng(seed);
  for (std::size_t i = 0; i + 1 < params.widths.size(); ++i) {
    const Eigen::Index fan_in = params.widths[i];
    const Eigen::Index fan_out = params.widths[i + 1];
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    Eigen::MatrixXd W(fan_out, fan_in);
    for (Eigen::Index r = 0; r < fan_out; ++r)
      for (Eigen::Index c = 0; c < fan_in; ++c) W(r, c) = sd * rng.normal();
    params.weights.push_back(std::move(W));
    params.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return params;
}

void ForwardPass::run(const NetworkParams& params, const Eigen::MatrixXd& inputs) {
  if (inputs.rows() != params.input_dim())
    throw std::invalid_argument("forward: input dimension " + std::to_string(inputs.rows()) +
                                " does not match network input " +
                                std::to_string(params.input_dim()));
  const std::size_t L = params.layer_count();
  inputs_ = &inputs;
  pre_.resize(L);
  post_.resize(L - 1);
  const Eigen::MatrixXd* current = &inputs;
  for (std::size_t i = 0; i < L; ++i) {
    kernels::affine_forward(params.weights[i], params.biases[i], *current, pre_[i]);
    if (i + 1 < L) {
      kernels::relu_forward(pre_[i], post_[i]);
      current = &post_[i];
    }
  }
  outputs_ = pre_.back();
  if (params.output_bound) {
    const double B = *params.output_bound;
    outputs_ = outputs_.cwiseMax(-B).cwiseMin(B);
  }
}

Gradients ForwardPass::backward(const NetworkParams& params,
                                const Eigen::MatrixXd& output_grads) const {
  if (inputs_ == nullptr) throw std::logic_error("backward called before run");
  const Eigen::Index n = inputs_->cols();
  if (output_grads.rows() != 2 || output_grads.cols() != n)
    throw std::invalid_argument("backward: output gradient shape mismatch");

  const std::size_t L = params.layer_count();
  Gradients grads;
  grads.weights.resize(L);
  grads.biases.resize(L);
  if (n == 0) return Gradients::zeros_like(params);

  Eigen::MatrixXd delta = output_grads;
  if (params.output_bound) {
    const double B = *params.output_bound;
    delta = (pre_.back().array().abs() > B).select(0.0, delta);
  }
  Eigen::MatrixXd delta_in;
  for (std::size_t li = L; li-- > 0;) {
    const Eigen::MatrixXd& layer_in = li == 0 ? *inputs_ : post_[li - 1];
    kernels::affine_backward(params.weights[li], layer_in, delta, grads.weights[li],
                             grads.biases[li], li == 0 ? nullptr : &delta_in);
    if (li > 0) {
      kernels::relu_backward(pre_[li - 1], delta_in);
      delta.swap(delta_in);
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < L; ++i) {
    grads.weights[i] *= inv_n;
    grads.biases[i] *= inv_n;
  }
  return grads;
}

std::pair<double, double> forward(const NetworkParams& params, std::span<const double> x) {
  if (static_cast<Eigen::Index>(x.size()) != params.input_dim())
    throw std::invalid_argument("forward: input dimension " + std::to_string(x.size()) +
                                " does not match network input " +
                                std::to_string(params.input_dim()));
  Eigen::MatrixXd col = Eigen::Map<const Eigen::VectorXd>(x.data(), params.input_dim());
  ForwardPass pass;
  pass.run(params, col);
  return {pass.outputs()(0, 0), pass.outputs()(1, 0)};
}

Eigen::MatrixXd forward_batch(const NetworkParams& params, const Eigen::MatrixXd& X) {
  if (X.cols() != params.input_dim())
    throw std::invalid_argument("forward_batch: input dimension " + std::to_string(X.cols()) +
                                " does not match network input " +
                                std::to_string(params.input_dim()));
  if (X.rows() == 0) return Eigen::MatrixXd(0, 2);
  const Eigen::MatrixXd inputs = X.transpose();
  ForwardPass pass;
  pass.run(params, inputs);
  return pass.outputs().transpose();
}

Gradients backward(const NetworkParams& params, const Eigen::MatrixXd& X,
                   const Eigen::MatrixXd& output_grads) {
  if (output_grads.rows() != X.rows() || output_grads.cols() != 2)
    throw std::invalid_argument("backward: output_grads must be n x 2 with n = rows of X");
  if (X.cols() != params.input_dim())
    throw std::invalid_argument("backward: input dimension mismatch");
  if (X.rows() == 0) return Gradients::zeros_like(params);
  const Eigen::MatrixXd inputs = X.transpose();
  ForwardPass pass;
  pass.run(params, inputs);
  return pass.backward(params, output_grads.transpose());
}

void adam_step(NetworkParams& params, const Gradients& grads, AdamState& state) {
  if (grads.weights.size() != params.weights.size() ||
      state.first_moment.weights.size() != params.weights.size())
    throw std::invalid_argument("adam_step: layer count mismatch");
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    if (grads.weights[i].rows() != params.weights[i].rows() ||
        grads.weights[i].cols() != params.weights[i].cols() ||
        grads.biases[i].size() != params.biases[i].size())
      throw std::invalid_argument("adam_step: gradient shape mismatch in layer " +
                                  std::to_string(i));
  }
  if (!grads.all_finite()) throw std::domain_error("adam_step: non-finite gradient");

  const AdamHyper& h = state.hyper;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(h.beta1, t);
  const double correct2 = 1.0 - std::pow(h.beta2, t);

  auto update = [&](auto& theta, const auto& g, auto& m, auto& v) {
    m = h.beta1 * m + (1.0 - h.beta1) * g;
    v = h.beta2 * v + (1.0 - h.beta2) * g.cwiseAbs2();
    theta.array() -= h.learning_rate * (m.array() / correct1) /
                     ((v.array() / correct2).sqrt() + h.epsilon);
  };
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    update(params.weights[i], grads.weights[i], state.first_moment.weights[i],
           state.second_moment.weights[i]);
    update(params.biases[i], grads.biases[i], state.first_moment.biases[i],
           state.second_moment.biases[i]);
  }
}

}  // namespace nccqr
