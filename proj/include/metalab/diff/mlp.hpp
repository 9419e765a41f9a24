#pragma once

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "metalab/diff/tape.hpp"

namespace metalab::diff {

struct MlpShape {
  std::size_t inputs = 1;
  std::vector<std::size_t> hidden;
  std::size_t outputs = 1;
};

/// Feed-forward ReLU network. Parameters are stored as [W0, b0, W1, b1, ...]
/// with W of shape [fan_in, fan_out]; the output layer is linear.
class Mlp {
 public:
  Mlp() = default;

  /// Uniform fan-in initialization, bound 1/sqrt(fan_in), for weights and biases.
  Mlp(const MlpShape& shape, std::mt19937_64& rng) : shape_(shape) {
    std::size_t fan_in = shape.inputs;
    auto add_layer = [&](std::size_t fan_out) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> u(-bound, bound);
      Tensor w(Shape{fan_in, fan_out});
      for (auto& v : w.values()) v = u(rng);
      Tensor b(Shape{fan_out});
      for (auto& v : b.values()) v = u(rng);
      params_.push_back(std::move(w));
      params_.push_back(std::move(b));
      fan_in = fan_out;
    };
    for (auto h : shape.hidden) add_layer(h);
    add_layer(shape.outputs);
  }

  const MlpShape& shape() const { return shape_; }
  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }
  std::size_t layers() const { return params_.size() / 2; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }

  /// x: [batch, inputs] -> [batch, outputs], without recording.
  Tensor forward(const Tensor& x) const { return forward(params_, x); }

  static Tensor forward(std::span<const Tensor> params, const Tensor& x) {
    Tensor h = x;
    const std::size_t L = params.size() / 2;
    for (std::size_t l = 0; l < L; ++l) {
      Tensor z = kernels::matmul(h, params[2 * l], false, false);
      const auto& b = params[2 * l + 1];
      const std::size_t n = b.size();
      for (std::size_t i = 0; i < z.rows(); ++i) {
        double* row = z.data().data() + i * n;
        for (std::size_t j = 0; j < n; ++j) row[j] += b[j];
        if (l + 1 < L)
          for (std::size_t j = 0; j < n; ++j) row[j] = row[j] > 0.0 ? row[j] : 0.0;
      }
      h = std::move(z);
    }
    if (!h.all_finite()) throw NumericFault("non-finite mlp output");
    return h;
  }

  /// Recorded forward pass over parameter variables.
  static Var forward(std::span<const Var> params, Var x) {
    Var h = x;
    const std::size_t L = params.size() / 2;
    const std::size_t batch = x.value().rows();
    for (std::size_t l = 0; l < L; ++l) {
      h = matmul(h, params[2 * l]) + broadcast_rows(params[2 * l + 1], batch);
      if (l + 1 < L) h = relu(h);
    }
    return h;
  }

  std::vector<Var> record(Tape& tape) const {
    std::vector<Var> vs;
    vs.reserve(params_.size());
    for (const auto& p : params_) vs.push_back(tape.variable(p));
    return vs;
  }

  void assign(std::span<const Var> vs) {
    if (vs.size() != params_.size()) throw StructuralError("mlp assign: parameter count mismatch");
    for (std::size_t k = 0; k < vs.size(); ++k) {
      if (vs[k].value().shape() != params_[k].shape()) throw StructuralError("mlp assign: shape mismatch");
      params_[k] = vs[k].value();
    }
  }

 private:
  MlpShape shape_;
  std::vector<Tensor> params_;
};

}  // namespace metalab::diff
