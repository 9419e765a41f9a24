#pragma once

#include <cmath>
#include <cstdio>
#include <random>
#include <span>
#include <vector>

#include "metalab/diff/adam.hpp"
#include "metalab/diff/mlp.hpp"
#include "metalab/diff/tape.hpp"

namespace metalab::context {

using diff::Shape;
using diff::Tape;
using diff::Tensor;
using diff::Var;

struct PretrainResult {
  std::size_t steps = 0;
  double mean_abs_error = 0;  // in units of the output scale
  bool converged = false;
};

/// g_omega(c) = scale * sigmoid(MLP(c)).
class MetaNet {
 public:
  MetaNet(std::size_t input_dim, std::vector<std::size_t> hidden, double scale, std::mt19937_64& rng)
      : scale_(scale), mlp_({input_dim, std::move(hidden), 1}, rng) {
    if (!(scale > 0)) throw UsageError("meta-network output scale must be positive");
  }

  double scale() const { return scale_; }
  std::size_t input_dim() const { return mlp_.shape().inputs; }
  diff::Mlp& mlp() { return mlp_; }
  const diff::Mlp& mlp() const { return mlp_; }
  std::vector<Tensor>& params() { return mlp_.params(); }
  const std::vector<Tensor>& params() const { return mlp_.params(); }

  double predict(const std::vector<double>& ctx) const {
    if (ctx.size() != input_dim()) throw StructuralError("context width differs from the meta-network input");
    const double z = mlp_.forward(Tensor(Shape{1, ctx.size()}, ctx)).item();
    return scale_ / (1.0 + std::exp(-z));
  }

  /// One prediction per context row, shape [B]. Contexts enter as constants.
  Var predict(std::span<const Var> omega, const Tensor& contexts) const {
    Tape& tape = *omega.front().tape();
    Var z = diff::Mlp::forward(omega, tape.constant(contexts));
    return diff::scale(diff::reshape(diff::sigmoid(z), Shape{contexts.rows()}), scale_);
  }

  /// Regresses the output toward target_fraction * scale on uniform [-1, 1]
  /// contexts until the mean absolute error falls below tol * scale.
  PretrainResult pretrain(std::mt19937_64& rng, double target_fraction = 0.5, double tol = 0.02,
                          std::size_t max_steps = 10000, std::size_t batch = 32, double lr = 1e-3) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto sample = [&](std::size_t n) {
      Tensor x(Shape{n, input_dim()});
      for (auto& v : x.values()) v = u(rng);
      return x;
    };
    auto eval = [&] {
      const Tensor x = sample(256);
      const Tensor z = mlp_.forward(x);
      double err = 0;
      for (double zi : z.values()) err += std::abs(1.0 / (1.0 + std::exp(-zi)) - target_fraction);
      return err / 256.0;
    };
    auto adam = diff::AdamState::for_params(mlp_.params());
    PretrainResult res;
    res.mean_abs_error = eval();
    while (res.mean_abs_error >= tol && res.steps < max_steps) {
      for (std::size_t k = 0; k < 50 && res.steps < max_steps; ++k, ++res.steps) {
        Tape tape;
        auto w = mlp_.record(tape);
        Var p = diff::sigmoid(diff::Mlp::forward(w, tape.constant(sample(batch))));
        Var loss = diff::mean(diff::square(diff::add_scalar(p, -target_fraction)));
        auto g = tape.gradients(loss, w);
        diff::adam_step(mlp_.params(), g, adam, lr);
      }
      res.mean_abs_error = eval();
    }
    res.converged = res.mean_abs_error < tol;
    if (!res.converged)
      std::fprintf(stderr, "warning: meta-network pretraining stopped at %zu steps, error %.4f\n", res.steps,
                   res.mean_abs_error);
    return res;
  }

 private:
  double scale_;
  diff::Mlp mlp_;
};

}  // namespace metalab::context
