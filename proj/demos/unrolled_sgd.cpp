// Meta-gradient of a regularization weight through K plain SGD steps on a
// scalar problem, checked against the forward-mode recursion and a finite
// difference.
//
//   inner:  l(theta; eta) = 0.5 (theta - c)^2 + 0.5 eta theta^2
//   outer:  L = 0.5 (theta_K - y)^2

#include <cstdio>

#include "metalab/diff/tape.hpp"
#include "metalab/diff/unroll.hpp"

using namespace metalab::diff;

namespace {

constexpr double kC = 2.0, kY = 1.2, kLr = 0.3, kTheta0 = -0.5;

double outer_numeric(double eta, int K) {
  double theta = kTheta0;
  for (int k = 0; k < K; ++k) theta -= kLr * ((theta - kC) + eta * theta);
  return 0.5 * (theta - kY) * (theta - kY);
}

/// d theta_k / d eta carried alongside theta_k.
double outer_forward_mode(double eta, int K) {
  double theta = kTheta0, dtheta = 0.0;
  const double a = 1.0 - kLr * (1.0 + eta);
  for (int k = 0; k < K; ++k) {
    dtheta = a * dtheta - kLr * theta;
    theta = a * theta + kLr * kC;
  }
  return (theta - kY) * dtheta;
}

double outer_tape(double eta0, int K) {
  Tape tape;
  Var eta = tape.variable(Tensor::scalar(eta0));
  std::vector<Var> params{tape.variable(Tensor::scalar(kTheta0))};
  UnrollTrace trace(tape);
  for (int k = 0; k < K; ++k) {
    Var inner = 0.5 * square(params[0] - kC) + 0.5 * eta * square(params[0]);
    auto g = tape.gradients_graph(inner, params);
    std::vector<Var> next{params[0] - kLr * g[0]};
    trace.record(params, {eta}, next);
    params = next;
  }
  Var outer = 0.5 * square(params[0] - kY);
  std::vector<Var> meta{eta};
  return grad_through_updates(trace, outer, meta)[0].item();
}

}  // namespace

int main() {
  const double eta = 0.25, h = 1e-6;
  std::printf("%3s %16s %16s %16s\n", "K", "tape", "forward-mode", "central diff");
  for (int K : {1, 2, 5, 10, 20}) {
    const double fd = (outer_numeric(eta + h, K) - outer_numeric(eta - h, K)) / (2 * h);
    std::printf("%3d %16.10f %16.10f %16.10f\n", K, outer_tape(eta, K), outer_forward_mode(eta, K), fd);
  }
}
