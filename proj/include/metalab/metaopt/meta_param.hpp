#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metalab/context/meta_net.hpp"
#include "metalab/diff/adam.hpp"
#include "metalab/diff/tape.hpp"

namespace metalab::metaopt {

using diff::Shape;
using diff::Tape;
using diff::Tensor;
using diff::Var;

enum class MetaMode { Fixed, Free, Contextual };

/// One inner-loss hyperparameter: a constant, a single learnable scalar kept
/// inside [lo, hi], or the output of a meta-network over the context.
class MetaParameter {
 public:
  static MetaParameter fixed(std::string name, double value) {
    MetaParameter p;
    p.name_ = std::move(name);
    p.mode_ = MetaMode::Fixed;
    p.value_ = value;
    p.lo_ = p.hi_ = value;
    return p;
  }

  static MetaParameter free(std::string name, double init, double lo, double hi, diff::AdamConfig adam = {}) {
    if (!(lo <= init && init <= hi)) throw UsageError("initial value of '" + name + "' lies outside its range");
    MetaParameter p;
    p.name_ = std::move(name);
    p.mode_ = MetaMode::Free;
    p.value_ = init;
    p.lo_ = lo;
    p.hi_ = hi;
    p.adam_ = diff::AdamState::for_params(std::vector<Tensor>{Tensor::scalar(init)}, adam);
    return p;
  }

  static MetaParameter contextual(std::string name, context::MetaNet net, diff::AdamConfig adam = {}) {
    MetaParameter p;
    p.name_ = std::move(name);
    p.mode_ = MetaMode::Contextual;
    p.lo_ = 0.0;
    p.hi_ = net.scale();
    p.adam_ = diff::AdamState::for_params(net.params(), adam);
    p.net_.emplace(std::move(net));
    return p;
  }

  const std::string& name() const { return name_; }
  MetaMode mode() const { return mode_; }
  bool learnable() const { return mode_ != MetaMode::Fixed; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  const context::MetaNet* net() const { return net_ ? &*net_ : nullptr; }
  context::MetaNet* net() { return net_ ? &*net_ : nullptr; }
  const diff::AdamState& adam() const { return adam_; }

  double value(const std::vector<double>& ctx = {}) const {
    return mode_ == MetaMode::Contextual ? net_->predict(ctx) : value_;
  }

  /// Records this parameter's learnable leaves on a fresh tape.
  void bind(Tape& tape) {
    leaves_.clear();
    tape_ = &tape;
    if (mode_ == MetaMode::Free) leaves_.push_back(tape.variable(Tensor::scalar(value_)));
    if (mode_ == MetaMode::Contextual) leaves_ = net_->mlp().record(tape);
  }

  std::span<const Var> leaves() const { return leaves_; }

  /// Scalar value on the bound tape for one context.
  Var on_tape(const std::vector<double>& ctx) {
    require_bound();
    switch (mode_) {
      case MetaMode::Fixed: return tape_->constant(value_);
      case MetaMode::Free: return leaves_.front();
      case MetaMode::Contextual:
        return diff::reshape(net_->predict(leaves_, Tensor(Shape{1, ctx.size()}, ctx)), Shape{});
    }
    return {};
  }

  /// Values for a batch of contexts (one row each), shape [B].
  Var on_tape_batch(const Tensor& contexts, std::size_t rows) {
    require_bound();
    switch (mode_) {
      case MetaMode::Fixed: return tape_->constant(Tensor(Shape{rows}, value_));
      case MetaMode::Free: return diff::broadcast_scalar(leaves_.front(), Shape{rows});
      case MetaMode::Contextual: return net_->predict(leaves_, contexts);
    }
    return {};
  }

  /// Adam step on the learnable leaves, then re-clamps a free scalar.
  void apply(std::span<const Tensor> grads, double meta_lr) {
    if (mode_ == MetaMode::Fixed) return;
    if (mode_ == MetaMode::Free) {
      std::vector<Tensor> p{Tensor::scalar(value_)};
      diff::adam_step(p, grads, adam_, meta_lr);
      value_ = std::clamp(p[0].item(), lo_, hi_);
    } else {
      diff::adam_step(net_->params(), grads, adam_, meta_lr);
    }
    leaves_.clear();
    tape_ = nullptr;
  }

 private:
  void require_bound() const {
    if (tape_ == nullptr) throw StructuralError("meta-parameter '" + name_ + "' is not bound to a tape");
  }

  std::string name_;
  MetaMode mode_ = MetaMode::Fixed;
  double value_ = 0;
  double lo_ = 0;
  double hi_ = 0;
  diff::AdamState adam_;
  std::optional<context::MetaNet> net_;
  Tape* tape_ = nullptr;
  std::vector<Var> leaves_;
};

/// Gradients of the outer loss for every learnable parameter, then one Adam
/// step each. Returns the gradient norm over all leaves.
inline double meta_step(std::span<MetaParameter> params, Var outer_loss, double meta_lr) {
  Tape& tape = *outer_loss.tape();
  std::vector<Var> wrt;
  for (const auto& p : params)
    for (const auto& v : p.leaves()) wrt.push_back(v);
  if (wrt.empty()) return 0.0;
  auto grads = tape.gradients(outer_loss, wrt);
  double norm = 0;
  for (const auto& g : grads)
    for (double v : g.values()) norm += v * v;
  std::size_t k = 0;
  for (auto& p : params) {
    const std::size_t n = p.leaves().size();
    std::vector<Tensor> mine(grads.begin() + static_cast<std::ptrdiff_t>(k),
                             grads.begin() + static_cast<std::ptrdiff_t>(k + n));
    k += n;
    if (n > 0) p.apply(mine, meta_lr);
  }
  return std::sqrt(norm);
}

}  // namespace metalab::metaopt
