#pragma once

#include <span>
#include <string>
#include <vector>

#include "metalab/diff/tape.hpp"

namespace metalab::diff {

/// The last K inner updates recorded on one tape: for each update the
/// parameters it started from and the meta-parameter values it used.
class UnrollTrace {
 public:
  struct Step {
    std::size_t checkpoint = 0;
    std::vector<Var> params_before;
    std::vector<Var> meta;
  };

  explicit UnrollTrace(Tape& tape) : tape_(&tape) {}

  Tape& tape() const { return *tape_; }
  std::size_t length() const { return steps_.size(); }
  const std::vector<Step>& steps() const { return steps_; }
  const std::vector<Var>& final_params() const { return final_; }

  void record(std::vector<Var> params_before, std::vector<Var> meta, std::vector<Var> params_after) {
    for (const auto* group : {&params_before, &meta, &params_after})
      for (const auto& v : *group)
        if (!tape_->owns(v)) throw StructuralError("unroll step references a variable from another tape");
    const auto cp = tape_->checkpoint("inner update " + std::to_string(steps_.size()));
    steps_.push_back(Step{cp, std::move(params_before), std::move(meta)});
    final_ = std::move(params_after);
  }

 private:
  Tape* tape_;
  std::vector<Step> steps_;
  std::vector<Var> final_;
};

/// d(outer)/d(meta) through every recorded update. Context features enter
/// the tape as constants, so nothing flows into them.
inline std::vector<Tensor> grad_through_updates(const UnrollTrace& trace, Var outer_loss, std::span<const Var> wrt_meta) {
  if (trace.length() == 0) throw StructuralError("unroll trace records no inner updates");
  if (outer_loss.tape() != &trace.tape()) throw StructuralError("outer loss and unroll trace live on different tapes");
  return trace.tape().gradients(outer_loss, wrt_meta);
}

}  // namespace metalab::diff
