#pragma once

#include <deque>
#include <vector>

#include "metalab/context/features.hpp"
#include "metalab/context/normalizer.hpp"

namespace metalab::context {

/// The last H normalized frames, newest first. Missing frames read as zeros.
class ContextBuffer {
 public:
  explicit ContextBuffer(const FeatureSpec& spec) : spec_(spec) { spec_.validate(); }

  const FeatureSpec& spec() const { return spec_; }
  std::size_t size() const { return frames_.size(); }
  const std::deque<std::vector<double>>& frames() const { return frames_; }

  void push(std::vector<double> frame) {
    if (frame.size() != spec_.frame_dim()) throw StructuralError("context frame width mismatch");
    frames_.push_front(std::move(frame));
    if (frames_.size() > spec_.history) frames_.pop_back();
  }

  /// Family-major layout: for each family, H slots (newest first) of its channels.
  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(spec_.dim());
    std::size_t offset = 0;
    for (Family f : spec_.families) {
      const std::size_t w = spec_.channels(f);
      for (std::size_t h = 0; h < spec_.history; ++h) {
        if (h < frames_.size())
          out.insert(out.end(), frames_[h].begin() + static_cast<std::ptrdiff_t>(offset),
                     frames_[h].begin() + static_cast<std::ptrdiff_t>(offset + w));
        else
          out.insert(out.end(), w, 0.0);
      }
      offset += w;
    }
    return out;
  }

 private:
  FeatureSpec spec_;
  std::deque<std::vector<double>> frames_;
};

/// Normalizer and buffer owned together by one run.
class ContextTracker {
 public:
  explicit ContextTracker(const FeatureSpec& spec) : norm_(spec.frame_dim()), buffer_(spec) {}

  void push_raw(const std::vector<double>& raw) { buffer_.push(norm_.normalize_then_update(raw)); }
  std::vector<double> current() const { return buffer_.flatten(); }
  const ContextBuffer& buffer() const { return buffer_; }
  const RunningNormalizer& normalizer() const { return norm_; }
  const FeatureSpec& spec() const { return buffer_.spec(); }

 private:
  RunningNormalizer norm_;
  ContextBuffer buffer_;
};

}  // namespace metalab::context
