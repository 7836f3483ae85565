#pragma once

#include "tnd/nn.hpp"
#include "tnd/prox.hpp"

namespace tnd {

/// Sums a head over stamped images x_hat = (1 - m) x + m delta and chains its input gradient into
/// dF/dm = g (delta - x) and dF/ddelta = g m.
class StampAccumulator {
 public:
  StampAccumulator(const Tensor& mask, const Tensor& pattern, GradientRequest request);

  /// Adds head(x_hat) to the value and returns the forward trace of x_hat.
  ForwardTrace add(const Network& net, const Tensor& x, const ScalarHead& head);
  Evaluation take() { return std::move(eval_); }

 private:
  const Tensor& mask_;
  const Tensor& pattern_;
  GradientRequest request_;
  Evaluation eval_;
};

}  // namespace tnd
