#include "tnd/perturb.hpp"

#include "tnd/data.hpp"
#include "tnd/errors.hpp"

namespace tnd {

StampAccumulator::StampAccumulator(const Tensor& mask, const Tensor& pattern, GradientRequest request)
    : mask_(mask), pattern_(pattern), request_(request) {
  if (mask.shape() != pattern.shape()) throw ShapeError("mask and pattern shapes differ");
  if (request.mask) eval_.grad_mask = Tensor(mask.shape());
  if (request.pattern) eval_.grad_pattern = Tensor(mask.shape());
}

ForwardTrace StampAccumulator::add(const Network& net, const Tensor& x, const ScalarHead& head) {
  const Tensor xhat = blend(x, mask_, pattern_);
  if (!request_.mask && !request_.pattern) {
    ForwardTrace trace = forward(net, xhat);
    eval_.value += head(trace.logits.values(), trace.representation.values()).value;
    return trace;
  }
  InputGradient g = input_gradient(net, xhat, head);
  eval_.value += g.value;
  const std::size_t n = x.size();
  if (request_.mask) {
    for (std::size_t i = 0; i < n; ++i) eval_.grad_mask[i] += g.gradient[i] * (pattern_[i] - x[i]);
  }
  if (request_.pattern) {
    for (std::size_t i = 0; i < n; ++i) eval_.grad_pattern[i] += g.gradient[i] * mask_[i];
  }
  return std::move(g.trace);
}

}  // namespace tnd
