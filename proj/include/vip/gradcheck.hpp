#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vip/model.hpp"
#include "vip/tensor.hpp"

namespace vip {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
};

// Central finite differences of loss_fn over every parameter element.
// loss_fn must evaluate the loss at the current parameter values.
std::vector<Tensor> finite_diff_grads(ParamSet& params, const std::function<double()>& loss_fn,
                                      double step = 1e-5);

// Scaled relative error |a - n| / max(|a|, |n|, floor), maximized over all
// elements.
GradCheckReport compare_grads(const ParamSet& params, const std::vector<Tensor>& analytic,
                              const std::vector<Tensor>& numeric, double floor = 1e-3);

// Full-model check: random snapshot pair and features, analytic backward of
// the regularized pairwise loss against central finite differences.
GradCheckReport model_grad_check(const VipConfig& config, std::uint64_t seed,
                                 double step = 1e-5);

// The small configuration used throughout for gradient checking.
VipConfig tiny_config();

}  // namespace vip
