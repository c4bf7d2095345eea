#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "vip/errors.hpp"
#include "vip/tensor.hpp"

namespace vip {

struct AdamHyper {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::uint64_t step = 0;
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;

    static AdamState init(const ParamSet& params) {
        AdamState st;
        st.first_moment = params.zero_grads();
        st.second_moment = params.zero_grads();
        return st;
    }
};

// Standard Adam update with bias correction. Gradients must be finite; a
// non-finite entry raises a TrainingError naming the parameter.
inline void adam_step(ParamSet& params, const std::vector<Tensor>& grads, AdamState& state,
                      const AdamHyper& hyper) {
    if (grads.size() != params.size())
        throw ShapeError("adam: gradient count does not match parameter count");
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (!grads[p].same_shape(params.items[p].tensor))
            throw ShapeError("adam: gradient shape mismatch for " + params.items[p].name);
        if (!grads[p].all_finite())
            throw TrainingError("non-finite gradient", params.items[p].name);
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double corr1 = 1.0 - std::pow(hyper.beta1, t);
    const double corr2 = 1.0 - std::pow(hyper.beta2, t);
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& w = params.items[p].tensor;
        Tensor& m = state.first_moment[p];
        Tensor& v = state.second_moment[p];
        const Tensor& g = grads[p];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
            v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
            const double m_hat = m[i] / corr1;
            const double v_hat = v[i] / corr2;
            w[i] -= hyper.lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
        }
    }
}

}  // namespace vip
