#include "vip/gradcheck.hpp"

#include <cmath>

#include "vip/rng.hpp"

namespace vip {

std::vector<Tensor> finite_diff_grads(ParamSet& params, const std::function<double()>& loss_fn,
                                      double step) {
    std::vector<Tensor> grads = params.zero_grads();
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& w = params.items[p].tensor;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double saved = w[i];
            w[i] = saved + step;
            const double up = loss_fn();
            w[i] = saved - step;
            const double down = loss_fn();
            w[i] = saved;
            grads[p][i] = (up - down) / (2.0 * step);
        }
    }
    return grads;
}

GradCheckReport compare_grads(const ParamSet& params, const std::vector<Tensor>& analytic,
                              const std::vector<Tensor>& numeric, double floor) {
    GradCheckReport report;
    for (std::size_t p = 0; p < params.size(); ++p) {
        for (std::size_t i = 0; i < analytic[p].size(); ++i) {
            const double a = analytic[p][i], n = numeric[p][i];
            const double rel = std::fabs(a - n) / std::max({std::fabs(a), std::fabs(n), floor});
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = params.items[p].name;
                report.worst_index = i;
            }
        }
    }
    return report;
}

VipConfig tiny_config() {
    VipConfig c;
    c.resolution = 8;
    c.proposal_height = 4;
    c.conv_channels = {2, 2};
    c.cnn_channels = {2, 2};
    c.lstm_dim = 2;
    c.ffn_hidden = 3;
    c.handcrafted_dim = 6;
    return c;
}

namespace {

RawSnapshot random_snapshot(Rng& rng, std::size_t size) {
    RawSnapshot img;
    img.width = size;
    img.height = size;
    img.pixels.resize(size * size * 3);
    for (auto& v : img.pixels) v = static_cast<std::uint8_t>(rng.bounded(256));
    return img;
}

}  // namespace

GradCheckReport model_grad_check(const VipConfig& config, std::uint64_t seed, double step) {
    Rng rng(seed, "gradcheck");
    const NormalizedSnapshot snap_pos = normalize(random_snapshot(rng, config.resolution));
    const NormalizedSnapshot snap_neg = normalize(random_snapshot(rng, config.resolution));
    Tensor feat_pos({config.handcrafted_dim}), feat_neg({config.handcrafted_dim});
    for (auto& v : feat_pos.data) v = rng.uniform(-1.0, 1.0);
    for (auto& v : feat_neg.data) v = rng.uniform(-1.0, 1.0);

    VipParams params = init_params(config, seed);
    // Wider-than-init draws so the decision layers produce O(1) gradients.
    for (auto& p : params.items)
        for (auto& v : p.tensor.data) v = rng.uniform(-0.5, 0.5);

    const NormalizedSnapshot* sp = config.variant == Variant::baseline ? nullptr : &snap_pos;
    const NormalizedSnapshot* sn = config.variant == Variant::baseline ? nullptr : &snap_neg;

    std::vector<Tensor> analytic = params.zero_grads();
    backward_pair(sp, feat_pos, sn, feat_neg, params, config, analytic);

    auto loss_fn = [&]() {
        const double s_pos = forward(sp, feat_pos, params, config);
        const double s_neg = forward(sn, feat_neg, params, config);
        return regularized_loss(hinge_loss(s_pos, s_neg), params, config);
    };
    const std::vector<Tensor> numeric = finite_diff_grads(params, loss_fn, step);
    return compare_grads(params, analytic, numeric);
}

}  // namespace vip
