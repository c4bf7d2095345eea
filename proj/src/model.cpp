#include "vip/model.hpp"

#include <algorithm>
#include <cmath>

#include "vip/errors.hpp"
#include "vip/rng.hpp"

namespace vip {

std::string to_string(Variant v) {
    switch (v) {
        case Variant::vip: return "vip";
        case Variant::baseline: return "baseline";
        case Variant::cnn: return "cnn";
    }
    return "?";
}

std::string to_string(SnapshotMode m) {
    switch (m) {
        case SnapshotMode::query_dependent: return "query_dependent";
        case SnapshotMode::query_independent: return "query_independent";
        case SnapshotMode::none: return "none";
    }
    return "?";
}

std::string to_string(ProposalFeature f) {
    return f == ProposalFeature::flatten ? "flatten" : "channel_max";
}

Variant variant_from_string(const std::string& s) {
    if (s == "vip") return Variant::vip;
    if (s == "baseline") return Variant::baseline;
    if (s == "cnn") return Variant::cnn;
    throw ConfigError("unknown variant: " + s);
}

SnapshotMode snapshot_mode_from_string(const std::string& s) {
    if (s == "query_dependent") return SnapshotMode::query_dependent;
    if (s == "query_independent") return SnapshotMode::query_independent;
    if (s == "none") return SnapshotMode::none;
    throw ConfigError("unknown snapshot_mode: " + s);
}

ProposalFeature proposal_feature_from_string(const std::string& s) {
    if (s == "flatten") return ProposalFeature::flatten;
    if (s == "channel_max") return ProposalFeature::channel_max;
    throw ConfigError("unknown proposal_feature: " + s);
}

void VipConfig::validate() const {
    if (resolution == 0) throw ConfigError("resolution must be positive");
    if (proposal_height == 0) throw ConfigError("proposal_height must be positive");
    if (resolution % proposal_height != 0)
        throw ConfigError("resolution " + std::to_string(resolution) +
                          " is not divisible by proposal height " +
                          std::to_string(proposal_height));
    if (conv_channels.empty() || cnn_channels.empty())
        throw ConfigError("at least one convolution layer is required");
    if (kernel_size == 0 || pool_size == 0)
        throw ConfigError("kernel and pool sizes must be positive");
    if (lstm_dim == 0 || ffn_hidden == 0) throw ConfigError("layer dimensions must be positive");
    if (handcrafted_dim == 0) throw ConfigError("handcrafted_dim must be positive");
    if (lambda1 < 0 || lambda2 < 0) throw ConfigError("regularization weights must be >= 0");
    if (lr <= 0) throw ConfigError("learning rate must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (variant == Variant::baseline && snapshot_mode != SnapshotMode::none) {
        // allowed: the baseline simply ignores snapshots
    }
    if (variant != Variant::baseline && snapshot_mode == SnapshotMode::none)
        throw ConfigError("snapshot_mode none requires the baseline variant");
}

namespace {

// Height/width after one clamped pool (window and stride min(pool, extent)).
std::size_t pooled_extent(std::size_t extent, std::size_t pool) {
    return extent >= pool ? extent / pool : 1;
}

struct VisualShape {
    std::size_t channels, h, w;
};

VisualShape trace_blocks(std::size_t in_h, std::size_t in_w,
                         const std::vector<std::size_t>& channels, std::size_t pool) {
    VisualShape s{3, in_h, in_w};
    for (std::size_t c : channels) {
        s.channels = c;  // same-padding convolution keeps h, w
        s.h = pooled_extent(s.h, pool);
        s.w = pooled_extent(s.w, pool);
    }
    return s;
}

}  // namespace

VipDims compute_dims(const VipConfig& config) {
    config.validate();
    VipDims dims;
    if (config.variant == Variant::baseline) {
        dims.v_dim = config.handcrafted_dim;
        return dims;
    }
    if (config.variant == Variant::vip) {
        dims.n_proposals = config.resolution / config.proposal_height;
        const VisualShape s = trace_blocks(config.proposal_height, config.resolution,
                                           config.conv_channels, config.pool_size);
        dims.q_dim = config.proposal_feature == ProposalFeature::channel_max
                         ? s.channels
                         : s.channels * s.h * s.w;
        dims.visual_dim = config.lstm_dim;
    } else {  // cnn
        const VisualShape s = trace_blocks(config.resolution, config.resolution,
                                           config.cnn_channels, config.pool_size);
        dims.visual_dim = s.channels * s.h * s.w;
    }
    dims.v_dim = dims.visual_dim + config.handcrafted_dim;
    return dims;
}

namespace {

struct ParamSpec {
    std::string name;
    std::vector<std::size_t> shape;
    ParamGroup group;
    bool is_bias;
};

std::vector<ParamSpec> param_layout(const VipConfig& config) {
    const VipDims dims = compute_dims(config);
    const std::size_t r = config.kernel_size;
    std::vector<ParamSpec> layout;
    if (config.variant != Variant::baseline) {
        const auto& channels =
            config.variant == Variant::vip ? config.conv_channels : config.cnn_channels;
        std::size_t c_in = 3;
        for (std::size_t l = 0; l < channels.size(); ++l) {
            const std::string base = "conv" + std::to_string(l + 1);
            layout.push_back({base + ".kernels", {channels[l], c_in, r, r}, ParamGroup::phi1, false});
            layout.push_back({base + ".bias", {channels[l]}, ParamGroup::phi1, true});
            c_in = channels[l];
        }
    }
    if (config.variant == Variant::vip) {
        const std::size_t L = config.lstm_dim, D = dims.q_dim;
        for (const char* g : {"i", "f", "c", "o"})
            layout.push_back({std::string("lstm.W_") + g, {L, D}, ParamGroup::phi1, false});
        for (const char* g : {"i", "f", "c", "o"})
            layout.push_back({std::string("lstm.U_") + g, {L, L}, ParamGroup::phi1, false});
        for (const char* g : {"i", "f", "c", "o"})
            layout.push_back({std::string("lstm.b_") + g, {L}, ParamGroup::phi1, true});
    }
    layout.push_back({"ffn.W0", {config.ffn_hidden, dims.v_dim}, ParamGroup::phi2, false});
    layout.push_back({"ffn.b0", {config.ffn_hidden}, ParamGroup::phi2, true});
    layout.push_back({"ffn.W1", {1, config.ffn_hidden}, ParamGroup::phi2, false});
    layout.push_back({"ffn.b1", {1}, ParamGroup::phi2, true});
    return layout;
}

}  // namespace

VipParams init_params(const VipConfig& config, std::uint64_t seed) {
    VipParams params;
    Rng rng(seed, "init");
    for (const auto& spec : param_layout(config)) {
        ParamTensor& p = params.add(spec.name, spec.shape, spec.group, spec.is_bias);
        for (auto& v : p.tensor.data) v = rng.uniform(-0.1, 0.1);
    }
    return params;
}

VipParams init_params(const VipConfig& config) { return init_params(config, config.seed); }

VipParams param_skeleton(const VipConfig& config) {
    VipParams params;
    for (const auto& spec : param_layout(config))
        params.add(spec.name, spec.shape, spec.group, spec.is_bias);
    return params;
}

namespace {

LstmWeights lstm_weights(const VipParams& params) {
    return {&params.find("lstm.W_i").tensor, &params.find("lstm.W_f").tensor,
            &params.find("lstm.W_c").tensor, &params.find("lstm.W_o").tensor,
            &params.find("lstm.U_i").tensor, &params.find("lstm.U_f").tensor,
            &params.find("lstm.U_c").tensor, &params.find("lstm.U_o").tensor,
            &params.find("lstm.b_i").tensor, &params.find("lstm.b_f").tensor,
            &params.find("lstm.b_c").tensor, &params.find("lstm.b_o").tensor};
}

struct ConvLayerRefs {
    const Tensor* kernels;
    const Tensor* bias;
};

std::vector<ConvLayerRefs> conv_layer_refs(const VipParams& params, std::size_t n_layers) {
    std::vector<ConvLayerRefs> refs;
    refs.reserve(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
        const std::string base = "conv" + std::to_string(l + 1);
        refs.push_back({&params.find(base + ".kernels").tensor, &params.find(base + ".bias").tensor});
    }
    return refs;
}

// Runs one input (proposal or whole image) through the conv+pool stack.
Tensor run_blocks(const Tensor& input, const std::vector<ConvLayerRefs>& layers,
                  const VipConfig& config, std::vector<BlockTrace>* trace,
                  PoolResult<double>* feature_pool, bool channel_max) {
    const Tensor* x = &input;
    Tensor q;
    std::vector<BlockTrace> local;
    std::vector<BlockTrace>& blocks = trace ? *trace : local;
    blocks.clear();
    for (const auto& layer : layers) {
        BlockTrace bt;
        bt.conv_out = conv2d_forward(*x, *layer.kernels, *layer.bias, Activation::relu);
        bt.pool = maxpool2d_clamped(bt.conv_out, config.pool_size);
        blocks.push_back(std::move(bt));
        x = &blocks.back().pool.out;
    }
    if (channel_max) {
        PoolResult<double> gp = maxpool2d_general(*x, x->dim(1), x->dim(2), x->dim(1), x->dim(2));
        q = Tensor({gp.out.size()}, gp.out.data);
        if (feature_pool) *feature_pool = std::move(gp);
        return q;
    }
    q = Tensor({x->size()}, x->data);
    return q;
}

}  // namespace

double forward(const NormalizedSnapshot* snapshot, const Tensor& features,
               const VipParams& params, const VipConfig& config, ForwardCache* cache) {
    const VipDims dims = compute_dims(config);
    if (features.size() != config.handcrafted_dim)
        throw ShapeError("feature vector length " + std::to_string(features.size()) +
                         " does not match handcrafted_dim " +
                         std::to_string(config.handcrafted_dim));

    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    c = ForwardCache{};

    Tensor v({dims.v_dim});
    if (config.variant == Variant::baseline) {
        std::copy(features.data.begin(), features.data.end(), v.data.begin());
    } else {
        if (snapshot == nullptr) throw ShapeError("variant requires a snapshot input");
        if (snapshot->height() != config.resolution || snapshot->width() != config.resolution)
            throw ShapeError("snapshot resolution " + std::to_string(snapshot->height()) + "x" +
                             std::to_string(snapshot->width()) + " does not match configured " +
                             std::to_string(config.resolution));
        const bool channel_max = config.proposal_feature == ProposalFeature::channel_max;
        if (config.variant == Variant::vip) {
            const auto layers = conv_layer_refs(params, config.conv_channels.size());
            RegionProposalSet props = segment(*snapshot, config.proposal_height);
            const std::size_t n = props.proposals.size();
            c.inputs = std::move(props.proposals);
            c.blocks.resize(n);
            c.q.resize(n);
            if (channel_max) c.feature_pool.resize(n);
            std::vector<double> h(config.lstm_dim, 0.0), cc(config.lstm_dim, 0.0);
            const LstmWeights w = lstm_weights(params);
            c.lstm.reserve(n);
            for (std::size_t i = 0; i < n; ++i) {
                c.q[i] = run_blocks(c.inputs[i], layers, config, &c.blocks[i],
                                    channel_max ? &c.feature_pool[i] : nullptr, channel_max);
                if (c.q[i].size() != dims.q_dim)
                    throw ShapeError("proposal feature length mismatch");
                LstmStep step = lstm_cell_forward<double>(
                    std::span<const double>(c.q[i].data), std::span<const double>(h),
                    std::span<const double>(cc), w);
                h = step.h;
                cc = step.c;
                c.lstm.push_back(std::move(step));
            }
            std::copy(h.begin(), h.end(), v.data.begin());
        } else {  // cnn
            const auto layers = conv_layer_refs(params, config.cnn_channels.size());
            c.inputs.push_back(snapshot->values);
            c.blocks.resize(1);
            c.q.resize(1);
            if (channel_max) c.feature_pool.resize(1);
            c.q[0] = run_blocks(c.inputs[0], layers, config, &c.blocks[0],
                                channel_max ? &c.feature_pool[0] : nullptr, channel_max);
            if (c.q[0].size() != dims.visual_dim)
                throw ShapeError("visual feature length mismatch");
            std::copy(c.q[0].data.begin(), c.q[0].data.end(), v.data.begin());
        }
        std::copy(features.data.begin(), features.data.end(),
                  v.data.begin() + static_cast<std::ptrdiff_t>(dims.visual_dim));
    }

    c.v = std::move(v);
    c.hidden = dense_forward(c.v, params.find("ffn.W0").tensor, params.find("ffn.b0").tensor,
                             Activation::relu);
    const Tensor out = dense_forward(c.hidden, params.find("ffn.W1").tensor,
                                     params.find("ffn.b1").tensor, Activation::identity);
    c.score = out[0];
    return c.score;
}

double regularized_loss(double hinge, const VipParams& params, const VipConfig& config) {
    return hinge + config.lambda1 * params.squared_norm(ParamGroup::phi1, config.regularize_biases) +
           config.lambda2 * params.squared_norm(ParamGroup::phi2, config.regularize_biases);
}

namespace {

struct GradIndex {
    const VipParams* params;
    std::vector<Tensor>* grads;
    Tensor& operator[](const std::string& name) const {
        for (std::size_t i = 0; i < params->items.size(); ++i)
            if (params->items[i].name == name) return (*grads)[i];
        throw ConfigError("unknown parameter: " + name);
    }
};

struct ConvLayerGrads {
    const Tensor* kernels;
    Tensor* d_kernels;
    Tensor* d_bias;
};

// Backward through the conv+pool stack of one input.
void blocks_backward(const Tensor& input, const std::vector<BlockTrace>& blocks,
                     const std::vector<ConvLayerGrads>& layers,
                     const PoolResult<double>* feature_pool, const Tensor& d_q) {
    // Unflatten d_q onto the last stage output.
    const Tensor& last_out = feature_pool ? feature_pool->out : blocks.back().pool.out;
    Tensor d_stage(last_out.shape);
    std::copy(d_q.data.begin(), d_q.data.end(), d_stage.data.begin());
    Tensor d_pool_out;
    if (feature_pool) {
        d_pool_out = Tensor(blocks.back().pool.out.shape);
        maxpool2d_backward(*feature_pool, d_stage, d_pool_out);
    } else {
        d_pool_out = std::move(d_stage);
    }
    for (std::size_t l = blocks.size(); l-- > 0;) {
        const Tensor& block_input = l == 0 ? input : blocks[l - 1].pool.out;
        Tensor d_conv(blocks[l].conv_out.shape);
        maxpool2d_backward(blocks[l].pool, d_pool_out, d_conv);
        Tensor* d_input_ptr = nullptr;
        Tensor d_input;
        if (l > 0) {
            d_input = Tensor(block_input.shape);
            d_input_ptr = &d_input;
        }
        conv2d_backward(block_input, *layers[l].kernels, Activation::relu, blocks[l].conv_out,
                        d_conv, d_input_ptr, *layers[l].d_kernels, *layers[l].d_bias);
        if (l > 0) d_pool_out = std::move(d_input);
    }
}

std::vector<ConvLayerGrads> conv_layer_grads(const VipParams& params, const GradIndex& gi,
                                             std::size_t n_layers) {
    std::vector<ConvLayerGrads> layers;
    layers.reserve(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
        const std::string base = "conv" + std::to_string(l + 1);
        layers.push_back({&params.find(base + ".kernels").tensor, &gi[base + ".kernels"],
                          &gi[base + ".bias"]});
    }
    return layers;
}

}  // namespace

void score_backward(const ForwardCache& cache, const Tensor& features, const VipParams& params,
                    const VipConfig& config, double d_score, std::vector<Tensor>& grads) {
    (void)features;
    const VipDims dims = compute_dims(config);
    GradIndex gi{&params, &grads};

    // Decision layers.
    Tensor d_out({1});
    d_out[0] = d_score;
    Tensor d_hidden({config.ffn_hidden});
    dense_backward(cache.hidden, params.find("ffn.W1").tensor, Activation::identity,
                   Tensor({1}, {cache.score}), d_out, &d_hidden, gi["ffn.W1"], gi["ffn.b1"]);
    Tensor d_v(cache.v.shape);
    dense_backward(cache.v, params.find("ffn.W0").tensor, Activation::relu, cache.hidden,
                   d_hidden, &d_v, gi["ffn.W0"], gi["ffn.b0"]);

    if (config.variant == Variant::baseline) return;

    if (config.variant == Variant::cnn) {
        const auto layers = conv_layer_grads(params, gi, config.cnn_channels.size());
        Tensor d_q({dims.visual_dim});
        std::copy_n(d_v.data.begin(), dims.visual_dim, d_q.data.begin());
        blocks_backward(cache.inputs[0], cache.blocks[0], layers,
                        cache.feature_pool.empty() ? nullptr : &cache.feature_pool[0], d_q);
        return;
    }

    // LSTM backward through time, then the shared conv stack per proposal.
    const auto layers = conv_layer_grads(params, gi, config.conv_channels.size());
    const LstmWeights w = lstm_weights(params);
    const LstmGrads lg = {&gi["lstm.W_i"], &gi["lstm.W_f"], &gi["lstm.W_c"], &gi["lstm.W_o"],
                          &gi["lstm.U_i"], &gi["lstm.U_f"], &gi["lstm.U_c"], &gi["lstm.U_o"],
                          &gi["lstm.b_i"], &gi["lstm.b_f"], &gi["lstm.b_c"], &gi["lstm.b_o"]};
    const std::size_t n = cache.lstm.size();
    const std::size_t L = config.lstm_dim;
    std::vector<double> d_h(L, 0.0), d_c(L, 0.0), d_q_vec, d_h_prev, d_c_prev;
    std::copy_n(d_v.data.begin(), L, d_h.begin());
    const std::vector<double> zeros(L, 0.0);
    for (std::size_t t = n; t-- > 0;) {
        const std::vector<double>& h_prev = t == 0 ? zeros : cache.lstm[t - 1].h;
        const std::vector<double>& c_prev = t == 0 ? zeros : cache.lstm[t - 1].c;
        lstm_cell_backward<double>(std::span<const double>(cache.q[t].data),
                                   std::span<const double>(h_prev),
                                   std::span<const double>(c_prev), w, cache.lstm[t],
                                   std::span<const double>(d_h), std::span<const double>(d_c), lg,
                                   d_q_vec, d_h_prev, d_c_prev);
        Tensor d_q({d_q_vec.size()}, d_q_vec);
        blocks_backward(cache.inputs[t], cache.blocks[t], layers,
                        cache.feature_pool.empty() ? nullptr : &cache.feature_pool[t], d_q);
        d_h = d_h_prev;
        d_c = d_c_prev;
    }
}

namespace {

void add_regularization_grads(const VipParams& params, const VipConfig& config,
                              std::vector<Tensor>& grads) {
    for (std::size_t i = 0; i < params.items.size(); ++i) {
        const ParamTensor& p = params.items[i];
        if (p.is_bias && !config.regularize_biases) continue;
        const double lambda = p.group == ParamGroup::phi1 ? config.lambda1 : config.lambda2;
        if (lambda == 0.0) continue;
        for (std::size_t j = 0; j < p.tensor.size(); ++j)
            grads[i][j] += 2.0 * lambda * p.tensor[j];
    }
}

}  // namespace

double backward_pair(const NormalizedSnapshot* snap_pos, const Tensor& feat_pos,
                     const NormalizedSnapshot* snap_neg, const Tensor& feat_neg,
                     const VipParams& params, const VipConfig& config,
                     std::vector<Tensor>& grads) {
    ForwardCache cache_pos, cache_neg;
    const double s_pos = forward(snap_pos, feat_pos, params, config, &cache_pos);
    const double s_neg = forward(snap_neg, feat_neg, params, config, &cache_neg);
    if (!std::isfinite(s_pos) || !std::isfinite(s_neg))
        throw TrainingError("non-finite score during training");
    const double margin = 1.0 - s_pos + s_neg;
    // Subgradient at the kink takes the linear-side value: margin == 0 still
    // propagates the hinge slope.
    if (margin >= 0.0) {
        score_backward(cache_pos, feat_pos, params, config, -1.0, grads);
        score_backward(cache_neg, feat_neg, params, config, +1.0, grads);
    }
    add_regularization_grads(params, config, grads);
    return regularized_loss(std::max(0.0, margin), params, config);
}

std::vector<TrainingPair> generate_pairs(const std::vector<QueryDocInstance>& instances) {
    // Group by qid, preserving first-appearance order.
    std::vector<std::string> qids;
    std::map<std::string, std::vector<std::uint32_t>> by_query;
    for (std::uint32_t i = 0; i < instances.size(); ++i) {
        auto [it, inserted] = by_query.try_emplace(instances[i].qid);
        if (inserted) qids.push_back(instances[i].qid);
        it->second.push_back(i);
    }
    std::vector<TrainingPair> pairs;
    for (const auto& qid : qids) {
        const auto& idx = by_query[qid];
        for (std::uint32_t a : idx)
            for (std::uint32_t b : idx)
                if (instances[a].label > instances[b].label) pairs.push_back({a, b});
    }
    return pairs;
}

Tensor FeatureScaler::apply(const Tensor& features) const {
    Tensor out(features.shape);
    for (std::size_t i = 0; i < features.size(); ++i) {
        const double range = max[i] - min[i];
        out[i] = range > 0.0 ? (features[i] - min[i]) / range : 0.0;
    }
    return out;
}

FeatureScaler FeatureScaler::fit(const std::vector<QueryDocInstance>& instances) {
    if (instances.empty()) throw DataError("cannot fit feature scaler on empty data");
    const std::size_t dim = instances.front().features.size();
    FeatureScaler s;
    s.min = Tensor({dim});
    s.max = Tensor({dim});
    s.min.fill(std::numeric_limits<double>::infinity());
    s.max.fill(-std::numeric_limits<double>::infinity());
    for (const auto& inst : instances) {
        for (std::size_t i = 0; i < dim; ++i) {
            s.min[i] = std::min(s.min[i], inst.features[i]);
            s.max[i] = std::max(s.max[i], inst.features[i]);
        }
    }
    return s;
}

std::vector<std::pair<std::string, double>> dump_decision_weights(const VipParams& params,
                                                                  const VipConfig& config) {
    const VipDims dims = compute_dims(config);
    const Tensor& w0 = params.find("ffn.W0").tensor;
    std::vector<std::pair<std::string, double>> out;
    out.reserve(dims.v_dim);
    for (std::size_t col = 0; col < dims.v_dim; ++col) {
        double ss = 0.0;
        for (std::size_t row = 0; row < w0.dim(0); ++row) ss += w0.at(row, col) * w0.at(row, col);
        std::string name = col < dims.visual_dim
                               ? "visual_" + std::to_string(col)
                               : "feat_" + std::to_string(col - dims.visual_dim + 1);
        out.emplace_back(std::move(name), std::sqrt(ss));
    }
    return out;
}

}  // namespace vip
