#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vip/adam.hpp"
#include "vip/eval.hpp"
#include "vip/nn.hpp"
#include "vip/snapshot.hpp"
#include "vip/tensor.hpp"

namespace vip {

enum class Variant : std::uint8_t { vip, baseline, cnn };
enum class SnapshotMode : std::uint8_t { query_dependent, query_independent, none };
enum class ProposalFeature : std::uint8_t { flatten, channel_max };

std::string to_string(Variant v);
std::string to_string(SnapshotMode m);
std::string to_string(ProposalFeature f);
Variant variant_from_string(const std::string& s);
SnapshotMode snapshot_mode_from_string(const std::string& s);
ProposalFeature proposal_feature_from_string(const std::string& s);

struct VipConfig {
    std::size_t resolution = 64;
    std::size_t proposal_height = 4;
    std::vector<std::size_t> conv_channels = {8, 16};      // strip CNN
    std::vector<std::size_t> cnn_channels = {8, 16, 16};   // whole-image ablation
    std::size_t kernel_size = 2;
    std::size_t pool_size = 2;  // window and stride
    std::size_t lstm_dim = 10;
    std::size_t ffn_hidden = 10;
    std::size_t handcrafted_dim = 46;
    double lambda1 = 0.0005;
    double lambda2 = 0.0001;
    double lr = 0.001;
    std::size_t batch_size = 100;
    std::size_t max_epochs = 100;
    std::size_t patience = 5;
    std::uint64_t seed = 42;
    Variant variant = Variant::vip;
    SnapshotMode snapshot_mode = SnapshotMode::query_dependent;
    ProposalFeature proposal_feature = ProposalFeature::flatten;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    bool regularize_biases = false;
    bool feature_scaling = false;
    bool include_zero_relevant = false;
    unsigned threads = 0;  // 0 = hardware concurrency

    void validate() const;
    AdamHyper adam() const { return {lr, adam_beta1, adam_beta2, adam_eps}; }
};

// Static shape arithmetic for a config.
struct VipDims {
    std::size_t n_proposals = 0;
    std::size_t q_dim = 0;       // per-proposal feature length after flatten
    std::size_t visual_dim = 0;  // lstm_dim (vip), cnn flatten (cnn), 0 (baseline)
    std::size_t v_dim = 0;       // visual_dim + handcrafted_dim
};
VipDims compute_dims(const VipConfig& config);

using VipParams = ParamSet;

// All trainable tensors in canonical order, every value drawn from U[-0.1, 0.1].
VipParams init_params(const VipConfig& config);
VipParams init_params(const VipConfig& config, std::uint64_t seed);

// Same layout as init_params but zero-filled (checkpoint loading target).
VipParams param_skeleton(const VipConfig& config);

struct QueryDocInstance {
    std::string qid;
    std::string docid;
    int label = 0;
    Tensor features;  // handcrafted_dim
};

struct TrainingPair {
    std::uint32_t pos = 0;  // indices into the instance vector
    std::uint32_t neg = 0;
};

// All ordered pairs with label(d+) > label(d-) within each query, in
// deterministic (query, i, j) order.
std::vector<TrainingPair> generate_pairs(const std::vector<QueryDocInstance>& instances);

struct BlockTrace {
    Tensor conv_out;
    PoolResult<double> pool;
};

struct ForwardCache {
    std::vector<Tensor> inputs;                   // proposals (vip) or whole image (cnn)
    std::vector<std::vector<BlockTrace>> blocks;  // per input, per conv+pool block
    std::vector<PoolResult<double>> feature_pool;  // channel_max stage, if configured
    std::vector<Tensor> q;                        // per-input flattened features
    std::vector<LstmStep> lstm;
    Tensor v;
    Tensor hidden;  // post-ReLU decision hidden layer
    double score = 0.0;
};

// Relevance score. `snapshot` may be null for the baseline variant (which
// never reads it). Pure function; safe to call concurrently.
double forward(const NormalizedSnapshot* snapshot, const Tensor& features,
               const VipParams& params, const VipConfig& config, ForwardCache* cache = nullptr);

inline double hinge_loss(double s_pos, double s_neg) {
    return std::max(0.0, 1.0 - s_pos + s_neg);
}

// hinge + lambda1*||phi1 weights||^2 + lambda2*||phi2 weights||^2.
double regularized_loss(double hinge, const VipParams& params, const VipConfig& config);

// Accumulates d(regularized pair loss)/d(theta) into `grads` (aligned with
// params order) and returns the pair's regularized loss.
double backward_pair(const NormalizedSnapshot* snap_pos, const Tensor& feat_pos,
                     const NormalizedSnapshot* snap_neg, const Tensor& feat_neg,
                     const VipParams& params, const VipConfig& config,
                     std::vector<Tensor>& grads);

// Accumulates the gradient flowing from d(score) for one already-run forward.
void score_backward(const ForwardCache& cache, const Tensor& features, const VipParams& params,
                    const VipConfig& config, double d_score, std::vector<Tensor>& grads);

// Optional per-feature min-max scaling, fitted on the training split.
struct FeatureScaler {
    Tensor min, max;
    Tensor apply(const Tensor& features) const;
    static FeatureScaler fit(const std::vector<QueryDocInstance>& instances);
};

// Supplies the raw (already query-overlaid and down-sampled) snapshot for an
// instance. Implementations must be safe for concurrent reads.
class InputProvider {
public:
    virtual ~InputProvider() = default;
    virtual const RawSnapshot* raw_for(const QueryDocInstance& inst) const = 0;
};

// Provider for the baseline / snapshot-free path.
class NullProvider : public InputProvider {
public:
    const RawSnapshot* raw_for(const QueryDocInstance&) const override { return nullptr; }
};

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0;   // mean regularized pair loss
    double train_hinge = 0.0;  // mean raw hinge component
    double val_map = 0.0;
};

struct TrainResult {
    VipParams params;
    std::optional<FeatureScaler> scaler;
    std::vector<EpochStats> history;
    std::size_t best_epoch = 0;
};

TrainResult train(const std::vector<QueryDocInstance>& train_instances,
                  const std::vector<QueryDocInstance>& val_instances,
                  const InputProvider& provider, const VipConfig& config);

struct VipModel {
    VipConfig config;
    VipParams params;
    std::optional<FeatureScaler> scaler;
};

double score_instance(const VipModel& model, const QueryDocInstance& inst,
                      const InputProvider& provider);

// Descending score, ties broken by docid ascending.
std::vector<RunEntry> rank_query(const VipModel& model,
                                 const std::vector<QueryDocInstance>& query_instances,
                                 const InputProvider& provider);

RunList rank_all(const VipModel& model, const std::vector<QueryDocInstance>& instances,
                 const InputProvider& provider);

// Column norms of the first decision layer, named visual_* / feat_*.
std::vector<std::pair<std::string, double>> dump_decision_weights(const VipParams& params,
                                                                  const VipConfig& config);

void save_model_file(const VipModel& model, const std::string& path);
VipModel load_model_file(const std::string& path);
std::vector<std::uint8_t> serialize_model(const VipModel& model);
VipModel deserialize_model(const std::vector<std::uint8_t>& bytes);

// Config <-> JSON (strict: unknown keys are rejected).
std::string config_to_json(const VipConfig& config);
VipConfig config_from_json(const std::string& json_text);

}  // namespace vip
