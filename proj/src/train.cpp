#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "vip/errors.hpp"
#include "vip/model.hpp"
#include "vip/parallel.hpp"
#include "vip/rng.hpp"

namespace vip {

namespace {

// Pre-normalized snapshots for a fixed instance list; slot i belongs to
// instance i. Baseline / snapshot-free configs keep null pointers throughout.
struct NormCache {
    std::vector<NormalizedSnapshot> snaps;
    std::vector<const NormalizedSnapshot*> ptrs;
};

NormCache build_norm_cache(const std::vector<QueryDocInstance>& instances,
                           const InputProvider& provider, const VipConfig& config) {
    NormCache cache;
    cache.snaps.resize(instances.size());
    cache.ptrs.assign(instances.size(), nullptr);
    if (config.variant == Variant::baseline || config.snapshot_mode == SnapshotMode::none)
        return cache;
    parallel_for(instances.size(), config.threads, [&](std::size_t i) {
        const RawSnapshot* raw = provider.raw_for(instances[i]);
        if (raw == nullptr)
            throw DataError("missing snapshot for doc " + instances[i].docid);
        cache.snaps[i] = normalize(*raw);
        cache.ptrs[i] = &cache.snaps[i];
    });
    return cache;
}

std::vector<Tensor> scaled_features(const std::vector<QueryDocInstance>& instances,
                                    const std::optional<FeatureScaler>& scaler) {
    std::vector<Tensor> out;
    out.reserve(instances.size());
    for (const auto& inst : instances)
        out.push_back(scaler ? scaler->apply(inst.features) : inst.features);
    return out;
}

double validation_map(const std::vector<QueryDocInstance>& val,
                      const std::vector<const NormalizedSnapshot*>& snaps,
                      const std::vector<Tensor>& feats, const VipParams& params,
                      const VipConfig& config) {
    if (val.empty()) return 0.0;
    std::vector<double> scores(val.size());
    parallel_for(val.size(), config.threads,
                 [&](std::size_t i) { scores[i] = forward(snaps[i], feats[i], params, config); });
    // Group by qid, order within query by (score desc, docid asc).
    std::map<std::string, std::vector<std::size_t>> by_query;
    for (std::size_t i = 0; i < val.size(); ++i) by_query[val[i].qid].push_back(i);
    double ap_sum = 0.0;
    std::size_t n_queries = 0;
    for (auto& [qid, idx] : by_query) {
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            if (scores[a] != scores[b]) return scores[a] > scores[b];
            return val[a].docid < val[b].docid;
        });
        std::vector<int> grades;
        grades.reserve(idx.size());
        bool has_relevant = false;
        for (std::size_t i : idx) {
            grades.push_back(val[i].label);
            has_relevant |= val[i].label >= 1;
        }
        if (!has_relevant && !config.include_zero_relevant) continue;
        ap_sum += average_precision(grades);
        ++n_queries;
    }
    return n_queries == 0 ? 0.0 : ap_sum / static_cast<double>(n_queries);
}

}  // namespace

TrainResult train(const std::vector<QueryDocInstance>& train_instances,
                  const std::vector<QueryDocInstance>& val_instances,
                  const InputProvider& provider, const VipConfig& config) {
    config.validate();
    const std::vector<TrainingPair> pairs = generate_pairs(train_instances);
    if (pairs.empty()) throw DataError("no training pairs (all labels equal within queries?)");

    TrainResult result;
    result.scaler = config.feature_scaling ? std::optional(FeatureScaler::fit(train_instances))
                                           : std::nullopt;
    const std::vector<Tensor> train_feats = scaled_features(train_instances, result.scaler);
    const std::vector<Tensor> val_feats = scaled_features(val_instances, result.scaler);
    const NormCache train_snaps = build_norm_cache(train_instances, provider, config);
    const NormCache val_snaps = build_norm_cache(val_instances, provider, config);

    VipParams params = init_params(config);
    AdamState adam = AdamState::init(params);
    Rng shuffle_rng(config.seed, "shuffle");

    result.params = params;  // best-so-far checkpoint (init when max_epochs == 0)
    result.best_epoch = 0;
    double best_map = -std::numeric_limits<double>::infinity();
    std::size_t epochs_since_best = 0;

    std::vector<std::uint32_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0u);

    // Per-pair gradient slots; summed in pair order so the result does not
    // depend on the thread count.
    const std::size_t max_batch = std::min<std::size_t>(config.batch_size, pairs.size());
    std::vector<std::vector<Tensor>> pair_grads(max_batch);
    std::vector<double> pair_loss(max_batch);
    for (auto& g : pair_grads) g = params.zero_grads();
    std::vector<Tensor> batch_grad = params.zero_grads();

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0, hinge_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t b = std::min(config.batch_size, order.size() - start);
            const double reg_term = regularized_loss(0.0, params, config);
            parallel_for(b, config.threads, [&](std::size_t i) {
                for (auto& g : pair_grads[i]) g.fill(0.0);
                const TrainingPair& pr = pairs[order[start + i]];
                pair_loss[i] = backward_pair(train_snaps.ptrs[pr.pos], train_feats[pr.pos],
                                             train_snaps.ptrs[pr.neg], train_feats[pr.neg],
                                             params, config, pair_grads[i]);
            });
            for (auto& g : batch_grad) g.fill(0.0);
            for (std::size_t i = 0; i < b; ++i) {
                for (std::size_t p = 0; p < batch_grad.size(); ++p) {
                    const Tensor& src = pair_grads[i][p];
                    Tensor& dst = batch_grad[p];
                    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
                }
                loss_sum += pair_loss[i];
                hinge_sum += pair_loss[i] - reg_term;
            }
            const double inv_b = 1.0 / static_cast<double>(b);
            for (auto& g : batch_grad)
                for (auto& v : g.data) v *= inv_b;
            adam_step(params, batch_grad, adam, config.adam());
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(pairs.size());
        stats.train_hinge = hinge_sum / static_cast<double>(pairs.size());
        stats.val_map = validation_map(val_instances, val_snaps.ptrs, val_feats, params, config);
        result.history.push_back(stats);

        if (val_instances.empty()) {
            result.params = params;  // no validation signal: keep the latest
            result.best_epoch = epoch;
            continue;
        }
        if (stats.val_map > best_map) {
            best_map = stats.val_map;
            result.params = params;
            result.best_epoch = epoch;
            epochs_since_best = 0;
        } else {
            ++epochs_since_best;
            if (epochs_since_best >= config.patience) break;
        }
    }
    return result;
}

double score_instance(const VipModel& model, const QueryDocInstance& inst,
                      const InputProvider& provider) {
    const Tensor feats = model.scaler ? model.scaler->apply(inst.features) : inst.features;
    if (model.config.variant == Variant::baseline ||
        model.config.snapshot_mode == SnapshotMode::none)
        return forward(nullptr, feats, model.params, model.config);
    const RawSnapshot* raw = provider.raw_for(inst);
    if (raw == nullptr) throw DataError("missing snapshot for doc " + inst.docid);
    const NormalizedSnapshot norm = normalize(*raw);
    return forward(&norm, feats, model.params, model.config);
}

std::vector<RunEntry> rank_query(const VipModel& model,
                                 const std::vector<QueryDocInstance>& query_instances,
                                 const InputProvider& provider) {
    std::vector<RunEntry> entries(query_instances.size());
    parallel_for(query_instances.size(), model.config.threads, [&](std::size_t i) {
        entries[i] = {query_instances[i].docid,
                      score_instance(model, query_instances[i], provider)};
    });
    std::sort(entries.begin(), entries.end(), [](const RunEntry& a, const RunEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.docid < b.docid;
    });
    return entries;
}

RunList rank_all(const VipModel& model, const std::vector<QueryDocInstance>& instances,
                 const InputProvider& provider) {
    std::map<std::string, std::vector<QueryDocInstance>> by_query;
    for (const auto& inst : instances) by_query[inst.qid].push_back(inst);
    RunList run;
    for (const auto& [qid, group] : by_query) run[qid] = rank_query(model, group, provider);
    return run;
}

}  // namespace vip
