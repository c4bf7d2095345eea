#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "vip/eval.hpp"
#include "vip/index.hpp"
#include "vip/model.hpp"

namespace vip {

// A loaded dataset directory: manifest.tsv, queries.tsv, features.letor,
// qrels.txt, corpus.tokens and snapshots/<docid>.ppm.
struct Dataset {
    std::filesystem::path dir;
    std::vector<QueryDocInstance> instances;  // manifest order
    std::map<std::string, std::vector<std::string>> query_terms;
    std::map<std::string, std::string> snapshot_paths;  // docid -> absolute path
    Qrels qrels;
    InvertedIndex index;  // built from corpus.tokens when requested
    bool has_index = false;

    std::vector<std::string> qids() const;  // unique, first-appearance order
    std::vector<QueryDocInstance> subset(const std::vector<std::string>& qids) const;
};

Dataset load_dataset(const std::string& dir, bool build_token_index = true);

// Parses one LETOR line: "<grade> qid:<q> 1:<v> ... k:<v> #docid=<d>".
struct LetorRow {
    int grade = 0;
    std::string qid;
    std::string docid;
    Tensor features;
};
LetorRow parse_letor_line(const std::string& line, std::size_t lineno);

std::vector<IndexableDoc> load_corpus_tokens(const std::string& path);

// Caches down-sampled (and, in query-dependent mode, overlaid) snapshots so
// training and ranking only touch small in-memory images. `preload` must run
// before concurrent use.
class DatasetProvider : public InputProvider {
public:
    DatasetProvider(const Dataset& dataset, SnapshotMode mode, std::size_t resolution);

    void preload(const std::vector<QueryDocInstance>& instances, unsigned threads);
    void preload_all(unsigned threads);

    const RawSnapshot* raw_for(const QueryDocInstance& inst) const override;

private:
    const Dataset& dataset_;
    SnapshotMode mode_;
    std::size_t resolution_;
    std::map<std::string, RawSnapshot> cache_;  // docid -> prepared snapshot
    mutable std::unique_ptr<RawSnapshot> fallback_;  // averaged fake snapshot source

    RawSnapshot prepare(const QueryDocInstance& inst, const RawSnapshot& full) const;
    const RawSnapshot& fallback_snapshot() const;
};

struct CVResult {
    MetricReport mean;  // unweighted mean over the 5 test folds
    std::vector<MetricReport> fold_reports;
    std::map<std::string, double> test_ap;  // per-query AP from its test rotation
    RunList test_run;                       // union of the 5 test-fold runs
};

// 5 rotations: test fold r, validation fold (r+1) % 5, train the rest.
// `rotation_workers` > 1 trains rotations concurrently (inner thread budget
// is divided accordingly).
CVResult cross_validate(const Dataset& dataset, const VipConfig& config, const FoldSpec& folds,
                        DatasetProvider& provider, unsigned rotation_workers = 1);

}  // namespace vip
