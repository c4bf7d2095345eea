#include "vip/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include "vip/errors.hpp"
#include "vip/parallel.hpp"

namespace vip {

namespace fs = std::filesystem;

std::vector<std::string> Dataset::qids() const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& inst : instances)
        if (seen.insert(inst.qid).second) out.push_back(inst.qid);
    return out;
}

std::vector<QueryDocInstance> Dataset::subset(const std::vector<std::string>& wanted) const {
    std::set<std::string> keep(wanted.begin(), wanted.end());
    std::vector<QueryDocInstance> out;
    for (const auto& inst : instances)
        if (keep.count(inst.qid)) out.push_back(inst);
    return out;
}

LetorRow parse_letor_line(const std::string& line, std::size_t lineno) {
    LetorRow row;
    std::istringstream ss(line);
    std::string tok;
    if (!(ss >> row.grade) || row.grade < 0)
        throw DataError("bad grade on LETOR line " + std::to_string(lineno));
    if (!(ss >> tok) || tok.rfind("qid:", 0) != 0)
        throw DataError("missing qid on LETOR line " + std::to_string(lineno));
    row.qid = tok.substr(4);
    std::vector<double> values;
    std::size_t expect = 1;
    while (ss >> tok) {
        if (tok[0] == '#') {
            std::string rest;
            std::getline(ss, rest);
            std::string comment = tok.substr(1) + rest;
            const auto pos = comment.find("docid=");
            if (pos != std::string::npos) {
                std::string id = comment.substr(pos + 6);
                const auto end = id.find_first_of(" \t\r");
                row.docid = end == std::string::npos ? id : id.substr(0, end);
            }
            break;
        }
        const auto colon = tok.find(':');
        if (colon == std::string::npos)
            throw DataError("bad feature token '" + tok + "' on LETOR line " +
                            std::to_string(lineno));
        const std::size_t idx = std::stoul(tok.substr(0, colon));
        if (idx != expect)
            throw DataError("non-sequential feature index on LETOR line " +
                            std::to_string(lineno));
        values.push_back(std::stod(tok.substr(colon + 1)));
        ++expect;
    }
    if (values.empty()) throw DataError("no features on LETOR line " + std::to_string(lineno));
    const std::size_t n = values.size();
    row.features = Tensor({n}, std::move(values));
    return row;
}

std::vector<IndexableDoc> load_corpus_tokens(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus tokens file: " + path);
    std::map<std::string, IndexableDoc> docs;
    std::vector<std::string> order;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        IndexableToken tok;
        std::string docid;
        if (!(ss >> docid >> tok.text >> tok.offset >> tok.rect.px >> tok.rect.py >>
              tok.rect.qx >> tok.rect.qy))
            throw DataError("bad corpus.tokens line " + std::to_string(lineno));
        auto [it, inserted] = docs.try_emplace(docid);
        if (inserted) {
            it->second.doc_id = docid;
            order.push_back(docid);
        }
        it->second.tokens.push_back(std::move(tok));
    }
    std::vector<IndexableDoc> out;
    out.reserve(order.size());
    for (const auto& id : order) out.push_back(std::move(docs.at(id)));
    return out;
}

Dataset load_dataset(const std::string& dir, bool build_token_index) {
    Dataset ds;
    ds.dir = fs::absolute(dir);
    if (!fs::is_directory(ds.dir)) throw DataError("dataset directory not found: " + dir);

    // features.letor carries grades and features keyed by docid.
    std::map<std::string, LetorRow> by_docid;
    {
        std::ifstream in(ds.dir / "features.letor");
        if (!in) throw DataError("cannot open " + (ds.dir / "features.letor").string());
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            LetorRow row = parse_letor_line(line, lineno);
            if (row.docid.empty())
                throw DataError("LETOR line " + std::to_string(lineno) + " lacks #docid=");
            if (!by_docid.emplace(row.docid, std::move(row)).second)
                throw DataError("duplicate docid in features.letor: " + row.docid);
        }
    }

    {
        std::ifstream in(ds.dir / "manifest.tsv");
        if (!in) throw DataError("cannot open " + (ds.dir / "manifest.tsv").string());
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            std::istringstream ss(line);
            std::string docid, qid, path;
            int grade;
            if (!(ss >> docid >> qid >> grade >> path))
                throw DataError("bad manifest line " + std::to_string(lineno) + ": " + line);
            auto it = by_docid.find(docid);
            if (it == by_docid.end())
                throw DataError("doc " + docid + " in manifest has no LETOR features");
            if (it->second.qid != qid || it->second.grade != grade)
                throw DataError("manifest/LETOR mismatch for doc " + docid);
            QueryDocInstance inst;
            inst.qid = qid;
            inst.docid = docid;
            inst.label = grade;
            inst.features = it->second.features;
            ds.instances.push_back(std::move(inst));
            ds.snapshot_paths[docid] = (ds.dir / path).string();
            ds.qrels[qid][docid] = grade;
        }
    }
    if (ds.instances.empty()) throw DataError("empty dataset: " + dir);

    {
        std::ifstream in(ds.dir / "queries.tsv");
        if (!in) throw DataError("cannot open " + (ds.dir / "queries.tsv").string());
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto tab = line.find('\t');
            if (tab == std::string::npos) throw DataError("bad queries.tsv line: " + line);
            ds.query_terms[line.substr(0, tab)] = tokenize(line.substr(tab + 1));
        }
    }
    for (const auto& inst : ds.instances)
        if (!ds.query_terms.count(inst.qid))
            throw DataError("no query terms for qid " + inst.qid);

    if (build_token_index) {
        const auto docs = load_corpus_tokens((ds.dir / "corpus.tokens").string());
        std::uint32_t w = 0, h = 0;
        for (const auto& d : docs)
            for (const auto& t : d.tokens) {
                w = std::max(w, t.rect.qx + 1);
                h = std::max(h, t.rect.qy + 1);
            }
        // Round up to the stored snapshot dimensions.
        if (!ds.snapshot_paths.empty()) {
            const RawSnapshot probe = load_ppm_file(ds.snapshot_paths.begin()->second);
            w = std::max<std::uint32_t>(w, static_cast<std::uint32_t>(probe.width));
            h = std::max<std::uint32_t>(h, static_cast<std::uint32_t>(probe.height));
        }
        ds.index = build_index(docs, w, h);
        ds.has_index = true;
    }
    return ds;
}

DatasetProvider::DatasetProvider(const Dataset& dataset, SnapshotMode mode,
                                 std::size_t resolution)
    : dataset_(dataset), mode_(mode), resolution_(resolution) {
    if (mode_ == SnapshotMode::query_dependent && !dataset_.has_index)
        throw ConfigError("query-dependent snapshots require the token index");
}

RawSnapshot DatasetProvider::prepare(const QueryDocInstance& inst,
                                     const RawSnapshot& full) const {
    if (mode_ == SnapshotMode::query_dependent) {
        const auto& terms = dataset_.query_terms.at(inst.qid);
        const RawSnapshot overlaid = reconstruct_query_dependent(
            dataset_.index, inst.docid, terms, full);
        return downsample(overlaid, resolution_, resolution_);
    }
    return downsample(full, resolution_, resolution_);
}

const RawSnapshot& DatasetProvider::fallback_snapshot() const {
    if (fallback_) return *fallback_;
    // Averaged fake snapshot over every snapshot that is present (streamed).
    std::vector<double> acc;
    std::size_t w = 0, h = 0, n = 0;
    for (const auto& [docid, path] : dataset_.snapshot_paths) {
        if (!fs::exists(path)) continue;
        const RawSnapshot img = load_ppm_file(path);
        if (acc.empty()) {
            w = img.width;
            h = img.height;
            acc.assign(img.pixels.size(), 0.0);
        }
        if (img.width != w || img.height != h)
            throw DataError("snapshot dimension mismatch at " + path);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += img.pixels[i];
        ++n;
    }
    if (n == 0) throw DataError("no snapshots available to average");
    auto fake = std::make_unique<RawSnapshot>();
    fake->width = w;
    fake->height = h;
    fake->pixels.resize(acc.size());
    for (std::size_t i = 0; i < acc.size(); ++i) {
        const double v = std::floor(acc[i] / static_cast<double>(n) + 0.5);
        fake->pixels[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
    fallback_ = std::move(fake);
    return *fallback_;
}

void DatasetProvider::preload(const std::vector<QueryDocInstance>& instances, unsigned threads) {
    if (mode_ == SnapshotMode::none) return;
    std::vector<const QueryDocInstance*> missing;
    for (const auto& inst : instances)
        if (!cache_.count(inst.docid)) missing.push_back(&inst);
    // Deduplicate docids while keeping a stable order.
    std::set<std::string> seen;
    std::vector<const QueryDocInstance*> work;
    for (const auto* inst : missing)
        if (seen.insert(inst->docid).second) work.push_back(inst);
    // Materialize the averaged fallback up front if any file is absent, so
    // parallel workers only ever read it.
    for (const auto* inst : work) {
        auto pit = dataset_.snapshot_paths.find(inst->docid);
        if (pit != dataset_.snapshot_paths.end() && !fs::exists(pit->second)) {
            fallback_snapshot();
            break;
        }
    }
    // Reserve slots first so parallel workers write disjoint entries.
    std::vector<RawSnapshot*> slots(work.size());
    for (std::size_t i = 0; i < work.size(); ++i) slots[i] = &cache_[work[i]->docid];
    parallel_for(work.size(), threads, [&](std::size_t i) {
        auto pit = dataset_.snapshot_paths.find(work[i]->docid);
        if (pit == dataset_.snapshot_paths.end())
            throw DataError("doc " + work[i]->docid + " has no snapshot path");
        if (fs::exists(pit->second)) {
            *slots[i] = prepare(*work[i], load_ppm_file(pit->second));
        } else {
            // Render failure stand-in: the averaged fake snapshot.
            *slots[i] = prepare(*work[i], fallback_snapshot());
        }
    });
}

void DatasetProvider::preload_all(unsigned threads) { preload(dataset_.instances, threads); }

const RawSnapshot* DatasetProvider::raw_for(const QueryDocInstance& inst) const {
    if (mode_ == SnapshotMode::none) return nullptr;
    auto it = cache_.find(inst.docid);
    if (it == cache_.end())
        throw DataError("snapshot for doc " + inst.docid + " was not preloaded");
    return &it->second;
}

CVResult cross_validate(const Dataset& dataset, const VipConfig& config, const FoldSpec& folds,
                        DatasetProvider& provider, unsigned rotation_workers) {
    config.validate();
    if (folds.folds.size() != 5) throw ConfigError("cross_validate expects 5 folds");
    std::vector<std::string> fold_qids;
    for (const auto& fold : folds.folds)
        fold_qids.insert(fold_qids.end(), fold.begin(), fold.end());
    provider.preload(dataset.subset(fold_qids), config.threads);

    CVResult result;
    result.fold_reports.resize(5);
    std::vector<RunList> fold_runs(5);

    VipConfig rot_config = config;
    if (rotation_workers > 1) {
        const unsigned total = effective_threads(config.threads);
        rot_config.threads = std::max(1u, total / rotation_workers);
    }

    parallel_for(5, rotation_workers, [&](std::size_t r) {
        const auto& test_qids = folds.folds[r];
        const auto& val_qids = folds.folds[(r + 1) % 5];
        std::vector<std::string> train_qids;
        for (std::size_t f = 0; f < 5; ++f) {
            if (f == r || f == (r + 1) % 5) continue;
            train_qids.insert(train_qids.end(), folds.folds[f].begin(), folds.folds[f].end());
        }
        const auto train_set = dataset.subset(train_qids);
        const auto val_set = dataset.subset(val_qids);
        const auto test_set = dataset.subset(test_qids);

        const TrainResult trained = train(train_set, val_set, provider, rot_config);
        VipModel model{rot_config, trained.params, trained.scaler};
        const RunList run = rank_all(model, test_set, provider);

        Qrels test_qrels;
        for (const auto& qid : test_qids) {
            auto it = dataset.qrels.find(qid);
            if (it != dataset.qrels.end()) test_qrels[qid] = it->second;
        }
        EvalOptions opt{config.include_zero_relevant};
        fold_runs[r] = run;
        result.fold_reports[r] = evaluate_run(run, test_qrels, opt);
    });

    EvalOptions opt{config.include_zero_relevant};
    for (std::size_t r = 0; r < 5; ++r) {
        for (const auto& [qid, entries] : fold_runs[r]) result.test_run[qid] = entries;
        Qrels fold_qrels;
        for (const auto& qid : folds.folds[r]) {
            auto it = dataset.qrels.find(qid);
            if (it != dataset.qrels.end()) fold_qrels[qid] = it->second;
        }
        for (const auto& [qid, ap] : per_query_ap(fold_runs[r], fold_qrels, opt))
            result.test_ap[qid] = ap;
        result.mean.p1 += result.fold_reports[r].p1;
        result.mean.p5 += result.fold_reports[r].p5;
        result.mean.p10 += result.fold_reports[r].p10;
        result.mean.ndcg1 += result.fold_reports[r].ndcg1;
        result.mean.ndcg5 += result.fold_reports[r].ndcg5;
        result.mean.ndcg10 += result.fold_reports[r].ndcg10;
        result.mean.map += result.fold_reports[r].map;
        result.mean.queries_evaluated += result.fold_reports[r].queries_evaluated;
    }
    result.mean.p1 /= 5; result.mean.p5 /= 5; result.mean.p10 /= 5;
    result.mean.ndcg1 /= 5; result.mean.ndcg5 /= 5; result.mean.ndcg10 /= 5;
    result.mean.map /= 5;
    return result;
}

}  // namespace vip
