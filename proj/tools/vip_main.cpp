// vip: dataset synthesis, snapshot indexing, model training, ranking and
// evaluation from one binary. Exit codes: 0 ok, 1 usage, 2 data/format,
// 3 numeric failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "vip/dataset.hpp"
#include "vip/errors.hpp"
#include "vip/eval.hpp"
#include "vip/gradcheck.hpp"
#include "vip/index.hpp"
#include "vip/io_util.hpp"
#include "vip/model.hpp"
#include "vip/parallel.hpp"
#include "vip/rng.hpp"
#include "vip/synth.hpp"

namespace fs = std::filesystem;

namespace {

// A run config file mirrors the model config JSON and may additionally name
// the dataset and output locations; explicit flags take precedence.
struct RunConfigFile {
    vip::VipConfig config;
    std::string data_dir;
    std::string out_dir;
};

RunConfigFile load_run_config(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(vip::read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw vip::ConfigError(std::string("bad config JSON: ") + e.what());
    }
    if (!j.is_object()) throw vip::ConfigError("config JSON must be an object");
    RunConfigFile rc;
    if (j.contains("data_dir")) {
        rc.data_dir = j.at("data_dir").get<std::string>();
        j.erase("data_dir");
    }
    if (j.contains("out_dir")) {
        rc.out_dir = j.at("out_dir").get<std::string>();
        j.erase("out_dir");
    }
    rc.config = vip::config_from_json(j.dump());
    return rc;
}

struct ConfigFlags {
    std::string config_path;
    std::uint64_t seed = 0;
    std::size_t max_epochs = 0, patience = 0, batch_size = 0;
    std::size_t resolution = 0, proposal_height = 0, lstm_dim = 0;
    double lr = 0, lambda1 = -1, lambda2 = -1;
    std::string variant, snapshot_mode;
    unsigned threads = 0;

    CLI::Option *o_seed = nullptr, *o_max_epochs = nullptr, *o_patience = nullptr,
                *o_batch = nullptr, *o_res = nullptr, *o_ph = nullptr, *o_lstm = nullptr,
                *o_lr = nullptr, *o_l1 = nullptr, *o_l2 = nullptr, *o_variant = nullptr,
                *o_mode = nullptr, *o_threads = nullptr;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file");
        o_seed = cmd->add_option("--seed", seed, "root random seed");
        o_max_epochs = cmd->add_option("--max-epochs", max_epochs, "training epoch cap");
        o_patience = cmd->add_option("--patience", patience, "early-stopping patience");
        o_batch = cmd->add_option("--batch-size", batch_size, "mini-batch size");
        o_res = cmd->add_option("--resolution", resolution, "snapshot resolution");
        o_ph = cmd->add_option("--proposal-height", proposal_height, "region proposal height");
        o_lstm = cmd->add_option("--lstm-dim", lstm_dim, "LSTM dimension");
        o_lr = cmd->add_option("--lr", lr, "Adam learning rate");
        o_l1 = cmd->add_option("--lambda1", lambda1, "phi1 L2 weight");
        o_l2 = cmd->add_option("--lambda2", lambda2, "phi2 L2 weight");
        o_variant = cmd->add_option("--variant", variant, "vip | baseline | cnn");
        o_mode = cmd->add_option("--snapshot-mode", snapshot_mode,
                                 "query_dependent | query_independent | none");
        o_threads = cmd->add_option("--threads", threads, "worker threads (0 = auto)");
    }

    // Precedence: flag > config file > default.
    vip::VipConfig resolve(std::string* data_dir = nullptr,
                           std::string* out_dir = nullptr) const {
        vip::VipConfig cfg;
        if (!config_path.empty()) {
            RunConfigFile rc = load_run_config(config_path);
            cfg = rc.config;
            if (data_dir && !rc.data_dir.empty()) *data_dir = rc.data_dir;
            if (out_dir && !rc.out_dir.empty()) *out_dir = rc.out_dir;
        }
        if (o_seed->count()) cfg.seed = seed;
        if (o_max_epochs->count()) cfg.max_epochs = max_epochs;
        if (o_patience->count()) cfg.patience = patience;
        if (o_batch->count()) cfg.batch_size = batch_size;
        if (o_res->count()) cfg.resolution = resolution;
        if (o_ph->count()) cfg.proposal_height = proposal_height;
        if (o_lstm->count()) cfg.lstm_dim = lstm_dim;
        if (o_lr->count()) cfg.lr = lr;
        if (o_l1->count()) cfg.lambda1 = lambda1;
        if (o_l2->count()) cfg.lambda2 = lambda2;
        if (o_variant->count()) cfg.variant = vip::variant_from_string(variant);
        if (o_mode->count()) cfg.snapshot_mode = vip::snapshot_mode_from_string(snapshot_mode);
        if (o_threads->count()) cfg.threads = threads;
        cfg.validate();
        return cfg;
    }
};

vip::InvertedIndex build_index_from_dir(const std::string& corpus_dir) {
    const auto docs = vip::load_corpus_tokens((fs::path(corpus_dir) / "corpus.tokens").string());
    std::uint32_t w = 0, h = 0;
    for (const auto& d : docs)
        for (const auto& t : d.tokens) {
            w = std::max(w, t.rect.qx + 1);
            h = std::max(h, t.rect.qy + 1);
        }
    // Prefer the stored snapshot dimensions when a snapshot is available.
    const fs::path snaps = fs::path(corpus_dir) / "snapshots";
    if (fs::is_directory(snaps))
        for (const auto& entry : fs::directory_iterator(snaps)) {
            if (entry.path().extension() != ".ppm") continue;
            const vip::RawSnapshot probe = vip::load_ppm_file(entry.path().string());
            w = std::max<std::uint32_t>(w, static_cast<std::uint32_t>(probe.width));
            h = std::max<std::uint32_t>(h, static_cast<std::uint32_t>(probe.height));
            break;
        }
    return vip::build_index(docs, w, h);
}

void write_history(const std::string& path, const vip::TrainResult& result) {
    std::ostringstream out;
    out << "epoch\ttrain_loss\ttrain_hinge\tval_map\n";
    char buf[64];
    for (const auto& e : result.history) {
        std::snprintf(buf, sizeof buf, "%zu\t%.6f\t%.6f\t%.6f", e.epoch, e.train_loss,
                      e.train_hinge, e.val_map);
        out << buf << "\n";
    }
    vip::atomic_write_file(path, out.str());
}

// Deterministic train/validation split over query ids.
std::pair<std::vector<std::string>, std::vector<std::string>> val_split(
    const std::vector<std::string>& qids, double val_frac, std::uint64_t seed) {
    std::vector<std::string> shuffled = qids;
    std::sort(shuffled.begin(), shuffled.end());
    vip::Rng rng(seed, "valsplit");
    rng.shuffle(shuffled);
    const std::size_t n_val = val_frac <= 0.0 ? 0
                                              : std::max<std::size_t>(
                                                    qids.size() >= 2 ? 1 : 0,
                                                    static_cast<std::size_t>(qids.size() * val_frac));
    std::vector<std::string> val(shuffled.begin(),
                                 shuffled.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::string> train(shuffled.begin() + static_cast<std::ptrdiff_t>(n_val),
                                   shuffled.end());
    return {train, val};
}

std::map<std::string, double> per_query_metric(const vip::RunList& run, const vip::Qrels& qrels,
                                               const std::string& metric, bool include_zero) {
    std::map<std::string, double> out;
    for (const auto& [qid, judgments] : qrels) {
        bool has_rel = false;
        for (const auto& [d, g] : judgments) has_rel |= g >= 1;
        if (!has_rel && !include_zero) continue;
        auto rit = run.find(qid);
        static const std::vector<vip::RunEntry> kEmpty;
        const auto grades = vip::ranked_grades(rit == run.end() ? kEmpty : rit->second, judgments);
        if (metric == "ap") out[qid] = vip::average_precision(grades);
        else if (metric.rfind("p@", 0) == 0)
            out[qid] = vip::precision_at_k(grades, std::stoul(metric.substr(2)));
        else if (metric.rfind("ndcg@", 0) == 0)
            out[qid] = vip::ndcg_at_k(grades, std::stoul(metric.substr(5)));
        else
            throw vip::ConfigError("unknown metric: " + metric + " (use ap, p@K or ndcg@K)");
    }
    return out;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"ViP snapshot ranking toolkit"};
    app.require_subcommand(1);

    // ---- synth ----
    auto* synth = app.add_subcommand("synth", "generate a synthetic snapshot dataset");
    std::string synth_out;
    vip::GenConfig gen;
    synth->add_option("--out", synth_out, "output dataset directory")->required();
    synth->add_option("--queries", gen.n_queries, "number of queries");
    synth->add_option("--docs-per-query", gen.docs_per_query, "documents per query");
    synth->add_option("--vocab", gen.vocab_size, "vocabulary size");
    synth->add_option("--seed", gen.seed, "generator seed");
    synth->add_option("--viewport", gen.viewport, "render viewport (pixels)");
    synth->add_option("--threads", gen.threads, "rasterizer threads (0 = auto)");

    // ---- index ----
    auto* index_cmd = app.add_subcommand("index", "inverted index operations");
    index_cmd->require_subcommand(1);
    auto* index_build = index_cmd->add_subcommand("build", "build the extended inverted index");
    std::string ib_corpus, ib_out;
    index_build->add_option("--corpus", ib_corpus, "dataset directory")->required();
    index_build->add_option("--out", ib_out, "output index file")->required();
    auto* index_overlay =
        index_cmd->add_subcommand("overlay", "reconstruct a query-dependent snapshot");
    std::string io_index, io_doc, io_query, io_out, io_snapshots;
    index_overlay->add_option("--index", io_index, "index file")->required();
    index_overlay->add_option("--doc", io_doc, "document id")->required();
    index_overlay->add_option("--query", io_query, "query terms")->required();
    index_overlay->add_option("--out", io_out, "output PPM file")->required();
    index_overlay->add_option("--snapshots", io_snapshots,
                              "snapshot directory (default: <index dir>/snapshots)");

    // ---- train ----
    auto* train_cmd = app.add_subcommand("train", "train a ranking model");
    std::string tr_data, tr_out = "model.bin", tr_history;
    double tr_val_frac = 0.2;
    ConfigFlags tr_flags;
    train_cmd->add_option("--data", tr_data, "dataset directory (or data_dir in --config)");
    train_cmd->add_option("--out", tr_out, "output model file");
    train_cmd->add_option("--history", tr_history, "write per-epoch stats TSV");
    train_cmd->add_option("--val-frac", tr_val_frac, "validation query fraction");
    tr_flags.attach(train_cmd);

    // ---- rank ----
    auto* rank_cmd = app.add_subcommand("rank", "score and rank a dataset");
    std::string rk_data, rk_model, rk_out = "run.txt", rk_tag = "vip";
    unsigned rk_threads = 0;
    rank_cmd->add_option("--data", rk_data, "dataset directory")->required();
    rank_cmd->add_option("--model", rk_model, "model checkpoint")->required();
    rank_cmd->add_option("--out", rk_out, "output TREC run file");
    rank_cmd->add_option("--tag", rk_tag, "run tag");
    rank_cmd->add_option("--threads", rk_threads, "scoring threads (0 = auto)");

    // ---- eval ----
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a TREC run against qrels");
    std::string ev_run, ev_qrels, ev_name = "run";
    bool ev_report = false, ev_include_zero = false;
    eval_cmd->add_option("--run", ev_run, "TREC run file")->required();
    eval_cmd->add_option("--qrels", ev_qrels, "TREC qrels file")->required();
    eval_cmd->add_flag("--report", ev_report, "print the full metric table");
    eval_cmd->add_flag("--include-zero-relevant", ev_include_zero,
                       "average queries with no relevant docs as zeros");
    eval_cmd->add_option("--name", ev_name, "row label for --report");

    // ---- ttest ----
    auto* ttest_cmd = app.add_subcommand("ttest", "paired t-test between two runs");
    std::string tt_a, tt_b, tt_qrels, tt_metric = "ap";
    bool tt_include_zero = false;
    ttest_cmd->add_option("--run-a", tt_a, "first run file")->required();
    ttest_cmd->add_option("--run-b", tt_b, "second run file")->required();
    ttest_cmd->add_option("--qrels", tt_qrels, "qrels file")->required();
    ttest_cmd->add_option("--metric", tt_metric, "per-query metric: ap, p@K, ndcg@K");
    ttest_cmd->add_flag("--include-zero-relevant", tt_include_zero,
                        "include queries with no relevant docs");

    // ---- sweep ----
    auto* sweep_cmd = app.add_subcommand("sweep", "cross-validated parameter sweep");
    std::string sw_data, sw_dim = "proposal", sw_out, sw_folds;
    std::vector<std::size_t> sw_values;
    unsigned sw_jobs = 1;
    ConfigFlags sw_flags;
    sweep_cmd->add_option("--data", sw_data, "dataset directory")->required();
    sweep_cmd->add_option("--dimension", sw_dim, "proposal | resolution")
        ->check(CLI::IsMember({"proposal", "resolution"}));
    sweep_cmd->add_option("--values", sw_values, "sweep values")->required()->delimiter(',');
    sweep_cmd->add_option("--out", sw_out, "output TSV (default: stdout)");
    sweep_cmd->add_option("--jobs", sw_jobs, "parallel rotation workers per value");
    sweep_cmd->add_option("--folds-file", sw_folds,
                          "fold override: one 'qid<TAB>fold' line per query (folds 0-4)");
    sw_flags.attach(sweep_cmd);

    // ---- dump-weights ----
    auto* dump_cmd = app.add_subcommand("dump-weights", "decision-layer weight magnitudes");
    std::string dw_model, dw_out;
    dump_cmd->add_option("--model", dw_model, "model checkpoint")->required();
    dump_cmd->add_option("--out", dw_out, "output TSV (default: stdout)");

    // ---- grad-check ----
    auto* gc_cmd = app.add_subcommand("grad-check", "finite-difference gradient check");
    std::size_t gc_seeds = 20;
    double gc_tol = 1e-6, gc_step = 1e-5;
    std::string gc_variant = "vip";
    gc_cmd->add_option("--seeds", gc_seeds, "number of random seeds");
    gc_cmd->add_option("--tol", gc_tol, "max relative error tolerance");
    gc_cmd->add_option("--step", gc_step, "finite difference step");
    gc_cmd->add_option("--variant", gc_variant, "vip | baseline | cnn");

    // ---- config ----
    auto* config_cmd = app.add_subcommand("config", "print the default config JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << e.what() << "\n";
        return 1;
    }

    if (*synth) {
        gen.validate();
        vip::gen_dataset(gen, synth_out);
        std::cout << "dataset written to " << synth_out << "\n";
        return 0;
    }

    if (*index_build) {
        vip::save_index_file(build_index_from_dir(ib_corpus), ib_out);
        std::cout << "index written to " << ib_out << "\n";
        return 0;
    }

    if (*index_overlay) {
        const vip::InvertedIndex index = vip::load_index_file(io_index);
        fs::path snap_dir = io_snapshots.empty()
                                ? fs::path(io_index).parent_path() / "snapshots"
                                : fs::path(io_snapshots);
        const fs::path snap_path = snap_dir / (io_doc + ".ppm");
        if (!fs::exists(snap_path))
            throw vip::DataError("query-independent snapshot not found: " + snap_path.string());
        const vip::RawSnapshot qi = vip::load_ppm_file(snap_path.string());
        const vip::RawSnapshot qd =
            vip::reconstruct_query_dependent(index, io_doc, vip::tokenize(io_query), qi);
        const auto bytes = vip::save_ppm(qd);
        vip::atomic_write_file(io_out, std::string_view(
                                           reinterpret_cast<const char*>(bytes.data()),
                                           bytes.size()));
        return 0;
    }

    if (*train_cmd) {
        std::string out_dir;
        const vip::VipConfig cfg = tr_flags.resolve(tr_data.empty() ? &tr_data : nullptr,
                                                    &out_dir);
        if (tr_data.empty())
            throw vip::ConfigError("no dataset: pass --data or set data_dir in the config file");
        if (!out_dir.empty() && tr_out == "model.bin")
            tr_out = (fs::path(out_dir) / "model.bin").string();
        const vip::Dataset ds =
            vip::load_dataset(tr_data, cfg.snapshot_mode == vip::SnapshotMode::query_dependent);
        auto [train_qids, val_qids] = val_split(ds.qids(), tr_val_frac, cfg.seed);
        vip::DatasetProvider provider(ds, cfg.snapshot_mode, cfg.resolution);
        const auto train_set = ds.subset(train_qids);
        const auto val_set = ds.subset(val_qids);
        provider.preload(train_set, cfg.threads);
        provider.preload(val_set, cfg.threads);
        const vip::TrainResult result = vip::train(train_set, val_set, provider, cfg);
        vip::save_model_file({cfg, result.params, result.scaler}, tr_out);
        if (!tr_history.empty()) write_history(tr_history, result);
        std::cout << "model written to " << tr_out << " (best epoch " << result.best_epoch
                  << ")\n";
        return 0;
    }

    if (*rank_cmd) {
        vip::VipModel model = vip::load_model_file(rk_model);
        if (rk_threads > 0) model.config.threads = rk_threads;
        const vip::Dataset ds = vip::load_dataset(
            rk_data, model.config.snapshot_mode == vip::SnapshotMode::query_dependent);
        vip::DatasetProvider provider(ds, model.config.snapshot_mode, model.config.resolution);
        provider.preload_all(model.config.threads);
        const vip::RunList run = vip::rank_all(model, ds.instances, provider);
        vip::save_run_file(run, rk_out, rk_tag);
        std::cout << "run written to " << rk_out << "\n";
        return 0;
    }

    if (*eval_cmd) {
        const vip::RunList run = vip::load_run_file(ev_run);
        const vip::Qrels qrels = vip::load_qrels_file(ev_qrels);
        const vip::MetricReport rep = vip::evaluate_run(run, qrels, {ev_include_zero});
        if (ev_report) {
            std::cout << vip::format_report(rep, ev_name);
        } else {
            char buf[32];
            auto line = [&](const char* name, double v) {
                std::snprintf(buf, sizeof buf, "%.4f", v);
                std::cout << name << "\t" << buf << "\n";
            };
            line("P@1", rep.p1);
            line("P@5", rep.p5);
            line("P@10", rep.p10);
            line("NDCG@1", rep.ndcg1);
            line("NDCG@5", rep.ndcg5);
            line("NDCG@10", rep.ndcg10);
            line("MAP", rep.map);
        }
        return 0;
    }

    if (*ttest_cmd) {
        const vip::Qrels qrels = vip::load_qrels_file(tt_qrels);
        const auto ma = per_query_metric(vip::load_run_file(tt_a), qrels, tt_metric,
                                         tt_include_zero);
        const auto mb = per_query_metric(vip::load_run_file(tt_b), qrels, tt_metric,
                                         tt_include_zero);
        std::vector<double> a, b;
        for (const auto& [qid, v] : ma) {
            auto it = mb.find(qid);
            if (it == mb.end()) throw vip::DataError("query " + qid + " missing from run B");
            a.push_back(v);
            b.push_back(it->second);
        }
        const vip::TTestResult r = vip::paired_ttest(a, b);
        char buf[64];
        std::snprintf(buf, sizeof buf, "t\t%.6f\np\t%.6f\n", r.t, r.p);
        std::cout << buf;
        return 0;
    }

    if (*sweep_cmd) {
        const vip::VipConfig base = sw_flags.resolve();
        // Best proposal height per resolution (16..256).
        const std::map<std::size_t, std::size_t> res_pairing{
            {16, 2}, {32, 2}, {64, 4}, {128, 8}, {256, 16}};
        std::vector<vip::VipConfig> configs;
        for (std::size_t value : sw_values) {
            vip::VipConfig cfg = base;
            if (sw_dim == "proposal") {
                cfg.proposal_height = value;
            } else {
                cfg.resolution = value;
                auto it = res_pairing.find(value);
                cfg.proposal_height = it != res_pairing.end() ? it->second : base.proposal_height;
            }
            cfg.validate();  // reject incompatible pairs before any training
            configs.push_back(cfg);
        }
        const vip::Dataset ds = vip::load_dataset(sw_data, true);
        const vip::FoldSpec folds = sw_folds.empty()
                                        ? vip::make_folds(ds.qids(), base.seed)
                                        : vip::load_folds_file(sw_folds, ds.qids());
        std::ostringstream table;
        table << "value\tP@10\tNDCG@10\tMAP\n";
        for (std::size_t i = 0; i < configs.size(); ++i) {
            vip::DatasetProvider provider(ds, configs[i].snapshot_mode, configs[i].resolution);
            const vip::CVResult cv = vip::cross_validate(ds, configs[i], folds, provider, sw_jobs);
            char buf[128];
            std::snprintf(buf, sizeof buf, "%zu\t%.4f\t%.4f\t%.4f", sw_values[i], cv.mean.p10,
                          cv.mean.ndcg10, cv.mean.map);
            table << buf << "\n";
            std::cerr << "sweep " << sw_dim << "=" << sw_values[i] << " done (MAP "
                      << cv.mean.map << ")\n";
        }
        if (sw_out.empty()) std::cout << table.str();
        else vip::atomic_write_file(sw_out, table.str());
        return 0;
    }

    if (*dump_cmd) {
        const vip::VipModel model = vip::load_model_file(dw_model);
        const auto weights = vip::dump_decision_weights(model.params, model.config);
        std::ostringstream out;
        char buf[64];
        for (const auto& [name, value] : weights) {
            std::snprintf(buf, sizeof buf, "%.6f", value);
            out << name << "\t" << buf << "\n";
        }
        if (dw_out.empty()) std::cout << out.str();
        else vip::atomic_write_file(dw_out, out.str());
        return 0;
    }

    if (*gc_cmd) {
        vip::VipConfig cfg = vip::tiny_config();
        cfg.variant = vip::variant_from_string(gc_variant);
        if (cfg.variant == vip::Variant::baseline) cfg.snapshot_mode = vip::SnapshotMode::none;
        double worst = 0.0;
        std::string worst_param;
        for (std::size_t s = 0; s < gc_seeds; ++s) {
            const vip::GradCheckReport rep = vip::model_grad_check(cfg, 100 + s, gc_step);
            if (rep.max_rel_err > worst) {
                worst = rep.max_rel_err;
                worst_param = rep.worst_param;
            }
        }
        char buf[128];
        std::snprintf(buf, sizeof buf, "max_rel_err\t%.3e\nworst_param\t%s\n", worst,
                      worst_param.c_str());
        std::cout << buf;
        if (worst >= gc_tol) {
            std::cerr << "error: numeric: gradient check failed (" << worst << " >= " << gc_tol
                      << ")\n";
            return 3;
        }
        return 0;
    }

    if (*config_cmd) {
        std::cout << vip::config_to_json(vip::VipConfig{}) << "\n";
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const vip::TrainingError& e) {
        std::cerr << "error: numeric: " << e.what() << "\n";
        return 3;
    } catch (const vip::ConfigError& e) {
        std::cerr << "error: usage: " << e.what() << "\n";
        return 1;
    } catch (const vip::FormatError& e) {
        std::cerr << "error: format: " << e.what() << "\n";
        return 2;
    } catch (const vip::DataError& e) {
        std::cerr << "error: data: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
