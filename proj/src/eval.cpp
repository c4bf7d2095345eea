#include "vip/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "vip/errors.hpp"
#include "vip/io_util.hpp"
#include "vip/rng.hpp"

namespace vip {

double precision_at_k(const std::vector<int>& ranked_grades, std::size_t k) {
    if (k == 0) throw ConfigError("precision_at_k: k must be >= 1");
    std::size_t relevant = 0;
    const std::size_t top = std::min(k, ranked_grades.size());
    for (std::size_t i = 0; i < top; ++i)
        if (ranked_grades[i] >= 1) ++relevant;
    return static_cast<double>(relevant) / static_cast<double>(k);
}

namespace {

double dcg_at_k(const std::vector<int>& grades, std::size_t k) {
    double dcg = 0.0;
    const std::size_t top = std::min(k, grades.size());
    for (std::size_t i = 0; i < top; ++i)
        dcg += (std::exp2(grades[i]) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
    return dcg;
}

}  // namespace

double ndcg_at_k(const std::vector<int>& ranked_grades, std::size_t k) {
    if (k == 0) throw ConfigError("ndcg_at_k: k must be >= 1");
    std::vector<int> ideal = ranked_grades;
    std::sort(ideal.begin(), ideal.end(), std::greater<int>());
    const double idcg = dcg_at_k(ideal, k);
    if (idcg == 0.0) return 0.0;  // no relevant docs
    return dcg_at_k(ranked_grades, k) / idcg;
}

double average_precision(const std::vector<int>& ranked_grades) {
    std::size_t relevant_seen = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < ranked_grades.size(); ++i) {
        if (ranked_grades[i] >= 1) {
            ++relevant_seen;
            sum += static_cast<double>(relevant_seen) / static_cast<double>(i + 1);
        }
    }
    if (relevant_seen == 0) return 0.0;
    return sum / static_cast<double>(relevant_seen);
}

std::vector<int> ranked_grades(const std::vector<RunEntry>& ranking,
                               const std::map<std::string, int>& judgments) {
    std::vector<int> grades;
    grades.reserve(ranking.size());
    for (const auto& e : ranking) {
        auto it = judgments.find(e.docid);
        grades.push_back(it == judgments.end() ? 0 : it->second);
    }
    return grades;
}

namespace {

bool query_has_relevant(const std::map<std::string, int>& judgments) {
    for (const auto& [doc, g] : judgments)
        if (g >= 1) return true;
    return false;
}

}  // namespace

MetricReport evaluate_run(const RunList& run, const Qrels& qrels, const EvalOptions& opt) {
    MetricReport rep;
    static const std::map<std::string, int> kNoJudgments;
    for (const auto& [qid, judgments] : qrels) {
        if (!opt.include_zero_relevant && !query_has_relevant(judgments)) continue;
        auto rit = run.find(qid);
        const std::vector<RunEntry> empty;
        const auto& ranking = rit == run.end() ? empty : rit->second;
        const auto grades = ranked_grades(ranking, judgments);
        rep.p1 += precision_at_k(grades, 1);
        rep.p5 += precision_at_k(grades, 5);
        rep.p10 += precision_at_k(grades, 10);
        rep.ndcg1 += ndcg_at_k(grades, 1);
        rep.ndcg5 += ndcg_at_k(grades, 5);
        rep.ndcg10 += ndcg_at_k(grades, 10);
        rep.map += average_precision(grades);
        ++rep.queries_evaluated;
    }
    if (rep.queries_evaluated > 0) {
        const double n = static_cast<double>(rep.queries_evaluated);
        rep.p1 /= n; rep.p5 /= n; rep.p10 /= n;
        rep.ndcg1 /= n; rep.ndcg5 /= n; rep.ndcg10 /= n;
        rep.map /= n;
    }
    return rep;
}

std::map<std::string, double> per_query_ap(const RunList& run, const Qrels& qrels,
                                           const EvalOptions& opt) {
    std::map<std::string, double> out;
    for (const auto& [qid, judgments] : qrels) {
        if (!opt.include_zero_relevant && !query_has_relevant(judgments)) continue;
        auto rit = run.find(qid);
        const std::vector<RunEntry> empty;
        const auto& ranking = rit == run.end() ? empty : rit->second;
        out[qid] = average_precision(ranked_grades(ranking, judgments));
    }
    return out;
}

FoldSpec make_folds(std::vector<std::string> qids, std::uint64_t seed) {
    if (qids.size() < 5) throw ConfigError("cross-validation requires at least 5 queries");
    std::sort(qids.begin(), qids.end());
    Rng rng(seed, "folds");
    rng.shuffle(qids);
    FoldSpec spec;
    spec.folds.resize(5);
    for (std::size_t i = 0; i < qids.size(); ++i) spec.folds[i % 5].push_back(std::move(qids[i]));
    return spec;
}

FoldSpec load_folds_file(const std::string& path, const std::vector<std::string>& qids) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open folds file: " + path);
    std::map<std::string, int> assignment;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string qid;
        int fold = -1;
        ss >> qid >> fold;
        if (qid.empty() || fold < 0 || fold > 4)
            throw DataError("bad folds line: " + line);
        assignment[qid] = fold;
    }
    FoldSpec spec;
    spec.folds.resize(5);
    for (const auto& qid : qids) {
        auto it = assignment.find(qid);
        if (it == assignment.end()) throw DataError("folds file is missing qid " + qid);
        spec.folds[static_cast<std::size_t>(it->second)].push_back(qid);
    }
    return spec;
}

namespace {

// Continued-fraction evaluation of the incomplete beta (Lentz's method).
double beta_cf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 1e-15;
    constexpr double kTiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) return h;
    }
    return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log(1.0 - x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
    return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

TTestResult paired_ttest(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ConfigError("paired t-test: vectors differ in length");
    const std::size_t n = a.size();
    if (n < 2) throw ConfigError("paired t-test: need at least 2 pairs");
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
    bool all_zero = true;
    for (double v : d)
        if (v != 0.0) { all_zero = false; break; }
    if (all_zero) return {0.0, 1.0};  // identical inputs: no effect, maximal p
    double mean = 0.0;
    for (double v : d) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : d) ss += (v - mean) * (v - mean);
    const double var = ss / static_cast<double>(n - 1);
    if (var == 0.0)
        throw ConfigError("paired t-test: differences are a nonzero constant (zero variance)");
    const double t = mean / std::sqrt(var / static_cast<double>(n));
    const double dof = static_cast<double>(n - 1);
    const double p = incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t));
    return {t, p};
}

Qrels load_qrels_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open qrels file: " + path);
    Qrels qrels;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string qid, iter, docid;
        int grade;
        if (!(ss >> qid >> iter >> docid >> grade) || grade < 0)
            throw DataError("bad qrels line " + std::to_string(lineno) + ": " + line);
        qrels[qid][docid] = grade;
    }
    return qrels;
}

void save_qrels_file(const Qrels& qrels, const std::string& path) {
    std::ostringstream out;
    for (const auto& [qid, judgments] : qrels)
        for (const auto& [docid, grade] : judgments)
            out << qid << " 0 " << docid << " " << grade << "\n";
    atomic_write_file(path, out.str());
}

RunList load_run_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open run file: " + path);
    RunList run;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string qid, q0, docid, tag;
        int rank;
        double score;
        if (!(ss >> qid >> q0 >> docid >> rank >> score >> tag))
            throw DataError("bad run line " + std::to_string(lineno) + ": " + line);
        run[qid].push_back({docid, score});
    }
    for (auto& [qid, entries] : run) {
        std::stable_sort(entries.begin(), entries.end(), [](const RunEntry& x, const RunEntry& y) {
            if (x.score != y.score) return x.score > y.score;
            return x.docid < y.docid;
        });
        for (std::size_t i = 1; i < entries.size(); ++i)
            if (entries[i].docid == entries[i - 1].docid)
                throw DataError("duplicate docid " + entries[i].docid + " for query " + qid);
    }
    return run;
}

std::string format_run(const RunList& run, const std::string& tag) {
    std::ostringstream out;
    char buf[64];
    for (const auto& [qid, entries] : run) {
        for (std::size_t i = 0; i < entries.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.6f", entries[i].score);
            out << qid << " Q0 " << entries[i].docid << " " << (i + 1) << " " << buf << " " << tag
                << "\n";
        }
    }
    return out.str();
}

void save_run_file(const RunList& run, const std::string& path, const std::string& tag) {
    atomic_write_file(path, format_run(run, tag));
}

std::string format_report(const MetricReport& r, const std::string& name) {
    std::ostringstream out;
    out << "Model\tP@1\tP@5\tP@10\tNDCG@1\tNDCG@5\tNDCG@10\tMAP\n";
    char buf[32];
    out << name;
    for (double v : {r.p1, r.p5, r.p10, r.ndcg1, r.ndcg5, r.ndcg10, r.map}) {
        std::snprintf(buf, sizeof buf, "%.4f", v);
        out << "\t" << buf;
    }
    out << "\n";
    return out.str();
}

}  // namespace vip
