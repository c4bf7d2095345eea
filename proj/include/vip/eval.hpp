#pragma once

#include <map>
#include <string>
#include <vector>

namespace vip {

// qid -> docid -> graded relevance.
using Qrels = std::map<std::string, std::map<std::string, int>>;

struct RunEntry {
    std::string docid;
    double score = 0.0;
};

// qid -> docids ordered by descending score, docid ascending on ties.
using RunList = std::map<std::string, std::vector<RunEntry>>;

// Binary relevance for P@k and AP is grade >= 1; NDCG uses (2^g - 1) gains
// with log2(i+1) discounts (LETOR 4.0 conventions).
double precision_at_k(const std::vector<int>& ranked_grades, std::size_t k);
double ndcg_at_k(const std::vector<int>& ranked_grades, std::size_t k);
double average_precision(const std::vector<int>& ranked_grades);

struct MetricReport {
    double p1 = 0, p5 = 0, p10 = 0;
    double ndcg1 = 0, ndcg5 = 0, ndcg10 = 0;
    double map = 0;
    std::size_t queries_evaluated = 0;
};

struct EvalOptions {
    // LETOR-style filtering: queries with no relevant documents are skipped;
    // set to true to include them as zeros instead.
    bool include_zero_relevant = false;
};

// Grades of a run's ranking for one query (docids absent from qrels get 0).
std::vector<int> ranked_grades(const std::vector<RunEntry>& ranking,
                               const std::map<std::string, int>& judgments);

MetricReport evaluate_run(const RunList& run, const Qrels& qrels, const EvalOptions& opt = {});

// Per-query average precision for significance testing, in qid order.
std::map<std::string, double> per_query_ap(const RunList& run, const Qrels& qrels,
                                           const EvalOptions& opt = {});

struct FoldSpec {
    std::vector<std::vector<std::string>> folds;  // 5 disjoint qid sets
};

FoldSpec make_folds(std::vector<std::string> qids, std::uint64_t seed);
// Override file: one "qid<TAB>fold" line per query, folds 0..4.
FoldSpec load_folds_file(const std::string& path, const std::vector<std::string>& qids);

struct TTestResult {
    double t = 0.0;
    double p = 1.0;  // two-sided
};

// Paired t-test with n-1 degrees of freedom. All-zero differences give
// t = 0, p = 1; nonzero constant differences are degenerate and rejected.
TTestResult paired_ttest(const std::vector<double>& a, const std::vector<double>& b);

// Regularized incomplete beta I_x(a, b), |error| < 1e-8.
double incomplete_beta(double a, double b, double x);

Qrels load_qrels_file(const std::string& path);
void save_qrels_file(const Qrels& qrels, const std::string& path);
RunList load_run_file(const std::string& path);
std::string format_run(const RunList& run, const std::string& tag);
void save_run_file(const RunList& run, const std::string& path, const std::string& tag);

std::string format_report(const MetricReport& report, const std::string& name);

}  // namespace vip
