#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "convsel/io.hpp"
#include "convsel/types.hpp"

namespace convsel {

struct MetricSpec {
    enum class Kind { MRR, NDCG, Recall };

    Kind kind = Kind::MRR;
    int k = 0;  // cutoff; 0 means full depth (MRR only)

    static MetricSpec mrr(int cutoff = 0) { return {Kind::MRR, cutoff}; }
    static MetricSpec ndcg_at(int k) { return {Kind::NDCG, k}; }
    static MetricSpec recall_at(int k) { return {Kind::Recall, k}; }

    std::string name() const
    {
        switch (kind) {
            case Kind::MRR:
                return k > 0 ? "MRR@" + std::to_string(k) : "MRR";
            case Kind::NDCG:
                return "NDCG@" + std::to_string(k);
            case Kind::Recall:
                return "Recall@" + std::to_string(k);
        }
        return "?";
    }

    // The paper's reporting set: MRR, NDCG@3, Recall@10, Recall@20, Recall@100.
    static std::vector<MetricSpec> default_set()
    {
        return {mrr(), ndcg_at(3), recall_at(10), recall_at(20), recall_at(100)};
    }
};

// Reciprocal rank of the first doc with grade >= 1 within the cutoff, else 0.
inline double mrr(const RankedList& ranked, const Qrels& qrels, int cutoff = 0)
{
    std::size_t depth = cutoff > 0 ? std::min<std::size_t>(ranked.entries.size(), static_cast<std::size_t>(cutoff))
                                   : ranked.entries.size();
    for (std::size_t i = 0; i < depth; ++i) {
        if (qrels.grade(ranked.query_key, ranked.entries[i].doc_id) >= 1) {
            return 1.0 / static_cast<double>(i + 1);
        }
    }
    return 0.0;
}

// trec_eval "ndcg" semantics: linear gain grade / log2(rank + 1), ideal from grades sorted descending.
inline double ndcg_at_k(const RankedList& ranked, const Qrels& qrels, int k)
{
    if (k < 1) {
        throw UsageError("ndcg cutoff must be >= 1");
    }
    double dcg = 0.0;
    std::size_t depth = std::min<std::size_t>(ranked.entries.size(), static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < depth; ++i) {
        int grade = qrels.grade(ranked.query_key, ranked.entries[i].doc_id);
        if (grade > 0) {
            dcg += static_cast<double>(grade) / std::log2(static_cast<double>(i) + 2.0);
        }
    }
    auto grades = qrels.grades(ranked.query_key);
    std::sort(grades.begin(), grades.end(), std::greater<int>());
    double idcg = 0.0;
    for (std::size_t i = 0; i < grades.size() && i < static_cast<std::size_t>(k); ++i) {
        if (grades[i] > 0) {
            idcg += static_cast<double>(grades[i]) / std::log2(static_cast<double>(i) + 2.0);
        }
    }
    return idcg > 0.0 ? dcg / idcg : 0.0;
}

inline double recall_at_k(const RankedList& ranked, const Qrels& qrels, int k)
{
    if (k < 1) {
        throw UsageError("recall cutoff must be >= 1");
    }
    auto relevant = qrels.relevant_docs(ranked.query_key);
    if (relevant.empty()) {
        return 0.0;
    }
    std::size_t hits = 0;
    std::size_t depth = std::min<std::size_t>(ranked.entries.size(), static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < depth; ++i) {
        if (qrels.grade(ranked.query_key, ranked.entries[i].doc_id) >= 1) {
            ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

inline double eval_metric(const RankedList& ranked, const Qrels& qrels, const MetricSpec& spec)
{
    switch (spec.kind) {
        case MetricSpec::Kind::MRR:
            return mrr(ranked, qrels, spec.k);
        case MetricSpec::Kind::NDCG:
            return ndcg_at_k(ranked, qrels, spec.k);
        case MetricSpec::Kind::Recall:
            return recall_at_k(ranked, qrels, spec.k);
    }
    return 0.0;
}

struct MetricReport {
    double mean = 0.0;
    std::map<std::string, double> per_query;
};

struct EvalReport {
    std::map<std::string, MetricReport> metrics;  // metric name -> values
    std::vector<std::string> unjudged_queries;    // in the run but with no qrels entry
    std::vector<std::string> missing_queries;     // judged but absent from the run
    std::size_t num_queries = 0;
};

// Unweighted means over the queries present in the run; judged-but-absent queries are
// reported as missing and contribute nothing, matching pytrec_eval on partial runs.
inline EvalReport evaluate_run(const std::vector<RankedList>& run, const Qrels& qrels,
                               const std::vector<MetricSpec>& specs)
{
    EvalReport report;
    report.num_queries = run.size();
    for (const auto& spec : specs) {
        report.metrics.emplace(spec.name(), MetricReport{});
    }
    std::set<std::string> in_run;
    for (const auto& ranked : run) {
        in_run.insert(ranked.query_key);
        if (!qrels.has_query(ranked.query_key)) {
            report.unjudged_queries.push_back(ranked.query_key);
        }
        for (const auto& spec : specs) {
            report.metrics[spec.name()].per_query[ranked.query_key] = eval_metric(ranked, qrels, spec);
        }
    }
    for (const auto& [qkey, docs] : qrels.judgments()) {
        if (!in_run.count(qkey)) {
            report.missing_queries.push_back(qkey);
        }
    }
    if (!run.empty()) {
        for (auto& [name, metric] : report.metrics) {
            double sum = 0.0;
            for (const auto& [qkey, value] : metric.per_query) {
                sum += value;
            }
            metric.mean = sum / static_cast<double>(metric.per_query.size());
        }
    }
    return report;
}

inline nlohmann::json report_to_json(const EvalReport& report)
{
    nlohmann::json metrics = nlohmann::json::object();
    for (const auto& [name, metric] : report.metrics) {
        metrics[name] = {{"mean", metric.mean}, {"per_query", metric.per_query}};
    }
    return nlohmann::json{{"metrics", std::move(metrics)},
                          {"num_queries", report.num_queries},
                          {"unjudged_queries", report.unjudged_queries},
                          {"missing_queries", report.missing_queries}};
}

inline void save_report_json(const EvalReport& report, const std::string& path)
{
    auto out = detail::open_output(path);
    out << report_to_json(report).dump(2) << '\n';
}

// Flat TSV: one "metric <tab> query <tab> value" row per query, plus an "all" row per metric.
inline void save_report_tsv(const EvalReport& report, const std::string& path)
{
    auto out = detail::open_output(path);
    out.precision(6);
    out << std::fixed;
    for (const auto& [name, metric] : report.metrics) {
        for (const auto& [qkey, value] : metric.per_query) {
            out << name << '\t' << qkey << '\t' << value << '\n';
        }
        out << name << "\tall\t" << metric.mean << '\n';
    }
}

}  // namespace convsel
