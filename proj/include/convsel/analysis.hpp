#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "convsel/io.hpp"
#include "convsel/metrics.hpp"
#include "convsel/prl.hpp"
#include "convsel/types.hpp"

namespace convsel {

enum class SwitchType { TopicShift, TopicReturn, NoSwitch };

inline const char* switch_name(SwitchType type)
{
    switch (type) {
        case SwitchType::TopicShift:
            return "topic_shift";
        case SwitchType::TopicReturn:
            return "topic_return";
        case SwitchType::NoSwitch:
            return "no_switch";
    }
    return "?";
}

// NoSwitch if the last historical turn is relevant; TopicShift if none is; TopicReturn
// if the last is irrelevant but some earlier turn is.
inline SwitchType classify_switch(const std::vector<bool>& labels)
{
    if (labels.empty()) {
        throw DataError("turn 1 has no history to classify");
    }
    if (labels.back()) {
        return SwitchType::NoSwitch;
    }
    for (bool relevant : labels) {
        if (relevant) {
            return SwitchType::TopicReturn;
        }
    }
    return SwitchType::TopicShift;
}

// The number of topics in a conversation is determined by topic shifts.
inline int topics_per_conversation(const std::vector<SwitchType>& switches)
{
    int topics = 1;
    for (auto type : switches) {
        if (type == SwitchType::TopicShift) {
            ++topics;
        }
    }
    return topics;
}

using TurnKey = std::pair<std::string, int>;
using LabelsByTurn = std::map<TurnKey, std::vector<bool>>;

inline LabelsByTurn labels_by_turn(const std::vector<PRLabel>& labels)
{
    LabelsByTurn out;
    for (const auto& [key, flags] : prl_by_turn(labels)) {
        out.emplace(key, flags);
    }
    return out;
}

inline std::map<TurnKey, SwitchType> switch_types(const LabelsByTurn& labels)
{
    std::map<TurnKey, SwitchType> out;
    for (const auto& [key, flags] : labels) {
        out.emplace(key, classify_switch(flags));
    }
    return out;
}

struct TypeAgreement {
    std::size_t count_a = 0;  // turns with this type under judgment a
    std::size_t count_both = 0;  // of those, turns with the same type under b
    double percent = 0.0;
};

struct AgreementReport {
    std::map<std::string, TypeAgreement> per_type;  // keyed by switch_name
    std::size_t candidate_total = 0;   // candidate-level label agreement
    std::size_t candidate_match = 0;
    double candidate_percent = 0.0;
};

// Table-3-style agreement between two judgment sources over the same turns: per
// switch type of judgment a, how often b classifies the turn the same way, plus the
// raw candidate-level label overlap.
inline AgreementReport judgment_agreement(const LabelsByTurn& a, const LabelsByTurn& b)
{
    if (a.size() != b.size()) {
        throw DataError("judgment agreement needs identical turn sets");
    }
    AgreementReport report;
    for (auto type : {SwitchType::TopicShift, SwitchType::TopicReturn, SwitchType::NoSwitch}) {
        report.per_type.emplace(switch_name(type), TypeAgreement{});
    }
    for (const auto& [key, labels_a] : a) {
        auto it = b.find(key);
        if (it == b.end() || it->second.size() != labels_a.size()) {
            throw DataError("judgment agreement needs identical (session, turn, candidate) sets");
        }
        const auto& labels_b = it->second;
        for (std::size_t i = 0; i < labels_a.size(); ++i) {
            ++report.candidate_total;
            if (labels_a[i] == labels_b[i]) {
                ++report.candidate_match;
            }
        }
        auto& slot = report.per_type[switch_name(classify_switch(labels_a))];
        ++slot.count_a;
        if (classify_switch(labels_b) == classify_switch(labels_a)) {
            ++slot.count_both;
        }
    }
    for (auto& [name, slot] : report.per_type) {
        slot.percent = slot.count_a > 0 ? 100.0 * static_cast<double>(slot.count_both) / static_cast<double>(slot.count_a)
                                        : 0.0;
    }
    report.candidate_percent = report.candidate_total > 0
                                   ? 100.0 * static_cast<double>(report.candidate_match) /
                                         static_cast<double>(report.candidate_total)
                                   : 0.0;
    return report;
}

enum class TurnOutcome { Success, Failure, Tie };

struct SuccessFailureReport {
    std::map<std::string, TurnOutcome> per_turn;  // keyed by query_key
    std::size_t successes = 0;
    std::size_t failures = 0;
    std::size_t ties = 0;
    // Histogram keyed by switch type name, then "success"/"failure"/"tie".
    std::map<std::string, std::map<std::string, std::size_t>> by_switch_type;
    std::vector<std::string> skipped;  // query keys missing from either run
};

// Per-turn comparison of selective expansion against all-expansion: a turn is a
// success iff its MRR strictly increases, a failure iff it strictly drops.
inline SuccessFailureReport success_failure(const std::vector<RankedList>& run_prl,
                                            const std::vector<RankedList>& run_all, const Qrels& qrels,
                                            const std::map<TurnKey, SwitchType>& switches = {})
{
    std::map<std::string, const RankedList*> prl_by_key;
    std::map<std::string, const RankedList*> all_by_key;
    for (const auto& list : run_prl) {
        prl_by_key.emplace(list.query_key, &list);
    }
    for (const auto& list : run_all) {
        all_by_key.emplace(list.query_key, &list);
    }

    std::map<std::string, SwitchType> switch_by_key;
    for (const auto& [key, type] : switches) {
        switch_by_key.emplace(query_key(key.first, key.second), type);
    }

    SuccessFailureReport report;
    std::set<std::string> keys;
    for (const auto& [key, list] : prl_by_key) {
        keys.insert(key);
    }
    for (const auto& [key, list] : all_by_key) {
        keys.insert(key);
    }
    for (const auto& key : keys) {
        auto pit = prl_by_key.find(key);
        auto ait = all_by_key.find(key);
        if (pit == prl_by_key.end() || ait == all_by_key.end()) {
            report.skipped.push_back(key);
            continue;
        }
        const double prl_score = mrr(*pit->second, qrels);
        const double all_score = mrr(*ait->second, qrels);
        TurnOutcome outcome = TurnOutcome::Tie;
        if (prl_score > all_score) {
            outcome = TurnOutcome::Success;
            ++report.successes;
        } else if (prl_score < all_score) {
            outcome = TurnOutcome::Failure;
            ++report.failures;
        } else {
            ++report.ties;
        }
        report.per_turn.emplace(key, outcome);
        auto sit = switch_by_key.find(key);
        if (sit != switch_by_key.end()) {
            const char* bucket = outcome == TurnOutcome::Success ? "success"
                                 : outcome == TurnOutcome::Failure ? "failure"
                                                                   : "tie";
            ++report.by_switch_type[switch_name(sit->second)][bucket];
        }
    }
    return report;
}

struct AnalysisReport {
    std::map<std::string, std::size_t> switch_counts;
    double topics_per_conv_mean = 0.0;
    AgreementReport agreement;
    bool has_agreement = false;
    SuccessFailureReport success;
    bool has_success = false;
};

inline nlohmann::json analysis_to_json(const AnalysisReport& report)
{
    nlohmann::json obj{{"switch_counts", report.switch_counts},
                       {"topics_per_conversation", {{"mean", report.topics_per_conv_mean}}}};
    if (report.has_agreement) {
        nlohmann::json types = nlohmann::json::object();
        for (const auto& [name, slot] : report.agreement.per_type) {
            types[name] = {{"count", slot.count_a}, {"overlap", slot.count_both}, {"percent", slot.percent}};
        }
        obj["agreement"] = {{"per_type", std::move(types)},
                            {"candidate", {{"total", report.agreement.candidate_total},
                                           {"match", report.agreement.candidate_match},
                                           {"percent", report.agreement.candidate_percent}}}};
    }
    if (report.has_success) {
        obj["success_failure"] = {{"successes", report.success.successes},
                                  {"failures", report.success.failures},
                                  {"ties", report.success.ties},
                                  {"by_switch_type", report.success.by_switch_type},
                                  {"skipped", report.success.skipped}};
    }
    return obj;
}

inline void save_analysis_tsv(const AnalysisReport& report, const std::string& path)
{
    auto out = detail::open_output(path);
    for (const auto& [name, count] : report.switch_counts) {
        out << "switch_count\t" << name << '\t' << count << '\n';
    }
    out << "topics_per_conversation\tmean\t" << report.topics_per_conv_mean << '\n';
    if (report.has_agreement) {
        for (const auto& [name, slot] : report.agreement.per_type) {
            out << "agreement\t" << name << '\t' << slot.count_a << '\t' << slot.count_both << '\t' << slot.percent
                << '\n';
        }
        out << "agreement\tcandidate\t" << report.agreement.candidate_total << '\t'
            << report.agreement.candidate_match << '\t' << report.agreement.candidate_percent << '\n';
    }
    if (report.has_success) {
        out << "success_failure\tsuccess\t" << report.success.successes << '\n';
        out << "success_failure\tfailure\t" << report.success.failures << '\n';
        out << "success_failure\ttie\t" << report.success.ties << '\n';
        for (const auto& [type, buckets] : report.success.by_switch_type) {
            for (const auto& [bucket, count] : buckets) {
                out << "success_failure_by_type\t" << type << '\t' << bucket << '\t' << count << '\n';
            }
        }
    }
}

}  // namespace convsel
