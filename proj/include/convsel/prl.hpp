#pragma once

#include <algorithm>
#include <functional>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "convsel/bm25.hpp"
#include "convsel/dense.hpp"
#include "convsel/io.hpp"
#include "convsel/metrics.hpp"
#include "convsel/tokenize.hpp"
#include "convsel/types.hpp"

namespace convsel {

// A retriever backend is anything that maps (query text, depth) to a ranked list.
// Both the sparse and the dense backend satisfy this.
using RetrieverFn = std::function<RankedList(const std::string&, int)>;

inline RetrieverFn make_bm25_retriever(const InvertedIndex& index)
{
    return [&index](const std::string& text, int k) { return bm25_retrieve(index, tokenize(text), k); };
}

inline RetrieverFn make_dense_retriever(const DenseEncoder& encoder, const PassageVectors& passages)
{
    return [&encoder, &passages](const std::string& text, int k) {
        return dense_retrieve(encoder, passages, tokenize(text), k);
    };
}

// Query forms: the raw current turn, the turn expanded with all history, or the turn
// expanded with positively labeled history only.
struct ExpansionForm {
    enum class Kind { Raw, All, PRL };

    Kind kind = Kind::Raw;
    std::vector<bool> labels;  // PRL only: one entry per historical turn

    static ExpansionForm raw() { return {Kind::Raw, {}}; }
    static ExpansionForm all() { return {Kind::All, {}}; }
    static ExpansionForm prl(std::vector<bool> labels) { return {Kind::PRL, std::move(labels)}; }
};

// Concatenation order follows the display forms: history first, current query last.
// At n = 1 every form collapses to the raw first turn.
inline std::string compose_query(const ConversationSession& session, int n, const ExpansionForm& form)
{
    const QueryTurn& current = session.turn(n);
    if (form.kind == ExpansionForm::Kind::PRL &&
        form.labels.size() != static_cast<std::size_t>(n - 1)) {
        throw DataError("PRL form for turn " + std::to_string(n) + " needs " + std::to_string(n - 1) +
                        " labels, got " + std::to_string(form.labels.size()));
    }
    if (n == 1 || form.kind == ExpansionForm::Kind::Raw) {
        return current.text;
    }
    std::string text;
    for (int i = 1; i < n; ++i) {
        if (form.kind == ExpansionForm::Kind::PRL && !form.labels[static_cast<std::size_t>(i - 1)]) {
            continue;
        }
        if (!text.empty()) {
            text += ' ';
        }
        text += session.turn(i).text;
    }
    if (!text.empty()) {
        text += ' ';
    }
    text += current.text;
    return text;
}

// Per-(turn, candidate) pseudo relevance label with the scores that produced it.
struct PRLabel {
    std::string session_id;
    int turn = 0;       // n, 1-based
    int candidate = 0;  // i, 1 <= i < n
    bool positive = false;
    double base_score = 0.0;      // S_q: MRR of the raw current turn
    double expanded_score = 0.0;  // S_hi: MRR after expanding with h_i
};

struct TermPRLabel {
    std::string session_id;
    int turn = 0;
    std::string term;
    bool positive = false;
    double base_score = 0.0;
    double expanded_score = 0.0;
};

struct PrlGenResult {
    std::vector<PRLabel> labels;
    std::vector<std::string> skipped_turns;  // query keys with no qrels entry
};

struct TermPrlGenResult {
    std::vector<TermPRLabel> labels;
    std::vector<std::string> skipped_turns;
};

// Turn-level pseudo relevance labeling: retrieve with the raw turn, score it, then
// re-retrieve with the turn concatenated with each historical query (query first).
// A candidate is positive iff it strictly improves the score.
inline PrlGenResult generate_prl(const ConversationSession& session, const RetrieverFn& retrieve, const Qrels& qrels,
                                 int k)
{
    PrlGenResult result;
    for (int n = 2; n <= session.num_turns(); ++n) {
        const std::string qkey = query_key(session.session_id, n);
        if (!qrels.has_query(qkey)) {
            result.skipped_turns.push_back(qkey);
            continue;
        }
        RankedList base = retrieve(session.turn(n).text, k);
        base.query_key = qkey;
        const double base_score = mrr(base, qrels);
        for (int i = 1; i < n; ++i) {
            RankedList expanded = retrieve(session.turn(n).text + " " + session.turn(i).text, k);
            expanded.query_key = qkey;
            const double expanded_score = mrr(expanded, qrels);
            result.labels.push_back(
                {session.session_id, n, i, expanded_score > base_score, base_score, expanded_score});
        }
    }
    return result;
}

inline PrlGenResult generate_prl(const std::vector<ConversationSession>& sessions, const RetrieverFn& retrieve,
                                 const Qrels& qrels, int k)
{
    PrlGenResult result;
    for (const auto& session : sessions) {
        auto part = generate_prl(session, retrieve, qrels, k);
        result.labels.insert(result.labels.end(), part.labels.begin(), part.labels.end());
        result.skipped_turns.insert(result.skipped_turns.end(), part.skipped_turns.begin(),
                                    part.skipped_turns.end());
    }
    return result;
}

// Term-level variant: candidates are the unique history tokens not already in the
// current turn, in order of first appearance.
inline TermPrlGenResult generate_term_prl(const ConversationSession& session, const RetrieverFn& retrieve,
                                          const Qrels& qrels, int k)
{
    TermPrlGenResult result;
    for (int n = 2; n <= session.num_turns(); ++n) {
        const std::string qkey = query_key(session.session_id, n);
        if (!qrels.has_query(qkey)) {
            result.skipped_turns.push_back(qkey);
            continue;
        }
        auto current_tokens = tokenize(session.turn(n).text);
        std::unordered_set<std::string> in_current(current_tokens.begin(), current_tokens.end());

        std::vector<std::string> candidates;
        std::unordered_set<std::string> seen;
        for (int i = 1; i < n; ++i) {
            for (auto& token : tokenize(session.turn(i).text)) {
                if (!in_current.count(token) && seen.insert(token).second) {
                    candidates.push_back(token);
                }
            }
        }
        if (candidates.empty()) {
            continue;
        }
        RankedList base = retrieve(session.turn(n).text, k);
        base.query_key = qkey;
        const double base_score = mrr(base, qrels);
        for (const auto& term : candidates) {
            RankedList expanded = retrieve(session.turn(n).text + " " + term, k);
            expanded.query_key = qkey;
            const double expanded_score = mrr(expanded, qrels);
            result.labels.push_back({session.session_id, n, term, expanded_score > base_score, base_score,
                                     expanded_score});
        }
    }
    return result;
}

// PRL file: JSON Lines, one label per line.
inline void save_prl(const std::vector<PRLabel>& labels, const std::string& path)
{
    auto out = detail::open_output(path);
    for (const auto& label : labels) {
        nlohmann::json obj{{"session_id", label.session_id},
                           {"turn", label.turn},
                           {"candidate", label.candidate},
                           {"label", label.positive ? "positive" : "negative"},
                           {"base_score", label.base_score},
                           {"expanded_score", label.expanded_score}};
        out << obj.dump() << '\n';
    }
}

inline std::vector<PRLabel> load_prl(const std::string& path)
{
    auto in = detail::open_input(path);
    std::vector<PRLabel> labels;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        auto obj = detail::parse_json_line(line, path, lineno);
        std::string label = obj.at("label").get<std::string>();
        if (label != "positive" && label != "negative") {
            throw DataError(path + " line " + std::to_string(lineno) + ": label must be positive or negative");
        }
        labels.push_back({obj.at("session_id").get<std::string>(), obj.at("turn").get<int>(),
                          obj.at("candidate").get<int>(), label == "positive", obj.value("base_score", 0.0),
                          obj.value("expanded_score", 0.0)});
    }
    return labels;
}

inline void save_term_prl(const std::vector<TermPRLabel>& labels, const std::string& path)
{
    auto out = detail::open_output(path);
    for (const auto& label : labels) {
        nlohmann::json obj{{"session_id", label.session_id},
                           {"turn", label.turn},
                           {"term", label.term},
                           {"label", label.positive ? "positive" : "negative"},
                           {"base_score", label.base_score},
                           {"expanded_score", label.expanded_score}};
        out << obj.dump() << '\n';
    }
}

// Label lookup keyed by (session, turn), candidates in ascending order.
using PrlByTurn = std::map<std::pair<std::string, int>, std::vector<bool>>;

inline PrlByTurn prl_by_turn(const std::vector<PRLabel>& labels)
{
    std::map<std::pair<std::string, int>, std::vector<std::pair<int, bool>>> grouped;
    for (const auto& label : labels) {
        grouped[{label.session_id, label.turn}].emplace_back(label.candidate, label.positive);
    }
    PrlByTurn out;
    for (auto& [key, entries] : grouped) {
        std::sort(entries.begin(), entries.end());
        std::vector<bool> flags;
        flags.reserve(entries.size());
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (entries[i].first != static_cast<int>(i) + 1) {
                throw DataError("PRL labels for " + key.first + " turn " + std::to_string(key.second) +
                                " have gaps or duplicates");
            }
            flags.push_back(entries[i].second);
        }
        out.emplace(key, std::move(flags));
    }
    return out;
}

}  // namespace convsel
