#pragma once

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "convsel/types.hpp"

namespace convsel {

namespace detail {

inline std::ifstream open_input(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open file: " + path);
    }
    return in;
}

inline std::ofstream open_output(const std::string& path)
{
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write file: " + path);
    }
    return out;
}

inline nlohmann::json parse_json_line(const std::string& line, const std::string& path, std::size_t lineno)
{
    nlohmann::json obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
        throw DataError(path + " line " + std::to_string(lineno) + ": malformed JSON object");
    }
    return obj;
}

}  // namespace detail

// Corpus: JSON Lines, one {"id": ..., "text": ...} per line.
inline Collection load_corpus(const std::string& path)
{
    auto in = detail::open_input(path);
    Collection collection;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        auto obj = detail::parse_json_line(line, path, lineno);
        if (!obj.contains("id") || !obj["id"].is_string() || !obj.contains("text") || !obj["text"].is_string()) {
            throw DataError(path + " line " + std::to_string(lineno) + ": expected {\"id\": string, \"text\": string}");
        }
        std::string id = obj["id"].get<std::string>();
        if (id.empty()) {
            throw DataError(path + " line " + std::to_string(lineno) + ": empty doc id");
        }
        try {
            collection.add({std::move(id), obj["text"].get<std::string>()});
        } catch (const DataError& e) {
            throw DataError(path + " line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return collection;
}

inline void save_corpus(const Collection& collection, const std::string& path)
{
    auto out = detail::open_output(path);
    for (const auto& doc : collection) {
        nlohmann::json obj{{"id", doc.doc_id}, {"text", doc.text}};
        out << obj.dump() << '\n';
    }
}

// Sessions: JSON Lines, one {"session_id": ..., "turns": [{"text": ...}, ...]} per line.
// turn_index is implied by order, starting at 1.
inline std::vector<ConversationSession> load_sessions(const std::string& path)
{
    auto in = detail::open_input(path);
    std::vector<ConversationSession> sessions;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        auto obj = detail::parse_json_line(line, path, lineno);
        if (!obj.contains("session_id") || !obj["session_id"].is_string() || !obj.contains("turns") ||
            !obj["turns"].is_array() || obj["turns"].empty()) {
            throw DataError(path + " line " + std::to_string(lineno) +
                            ": expected {\"session_id\": string, \"turns\": non-empty array}");
        }
        ConversationSession session;
        session.session_id = obj["session_id"].get<std::string>();
        int index = 0;
        for (const auto& turn : obj["turns"]) {
            if (!turn.is_object() || !turn.contains("text") || !turn["text"].is_string()) {
                throw DataError(path + " line " + std::to_string(lineno) + ": turn objects need a \"text\" string");
            }
            ++index;
            session.turns.push_back({session.session_id, index, turn["text"].get<std::string>()});
        }
        sessions.push_back(std::move(session));
    }
    return sessions;
}

inline void save_sessions(const std::vector<ConversationSession>& sessions, const std::string& path)
{
    auto out = detail::open_output(path);
    for (const auto& session : sessions) {
        nlohmann::json turns = nlohmann::json::array();
        for (const auto& turn : session.turns) {
            turns.push_back({{"text", turn.text}});
        }
        nlohmann::json obj{{"session_id", session.session_id}, {"turns", std::move(turns)}};
        out << obj.dump() << '\n';
    }
}

// Qrels: whitespace-separated "query_key 0 doc_id grade" lines.
inline Qrels load_qrels(const std::string& path)
{
    auto in = detail::open_input(path);
    Qrels qrels;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        std::istringstream fields(line);
        std::string qkey, iteration, doc_id;
        long long grade = -1;
        if (!(fields >> qkey >> iteration >> doc_id >> grade) || grade < 0) {
            throw DataError(path + " line " + std::to_string(lineno) + ": expected \"query_key 0 doc_id grade\"");
        }
        qrels.set(qkey, doc_id, static_cast<int>(grade));
    }
    return qrels;
}

inline void save_qrels(const Qrels& qrels, const std::string& path)
{
    auto out = detail::open_output(path);
    for (const auto& [qkey, docs] : qrels.judgments()) {
        for (const auto& [doc_id, grade] : docs) {
            out << qkey << " 0 " << doc_id << ' ' << grade << '\n';
        }
    }
}

// Run files: "query_key Q0 doc_id rank score run_tag" lines, rank 1-based.
inline void save_run(const std::vector<RankedList>& run, const std::string& run_tag, const std::string& path)
{
    auto out = detail::open_output(path);
    out.precision(10);
    out << std::fixed;
    for (const auto& list : run) {
        int rank = 0;
        for (const auto& entry : list.entries) {
            out << list.query_key << " Q0 " << entry.doc_id << ' ' << ++rank << ' ' << entry.score << ' ' << run_tag
                << '\n';
        }
    }
}

inline std::vector<RankedList> load_run(const std::string& path)
{
    auto in = detail::open_input(path);
    std::vector<RankedList> run;
    std::unordered_map<std::string, std::size_t> position;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        std::istringstream fields(line);
        std::string qkey, q0, doc_id, tag;
        long long rank = 0;
        double score = 0.0;
        if (!(fields >> qkey >> q0 >> doc_id >> rank >> score >> tag) || rank < 1) {
            throw DataError(path + " line " + std::to_string(lineno) +
                            ": expected \"query_key Q0 doc_id rank score run_tag\"");
        }
        auto [it, inserted] = position.emplace(qkey, run.size());
        if (inserted) {
            run.push_back(RankedList{qkey, {}});
        }
        run[it->second].entries.push_back({doc_id, score});
    }
    // Entries arrive in rank order per query; re-sort defensively by score desc, doc_id asc.
    for (auto& list : run) {
        std::stable_sort(list.entries.begin(), list.entries.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
            if (a.score != b.score) {
                return a.score > b.score;
            }
            return a.doc_id < b.doc_id;
        });
    }
    return run;
}

}  // namespace convsel
