#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace convsel {

// Thrown for malformed or inconsistent input data; the CLI maps it to exit code 2.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown for bad invocations (unknown config keys, missing flags); exit code 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Document {
    std::string doc_id;
    std::string text;
};

// Ordered list of documents with a doc_id -> position lookup.
class Collection {
  public:
    void add(Document doc)
    {
        auto [it, inserted] = lookup_.emplace(doc.doc_id, docs_.size());
        if (!inserted) {
            throw DataError("duplicate doc_id: " + doc.doc_id);
        }
        docs_.push_back(std::move(doc));
    }

    std::size_t size() const { return docs_.size(); }
    bool empty() const { return docs_.empty(); }

    const Document& at(std::size_t pos) const { return docs_.at(pos); }

    const Document* find(const std::string& doc_id) const
    {
        auto it = lookup_.find(doc_id);
        return it == lookup_.end() ? nullptr : &docs_[it->second];
    }

    bool contains(const std::string& doc_id) const { return lookup_.count(doc_id) > 0; }

    const std::vector<Document>& docs() const { return docs_; }

    auto begin() const { return docs_.begin(); }
    auto end() const { return docs_.end(); }

  private:
    std::vector<Document> docs_;
    std::unordered_map<std::string, std::size_t> lookup_;
};

struct QueryTurn {
    std::string session_id;
    int turn_index = 1;  // 1-based
    std::string text;
};

struct ConversationSession {
    std::string session_id;
    std::vector<QueryTurn> turns;

    int num_turns() const { return static_cast<int>(turns.size()); }

    // n is 1-based.
    const QueryTurn& turn(int n) const
    {
        if (n < 1 || n > num_turns()) {
            throw std::out_of_range("turn index " + std::to_string(n) + " out of range for session " + session_id);
        }
        return turns[static_cast<std::size_t>(n - 1)];
    }
};

// Flat key for one query turn, as used in qrels and run files.
inline std::string query_key(const std::string& session_id, int turn_index)
{
    return session_id + "_" + std::to_string(turn_index);
}

// Graded relevance judgments, TREC-style. Duplicate (query, doc) pairs resolve last-wins.
class Qrels {
  public:
    void set(const std::string& qkey, const std::string& doc_id, int grade)
    {
        if (grade < 0) {
            throw DataError("negative relevance grade for " + qkey + " " + doc_id);
        }
        judgments_[qkey][doc_id] = grade;
    }

    int grade(const std::string& qkey, const std::string& doc_id) const
    {
        auto it = judgments_.find(qkey);
        if (it == judgments_.end()) {
            return 0;
        }
        auto jt = it->second.find(doc_id);
        return jt == it->second.end() ? 0 : jt->second;
    }

    bool has_query(const std::string& qkey) const { return judgments_.count(qkey) > 0; }

    // Docs judged relevant (grade >= 1) for a query.
    std::vector<std::string> relevant_docs(const std::string& qkey) const
    {
        std::vector<std::string> out;
        auto it = judgments_.find(qkey);
        if (it == judgments_.end()) {
            return out;
        }
        for (const auto& [doc, g] : it->second) {
            if (g >= 1) {
                out.push_back(doc);
            }
        }
        return out;
    }

    // All grades for a query, highest first (for IDCG).
    std::vector<int> grades(const std::string& qkey) const
    {
        std::vector<int> out;
        auto it = judgments_.find(qkey);
        if (it == judgments_.end()) {
            return out;
        }
        for (const auto& [doc, g] : it->second) {
            out.push_back(g);
        }
        return out;
    }

    const std::map<std::string, std::map<std::string, int>>& judgments() const { return judgments_; }

  private:
    // Ordered maps keep serialization deterministic.
    std::map<std::string, std::map<std::string, int>> judgments_;
};

struct ScoredDoc {
    std::string doc_id;
    double score = 0.0;
};

// Retrieval result: scores non-increasing, ties broken by ascending doc_id, no duplicates.
struct RankedList {
    std::string query_key;
    std::vector<ScoredDoc> entries;

    std::size_t size() const { return entries.size(); }
};

}  // namespace convsel
