#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "convsel/io.hpp"
#include "convsel/tokenize.hpp"
#include "convsel/types.hpp"

namespace convsel {

struct Posting {
    std::uint32_t doc = 0;  // position in the collection
    std::uint32_t tf = 0;
};

// From-scratch inverted index with Lucene-flavoured BM25 scoring:
//   idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))
// which keeps every score strictly positive.
struct InvertedIndex {
    static constexpr const char* kMagic = "convsel.bm25_index";
    static constexpr int kVersion = 1;

    std::unordered_map<std::string, std::vector<Posting>> postings;
    std::vector<std::string> doc_ids;       // position -> doc_id
    std::vector<std::uint32_t> doc_len;
    double avg_doc_len = 0.0;
    std::size_t num_docs = 0;
    double k1 = 1.2;
    double b = 0.75;

    std::uint32_t df(const std::string& term) const
    {
        auto it = postings.find(term);
        return it == postings.end() ? 0 : static_cast<std::uint32_t>(it->second.size());
    }

    double idf(const std::string& term) const { return idf_from_df(df(term)); }

    double idf_from_df(std::uint32_t doc_freq) const
    {
        double n = static_cast<double>(num_docs);
        double d = static_cast<double>(doc_freq);
        return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
    }
};

inline InvertedIndex build_index(const Collection& collection, double k1 = 1.2, double b = 0.75)
{
    if (k1 < 0.0 || b < 0.0 || b > 1.0) {
        throw UsageError("bm25 parameters out of range: need k1 >= 0 and 0 <= b <= 1");
    }
    InvertedIndex index;
    index.k1 = k1;
    index.b = b;
    index.num_docs = collection.size();
    index.doc_ids.reserve(collection.size());
    index.doc_len.reserve(collection.size());

    std::uint64_t total_len = 0;
    for (std::size_t pos = 0; pos < collection.size(); ++pos) {
        const auto& doc = collection.at(pos);
        auto tokens = tokenize(doc.text);
        std::unordered_map<std::string, std::uint32_t> tf;
        for (auto& token : tokens) {
            ++tf[token];
        }
        for (auto& [term, count] : tf) {
            index.postings[term].push_back({static_cast<std::uint32_t>(pos), count});
        }
        index.doc_ids.push_back(doc.doc_id);
        index.doc_len.push_back(static_cast<std::uint32_t>(tokens.size()));
        total_len += tokens.size();
    }
    // Docs are scanned in collection order, so postings lists are already sorted by position.
    index.avg_doc_len = index.num_docs > 0 ? static_cast<double>(total_len) / static_cast<double>(index.num_docs) : 0.0;
    return index;
}

// Top-k BM25 retrieval. Repeated query terms are deduplicated; zero-score documents are
// never returned; ties break by ascending doc_id.
inline RankedList bm25_retrieve(const InvertedIndex& index, const std::vector<std::string>& query_tokens, int k)
{
    if (k < 1) {
        throw UsageError("retrieval depth k must be >= 1");
    }
    RankedList result;
    if (index.num_docs == 0) {
        return result;
    }

    std::unordered_set<std::string> seen;
    std::unordered_map<std::uint32_t, double> scores;
    for (const auto& term : query_tokens) {
        if (!seen.insert(term).second) {
            continue;
        }
        auto it = index.postings.find(term);
        if (it == index.postings.end()) {
            continue;
        }
        const double idf = index.idf_from_df(static_cast<std::uint32_t>(it->second.size()));
        for (const auto& posting : it->second) {
            const double tf = static_cast<double>(posting.tf);
            const double dl = static_cast<double>(index.doc_len[posting.doc]);
            const double norm = index.k1 * (1.0 - index.b + index.b * dl / index.avg_doc_len);
            scores[posting.doc] += idf * tf * (index.k1 + 1.0) / (tf + norm);
        }
    }

    result.entries.reserve(scores.size());
    for (const auto& [doc, score] : scores) {
        result.entries.push_back({index.doc_ids[doc], score});
    }
    std::sort(result.entries.begin(), result.entries.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return a.doc_id < b.doc_id;
    });
    if (result.entries.size() > static_cast<std::size_t>(k)) {
        result.entries.resize(static_cast<std::size_t>(k));
    }
    return result;
}

inline void save_index(const InvertedIndex& index, const std::string& path)
{
    nlohmann::json postings = nlohmann::json::object();
    for (const auto& [term, list] : index.postings) {
        nlohmann::json entries = nlohmann::json::array();
        for (const auto& posting : list) {
            entries.push_back({posting.doc, posting.tf});
        }
        postings[term] = std::move(entries);
    }
    nlohmann::json obj{
        {"magic", InvertedIndex::kMagic},
        {"version", InvertedIndex::kVersion},
        {"k1", index.k1},
        {"b", index.b},
        {"num_docs", index.num_docs},
        {"avg_doc_len", index.avg_doc_len},
        {"doc_ids", index.doc_ids},
        {"doc_len", index.doc_len},
        {"postings", std::move(postings)},
    };
    auto out = detail::open_output(path);
    out << obj.dump() << '\n';
}

inline InvertedIndex load_index(const std::string& path)
{
    auto in = detail::open_input(path);
    nlohmann::json obj = nlohmann::json::parse(in, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
        throw DataError(path + ": not a valid index file");
    }
    if (obj.value("magic", std::string{}) != InvertedIndex::kMagic) {
        throw DataError(path + ": not a convsel bm25 index");
    }
    if (obj.value("version", -1) != InvertedIndex::kVersion) {
        throw DataError(path + ": unsupported index version " + std::to_string(obj.value("version", -1)));
    }
    InvertedIndex index;
    index.k1 = obj.at("k1").get<double>();
    index.b = obj.at("b").get<double>();
    index.num_docs = obj.at("num_docs").get<std::size_t>();
    index.avg_doc_len = obj.at("avg_doc_len").get<double>();
    index.doc_ids = obj.at("doc_ids").get<std::vector<std::string>>();
    index.doc_len = obj.at("doc_len").get<std::vector<std::uint32_t>>();
    for (const auto& [term, entries] : obj.at("postings").items()) {
        std::vector<Posting> list;
        list.reserve(entries.size());
        for (const auto& entry : entries) {
            list.push_back({entry.at(0).get<std::uint32_t>(), entry.at(1).get<std::uint32_t>()});
        }
        index.postings.emplace(term, std::move(list));
    }
    return index;
}

}  // namespace convsel
