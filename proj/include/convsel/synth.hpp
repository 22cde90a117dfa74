#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "convsel/bm25.hpp"
#include "convsel/matrix.hpp"
#include "convsel/prl.hpp"
#include "convsel/types.hpp"

namespace convsel {

// Seeded generator for desk-scale conversational search data with planted structure:
// sessions visit a few topics in contiguous blocks, each turn points at one gold doc,
// and expanding a turn with an earlier same-topic turn is guaranteed (at noise 0) to
// lift the gold doc's BM25 rank. The generator re-runs the labeling algorithm on its
// own output to confirm the plant before anything is written.
struct SynthSpec {
    std::size_t num_sessions = 200;
    int turns_per_session = 8;
    int num_topics_per_session = 3;
    int docs_per_topic = 10;
    std::size_t num_docs = 2000;
    std::size_t vocab_size = 4000;
    double noise_rate = 0.1;
    std::uint32_t seed = 7;
};

struct SynthData {
    Collection collection;
    std::vector<ConversationSession> sessions;
    Qrels qrels;
};

namespace detail {

// Contiguous block sizes, as even as possible, earlier blocks take the remainder.
inline std::vector<int> block_plan(int turns, int topics)
{
    std::vector<int> blocks(static_cast<std::size_t>(topics), turns / topics);
    for (int i = 0; i < turns % topics; ++i) {
        ++blocks[static_cast<std::size_t>(i)];
    }
    return blocks;
}

}  // namespace detail

// How the corpus is laid out. Topic t owns a chain of docs; doc j of the chain carries
// its own pointer term, repeats the pointer terms of the previous `window` chain docs,
// and additionally hosts "shadow" copies of pointers from other topics. Every doc has
// the same token count and all tokens inside a doc are distinct, so single-term BM25
// scores tie exactly and ranks are settled by doc_id alone.
struct SynthLayout {
    int window = 0;
    std::size_t num_topics = 0;

    std::size_t doc_index(std::size_t topic, int chain_pos) const
    {
        // Interleaved ids: chain position grows faster than topic, so the primary
        // shadow host (previous chain position, any topic) always has a smaller id.
        return static_cast<std::size_t>(chain_pos - 1) * num_topics + topic;
    }
};

inline SynthData generate_synthetic(const SynthSpec& spec)
{
    if (spec.num_sessions == 0 || spec.turns_per_session < 1) {
        throw UsageError("synthetic spec needs sessions and turns");
    }
    if (spec.num_topics_per_session < 1 || spec.num_topics_per_session > spec.turns_per_session) {
        throw UsageError("num_topics_per_session must be in [1, turns_per_session]");
    }
    if (spec.noise_rate < 0.0 || spec.noise_rate >= 1.0) {
        throw UsageError("noise_rate must be in [0, 1)");
    }
    if (spec.docs_per_topic < 1 || spec.num_docs % static_cast<std::size_t>(spec.docs_per_topic) != 0) {
        throw DataError("num_docs must be a positive multiple of docs_per_topic");
    }
    const std::size_t num_topics = spec.num_docs / static_cast<std::size_t>(spec.docs_per_topic);
    if (num_topics < static_cast<std::size_t>(spec.num_topics_per_session) || num_topics < 2) {
        throw DataError("not enough topics: increase num_docs or decrease docs_per_topic");
    }
    const auto blocks = detail::block_plan(spec.turns_per_session, spec.num_topics_per_session);
    const int max_block = *std::max_element(blocks.begin(), blocks.end());
    if (spec.docs_per_topic < max_block) {
        throw DataError("docs_per_topic must cover the longest topic block (" + std::to_string(max_block) + ")");
    }

    constexpr std::size_t kChatterPerTopic = 4;
    constexpr std::size_t kNoisePool = 50;
    constexpr std::size_t kMinJunkPool = 50;
    const std::size_t reserved = spec.num_docs + kNoisePool + num_topics * kChatterPerTopic;
    if (spec.vocab_size < reserved + kMinJunkPool) {
        throw DataError("vocab_size too small: need at least " + std::to_string(reserved + kMinJunkPool) + " terms");
    }
    const std::size_t junk_pool = spec.vocab_size - reserved;

    SynthLayout layout{max_block - 1, num_topics};
    std::mt19937 rng(spec.seed);

    auto pointer_term = [](std::size_t topic, int chain_pos) {
        return "ent" + std::to_string(topic) + "x" + std::to_string(chain_pos);
    };
    auto chatter_term = [](std::size_t topic, std::size_t c) {
        return "chat" + std::to_string(topic) + "x" + std::to_string(c);
    };

    // Shadow hosts per pointer: one at the previous chain position (strictly smaller
    // doc id, so a gold doc with history never starts at rank 1) plus one random.
    // A doc never hosts two pointers of the same topic; that would let an expansion
    // term keep a competitor tied with the gold doc.
    std::vector<std::vector<std::string>> hosted(spec.num_docs);
    std::vector<std::unordered_set<std::size_t>> hosts_used(num_topics);
    auto add_shadow = [&](std::size_t topic, const std::string& term, std::size_t host_doc) {
        hosted[host_doc].push_back(term);
        hosts_used[topic].insert(host_doc);
    };
    for (std::size_t t = 0; t < num_topics; ++t) {
        for (int j = 1; j <= spec.docs_per_topic; ++j) {
            const std::string term = pointer_term(t, j);
            if (j >= 2) {
                std::size_t other = (t + 1 + uniform_below(rng, static_cast<std::uint32_t>(num_topics - 1))) % num_topics;
                std::size_t host = layout.doc_index(other, j - 1);
                while (hosts_used[t].count(host)) {
                    other = (other + 1) % num_topics;
                    if (other == t) {
                        other = (other + 1) % num_topics;
                    }
                    host = layout.doc_index(other, j - 1);
                }
                add_shadow(t, term, host);
            }
            // Random-position hosts (two for chain-initial pointers, one otherwise).
            const int extra = j >= 2 ? 1 : 2;
            for (int e = 0; e < extra; ++e) {
                for (;;) {
                    std::size_t other = uniform_below(rng, static_cast<std::uint32_t>(num_topics));
                    int pos = 1 + static_cast<int>(uniform_below(rng, static_cast<std::uint32_t>(spec.docs_per_topic)));
                    std::size_t host = layout.doc_index(other, pos);
                    if (other == t || hosts_used[t].count(host)) {
                        continue;
                    }
                    add_shadow(t, term, host);
                    break;
                }
            }
        }
    }

    std::size_t max_hosted = 0;
    for (const auto& list : hosted) {
        max_hosted = std::max(max_hosted, list.size());
    }
    // Fixed doc length: pointer + co-mentions + shadows + one noise slot + junk floor.
    const std::size_t doc_len = 1 + static_cast<std::size_t>(layout.window) + max_hosted + 1 + 2;

    SynthData data;
    std::size_t digits = std::to_string(spec.num_docs - 1).size();
    std::vector<std::string> doc_tokens_scratch;
    std::vector<Document> docs(spec.num_docs);
    for (std::size_t t = 0; t < num_topics; ++t) {
        for (int j = 1; j <= spec.docs_per_topic; ++j) {
            const std::size_t index = layout.doc_index(t, j);
            doc_tokens_scratch.clear();
            doc_tokens_scratch.push_back(pointer_term(t, j));
            for (int back = 1; back <= layout.window && j - back >= 1; ++back) {
                doc_tokens_scratch.push_back(pointer_term(t, j - back));
            }
            for (const auto& shadow : hosted[index]) {
                doc_tokens_scratch.push_back(shadow);
            }
            doc_tokens_scratch.push_back("noise" + std::to_string(uniform_below(rng, kNoisePool)));
            std::unordered_set<std::string> in_doc(doc_tokens_scratch.begin(), doc_tokens_scratch.end());
            while (doc_tokens_scratch.size() < doc_len) {
                std::string junk = "junk" + std::to_string(uniform_below(rng, static_cast<std::uint32_t>(junk_pool)));
                if (in_doc.insert(junk).second) {
                    doc_tokens_scratch.push_back(junk);
                }
            }
            std::string id = std::to_string(index);
            id = "D" + std::string(digits - id.size(), '0') + id;
            docs[index] = {std::move(id), join_tokens(doc_tokens_scratch)};
        }
    }
    for (auto& doc : docs) {
        data.collection.add(std::move(doc));
    }

    // Sessions: sample distinct topics, walk each block along its topic's doc chain.
    std::size_t session_digits = std::to_string(spec.num_sessions - 1).size();
    for (std::size_t s = 0; s < spec.num_sessions; ++s) {
        std::vector<std::size_t> topics;
        std::unordered_set<std::size_t> taken;
        while (topics.size() < static_cast<std::size_t>(spec.num_topics_per_session)) {
            std::size_t t = uniform_below(rng, static_cast<std::uint32_t>(num_topics));
            if (taken.insert(t).second) {
                topics.push_back(t);
            }
        }
        ConversationSession session;
        std::string sid = std::to_string(s);
        session.session_id = "S" + std::string(session_digits - sid.size(), '0') + sid;
        int turn_index = 0;
        for (std::size_t b = 0; b < topics.size(); ++b) {
            const std::size_t topic = topics[b];
            for (int p = 1; p <= blocks[b]; ++p) {
                ++turn_index;
                std::vector<std::string> tokens{pointer_term(topic, p)};
                std::size_t c1 = uniform_below(rng, kChatterPerTopic);
                std::size_t c2 = (c1 + 1 + uniform_below(rng, kChatterPerTopic - 1)) % kChatterPerTopic;
                tokens.push_back(chatter_term(topic, c1));
                tokens.push_back(chatter_term(topic, c2));
                for (int slot = 0; slot < 2; ++slot) {
                    if (uniform_unit(rng) < spec.noise_rate) {
                        tokens.push_back("noise" + std::to_string(uniform_below(rng, kNoisePool)));
                    }
                }
                session.turns.push_back({session.session_id, turn_index, join_tokens(tokens)});
                data.qrels.set(query_key(session.session_id, turn_index),
                               data.collection.at(layout.doc_index(topic, p)).doc_id, 1);
            }
        }
        data.sessions.push_back(std::move(session));
    }
    return data;
}

// Re-runs the labeling algorithm over the generated data and checks the plant:
// at noise 0 every same-topic earlier turn must be labeled positive and every
// cross-topic turn negative; with noise, a clear majority of same-topic pairs must
// still come out positive.
inline void synth_self_check(const SynthData& data, const SynthSpec& spec, int k = 100)
{
    auto index = build_index(data.collection);
    auto retrieve = make_bm25_retriever(index);
    const auto blocks = detail::block_plan(spec.turns_per_session, spec.num_topics_per_session);

    // Turn -> block ordinal, to recognize same-topic pairs by construction.
    std::vector<int> block_of;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        for (int p = 0; p < blocks[b]; ++p) {
            block_of.push_back(static_cast<int>(b));
        }
    }

    std::size_t same_topic = 0;
    std::size_t same_topic_positive = 0;
    for (const auto& session : data.sessions) {
        auto result = generate_prl(session, retrieve, data.qrels, k);
        if (!result.skipped_turns.empty()) {
            throw DataError("generator self-check: unjudged turns in generated data");
        }
        for (const auto& label : result.labels) {
            const bool same = block_of[static_cast<std::size_t>(label.turn - 1)] ==
                              block_of[static_cast<std::size_t>(label.candidate - 1)];
            if (same) {
                ++same_topic;
                same_topic_positive += label.positive ? 1 : 0;
                if (spec.noise_rate == 0.0 && !label.positive) {
                    throw DataError("generator self-check failed: same-topic turn " + label.session_id + ":" +
                                    std::to_string(label.turn) + "/" + std::to_string(label.candidate) +
                                    " not positive");
                }
            } else if (spec.noise_rate == 0.0 && label.positive) {
                throw DataError("generator self-check failed: cross-topic turn labeled positive");
            }
        }
    }
    if (same_topic > 0 && spec.noise_rate > 0.0 &&
        static_cast<double>(same_topic_positive) < 0.6 * static_cast<double>(same_topic)) {
        throw DataError("generator self-check failed: planted expansions mostly destroyed by noise");
    }
}

// Deterministic session split: every fold-th session (by position) goes to the test
// side; the default gives an 80/20 split.
inline std::pair<std::vector<ConversationSession>, std::vector<ConversationSession>> split_sessions(
    const std::vector<ConversationSession>& sessions, int fold = 5)
{
    std::pair<std::vector<ConversationSession>, std::vector<ConversationSession>> out;
    for (std::size_t i = 0; i < sessions.size(); ++i) {
        if (fold > 0 && (i % static_cast<std::size_t>(fold)) == static_cast<std::size_t>(fold) - 1) {
            out.second.push_back(sessions[i]);
        } else {
            out.first.push_back(sessions[i]);
        }
    }
    return out;
}

}  // namespace convsel
