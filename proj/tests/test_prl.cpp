#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "convsel/prl.hpp"
#include "oracle.hpp"

using namespace convsel;

namespace {

// Mini fixture shared with data/mini: the gold doc for turn 2 ranks 2nd on the raw
// query and 1st after expanding with turn 1.
Collection mini_corpus()
{
    Collection collection;
    collection.add({"D1", "snow white apple"});
    collection.add({"D2", "evil queen mirror"});
    collection.add({"D3", "snow queen"});
    return collection;
}

ConversationSession mini_session()
{
    ConversationSession session;
    session.session_id = "mini";
    session.turns.push_back({"mini", 1, "the evil mirror"});
    session.turns.push_back({"mini", 2, "queen"});
    return session;
}

Qrels mini_qrels()
{
    Qrels qrels;
    qrels.set("mini_2", "D2", 1);
    return qrels;
}

ConversationSession session_with(const std::vector<std::string>& texts)
{
    ConversationSession session;
    session.session_id = "s";
    int n = 0;
    for (const auto& text : texts) {
        ++n;
        session.turns.push_back({"s", n, text});
    }
    return session;
}

}  // namespace

TEST(ComposeQuery, Forms)
{
    auto session = session_with({"h1", "h2", "q3"});
    EXPECT_EQ(compose_query(session, 3, ExpansionForm::raw()), "q3");
    EXPECT_EQ(compose_query(session, 3, ExpansionForm::all()), "h1 h2 q3");
    EXPECT_EQ(compose_query(session, 3, ExpansionForm::prl({true, false})), "h1 q3");
    EXPECT_EQ(compose_query(session, 3, ExpansionForm::prl({false, true})), "h2 q3");
}

TEST(ComposeQuery, FirstTurnCollapsesAllForms)
{
    auto session = session_with({"q1 text", "later"});
    EXPECT_EQ(compose_query(session, 1, ExpansionForm::raw()), "q1 text");
    EXPECT_EQ(compose_query(session, 1, ExpansionForm::all()), "q1 text");
    EXPECT_EQ(compose_query(session, 1, ExpansionForm::prl({})), "q1 text");
}

TEST(ComposeQuery, PrlLabelCountMismatchFails)
{
    auto session = session_with({"h1", "h2", "q3"});
    EXPECT_THROW(compose_query(session, 3, ExpansionForm::prl({true})), DataError);
}

TEST(ComposeQuery, AllPositiveEqualsAll)
{
    auto session = session_with({"a b", "c", "d e", "f"});
    EXPECT_EQ(compose_query(session, 4, ExpansionForm::prl({true, true, true})),
              compose_query(session, 4, ExpansionForm::all()));
    EXPECT_EQ(compose_query(session, 4, ExpansionForm::prl({false, false, false})),
              compose_query(session, 4, ExpansionForm::raw()));
}

TEST(GeneratePrl, SingleTurnSessionIsEmpty)
{
    auto index = build_index(mini_corpus());
    auto result = generate_prl(session_with({"only turn"}), make_bm25_retriever(index), mini_qrels(), 10);
    EXPECT_TRUE(result.labels.empty());
}

TEST(GeneratePrl, MiniFixtureLabel)
{
    auto index = build_index(mini_corpus());
    auto result = generate_prl(mini_session(), make_bm25_retriever(index), mini_qrels(), 10);
    ASSERT_EQ(result.labels.size(), 1u);
    const auto& label = result.labels[0];
    EXPECT_EQ(label.turn, 2);
    EXPECT_EQ(label.candidate, 1);
    EXPECT_DOUBLE_EQ(label.base_score, 0.5);
    EXPECT_DOUBLE_EQ(label.expanded_score, 1.0);
    EXPECT_TRUE(label.positive);
}

TEST(GeneratePrl, NoImprovementIsNegative)
{
    // Expanding with a turn of out-of-corpus words leaves the ranked list unchanged,
    // so S_hi = S_q and the strict inequality labels it negative.
    auto session = session_with({"zzz yyy", "queen"});
    auto index = build_index(mini_corpus());
    Qrels qrels;
    qrels.set("s_2", "D2", 1);
    auto result = generate_prl(session, make_bm25_retriever(index), qrels, 10);
    ASSERT_EQ(result.labels.size(), 1u);
    EXPECT_DOUBLE_EQ(result.labels[0].base_score, result.labels[0].expanded_score);
    EXPECT_FALSE(result.labels[0].positive);
}

TEST(GeneratePrl, SkipsUnjudgedTurns)
{
    auto session = session_with({"the evil mirror", "queen", "snow"});
    Qrels qrels;
    qrels.set("s_2", "D2", 1);  // turn 3 unjudged
    auto index = build_index(mini_corpus());
    auto result = generate_prl(session, make_bm25_retriever(index), qrels, 10);
    EXPECT_EQ(result.skipped_turns, std::vector<std::string>{"s_3"});
    ASSERT_EQ(result.labels.size(), 1u);
    EXPECT_EQ(result.labels[0].turn, 2);
}

TEST(GeneratePrl, LabelCountPerTurn)
{
    std::mt19937 rng(9);
    Collection collection;
    for (int d = 0; d < 12; ++d) {
        collection.add({"D" + std::to_string(d), "w" + std::to_string(d) + " w" + std::to_string((d + 1) % 12)});
    }
    auto index = build_index(collection);
    std::vector<std::string> texts;
    Qrels qrels;
    for (int n = 1; n <= 6; ++n) {
        texts.push_back("w" + std::to_string(rng() % 12));
        qrels.set(query_key("s", n), "D" + std::to_string(rng() % 12), 1);
    }
    auto result = generate_prl(session_with(texts), make_bm25_retriever(index), qrels, 10);
    std::map<int, int> per_turn;
    for (const auto& label : result.labels) {
        ++per_turn[label.turn];
    }
    int total = 0;
    for (int n = 2; n <= 6; ++n) {
        EXPECT_EQ(per_turn[n], n - 1);
        total += n - 1;
    }
    EXPECT_EQ(static_cast<int>(result.labels.size()), total);
}

// Oracle equivalence on random small instances: recomputing both retrievals from
// scratch (brute-force BM25 + reciprocal rank) must reproduce scores and labels.
TEST(GeneratePrl, OracleEquivalence)
{
    std::mt19937 rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        Collection collection;
        for (int d = 0; d < 15; ++d) {
            std::string text;
            std::size_t len = 2 + rng() % 6;
            for (std::size_t i = 0; i < len; ++i) {
                text += "w" + std::to_string(rng() % 20) + " ";
            }
            collection.add({"D" + std::to_string(d), text});
        }
        std::vector<std::string> texts;
        Qrels qrels;
        for (int n = 1; n <= 5; ++n) {
            std::string text = "w" + std::to_string(rng() % 20);
            if (rng() % 2 == 0) {
                text += " w" + std::to_string(rng() % 20);
            }
            texts.push_back(text);
            qrels.set(query_key("s", n), "D" + std::to_string(rng() % 15), 1);
        }
        auto session = session_with(texts);
        auto index = build_index(collection);
        auto result = generate_prl(session, make_bm25_retriever(index), qrels, 15);
        for (const auto& label : result.labels) {
            const std::string qkey = query_key("s", label.turn);
            auto base = oracle::brute_force_bm25(collection, tokenize(session.turn(label.turn).text), 15);
            auto expanded = oracle::brute_force_bm25(
                collection, tokenize(session.turn(label.turn).text + " " + session.turn(label.candidate).text), 15);
            const double s_q = oracle::reciprocal_rank(base, qrels, qkey);
            const double s_hi = oracle::reciprocal_rank(expanded, qrels, qkey);
            EXPECT_NEAR(label.base_score, s_q, 1e-9);
            EXPECT_NEAR(label.expanded_score, s_hi, 1e-9);
            EXPECT_EQ(label.positive, s_hi > s_q);
        }
    }
}

TEST(GenerateTermPrl, CandidateRules)
{
    // History tokens already present in the current turn are not candidates.
    auto session = session_with({"snow queen story", "queen"});
    Qrels qrels;
    qrels.set("s_2", "D2", 1);
    auto index = build_index(mini_corpus());
    auto result = generate_term_prl(session, make_bm25_retriever(index), qrels, 10);
    std::set<std::string> terms;
    for (const auto& label : result.labels) {
        terms.insert(label.term);
    }
    EXPECT_EQ(terms, (std::set<std::string>{"snow", "story"}));
}

TEST(GenerateTermPrl, EmptyHistoryNoCandidates)
{
    auto session = session_with({"whatever"});
    auto index = build_index(mini_corpus());
    auto result = generate_term_prl(session, make_bm25_retriever(index), mini_qrels(), 10);
    EXPECT_TRUE(result.labels.empty());
}

TEST(GenerateTermPrl, LiftingTermIsPositive)
{
    // "evil" lifts D2 (gold) from rank 2 to rank 1 for query "queen".
    auto session = session_with({"the evil empire", "queen"});
    Qrels qrels;
    qrels.set("s_2", "D2", 1);
    auto index = build_index(mini_corpus());
    auto result = generate_term_prl(session, make_bm25_retriever(index), qrels, 10);
    bool found = false;
    for (const auto& label : result.labels) {
        if (label.term == "evil") {
            found = true;
            EXPECT_TRUE(label.positive);
            EXPECT_DOUBLE_EQ(label.expanded_score, 1.0);
        }
    }
    EXPECT_TRUE(found);
}

TEST(PrlFile, RoundTrip)
{
    auto dir = std::filesystem::temp_directory_path() / "convsel_prl_test";
    std::filesystem::create_directories(dir);
    auto path = (dir / "prl.jsonl").string();

    std::vector<PRLabel> labels{{"s", 2, 1, true, 0.5, 1.0}, {"s", 3, 1, false, 0.25, 0.2},
                                {"s", 3, 2, true, 0.25, 0.5}};
    save_prl(labels, path);
    auto loaded = load_prl(path);
    ASSERT_EQ(loaded.size(), labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        EXPECT_EQ(loaded[i].session_id, labels[i].session_id);
        EXPECT_EQ(loaded[i].turn, labels[i].turn);
        EXPECT_EQ(loaded[i].candidate, labels[i].candidate);
        EXPECT_EQ(loaded[i].positive, labels[i].positive);
        EXPECT_DOUBLE_EQ(loaded[i].base_score, labels[i].base_score);
        EXPECT_DOUBLE_EQ(loaded[i].expanded_score, labels[i].expanded_score);
    }
    auto by_turn = prl_by_turn(loaded);
    EXPECT_EQ(by_turn.at({"s", 3}), (std::vector<bool>{false, true}));
    std::filesystem::remove_all(dir);
}
