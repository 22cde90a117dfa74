#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "convsel/selector.hpp"
#include "oracle.hpp"

using namespace convsel;

namespace {

Collection feature_corpus()
{
    Collection collection;
    collection.add({"D1", "snow white apple"});
    collection.add({"D2", "evil queen mirror"});
    collection.add({"D3", "snow queen"});
    collection.add({"D4", "dwarf mine"});
    return collection;
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

FeatureVector random_features(std::mt19937& rng)
{
    auto unit = [&rng]() { return static_cast<double>(rng()) / 4294967296.0; };
    FeatureVector f;
    f.jaccard = unit();
    f.dense_cos = 2.0 * unit() - 1.0;
    f.recency = unit();
    f.len_ratio = 4.0 * unit();
    f.idf_overlap = 3.0 * unit();
    return f;
}

SelectorModel random_model(std::mt19937& rng, double w_pos = 1.0)
{
    SelectorModel model;
    for (auto& v : model.u.data) {
        v = static_cast<double>(rng()) / 4294967296.0 - 0.5;
    }
    model.bias = {static_cast<double>(rng()) / 4294967296.0 - 0.5,
                  static_cast<double>(rng()) / 4294967296.0 - 0.5};
    model.w_pos = w_pos;
    return model;
}

}  // namespace

TEST(ClassWeights, NegativeOverClassRatio)
{
    auto [w_pos, w_neg] = class_weights(10, 100);
    EXPECT_DOUBLE_EQ(w_pos, 10.0);
    EXPECT_DOUBLE_EQ(w_neg, 1.0);

    std::tie(w_pos, w_neg) = class_weights(50, 50);
    EXPECT_DOUBLE_EQ(w_pos, 1.0);
    EXPECT_DOUBLE_EQ(w_neg, 1.0);

    std::tie(w_pos, w_neg) = class_weights(20, 30);
    EXPECT_DOUBLE_EQ(w_pos, 1.5);
    EXPECT_DOUBLE_EQ(w_neg, 1.0);
}

TEST(ClassWeights, SingleClassFailsWithFallbackHint)
{
    try {
        class_weights(0, 10);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("unweighted"), std::string::npos);
    }
    EXPECT_THROW(class_weights(10, 0), DataError);
}

TEST(ClassWeights, NegativeWeightAlwaysOne)
{
    std::mt19937 rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t pos = 1 + rng() % 40;
        std::size_t neg = 1 + rng() % 40;
        auto [w_pos, w_neg] = class_weights(pos, neg);
        EXPECT_DOUBLE_EQ(w_neg, 1.0);
        EXPECT_EQ(w_pos >= 1.0, neg >= pos);
    }
}

TEST(WeightedCeLoss, UniformSoftmaxBaseline)
{
    SelectorModel model;  // zero-initialized, weights (1, 1)
    std::mt19937 rng(8);
    std::vector<SelectorSample> one{{random_features(rng), kNegativeClass}};
    auto result = weighted_ce_loss(model, one);
    EXPECT_NEAR(result.loss, std::log(2.0), 1e-12);

    model.w_pos = 10.0;
    std::vector<SelectorSample> positive{{random_features(rng), kPositiveClass}};
    auto weighted = weighted_ce_loss(model, positive);
    EXPECT_NEAR(weighted.loss, 10.0 * std::log(2.0), 1e-12);
    EXPECT_NEAR(weighted.loss, 6.9315, 1e-4);
}

TEST(WeightedCeLoss, UnitWeightsEqualPlainCrossEntropy)
{
    std::mt19937 rng(12);
    auto model = random_model(rng, 3.5);
    std::vector<SelectorSample> samples;
    for (int i = 0; i < 10; ++i) {
        samples.push_back({random_features(rng), static_cast<int>(rng() % 2)});
    }
    auto unit_model = model;
    unit_model.w_pos = 1.0;
    unit_model.w_neg = 1.0;
    // Plain CE computed directly.
    double expected = 0.0;
    for (const auto& sample : samples) {
        auto z = unit_model.logits(sample.features);
        double m = std::max(z[0], z[1]);
        expected += (m + std::log(std::exp(z[0] - m) + std::exp(z[1] - m)) - z[sample.gold]) /
                    static_cast<double>(samples.size());
    }
    EXPECT_NEAR(weighted_ce_loss(unit_model, samples).loss, expected, 1e-12);
}

TEST(WeightedCeLoss, WeightsScaleLossAndGradientsLinearly)
{
    std::mt19937 rng(15);
    auto model = random_model(rng, 2.0);
    model.w_neg = 1.0;
    std::vector<SelectorSample> samples;
    for (int i = 0; i < 8; ++i) {
        samples.push_back({random_features(rng), static_cast<int>(rng() % 2)});
    }
    auto base = weighted_ce_loss(model, samples);
    const double c = 3.0;
    auto scaled_model = model;
    scaled_model.w_pos *= c;
    scaled_model.w_neg *= c;
    auto scaled = weighted_ce_loss(scaled_model, samples);
    EXPECT_NEAR(scaled.loss, c * base.loss, 1e-10);
    for (std::size_t i = 0; i < base.grad_u.data.size(); ++i) {
        EXPECT_NEAR(scaled.grad_u.data[i], c * base.grad_u.data[i], 1e-10);
    }
    EXPECT_NEAR(scaled.grad_bias[0], c * base.grad_bias[0], 1e-10);
    EXPECT_NEAR(scaled.grad_bias[1], c * base.grad_bias[1], 1e-10);
}

TEST(WeightedCeLoss, GradientMatchesFiniteDifferences)
{
    for (std::uint32_t seed = 0; seed < 20; ++seed) {
        std::mt19937 rng(seed);
        auto model = random_model(rng, 1.0 + 4.0 * (static_cast<double>(rng()) / 4294967296.0));
        std::vector<SelectorSample> samples;
        for (int i = 0; i < 6; ++i) {
            samples.push_back({random_features(rng), static_cast<int>(rng() % 2)});
        }
        auto analytic = weighted_ce_loss(model, samples);

        std::vector<double> flat(analytic.grad_u.data);
        flat.push_back(analytic.grad_bias[0]);
        flat.push_back(analytic.grad_bias[1]);

        auto param = [&](std::size_t i) -> double& {
            return i < model.u.data.size() ? model.u.data[i] : model.bias[i - model.u.data.size()];
        };
        auto numeric = oracle::finite_difference(param, model.u.data.size() + 2,
                                                 [&]() { return weighted_ce_loss(model, samples).loss; });
        EXPECT_LT(oracle::max_relative_error(flat, numeric), 1e-4) << "seed " << seed;
    }
}

TEST(ExtractFeatures, RangesAndRecency)
{
    auto corpus = feature_corpus();
    auto encoder = build_encoder(corpus, 8, 100, 3);
    auto session = session_with({"snow white", "evil queen", "snow queen apple"});
    auto f = extract_features(session, 3, 1, encoder);
    EXPECT_GT(f.jaccard, 0.0);  // "snow" shared
    EXPECT_LE(f.jaccard, 1.0);
    EXPECT_DOUBLE_EQ(f.recency, 0.5);
    EXPECT_GT(f.idf_overlap, 0.0);
    EXPECT_GE(f.dense_cos, -1.0 - 1e-12);
    EXPECT_LE(f.dense_cos, 1.0 + 1e-12);
    auto f2 = extract_features(session, 3, 2, encoder);
    EXPECT_DOUBLE_EQ(f2.recency, 1.0);
    EXPECT_THROW(extract_features(session, 3, 3, encoder), std::invalid_argument);
}

TEST(TrainSelector, ZeroEpochsReturnsInitialization)
{
    auto corpus = feature_corpus();
    auto encoder = build_encoder(corpus, 8, 100, 3);
    auto session = session_with({"snow white", "evil queen", "snow queen"});
    std::vector<PRLabel> labels{{"s", 2, 1, true, 0.1, 0.5}, {"s", 3, 1, false, 0.2, 0.1},
                                {"s", 3, 2, true, 0.2, 0.9}};
    auto model = train_selector(labels, {session}, encoder, {0.5, 0, 0, true});
    SelectorModel init;
    EXPECT_EQ(model.u, init.u);
    EXPECT_EQ(model.bias, init.bias);
    EXPECT_DOUBLE_EQ(model.w_pos, 0.5);  // 1 negative / 2 positives
}

TEST(TrainSelector, SingleClassDatasetFails)
{
    auto corpus = feature_corpus();
    auto encoder = build_encoder(corpus, 8, 100, 3);
    auto session = session_with({"snow white", "evil queen"});
    std::vector<PRLabel> labels{{"s", 2, 1, true, 0.1, 0.5}};
    EXPECT_THROW(train_selector(labels, {session}, encoder, {0.5, 10, 0, true}), DataError);
}

TEST(TrainSelector, LearnsSeparableSyntheticSet)
{
    // Synthetic PRL set where positives share a rare token with the current turn.
    std::mt19937 rng(23);
    Collection corpus;
    for (int d = 0; d < 30; ++d) {
        corpus.add({"D" + std::to_string(d),
                    "w" + std::to_string(d) + " w" + std::to_string((d * 7) % 30) + " filler"});
    }
    auto encoder = build_encoder(corpus, 16, 100, 5);
    std::vector<ConversationSession> sessions;
    std::vector<PRLabel> labels;
    for (int s = 0; s < 25; ++s) {
        ConversationSession session;
        session.session_id = "s" + std::to_string(s);
        std::string anchor = "w" + std::to_string(rng() % 30);
        bool positive = (s % 2) == 0;
        // Positive pairs share the anchor token; negative pairs share nothing.
        session.turns.push_back(
            {session.session_id, 1, positive ? anchor + " extra" : "w" + std::to_string(rng() % 30)});
        session.turns.push_back({session.session_id, 2, anchor + " tail"});
        if (!positive && tokenize(session.turns[0].text)[0] == anchor) {
            session.turns[0].text = "unrelatedword";
        }
        sessions.push_back(session);
        labels.push_back({sessions.back().session_id, 2, 1, positive, 0.1, positive ? 0.9 : 0.05});
    }
    auto model = train_selector(labels, sessions, encoder, {0.5, 200, 0, true});
    std::size_t correct = 0;
    std::unordered_map<std::string, const ConversationSession*> by_id;
    for (const auto& session : sessions) {
        by_id.emplace(session.session_id, &session);
    }
    for (const auto& label : labels) {
        auto f = extract_features(*by_id.at(label.session_id), label.turn, label.candidate, encoder);
        bool predicted = model.positive_probability(f) >= 0.5;
        correct += predicted == label.positive ? 1 : 0;
    }
    EXPECT_GE(static_cast<double>(correct) / static_cast<double>(labels.size()), 0.95);
}

TEST(PredictAndExpand, EmptyHistoryAndFallback)
{
    auto corpus = feature_corpus();
    auto encoder = build_encoder(corpus, 8, 100, 3);
    auto session = session_with({"snow white", "evil queen", "snow queen"});
    SelectorModel model;  // zero model: positive probability exactly 0.5 everywhere
    model.bias[kPositiveClass] = -5.0;  // force all-negative predictions

    auto first = predict_and_expand(model, encoder, session, 1);
    EXPECT_TRUE(first.selections.empty());
    EXPECT_EQ(first.expanded_text, "snow white");

    auto fallback = predict_and_expand(model, encoder, session, 3);
    EXPECT_EQ(fallback.selections, (std::vector<bool>{false, false}));
    EXPECT_EQ(fallback.expanded_text, "snow queen");  // raw query fallback

    model.bias[kPositiveClass] = 5.0;  // force all-positive
    auto expanded = predict_and_expand(model, encoder, session, 3);
    EXPECT_EQ(expanded.expanded_text, "snow white evil queen snow queen");
}

TEST(PredictAndExpand, PerCandidateDecisionsIndependentOfOtherCandidates)
{
    auto corpus = feature_corpus();
    auto encoder = build_encoder(corpus, 8, 100, 3);
    std::mt19937 rng(2);
    auto model = random_model(rng);
    auto session_a = session_with({"snow white", "evil queen", "dwarf mine", "snow queen"});
    auto session_b = session_with({"evil queen", "snow white", "dwarf mine", "snow queen"});
    auto a = predict_and_expand(model, encoder, session_a, 4);
    auto b = predict_and_expand(model, encoder, session_b, 4);
    // Swapping turns 1 and 2 swaps their feature-identical decisions except recency;
    // the third turn's decision must be untouched.
    EXPECT_EQ(a.selections[2], b.selections[2]);
}

TEST(ClassificationReport, PerfectAndDegenerate)
{
    auto perfect = classification_report({true, false, true}, {true, false, true});
    EXPECT_DOUBLE_EQ(perfect.precision, 1.0);
    EXPECT_DOUBLE_EQ(perfect.recall, 1.0);
    EXPECT_DOUBLE_EQ(perfect.macro_f1, 1.0);
    EXPECT_DOUBLE_EQ(perfect.accuracy, 1.0);

    auto all_negative = classification_report({false, false, false}, {true, false, true});
    EXPECT_DOUBLE_EQ(all_negative.recall, 0.0);
    EXPECT_DOUBLE_EQ(all_negative.precision, 0.0);

    EXPECT_THROW(classification_report({}, {}), DataError);
    EXPECT_THROW(classification_report({true}, {true, false}), DataError);
}

TEST(ClassificationReport, HandComputedCounts)
{
    // TP=2 FP=2 FN=3 TN=3.
    std::vector<bool> gold{true, true, true, true, true, false, false, false, false, false};
    std::vector<bool> pred{true, true, false, false, false, true, true, false, false, false};
    auto report = classification_report(pred, gold);
    EXPECT_EQ(report.tp, 2u);
    EXPECT_EQ(report.fp, 2u);
    EXPECT_EQ(report.fn, 3u);
    EXPECT_EQ(report.tn, 3u);
    EXPECT_DOUBLE_EQ(report.precision, 0.5);
    EXPECT_DOUBLE_EQ(report.recall, 0.4);
    EXPECT_NEAR(report.f1_positive, 0.4444, 1e-4);
}

TEST(SelectorPersistence, RoundTrip)
{
    auto dir = std::filesystem::temp_directory_path() / "convsel_selector_test";
    std::filesystem::create_directories(dir);
    auto path = (dir / "selector.json").string();
    std::mt19937 rng(3);
    auto model = random_model(rng, 7.5);
    save_selector(model, path);
    auto loaded = load_selector(path);
    EXPECT_EQ(loaded.u, model.u);
    EXPECT_EQ(loaded.bias, model.bias);
    EXPECT_DOUBLE_EQ(loaded.w_pos, model.w_pos);
    EXPECT_DOUBLE_EQ(loaded.w_neg, model.w_neg);
    std::filesystem::remove_all(dir);
}
