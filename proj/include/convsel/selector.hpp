#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "convsel/dense.hpp"
#include "convsel/io.hpp"
#include "convsel/matrix.hpp"
#include "convsel/prl.hpp"
#include "convsel/tokenize.hpp"
#include "convsel/types.hpp"

namespace convsel {

constexpr std::size_t kNumFeatures = 5;
constexpr int kNegativeClass = 0;
constexpr int kPositiveClass = 1;

// Hand-crafted pair features standing in for a PLM pair encoder: token overlap, dense
// cosine, recency, length ratio, and idf-weighted overlap.
struct FeatureVector {
    double jaccard = 0.0;      // token-set overlap of q_n and h_i, in [0, 1]
    double dense_cos = 0.0;    // cosine of the encoder's query-side vectors, in [-1, 1]
    double recency = 0.0;      // i / (n - 1), in (0, 1]
    double len_ratio = 0.0;    // |h_i| / max(1, |q_n|), clipped to [0, 4]
    double idf_overlap = 0.0;  // sum of idf over shared terms, >= 0

    std::array<double, kNumFeatures> values() const { return {jaccard, dense_cos, recency, len_ratio, idf_overlap}; }
};

namespace detail {

// idf of an out-of-vocabulary term uses df = 0, so sharing a rare term weighs heavily.
inline double feature_idf(const DenseEncoder& encoder, const std::string& term)
{
    double n = static_cast<double>(encoder.num_docs);
    double df = 0.0;
    auto it = encoder.term_to_col.find(term);
    if (it != encoder.term_to_col.end()) {
        df = static_cast<double>(encoder.term_df[it->second]);
    }
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

}  // namespace detail

inline FeatureVector extract_features(const ConversationSession& session, int n, int i, const DenseEncoder& encoder)
{
    if (i < 1 || i >= n) {
        throw std::invalid_argument("candidate index must satisfy 1 <= i < n");
    }
    auto current = tokenize(session.turn(n).text);
    auto history = tokenize(session.turn(i).text);

    std::unordered_set<std::string> current_set(current.begin(), current.end());
    std::unordered_set<std::string> history_set(history.begin(), history.end());
    std::vector<std::string> shared;
    for (const auto& term : current_set) {
        if (history_set.count(term)) {
            shared.push_back(term);
        }
    }

    FeatureVector features;
    const std::size_t union_size = current_set.size() + history_set.size() - shared.size();
    features.jaccard = union_size > 0 ? static_cast<double>(shared.size()) / static_cast<double>(union_size) : 0.0;

    auto q_vec = encode(encoder, current, EncoderSide::Query);
    auto h_vec = encode(encoder, history, EncoderSide::Query);
    const double q_norm = std::sqrt(dot(q_vec, q_vec));
    const double h_norm = std::sqrt(dot(h_vec, h_vec));
    features.dense_cos = (q_norm > 0.0 && h_norm > 0.0) ? dot(q_vec, h_vec) / (q_norm * h_norm) : 0.0;

    features.recency = static_cast<double>(i) / static_cast<double>(n - 1);
    features.len_ratio =
        std::min(4.0, static_cast<double>(history.size()) / static_cast<double>(std::max<std::size_t>(1, current.size())));
    for (const auto& term : shared) {
        features.idf_overlap += detail::feature_idf(encoder, term);
    }
    return features;
}

// Two-class linear softmax with per-class loss weights.
struct SelectorModel {
    static constexpr const char* kMagic = "convsel.selector";
    static constexpr int kVersion = 1;

    Matrix u{2, kNumFeatures};       // class logits
    std::array<double, 2> bias{0.0, 0.0};
    double w_pos = 1.0;
    double w_neg = 1.0;
    int feature_version = 1;

    std::array<double, 2> logits(const FeatureVector& features) const
    {
        auto phi = features.values();
        std::array<double, 2> z{bias[0], bias[1]};
        for (std::size_t cls = 0; cls < 2; ++cls) {
            for (std::size_t f = 0; f < kNumFeatures; ++f) {
                z[cls] += u.at(cls, f) * phi[f];
            }
        }
        return z;
    }

    double positive_probability(const FeatureVector& features) const
    {
        auto z = logits(features);
        double m = std::max(z[0], z[1]);
        double e0 = std::exp(z[0] - m);
        double e1 = std::exp(z[1] - m);
        return e1 / (e0 + e1);
    }
};

// w[y] = |negative class| / |class y|, so w_neg is exactly 1.
inline std::pair<double, double> class_weights(std::size_t num_positive, std::size_t num_negative)
{
    if (num_positive == 0 || num_negative == 0) {
        throw DataError("class weights need both classes present; fall back to unweighted training");
    }
    return {static_cast<double>(num_negative) / static_cast<double>(num_positive), 1.0};
}

inline std::pair<double, double> class_weights(const std::vector<bool>& labels)
{
    std::size_t positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
    return class_weights(positives, labels.size() - positives);
}

struct SelectorSample {
    FeatureVector features;
    int gold = kNegativeClass;
};

struct SelectorLossResult {
    double loss = 0.0;
    Matrix grad_u{2, kNumFeatures};
    std::array<double, 2> grad_bias{0.0, 0.0};
};

// Class-weighted cross entropy, mean over samples:
//   per-sample loss = -w[gold] * log softmax(U phi + b)[gold]
inline SelectorLossResult weighted_ce_loss(const SelectorModel& model, const std::vector<SelectorSample>& samples)
{
    if (samples.empty()) {
        throw DataError("weighted_ce_loss needs at least one sample");
    }
    SelectorLossResult result;
    const double inv_count = 1.0 / static_cast<double>(samples.size());
    for (const auto& sample : samples) {
        auto z = model.logits(sample.features);
        double m = std::max(z[0], z[1]);
        double e0 = std::exp(z[0] - m);
        double e1 = std::exp(z[1] - m);
        double log_sum = m + std::log(e0 + e1);
        const double weight = sample.gold == kPositiveClass ? model.w_pos : model.w_neg;
        result.loss += weight * (log_sum - z[sample.gold]) * inv_count;

        auto phi = sample.features.values();
        std::array<double, 2> probs{e0 / (e0 + e1), e1 / (e0 + e1)};
        for (int cls = 0; cls < 2; ++cls) {
            double g = weight * (probs[static_cast<std::size_t>(cls)] - (cls == sample.gold ? 1.0 : 0.0)) * inv_count;
            result.grad_bias[static_cast<std::size_t>(cls)] += g;
            for (std::size_t f = 0; f < kNumFeatures; ++f) {
                result.grad_u.at(static_cast<std::size_t>(cls), f) += g * phi[f];
            }
        }
    }
    return result;
}

struct SelectorHyperparams {
    double lr = 0.5;
    int epochs = 200;
    std::uint32_t seed = 0;  // kept for config plumbing; full-batch descent is order-free
    bool weighted = true;
};

inline std::vector<SelectorSample> selector_samples(const std::vector<PRLabel>& prl_dataset,
                                                    const std::vector<ConversationSession>& sessions,
                                                    const DenseEncoder& encoder)
{
    std::unordered_map<std::string, const ConversationSession*> by_id;
    for (const auto& session : sessions) {
        by_id.emplace(session.session_id, &session);
    }
    std::vector<SelectorSample> samples;
    samples.reserve(prl_dataset.size());
    for (const auto& label : prl_dataset) {
        auto it = by_id.find(label.session_id);
        if (it == by_id.end()) {
            throw DataError("PRL label references unknown session " + label.session_id);
        }
        samples.push_back({extract_features(*it->second, label.turn, label.candidate, encoder),
                           label.positive ? kPositiveClass : kNegativeClass});
    }
    return samples;
}

// Full-batch gradient descent from a zero-initialized model; deterministic.
inline SelectorModel train_selector(const std::vector<PRLabel>& prl_dataset,
                                    const std::vector<ConversationSession>& sessions, const DenseEncoder& encoder,
                                    const SelectorHyperparams& hp)
{
    if (prl_dataset.empty()) {
        throw DataError("selector training needs a non-empty PRL dataset");
    }
    SelectorModel model;
    if (hp.weighted) {
        std::size_t positives = 0;
        for (const auto& label : prl_dataset) {
            positives += label.positive ? 1 : 0;
        }
        auto [w_pos, w_neg] = class_weights(positives, prl_dataset.size() - positives);
        model.w_pos = w_pos;
        model.w_neg = w_neg;
    }
    auto samples = selector_samples(prl_dataset, sessions, encoder);
    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
        auto result = weighted_ce_loss(model, samples);
        for (std::size_t idx = 0; idx < model.u.data.size(); ++idx) {
            model.u.data[idx] -= hp.lr * result.grad_u.data[idx];
        }
        model.bias[0] -= hp.lr * result.grad_bias[0];
        model.bias[1] -= hp.lr * result.grad_bias[1];
    }
    return model;
}

struct SelectionResult {
    std::vector<bool> selections;
    std::string expanded_text;
};

// Selects each candidate whose positive probability clears the threshold and expands
// with the PRL form; when nothing is selected the raw turn is used unchanged.
inline SelectionResult predict_and_expand(const SelectorModel& model, const DenseEncoder& encoder,
                                          const ConversationSession& session, int n, double threshold = 0.5)
{
    SelectionResult result;
    if (n < 1 || n > session.num_turns()) {
        throw std::invalid_argument("turn index out of range");
    }
    bool any = false;
    for (int i = 1; i < n; ++i) {
        bool selected = model.positive_probability(extract_features(session, n, i, encoder)) >= threshold;
        result.selections.push_back(selected);
        any = any || selected;
    }
    result.expanded_text = any ? compose_query(session, n, ExpansionForm::prl(result.selections))
                               : session.turn(n).text;
    return result;
}

struct ClassificationReport {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    double precision = 0.0;  // positive class
    double recall = 0.0;     // positive class
    double f1_positive = 0.0;
    double f1_negative = 0.0;
    double macro_f1 = 0.0;
    double accuracy = 0.0;
};

inline ClassificationReport classification_report(const std::vector<bool>& predictions,
                                                  const std::vector<bool>& gold)
{
    if (predictions.empty() || predictions.size() != gold.size()) {
        throw DataError("classification report needs equal-length, non-empty label lists");
    }
    ClassificationReport report;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i] && gold[i]) {
            ++report.tp;
        } else if (predictions[i] && !gold[i]) {
            ++report.fp;
        } else if (!predictions[i] && gold[i]) {
            ++report.fn;
        } else {
            ++report.tn;
        }
    }
    auto ratio = [](std::size_t num, std::size_t denom) {
        return denom > 0 ? static_cast<double>(num) / static_cast<double>(denom) : 0.0;
    };
    report.precision = ratio(report.tp, report.tp + report.fp);
    report.recall = ratio(report.tp, report.tp + report.fn);
    report.f1_positive = (report.precision + report.recall) > 0.0
                             ? 2.0 * report.precision * report.recall / (report.precision + report.recall)
                             : 0.0;
    double neg_precision = ratio(report.tn, report.tn + report.fn);
    double neg_recall = ratio(report.tn, report.tn + report.fp);
    report.f1_negative =
        (neg_precision + neg_recall) > 0.0 ? 2.0 * neg_precision * neg_recall / (neg_precision + neg_recall) : 0.0;
    report.macro_f1 = (report.f1_positive + report.f1_negative) / 2.0;
    report.accuracy = ratio(report.tp + report.tn, predictions.size());
    return report;
}

inline nlohmann::json classification_report_json(const ClassificationReport& report)
{
    return nlohmann::json{{"tp", report.tp},
                          {"fp", report.fp},
                          {"fn", report.fn},
                          {"tn", report.tn},
                          {"precision", report.precision},
                          {"recall", report.recall},
                          {"f1_positive", report.f1_positive},
                          {"f1_negative", report.f1_negative},
                          {"macro_f1", report.macro_f1},
                          {"accuracy", report.accuracy}};
}

inline void save_selector(const SelectorModel& model, const std::string& path)
{
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < model.u.rows; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t c = 0; c < model.u.cols; ++c) {
            row.push_back(model.u.at(r, c));
        }
        rows.push_back(std::move(row));
    }
    nlohmann::json obj{{"magic", SelectorModel::kMagic},
                       {"version", SelectorModel::kVersion},
                       {"U", std::move(rows)},
                       {"b", model.bias},
                       {"w_pos", model.w_pos},
                       {"w_neg", model.w_neg},
                       {"feature_version", model.feature_version}};
    auto out = detail::open_output(path);
    out << obj.dump() << '\n';
}

inline SelectorModel load_selector(const std::string& path)
{
    auto in = detail::open_input(path);
    nlohmann::json obj = nlohmann::json::parse(in, nullptr, false);
    if (obj.is_discarded() || !obj.is_object() || obj.value("magic", std::string{}) != SelectorModel::kMagic) {
        throw DataError(path + ": not a convsel selector model");
    }
    if (obj.value("version", -1) != SelectorModel::kVersion) {
        throw DataError(path + ": unsupported selector version");
    }
    SelectorModel model;
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t c = 0; c < kNumFeatures; ++c) {
            model.u.at(r, c) = obj.at("U").at(r).at(c).get<double>();
        }
    }
    model.bias[0] = obj.at("b").at(0).get<double>();
    model.bias[1] = obj.at("b").at(1).get<double>();
    model.w_pos = obj.at("w_pos").get<double>();
    model.w_neg = obj.at("w_neg").get<double>();
    model.feature_version = obj.at("feature_version").get<int>();
    return model;
}

}  // namespace convsel
