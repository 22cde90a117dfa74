#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "convsel/dense.hpp"
#include "convsel/io.hpp"
#include "convsel/matrix.hpp"
#include "convsel/prl.hpp"
#include "convsel/selector.hpp"
#include "convsel/types.hpp"

namespace convsel {

// Linear selector head over a turn-segment representation, sharing the encoder dim.
struct SelectorHead {
    static constexpr const char* kMagic = "convsel.selector_head";
    static constexpr int kVersion = 1;

    Matrix v;  // 2 x dim
    std::array<double, 2> c{0.0, 0.0};

    explicit SelectorHead(std::size_t dim = 0) : v(2, dim) {}
};

struct JointConfig {
    double alpha = 1.0;  // weight of the selector task; retrieval stays the main task
    double lr = 0.05;
    int epochs = 10;
    std::uint32_t seed = 0;
    int num_negatives = 4;
    int k = 100;                // retrieval depth used when refreshing PRL
    int refresh_prl_every = 0;  // regenerate PRL with the current retriever every N epochs; 0 = never
};

// The query-side projection applied to the turn's own tokens, so selector gradients
// flow into w_q.
inline std::vector<double> turn_segment_repr(const DenseEncoder& encoder, const ConversationSession& session, int n,
                                             int i)
{
    if (i < 1 || i >= n) {
        throw std::invalid_argument("turn segment needs 1 <= i < n");
    }
    return encode(encoder, tokenize(session.turn(i).text), EncoderSide::Query);
}

struct JointLossResult {
    double loss = 0.0;
    double ranking = 0.0;
    double selector = 0.0;       // unscaled L_S-W.A. term
    WqGrad grad_wq;              // already includes the alpha scaling
    Matrix grad_v{2, 0};
    std::array<double, 2> grad_c{0.0, 0.0};
};

// L = alpha * L_S-W.A. + L_R, with L_R the contrastive ranking loss on the all-history
// query and L_S-W.A. the class-weighted CE of the head over per-turn representations,
// averaged over candidates. At n = 1 the selector term is absent.
inline JointLossResult joint_loss(const DenseEncoder& encoder, const SelectorHead& head,
                                  const ConversationSession& session, int n, const std::string& positive_id,
                                  const std::vector<std::string>& negative_ids, const std::vector<bool>& prl_labels,
                                  double alpha, double w_pos, double w_neg, const Collection& collection)
{
    if (n > 1 && prl_labels.size() != static_cast<std::size_t>(n - 1)) {
        throw DataError("joint loss for turn " + std::to_string(n) + " needs " + std::to_string(n - 1) + " labels");
    }
    JointLossResult result;
    result.grad_v = Matrix(2, static_cast<std::size_t>(encoder.dim));

    TrainingBatch batch{compose_query(session, n, ExpansionForm::all()), positive_id, negative_ids};
    auto ranking = ranking_loss(encoder, batch, collection);
    result.ranking = ranking.loss;
    result.grad_wq.add(ranking.grad_wq, 1.0);

    if (n > 1 && alpha != 0.0) {
        const double inv_count = 1.0 / static_cast<double>(n - 1);
        for (int i = 1; i < n; ++i) {
            const SparseVec turn_tf = tf_vector(encoder, tokenize(session.turn(i).text));
            const std::vector<double> repr = project(encoder.w_q, turn_tf);

            std::array<double, 2> z{head.c[0], head.c[1]};
            for (std::size_t cls = 0; cls < 2; ++cls) {
                for (std::size_t d = 0; d < repr.size(); ++d) {
                    z[cls] += head.v.at(cls, d) * repr[d];
                }
            }
            const double m = std::max(z[0], z[1]);
            const double e0 = std::exp(z[0] - m);
            const double e1 = std::exp(z[1] - m);
            const double log_sum = m + std::log(e0 + e1);
            const int gold = prl_labels[static_cast<std::size_t>(i - 1)] ? kPositiveClass : kNegativeClass;
            const double weight = gold == kPositiveClass ? w_pos : w_neg;
            result.selector += weight * (log_sum - z[gold]) * inv_count;

            const std::array<double, 2> probs{e0 / (e0 + e1), e1 / (e0 + e1)};
            std::vector<double> grad_repr(repr.size(), 0.0);
            for (int cls = 0; cls < 2; ++cls) {
                const double g =
                    weight * (probs[static_cast<std::size_t>(cls)] - (cls == gold ? 1.0 : 0.0)) * inv_count;
                result.grad_c[static_cast<std::size_t>(cls)] += alpha * g;
                for (std::size_t d = 0; d < repr.size(); ++d) {
                    result.grad_v.at(static_cast<std::size_t>(cls), d) += alpha * g * repr[d];
                    grad_repr[d] += g * head.v.at(static_cast<std::size_t>(cls), d);
                }
            }
            // Selector gradient into the shared encoder: d repr / d w_q = turn tf.
            result.grad_wq.add_outer(grad_repr, turn_tf, alpha);
        }
    } else if (n > 1) {
        // alpha = 0: still report the selector loss value, but contribute no gradient,
        // keeping the trajectory bit-identical to retriever-only training.
        const double inv_count = 1.0 / static_cast<double>(n - 1);
        for (int i = 1; i < n; ++i) {
            auto repr = turn_segment_repr(encoder, session, n, i);
            std::array<double, 2> z{head.c[0], head.c[1]};
            for (std::size_t cls = 0; cls < 2; ++cls) {
                for (std::size_t d = 0; d < repr.size(); ++d) {
                    z[cls] += head.v.at(cls, d) * repr[d];
                }
            }
            const double m = std::max(z[0], z[1]);
            const double log_sum = m + std::log(std::exp(z[0] - m) + std::exp(z[1] - m));
            const int gold = prl_labels[static_cast<std::size_t>(i - 1)] ? kPositiveClass : kNegativeClass;
            const double weight = gold == kPositiveClass ? w_pos : w_neg;
            result.selector += weight * (log_sum - z[gold]) * inv_count;
        }
    }

    result.loss = alpha * result.selector + result.ranking;
    return result;
}

// One training example of the joint task: the batch plus the turn's static PRL labels.
struct JointBatch {
    const ConversationSession* session = nullptr;
    int turn = 0;
    std::string positive_id;
    std::vector<std::string> negative_ids;
    std::vector<bool> prl_labels;
};

struct JointTrainResult {
    SelectorHead head;
    std::vector<EpochLoss> log;

    JointTrainResult() : head(0) {}
};

namespace detail {

inline std::vector<JointBatch> build_joint_batches(const std::vector<ConversationSession>& sessions,
                                                   const PrlByTurn& prl, const Qrels& qrels,
                                                   const Collection& collection, int num_negatives,
                                                   std::uint32_t seed)
{
    // Reuse the contrastive batch builder so the visit order and the negative sampling
    // stream match train_retriever exactly.
    std::vector<std::pair<const ConversationSession*, int>> turn_of;
    auto batches = build_training_batches(sessions, qrels, collection, num_negatives, seed,
                                          [&](const ConversationSession& session, int n) {
                                              turn_of.emplace_back(&session, n);
                                              return compose_query(session, n, ExpansionForm::all());
                                          });
    std::vector<JointBatch> joint;
    joint.reserve(batches.size());
    for (std::size_t i = 0; i < batches.size(); ++i) {
        JointBatch jb;
        jb.session = turn_of[i].first;
        jb.turn = turn_of[i].second;
        jb.positive_id = batches[i].positive_id;
        jb.negative_ids = batches[i].negative_ids;
        auto it = prl.find({jb.session->session_id, jb.turn});
        if (it != prl.end()) {
            jb.prl_labels = it->second;
        } else {
            jb.prl_labels.assign(static_cast<std::size_t>(jb.turn - 1), false);
        }
        joint.push_back(std::move(jb));
    }
    return joint;
}

}  // namespace detail

// Multi-task fine-tuning of w_q, V and c; w_p stays frozen. PRL targets are the static
// gold labels unless refresh_prl_every asks for regeneration with the current retriever.
inline JointTrainResult train_joint(DenseEncoder& encoder, const std::vector<ConversationSession>& sessions,
                                    const std::vector<PRLabel>& prl_dataset, const Collection& collection,
                                    const Qrels& qrels, const JointConfig& config)
{
    if (config.lr <= 0.0) {
        throw UsageError("learning rate must be > 0");
    }
    if (config.alpha < 0.0) {
        throw UsageError("alpha must be >= 0");
    }
    JointTrainResult result;
    result.head = SelectorHead(static_cast<std::size_t>(encoder.dim));

    double w_pos = 1.0;
    double w_neg = 1.0;
    if (config.alpha != 0.0) {
        std::size_t positives = 0;
        for (const auto& label : prl_dataset) {
            positives += label.positive ? 1 : 0;
        }
        if (!prl_dataset.empty() && positives > 0 && positives < prl_dataset.size()) {
            std::tie(w_pos, w_neg) = class_weights(positives, prl_dataset.size() - positives);
        }
    }

    auto prl = prl_by_turn(prl_dataset);
    auto batches = detail::build_joint_batches(sessions, prl, qrels, collection, config.num_negatives, config.seed);
    if (batches.empty()) {
        throw DataError("joint training set is empty (no judged turns)");
    }

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        if (config.refresh_prl_every > 0 && epoch > 0 && epoch % config.refresh_prl_every == 0) {
            auto passages = encode_collection(encoder, collection);
            auto refreshed = generate_prl(sessions, make_dense_retriever(encoder, passages), qrels, config.k);
            prl = prl_by_turn(refreshed.labels);
            for (auto& batch : batches) {
                auto it = prl.find({batch.session->session_id, batch.turn});
                batch.prl_labels = it != prl.end() ? it->second
                                                   : std::vector<bool>(static_cast<std::size_t>(batch.turn - 1), false);
            }
        }
        EpochLoss losses{epoch, 0.0, 0.0, 0.0};
        for (std::size_t i : epoch_order(batches.size(), config.seed, epoch)) {
            const auto& batch = batches[i];
            auto step = joint_loss(encoder, result.head, *batch.session, batch.turn, batch.positive_id,
                                   batch.negative_ids, batch.prl_labels, config.alpha, w_pos, w_neg, collection);
            step.grad_wq.apply(encoder.w_q, config.lr);
            if (config.alpha != 0.0) {
                for (std::size_t idx = 0; idx < result.head.v.data.size(); ++idx) {
                    result.head.v.data[idx] -= config.lr * step.grad_v.data[idx];
                }
                result.head.c[0] -= config.lr * step.grad_c[0];
                result.head.c[1] -= config.lr * step.grad_c[1];
            }
            losses.ranking += step.ranking;
            losses.selector += step.selector;
            losses.total += step.loss;
        }
        const double inv = 1.0 / static_cast<double>(batches.size());
        losses.ranking *= inv;
        losses.selector *= inv;
        losses.total *= inv;
        result.log.push_back(losses);
    }
    return result;
}

inline void save_head(const SelectorHead& head, const std::string& path)
{
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < head.v.rows; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t c = 0; c < head.v.cols; ++c) {
            row.push_back(head.v.at(r, c));
        }
        rows.push_back(std::move(row));
    }
    nlohmann::json obj{{"magic", SelectorHead::kMagic},
                       {"version", SelectorHead::kVersion},
                       {"V", std::move(rows)},
                       {"c", head.c}};
    auto out = detail::open_output(path);
    out << obj.dump() << '\n';
}

inline SelectorHead load_head(const std::string& path)
{
    auto in = detail::open_input(path);
    nlohmann::json obj = nlohmann::json::parse(in, nullptr, false);
    if (obj.is_discarded() || !obj.is_object() || obj.value("magic", std::string{}) != SelectorHead::kMagic) {
        throw DataError(path + ": not a convsel selector head");
    }
    if (obj.value("version", -1) != SelectorHead::kVersion) {
        throw DataError(path + ": unsupported head version");
    }
    const auto& rows = obj.at("V");
    SelectorHead head(rows.at(0).size());
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t c = 0; c < head.v.cols; ++c) {
            head.v.at(r, c) = rows.at(r).at(c).get<double>();
        }
    }
    head.c[0] = obj.at("c").at(0).get<double>();
    head.c[1] = obj.at("c").at(1).get<double>();
    return head;
}

inline void save_train_log(const std::vector<EpochLoss>& log, const std::string& path)
{
    auto out = detail::open_output(path);
    for (const auto& entry : log) {
        nlohmann::json obj{
            {"epoch", entry.epoch}, {"L_R", entry.ranking}, {"L_S", entry.selector}, {"total", entry.total}};
        out << obj.dump() << '\n';
    }
}

}  // namespace convsel
