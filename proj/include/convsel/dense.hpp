#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "convsel/io.hpp"
#include "convsel/matrix.hpp"
#include "convsel/tokenize.hpp"
#include "convsel/types.hpp"

namespace convsel {

enum class EncoderSide { Query, Passage };

// Sparse length-normalized term-frequency vector over the encoder vocabulary.
using SparseVec = std::vector<std::pair<std::size_t, double>>;  // (column, weight)

// Toy trainable dual encoder: term-frequency bag vectors projected by a linear map.
// The query projection w_q is trainable; the passage projection w_p is frozen after
// initialization and w_q starts as an exact copy of it.
struct DenseEncoder {
    static constexpr const char* kMagic = "convsel.dense_encoder";
    static constexpr int kVersion = 1;

    int dim = 64;
    std::vector<std::string> vocab;                       // column order
    std::unordered_map<std::string, std::size_t> term_to_col;
    std::vector<std::uint32_t> term_df;                   // document frequency per column
    std::size_t num_docs = 0;
    Matrix w_q;  // dim x |vocab|, trainable
    Matrix w_p;  // dim x |vocab|, frozen

    bool has_term(const std::string& term) const { return term_to_col.count(term) > 0; }
};

// Vocabulary = the vocab_cap most frequent corpus terms (total occurrences, ties by term).
// Both projections start from the same seeded N(0, 1/dim) draw.
inline DenseEncoder build_encoder(const Collection& collection, int dim = 64, std::size_t vocab_cap = 20000,
                                  std::uint32_t seed = 0)
{
    if (dim < 2) {
        throw UsageError("encoder dim must be >= 2");
    }
    DenseEncoder encoder;
    encoder.dim = dim;
    encoder.num_docs = collection.size();

    std::unordered_map<std::string, std::uint64_t> term_count;
    std::unordered_map<std::string, std::uint32_t> doc_freq;
    for (const auto& doc : collection) {
        auto tokens = tokenize(doc.text);
        std::unordered_map<std::string, bool> seen;
        for (const auto& token : tokens) {
            ++term_count[token];
            if (!seen[token]) {
                seen[token] = true;
                ++doc_freq[token];
            }
        }
    }
    std::vector<std::pair<std::string, std::uint64_t>> ranked(term_count.begin(), term_count.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) {
            return a.second > b.second;
        }
        return a.first < b.first;
    });
    if (ranked.size() > vocab_cap) {
        ranked.resize(vocab_cap);
    }
    encoder.vocab.reserve(ranked.size());
    encoder.term_df.reserve(ranked.size());
    for (const auto& [term, count] : ranked) {
        encoder.term_to_col.emplace(term, encoder.vocab.size());
        encoder.vocab.push_back(term);
        encoder.term_df.push_back(doc_freq[term]);
    }

    std::mt19937 rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    encoder.w_p = Matrix(static_cast<std::size_t>(dim), encoder.vocab.size());
    for (auto& value : encoder.w_p.data) {
        value = scale * normal_unit(rng);
    }
    encoder.w_q = encoder.w_p;
    return encoder;
}

// tf vector over the vocabulary divided by max(1, token count); OOV tokens are ignored
// in the vector but still count toward the normalizer.
inline SparseVec tf_vector(const DenseEncoder& encoder, const std::vector<std::string>& tokens)
{
    std::unordered_map<std::size_t, double> tf;
    for (const auto& token : tokens) {
        auto it = encoder.term_to_col.find(token);
        if (it != encoder.term_to_col.end()) {
            tf[it->second] += 1.0;
        }
    }
    const double norm = 1.0 / static_cast<double>(std::max<std::size_t>(1, tokens.size()));
    SparseVec vec;
    vec.reserve(tf.size());
    for (const auto& [col, count] : tf) {
        vec.emplace_back(col, count * norm);
    }
    std::sort(vec.begin(), vec.end());  // canonical order for deterministic accumulation
    return vec;
}

inline std::vector<double> project(const Matrix& w, const SparseVec& vec)
{
    std::vector<double> out(w.rows, 0.0);
    for (const auto& [col, weight] : vec) {
        for (std::size_t r = 0; r < w.rows; ++r) {
            out[r] += weight * w.at(r, col);
        }
    }
    return out;
}

inline std::vector<double> encode(const DenseEncoder& encoder, const std::vector<std::string>& tokens,
                                  EncoderSide side)
{
    return project(side == EncoderSide::Query ? encoder.w_q : encoder.w_p, tf_vector(encoder, tokens));
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b)
{
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sum += a[i] * b[i];
    }
    return sum;
}

// Passage vectors are computed once per (encoder, collection) pair; w_p never changes.
struct PassageVectors {
    std::vector<std::string> doc_ids;
    std::vector<std::vector<double>> vecs;
    std::unordered_map<std::string, std::size_t> by_id;
};

inline PassageVectors encode_collection(const DenseEncoder& encoder, const Collection& collection)
{
    PassageVectors passages;
    passages.doc_ids.reserve(collection.size());
    passages.vecs.reserve(collection.size());
    for (const auto& doc : collection) {
        passages.by_id.emplace(doc.doc_id, passages.doc_ids.size());
        passages.doc_ids.push_back(doc.doc_id);
        passages.vecs.push_back(encode(encoder, tokenize(doc.text), EncoderSide::Passage));
    }
    return passages;
}

// Exhaustive dot-product search; ties break by ascending doc_id. Zero-score documents
// are kept (a zero query vector yields the collection in doc_id order).
inline RankedList dense_retrieve(const DenseEncoder& encoder, const PassageVectors& passages,
                                 const std::vector<std::string>& query_tokens, int k)
{
    if (k < 1) {
        throw UsageError("retrieval depth k must be >= 1");
    }
    auto query_vec = encode(encoder, query_tokens, EncoderSide::Query);
    RankedList result;
    result.entries.reserve(passages.doc_ids.size());
    for (std::size_t i = 0; i < passages.doc_ids.size(); ++i) {
        result.entries.push_back({passages.doc_ids[i], dot(query_vec, passages.vecs[i])});
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

// One contrastive sample: a query, its gold passage, and sampled negatives.
struct TrainingBatch {
    std::string query_text;
    std::string positive_id;
    std::vector<std::string> negative_ids;
};

inline void validate_batch(const TrainingBatch& batch, const Collection& collection)
{
    if (batch.negative_ids.empty()) {
        throw DataError("training batch needs at least one negative");
    }
    if (!collection.contains(batch.positive_id)) {
        throw DataError("unknown positive id: " + batch.positive_id);
    }
    for (const auto& id : batch.negative_ids) {
        if (id == batch.positive_id) {
            throw DataError("positive id appears among negatives: " + id);
        }
        if (!collection.contains(id)) {
            throw DataError("unknown negative id: " + id);
        }
    }
}

// Gradient of a loss w.r.t. w_q, kept in factored form: a sum of outer products
// g * u^T where u is a sparse query tf vector. Dense materialization is for tests.
struct WqGrad {
    std::size_t dim = 0;
    std::unordered_map<std::size_t, std::vector<double>> cols;  // column -> d-vector

    void add_outer(const std::vector<double>& g, const SparseVec& u, double scale)
    {
        dim = g.size();
        for (const auto& [col, weight] : u) {
            auto& slot = cols[col];
            if (slot.empty()) {
                slot.assign(dim, 0.0);
            }
            const double w = scale * weight;
            for (std::size_t r = 0; r < dim; ++r) {
                slot[r] += w * g[r];
            }
        }
    }

    void add(const WqGrad& other, double scale)
    {
        dim = std::max(dim, other.dim);
        for (const auto& [col, vec] : other.cols) {
            auto& slot = cols[col];
            if (slot.empty()) {
                slot.assign(vec.size(), 0.0);
            }
            for (std::size_t r = 0; r < vec.size(); ++r) {
                slot[r] += scale * vec[r];
            }
        }
    }

    void apply(Matrix& w, double lr) const
    {
        for (const auto& [col, vec] : cols) {
            for (std::size_t r = 0; r < vec.size(); ++r) {
                w.at(r, col) -= lr * vec[r];
            }
        }
    }

    Matrix dense(std::size_t rows, std::size_t num_cols) const
    {
        Matrix out(rows, num_cols);
        for (const auto& [col, vec] : cols) {
            for (std::size_t r = 0; r < vec.size(); ++r) {
                out.at(r, col) = vec[r];
            }
        }
        return out;
    }
};

struct RankingLossResult {
    double loss = 0.0;
    WqGrad grad_wq;
};

// Contrastive ranking loss over (positive, negatives) with dot-product scores:
//   L = -log( exp(s+) / (exp(s+) + sum_j exp(s-_j)) )
// computed with a max shift. Only w_q receives a gradient.
inline RankingLossResult ranking_loss(const DenseEncoder& encoder, const TrainingBatch& batch,
                                      const Collection& collection)
{
    validate_batch(batch, collection);

    const SparseVec query_tf = tf_vector(encoder, tokenize(batch.query_text));
    const std::vector<double> query_vec = project(encoder.w_q, query_tf);

    std::vector<std::vector<double>> passage_vecs;
    passage_vecs.push_back(encode(encoder, tokenize(collection.find(batch.positive_id)->text), EncoderSide::Passage));
    for (const auto& id : batch.negative_ids) {
        passage_vecs.push_back(encode(encoder, tokenize(collection.find(id)->text), EncoderSide::Passage));
    }

    std::vector<double> scores(passage_vecs.size());
    for (std::size_t i = 0; i < passage_vecs.size(); ++i) {
        scores[i] = dot(query_vec, passage_vecs[i]);
    }
    const double max_score = *std::max_element(scores.begin(), scores.end());
    double sum_exp = 0.0;
    for (double s : scores) {
        sum_exp += std::exp(s - max_score);
    }
    const double log_sum = max_score + std::log(sum_exp);

    RankingLossResult result;
    result.loss = log_sum - scores[0];

    // dL/dq = sum_i (softmax_i - [i == 0]) * p_i;  dL/dw_q = (dL/dq) u^T
    std::vector<double> grad_q(query_vec.size(), 0.0);
    for (std::size_t i = 0; i < passage_vecs.size(); ++i) {
        double coeff = std::exp(scores[i] - max_score) / sum_exp - (i == 0 ? 1.0 : 0.0);
        for (std::size_t r = 0; r < grad_q.size(); ++r) {
            grad_q[r] += coeff * passage_vecs[i][r];
        }
    }
    result.grad_wq.add_outer(grad_q, query_tf, 1.0);
    return result;
}

// Picks the gold passage (highest grade, ties by ascending doc_id) for each judged turn,
// in (session_id, turn) order, and samples K uniform negatives excluding the gold.
// `compose` maps (session, n) to the query text fed to the encoder.
template <typename ComposeFn>
std::vector<TrainingBatch> build_training_batches(const std::vector<ConversationSession>& sessions, const Qrels& qrels,
                                                  const Collection& collection, int num_negatives, std::uint32_t seed,
                                                  ComposeFn&& compose)
{
    if (num_negatives < 1) {
        throw UsageError("need at least one negative per batch");
    }
    if (collection.size() < static_cast<std::size_t>(num_negatives) + 1) {
        throw DataError("collection too small to sample negatives");
    }
    std::vector<const ConversationSession*> ordered;
    ordered.reserve(sessions.size());
    for (const auto& session : sessions) {
        ordered.push_back(&session);
    }
    std::sort(ordered.begin(), ordered.end(),
              [](const auto* a, const auto* b) { return a->session_id < b->session_id; });

    std::mt19937 rng(seed);
    std::vector<TrainingBatch> batches;
    for (const auto* session : ordered) {
        for (int n = 1; n <= session->num_turns(); ++n) {
            const std::string qkey = query_key(session->session_id, n);
            auto relevant = qrels.relevant_docs(qkey);
            if (relevant.empty()) {
                continue;
            }
            std::string positive = relevant.front();
            int best_grade = qrels.grade(qkey, positive);
            for (const auto& doc : relevant) {
                int g = qrels.grade(qkey, doc);
                if (g > best_grade || (g == best_grade && doc < positive)) {
                    positive = doc;
                    best_grade = g;
                }
            }
            TrainingBatch batch;
            batch.query_text = compose(*session, n);
            batch.positive_id = positive;
            std::unordered_set<std::string> taken{positive};
            while (batch.negative_ids.size() < static_cast<std::size_t>(num_negatives)) {
                const auto& doc = collection.at(uniform_below(rng, static_cast<std::uint32_t>(collection.size())));
                if (taken.insert(doc.doc_id).second) {
                    batch.negative_ids.push_back(doc.doc_id);
                }
            }
            batches.push_back(std::move(batch));
        }
    }
    return batches;
}

struct EpochLoss {
    int epoch = 0;
    double ranking = 0.0;
    double selector = 0.0;
    double total = 0.0;
};

// Shared epoch ordering for the retriever-only and joint trainers: a seeded shuffle of
// batch indices per epoch. Both trainers must visit batches identically for the
// alpha = 0 reduction to hold bit-for-bit.
inline std::vector<std::size_t> epoch_order(std::size_t count, std::uint32_t seed, int epoch)
{
    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < count; ++i) {
        order[i] = i;
    }
    std::mt19937 rng(seed + static_cast<std::uint32_t>(epoch) * 2654435761u);
    for (std::size_t i = count; i > 1; --i) {
        std::swap(order[i - 1], order[uniform_below(rng, static_cast<std::uint32_t>(i))]);
    }
    return order;
}

// Plain per-batch gradient descent on w_q; w_p is untouched.
inline std::vector<EpochLoss> train_retriever(DenseEncoder& encoder, const std::vector<TrainingBatch>& batches,
                                              const Collection& collection, double lr, int epochs,
                                              std::uint32_t seed = 0)
{
    if (lr <= 0.0) {
        throw UsageError("learning rate must be > 0");
    }
    std::vector<EpochLoss> log;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (std::size_t i : epoch_order(batches.size(), seed, epoch)) {
            auto result = ranking_loss(encoder, batches[i], collection);
            result.grad_wq.apply(encoder.w_q, lr);
            epoch_loss += result.loss;
        }
        double mean = batches.empty() ? 0.0 : epoch_loss / static_cast<double>(batches.size());
        log.push_back({epoch, mean, 0.0, mean});
    }
    return log;
}

inline void save_encoder(const DenseEncoder& encoder, const std::string& path)
{
    auto rows = [](const Matrix& m) {
        nlohmann::json out = nlohmann::json::array();
        for (std::size_t r = 0; r < m.rows; ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (std::size_t c = 0; c < m.cols; ++c) {
                row.push_back(m.at(r, c));
            }
            out.push_back(std::move(row));
        }
        return out;
    };
    nlohmann::json obj{
        {"magic", DenseEncoder::kMagic}, {"version", DenseEncoder::kVersion}, {"dim", encoder.dim},
        {"vocab", encoder.vocab},        {"df", encoder.term_df},             {"num_docs", encoder.num_docs},
        {"w_q", rows(encoder.w_q)},      {"w_p", rows(encoder.w_p)},
    };
    auto out = detail::open_output(path);
    out << obj.dump() << '\n';
}

inline DenseEncoder load_encoder(const std::string& path)
{
    auto in = detail::open_input(path);
    nlohmann::json obj = nlohmann::json::parse(in, nullptr, false);
    if (obj.is_discarded() || !obj.is_object() || obj.value("magic", std::string{}) != DenseEncoder::kMagic) {
        throw DataError(path + ": not a convsel dense encoder");
    }
    if (obj.value("version", -1) != DenseEncoder::kVersion) {
        throw DataError(path + ": unsupported encoder version");
    }
    DenseEncoder encoder;
    encoder.dim = obj.at("dim").get<int>();
    encoder.vocab = obj.at("vocab").get<std::vector<std::string>>();
    encoder.term_df = obj.at("df").get<std::vector<std::uint32_t>>();
    encoder.num_docs = obj.at("num_docs").get<std::size_t>();
    for (std::size_t i = 0; i < encoder.vocab.size(); ++i) {
        encoder.term_to_col.emplace(encoder.vocab[i], i);
    }
    auto read_matrix = [&](const char* key) {
        const auto& rows = obj.at(key);
        Matrix m(static_cast<std::size_t>(encoder.dim), encoder.vocab.size());
        for (std::size_t r = 0; r < m.rows; ++r) {
            for (std::size_t c = 0; c < m.cols; ++c) {
                m.at(r, c) = rows.at(r).at(c).get<double>();
            }
        }
        return m;
    };
    encoder.w_q = read_matrix("w_q");
    encoder.w_p = read_matrix("w_p");
    return encoder;
}

}  // namespace convsel
