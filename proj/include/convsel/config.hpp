#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "convsel/types.hpp"

namespace convsel {

// Experiment configuration: a flat "key = value" file ('#' starts a comment), with
// every key corresponding to one field below. CLI flags override file values.
struct RunConfig {
    std::string corpus;
    std::string sessions;
    std::string qrels;
    std::string workdir = "work";

    std::string retriever = "bm25";  // bm25 | dense
    int k = 100;

    double bm25_k1 = 1.2;
    double bm25_b = 0.75;

    int dense_dim = 64;
    std::size_t dense_vocab_cap = 20000;
    double dense_lr = 0.05;
    int dense_epochs = 20;
    int dense_negatives = 4;

    double selector_lr = 0.5;
    int selector_epochs = 200;
    double selector_threshold = 0.5;

    double joint_alpha = 1.0;
    double joint_lr = 0.05;
    int joint_epochs = 10;
    int joint_negatives = 4;
    int joint_refresh_prl_every = 0;

    std::uint32_t seed = 7;
};

namespace detail {

inline std::string trim(const std::string& s)
{
    auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) {
        return {};
    }
    auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value)
{
    std::istringstream stream(value);
    T out{};
    if (!(stream >> out) || !(stream >> std::ws).eof()) {
        throw UsageError("config key '" + key + "': cannot parse '" + value + "'");
    }
    return out;
}

}  // namespace detail

inline void apply_config_key(RunConfig& config, const std::string& key, const std::string& value)
{
    if (key == "corpus") {
        config.corpus = value;
    } else if (key == "sessions") {
        config.sessions = value;
    } else if (key == "qrels") {
        config.qrels = value;
    } else if (key == "workdir") {
        config.workdir = value;
    } else if (key == "retriever") {
        if (value != "bm25" && value != "dense") {
            throw UsageError("config key 'retriever' must be bm25 or dense");
        }
        config.retriever = value;
    } else if (key == "k") {
        config.k = detail::parse_number<int>(key, value);
    } else if (key == "bm25.k1") {
        config.bm25_k1 = detail::parse_number<double>(key, value);
    } else if (key == "bm25.b") {
        config.bm25_b = detail::parse_number<double>(key, value);
    } else if (key == "dense.dim") {
        config.dense_dim = detail::parse_number<int>(key, value);
    } else if (key == "dense.vocab_cap") {
        config.dense_vocab_cap = detail::parse_number<std::size_t>(key, value);
    } else if (key == "dense.lr") {
        config.dense_lr = detail::parse_number<double>(key, value);
    } else if (key == "dense.epochs") {
        config.dense_epochs = detail::parse_number<int>(key, value);
    } else if (key == "dense.negatives") {
        config.dense_negatives = detail::parse_number<int>(key, value);
    } else if (key == "selector.lr") {
        config.selector_lr = detail::parse_number<double>(key, value);
    } else if (key == "selector.epochs") {
        config.selector_epochs = detail::parse_number<int>(key, value);
    } else if (key == "selector.threshold") {
        config.selector_threshold = detail::parse_number<double>(key, value);
    } else if (key == "joint.alpha") {
        config.joint_alpha = detail::parse_number<double>(key, value);
    } else if (key == "joint.lr") {
        config.joint_lr = detail::parse_number<double>(key, value);
    } else if (key == "joint.epochs") {
        config.joint_epochs = detail::parse_number<int>(key, value);
    } else if (key == "joint.negatives") {
        config.joint_negatives = detail::parse_number<int>(key, value);
    } else if (key == "joint.refresh_prl_every") {
        config.joint_refresh_prl_every = detail::parse_number<int>(key, value);
    } else if (key == "seed") {
        config.seed = detail::parse_number<std::uint32_t>(key, value);
    } else {
        throw UsageError("unknown config key: " + key);
    }
}

inline RunConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw UsageError("cannot open config file: " + path);
    }
    RunConfig config;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        line = detail::trim(line);
        if (line.empty()) {
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw UsageError(path + " line " + std::to_string(lineno) + ": expected key = value");
        }
        apply_config_key(config, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
    return config;
}

}  // namespace convsel
