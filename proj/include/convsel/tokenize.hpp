#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace convsel {

// Lowercase, split on maximal runs of non-alphanumeric bytes, drop empties.
// Locale-independent: alphanumeric means [0-9a-zA-Z].
inline std::vector<std::string> tokenize(std::string_view text)
{
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : text) {
        if (ch >= '0' && ch <= '9') {
            current += ch;
        } else if (ch >= 'a' && ch <= 'z') {
            current += ch;
        } else if (ch >= 'A' && ch <= 'Z') {
            current += static_cast<char>(ch - 'A' + 'a');
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) {
        tokens.push_back(std::move(current));
    }
    return tokens;
}

inline std::string join_tokens(const std::vector<std::string>& tokens)
{
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) {
            out += ' ';
        }
        out += tokens[i];
    }
    return out;
}

}  // namespace convsel
