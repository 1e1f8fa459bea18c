#include "pmdx/text_encoder.hpp"

#include <cctype>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace pmdx {

namespace {

// FNV-1a, 64-bit; portable and stable across platforms.
uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : text) {
        const unsigned char c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) || c == '.') {
            cur += static_cast<char>(std::tolower(c));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

} // namespace

TextEncoder::TextEncoder(int dim) : dim_(dim) {
    if (dim <= 0) throw ConfigError("text encoder dimension must be positive");
}

Tensor TextEncoder::encode(const std::string& text) const {
    if (text.empty()) throw InputError("cannot encode an empty string");
    auto hit = external_.find(text);
    if (hit != external_.end()) return hit->second;

    std::vector<std::string> tokens = tokenize(text);
    if (tokens.empty()) tokens.push_back(text); // punctuation-only input

    Tensor e({dim_});
    for (const std::string& tok : tokens) {
        const uint64_t h = fnv1a(tok);
        const int bucket = static_cast<int>(h % static_cast<uint64_t>(dim_));
        const double sign = (h >> 61) & 1 ? 1.0 : -1.0;
        e[bucket] += sign;
    }
    const double norm = e.norm2();
    if (norm > 0.0)
        for (double& v : e.data) v /= norm;
    return e;
}

void TextEncoder::load_external(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open embedding file '" + path + "'");
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        const std::string text = j.at("text").get<std::string>();
        const auto vec = j.at("vector").get<std::vector<double>>();
        if (static_cast<int>(vec.size()) != dim_)
            throw ConfigError(path + ":" + std::to_string(line_no) + ": vector length " +
                              std::to_string(vec.size()) + " != configured dimension " +
                              std::to_string(dim_));
        external_[text] = Tensor::vec(std::vector<double>(vec.begin(), vec.end()));
    }
}

} // namespace pmdx
