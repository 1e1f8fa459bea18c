#pragma once

#include <string>
#include <unordered_map>

#include "pmdx/tensor.hpp"

namespace pmdx {

// Frozen text embedder. The default path is a deterministic signed
// feature-hashing bag of tokens (no trainable parameters); an external table
// of precomputed embeddings, when loaded, is consulted first so real
// biomedical encoder outputs can be dropped in without code changes.
class TextEncoder {
public:
    explicit TextEncoder(int dim = 512);

    // Unit-norm embedding of a non-empty string. External hits are returned
    // verbatim.
    Tensor encode(const std::string& text) const;

    // JSON Lines of {"text": ..., "vector": [...]}. Vector length must equal
    // dim() for every entry.
    void load_external(const std::string& path);

    int dim() const { return dim_; }
    size_t external_size() const { return external_.size(); }

private:
    int dim_;
    std::unordered_map<std::string, Tensor> external_;
};

} // namespace pmdx
