#pragma once

#include "ivlm/params.hpp"
#include "ivlm/tensor.hpp"

#include <cstddef>

namespace ivlm {

struct PerceiverConfig {
    std::size_t n_queries = 32;
    std::size_t layers = 2;
    std::size_t dim = 128;  // output dimension, matches the language model
    std::size_t heads = 4;
    std::size_t mlp_ratio = 4;
    bool query_self_attention = false;
    void validate() const;
};

// Maps a variable-length patch-token sequence to a fixed set of query
// embeddings via cross-attention. No positional term on the keys, so the
// output is invariant to key order.
class PerceiverResampler {
public:
    PerceiverResampler(PerceiverConfig cfg, std::size_t input_dim, ParamStore& params, Rng& rng);

    // patch_tokens: [P, input_dim], P >= 1  ->  [n_queries, dim]
    Tensor resample(Tape& tape, const Tensor& patch_tokens) const;

    const PerceiverConfig& config() const { return cfg_; }

private:
    PerceiverConfig cfg_;
    std::size_t input_dim_;
    ParamStore& params_;
};

}  // namespace ivlm
