#include "ivlm/perceiver.hpp"

#include "block_util.hpp"

#include <stdexcept>

namespace ivlm {

void PerceiverConfig::validate() const {
    if (n_queries < 1) throw std::invalid_argument("perceiver: need at least one query");
    if (dim == 0 || heads == 0 || dim % heads != 0) {
        throw std::invalid_argument("perceiver: dim " + std::to_string(dim) +
                                    " must be divisible by heads " + std::to_string(heads));
    }
}

PerceiverResampler::PerceiverResampler(PerceiverConfig cfg, std::size_t input_dim, ParamStore& params,
                                       Rng& rng)
    : cfg_(cfg), input_dim_(input_dim), params_(params) {
    cfg_.validate();
    params_.create("perceiver.input_proj.w", {input_dim_, cfg_.dim}, 0.02, rng);
    params_.create_zeros("perceiver.input_proj.b", {cfg_.dim});
    params_.create_ones("perceiver.input_ln.g", {cfg_.dim});
    params_.create_zeros("perceiver.input_ln.b", {cfg_.dim});
    params_.create("perceiver.queries", {cfg_.n_queries, cfg_.dim}, 0.02, rng);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        const std::string prefix = "perceiver.block" + std::to_string(l);
        detail::register_block(params_, prefix, cfg_.dim, cfg_.mlp_ratio, rng);
        if (cfg_.query_self_attention) {
            params_.create_ones(prefix + ".self_ln.g", {cfg_.dim});
            params_.create_zeros(prefix + ".self_ln.b", {cfg_.dim});
            params_.create(prefix + ".self.wq", {cfg_.dim, cfg_.dim}, 0.02, rng);
            params_.create_zeros(prefix + ".self.bq", {cfg_.dim});
            params_.create(prefix + ".self.wk", {cfg_.dim, cfg_.dim}, 0.02, rng);
            params_.create_zeros(prefix + ".self.bk", {cfg_.dim});
            params_.create(prefix + ".self.wv", {cfg_.dim, cfg_.dim}, 0.02, rng);
            params_.create_zeros(prefix + ".self.bv", {cfg_.dim});
            params_.create(prefix + ".self.wo", {cfg_.dim, cfg_.dim}, 0.02, rng);
            params_.create_zeros(prefix + ".self.bo", {cfg_.dim});
        }
    }
    params_.create_ones("perceiver.final_ln.g", {cfg_.dim});
    params_.create_zeros("perceiver.final_ln.b", {cfg_.dim});
}

Tensor PerceiverResampler::resample(Tape& tape, const Tensor& patch_tokens) const {
    if (!patch_tokens.defined() || patch_tokens.rank() != 2 || patch_tokens.dim(0) == 0) {
        throw std::invalid_argument("resample: empty patch-token sequence");
    }
    if (patch_tokens.dim(1) != input_dim_) {
        throw std::invalid_argument("resample: token dim " + std::to_string(patch_tokens.dim(1)) +
                                    " does not match configured input dim " + std::to_string(input_dim_));
    }
    Tensor kv = tape.add_bias(tape.matmul(patch_tokens, params_.get("perceiver.input_proj.w")),
                              params_.get("perceiver.input_proj.b"));
    kv = tape.layer_norm(kv, params_.get("perceiver.input_ln.g"), params_.get("perceiver.input_ln.b"),
                         detail::kLnEps);
    Tensor q = params_.get("perceiver.queries");
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        const std::string prefix = "perceiver.block" + std::to_string(l);
        q = detail::cross_attn(tape, q, kv, params_, prefix, cfg_.heads);
        if (cfg_.query_self_attention) {
            Tensor nq = tape.layer_norm(q, params_.get(prefix + ".self_ln.g"),
                                        params_.get(prefix + ".self_ln.b"), detail::kLnEps);
            Tensor sq = detail::project(tape, nq, params_, prefix + ".self.wq", prefix + ".self.bq");
            Tensor sk = detail::project(tape, nq, params_, prefix + ".self.wk", prefix + ".self.bk");
            Tensor sv = detail::project(tape, nq, params_, prefix + ".self.wv", prefix + ".self.bv");
            Tensor att = tape.attention(sq, sk, sv, cfg_.heads, /*causal=*/false);
            q = tape.add(q, detail::project(tape, att, params_, prefix + ".self.wo", prefix + ".self.bo"));
        }
        Tensor nm = tape.layer_norm(q, params_.get(prefix + ".ln2.g"), params_.get(prefix + ".ln2.b"),
                                    detail::kLnEps);
        q = tape.add(q, detail::mlp_forward(tape, nm, params_, prefix));
    }
    return tape.layer_norm(q, params_.get("perceiver.final_ln.g"), params_.get("perceiver.final_ln.b"),
                           detail::kLnEps);
}

}  // namespace ivlm
