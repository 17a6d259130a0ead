#pragma once

#include "ivlm/params.hpp"
#include "ivlm/tensor.hpp"

#include <string>

namespace ivlm::detail {

inline constexpr double kLnEps = 1e-5;

// pre-norm transformer block parameters: ln1, fused qkv/out projections,
// ln2, two-layer mlp
inline void register_block(ParamStore& p, const std::string& prefix, std::size_t dim,
                           std::size_t mlp_ratio, Rng& rng) {
    const double s = 0.02;
    p.create_ones(prefix + ".ln1.g", {dim});
    p.create_zeros(prefix + ".ln1.b", {dim});
    p.create(prefix + ".attn.wq", {dim, dim}, s, rng);
    p.create_zeros(prefix + ".attn.bq", {dim});
    p.create(prefix + ".attn.wk", {dim, dim}, s, rng);
    p.create_zeros(prefix + ".attn.bk", {dim});
    p.create(prefix + ".attn.wv", {dim, dim}, s, rng);
    p.create_zeros(prefix + ".attn.bv", {dim});
    p.create(prefix + ".attn.wo", {dim, dim}, s, rng);
    p.create_zeros(prefix + ".attn.bo", {dim});
    p.create_ones(prefix + ".ln2.g", {dim});
    p.create_zeros(prefix + ".ln2.b", {dim});
    p.create(prefix + ".mlp.w1", {dim, dim * mlp_ratio}, s, rng);
    p.create_zeros(prefix + ".mlp.b1", {dim * mlp_ratio});
    p.create(prefix + ".mlp.w2", {dim * mlp_ratio, dim}, s, rng);
    p.create_zeros(prefix + ".mlp.b2", {dim});
}

inline Tensor project(Tape& t, const Tensor& x, const ParamStore& p, const std::string& w,
                      const std::string& b) {
    return t.add_bias(t.matmul(x, p.get(w)), p.get(b));
}

inline Tensor mlp_forward(Tape& t, const Tensor& x, const ParamStore& p, const std::string& prefix) {
    Tensor h = project(t, x, p, prefix + ".mlp.w1", prefix + ".mlp.b1");
    h = t.gelu(h);
    return project(t, h, p, prefix + ".mlp.w2", prefix + ".mlp.b2");
}

// x + Attn(LN(x)); x + MLP(LN(x))
inline Tensor self_attn_block(Tape& t, const Tensor& x, const ParamStore& p,
                              const std::string& prefix, std::size_t heads, bool causal) {
    Tensor n1 = t.layer_norm(x, p.get(prefix + ".ln1.g"), p.get(prefix + ".ln1.b"), kLnEps);
    Tensor q = project(t, n1, p, prefix + ".attn.wq", prefix + ".attn.bq");
    Tensor k = project(t, n1, p, prefix + ".attn.wk", prefix + ".attn.bk");
    Tensor v = project(t, n1, p, prefix + ".attn.wv", prefix + ".attn.bv");
    Tensor att = t.attention(q, k, v, heads, causal);
    Tensor x1 = t.add(x, project(t, att, p, prefix + ".attn.wo", prefix + ".attn.bo"));
    Tensor n2 = t.layer_norm(x1, p.get(prefix + ".ln2.g"), p.get(prefix + ".ln2.b"), kLnEps);
    return t.add(x1, mlp_forward(t, n2, p, prefix));
}

// queries attend over a fixed key/value sequence: q + Attn(LN(q), kv)
inline Tensor cross_attn(Tape& t, const Tensor& queries, const Tensor& kv, const ParamStore& p,
                         const std::string& prefix, std::size_t heads) {
    Tensor nq = t.layer_norm(queries, p.get(prefix + ".ln1.g"), p.get(prefix + ".ln1.b"), kLnEps);
    Tensor q = project(t, nq, p, prefix + ".attn.wq", prefix + ".attn.bq");
    Tensor k = project(t, kv, p, prefix + ".attn.wk", prefix + ".attn.bk");
    Tensor v = project(t, kv, p, prefix + ".attn.wv", prefix + ".attn.bv");
    Tensor att = t.attention(q, k, v, heads, /*causal=*/false);
    return t.add(queries, project(t, att, p, prefix + ".attn.wo", prefix + ".attn.bo"));
}

}  // namespace ivlm::detail
