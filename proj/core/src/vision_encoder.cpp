#include "ivlm/vision_encoder.hpp"

#include "block_util.hpp"

#include <stdexcept>

namespace ivlm {

void VisionConfig::validate() const {
    if (dim == 0 || heads == 0 || dim % heads != 0) {
        throw std::invalid_argument("vision: dim " + std::to_string(dim) + " must be divisible by heads " +
                                    std::to_string(heads));
    }
    if (patch_h == 0 || patch_w == 0 || patch_d == 0 || channels == 0) {
        throw std::invalid_argument("vision: patch dims and channels must be positive");
    }
}

VisionEncoder::VisionEncoder(VisionConfig cfg, ParamStore& params, Rng& rng)
    : cfg_(cfg), params_(params) {
    cfg_.validate();
    params_.create("vision.patch_proj.w", {cfg_.patch_volume(), cfg_.dim}, 0.02, rng);
    params_.create_zeros("vision.patch_proj.b", {cfg_.dim});
    params_.create("vision.pos_h", {cfg_.max_pos_h, cfg_.dim}, 0.02, rng);
    params_.create("vision.pos_w", {cfg_.max_pos_w, cfg_.dim}, 0.02, rng);
    params_.create("vision.pos_d", {cfg_.max_pos_d, cfg_.dim}, 0.02, rng);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        detail::register_block(params_, "vision.block" + std::to_string(l), cfg_.dim, cfg_.mlp_ratio, rng);
    }
    params_.create_ones("vision.final_ln.g", {cfg_.dim});
    params_.create_zeros("vision.final_ln.b", {cfg_.dim});
}

PatchGrid VisionEncoder::patchify(Tape& tape, const Volume& v) const {
    v.validate();
    if (v.height % cfg_.patch_h != 0) {
        throw std::invalid_argument("patchify: height " + std::to_string(v.height) +
                                    " not divisible by patch height " + std::to_string(cfg_.patch_h));
    }
    if (v.width % cfg_.patch_w != 0) {
        throw std::invalid_argument("patchify: width " + std::to_string(v.width) +
                                    " not divisible by patch width " + std::to_string(cfg_.patch_w));
    }
    if (v.depth % cfg_.patch_d != 0) {
        throw std::invalid_argument("patchify: depth " + std::to_string(v.depth) +
                                    " not divisible by patch depth " + std::to_string(cfg_.patch_d));
    }
    if (v.channels != cfg_.channels) {
        throw std::invalid_argument("patchify: volume has " + std::to_string(v.channels) +
                                    " channels, encoder expects " + std::to_string(cfg_.channels));
    }
    PatchGrid grid;
    grid.n_h = v.height / cfg_.patch_h;
    grid.n_w = v.width / cfg_.patch_w;
    grid.n_d = v.depth / cfg_.patch_d;

    const std::size_t pv = cfg_.patch_volume();
    Tensor patches = Tensor::zeros({grid.count(), pv});
    auto flat = patches.data();
    std::size_t p = 0;
    for (std::size_t i = 0; i < grid.n_h; ++i) {
        for (std::size_t j = 0; j < grid.n_w; ++j) {
            for (std::size_t k = 0; k < grid.n_d; ++k, ++p) {
                double* dst = flat.data() + p * pv;
                for (std::size_t ph = 0; ph < cfg_.patch_h; ++ph)
                    for (std::size_t pw = 0; pw < cfg_.patch_w; ++pw)
                        for (std::size_t pd = 0; pd < cfg_.patch_d; ++pd)
                            for (std::size_t c = 0; c < cfg_.channels; ++c)
                                *dst++ = v.at(i * cfg_.patch_h + ph, j * cfg_.patch_w + pw,
                                              k * cfg_.patch_d + pd, c);
            }
        }
    }
    grid.tokens = tape.add_bias(tape.matmul(patches, params_.get("vision.patch_proj.w")),
                                params_.get("vision.patch_proj.b"));
    return grid;
}

PatchGrid VisionEncoder::add_position(Tape& tape, PatchGrid grid) const {
    if (grid.n_h > cfg_.max_pos_h || grid.n_w > cfg_.max_pos_w || grid.n_d > cfg_.max_pos_d) {
        throw std::invalid_argument("add_position: grid " + std::to_string(grid.n_h) + "x" +
                                    std::to_string(grid.n_w) + "x" + std::to_string(grid.n_d) +
                                    " exceeds position tables " + std::to_string(cfg_.max_pos_h) + "x" +
                                    std::to_string(cfg_.max_pos_w) + "x" + std::to_string(cfg_.max_pos_d));
    }
    std::vector<int> ih, iw, id;
    ih.reserve(grid.count());
    iw.reserve(grid.count());
    id.reserve(grid.count());
    for (std::size_t i = 0; i < grid.n_h; ++i)
        for (std::size_t j = 0; j < grid.n_w; ++j)
            for (std::size_t k = 0; k < grid.n_d; ++k) {
                ih.push_back(static_cast<int>(i));
                iw.push_back(static_cast<int>(j));
                id.push_back(static_cast<int>(k));
            }
    Tensor ph = tape.embedding_rows(params_.get("vision.pos_h"), ih);
    Tensor pw = tape.embedding_rows(params_.get("vision.pos_w"), iw);
    Tensor pd = tape.embedding_rows(params_.get("vision.pos_d"), id);
    grid.tokens = tape.add(tape.add(tape.add(grid.tokens, ph), pw), pd);
    return grid;
}

Tensor VisionEncoder::encode(Tape& tape, const Volume& v) const {
    PatchGrid grid = add_position(tape, patchify(tape, v));
    Tensor x = grid.tokens;
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        x = detail::self_attn_block(tape, x, params_, "vision.block" + std::to_string(l), cfg_.heads,
                                    /*causal=*/false);
    }
    return tape.layer_norm(x, params_.get("vision.final_ln.g"), params_.get("vision.final_ln.b"),
                           detail::kLnEps);
}

}  // namespace ivlm
