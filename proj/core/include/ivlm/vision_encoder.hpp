#pragma once

#include "ivlm/params.hpp"
#include "ivlm/tensor.hpp"
#include "ivlm/volume.hpp"

#include <cstddef>

namespace ivlm {

struct VisionConfig {
    std::size_t patch_h = 32;
    std::size_t patch_w = 32;
    std::size_t patch_d = 4;
    std::size_t channels = 1;
    std::size_t dim = 64;
    std::size_t layers = 2;
    std::size_t heads = 4;
    std::size_t mlp_ratio = 4;
    // position table bounds (grid cells per axis)
    std::size_t max_pos_h = 16;
    std::size_t max_pos_w = 16;
    std::size_t max_pos_d = 16;

    std::size_t patch_volume() const { return patch_h * patch_w * patch_d * channels; }
    void validate() const;
};

struct PatchGrid {
    std::size_t n_h = 0;
    std::size_t n_w = 0;
    std::size_t n_d = 0;
    Tensor tokens;  // [n_h*n_w*n_d, dim]
    std::size_t count() const { return n_h * n_w * n_d; }
};

// Volumetric patch transformer: non-overlapping 3D patches are linearly
// projected, given factorized learnable position embeddings (one table per
// axis, summed per token), then run through pre-norm self-attention blocks.
class VisionEncoder {
public:
    VisionEncoder(VisionConfig cfg, ParamStore& params, Rng& rng);

    PatchGrid patchify(Tape& tape, const Volume& v) const;
    PatchGrid add_position(Tape& tape, PatchGrid grid) const;
    Tensor encode(Tape& tape, const Volume& v) const;

    const VisionConfig& config() const { return cfg_; }

private:
    VisionConfig cfg_;
    ParamStore& params_;
};

}  // namespace ivlm
