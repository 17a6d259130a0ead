#include "ivlm/model.hpp"

#include <stdexcept>

namespace ivlm {

void ModelConfig::validate() const {
    vision.validate();
    perceiver.validate();
    lm.validate();
    if (perceiver.dim != lm.dim) {
        throw std::invalid_argument("model: perceiver dim " + std::to_string(perceiver.dim) +
                                    " must match language-model dim " + std::to_string(lm.dim));
    }
}

Model::Model(ModelConfig cfg, std::size_t vocab_size, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(Rng::derive(seed, 0x6d6f64656cULL));
    vision_ = std::make_unique<VisionEncoder>(cfg_.vision, params_, rng);
    perceiver_ = std::make_unique<PerceiverResampler>(cfg_.perceiver, cfg_.vision.dim, params_, rng);
    lm_ = std::make_unique<LanguageModel>(cfg_.lm, vocab_size, cfg_.perceiver.n_queries, params_, rng);
}

Tensor Model::embed_volume(Tape& tape, const Volume& raw) const {
    const Volume ready = preprocess(raw);
    Tensor patch_tokens = vision_->encode(tape, ready);
    return perceiver_->resample(tape, patch_tokens);
}

void Model::set_lm_frozen(bool frozen) {
    params_.freeze_matching("lm.block", frozen);
    params_.freeze_matching("lm.final_ln", frozen);
}

}  // namespace ivlm
