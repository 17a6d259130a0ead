#pragma once

#include "ivlm/language_model.hpp"
#include "ivlm/params.hpp"
#include "ivlm/perceiver.hpp"
#include "ivlm/vision_encoder.hpp"
#include "ivlm/volume.hpp"

#include <memory>

namespace ivlm {

struct ModelConfig {
    VisionConfig vision;
    PerceiverConfig perceiver;
    LMConfig lm;
    void validate() const;
};

// Vision encoder + perceiver resampler + language model over one parameter
// store. Checkpoints cover every learnable tensor.
class Model {
public:
    Model(ModelConfig cfg, std::size_t vocab_size, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const VisionEncoder& vision() const { return *vision_; }
    const PerceiverResampler& perceiver() const { return *perceiver_; }
    const LanguageModel& lm() const { return *lm_; }

    // preprocess -> encode -> resample: one [n_queries, lm.dim] block per volume
    Tensor embed_volume(Tape& tape, const Volume& raw) const;

    // phase-1 freeze: language-model blocks and final norm stay fixed while
    // the visual pathway and embeddings align to them
    void set_lm_frozen(bool frozen);

    void save(const std::string& path) const { save_checkpoint(path, params_); }
    void load(const std::string& path) { load_checkpoint(path, params_); }

private:
    ModelConfig cfg_;
    ParamStore params_;
    std::unique_ptr<VisionEncoder> vision_;
    std::unique_ptr<PerceiverResampler> perceiver_;
    std::unique_ptr<LanguageModel> lm_;
};

}  // namespace ivlm
