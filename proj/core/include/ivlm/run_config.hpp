#pragma once

#include "ivlm/model.hpp"
#include "ivlm/training.hpp"

#include <cstdint>
#include <string>

namespace ivlm {

// Run configuration document. Strictly validated: unknown keys anywhere are
// rejected so typos cannot silently fall back to defaults.
struct RunConfig {
    std::uint64_t seed = 7;
    ModelConfig model;
    TrainSchedule pretrain_schedule{1, 2, true};
    TrainSchedule finetune_schedule{0, 2, false};
    TrainOptions train;
    struct Paths {
        std::string lexicon;
        std::string loss_trace;  // optional; defaults next to the checkpoint
    } paths;
    std::size_t generate_max_new = 32;

    static RunConfig from_json_file(const std::string& path);
    void to_json_file(const std::string& path) const;  // config echo saved beside checkpoints
};

}  // namespace ivlm
