#pragma once

#include "ivlm/corpus.hpp"
#include "ivlm/lexicon.hpp"
#include "ivlm/model.hpp"
#include "ivlm/optimizer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ivlm {

// Per-position loss weights over an assembled sequence. A position's weight
// applies when that position is the prediction target: 3 for lexicon terms,
// 1 for other text, 0 for anything that is never a target (BOS, sentinels,
// visual slots, and every instruction position). EOS is weighted 1.
struct WeightedTokenSequence {
    std::vector<int> ids;          // aligned to layout positions; -1 on visual slots
    std::vector<double> weights;   // values in {0, 1, 3}
    SampleKind kind = SampleKind::Interleaved;
};

WeightedTokenSequence assign_weights(const SequenceLayout& layout, const Vocabulary& vocab,
                                     const Lexicon& lexicon, SampleKind kind);

// Shifted next-token objective over full-sequence logits.
Tensor weighted_nll_loss(Tape& tape, const Tensor& logits, const WeightedTokenSequence& seq);

struct TrainSchedule {
    std::size_t phase1_epochs = 1;  // language model frozen
    std::size_t total_epochs = 2;
    bool freeze_lm_in_phase1 = true;
    void validate() const;
};

struct TrainOptions {
    OptimizerConfig optimizer;
    std::size_t batch_size = 4;
    std::size_t grad_accum = 1;
    double stop_below_loss = 0.0;   // early stop once the smoothed loss drops below (0 = off)
    std::size_t max_steps = 0;      // hard cap on optimizer steps (0 = no cap)
};

struct LossPoint {
    std::size_t step;  // 1-based optimizer step
    int phase;         // 1 while the language model is frozen, else 2
    double loss;
};

struct TrainResult {
    std::vector<LossPoint> trace;
    std::size_t steps = 0;
};

// Loads raw volumes once and keeps them; preprocessing happens per use.
class VolumeStore {
public:
    explicit VolumeStore(std::string base_dir) : base_dir_(std::move(base_dir)) {}
    const Volume& raw(const std::string& rel_path);

private:
    std::string base_dir_;
    std::unordered_map<std::string, Volume> cache_;
};

// One training stage over one corpus: epochs [0, phase1) run with the
// language model frozen, the rest with everything trainable. Batch order is
// a seeded shuffle per epoch; the trace is deterministic for fixed inputs.
TrainResult train(Model& model, const Vocabulary& vocab, const Lexicon& lexicon,
                  const std::vector<Sample>& corpus, VolumeStore& volumes, const TrainSchedule& schedule,
                  const TrainOptions& options, std::uint64_t seed, AdamW& optimizer,
                  std::size_t step_offset = 0);

void write_loss_trace(const std::string& path, const std::vector<LossPoint>& trace);

}  // namespace ivlm
