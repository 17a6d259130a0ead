#pragma once

#include "ivlm/params.hpp"
#include "ivlm/tensor.hpp"
#include "ivlm/vocab.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace ivlm {

struct LMConfig {
    std::size_t dim = 128;
    std::size_t layers = 4;
    std::size_t heads = 4;
    std::size_t mlp_ratio = 4;
    std::size_t max_len = 256;
    std::size_t max_images = 8;
    std::size_t max_vocab = 8192;
    bool tie_embeddings = true;
    void validate() const;
};

enum class PosKind { Bos, Eos, Text, ImgOpen, ImgClose, Visual };

struct SeqPosition {
    PosKind kind;
    int token_id;     // vocabulary id; -1 for Visual slots
    int image_index;  // 0-based image this position belongs to; -1 for text
    bool in_instruction;
};

struct VisualSpan {
    std::size_t start;  // ImgOpen position
    std::size_t end;    // one past ImgClose
    std::size_t image_index;
};

struct SequenceLayout {
    std::vector<SeqPosition> positions;
    std::vector<VisualSpan> visual_spans;
    std::size_t image_count = 0;
    std::size_t size() const { return positions.size(); }
};

struct AssembledSequence {
    Tensor embeddings;  // [L, dim]
    SequenceLayout layout;
};

// Decoder-only causal transformer over interleaved text and visual
// embeddings. Each `<image-i>` placeholder becomes IMG_OPEN, the resampled
// visual rows, IMG_CLOSE.
class LanguageModel {
public:
    LanguageModel(LMConfig cfg, std::size_t vocab_size, std::size_t visual_slots, ParamStore& params,
                  Rng& rng);

    // Expands placeholders and (for instruction samples) marks the
    // instruction/response boundary. `instruction` must be a textual prefix
    // of `text`. include_eos=false builds generation prompts.
    SequenceLayout layout_sequence(const Vocabulary& vocab, const std::string& text,
                                   const std::string* instruction, bool include_eos = true) const;

    AssembledSequence assemble(Tape& tape, const SequenceLayout& layout,
                               const std::vector<Tensor>& visual_embeds) const;

    Tensor forward(Tape& tape, const AssembledSequence& seq) const;  // [L, vocab]

    // Greedy decoding from the end of the prompt; stops at EOS or max_new.
    std::string generate(const Vocabulary& vocab, const SequenceLayout& prompt,
                         const std::vector<Tensor>& visual_embeds, std::size_t max_new) const;

    const LMConfig& config() const { return cfg_; }
    std::size_t vocab_size() const { return vocab_size_; }
    std::size_t visual_slots() const { return visual_slots_; }

private:
    LMConfig cfg_;
    std::size_t vocab_size_;
    std::size_t visual_slots_;
    ParamStore& params_;
};

}  // namespace ivlm
