#include "ivlm/language_model.hpp"

#include "block_util.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace ivlm {

void LMConfig::validate() const {
    if (dim == 0 || heads == 0 || dim % heads != 0) {
        throw std::invalid_argument("lm: dim " + std::to_string(dim) + " must be divisible by heads " +
                                    std::to_string(heads));
    }
    if (max_len < 3) throw std::invalid_argument("lm: max_len too small");
}

LanguageModel::LanguageModel(LMConfig cfg, std::size_t vocab_size, std::size_t visual_slots,
                             ParamStore& params, Rng& rng)
    : cfg_(cfg), vocab_size_(vocab_size), visual_slots_(visual_slots), params_(params) {
    cfg_.validate();
    if (vocab_size_ > cfg_.max_vocab) {
        throw std::invalid_argument("lm: vocabulary size " + std::to_string(vocab_size_) +
                                    " exceeds bound " + std::to_string(cfg_.max_vocab));
    }
    params_.create("lm.embed", {vocab_size_, cfg_.dim}, 0.02, rng);
    params_.create("lm.pos", {cfg_.max_len, cfg_.dim}, 0.02, rng);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        detail::register_block(params_, "lm.block" + std::to_string(l), cfg_.dim, cfg_.mlp_ratio, rng);
    }
    params_.create_ones("lm.final_ln.g", {cfg_.dim});
    params_.create_zeros("lm.final_ln.b", {cfg_.dim});
    if (!cfg_.tie_embeddings) {
        params_.create("lm.head.w", {cfg_.dim, vocab_size_}, 0.02, rng);
    }
}

SequenceLayout LanguageModel::layout_sequence(const Vocabulary& vocab, const std::string& text,
                                              const std::string* instruction, bool include_eos) const {
    const auto words = split_words(text);
    std::size_t boundary_words = 0;
    if (instruction != nullptr) {
        const auto instr_words = split_words(*instruction);
        boundary_words = instr_words.size();
        if (boundary_words > words.size() ||
            !std::equal(instr_words.begin(), instr_words.end(), words.begin())) {
            throw std::invalid_argument("layout: instruction is not a prefix of the sample text");
        }
    }

    SequenceLayout layout;
    std::set<std::size_t> seen_images;
    const bool has_instruction = instruction != nullptr;
    layout.positions.push_back(SeqPosition{PosKind::Bos, Vocabulary::kBos, -1, has_instruction});

    for (std::size_t w = 0; w < words.size(); ++w) {
        const bool in_instr = has_instruction && w < boundary_words;
        const int id = vocab.id_of(words[w]);
        if (vocab.is_placeholder(id)) {
            const std::size_t image = vocab.placeholder_index(id);
            if (!seen_images.insert(image).second) {
                throw std::invalid_argument("layout: placeholder <image-" + std::to_string(image) +
                                            "> appears more than once");
            }
            const int img_idx = static_cast<int>(image) - 1;
            const std::size_t start = layout.positions.size();
            layout.positions.push_back(
                SeqPosition{PosKind::ImgOpen, Vocabulary::kImgOpen, img_idx, in_instr});
            for (std::size_t s = 0; s < visual_slots_; ++s) {
                layout.positions.push_back(SeqPosition{PosKind::Visual, -1, img_idx, in_instr});
            }
            layout.positions.push_back(
                SeqPosition{PosKind::ImgClose, Vocabulary::kImgClose, img_idx, in_instr});
            layout.visual_spans.push_back(
                VisualSpan{start, layout.positions.size(), static_cast<std::size_t>(img_idx)});
        } else {
            layout.positions.push_back(SeqPosition{PosKind::Text, id, -1, in_instr});
        }
    }
    if (include_eos) {
        layout.positions.push_back(SeqPosition{PosKind::Eos, Vocabulary::kEos, -1, false});
    }

    layout.image_count = seen_images.size();
    for (std::size_t i = 1; i <= layout.image_count; ++i) {
        if (!seen_images.count(i)) {
            throw std::invalid_argument("layout: placeholder indices are not contiguous from 1 (missing <image-" +
                                        std::to_string(i) + ">)");
        }
    }
    return layout;
}

AssembledSequence LanguageModel::assemble(Tape& tape, const SequenceLayout& layout,
                                          const std::vector<Tensor>& visual_embeds) const {
    if (visual_embeds.size() != layout.image_count) {
        throw std::invalid_argument("assemble: sequence references " + std::to_string(layout.image_count) +
                                    " images but " + std::to_string(visual_embeds.size()) +
                                    " visual embeddings were given");
    }
    if (layout.size() > cfg_.max_len) {
        throw std::invalid_argument("assemble: sequence length " + std::to_string(layout.size()) +
                                    " exceeds max_len " + std::to_string(cfg_.max_len));
    }
    for (const auto& v : visual_embeds) {
        if (!v.defined() || v.rank() != 2 || v.dim(0) != visual_slots_ || v.dim(1) != cfg_.dim) {
            throw std::invalid_argument("assemble: visual embedding must be [" +
                                        std::to_string(visual_slots_) + " x " + std::to_string(cfg_.dim) +
                                        "]");
        }
    }

    Tensor embed = params_.get("lm.embed");
    std::vector<Tensor> parts;
    std::vector<int> run;
    auto flush_run = [&] {
        if (!run.empty()) {
            parts.push_back(tape.embedding_rows(embed, run));
            run.clear();
        }
    };
    for (std::size_t p = 0; p < layout.size(); ++p) {
        const auto& pos = layout.positions[p];
        if (pos.kind == PosKind::Visual) {
            // first slot after ImgOpen contributes the whole 32-row block
            if (layout.positions[p - 1].kind == PosKind::ImgOpen) {
                flush_run();
                parts.push_back(visual_embeds[static_cast<std::size_t>(pos.image_index)]);
            }
        } else {
            run.push_back(pos.token_id);
        }
    }
    flush_run();

    AssembledSequence seq;
    seq.embeddings = tape.concat_rows(parts);
    seq.layout = layout;
    return seq;
}

Tensor LanguageModel::forward(Tape& tape, const AssembledSequence& seq) const {
    const std::size_t len = seq.layout.size();
    if (len > cfg_.max_len) {
        throw std::invalid_argument("forward: sequence length " + std::to_string(len) + " exceeds max_len " +
                                    std::to_string(cfg_.max_len));
    }
    std::vector<int> pos_ids(len);
    for (std::size_t i = 0; i < len; ++i) pos_ids[i] = static_cast<int>(i);
    Tensor h = tape.add(seq.embeddings, tape.embedding_rows(params_.get("lm.pos"), pos_ids));
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        h = detail::self_attn_block(tape, h, params_, "lm.block" + std::to_string(l), cfg_.heads,
                                    /*causal=*/true);
    }
    h = tape.layer_norm(h, params_.get("lm.final_ln.g"), params_.get("lm.final_ln.b"), detail::kLnEps);
    if (cfg_.tie_embeddings) {
        return tape.matmul(h, tape.transpose(params_.get("lm.embed")));
    }
    return tape.matmul(h, params_.get("lm.head.w"));
}

std::string LanguageModel::generate(const Vocabulary& vocab, const SequenceLayout& prompt,
                                    const std::vector<Tensor>& visual_embeds, std::size_t max_new) const {
    if (prompt.size() + max_new > cfg_.max_len) {
        throw std::invalid_argument("generate: prompt length " + std::to_string(prompt.size()) +
                                    " plus max_new " + std::to_string(max_new) + " exceeds max_len " +
                                    std::to_string(cfg_.max_len));
    }
    SequenceLayout work = prompt;
    std::vector<int> generated;
    for (std::size_t step = 0; step < max_new; ++step) {
        Tape tape(/*recording=*/false);
        AssembledSequence seq = assemble(tape, work, visual_embeds);
        Tensor logits = forward(tape, seq);
        const std::size_t last = work.size() - 1;
        int best = 0;
        double best_v = logits.at(last, 0);
        for (std::size_t j = 1; j < vocab_size_; ++j) {
            const double v = logits.at(last, j);
            if (v > best_v) {
                best_v = v;
                best = static_cast<int>(j);
            }
        }
        if (best == Vocabulary::kEos) break;
        generated.push_back(best);
        work.positions.push_back(SeqPosition{PosKind::Text, best, -1, false});
    }
    return detokenize(generated, vocab);
}

}  // namespace ivlm
