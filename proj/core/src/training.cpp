#include "ivlm/training.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace ivlm {

WeightedTokenSequence assign_weights(const SequenceLayout& layout, const Vocabulary& vocab,
                                     const Lexicon& lexicon, SampleKind kind) {
    if (kind == SampleKind::Instruction) {
        bool any_marked = false;
        for (const auto& p : layout.positions) any_marked = any_marked || p.in_instruction;
        if (!any_marked) {
            throw std::invalid_argument("weights: instruction sample has no marked instruction boundary");
        }
    }

    WeightedTokenSequence out;
    out.kind = kind;
    out.ids.reserve(layout.size());
    out.weights.assign(layout.size(), 0.0);
    for (const auto& p : layout.positions) out.ids.push_back(p.token_id);

    // lexicon matching runs over contiguous text runs; visual spans and
    // sentinels break term adjacency
    std::vector<std::string> run_words;
    std::vector<std::size_t> run_positions;
    auto flush_run = [&] {
        if (run_words.empty()) return;
        std::vector<bool> medical(run_words.size(), false);
        for (const auto& span : lexicon.match_spans(run_words)) {
            for (std::size_t i = 0; i < span.len; ++i) medical[span.start + i] = true;
        }
        for (std::size_t i = 0; i < run_words.size(); ++i) {
            out.weights[run_positions[i]] = medical[i] ? 3.0 : 1.0;
        }
        run_words.clear();
        run_positions.clear();
    };

    for (std::size_t pos = 0; pos < layout.size(); ++pos) {
        const auto& p = layout.positions[pos];
        const bool skip = p.in_instruction && kind == SampleKind::Instruction;
        switch (p.kind) {
            case PosKind::Text:
                if (skip) break;
                run_words.push_back(vocab.word_of(p.token_id));
                run_positions.push_back(pos);
                continue;
            case PosKind::Eos:
                if (!skip) out.weights[pos] = 1.0;
                break;
            default: break;  // BOS, sentinels and visual slots stay 0
        }
        flush_run();
    }
    flush_run();
    return out;
}

Tensor weighted_nll_loss(Tape& tape, const Tensor& logits, const WeightedTokenSequence& seq) {
    const std::size_t len = seq.ids.size();
    if (logits.dim(0) != len) {
        throw std::invalid_argument("loss: logits rows " + std::to_string(logits.dim(0)) +
                                    " do not match sequence length " + std::to_string(len));
    }
    // row i predicts position i+1; the final row has nothing to predict
    std::vector<int> targets(len, -1);
    std::vector<double> weights(len, 0.0);
    for (std::size_t i = 0; i + 1 < len; ++i) {
        targets[i] = seq.ids[i + 1];
        weights[i] = seq.weights[i + 1];
    }
    return tape.weighted_nll(logits, targets, weights);
}

void TrainSchedule::validate() const {
    if (total_epochs == 0) throw std::invalid_argument("schedule: total_epochs must be >= 1");
    if (phase1_epochs > total_epochs) {
        throw std::invalid_argument("schedule: phase1_epochs " + std::to_string(phase1_epochs) +
                                    " exceeds total_epochs " + std::to_string(total_epochs));
    }
}

const Volume& VolumeStore::raw(const std::string& rel_path) {
    auto it = cache_.find(rel_path);
    if (it != cache_.end()) return it->second;
    const auto full = std::filesystem::path(base_dir_) / rel_path;
    auto [ins, _] = cache_.emplace(rel_path, load_volume(full.string()));
    return ins->second;
}

namespace {

struct PreparedSample {
    SequenceLayout layout;
    WeightedTokenSequence weighted;
    const Sample* sample;
};

double run_sample(Model& model, VolumeStore& volumes, const PreparedSample& prep, double loss_scale) {
    Tape tape;
    std::vector<Tensor> visuals;
    visuals.reserve(prep.sample->volume_paths.size());
    for (const auto& path : prep.sample->volume_paths) {
        visuals.push_back(model.embed_volume(tape, volumes.raw(path)));
    }
    AssembledSequence seq = model.lm().assemble(tape, prep.layout, visuals);
    Tensor logits = model.lm().forward(tape, seq);
    Tensor loss = weighted_nll_loss(tape, logits, prep.weighted);
    Tensor scaled = tape.scale(loss, loss_scale);
    tape.backward(scaled);
    return loss.item();
}

}  // namespace

TrainResult train(Model& model, const Vocabulary& vocab, const Lexicon& lexicon,
                  const std::vector<Sample>& corpus, VolumeStore& volumes, const TrainSchedule& schedule,
                  const TrainOptions& options, std::uint64_t seed, AdamW& optimizer,
                  std::size_t step_offset) {
    schedule.validate();
    if (corpus.empty()) throw std::invalid_argument("train: empty corpus");
    if (options.batch_size == 0 || options.grad_accum == 0) {
        throw std::invalid_argument("train: batch_size and grad_accum must be >= 1");
    }

    std::vector<PreparedSample> prepared;
    prepared.reserve(corpus.size());
    for (const auto& s : corpus) {
        s.validate();
        PreparedSample p;
        p.sample = &s;
        const std::string* instr =
            s.kind == SampleKind::Instruction ? &s.instruction.value() : nullptr;
        p.layout = model.lm().layout_sequence(vocab, s.text, instr);
        p.weighted = assign_weights(p.layout, vocab, lexicon, s.kind);
        prepared.push_back(std::move(p));
    }

    TrainResult result;
    const std::size_t micro = options.batch_size;
    const std::size_t accum = options.grad_accum;
    std::size_t step = step_offset;
    double smoothed = 0.0;
    bool smoothed_init = false;
    bool stop = false;

    for (std::size_t epoch = 0; epoch < schedule.total_epochs && !stop; ++epoch) {
        const bool frozen = schedule.freeze_lm_in_phase1 && epoch < schedule.phase1_epochs;
        model.set_lm_frozen(frozen);
        const int phase = frozen ? 1 : 2;

        std::vector<std::size_t> order(prepared.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng(Rng::derive(seed, 0x65706f63ULL + epoch));
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j =
                static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }

        std::size_t cursor = 0;
        while (cursor < order.size() && !stop) {
            model.params().zero_grad();
            double batch_loss = 0.0;
            std::size_t batch_n = 0;
            for (std::size_t a = 0; a < accum && cursor < order.size(); ++a) {
                const std::size_t take = std::min(micro, order.size() - cursor);
                for (std::size_t b = 0; b < take; ++b, ++cursor) {
                    batch_loss += run_sample(model, volumes, prepared[order[cursor]],
                                             1.0 / static_cast<double>(take));
                    ++batch_n;
                }
            }
            // per-sample gradients were scaled by 1/micro-batch; average over
            // accumulated micro-batches too
            if (accum > 1) {
                for (std::size_t i = 0; i < model.params().size(); ++i) {
                    Tensor t = model.params().tensor(i);
                    if (!t.has_grad()) continue;
                    for (double& g : t.grad()) g /= static_cast<double>(accum);
                }
            }
            optimizer.step();
            ++step;
            const double mean_loss = batch_loss / static_cast<double>(batch_n);
            result.trace.push_back(LossPoint{step, phase, mean_loss});

            smoothed = smoothed_init ? 0.9 * smoothed + 0.1 * mean_loss : mean_loss;
            smoothed_init = true;
            if (options.stop_below_loss > 0.0 && smoothed < options.stop_below_loss) stop = true;
            if (options.max_steps > 0 && step - step_offset >= options.max_steps) stop = true;
        }
    }
    model.set_lm_frozen(false);
    result.steps = step - step_offset;
    return result;
}

void write_loss_trace(const std::string& path, const std::vector<LossPoint>& trace) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("trace: cannot open '" + path + "' for writing");
    os << "step,phase,loss\n";
    char buf[64];
    for (const auto& p : trace) {
        std::snprintf(buf, sizeof(buf), "%zu,%d,%.17g\n", p.step, p.phase, p.loss);
        os << buf;
    }
    if (!os) throw std::runtime_error("trace: write failed for '" + path + "'");
}

}  // namespace ivlm
