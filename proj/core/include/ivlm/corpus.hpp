#pragma once

#include "ivlm/rng.hpp"
#include "ivlm/volume.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ivlm {

enum class SampleKind { Interleaved, Instruction };
enum class Task {
    ModalityRecognition,
    DiseaseDiagnosis,
    VQA,
    ReportGeneration,
    RationaleDiagnosis,
    FreeInterleaved,
};

const char* task_name(Task t);
Task task_from_name(const std::string& s);
const char* sample_kind_name(SampleKind k);
SampleKind sample_kind_from_name(const std::string& s);

struct SampleLabels {
    std::map<std::string, bool> diseases;  // full disease universe with truth flags
    std::string modality;                  // canonical name, empty when unknown
};

struct Sample {
    std::string id;
    SampleKind kind = SampleKind::Instruction;
    Task task = Task::VQA;
    std::string text;
    std::optional<std::string> instruction;
    std::optional<std::string> response;
    std::vector<std::string> volume_paths;  // relative to the manifest directory
    SampleLabels labels;

    // instruction samples need both halves with text = instruction + " " +
    // response; placeholders must be <image-1>..<image-N> with N volumes
    void validate() const;
    std::vector<std::size_t> placeholder_indices() const;  // in order of appearance
};

// JSON-lines manifest, one sample per line. Loading validates every sample.
std::vector<Sample> load_manifest(const std::string& path);
void save_manifest(const std::string& path, const std::vector<Sample>& samples);

// ---------- prompt rendering ----------

enum class PromptForm { Judgment, Open };

struct PromptTemplate {
    Task task;
    PromptForm form;
    std::string pattern;  // "{modality}"/"{disease}" slots plus <image-i> markers
};

const std::vector<PromptTemplate>& default_templates(Task task, PromptForm form);

// Judgment templates sample a candidate uniformly and answer yes/no against
// the labels; open templates render the ground truth as the response.
std::pair<std::string, std::string> render_prompt(const PromptTemplate& tpl, const SampleLabels& labels,
                                                  Rng& rng);

// rationale feature phrase for the i-th disease of a universe (synthetic
// stand-in for per-disease radiologic descriptions)
std::string feature_phrase(std::size_t disease_index);

// ---------- pool operations ----------

// Downsample the majority class of a yes/no judgment pool to a 1:1 ratio,
// keeping original order among survivors.
std::vector<Sample> balance_judgments(const std::vector<Sample>& pool, Rng& rng);

struct CurationRule {
    std::string name;
    std::string pattern;  // regex for strip-sentence, modality name for drop rules
    std::string action;   // "drop-sample-if-modality" | "strip-sentence"
};

std::vector<CurationRule> default_rules();
std::vector<CurationRule> load_rules(const std::string& path);

struct RuleReport {
    std::string name;
    std::size_t dropped_samples = 0;
    std::size_t stripped_sentences = 0;
};

struct CurationResult {
    std::vector<Sample> kept;
    std::vector<RuleReport> rules;
    std::size_t input_count = 0;
};

CurationResult curate(const std::vector<Sample>& pool, const std::vector<CurationRule>& rules);
void write_curation_report(const std::string& path, const CurationResult& result);

// ---------- synthetic corpus ----------

// Volumes encode their own labels so learnability is checkable end to end:
//   - modality m (index in the canonical six) lights the stripe
//     rows [0, H/4) x cols [m*W/6, (m+1)*W/6)
//   - disease k (index in spec.diseases, k < 8) lights the cell
//     rows [H/4 + (k/4)*(3H/8), ...+3H/8) x cols [(k%4)*W/4, ...+W/4)
// Bright regions sit near 0.9, background near 0.1; both survive min-max
// normalization and resizing.
struct GeneratorSpec {
    std::size_t samples = 100;
    std::vector<Task> tasks;
    std::vector<std::string> diseases;
    std::vector<std::string> modalities;  // subset of the canonical six
    double test_fraction = 0.2;
    std::size_t volume_hw = 48;    // raw in-plane size of synthetic 3D volumes
    std::size_t volume_depth = 4;  // raw depth of synthetic 3D volumes
    double contamination = 0.0;    // fraction of samples seeded with curatable defects

    static GeneratorSpec from_json_file(const std::string& path);
    void validate() const;
};

struct SynthResult {
    std::vector<Sample> pretrain;
    std::vector<Sample> finetune;
    std::vector<Sample> test;
    std::size_t volumes_written = 0;
};

// Writes volumes/ plus pretrain.jsonl, finetune.jsonl and test.jsonl under
// out_dir. Byte-identical for a fixed (spec, seed).
SynthResult synth_corpus(const GeneratorSpec& spec, std::uint64_t seed, const std::string& out_dir);

// synthetic volume for a label assignment; exposed for tests
Volume make_labeled_volume(const SampleLabels& labels, const std::vector<std::string>& disease_universe,
                           bool native_2d, std::size_t hw, std::size_t depth, Rng& rng);

}  // namespace ivlm
