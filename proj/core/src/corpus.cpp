#include "ivlm/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>
#include <stdexcept>

namespace ivlm {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

const std::vector<std::string> kCanonicalModalities = {"CT",  "MRI",   "Ultrasound",
                                                       "PET", "X-ray", "Angiography"};

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

std::vector<std::string> positive_diseases(const SampleLabels& labels) {
    std::vector<std::string> out;
    for (const auto& [name, present] : labels.diseases) {
        if (present) out.push_back(name);
    }
    return out;
}

std::string join_list(const std::vector<std::string>& items, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += sep;
        out += items[i];
    }
    return out;
}

std::string disease_list_text(const std::vector<std::string>& positives) {
    if (positives.empty()) return "no findings";
    return join_list(positives, ", ");
}

std::string findings_phrase(const std::vector<std::string>& positives) {
    if (positives.empty()) return "no acute findings";
    if (positives.size() == 1) return positives[0];
    std::vector<std::string> head(positives.begin(), positives.end() - 1);
    return join_list(head, ", ") + " and " + positives.back();
}

}  // namespace

const char* task_name(Task t) {
    switch (t) {
        case Task::ModalityRecognition: return "modality_recognition";
        case Task::DiseaseDiagnosis: return "disease_diagnosis";
        case Task::VQA: return "vqa";
        case Task::ReportGeneration: return "report_generation";
        case Task::RationaleDiagnosis: return "rationale_diagnosis";
        case Task::FreeInterleaved: return "interleaved";
    }
    return "unknown";
}

Task task_from_name(const std::string& s) {
    for (Task t : {Task::ModalityRecognition, Task::DiseaseDiagnosis, Task::VQA, Task::ReportGeneration,
                   Task::RationaleDiagnosis, Task::FreeInterleaved}) {
        if (s == task_name(t)) return t;
    }
    throw std::invalid_argument("corpus: unknown task '" + s + "'");
}

const char* sample_kind_name(SampleKind k) {
    return k == SampleKind::Interleaved ? "interleaved" : "instruction";
}

SampleKind sample_kind_from_name(const std::string& s) {
    if (s == "interleaved") return SampleKind::Interleaved;
    if (s == "instruction") return SampleKind::Instruction;
    throw std::invalid_argument("corpus: unknown sample kind '" + s + "'");
}

std::vector<std::size_t> Sample::placeholder_indices() const {
    std::vector<std::size_t> out;
    static const std::regex re("<image-([0-9]+)>");
    for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
        out.push_back(std::stoul((*it)[1].str()));
    }
    return out;
}

void Sample::validate() const {
    if (id.empty()) throw std::invalid_argument("sample: empty id");
    const auto indices = placeholder_indices();
    std::set<std::size_t> seen;
    for (std::size_t idx : indices) {
        if (!seen.insert(idx).second) {
            throw std::invalid_argument("sample " + id + ": placeholder <image-" + std::to_string(idx) +
                                        "> appears more than once");
        }
    }
    for (std::size_t i = 1; i <= indices.size(); ++i) {
        if (!seen.count(i)) {
            throw std::invalid_argument("sample " + id + ": placeholder indices must be 1.." +
                                        std::to_string(indices.size()));
        }
    }
    if (indices.size() != volume_paths.size()) {
        throw std::invalid_argument("sample " + id + ": " + std::to_string(indices.size()) +
                                    " placeholders but " + std::to_string(volume_paths.size()) + " volumes");
    }
    if (kind == SampleKind::Instruction) {
        if (!instruction || !response) {
            throw std::invalid_argument("sample " + id + ": instruction samples need instruction and response");
        }
        if (text != *instruction + " " + *response && text != *instruction + *response) {
            throw std::invalid_argument("sample " + id + ": text is not instruction followed by response");
        }
    }
}

std::vector<Sample> load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("manifest: cannot open '" + path + "'");
    std::vector<Sample> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw std::runtime_error("manifest: " + path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        Sample s;
        for (const auto& [key, value] : j.items()) {
            if (key == "id") s.id = value.get<std::string>();
            else if (key == "kind") s.kind = sample_kind_from_name(value.get<std::string>());
            else if (key == "task") s.task = task_from_name(value.get<std::string>());
            else if (key == "text") s.text = value.get<std::string>();
            else if (key == "instruction") s.instruction = value.get<std::string>();
            else if (key == "response") s.response = value.get<std::string>();
            else if (key == "volume_paths") s.volume_paths = value.get<std::vector<std::string>>();
            else if (key == "labels") {
                if (value.contains("modality")) s.labels.modality = value["modality"].get<std::string>();
                if (value.contains("diseases")) {
                    for (const auto& [d, flag] : value["diseases"].items()) {
                        s.labels.diseases[d] = flag.get<bool>();
                    }
                }
            } else {
                throw std::runtime_error("manifest: " + path + ":" + std::to_string(lineno) +
                                         ": unknown field '" + key + "'");
            }
        }
        try {
            s.validate();
        } catch (const std::exception& e) {
            throw std::runtime_error("manifest: " + path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        out.push_back(std::move(s));
    }
    return out;
}

void save_manifest(const std::string& path, const std::vector<Sample>& samples) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("manifest: cannot open '" + path + "' for writing");
    for (const auto& s : samples) {
        ordered_json j;
        j["id"] = s.id;
        j["kind"] = sample_kind_name(s.kind);
        j["task"] = task_name(s.task);
        j["text"] = s.text;
        if (s.instruction) j["instruction"] = *s.instruction;
        if (s.response) j["response"] = *s.response;
        j["volume_paths"] = s.volume_paths;
        ordered_json labels;
        labels["modality"] = s.labels.modality;
        ordered_json diseases;
        for (const auto& [d, flag] : s.labels.diseases) diseases[d] = flag;
        labels["diseases"] = diseases;
        j["labels"] = labels;
        os << j.dump() << "\n";
    }
    if (!os) throw std::runtime_error("manifest: write failed for '" + path + "'");
}

// ---------- prompt rendering ----------

const std::vector<PromptTemplate>& default_templates(Task task, PromptForm form) {
    static const std::vector<PromptTemplate> modality_judgment = {
        {Task::ModalityRecognition, PromptForm::Judgment, "{images} is this image shot by {modality}?"},
        {Task::ModalityRecognition, PromptForm::Judgment, "was {modality} used to acquire {images}?"},
    };
    static const std::vector<PromptTemplate> modality_open = {
        {Task::ModalityRecognition, PromptForm::Open, "what is the modality of the given scan {images}?"},
        {Task::ModalityRecognition, PromptForm::Open, "{images} name the imaging modality of this study."},
    };
    static const std::vector<PromptTemplate> disease_judgment = {
        {Task::DiseaseDiagnosis, PromptForm::Judgment, "{images} is {disease} shown in this image?"},
        {Task::DiseaseDiagnosis, PromptForm::Judgment, "{images} does the patient have {disease}?"},
    };
    static const std::vector<PromptTemplate> disease_open = {
        {Task::DiseaseDiagnosis, PromptForm::Open, "please make diagnosis based on the images {images}."},
    };
    static const std::vector<PromptTemplate> report_open = {
        {Task::ReportGeneration, PromptForm::Open, "what can you find from the scans {images}?"},
        {Task::ReportGeneration, PromptForm::Open, "please caption {images} with findings and impression."},
    };
    static const std::vector<PromptTemplate> rationale_open = {
        {Task::RationaleDiagnosis, PromptForm::Open,
         "what disease can be diagnosed from these radiological images and what specific features are "
         "typically observed? {images}"},
        {Task::RationaleDiagnosis, PromptForm::Open,
         "determine the disease in {images} and describe the characteristic radiologic features."},
    };
    static const std::vector<PromptTemplate> empty = {};
    switch (task) {
        case Task::ModalityRecognition:
            return form == PromptForm::Judgment ? modality_judgment : modality_open;
        case Task::DiseaseDiagnosis:
            return form == PromptForm::Judgment ? disease_judgment : disease_open;
        case Task::ReportGeneration: return report_open;
        case Task::RationaleDiagnosis: return rationale_open;
        default: return empty;
    }
}

std::string feature_phrase(std::size_t disease_index) {
    static const char* kPhrases[] = {
        "patchy interstitial opacification with septal thickening",
        "a lucent pleural line with absent peripheral markings",
        "a cortical discontinuity with adjacent soft tissue swelling",
        "blunting of the costophrenic angle with a meniscus sign",
        "an enlarged cardiac silhouette with increased cardiothoracic ratio",
        "a focal hyperdense region with surrounding low attenuation",
        "irregular wall thickening with luminal narrowing",
        "a well-circumscribed mass with internal heterogeneity",
    };
    return kPhrases[disease_index % 8];
}

namespace {

std::string report_text(const SampleLabels& labels) {
    const auto positives = positive_diseases(labels);
    std::string out = "this is a " + lower(labels.modality) + " study.";
    if (positives.empty()) {
        out += " no acute findings.";
    } else {
        out += " findings include " + findings_phrase(positives) + ".";
        out += " no other abnormality is seen.";
    }
    return out;
}

std::string rationale_text(const SampleLabels& labels) {
    const auto positives = positive_diseases(labels);
    if (positives.empty()) return "no disease is evident.";
    std::size_t index = 0, hit = 0;
    for (const auto& [name, present] : labels.diseases) {
        if (name == positives.front()) hit = index;
        ++index;
    }
    return positives.front() + ". characteristic features include " + feature_phrase(hit) + ".";
}

}  // namespace

std::pair<std::string, std::string> render_prompt(const PromptTemplate& tpl, const SampleLabels& labels,
                                                  Rng& rng) {
    std::string instruction = tpl.pattern;
    std::string response;
    if (tpl.form == PromptForm::Judgment) {
        if (tpl.task == Task::ModalityRecognition) {
            if (labels.modality.empty()) throw std::invalid_argument("render: sample has no modality label");
            const auto& cand =
                kCanonicalModalities[static_cast<std::size_t>(rng.uniform_int(0, 5))];
            instruction = replace_all(instruction, "{modality}", lower(cand));
            response = lower(cand) == lower(labels.modality) ? "yes" : "no";
        } else if (tpl.task == Task::DiseaseDiagnosis) {
            if (labels.diseases.empty()) throw std::invalid_argument("render: sample has no disease labels");
            std::vector<std::string> names;
            for (const auto& [name, present] : labels.diseases) names.push_back(name);
            const auto& cand =
                names[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(names.size()) - 1))];
            instruction = replace_all(instruction, "{disease}", cand);
            response = labels.diseases.at(cand) ? "yes" : "no";
        } else {
            throw std::invalid_argument("render: judgment form undefined for task " +
                                        std::string(task_name(tpl.task)));
        }
    } else {
        switch (tpl.task) {
            case Task::ModalityRecognition:
                if (labels.modality.empty()) {
                    throw std::invalid_argument("render: sample has no modality label");
                }
                response = lower(labels.modality);
                break;
            case Task::DiseaseDiagnosis:
                if (labels.diseases.empty()) {
                    throw std::invalid_argument("render: sample has no disease labels");
                }
                response = disease_list_text(positive_diseases(labels));
                break;
            case Task::ReportGeneration:
                if (labels.modality.empty()) {
                    throw std::invalid_argument("render: sample has no modality label");
                }
                response = report_text(labels);
                break;
            case Task::RationaleDiagnosis: response = rationale_text(labels); break;
            default:
                throw std::invalid_argument("render: open form undefined for task " +
                                            std::string(task_name(tpl.task)));
        }
    }
    return {instruction, response};
}

// ---------- pool operations ----------

std::vector<Sample> balance_judgments(const std::vector<Sample>& pool, Rng& rng) {
    std::vector<std::size_t> yes_idx, no_idx;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (!pool[i].response || (*pool[i].response != "yes" && *pool[i].response != "no")) {
            throw std::invalid_argument("balance: sample " + pool[i].id +
                                        " is not a yes/no judgment sample");
        }
        (*pool[i].response == "yes" ? yes_idx : no_idx).push_back(i);
    }
    if (yes_idx.empty() || no_idx.empty()) {
        throw std::invalid_argument("balance: pool has " + std::to_string(yes_idx.size()) + " yes and " +
                                    std::to_string(no_idx.size()) + " no samples; both classes required");
    }
    const std::size_t keep = std::min(yes_idx.size(), no_idx.size());
    auto& majority = yes_idx.size() > no_idx.size() ? yes_idx : no_idx;
    // deterministic downsample: shuffle the majority under the caller's rng
    for (std::size_t i = majority.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
        std::swap(majority[i - 1], majority[j]);
    }
    majority.resize(keep);
    std::set<std::size_t> kept(yes_idx.begin(), yes_idx.end());
    kept.insert(no_idx.begin(), no_idx.end());
    std::vector<Sample> out;
    out.reserve(kept.size());
    for (std::size_t i : kept) out.push_back(pool[i]);
    return out;
}

std::vector<CurationRule> default_rules() {
    return {
        {"non-radiology", "Other", "drop-sample-if-modality"},
        {"size-filter", "[0-9]+(\\.[0-9]+)?\\s*(mm|cm)\\b", "strip-sentence"},
        {"age-filter", "[0-9]+[- ]?year[- ]?old", "strip-sentence"},
    };
}

std::vector<CurationRule> load_rules(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("rules: cannot open '" + path + "'");
    ordered_json j;
    try {
        j = ordered_json::parse(is);
    } catch (const std::exception& e) {
        throw std::runtime_error("rules: " + path + ": " + e.what());
    }
    std::vector<CurationRule> rules;
    for (const auto& item : j) {
        CurationRule r;
        r.name = item.at("name").get<std::string>();
        r.pattern = item.at("pattern").get<std::string>();
        r.action = item.at("action").get<std::string>();
        if (r.action != "drop-sample-if-modality" && r.action != "strip-sentence") {
            throw std::runtime_error("rules: unknown action '" + r.action + "' in rule '" + r.name + "'");
        }
        rules.push_back(std::move(r));
    }
    return rules;
}

namespace {

struct SentencePiece {
    std::string body;
    char delim;  // '.', '?', '!' or 0 for a trailing fragment
};

std::vector<SentencePiece> split_sentences(const std::string& text) {
    std::vector<SentencePiece> out;
    std::string cur;
    for (char c : text) {
        if (c == '.' || c == '?' || c == '!') {
            out.push_back(SentencePiece{cur, c});
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (cur.find_first_not_of(' ') == std::string::npos) cur.clear();
    if (!cur.empty()) out.push_back(SentencePiece{cur, 0});
    return out;
}

std::string squeeze_spaces(const std::string& s) {
    std::string out;
    bool prev_space = true;
    for (char c : s) {
        if (c == ' ') {
            if (!prev_space) out += c;
            prev_space = true;
        } else {
            out += c;
            prev_space = false;
        }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

std::string placeholders_only(const std::string& sentence) {
    static const std::regex re("<image-[0-9]+>");
    std::string out;
    for (auto it = std::sregex_iterator(sentence.begin(), sentence.end(), re);
         it != std::sregex_iterator(); ++it) {
        if (!out.empty()) out += ' ';
        out += it->str();
    }
    return out;
}

// removes matching sentences (keeping any placeholders they contain) and
// counts strips
std::string strip_sentences(const std::string& text, const std::regex& re, std::size_t& strips) {
    const auto pieces = split_sentences(text);
    std::string out;
    for (const auto& piece : pieces) {
        std::string body = piece.body;
        if (std::regex_search(body, re)) {
            ++strips;
            body = placeholders_only(body);
            if (body.empty()) continue;  // nothing worth keeping from this sentence
        }
        out += body;
        if (piece.delim) out += piece.delim;
        out += ' ';
    }
    return squeeze_spaces(out);
}

}  // namespace

CurationResult curate(const std::vector<Sample>& pool, const std::vector<CurationRule>& rules) {
    CurationResult result;
    result.input_count = pool.size();
    for (const auto& r : rules) result.rules.push_back(RuleReport{r.name, 0, 0});

    std::vector<std::regex> regexes;
    for (const auto& r : rules) {
        regexes.emplace_back(r.action == "strip-sentence"
                                 ? std::regex(r.pattern, std::regex::ECMAScript | std::regex::icase)
                                 : std::regex());
    }

    for (const auto& sample : pool) {
        Sample s = sample;
        bool dropped = false;
        for (std::size_t ri = 0; ri < rules.size() && !dropped; ++ri) {
            const auto& rule = rules[ri];
            if (rule.action == "drop-sample-if-modality") {
                if (lower(s.labels.modality) == lower(rule.pattern)) {
                    ++result.rules[ri].dropped_samples;
                    dropped = true;
                }
            } else {
                std::size_t strips = 0;
                if (s.kind == SampleKind::Instruction) {
                    std::string instr = strip_sentences(*s.instruction, regexes[ri], strips);
                    std::string resp = strip_sentences(*s.response, regexes[ri], strips);
                    if (instr.empty() || resp.empty()) {
                        ++result.rules[ri].dropped_samples;
                        result.rules[ri].stripped_sentences += strips;
                        dropped = true;
                        continue;
                    }
                    s.instruction = instr;
                    s.response = resp;
                    s.text = instr + " " + resp;
                } else {
                    std::string text = strip_sentences(s.text, regexes[ri], strips);
                    if (text.empty()) {
                        ++result.rules[ri].dropped_samples;
                        result.rules[ri].stripped_sentences += strips;
                        dropped = true;
                        continue;
                    }
                    s.text = text;
                }
                result.rules[ri].stripped_sentences += strips;
            }
        }
        if (!dropped) {
            s.validate();
            result.kept.push_back(std::move(s));
        }
    }
    return result;
}

void write_curation_report(const std::string& path, const CurationResult& result) {
    ordered_json j;
    j["input_samples"] = result.input_count;
    j["kept_samples"] = result.kept.size();
    ordered_json rules = ordered_json::array();
    for (const auto& r : result.rules) {
        ordered_json item;
        item["name"] = r.name;
        item["dropped_samples"] = r.dropped_samples;
        item["stripped_sentences"] = r.stripped_sentences;
        rules.push_back(item);
    }
    j["rules"] = rules;
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("curation report: cannot open '" + path + "' for writing");
    os << j.dump(2) << "\n";
}

// ---------- synthetic corpus ----------

void GeneratorSpec::validate() const {
    if (tasks.empty()) throw std::invalid_argument("generator: no tasks listed");
    if (samples < tasks.size()) {
        throw std::invalid_argument("generator: " + std::to_string(samples) +
                                    " samples cannot cover " + std::to_string(tasks.size()) + " tasks");
    }
    if (diseases.empty() || diseases.size() > 8) {
        throw std::invalid_argument("generator: need 1..8 diseases, got " + std::to_string(diseases.size()));
    }
    std::set<std::string> uniq(diseases.begin(), diseases.end());
    if (uniq.size() != diseases.size()) throw std::invalid_argument("generator: duplicate disease names");
    if (std::find(tasks.begin(), tasks.end(), Task::DiseaseDiagnosis) != tasks.end() && diseases.size() < 2) {
        throw std::invalid_argument("generator: judgment diagnosis needs at least 2 diseases");
    }
    if (modalities.empty()) throw std::invalid_argument("generator: no modalities listed");
    for (const auto& m : modalities) {
        if (std::find(kCanonicalModalities.begin(), kCanonicalModalities.end(), m) ==
            kCanonicalModalities.end()) {
            throw std::invalid_argument("generator: modality '" + m + "' is not one of the canonical six");
        }
    }
    if (test_fraction < 0.0 || test_fraction >= 1.0) {
        throw std::invalid_argument("generator: test_fraction must be in [0,1)");
    }
    if (volume_hw < 24 || volume_hw % 24 != 0) {
        throw std::invalid_argument("generator: volume_hw must be a positive multiple of 24");
    }
    if (volume_depth < 1) throw std::invalid_argument("generator: volume_depth must be >= 1");
    if (contamination < 0.0 || contamination > 1.0) {
        throw std::invalid_argument("generator: contamination must be in [0,1]");
    }
}

GeneratorSpec GeneratorSpec::from_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("generator: cannot open spec '" + path + "'");
    ordered_json j;
    try {
        j = ordered_json::parse(is);
    } catch (const std::exception& e) {
        throw std::runtime_error("generator: " + path + ": " + e.what());
    }
    GeneratorSpec spec;
    spec.tasks.clear();
    for (const auto& [key, value] : j.items()) {
        if (key == "samples") spec.samples = value.get<std::size_t>();
        else if (key == "tasks") {
            for (const auto& t : value) spec.tasks.push_back(task_from_name(t.get<std::string>()));
        } else if (key == "diseases") spec.diseases = value.get<std::vector<std::string>>();
        else if (key == "modalities") spec.modalities = value.get<std::vector<std::string>>();
        else if (key == "test_fraction") spec.test_fraction = value.get<double>();
        else if (key == "volume_hw") spec.volume_hw = value.get<std::size_t>();
        else if (key == "volume_depth") spec.volume_depth = value.get<std::size_t>();
        else if (key == "contamination") spec.contamination = value.get<double>();
        else throw std::runtime_error("generator: " + path + ": unknown field '" + key + "'");
    }
    spec.validate();
    return spec;
}

Volume make_labeled_volume(const SampleLabels& labels, const std::vector<std::string>& disease_universe,
                           bool native_2d, std::size_t hw, std::size_t depth, Rng& rng) {
    Volume v;
    v.height = hw;
    v.width = hw;
    v.depth = native_2d ? 1 : depth;
    v.channels = 1;
    v.is_native_2d = native_2d;
    v.modality = labels.modality.empty() ? Modality::Other : modality_from_name(labels.modality);
    v.voxels.resize(v.voxel_count());

    const std::size_t stripe_rows = hw / 4;
    const std::size_t sector_w = hw / 6;
    const std::size_t cell_h = (hw - stripe_rows) / 2;
    const std::size_t cell_w = hw / 4;

    // background
    for (double& x : v.voxels) x = 0.05 + 0.10 * rng.uniform();

    auto brighten = [&](std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
        for (std::size_t h = r0; h < r1; ++h)
            for (std::size_t w = c0; w < c1; ++w)
                for (std::size_t d = 0; d < v.depth; ++d)
                    v.at(h, w, d, 0) = 0.85 + 0.10 * rng.uniform();
    };

    // modality stripe sector (skipped for Other/unknown)
    auto mod_it = std::find(kCanonicalModalities.begin(), kCanonicalModalities.end(), labels.modality);
    if (mod_it != kCanonicalModalities.end()) {
        const std::size_t m = static_cast<std::size_t>(mod_it - kCanonicalModalities.begin());
        brighten(0, stripe_rows, m * sector_w, (m + 1) * sector_w);
    }

    // one cell per positive disease
    for (std::size_t k = 0; k < disease_universe.size(); ++k) {
        auto it = labels.diseases.find(disease_universe[k]);
        if (it == labels.diseases.end() || !it->second) continue;
        const std::size_t row = k / 4, col = k % 4;
        brighten(stripe_rows + row * cell_h, stripe_rows + (row + 1) * cell_h, col * cell_w,
                 (col + 1) * cell_w);
    }
    return v;
}

namespace {

struct SampleDraft {
    Sample sample;
    bool is_test = false;
};

std::string image_markers(std::size_t count) {
    std::string out;
    for (std::size_t i = 1; i <= count; ++i) {
        if (i > 1) out += ' ';
        out += "<image-" + std::to_string(i) + ">";
    }
    return out;
}

const std::vector<std::string> kContaminationSentences = {
    "the lesion measures 12 mm.",
    "a 3 cm mass is present in the upper zone.",
    "the patient is a 58-year-old presenting with pain.",
};

std::string interleaved_text(const SampleLabels& labels, std::size_t image_count, Rng& rng) {
    const auto positives = positive_diseases(labels);
    const std::string findings = findings_phrase(positives);
    const std::string mod = lower(labels.modality);
    std::string text;
    if (image_count == 2) {
        text = "figure <image-1> and figure <image-2> are " + mod +
               " views of the same patient. both demonstrate " + findings + ".";
    } else if (rng.coin()) {
        text = "figure <image-1> shows " + findings + " on a " + mod +
               " scan. the remaining structures appear unremarkable.";
    } else {
        text = "as seen in <image-1>, the " + mod + " study demonstrates " + findings + ".";
    }
    return text;
}

}  // namespace

SynthResult synth_corpus(const GeneratorSpec& spec, std::uint64_t seed, const std::string& out_dir) {
    spec.validate();
    fs::create_directories(fs::path(out_dir) / "volumes");

    // per-task totals drive the train/test split boundaries
    std::vector<std::size_t> task_totals(spec.tasks.size(), 0);
    for (std::size_t i = 0; i < spec.samples; ++i) ++task_totals[i % spec.tasks.size()];
    std::vector<std::size_t> task_test(spec.tasks.size(), 0);
    for (std::size_t t = 0; t < spec.tasks.size(); ++t) {
        task_test[t] = static_cast<std::size_t>(spec.test_fraction * static_cast<double>(task_totals[t]) + 0.5);
    }

    SynthResult result;
    std::vector<std::size_t> task_ordinal(spec.tasks.size(), 0);

    for (std::size_t i = 0; i < spec.samples; ++i) {
        const std::size_t ti = i % spec.tasks.size();
        const Task task = spec.tasks[ti];
        const std::size_t ordinal = task_ordinal[ti]++;
        const bool is_test = ordinal >= task_totals[ti] - task_test[ti];
        Rng rng(Rng::derive(seed, i + 1));

        const bool contaminated = !is_test && spec.contamination > 0.0 && rng.uniform() < spec.contamination;
        const bool contaminate_modality = contaminated && rng.coin();

        Sample s;
        char idbuf[16];
        std::snprintf(idbuf, sizeof(idbuf), "s%06zu", i);
        s.id = idbuf;
        s.task = task;
        s.kind = task == Task::FreeInterleaved ? SampleKind::Interleaved : SampleKind::Instruction;

        // labels
        SampleLabels labels;
        labels.modality = spec.modalities[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(spec.modalities.size()) - 1))];
        if (contaminate_modality) labels.modality = "Other";
        const std::size_t universe = spec.diseases.size();
        std::size_t n_pos = 1;
        if (universe >= 3 && rng.coin()) n_pos = 2;
        n_pos = std::min(n_pos, universe > 1 ? universe - 1 : universe);
        std::set<std::size_t> pos_set;
        while (pos_set.size() < n_pos) {
            pos_set.insert(static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(universe) - 1)));
        }
        for (std::size_t k = 0; k < universe; ++k) labels.diseases[spec.diseases[k]] = pos_set.count(k) > 0;
        s.labels = labels;

        // image plan: mostly single 3D volumes; modality alternates 2D/3D,
        // every fourth report and third interleaved sample carries a 2D+3D pair
        std::size_t image_count = 1;
        bool first_2d = false;
        if (task == Task::ModalityRecognition) {
            first_2d = ordinal % 2 == 0;
        } else if (task == Task::ReportGeneration && ordinal % 4 == 3) {
            image_count = 2;
            first_2d = true;
        } else if (task == Task::FreeInterleaved && ordinal % 3 == 2) {
            image_count = 2;
            first_2d = true;
        }

        for (std::size_t v = 0; v < image_count; ++v) {
            const bool native_2d = v == 0 ? first_2d : false;
            Volume vol = make_labeled_volume(labels, spec.diseases, native_2d, spec.volume_hw,
                                             spec.volume_depth, rng);
            const std::string rel = "volumes/" + s.id + "_" + std::to_string(v + 1) + ".vol";
            save_volume((fs::path(out_dir) / rel).string(), vol);
            s.volume_paths.push_back(rel);
            ++result.volumes_written;
        }
        const std::string markers = image_markers(image_count);

        // text
        if (task == Task::FreeInterleaved) {
            s.text = interleaved_text(labels, image_count, rng);
        } else {
            std::string instruction, response;
            if (task == Task::DiseaseDiagnosis) {
                // balanced by construction: even ordinals answer yes
                const bool want_yes = ordinal % 2 == 0;
                std::vector<std::string> side;
                for (const auto& [name, present] : labels.diseases) {
                    if (present == want_yes) side.push_back(name);
                }
                const auto& tpls = default_templates(task, PromptForm::Judgment);
                const auto& tpl = tpls[static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<std::int64_t>(tpls.size()) - 1))];
                const auto& cand = side[static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<std::int64_t>(side.size()) - 1))];
                instruction = replace_all(tpl.pattern, "{disease}", cand);
                response = want_yes ? "yes" : "no";
            } else if (task == Task::ModalityRecognition) {
                const PromptForm form =
                    (is_test || ordinal % 2 == 0) ? PromptForm::Open : PromptForm::Judgment;
                const auto& tpls = default_templates(task, form);
                const auto& tpl = tpls[static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<std::int64_t>(tpls.size()) - 1))];
                // Other-modality samples cannot answer an open modality prompt
                if (labels.modality == "Other") {
                    instruction = replace_all(default_templates(task, PromptForm::Judgment)[0].pattern,
                                              "{modality}", "ct");
                    response = "no";
                } else {
                    std::tie(instruction, response) = render_prompt(tpl, labels, rng);
                }
            } else if (task == Task::VQA) {
                switch (ordinal % 4) {
                    case 0:
                        instruction = "is the scan {images} normal or abnormal?";
                        response = positive_diseases(labels).empty() ? "normal" : "abnormal";
                        break;
                    case 1:
                        instruction = "how many distinct abnormalities are visible in {images}?";
                        response = std::to_string(positive_diseases(labels).size());
                        break;
                    case 2:
                        instruction = "which finding is most apparent in {images}?";
                        response = positive_diseases(labels).empty() ? "none"
                                                                     : positive_diseases(labels).front();
                        break;
                    default:
                        instruction = "please make diagnosis based on the images {images}.";
                        response = disease_list_text(positive_diseases(labels));
                        break;
                }
            } else {
                const auto& tpls = default_templates(task, PromptForm::Open);
                const auto& tpl = tpls[static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<std::int64_t>(tpls.size()) - 1))];
                std::tie(instruction, response) = render_prompt(tpl, labels, rng);
            }
            instruction = replace_all(instruction, "{images}", markers);
            if (contaminated && !contaminate_modality) {
                const auto& extra = kContaminationSentences[static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<std::int64_t>(kContaminationSentences.size()) - 1))];
                if (task == Task::ReportGeneration) {
                    response += " " + extra;
                } else {
                    instruction = extra + " " + instruction;
                }
            }
            s.instruction = instruction;
            s.response = response;
            s.text = instruction + " " + response;
        }
        if (task == Task::FreeInterleaved && contaminated && !contaminate_modality) {
            const auto& extra = kContaminationSentences[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(kContaminationSentences.size()) - 1))];
            s.text += " " + extra;
        }

        s.validate();
        if (is_test) {
            result.test.push_back(std::move(s));
        } else if (s.kind == SampleKind::Interleaved) {
            result.pretrain.push_back(std::move(s));
        } else {
            result.finetune.push_back(std::move(s));
        }
    }

    save_manifest((fs::path(out_dir) / "pretrain.jsonl").string(), result.pretrain);
    save_manifest((fs::path(out_dir) / "finetune.jsonl").string(), result.finetune);
    save_manifest((fs::path(out_dir) / "test.jsonl").string(), result.test);
    return result;
}

}  // namespace ivlm
