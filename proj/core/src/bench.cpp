#include "ivlm/bench.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace ivlm {

using ordered_json = nlohmann::ordered_json;

const std::vector<std::string>& modality_closed_list() {
    static const std::vector<std::string> list = {"CT",  "MRI",   "Ultrasound",
                                                  "PET", "X-ray", "Angiography"};
    return list;
}

const std::vector<std::string>& yes_no_closed_list() {
    static const std::vector<std::string> list = {"yes", "no"};
    return list;
}

namespace {

const std::vector<Task> kBenchTasks = {Task::ModalityRecognition, Task::DiseaseDiagnosis, Task::VQA,
                                       Task::ReportGeneration, Task::RationaleDiagnosis};

// percentile with linear interpolation over sorted bootstrap aggregates
double percentile(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) return 0.0;
    const double rank = p * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(rank);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

using Aggregator = std::function<double(const std::vector<std::size_t>&)>;

MetricValue bootstrap_metric(const Aggregator& agg, std::size_t n, Rng& rng) {
    MetricValue out;
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    out.value = agg(all);

    constexpr std::size_t kResamples = 1000;
    std::vector<double> values(kResamples);
    std::vector<std::size_t> idx(n);
    for (std::size_t b = 0; b < kResamples; ++b) {
        for (std::size_t i = 0; i < n; ++i) {
            idx[i] = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
        }
        values[b] = agg(idx);
    }
    std::sort(values.begin(), values.end());
    out.ci_low = std::min(percentile(values, 0.025), out.value);
    out.ci_high = std::max(percentile(values, 0.975), out.value);
    return out;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

}  // namespace

BenchResult run_benchmark(const std::vector<Sample>& manifest, const Lexicon& lexicon,
                          const Predictor& predictor, std::uint64_t seed, std::size_t threads) {
    if (manifest.empty()) throw std::invalid_argument("bench: empty manifest");

    std::vector<Sample> ordered = manifest;
    std::sort(ordered.begin(), ordered.end(),
              [](const Sample& a, const Sample& b) { return a.id < b.id; });

    // predictions, optionally fanned out over worker threads
    std::vector<std::string> predictions(ordered.size());
    if (threads <= 1) {
        for (std::size_t i = 0; i < ordered.size(); ++i) predictions[i] = predictor(ordered[i]);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back([&] {
                while (true) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= ordered.size()) break;
                    predictions[i] = predictor(ordered[i]);
                }
            });
        }
        for (auto& th : pool) th.join();
    }

    BenchResult result;
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        const Sample& s = ordered[i];
        EvalRecord rec;
        rec.task = s.task;
        rec.id = s.id;
        rec.prediction = predictions[i];
        rec.reference = s.response.value_or(s.text);
        if (s.task == Task::ModalityRecognition) {
            rec.closed_list = modality_closed_list();
        } else if (s.task == Task::DiseaseDiagnosis) {
            rec.closed_list = yes_no_closed_list();
        }
        if (rec.closed_list) {
            rec.resolved = resolve_closed(rec.prediction, *rec.closed_list);
        }
        result.records.push_back(std::move(rec));
    }

    std::size_t task_index = 0;
    for (Task task : kBenchTasks) {
        ++task_index;
        std::vector<const EvalRecord*> recs;
        for (const auto& r : result.records) {
            if (r.task == task) recs.push_back(&r);
        }
        if (recs.empty()) {
            result.warnings.push_back(std::string("task ") + task_name(task) +
                                      " missing from manifest; omitted");
            continue;
        }
        MetricReport report;
        report.task = task;
        report.n = recs.size();
        Rng rng(Rng::derive(seed, 0xb007ULL + task_index));

        if (task == Task::ModalityRecognition || task == Task::DiseaseDiagnosis) {
            std::vector<std::string> preds, refs;
            for (const auto* r : recs) {
                preds.push_back(*r->resolved);
                refs.push_back(r->reference);
            }
            auto acc = [&](const std::vector<std::size_t>& idx) {
                std::size_t correct = 0;
                for (std::size_t i : idx) {
                    if (lower(preds[i]) == lower(refs[i])) ++correct;
                }
                return static_cast<double>(correct) / static_cast<double>(idx.size());
            };
            report.metrics.emplace_back("acc", bootstrap_metric(acc, recs.size(), rng));
            auto f1 = [&](const std::vector<std::size_t>& idx) {
                std::vector<std::string> p, r;
                for (std::size_t i : idx) {
                    p.push_back(preds[i]);
                    r.push_back(refs[i]);
                }
                return task == Task::DiseaseDiagnosis ? binary_f1(p, r, "yes")
                                                      : macro_f1(p, r, modality_closed_list());
            };
            report.metrics.emplace_back("f1", bootstrap_metric(f1, recs.size(), rng));
        } else {
            // precompute per-record values; bootstrap aggregates are means
            std::vector<double> bleu(recs.size()), rouge(recs.size()), up(recs.size()), ur(recs.size());
            for (std::size_t i = 0; i < recs.size(); ++i) {
                bleu[i] = bleu1(recs[i]->prediction, recs[i]->reference);
                rouge[i] = rouge1(recs[i]->prediction, recs[i]->reference);
                std::tie(up[i], ur[i]) =
                    umls_precision_recall(recs[i]->prediction, recs[i]->reference, lexicon);
            }
            auto mean_of = [](const std::vector<double>& v) {
                return [&v](const std::vector<std::size_t>& idx) {
                    double s = 0.0;
                    for (std::size_t i : idx) s += v[i];
                    return s / static_cast<double>(idx.size());
                };
            };
            report.metrics.emplace_back("bleu1", bootstrap_metric(mean_of(bleu), recs.size(), rng));
            report.metrics.emplace_back("rouge1", bootstrap_metric(mean_of(rouge), recs.size(), rng));
            report.metrics.emplace_back("umls_precision", bootstrap_metric(mean_of(up), recs.size(), rng));
            report.metrics.emplace_back("umls_recall", bootstrap_metric(mean_of(ur), recs.size(), rng));
        }
        result.reports.push_back(std::move(report));
    }
    return result;
}

Predictor make_model_predictor(const Model& model, const Vocabulary& vocab, VolumeStore& volumes,
                               std::size_t max_new) {
    return [&model, &vocab, &volumes, max_new](const Sample& s) {
        const std::string prompt_text = s.kind == SampleKind::Instruction ? *s.instruction : s.text;
        SequenceLayout prompt =
            model.lm().layout_sequence(vocab, prompt_text, nullptr, /*include_eos=*/false);
        Tape tape(/*recording=*/false);
        std::vector<Tensor> visuals;
        for (const auto& path : s.volume_paths) {
            visuals.push_back(model.embed_volume(tape, volumes.raw(path)));
        }
        return model.lm().generate(vocab, prompt, visuals, max_new);
    };
}

void write_report_json(const std::string& path, const BenchResult& result) {
    ordered_json j;
    ordered_json tasks = ordered_json::array();
    for (const auto& report : result.reports) {
        ordered_json t;
        t["task"] = task_name(report.task);
        t["n"] = report.n;
        ordered_json metrics;
        for (const auto& [name, value] : report.metrics) {
            ordered_json m;
            m["value"] = value.value;
            m["ci_low"] = value.ci_low;
            m["ci_high"] = value.ci_high;
            metrics[name] = m;
        }
        t["metrics"] = metrics;
        tasks.push_back(t);
    }
    j["tasks"] = tasks;
    j["warnings"] = result.warnings;
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("report: cannot open '" + path + "' for writing");
    os << j.dump(2) << "\n";
}

void write_records_jsonl(const std::string& path, const BenchResult& result, const Lexicon& lexicon) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("records: cannot open '" + path + "' for writing");
    for (const auto& r : result.records) {
        ordered_json j;
        j["id"] = r.id;
        j["task"] = task_name(r.task);
        j["prediction"] = r.prediction;
        j["reference"] = r.reference;
        if (r.resolved) {
            j["resolved"] = *r.resolved;
        } else {
            j["bleu1"] = bleu1(r.prediction, r.reference);
            j["rouge1"] = rouge1(r.prediction, r.reference);
            const auto [p, rr] = umls_precision_recall(r.prediction, r.reference, lexicon);
            j["umls_precision"] = p;
            j["umls_recall"] = rr;
        }
        os << j.dump() << "\n";
    }
}

std::string format_report_table(const BenchResult& result) {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof(line), "%-22s %6s  %-16s %10s  [%10s, %10s]\n", "task", "n", "metric",
                  "value", "ci_low", "ci_high");
    os << line;
    for (const auto& report : result.reports) {
        for (const auto& [name, v] : report.metrics) {
            std::snprintf(line, sizeof(line), "%-22s %6zu  %-16s %10.4f  [%10.4f, %10.4f]\n",
                          task_name(report.task), report.n, name.c_str(), v.value, v.ci_low, v.ci_high);
            os << line;
        }
    }
    for (const auto& w : result.warnings) os << "warning: " << w << "\n";
    return os.str();
}

}  // namespace ivlm
