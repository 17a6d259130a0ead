#pragma once

#include "ivlm/corpus.hpp"
#include "ivlm/lexicon.hpp"
#include "ivlm/metrics.hpp"
#include "ivlm/model.hpp"
#include "ivlm/training.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ivlm {

struct EvalRecord {
    Task task;
    std::string id;
    std::string prediction;
    std::string reference;
    std::optional<std::vector<std::string>> closed_list;  // closed-answer tasks only
    std::optional<std::string> resolved;                  // prediction mapped onto the list
};

struct MetricValue {
    double value = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

struct MetricReport {
    Task task;
    std::size_t n = 0;
    std::vector<std::pair<std::string, MetricValue>> metrics;
};

struct BenchResult {
    std::vector<MetricReport> reports;
    std::vector<std::string> warnings;  // tasks missing from the manifest, etc.
    std::vector<EvalRecord> records;
};

using Predictor = std::function<std::string(const Sample&)>;

const std::vector<std::string>& modality_closed_list();
const std::vector<std::string>& yes_no_closed_list();

// Runs the predictor over every manifest sample, resolves closed-list
// answers, and aggregates per-task metrics with seeded 95% percentile
// bootstrap intervals (1000 resamples). Prediction may fan out over
// `threads`; aggregation is ordered by sample id, so reports are
// deterministic either way.
BenchResult run_benchmark(const std::vector<Sample>& manifest, const Lexicon& lexicon,
                          const Predictor& predictor, std::uint64_t seed, std::size_t threads = 1);

// Greedy-decoding predictor over a trained model; volumes resolve relative
// to volume_dir.
Predictor make_model_predictor(const Model& model, const Vocabulary& vocab, VolumeStore& volumes,
                               std::size_t max_new);

void write_report_json(const std::string& path, const BenchResult& result);
void write_records_jsonl(const std::string& path, const BenchResult& result, const Lexicon& lexicon);
std::string format_report_table(const BenchResult& result);

}  // namespace ivlm
