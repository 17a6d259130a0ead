#include "ivlm/metrics.hpp"

#include "ivlm/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <stdexcept>

namespace ivlm {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

struct Block {
    std::size_t a, b, size;
};

// longest matching block in a[alo,ahi) x b[blo,bhi); earliest in a, then in b
Block longest_match(const std::string& a, std::size_t alo, std::size_t ahi, const std::string& b,
                    std::size_t blo, std::size_t bhi) {
    Block best{alo, blo, 0};
    std::vector<std::size_t> j2len(bhi - blo + 1, 0), next(bhi - blo + 1, 0);
    for (std::size_t i = alo; i < ahi; ++i) {
        std::fill(next.begin(), next.end(), 0);
        for (std::size_t j = blo; j < bhi; ++j) {
            if (a[i] != b[j]) continue;
            const std::size_t k = (j > blo ? j2len[j - blo - 1] : 0) + 1;
            next[j - blo] = k;
            if (k > best.size) {
                best = Block{i - k + 1, j - k + 1, k};
            }
        }
        std::swap(j2len, next);
    }
    return best;
}

std::size_t matched_chars(const std::string& a, std::size_t alo, std::size_t ahi, const std::string& b,
                          std::size_t blo, std::size_t bhi) {
    if (alo >= ahi || blo >= bhi) return 0;
    const Block m = longest_match(a, alo, ahi, b, blo, bhi);
    if (m.size == 0) return 0;
    return m.size + matched_chars(a, alo, m.a, b, blo, m.b) +
           matched_chars(a, m.a + m.size, ahi, b, m.b + m.size, bhi);
}

std::map<std::string, std::size_t> word_counts(const std::vector<std::string>& words) {
    std::map<std::string, std::size_t> out;
    for (const auto& w : words) ++out[w];
    return out;
}

}  // namespace

double similarity_ratio(const std::string& a, const std::string& b) {
    if (a.empty() && b.empty()) return 1.0;
    const std::size_t m = matched_chars(a, 0, a.size(), b, 0, b.size());
    return 2.0 * static_cast<double>(m) / static_cast<double>(a.size() + b.size());
}

std::string resolve_closed(const std::string& prediction, const std::vector<std::string>& candidates) {
    if (candidates.empty()) throw std::invalid_argument("resolve: empty candidate list");
    const std::string pred = lower(prediction);
    std::size_t best = 0;
    double best_score = -1.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const double score = similarity_ratio(pred, lower(candidates[i]));
        if (score > best_score) {
            best_score = score;
            best = i;
        }
    }
    return candidates[best];
}

double accuracy(const std::vector<std::string>& predictions, const std::vector<std::string>& references) {
    if (predictions.size() != references.size() || predictions.empty()) {
        throw std::invalid_argument("accuracy: need equal, non-empty prediction/reference lists");
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (lower(predictions[i]) == lower(references[i])) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

double binary_f1(const std::vector<std::string>& predictions, const std::vector<std::string>& references,
                 const std::string& positive) {
    if (predictions.size() != references.size() || predictions.empty()) {
        throw std::invalid_argument("f1: need equal, non-empty prediction/reference lists");
    }
    const std::string pos = lower(positive);
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const bool p = lower(predictions[i]) == pos;
        const bool r = lower(references[i]) == pos;
        if (p && r) ++tp;
        else if (p && !r) ++fp;
        else if (!p && r) ++fn;
    }
    if (tp + fp == 0 && tp + fn == 0) return 1.0;  // class absent on both sides
    const double prec = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double rec = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    if (prec + rec == 0.0) return 0.0;
    return 2.0 * prec * rec / (prec + rec);
}

double macro_f1(const std::vector<std::string>& predictions, const std::vector<std::string>& references,
                const std::vector<std::string>& classes) {
    if (classes.empty()) throw std::invalid_argument("f1: empty class list");
    double total = 0.0;
    for (const auto& c : classes) total += binary_f1(predictions, references, c);
    return total / static_cast<double>(classes.size());
}

double bleu1(const std::string& prediction, const std::string& reference) {
    const auto pred = split_words(prediction);
    if (pred.empty()) return 0.0;
    const auto ref = split_words(reference);
    const auto ref_counts = word_counts(ref);
    std::map<std::string, std::size_t> used;
    std::size_t clipped = 0;
    for (const auto& w : pred) {
        auto it = ref_counts.find(w);
        if (it != ref_counts.end() && used[w] < it->second) {
            ++used[w];
            ++clipped;
        }
    }
    const double precision = static_cast<double>(clipped) / static_cast<double>(pred.size());
    const double bp =
        std::exp(std::min(0.0, 1.0 - static_cast<double>(ref.size()) / static_cast<double>(pred.size())));
    return precision * bp;
}

double rouge1(const std::string& prediction, const std::string& reference) {
    const auto ref = split_words(reference);
    if (ref.empty()) throw std::invalid_argument("rouge: empty reference");
    const auto pred = split_words(prediction);
    const auto pred_counts = word_counts(pred);
    std::map<std::string, std::size_t> used;
    std::size_t overlap = 0;
    for (const auto& w : ref) {
        auto it = pred_counts.find(w);
        if (it != pred_counts.end() && used[w] < it->second) {
            ++used[w];
            ++overlap;
        }
    }
    return static_cast<double>(overlap) / static_cast<double>(ref.size());
}

std::pair<double, double> umls_precision_recall(const std::string& prediction,
                                                const std::string& reference, const Lexicon& lexicon) {
    const auto pred_terms = lexicon.extract_terms(split_words(prediction));
    const auto ref_terms = lexicon.extract_terms(split_words(reference));
    if (pred_terms.empty() && ref_terms.empty()) return {1.0, 1.0};
    if (pred_terms.empty()) return {0.0, 0.0};
    if (ref_terms.empty()) return {0.0, 0.0};
    auto ref_counts = word_counts(ref_terms);
    std::size_t overlap = 0;
    for (const auto& t : pred_terms) {
        auto it = ref_counts.find(t);
        if (it != ref_counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    return {static_cast<double>(overlap) / static_cast<double>(pred_terms.size()),
            static_cast<double>(overlap) / static_cast<double>(ref_terms.size())};
}

}  // namespace ivlm
