#pragma once

#include <cstddef>
#include <string>
#include <unordered_set>
#include <vector>

namespace ivlm {

// Medical term list used for loss weighting and the precision/recall
// metrics. Terms are lowercase, single- or multi-word; matching over a word
// sequence is greedy longest-first.
class Lexicon {
public:
    struct Span {
        std::size_t start;  // word index
        std::size_t len;    // words covered
    };

    static Lexicon load(const std::string& path);
    static Lexicon from_terms(const std::vector<std::string>& terms);

    std::size_t size() const { return terms_.size(); }
    std::size_t max_term_words() const { return max_words_; }
    bool contains(const std::string& term) const;

    // non-overlapping matches, scanning left to right, longest term first
    std::vector<Span> match_spans(const std::vector<std::string>& words) const;

    // canonical matched terms (multi-word terms joined by single spaces)
    std::vector<std::string> extract_terms(const std::vector<std::string>& words) const;

private:
    std::unordered_set<std::string> terms_;
    std::size_t max_words_ = 0;
};

}  // namespace ivlm
