#include "ivlm/lexicon.hpp"

#include "ivlm/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace ivlm {

namespace {

std::string join_words(const std::vector<std::string>& words, std::size_t start, std::size_t len) {
    std::string out;
    for (std::size_t i = 0; i < len; ++i) {
        if (i) out += ' ';
        out += words[start + i];
    }
    return out;
}

}  // namespace

Lexicon Lexicon::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("lexicon: cannot open '" + path + "'");
    std::vector<std::string> terms;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        terms.push_back(line);
    }
    if (terms.empty()) throw std::runtime_error("lexicon: '" + path + "' holds no terms");
    return from_terms(terms);
}

Lexicon Lexicon::from_terms(const std::vector<std::string>& terms) {
    Lexicon lex;
    for (const auto& t : terms) {
        // normalize through the shared word splitter so lookups agree with
        // tokenized text
        const auto words = split_words(t);
        if (words.empty()) continue;
        lex.terms_.insert(join_words(words, 0, words.size()));
        lex.max_words_ = std::max(lex.max_words_, words.size());
    }
    if (lex.terms_.empty()) throw std::invalid_argument("lexicon: no usable terms");
    return lex;
}

bool Lexicon::contains(const std::string& term) const {
    const auto words = split_words(term);
    return terms_.count(join_words(words, 0, words.size())) != 0;
}

std::vector<Lexicon::Span> Lexicon::match_spans(const std::vector<std::string>& words) const {
    std::vector<Span> spans;
    std::size_t i = 0;
    while (i < words.size()) {
        std::size_t matched = 0;
        const std::size_t cap = std::min(max_words_, words.size() - i);
        for (std::size_t n = cap; n >= 1; --n) {
            if (terms_.count(join_words(words, i, n))) {
                matched = n;
                break;
            }
        }
        if (matched > 0) {
            spans.push_back(Span{i, matched});
            i += matched;
        } else {
            ++i;
        }
    }
    return spans;
}

std::vector<std::string> Lexicon::extract_terms(const std::vector<std::string>& words) const {
    std::vector<std::string> out;
    for (const auto& s : match_spans(words)) {
        out.push_back(join_words(words, s.start, s.len));
    }
    return out;
}

}  // namespace ivlm
