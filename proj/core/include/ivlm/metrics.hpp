#pragma once

#include "ivlm/lexicon.hpp"

#include <string>
#include <utility>
#include <vector>

namespace ivlm {

// Ratcliff/Obershelp similarity: 2*M/(|a|+|b|) where M counts characters in
// recursively matched longest common blocks (ties resolved earliest-in-a,
// then earliest-in-b). Two empty strings compare as 1.
double similarity_ratio(const std::string& a, const std::string& b);

// Case-insensitive argmax of similarity_ratio over the candidate list; ties
// keep the earlier candidate. Returns the candidate as listed.
std::string resolve_closed(const std::string& prediction, const std::vector<std::string>& candidates);

double accuracy(const std::vector<std::string>& predictions, const std::vector<std::string>& references);

// Binary F1 with the given positive label. When neither side contains the
// positive label the score is defined as 1.
double binary_f1(const std::vector<std::string>& predictions, const std::vector<std::string>& references,
                 const std::string& positive);

// Mean of per-class binary F1 over the fixed class list.
double macro_f1(const std::vector<std::string>& predictions, const std::vector<std::string>& references,
                const std::vector<std::string>& classes);

// Clipped unigram precision times brevity penalty exp(min(0, 1-|ref|/|pred|)).
double bleu1(const std::string& prediction, const std::string& reference);

// Clipped unigram recall; errors on an empty reference.
double rouge1(const std::string& prediction, const std::string& reference);

// Overlap of lexicon-term multisets between prediction and reference,
// normalized per side. Both sides empty of medical terms -> (1,1); one side
// empty -> 0 for that side's score.
std::pair<double, double> umls_precision_recall(const std::string& prediction,
                                                const std::string& reference, const Lexicon& lexicon);

}  // namespace ivlm
