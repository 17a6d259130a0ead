#include "ivlm/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <stdexcept>

namespace ivlm {

namespace {

bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

// matches "<image-N>" starting at i; returns length or 0
std::size_t placeholder_len(const std::string& s, std::size_t i) {
    static const std::string prefix = "<image-";
    if (s.compare(i, prefix.size(), prefix) != 0) return 0;
    std::size_t j = i + prefix.size();
    std::size_t digits = 0;
    while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) {
        ++j;
        ++digits;
    }
    if (digits == 0 || j >= s.size() || s[j] != '>') return 0;
    return j + 1 - i;
}

std::size_t literal_len(const std::string& s, std::size_t i, const char* lit) {
    const std::size_t n = std::char_traits<char>::length(lit);
    return s.compare(i, n, lit) == 0 ? n : 0;
}

}  // namespace

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        const char c = text[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        if (c == '<') {
            std::size_t len = placeholder_len(text, i);
            if (len == 0) len = literal_len(text, i, "<image>");
            if (len == 0) len = literal_len(text, i, "</image>");
            if (len > 0) {
                out.push_back(text.substr(i, len));
                i += len;
                continue;
            }
        }
        if (is_word_char(c)) {
            std::size_t j = i + 1;
            while (j < n && (is_word_char(text[j]) ||
                             (text[j] == '-' && j + 1 < n && is_word_char(text[j + 1])))) {
                ++j;
            }
            std::string w = text.substr(i, j - i);
            std::transform(w.begin(), w.end(), w.begin(),
                           [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
            out.push_back(std::move(w));
            i = j;
            continue;
        }
        out.push_back(std::string(1, c));
        ++i;
    }
    return out;
}

Vocabulary::Vocabulary(std::size_t max_images) : max_images_(max_images) { add_reserved(); }

void Vocabulary::add_reserved() {
    add_word("<pad>");
    add_word("<bos>");
    add_word("<eos>");
    add_word("<unk>");
    add_word("<image>");
    add_word("</image>");
    for (std::size_t i = 1; i <= max_images_; ++i) {
        add_word("<image-" + std::to_string(i) + ">");
    }
}

int Vocabulary::add_word(const std::string& w) {
    auto [it, inserted] = index_.emplace(w, static_cast<int>(words_.size()));
    if (inserted) words_.push_back(w);
    return it->second;
}

Vocabulary Vocabulary::induce(const std::vector<std::string>& texts, std::size_t max_images) {
    Vocabulary v(max_images);
    std::set<std::string> corpus_words;
    for (const auto& t : texts) {
        for (auto& w : split_words(t)) {
            if (w.size() > 1 && w.front() == '<') continue;  // reserved forms never induced
            corpus_words.insert(std::move(w));
        }
    }
    for (const auto& w : corpus_words) v.add_word(w);
    return v;
}

Vocabulary Vocabulary::load(const std::string& path, std::size_t max_images) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("vocab: cannot open '" + path + "'");
    Vocabulary v(max_images);
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        v.add_word(line);
    }
    return v;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("vocab: cannot open '" + path + "' for writing");
    for (std::size_t i = reserved_count(); i < words_.size(); ++i) os << words_[i] << "\n";
}

int Vocabulary::id_of(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::word_of(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) {
        throw std::invalid_argument("vocab: id " + std::to_string(id) + " out of range");
    }
    return words_[static_cast<std::size_t>(id)];
}

int Vocabulary::placeholder_id(std::size_t index) const {
    if (index < 1 || index > max_images_) {
        throw std::invalid_argument("vocab: image placeholder index " + std::to_string(index) +
                                    " outside [1, " + std::to_string(max_images_) + "]");
    }
    return kPlaceholderBase + static_cast<int>(index) - 1;
}

bool Vocabulary::is_placeholder(int id) const {
    return id >= kPlaceholderBase && id < kPlaceholderBase + static_cast<int>(max_images_);
}

std::size_t Vocabulary::placeholder_index(int id) const {
    return static_cast<std::size_t>(id - kPlaceholderBase) + 1;
}

std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab) {
    std::vector<int> ids;
    ids.push_back(Vocabulary::kBos);
    for (const auto& w : split_words(text)) {
        const std::size_t plen = placeholder_len(w, 0);
        if (plen == w.size() && plen > 0) {
            const std::size_t index = std::stoul(w.substr(7, w.size() - 8));
            ids.push_back(vocab.placeholder_id(index));
        } else {
            ids.push_back(vocab.id_of(w));
        }
    }
    ids.push_back(Vocabulary::kEos);
    return ids;
}

std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab) {
    std::string out;
    for (int id : ids) {
        if (id == Vocabulary::kBos || id == Vocabulary::kEos || id == Vocabulary::kPad) continue;
        if (!out.empty()) out += ' ';
        out += vocab.word_of(id);
    }
    return out;
}

}  // namespace ivlm
