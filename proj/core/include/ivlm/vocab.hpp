#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace ivlm {

// Lowercased word/punctuation tokens. `<image-N>`, `<image>` and `</image>`
// survive as single tokens; alphanumeric runs (with interior hyphens) form
// words; any other visible character is its own token.
std::vector<std::string> split_words(const std::string& text);

// Word-level vocabulary with a reserved prefix: PAD, BOS, EOS, UNK, the two
// image sentinels, then `max_images` placeholder tokens. Corpus words follow.
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;
    static constexpr int kImgOpen = 4;
    static constexpr int kImgClose = 5;
    static constexpr int kPlaceholderBase = 6;

    explicit Vocabulary(std::size_t max_images = 8);

    // builds the word list from corpus text, sorted for stable ids
    static Vocabulary induce(const std::vector<std::string>& texts, std::size_t max_images = 8);

    // one induced word per line; reserved tokens are implicit
    static Vocabulary load(const std::string& path, std::size_t max_images = 8);
    void save(const std::string& path) const;

    std::size_t size() const { return words_.size(); }
    std::size_t max_images() const { return max_images_; }
    std::size_t reserved_count() const { return kPlaceholderBase + max_images_; }

    int id_of(const std::string& word) const;  // kUnk when absent
    const std::string& word_of(int id) const;

    int placeholder_id(std::size_t index) const;  // 1-based image index
    bool is_placeholder(int id) const;
    std::size_t placeholder_index(int id) const;  // 1-based

private:
    void add_reserved();
    int add_word(const std::string& w);
    std::size_t max_images_;
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
};

// [BOS, word ids..., EOS]; placeholders map to their reserved ids.
std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab);

// Inverse presentation: tokens joined by single spaces, control tokens
// dropped. Identity on canonical in-vocabulary text.
std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab);

}  // namespace ivlm
