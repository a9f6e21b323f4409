#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "scit/sha256.hpp"

namespace scit {

// Whitespace-plus-character hybrid tokenizer over a closed alphabet.
//
// encode() splits on runs of whitespace; each word maps to its own id when it
// is in the vocabulary, otherwise to its characters (unknown characters map
// to <unk>). A literal space token joins consecutive words, so decode() is a
// plain concatenation and round-trips any single-spaced in-vocab text.
class Tokenizer {
public:
    static constexpr const char* kPad = "<pad>";
    static constexpr const char* kBos = "<bos>";
    static constexpr const char* kEos = "<eos>";
    static constexpr const char* kSep = "<sep>";
    static constexpr const char* kUnk = "<unk>";
    static constexpr const char* kSpace = " ";

    // Builds a vocabulary from the given word list. Words are deduplicated
    // and sorted; the characters of every word are added as fallback tokens.
    static Tokenizer build(const std::vector<std::string>& words);

    std::vector<int> encode(std::string_view text) const;
    std::string decode(const std::vector<int>& ids) const;

    int size() const { return static_cast<int>(vocab_.size()); }
    const std::vector<std::string>& vocab() const { return vocab_; }
    const std::string& token(int id) const { return vocab_.at(static_cast<size_t>(id)); }

    int pad_id() const { return pad_id_; }
    int bos_id() const { return bos_id_; }
    int eos_id() const { return eos_id_; }
    int sep_id() const { return sep_id_; }
    int unk_id() const { return unk_id_; }
    int space_id() const { return space_id_; }

    void save(const std::string& path) const;
    static Tokenizer load(const std::string& path);

    Sha256Digest content_hash() const;

private:
    void index_vocab();

    std::vector<std::string> vocab_;
    std::unordered_map<std::string, int> index_;
    int pad_id_ = 0, bos_id_ = 0, eos_id_ = 0, sep_id_ = 0, unk_id_ = 0, space_id_ = 0;
};

}  // namespace scit
