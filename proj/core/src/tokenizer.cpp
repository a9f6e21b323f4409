#include "scit/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include <nlohmann/json.hpp>

#include "scit/errors.hpp"
#include "scit/serialize.hpp"

namespace scit {

using nlohmann::json;

Tokenizer Tokenizer::build(const std::vector<std::string>& words) {
    std::set<std::string> sorted_words;
    std::set<std::string> chars;
    for (const auto& w : words) {
        if (w.empty()) continue;
        sorted_words.insert(w);
        for (char c : w) chars.insert(std::string(1, c));
    }
    // Single characters double as fallback tokens; keep them out of the word
    // section so each string appears exactly once.
    for (const auto& c : chars) sorted_words.erase(c);

    Tokenizer tok;
    tok.vocab_ = {kPad, kBos, kEos, kSep, kUnk, kSpace};
    tok.vocab_.insert(tok.vocab_.end(), chars.begin(), chars.end());
    tok.vocab_.insert(tok.vocab_.end(), sorted_words.begin(), sorted_words.end());
    tok.index_vocab();
    return tok;
}

void Tokenizer::index_vocab() {
    index_.clear();
    for (size_t i = 0; i < vocab_.size(); ++i) {
        if (!index_.emplace(vocab_[i], static_cast<int>(i)).second)
            throw ConfigError("duplicate token in vocabulary: '" + vocab_[i] + "'");
    }
    auto find = [&](const char* s) {
        auto it = index_.find(s);
        if (it == index_.end()) throw ConfigError(std::string("missing special token: ") + s);
        return it->second;
    };
    pad_id_ = find(kPad);
    bos_id_ = find(kBos);
    eos_id_ = find(kEos);
    sep_id_ = find(kSep);
    unk_id_ = find(kUnk);
    space_id_ = find(kSpace);
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
    std::vector<int> ids;
    bool first_word = true;
    size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i >= text.size()) break;
        size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        const std::string word(text.substr(i, j - i));
        if (!first_word) ids.push_back(space_id_);
        first_word = false;
        auto it = index_.find(word);
        if (it != index_.end()) {
            ids.push_back(it->second);
        } else {
            for (char c : word) {
                auto cit = index_.find(std::string(1, c));
                ids.push_back(cit != index_.end() ? cit->second : unk_id_);
            }
        }
        i = j;
    }
    return ids;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id < 0 || id >= size()) throw SerializeError("token id out of range in decode");
        if (id == pad_id_ || id == bos_id_ || id == eos_id_ || id == sep_id_) continue;
        out += vocab_[static_cast<size_t>(id)];
    }
    return out;
}

void Tokenizer::save(const std::string& path) const {
    json j;
    j["vocab"] = vocab_;
    write_text_atomic(path, j.dump(2) + "\n");
}

Tokenizer Tokenizer::load(const std::string& path) {
    json j = json::parse(read_text_file(path), nullptr, /*allow_exceptions=*/true);
    Tokenizer tok;
    tok.vocab_ = j.at("vocab").get<std::vector<std::string>>();
    tok.index_vocab();
    return tok;
}

Sha256Digest Tokenizer::content_hash() const {
    Sha256 h;
    for (const auto& t : vocab_) {
        const uint32_t n = static_cast<uint32_t>(t.size());
        h.update(&n, 4);
        h.update(t.data(), t.size());
    }
    return h.finish();
}

}  // namespace scit
