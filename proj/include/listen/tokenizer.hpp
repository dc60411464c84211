#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace listen::backbone {

// Word-level tokenisation:
//   1. split on ASCII whitespace;
//   2. each of . , ? ! : ; ( ) [ ] " becomes its own token; runs of other
//      characters (letters, digits, apostrophes, hyphens) form word tokens.
// Detokenisation joins with single spaces, except: no space before
// . , ? ! : ; ) ] and no space after ( [.
std::vector<std::string> split_words(const std::string& text);
std::string join_words(const std::vector<std::string>& words);

class Vocab {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;
    static constexpr int kAudio = 4;  // placeholder for audio positions
    static constexpr int kSep = 5;    // separates prompt from response
    static const std::vector<std::string>& specials();

    Vocab();
    // Specials first, then the distinct words of `lines` in lexicographic order.
    static Vocab build(const std::vector<std::string>& lines);
    static Vocab from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    void save(const std::filesystem::path& path) const;
    static Vocab load(const std::filesystem::path& path);

    int size() const { return static_cast<int>(tokens_.size()); }
    int id(const std::string& token) const;  // kUnk when absent
    const std::string& token(int id) const;
    bool contains(const std::string& token) const { return index_.count(token) > 0; }

    // Text -> ids. Unknown words (and literal special strings) map to kUnk.
    std::vector<int> tokenize(const std::string& text) const;
    // Ids -> text; special tokens are skipped.
    std::string detokenize(const std::vector<int>& ids) const;

private:
    std::vector<std::string> tokens_;
    std::map<std::string, int> index_;
};

}  // namespace listen::backbone
