#include "listen/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include "listen/errors.hpp"

namespace listen::backbone {

namespace {

bool is_punct(char c) {
    switch (c) {
        case '.': case ',': case '?': case '!': case ':': case ';':
        case '(': case ')': case '[': case ']': case '"':
            return true;
        default:
            return false;
    }
}

bool no_space_before(const std::string& w) {
    return w == "." || w == "," || w == "?" || w == "!" || w == ":" || w == ";" || w == ")" || w == "]";
}

bool no_space_after(const std::string& w) { return w == "(" || w == "["; }

}  // namespace

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) out.push_back(std::move(cur));
        cur.clear();
    };
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            flush();
        } else if (is_punct(c)) {
            flush();
            out.emplace_back(1, c);
        } else {
            cur.push_back(c);
        }
    }
    flush();
    return out;
}

std::string join_words(const std::vector<std::string>& words) {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i > 0 && !no_space_before(words[i]) && !no_space_after(words[i - 1])) out += ' ';
        out += words[i];
    }
    return out;
}

const std::vector<std::string>& Vocab::specials() {
    static const std::vector<std::string> kSpecials = {"<pad>", "<bos>", "<eos>", "<unk>", "<audio>", "<sep>"};
    return kSpecials;
}

Vocab::Vocab() {
    for (const auto& s : specials()) {
        index_[s] = static_cast<int>(tokens_.size());
        tokens_.push_back(s);
    }
}

Vocab Vocab::build(const std::vector<std::string>& lines) {
    std::set<std::string> words;
    for (const auto& line : lines)
        for (auto& w : split_words(line)) words.insert(std::move(w));
    Vocab v;
    for (const auto& w : words) {
        if (v.index_.count(w)) continue;
        v.index_[w] = static_cast<int>(v.tokens_.size());
        v.tokens_.push_back(w);
    }
    return v;
}

Vocab Vocab::from_json(const nlohmann::json& j) {
    const auto tokens = j.get<std::vector<std::string>>();
    if (tokens.size() < specials().size() || !std::equal(specials().begin(), specials().end(), tokens.begin()))
        throw FormatError("vocab must start with the reserved specials");
    Vocab v;
    for (std::size_t i = specials().size(); i < tokens.size(); ++i) {
        if (!v.index_.emplace(tokens[i], static_cast<int>(v.tokens_.size())).second)
            throw FormatError("duplicate vocab entry '" + tokens[i] + "'");
        v.tokens_.push_back(tokens[i]);
    }
    return v;
}

nlohmann::json Vocab::to_json() const { return tokens_; }

void Vocab::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << to_json().dump(1) << "\n";
}

Vocab Vocab::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read vocab " + path.string());
    return from_json(nlohmann::json::parse(in));
}

int Vocab::id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || id >= size()) throw LookupError("token id " + std::to_string(id) + " out of range");
    return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::tokenize(const std::string& text) const {
    std::vector<int> ids;
    for (const auto& w : split_words(text)) {
        const int i = id(w);
        ids.push_back(i < static_cast<int>(specials().size()) ? kUnk : i);
    }
    return ids;
}

std::string Vocab::detokenize(const std::vector<int>& ids) const {
    std::vector<std::string> words;
    for (int i : ids) {
        if (i == kUnk) words.push_back("<unk>");
        else if (i >= static_cast<int>(specials().size())) words.push_back(token(i));
    }
    return join_words(words);
}

}  // namespace listen::backbone
