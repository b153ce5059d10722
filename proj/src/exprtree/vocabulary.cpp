#include "lemon/exprtree/vocabulary.hpp"

#include <set>

#include "lemon/common/error.hpp"

namespace lemon::expr {

namespace {

const char* kPadToken = "<pad>";
const char* kBosToken = "<bos>";
const char* kEosToken = "<eos>";

}  // namespace

Vocabulary::Vocabulary(const std::map<std::string, int>& ids, SpecialIds specials) : specials_(specials) {
    const std::size_t n = ids.size() + 3;
    id_to_token_.assign(n, {});
    std::vector<bool> used(n, false);
    auto place = [&](const std::string& tok, int id) {
        if (id < 0 || static_cast<std::size_t>(id) >= n) {
            throw VocabularyError("id " + std::to_string(id) + " for token '" + tok + "' is not dense");
        }
        if (used[static_cast<std::size_t>(id)]) {
            throw VocabularyError("id " + std::to_string(id) + " assigned twice (token '" + tok + "')");
        }
        if (!token_to_id_.emplace(tok, id).second) throw VocabularyError("duplicate token '" + tok + "'");
        used[static_cast<std::size_t>(id)] = true;
        id_to_token_[static_cast<std::size_t>(id)] = tok;
    };
    place(kPadToken, specials.pad);
    place(kBosToken, specials.bos);
    place(kEosToken, specials.eos);
    for (const auto& [tok, id] : ids) {
        if (tok == kPadToken || tok == kBosToken || tok == kEosToken) {
            throw VocabularyError("token '" + tok + "' is reserved");
        }
        place(tok, id);
    }
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
    std::map<std::string, int> ids;
    int next = 3;
    for (const auto& t : tokens) {
        if (ids.emplace(t, next).second) ++next;
    }
    return Vocabulary(ids, SpecialIds{0, 1, 2});
}

Vocabulary Vocabulary::standard(const std::vector<std::string>& leaf_names, const ConstantCodec& codec) {
    std::vector<std::string> tokens = operator_tokens();
    tokens.insert(tokens.end(), leaf_names.begin(), leaf_names.end());
    tokens.push_back("c+");
    tokens.push_back("c-");
    int lo = 1;
    for (int i = 1; i < codec.digits; ++i) lo *= 10;
    const int hi = lo * 10;
    std::string zero(static_cast<std::size_t>(codec.digits), '0');
    tokens.push_back(zero);
    for (int m = lo; m < hi; ++m) tokens.push_back(std::to_string(m));
    for (int e = codec.min_exponent; e <= codec.max_exponent; ++e) tokens.push_back("E" + std::to_string(e));
    return from_tokens(tokens);
}

bool Vocabulary::contains(const std::string& token) const { return token_to_id_.count(token) != 0; }

int Vocabulary::id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    if (it == token_to_id_.end()) throw VocabularyError("token '" + token + "' is not in the vocabulary");
    return it->second;
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || id >= size()) throw VocabularyError("id " + std::to_string(id) + " is out of range");
    return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::tokenize(const SymbolSequence& seq) const {
    std::vector<int> out;
    out.reserve(seq.size() + 2);
    out.push_back(specials_.bos);
    for (const auto& t : seq.tokens) out.push_back(id(t));
    out.push_back(specials_.eos);
    return out;
}

SymbolSequence Vocabulary::detokenize(const std::vector<int>& ids) const {
    if (ids.size() < 2 || ids.front() != specials_.bos || ids.back() != specials_.eos) {
        throw VocabularyError("id sequence is not framed by BOS/EOS");
    }
    SymbolSequence seq;
    for (std::size_t i = 1; i + 1 < ids.size(); ++i) {
        const int v = ids[i];
        if (v == specials_.pad || v == specials_.bos || v == specials_.eos) {
            throw VocabularyError("special id " + std::to_string(v) + " inside sequence at position " +
                                  std::to_string(i));
        }
        seq.tokens.push_back(token(v));
    }
    return seq;
}

std::vector<std::string> Vocabulary::ordinary_tokens() const {
    std::vector<std::string> out;
    for (int i = 0; i < size(); ++i) {
        if (i == specials_.pad || i == specials_.bos || i == specials_.eos) continue;
        out.push_back(id_to_token_[static_cast<std::size_t>(i)]);
    }
    return out;
}

}  // namespace lemon::expr
