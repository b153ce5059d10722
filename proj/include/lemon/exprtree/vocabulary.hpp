#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "lemon/exprtree/polish.hpp"

namespace lemon::expr {

struct SpecialIds {
    int pad = 0;
    int bos = 1;
    int eos = 2;
};

/// Token <-> integer id map. Ids are dense from 0 and include the specials.
class Vocabulary {
public:
    /// `ids` maps ordinary tokens to ids; specials occupy the remaining ids.
    /// Throws VocabularyError unless the union is a bijection onto [0, n).
    Vocabulary(const std::map<std::string, int>& ids, SpecialIds specials);

    /// Specials take ids 0..2, then `tokens` in order (duplicates ignored).
    static Vocabulary from_tokens(const std::vector<std::string>& tokens);

    /// Operators + given leaf names + constant sign/mantissa/exponent tokens.
    static Vocabulary standard(const std::vector<std::string>& leaf_names,
                               const ConstantCodec& codec = {});

    int size() const noexcept { return static_cast<int>(id_to_token_.size()); }
    const SpecialIds& specials() const noexcept { return specials_; }
    bool contains(const std::string& token) const;
    int id(const std::string& token) const;
    const std::string& token(int id) const;

    /// [BOS, ids..., EOS]. Unknown tokens raise VocabularyError naming the token.
    std::vector<int> tokenize(const SymbolSequence& seq) const;
    /// Inverse of tokenize; requires the BOS/EOS framing.
    SymbolSequence detokenize(const std::vector<int>& ids) const;

    /// Ordinary tokens in id order (specials excluded).
    std::vector<std::string> ordinary_tokens() const;

private:
    std::unordered_map<std::string, int> token_to_id_;
    std::vector<std::string> id_to_token_;
    SpecialIds specials_;
};

}  // namespace lemon::expr
