#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "spotkit/common.hpp"

namespace spot::model {

struct TokenOffset {
    int id = 0;
    std::size_t begin = 0;  // char offsets into the encoded text
    std::size_t end = 0;
};

// Closed-vocabulary word/digit/punctuation tokenizer. Every token carries
// its exact surface text (whitespace included), so decode is plain
// concatenation and encode/decode round-trips losslessly. Numbers are
// emitted digit by digit to keep the vocabulary closed.
class ToyTokenizer {
public:
    static ToyTokenizer with_default_lexicon();
    static ToyTokenizer from_table(std::vector<std::string> pieces,
                                   std::vector<bool> special_flags);

    std::vector<int> encode(const std::string& text) const;
    std::vector<TokenOffset> encode_with_offsets(const std::string& text) const;
    std::string decode(const std::vector<int>& ids) const;

    int vocab_size() const { return static_cast<int>(pieces_.size()); }
    const std::string& piece(int id) const;
    bool is_special(int id) const;
    bool contains(const std::string& piece) const { return lookup_.count(piece) > 0; }

    int pause_id() const { return pause_id_; }
    int think_open_id() const { return think_open_id_; }
    int think_close_id() const { return think_close_id_; }
    int eos_id() const { return eos_id_; }

    const std::vector<std::string>& pieces() const { return pieces_; }
    const std::vector<bool>& special_flags() const { return special_flags_; }

private:
    ToyTokenizer() = default;
    void index_specials();

    std::vector<std::string> pieces_;
    std::vector<bool> special_flags_;
    std::unordered_map<std::string, int> lookup_;
    int pause_id_ = -1;
    int think_open_id_ = -1;
    int think_close_id_ = -1;
    int eos_id_ = -1;
};

}  // namespace spot::model
