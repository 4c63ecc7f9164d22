#include "spotkit/tokenizer.hpp"

#include <cctype>

#include "spotkit/lexicon.hpp"
#include "spotkit/text_spans.hpp"

namespace spot::model {

namespace {

bool is_word_char(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_digit_char(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

}  // namespace

ToyTokenizer ToyTokenizer::with_default_lexicon() {
    std::vector<std::string> pieces;
    std::vector<bool> special;
    auto add = [&](const std::string& piece, bool is_special) {
        pieces.push_back(piece);
        special.push_back(is_special);
    };
    // Special tokens live at fixed low ids.
    add(spans::kPauseText, true);
    add(spans::kThinkOpen, true);
    add(spans::kThinkClose, true);
    add("<eos>", true);
    for (int n = 0; n <= lexicon::kMaxNumber; ++n) add(std::to_string(n), false);
    for (auto p : lexicon::kPunctuation) add(std::string(p), false);
    for (auto w : lexicon::kNames) add(std::string(w), false);
    for (auto w : lexicon::kItems) add(std::string(w), false);
    for (auto w : lexicon::kTemplateWords) add(std::string(w), false);
    return from_table(std::move(pieces), std::move(special));
}

ToyTokenizer ToyTokenizer::from_table(std::vector<std::string> pieces,
                                      std::vector<bool> special_flags) {
    if (pieces.size() != special_flags.size()) {
        fail(ErrorCode::invalid_argument, "tokenizer: pieces/special flag size mismatch");
    }
    ToyTokenizer tk;
    tk.pieces_ = std::move(pieces);
    tk.special_flags_ = std::move(special_flags);
    for (std::size_t i = 0; i < tk.pieces_.size(); ++i) {
        const auto [it, inserted] = tk.lookup_.emplace(tk.pieces_[i], static_cast<int>(i));
        if (!inserted) {
            fail(ErrorCode::invalid_argument, "tokenizer: duplicate piece \"" + tk.pieces_[i] + "\"");
        }
    }
    tk.index_specials();
    return tk;
}

void ToyTokenizer::index_specials() {
    auto find = [&](const char* piece) {
        const auto it = lookup_.find(piece);
        return it == lookup_.end() ? -1 : it->second;
    };
    pause_id_ = find(spans::kPauseText);
    think_open_id_ = find(spans::kThinkOpen);
    think_close_id_ = find(spans::kThinkClose);
    eos_id_ = find("<eos>");
    if (pause_id_ < 0 || think_open_id_ < 0 || think_close_id_ < 0 || eos_id_ < 0) {
        fail(ErrorCode::invalid_argument, "tokenizer: table is missing a required special token");
    }
}

std::vector<TokenOffset> ToyTokenizer::encode_with_offsets(const std::string& text) const {
    // Longest-match parse with backtracking, so any concatenation of
    // vocabulary pieces re-tokenizes (generated text may lack separators).
    // Failed start positions are memoized, keeping the scan linear-ish.
    const std::size_t n = text.size();
    std::vector<TokenOffset> out;
    std::vector<char> dead(n + 1, 0);

    auto candidates_at = [&](std::size_t i) {
        // Longest match first. Word pieces extend over the letter run at i;
        // otherwise single characters and literal specials apply.
        std::vector<int> ids;
        if (text[i] == '<') {
            for (int id : {pause_id_, think_open_id_, think_close_id_}) {
                const std::string& piece = pieces_[static_cast<std::size_t>(id)];
                if (text.compare(i, piece.size(), piece) == 0) ids.push_back(id);
            }
        }
        if (is_word_char(text[i]) || is_digit_char(text[i])) {
            const bool digits = is_digit_char(text[i]);
            std::size_t run_end = i;
            while (run_end < n &&
                   (digits ? is_digit_char(text[run_end]) : is_word_char(text[run_end]))) {
                ++run_end;
            }
            for (std::size_t j = run_end; j > i; --j) {
                const auto it = lookup_.find(text.substr(i, j - i));
                if (it != lookup_.end()) ids.push_back(it->second);
            }
        } else if (text[i] != '<' || ids.empty()) {
            const auto it = lookup_.find(text.substr(i, 1));
            if (it != lookup_.end()) ids.push_back(it->second);
        }
        return ids;
    };

    std::size_t i = 0;
    while (i < n) {
        bool advanced = false;
        for (int id : candidates_at(i)) {
            const std::size_t next = i + pieces_[static_cast<std::size_t>(id)].size();
            if (dead[next]) continue;
            out.push_back({id, i, next});
            i = next;
            advanced = true;
            break;
        }
        if (!advanced) {
            dead[i] = 1;
            if (out.empty()) {
                fail(ErrorCode::invalid_argument,
                     "tokenizer: no vocabulary piece matches at offset " + std::to_string(i) +
                         " (\"" + text.substr(i, std::min<std::size_t>(12, n - i)) + "\")");
            }
            i = out.back().begin;
            out.pop_back();
        }
    }
    return out;
}

std::vector<int> ToyTokenizer::encode(const std::string& text) const {
    std::vector<int> ids;
    for (const auto& t : encode_with_offsets(text)) ids.push_back(t.id);
    return ids;
}

std::string ToyTokenizer::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id == eos_id_) continue;
        out += piece(id);
    }
    return out;
}

const std::string& ToyTokenizer::piece(int id) const {
    if (id < 0 || id >= vocab_size()) {
        fail(ErrorCode::invalid_argument, "tokenizer: id out of range");
    }
    return pieces_[static_cast<std::size_t>(id)];
}

bool ToyTokenizer::is_special(int id) const {
    if (id < 0 || id >= vocab_size()) {
        fail(ErrorCode::invalid_argument, "tokenizer: id out of range");
    }
    return special_flags_[static_cast<std::size_t>(id)];
}

}  // namespace spot::model
