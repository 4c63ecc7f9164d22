#pragma once

#include <array>
#include <string_view>

namespace spot::model::lexicon {

// Word lists shared by the tokenizer and the synthetic corpus generator.
// The tokenizer vocabulary is closed over exactly these pieces plus digits,
// punctuation, whitespace, and the special tokens.

inline constexpr std::array<std::string_view, 12> kNames = {
    "Tom", "Anna", "Ben", "Carla", "David", "Emma",
    "Felix", "Grace", "Henry", "Ivy", "Jack", "Lena",
};

inline constexpr std::array<std::string_view, 10> kItems = {
    "apples", "pears", "coins", "marbles", "books",
    "stickers", "cards", "shells", "stones", "pencils",
};

inline constexpr std::array<std::string_view, 43> kTemplateWords = {
    "has",   "Then",  "buys",  "more",       "gives",  "away",  "loses", "finds",
    "the",   "amount", "is",   "multiplied", "by",     "How",   "many",  "does",
    "have",  "now",   "Start", "with",       "So",     "result", "Answer",
    "and",   "give",  "add",   "to",         "plus",   "makes", "from",  "minus",
    "leaves", "take", "times", "double",     "Begin",  "at",    "First", "we",
    "get",   "final", "count", "The",
};

inline constexpr std::array<std::string_view, 10> kPunctuation = {
    ".", ",", "?", "+", "-", "=", "*", ":", " ", "\n",
};

// Numbers are whole tokens; the corpus generator keeps every value inside
// [0, kMaxNumber] so the vocabulary stays closed.
inline constexpr int kMaxNumber = 150;

}  // namespace spot::model::lexicon
