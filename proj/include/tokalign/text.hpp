#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "tokalign/matrix.hpp"

namespace tokalign {

constexpr const char* kClsToken = "[CLS]";
constexpr const char* kSepToken = "[SEP]";
constexpr const char* kUnkToken = "[UNK]";

struct Vocab {
    std::unordered_map<std::string, int> token_to_id;
    std::vector<std::string> id_to_token;
    int cls_id = -1;
    int sep_id = -1;
    int unk_id = -1;

    int size() const { return static_cast<int>(id_to_token.size()); }
};

// One token per line, line number = id. Specials must be present and unique.
Vocab load_vocab(const std::string& path);
Vocab vocab_from_tokens(const std::vector<std::string>& tokens);
void save_vocab(const std::string& path, const Vocab& vocab);

struct TokenSequence {
    std::vector<int> ids;
    std::vector<std::string> strings;

    int length() const { return static_cast<int>(ids.size()); }
};

// Lowercase, strip punctuation, split on whitespace, then greedy
// longest-match-first WordPiece with "##" continuations. Unmatchable words
// become [UNK]. Output is wrapped in [CLS]/[SEP].
TokenSequence tokenize(const std::string& text, const Vocab& vocab);

struct TeacherEmbeddings {
    Matrix matrix;  // m x d
};

// Teacher file "TCAB": u32 m, u32 d, row-major f32. expected_m < 0 skips the
// alignment check.
TeacherEmbeddings load_teacher(const std::string& path, int expected_m);
void save_teacher(const std::string& path, const Matrix& embeddings);

}  // namespace tokalign
