#include "tokalign/text.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tokalign/io.hpp"

namespace tokalign {

namespace {

constexpr size_t kMaxWordChars = 100;

void register_special(Vocab& v, const std::string& tok, int id) {
    if (tok == kClsToken) v.cls_id = id;
    else if (tok == kSepToken) v.sep_id = id;
    else if (tok == kUnkToken) v.unk_id = id;
}

}  // namespace

Vocab vocab_from_tokens(const std::vector<std::string>& tokens) {
    Vocab v;
    for (const auto& tok : tokens) {
        if (v.token_to_id.count(tok))
            throw std::runtime_error("vocab: duplicate token '" + tok + "'");
        int id = static_cast<int>(v.id_to_token.size());
        v.token_to_id[tok] = id;
        v.id_to_token.push_back(tok);
        register_special(v, tok, id);
    }
    if (v.cls_id < 0 || v.sep_id < 0 || v.unk_id < 0)
        throw std::runtime_error("vocab: missing special token ([CLS]/[SEP]/[UNK])");
    return v;
}

Vocab load_vocab(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open vocab: " + path);
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(is, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        tokens.push_back(line);
    }
    return vocab_from_tokens(tokens);
}

void save_vocab(const std::string& path, const Vocab& vocab) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write vocab: " + path);
    for (const auto& tok : vocab.id_to_token) os << tok << "\n";
}

TokenSequence tokenize(const std::string& text, const Vocab& vocab) {
    // normalize: lowercase, punctuation to spaces
    std::string norm;
    norm.reserve(text.size());
    for (unsigned char c : text) {
        if (std::isalnum(c) || c == '\'' || c == '#')
            norm.push_back(static_cast<char>(std::tolower(c)));
        else
            norm.push_back(' ');
    }

    TokenSequence seq;
    seq.ids.push_back(vocab.cls_id);
    seq.strings.push_back(kClsToken);

    std::istringstream words(norm);
    std::string word;
    while (words >> word) {
        if (word.size() > kMaxWordChars) {
            seq.ids.push_back(vocab.unk_id);
            seq.strings.push_back(kUnkToken);
            continue;
        }
        std::vector<int> piece_ids;
        std::vector<std::string> piece_strs;
        size_t start = 0;
        bool ok = true;
        while (start < word.size()) {
            size_t end = word.size();
            int found = -1;
            std::string found_str;
            while (end > start) {
                std::string sub = word.substr(start, end - start);
                if (start > 0) sub = "##" + sub;
                auto it = vocab.token_to_id.find(sub);
                if (it != vocab.token_to_id.end()) {
                    found = it->second;
                    found_str = sub;
                    break;
                }
                --end;
            }
            if (found < 0) {
                ok = false;
                break;
            }
            piece_ids.push_back(found);
            piece_strs.push_back(found_str);
            start = end;
        }
        if (ok) {
            for (size_t i = 0; i < piece_ids.size(); ++i) {
                seq.ids.push_back(piece_ids[i]);
                seq.strings.push_back(piece_strs[i]);
            }
        } else {
            seq.ids.push_back(vocab.unk_id);
            seq.strings.push_back(kUnkToken);
        }
    }

    seq.ids.push_back(vocab.sep_id);
    seq.strings.push_back(kSepToken);
    return seq;
}

TeacherEmbeddings load_teacher(const std::string& path, int expected_m) {
    auto is = io::open_in(path);
    io::expect_magic(is, "TCAB", "teacher embeddings");
    uint32_t m = io::read_u32(is);
    uint32_t d = io::read_u32(is);
    if (expected_m >= 0 && static_cast<int>(m) != expected_m)
        throw std::runtime_error("teacher embeddings: row count " + std::to_string(m) +
                                 " does not match token length " + std::to_string(expected_m) +
                                 " (" + path + ")");
    TeacherEmbeddings t;
    t.matrix = Matrix(static_cast<int>(m), static_cast<int>(d));
    io::read_matrix_f32(is, t.matrix);
    for (double x : t.matrix.v)
        if (!std::isfinite(x)) throw std::runtime_error("teacher embeddings: non-finite entry in " + path);
    return t;
}

void save_teacher(const std::string& path, const Matrix& embeddings) {
    auto os = io::open_out(path);
    io::write_magic(os, "TCAB");
    io::write_u32(os, static_cast<uint32_t>(embeddings.rows));
    io::write_u32(os, static_cast<uint32_t>(embeddings.cols));
    io::write_matrix_f32(os, embeddings);
    if (!os) throw std::runtime_error("teacher write failed: " + path);
}

}  // namespace tokalign
