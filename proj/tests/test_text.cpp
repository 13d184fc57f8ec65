#include <cstdio>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "tokalign/text.hpp"

using namespace tokalign;

namespace {
Vocab small_vocab() {
    return vocab_from_tokens({"[CLS]", "[SEP]", "[UNK]", "turn", "on", "the", "light", "##s"});
}
}  // namespace

TEST_CASE("vocab validation") {
    CHECK(small_vocab().size() == 8);
    CHECK_THROWS(vocab_from_tokens({"[CLS]", "[UNK]", "a"}));            // missing [SEP]
    CHECK_THROWS(vocab_from_tokens({"[CLS]", "[SEP]", "[UNK]", "a", "a"}));  // duplicate

    std::ofstream("test_vocab.txt") << "[CLS]\n[SEP]\n[UNK]\nhello\n";
    Vocab v = load_vocab("test_vocab.txt");
    CHECK(v.size() == 4);
    CHECK(v.cls_id == 0);
    CHECK(v.token_to_id.at("hello") == 3);
    std::remove("test_vocab.txt");
}

TEST_CASE("wordpiece tokenization") {
    Vocab v = small_vocab();
    SUBCASE("greedy longest match with continuation") {
        TokenSequence t = tokenize("turn on the lights", v);
        REQUIRE(t.length() == 7);
        CHECK(t.strings[0] == "[CLS]");
        CHECK(t.strings[1] == "turn");
        CHECK(t.strings[4] == "light");
        CHECK(t.strings[5] == "##s");
        CHECK(t.strings[6] == "[SEP]");
    }
    SUBCASE("empty string") {
        TokenSequence t = tokenize("", v);
        REQUIRE(t.length() == 2);
        CHECK(t.ids[0] == v.cls_id);
        CHECK(t.ids[1] == v.sep_id);
    }
    SUBCASE("unmatchable word becomes [UNK]") {
        TokenSequence t = tokenize("zzz on", v);
        REQUIRE(t.length() == 4);
        CHECK(t.ids[1] == v.unk_id);
        CHECK(t.strings[2] == "on");
    }
    SUBCASE("lowercasing and punctuation stripping") {
        TokenSequence t = tokenize("Turn ON, the light!", v);
        REQUIRE(t.length() == 6);
        CHECK(t.strings[1] == "turn");
        CHECK(t.strings[2] == "on");
    }
    SUBCASE("round-trip for fully covered strings") {
        TokenSequence t = tokenize("the lights turn on", v);
        std::string joined;
        for (int i = 1; i + 1 < t.length(); ++i) {
            std::string s = t.strings[i];
            if (s.rfind("##", 0) == 0) {
                joined += s.substr(2);
            } else {
                if (!joined.empty()) joined += " ";
                joined += s;
            }
        }
        CHECK(joined == "the lights turn on");
    }
}

TEST_CASE("teacher embedding files") {
    Matrix m(3, 4);
    for (size_t i = 0; i < m.v.size(); ++i) m.v[i] = 0.25 * static_cast<double>(i);
    save_teacher("test_teacher.tcab", m);

    SUBCASE("happy path with length check") {
        TeacherEmbeddings t = load_teacher("test_teacher.tcab", 3);
        CHECK(t.matrix.rows == 3);
        CHECK(t.matrix.cols == 4);
        CHECK(t.matrix.at(2, 3) == doctest::Approx(0.25 * 11));
    }
    SUBCASE("row count mismatch flags tokenizer drift") {
        CHECK_THROWS_WITH_AS(load_teacher("test_teacher.tcab", 4), doctest::Contains("token length"),
                             std::runtime_error);
    }
    SUBCASE("non-finite entries rejected") {
        Matrix bad = m;
        bad.at(1, 1) = std::numeric_limits<double>::quiet_NaN();
        save_teacher("test_teacher.tcab", bad);
        CHECK_THROWS(load_teacher("test_teacher.tcab", 3));
    }
    std::remove("test_teacher.tcab");
}
