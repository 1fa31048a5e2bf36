#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "kggen/errors.hpp"
#include "kggen/lemmatizer.hpp"
#include "kggen/rng.hpp"
#include "kggen/tokenizer.hpp"

using namespace kggen;

TEST_CASE("bpe training examples") {
    // "aaaa": the only repeated pair is (a,a)
    BpeModel m1 = train_bpe({"aaaa"}, kNumSpecial + 1 + 1);
    REQUIRE(m1.merges().size() == 1);
    CHECK(m1.merges()[0].first == "a");
    CHECK(m1.merges()[0].second == "a");

    // target == reserved + alphabet: character tokenizer, no merges
    BpeModel m2 = train_bpe({"abc"}, kNumSpecial + 3);
    CHECK(m2.merges().empty());
    CHECK(m2.alphabet().size() == 3);

    // "ab ab ab": (a,b) appears 3 times, beats the marker pairs
    BpeModel m3 = train_bpe({"ab ab ab"}, kNumSpecial + 4 + 1);
    REQUIRE(!m3.merges().empty());
    CHECK(m3.merges()[0].first == "a");
    CHECK(m3.merges()[0].second == "b");

    CHECK_THROWS_AS(train_bpe({}, 100), DataError);
    CHECK_THROWS_AS(train_bpe({""}, 100), DataError);
}

TEST_CASE("encode basics and round trip") {
    BpeModel model = train_bpe({"the cat sat on the mat", "a cat ate the rat"}, 40);
    Vocabulary vocab = vocabulary_from(model);
    CHECK(vocab.size() >= kNumSpecial + model.alphabet().size());

    CHECK(encode("", model, vocab).empty());

    Rng rng(41);
    const std::string letters = "catshemora ";
    for (int trial = 0; trial < 100; ++trial) {
        std::string s;
        const std::size_t len = 1 + rng.uniform_index(20);
        for (std::size_t i = 0; i < len; ++i)
            s += letters[rng.uniform_index(letters.size())];
        CHECK(decode(encode(s, model, vocab), vocab) == s);
    }

    // unknown base symbol maps to UNK
    auto ids = encode("cat!", model, vocab);
    CHECK(std::count(ids.begin(), ids.end(), kUnkId) == 1);
}

TEST_CASE("vocabulary reserved ids and file round trip") {
    Vocabulary v;
    CHECK(v.size() == 5);
    CHECK(*v.id_of("<pad>") == kPadId);
    CHECK(*v.id_of("<s>") == kBosId);
    CHECK(*v.id_of("</s>") == kEosId);
    CHECK(*v.id_of("<mask>") == kMaskId);
    CHECK(*v.id_of("<unk>") == kUnkId);
    v.add("hello");
    const auto path = std::filesystem::temp_directory_path() / "kggen_vocab_test.txt";
    v.save(path.string());
    Vocabulary w = Vocabulary::load(path.string());
    CHECK(w.size() == v.size());
    CHECK(*w.id_of("hello") == 5);
    std::filesystem::remove(path);
}

TEST_CASE("bpe model file round trip") {
    BpeModel model = train_bpe({"fisherman fishes for fish"}, 60);
    const auto path = std::filesystem::temp_directory_path() / "kggen_bpe_test.txt";
    model.save(path.string());
    BpeModel back = BpeModel::load(path.string());
    CHECK(back.alphabet() == model.alphabet());
    CHECK(back.merges() == model.merges());
    Vocabulary vocab = vocabulary_from(model);
    CHECK(encode("fisherman fishes", back, vocab) == encode("fisherman fishes", model, vocab));
    std::filesystem::remove(path);
}

TEST_CASE("concept alignment") {
    BpeModel model = train_bpe({"dog cat fisherman net river"}, 5 + 14 + 6);
    Vocabulary vocab = vocabulary_from(model);

    SUBCASE("single concept single span") {
        auto ids = encode("dog", model, vocab);
        auto spans = align_concepts({"dog"}, ids, model, vocab);
        REQUIRE(spans.size() == 1);
        CHECK(spans[0].concept_index == 1);
        CHECK(spans[0].start == 0);
        CHECK(spans[0].end == ids.size());
    }

    SUBCASE("multi subword concept covered by one span") {
        auto ids = encode("fisherman", model, vocab);
        REQUIRE(ids.size() >= 2);  // tiny merge budget forces a split
        auto spans = align_concepts({"fisherman"}, ids, model, vocab);
        REQUIRE(spans.size() == 1);
        CHECK(spans[0].width() == ids.size());
    }

    SUBCASE("spans partition the sequence in order") {
        std::vector<std::string> concepts{"dog", "cat", "net", "river"};
        auto ids = encode("dog cat net river", model, vocab);
        auto spans = align_concepts(concepts, ids, model, vocab);
        REQUIRE(spans.size() == 4);
        std::size_t pos = 0;
        for (std::size_t i = 0; i < spans.size(); ++i) {
            CHECK(spans[i].concept_index == i + 1);
            CHECK(spans[i].start == pos);
            CHECK(spans[i].width() >= 1);
            pos = spans[i].end;
        }
        CHECK(pos == ids.size());
    }

    SUBCASE("mismatch raises alignment error") {
        auto ids = encode("dog cat", model, vocab);
        CHECK_THROWS_AS(align_concepts({"cat", "dog"}, ids, model, vocab), AlignmentError);
        CHECK_THROWS_AS(align_concepts({"dog"}, ids, model, vocab), AlignmentError);
    }
}

TEST_CASE("lemmatizer rules") {
    CHECK(lemmatize("catches") == "catch");
    CHECK(lemmatize("dog") == "dog");
    CHECK(lemmatize("running") == "run");
    CHECK(lemmatize("cities") == "city");
    CHECK(lemmatize("flies") == "fly");
    CHECK(lemmatize("boxes") == "box");
    CHECK(lemmatize("makes") == "make");
    CHECK(lemmatize("dogs") == "dog");
    CHECK(lemmatize("glass") == "glass");
    CHECK(lemmatize("making") == "make");
    CHECK(lemmatize("walked") == "walk");
    CHECK(lemmatize("falling") == "fall");
    CHECK(lemmatize("swims") == "swim");
    CHECK(lemmatize("swimming") == "swim");
    CHECK(lemmatize("treated") == "treat");
    CHECK(lemmatize("holds") == "hold");
}

TEST_CASE("lemmatizer is idempotent over a lexicon") {
    const std::vector<std::string> lexicon{
        "catches", "dog",     "running", "cities", "flies",  "boxes",  "makes",
        "dogs",    "glasses", "making",  "walked", "walks",  "eats",   "eating",
        "throws",  "threw",   "climbs",  "climbing", "holds", "holding", "watches",
        "watched", "rivers",  "trees",   "houses", "birds",  "busses", "jumped",
        "jumping", "swimming", "stopped", "tries",  "tried",  "goes",   "seeing"};
    for (const auto& w : lexicon) {
        const std::string once = lemmatize(w);
        CHECK(lemmatize(once) == once);
    }
}
