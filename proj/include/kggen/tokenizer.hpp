#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace kggen {

// Reserved token ids. Everything else comes from the trained subword model.
enum SpecialToken : int {
    kPadId = 0,
    kBosId = 1,
    kEosId = 2,
    kMaskId = 3,
    kUnkId = 4,
    kNumSpecial = 5,
};

class Vocabulary {
  public:
    Vocabulary();

    int add(const std::string& token);  // returns existing id if already present
    std::optional<int> id_of(const std::string& token) const;
    const std::string& token_of(int id) const;
    std::size_t size() const { return tokens_.size(); }

    void save(const std::string& path) const;  // one token per line, line = id
    static Vocabulary load(const std::string& path);

  private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

// Byte-pair encoding over whitespace pre-tokens. A leading space is folded
// into the following word as the marker symbol, GPT-2 style, so token strings
// never contain a literal space and decode(encode(s)) == s over the base
// alphabet.
class BpeModel {
  public:
    static constexpr const char* kSpaceMarker = "\xc4\xa0";  // 'Ġ'

    const std::vector<std::string>& alphabet() const { return alphabet_; }
    const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }

    // Splits text into marker-prefixed units and applies merges within each.
    std::vector<std::string> split(const std::string& text) const;

    void save(const std::string& path) const;
    static BpeModel load(const std::string& path);

    friend BpeModel train_bpe(const std::vector<std::string>& corpus,
                              std::size_t target_vocab_size);

  private:
    std::vector<std::string> alphabet_;
    std::vector<std::pair<std::string, std::string>> merges_;
    std::unordered_map<std::string, int> merge_rank_;  // "left\x1fright" -> rank

    std::vector<std::string> apply_merges(std::vector<std::string> symbols) const;
};

// Greedy highest-frequency pair merging until the target vocabulary size
// (reserved + alphabet + merges) is reached or no pair repeats.
BpeModel train_bpe(const std::vector<std::string>& corpus, std::size_t target_vocab_size);

Vocabulary vocabulary_from(const BpeModel& model);

std::vector<int> encode(const std::string& text, const BpeModel& model,
                        const Vocabulary& vocab);
std::string decode(const std::vector<int>& ids, const Vocabulary& vocab);

// Half-open subword range of one concept inside the encoder token sequence.
struct ConceptSpan {
    std::size_t concept_index = 0;  // 1-based
    std::size_t start = 0;
    std::size_t end = 0;
    std::size_t width() const { return end - start; }
    bool operator==(const ConceptSpan&) const = default;
};

// The encoder input is the concept words joined by single spaces, in dataset
// order; spans partition its tokens.
std::vector<ConceptSpan> align_concepts(const std::vector<std::string>& concepts,
                                        const std::vector<int>& encoded, const BpeModel& model,
                                        const Vocabulary& vocab);

}  // namespace kggen
