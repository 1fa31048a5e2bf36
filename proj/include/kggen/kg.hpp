#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace kggen {

struct Triple {
    std::size_t head = 0, rel = 0, tail = 0;
    auto operator<=>(const Triple&) const = default;
};

enum class Pos { Noun, Verb, Adjective, Adverb };

Pos pos_from_string(const std::string& name);
std::string pos_to_string(Pos p);

// Interned entity/relation vocabularies plus a deduplicated triple list with
// both-direction adjacency.
class KnowledgeGraph {
  public:
    std::size_t add_entity(const std::string& name);
    std::size_t add_relation(const std::string& name);
    bool add_triple(std::size_t head, std::size_t rel, std::size_t tail);  // false if dup

    std::optional<std::size_t> entity_id(const std::string& name) const;
    std::optional<std::size_t> relation_id(const std::string& name) const;
    const std::string& entity_name(std::size_t id) const;
    const std::string& relation_name(std::size_t id) const;
    bool is_unigram(std::size_t entity) const;

    std::size_t num_entities() const { return entity_names_.size(); }
    std::size_t num_relations() const { return relation_names_.size(); }
    const std::vector<Triple>& triples() const { return triples_; }
    bool has_triple(std::size_t h, std::size_t r, std::size_t t) const;

    struct Edge {
        std::size_t rel, other;
    };
    const std::vector<Edge>& out_edges(std::size_t entity) const;
    const std::vector<Edge>& in_edges(std::size_t entity) const;

    // Entities adjacent in either direction, excluding the entity itself,
    // deduplicated and sorted ascending.
    std::vector<std::size_t> neighbors(std::size_t entity) const;
    // All triples connecting a and b, either direction.
    std::vector<Triple> connecting_triples(std::size_t a, std::size_t b) const;

    // Tab-separated "subject<TAB>relation<TAB>object[<TAB>weight]" lines.
    static KnowledgeGraph load_triples(const std::string& path);
    void save_triples(const std::string& path) const;

  private:
    std::vector<std::string> entity_names_;
    std::vector<std::string> relation_names_;
    std::unordered_map<std::string, std::size_t> entity_ids_;
    std::unordered_map<std::string, std::size_t> relation_ids_;
    std::vector<Triple> triples_;
    std::unordered_set<std::uint64_t> triple_keys_;
    std::vector<std::vector<Edge>> out_;
    std::vector<std::vector<Edge>> in_;
};

class WordVectorTable {
  public:
    std::size_t dim() const { return dim_; }
    const std::vector<double>* vector_of(const std::string& word) const;
    void insert(const std::string& word, std::vector<double> vec);

    // "word v1 v2 ... vd" per line.
    static WordVectorTable load(const std::string& path);

  private:
    std::size_t dim_ = 0;
    std::unordered_map<std::string, std::vector<double>> vectors_;
};

class PosLexicon {
  public:
    void insert(const std::string& word, Pos tag);
    bool has(const std::string& word, Pos tag) const;

    // "word<TAB>tags", tags comma- or space-separated.
    static PosLexicon load(const std::string& path);

  private:
    std::unordered_map<std::string, std::vector<Pos>> tags_;
};

// Each concept must resolve to exactly one unigram entity; throws
// GroundingError naming the first missing concept (callers may choose the
// zero-embedding fallback instead).
std::vector<std::size_t> match_concepts(const std::vector<std::string>& concepts,
                                        const KnowledgeGraph& kg);

// Union over ordered concept pairs of all triples lying on a simple path of
// length <= max_hops between them, edges walked in both directions. Sorted and
// deduplicated.
std::vector<Triple> collect_path_triples(const std::vector<std::size_t>& concept_ids,
                                         const KnowledgeGraph& kg, std::size_t max_hops = 3);

// Noun concepts keep adjective neighbors, verb concepts keep adverb
// neighbors; other neighbors drop out.
std::vector<Triple> collect_pos_neighbor_triples(const std::vector<std::size_t>& concept_ids,
                                                 const std::vector<Pos>& concept_pos,
                                                 const KnowledgeGraph& kg,
                                                 const PosLexicon& lexicon);

struct RankedNeighbor {
    std::size_t entity = 0;
    double score = 0.0;
};

// Score of a neighbor = sum over all concepts of cosine(neighbor, concept);
// per concept the top_k highest keep, ties broken by entity id ascending.
// Neighbors without word vectors are skipped; zero vectors score 0.
std::vector<std::vector<RankedNeighbor>> rank_neighbors(
    const std::vector<std::size_t>& concept_ids, const WordVectorTable& vectors,
    const KnowledgeGraph& kg, std::size_t top_k);

}  // namespace kggen
