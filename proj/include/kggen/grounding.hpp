#pragma once

#include <string>
#include <vector>

#include "kggen/kg.hpp"
#include "kggen/tensor.hpp"
#include "kggen/transe.hpp"

namespace kggen {

// The two grounded graphs for one concept set: the complete concept graph
// whose edge embeddings are entity-embedding differences, plus per-concept
// ranked neighbor nodes with their learned relation embeddings. All tensors
// here are frozen model inputs.
struct GroundedGraphs {
    std::vector<std::size_t> concept_ids;  // entity ids
    Tensor concept_emb;                    // k x d_e
    Tensor pair_rel;                       // (k*k) x d_e, row i*k+j = v_i - v_j

    struct NeighborSet {
        std::vector<std::size_t> entity_ids;
        std::vector<std::size_t> relation_ids;
        Tensor emb;      // n_i x d_e
        Tensor rel_emb;  // n_i x d_e
    };
    std::vector<NeighborSet> neighbors;  // one per concept

    std::size_t num_concepts() const { return concept_ids.size(); }
    std::size_t entity_dim() const { return concept_emb.cols(); }

    void save(const std::string& path) const;
    static GroundedGraphs load(const std::string& path);
};

// Missing concepts either raise GroundingError (strict) or fall back to a
// zero embedding node with id npos.
struct GroundingOptions {
    bool strict = false;
    std::size_t top_k = 5;
};

constexpr std::size_t kNoEntity = static_cast<std::size_t>(-1);

// Builds the pair of graphs from matched concepts, TransE tables and ranked
// neighbor lists. Where several relations connect a concept and a neighbor,
// the one whose triple scores best (lowest) under the tables is kept.
GroundedGraphs build_grounded_graphs(const std::vector<std::size_t>& concept_ids,
                                     const KgeTables& tables, const KnowledgeGraph& kg,
                                     const std::vector<std::vector<RankedNeighbor>>& ranked);

// Full per-set grounding: match (with fallback policy), rank, build.
GroundedGraphs ground_concepts(const std::vector<std::string>& concepts,
                               const KnowledgeGraph& kg, const WordVectorTable& vectors,
                               const KgeTables& tables, const GroundingOptions& options);

// Grounding without neighbors (empty neighbor sets); used when only the
// concept graph is needed.
GroundedGraphs ground_concepts_bare(const std::vector<std::string>& concepts,
                                    const KnowledgeGraph& kg, const KgeTables& tables,
                                    bool strict);

}  // namespace kggen
