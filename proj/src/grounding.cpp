#include "kggen/grounding.hpp"

#include <cstring>
#include <fstream>
#include <iostream>

#include "kggen/errors.hpp"
#include "kggen/serialize.hpp"

namespace kggen {

namespace {

constexpr char kBundleMagic[4] = {'K', 'G', 'B', '1'};

void write_ids(std::ostream& os, const std::vector<std::size_t>& ids) {
    const std::uint64_t n = ids.size();
    os.write(reinterpret_cast<const char*>(&n), sizeof(n));
    for (std::size_t id : ids) {
        const std::uint64_t v = id;
        os.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
}

std::vector<std::size_t> read_ids(std::istream& is) {
    std::uint64_t n = 0;
    is.read(reinterpret_cast<char*>(&n), sizeof(n));
    if (!is) throw DataError("grounded bundle truncated");
    std::vector<std::size_t> ids(n);
    for (auto& id : ids) {
        std::uint64_t v = 0;
        is.read(reinterpret_cast<char*>(&v), sizeof(v));
        id = static_cast<std::size_t>(v);
    }
    if (!is) throw DataError("grounded bundle truncated");
    return ids;
}

std::vector<double> entity_embedding(const KgeTables& tables, std::size_t id) {
    if (id == kNoEntity) return std::vector<double>(tables.dim, 0.0);
    if (id >= tables.entities.size())
        throw GroundingError("entity id " + std::to_string(id) +
                             " missing from the embedding tables");
    return tables.entities[id];
}

}  // namespace

void GroundedGraphs::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path + " for writing");
    os.write(kBundleMagic, 4);
    write_ids(os, concept_ids);
    write_tensor(os, concept_emb);
    write_tensor(os, pair_rel);
    for (const NeighborSet& ns : neighbors) {
        write_ids(os, ns.entity_ids);
        write_ids(os, ns.relation_ids);
        write_tensor(os, ns.emb);
        write_tensor(os, ns.rel_emb);
    }
    if (!os) throw DataError("write failed for " + path);
}

GroundedGraphs GroundedGraphs::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path);
    char magic[4] = {};
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kBundleMagic, 4) != 0)
        throw DataError(path + " is not a grounded bundle (expected KGB1)");
    GroundedGraphs g;
    g.concept_ids = read_ids(is);
    g.concept_emb = read_tensor(is);
    g.pair_rel = read_tensor(is);
    g.neighbors.resize(g.concept_ids.size());
    for (NeighborSet& ns : g.neighbors) {
        ns.entity_ids = read_ids(is);
        ns.relation_ids = read_ids(is);
        ns.emb = read_tensor(is);
        ns.rel_emb = read_tensor(is);
    }
    return g;
}

GroundedGraphs build_grounded_graphs(const std::vector<std::size_t>& concept_ids,
                                     const KgeTables& tables, const KnowledgeGraph& kg,
                                     const std::vector<std::vector<RankedNeighbor>>& ranked) {
    if (concept_ids.empty()) throw GroundingError("build_grounded_graphs: empty concept set");
    if (ranked.size() != concept_ids.size())
        throw GroundingError("build_grounded_graphs: one neighbor list per concept required");
    const std::size_t k = concept_ids.size();
    const std::size_t d = tables.dim;

    GroundedGraphs g;
    g.concept_ids = concept_ids;
    std::vector<double> emb;
    emb.reserve(k * d);
    for (std::size_t id : concept_ids) {
        const auto row = entity_embedding(tables, id);
        emb.insert(emb.end(), row.begin(), row.end());
    }
    g.concept_emb = Tensor::from({k, d}, std::move(emb));

    // r_ij = v_i - v_j over all ordered pairs, self pairs included (zero).
    std::vector<double> rel(k * k * d);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
            for (std::size_t c = 0; c < d; ++c)
                rel[(i * k + j) * d + c] =
                    g.concept_emb.at(i, c) - g.concept_emb.at(j, c);
    g.pair_rel = Tensor::from({k * k, d}, std::move(rel));

    g.neighbors.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        NeighborSet& ns = g.neighbors[i];
        std::vector<double> nemb, nrel;
        for (const RankedNeighbor& rn : ranked[i]) {
            if (concept_ids[i] == kNoEntity) break;  // fallback node keeps no neighbors
            // pick the best-fitting relation when several connect the pair
            const auto connecting = kg.connecting_triples(concept_ids[i], rn.entity);
            if (connecting.empty())
                throw GroundingError("neighbor '" + kg.entity_name(rn.entity) +
                                     "' is not adjacent to concept '" +
                                     kg.entity_name(concept_ids[i]) + "'");
            std::size_t best_rel = connecting[0].rel;
            double best = score_triple(connecting[0].head, connecting[0].rel,
                                       connecting[0].tail, tables);
            for (std::size_t t = 1; t < connecting.size(); ++t) {
                const double s = score_triple(connecting[t].head, connecting[t].rel,
                                              connecting[t].tail, tables);
                if (s < best) {
                    best = s;
                    best_rel = connecting[t].rel;
                }
            }
            if (best_rel >= tables.relations.size())
                throw GroundingError("relation id " + std::to_string(best_rel) +
                                     " missing from the embedding tables");
            ns.entity_ids.push_back(rn.entity);
            ns.relation_ids.push_back(best_rel);
            const auto ev = entity_embedding(tables, rn.entity);
            nemb.insert(nemb.end(), ev.begin(), ev.end());
            const auto& rv = tables.relations[best_rel];
            nrel.insert(nrel.end(), rv.begin(), rv.end());
        }
        ns.emb = Tensor::from({ns.entity_ids.size(), d}, std::move(nemb));
        ns.rel_emb = Tensor::from({ns.entity_ids.size(), d}, std::move(nrel));
    }
    return g;
}

namespace {

std::vector<std::size_t> match_with_fallback(const std::vector<std::string>& concepts,
                                             const KnowledgeGraph& kg, bool strict) {
    if (strict) return match_concepts(concepts, kg);
    if (concepts.empty()) throw GroundingError("empty concept set");
    std::vector<std::size_t> ids;
    ids.reserve(concepts.size());
    for (const std::string& c : concepts) {
        auto id = kg.entity_id(c);
        if (id && kg.is_unigram(*id)) {
            ids.push_back(*id);
        } else {
            std::cerr << "warning: concept '" << c
                      << "' not in the knowledge graph, using a zero embedding\n";
            ids.push_back(kNoEntity);
        }
    }
    return ids;
}

}  // namespace

GroundedGraphs ground_concepts(const std::vector<std::string>& concepts,
                               const KnowledgeGraph& kg, const WordVectorTable& vectors,
                               const KgeTables& tables, const GroundingOptions& options) {
    const auto ids = match_with_fallback(concepts, kg, options.strict);
    std::vector<std::vector<RankedNeighbor>> ranked(ids.size());
    // rank real concepts only; fallback nodes have no adjacency
    std::vector<std::size_t> present;
    std::vector<std::size_t> present_pos;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] != kNoEntity && vectors.vector_of(kg.entity_name(ids[i]))) {
            present.push_back(ids[i]);
            present_pos.push_back(i);
        }
    }
    if (!present.empty()) {
        const auto lists = rank_neighbors(present, vectors, kg, options.top_k);
        for (std::size_t p = 0; p < present.size(); ++p) ranked[present_pos[p]] = lists[p];
    }
    return build_grounded_graphs(ids, tables, kg, ranked);
}

GroundedGraphs ground_concepts_bare(const std::vector<std::string>& concepts,
                                    const KnowledgeGraph& kg, const KgeTables& tables,
                                    bool strict) {
    const auto ids = match_with_fallback(concepts, kg, strict);
    return build_grounded_graphs(ids, tables, kg,
                                 std::vector<std::vector<RankedNeighbor>>(ids.size()));
}

}  // namespace kggen
