#include "kggen/kg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "kggen/errors.hpp"

namespace kggen {

Pos pos_from_string(const std::string& name) {
    if (name == "noun" || name == "n") return Pos::Noun;
    if (name == "verb" || name == "v") return Pos::Verb;
    if (name == "adj" || name == "adjective" || name == "a") return Pos::Adjective;
    if (name == "adv" || name == "adverb" || name == "r") return Pos::Adverb;
    throw ConfigError("unknown part-of-speech tag '" + name + "'");
}

std::string pos_to_string(Pos p) {
    switch (p) {
        case Pos::Noun:
            return "noun";
        case Pos::Verb:
            return "verb";
        case Pos::Adjective:
            return "adj";
        case Pos::Adverb:
            return "adv";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// KnowledgeGraph
// ---------------------------------------------------------------------------

namespace {

std::uint64_t triple_key(std::size_t h, std::size_t r, std::size_t t) {
    // graphs here stay far below 2^21 entities/relations
    return (static_cast<std::uint64_t>(h) << 42) | (static_cast<std::uint64_t>(r) << 21) |
           static_cast<std::uint64_t>(t);
}

}  // namespace

std::size_t KnowledgeGraph::add_entity(const std::string& name) {
    auto it = entity_ids_.find(name);
    if (it != entity_ids_.end()) return it->second;
    const std::size_t id = entity_names_.size();
    entity_names_.push_back(name);
    entity_ids_.emplace(name, id);
    out_.emplace_back();
    in_.emplace_back();
    return id;
}

std::size_t KnowledgeGraph::add_relation(const std::string& name) {
    auto it = relation_ids_.find(name);
    if (it != relation_ids_.end()) return it->second;
    const std::size_t id = relation_names_.size();
    relation_names_.push_back(name);
    relation_ids_.emplace(name, id);
    return id;
}

bool KnowledgeGraph::add_triple(std::size_t head, std::size_t rel, std::size_t tail) {
    if (head >= num_entities() || tail >= num_entities() || rel >= num_relations())
        throw LookupError("add_triple: unresolved id");
    if (!triple_keys_.insert(triple_key(head, rel, tail)).second) return false;
    triples_.push_back({head, rel, tail});
    out_[head].push_back({rel, tail});
    in_[tail].push_back({rel, head});
    return true;
}

std::optional<std::size_t> KnowledgeGraph::entity_id(const std::string& name) const {
    auto it = entity_ids_.find(name);
    if (it == entity_ids_.end()) return std::nullopt;
    return it->second;
}

std::optional<std::size_t> KnowledgeGraph::relation_id(const std::string& name) const {
    auto it = relation_ids_.find(name);
    if (it == relation_ids_.end()) return std::nullopt;
    return it->second;
}

const std::string& KnowledgeGraph::entity_name(std::size_t id) const {
    if (id >= entity_names_.size()) throw LookupError("entity id out of range");
    return entity_names_[id];
}

const std::string& KnowledgeGraph::relation_name(std::size_t id) const {
    if (id >= relation_names_.size()) throw LookupError("relation id out of range");
    return relation_names_[id];
}

bool KnowledgeGraph::is_unigram(std::size_t entity) const {
    const std::string& name = entity_name(entity);
    return name.find('_') == std::string::npos && name.find(' ') == std::string::npos;
}

bool KnowledgeGraph::has_triple(std::size_t h, std::size_t r, std::size_t t) const {
    return triple_keys_.count(triple_key(h, r, t)) != 0;
}

const std::vector<KnowledgeGraph::Edge>& KnowledgeGraph::out_edges(std::size_t entity) const {
    if (entity >= out_.size()) throw LookupError("entity id out of range");
    return out_[entity];
}

const std::vector<KnowledgeGraph::Edge>& KnowledgeGraph::in_edges(std::size_t entity) const {
    if (entity >= in_.size()) throw LookupError("entity id out of range");
    return in_[entity];
}

std::vector<std::size_t> KnowledgeGraph::neighbors(std::size_t entity) const {
    std::vector<std::size_t> out;
    for (const Edge& e : out_edges(entity))
        if (e.other != entity) out.push_back(e.other);
    for (const Edge& e : in_edges(entity))
        if (e.other != entity) out.push_back(e.other);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<Triple> KnowledgeGraph::connecting_triples(std::size_t a, std::size_t b) const {
    std::vector<Triple> out;
    for (const Edge& e : out_edges(a))
        if (e.other == b) out.push_back({a, e.rel, b});
    for (const Edge& e : out_edges(b))
        if (e.other == a) out.push_back({b, e.rel, a});
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

KnowledgeGraph KnowledgeGraph::load_triples(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open " + path);
    KnowledgeGraph kg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::size_t start = 0;
        while (true) {
            const std::size_t tab = line.find('\t', start);
            cols.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (cols.size() < 3 || cols[0].empty() || cols[1].empty() || cols[2].empty())
            throw ParseError(path + ":" + std::to_string(line_no) +
                             ": expected subject<TAB>relation<TAB>object");
        const std::size_t h = kg.add_entity(cols[0]);
        const std::size_t r = kg.add_relation(cols[1]);
        const std::size_t t = kg.add_entity(cols[2]);
        kg.add_triple(h, r, t);  // duplicate lines collapse
    }
    return kg;
}

void KnowledgeGraph::save_triples(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open " + path + " for writing");
    for (const Triple& t : triples_)
        os << entity_names_[t.head] << '\t' << relation_names_[t.rel] << '\t'
           << entity_names_[t.tail] << '\n';
}

// ---------------------------------------------------------------------------
// WordVectorTable / PosLexicon
// ---------------------------------------------------------------------------

const std::vector<double>* WordVectorTable::vector_of(const std::string& word) const {
    auto it = vectors_.find(word);
    return it == vectors_.end() ? nullptr : &it->second;
}

void WordVectorTable::insert(const std::string& word, std::vector<double> vec) {
    if (dim_ == 0) dim_ = vec.size();
    if (vec.size() != dim_)
        throw DataError("word vector for '" + word + "' has dimension " +
                        std::to_string(vec.size()) + ", expected " + std::to_string(dim_));
    for (double v : vec)
        if (!std::isfinite(v)) throw DataError("word vector for '" + word + "' is not finite");
    vectors_[word] = std::move(vec);
}

WordVectorTable WordVectorTable::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open " + path);
    WordVectorTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        std::vector<double> vec;
        double v;
        while (ls >> v) vec.push_back(v);
        if (word.empty() || vec.empty())
            throw ParseError(path + ":" + std::to_string(line_no) + ": bad vector line");
        table.insert(word, std::move(vec));
    }
    return table;
}

void PosLexicon::insert(const std::string& word, Pos tag) {
    auto& tags = tags_[word];
    if (std::find(tags.begin(), tags.end(), tag) == tags.end()) tags.push_back(tag);
}

bool PosLexicon::has(const std::string& word, Pos tag) const {
    auto it = tags_.find(word);
    if (it == tags_.end()) return false;
    return std::find(it->second.begin(), it->second.end(), tag) != it->second.end();
}

PosLexicon PosLexicon::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open " + path);
    PosLexicon lex;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos || tab == 0)
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected word<TAB>tags");
        const std::string word = line.substr(0, tab);
        std::string tags = line.substr(tab + 1);
        std::replace(tags.begin(), tags.end(), ',', ' ');
        std::istringstream ts(tags);
        std::string tag;
        while (ts >> tag) lex.insert(word, pos_from_string(tag));
    }
    return lex;
}

// ---------------------------------------------------------------------------
// grounding queries
// ---------------------------------------------------------------------------

std::vector<std::size_t> match_concepts(const std::vector<std::string>& concepts,
                                        const KnowledgeGraph& kg) {
    if (concepts.empty()) throw GroundingError("match_concepts: empty concept set");
    std::vector<std::size_t> ids;
    ids.reserve(concepts.size());
    for (const std::string& c : concepts) {
        auto id = kg.entity_id(c);
        if (!id || !kg.is_unigram(*id))
            throw GroundingError("concept '" + c + "' has no unigram entity in the graph");
        ids.push_back(*id);
    }
    return ids;
}

namespace {

// DFS over simple paths a -> b (undirected walk), collecting the triples of
// every edge step on complete paths.
void path_dfs(std::size_t current, std::size_t target, std::size_t hops_left,
              const KnowledgeGraph& kg, std::vector<std::size_t>& trail,
              std::vector<bool>& on_trail, std::vector<Triple>& collected) {
    if (current == target) {
        for (std::size_t i = 0; i + 1 < trail.size(); ++i) {
            for (const Triple& t : kg.connecting_triples(trail[i], trail[i + 1]))
                collected.push_back(t);
        }
        return;
    }
    if (hops_left == 0) return;
    for (std::size_t next : kg.neighbors(current)) {
        if (on_trail[next]) continue;
        on_trail[next] = true;
        trail.push_back(next);
        path_dfs(next, target, hops_left - 1, kg, trail, on_trail, collected);
        trail.pop_back();
        on_trail[next] = false;
    }
}

}  // namespace

std::vector<Triple> collect_path_triples(const std::vector<std::size_t>& concept_ids,
                                         const KnowledgeGraph& kg, std::size_t max_hops) {
    if (max_hops < 1 || max_hops > 3)
        throw ConfigError("collect_path_triples: max_hops must be 1, 2 or 3");
    std::vector<Triple> collected;
    for (std::size_t a : concept_ids) {
        for (std::size_t b : concept_ids) {
            if (a == b) continue;
            std::vector<std::size_t> trail{a};
            std::vector<bool> on_trail(kg.num_entities(), false);
            on_trail[a] = true;
            path_dfs(a, b, max_hops, kg, trail, on_trail, collected);
        }
    }
    std::sort(collected.begin(), collected.end());
    collected.erase(std::unique(collected.begin(), collected.end()), collected.end());
    return collected;
}

std::vector<Triple> collect_pos_neighbor_triples(const std::vector<std::size_t>& concept_ids,
                                                 const std::vector<Pos>& concept_pos,
                                                 const KnowledgeGraph& kg,
                                                 const PosLexicon& lexicon) {
    if (concept_pos.size() != concept_ids.size())
        throw ConfigError("collect_pos_neighbor_triples: every concept needs a noun/verb tag");
    std::vector<Triple> collected;
    for (std::size_t i = 0; i < concept_ids.size(); ++i) {
        if (concept_pos[i] != Pos::Noun && concept_pos[i] != Pos::Verb)
            throw ConfigError("concept '" + kg.entity_name(concept_ids[i]) +
                              "' must be tagged noun or verb");
        const Pos wanted = concept_pos[i] == Pos::Noun ? Pos::Adjective : Pos::Adverb;
        const std::size_t c = concept_ids[i];
        for (std::size_t n : kg.neighbors(c)) {
            if (!lexicon.has(kg.entity_name(n), wanted)) continue;
            for (const Triple& t : kg.connecting_triples(c, n)) collected.push_back(t);
        }
    }
    std::sort(collected.begin(), collected.end());
    collected.erase(std::unique(collected.begin(), collected.end()), collected.end());
    return collected;
}

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

std::vector<std::vector<RankedNeighbor>> rank_neighbors(
    const std::vector<std::size_t>& concept_ids, const WordVectorTable& vectors,
    const KnowledgeGraph& kg, std::size_t top_k) {
    std::vector<const std::vector<double>*> concept_vecs;
    concept_vecs.reserve(concept_ids.size());
    for (std::size_t c : concept_ids) {
        const auto* v = vectors.vector_of(kg.entity_name(c));
        if (!v)
            throw GroundingError("concept '" + kg.entity_name(c) + "' has no word vector");
        concept_vecs.push_back(v);
    }
    std::vector<std::vector<RankedNeighbor>> result(concept_ids.size());
    if (top_k == 0) return result;
    for (std::size_t i = 0; i < concept_ids.size(); ++i) {
        std::vector<RankedNeighbor> scored;
        for (std::size_t n : kg.neighbors(concept_ids[i])) {
            const auto* nv = vectors.vector_of(kg.entity_name(n));
            if (!nv) continue;
            double score = 0.0;
            for (const auto* cv : concept_vecs) score += cosine(*nv, *cv);
            scored.push_back({n, score});
        }
        std::sort(scored.begin(), scored.end(), [](const RankedNeighbor& a,
                                                   const RankedNeighbor& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.entity < b.entity;
        });
        if (scored.size() > top_k) scored.resize(top_k);
        result[i] = std::move(scored);
    }
    return result;
}

}  // namespace kggen
