#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kggen/kg.hpp"
#include "kggen/rng.hpp"

namespace kggen {

// Entity/relation embedding tables; entity rows live inside the unit ball
// after every training epoch. Entity and relation dimensions are tied: the
// score h + r - t and the pairwise difference relations both need one space.
struct KgeTables {
    std::size_t dim = 0;
    std::vector<std::vector<double>> entities;
    std::vector<std::vector<double>> relations;

    void save(const std::string& dir, const KnowledgeGraph& kg) const;
    static KgeTables load(const std::string& dir);
};

struct KgeConfig {
    std::size_t dim = 32;
    double margin = 1.0;
    double learning_rate = 0.01;
    std::size_t epochs = 200;
    std::size_t negatives_per_positive = 1;
    std::uint64_t seed = 1;
};

// L2 norm of (v_h + r - v_t).
double score_triple(std::size_t head, std::size_t rel, std::size_t tail,
                    const KgeTables& tables);

// Replaces head or tail (coin flip) with a uniform random entity; retries a
// bounded number of times to avoid known triples, always avoids returning the
// input triple itself.
Triple negative_sample(const Triple& triple, const KnowledgeGraph& kg, Rng& rng);

struct KgeTrainResult {
    KgeTables tables;
    KgeTables initial;  // snapshot before training, for rank comparisons
    std::vector<double> epoch_loss;
};

// Margin ranking loss, SGD, uniform negative sampling, embeddings initialized
// uniform in [-6/sqrt(d), 6/sqrt(d)]; entities projected to the unit ball
// after each epoch.
KgeTrainResult train_transe(const std::vector<Triple>& triples, const KnowledgeGraph& kg,
                            const KgeConfig& config);

// Mean rank of the true tail among all entities, skipping other entities that
// also complete a known triple.
double filtered_mean_rank(const std::vector<Triple>& triples, const KnowledgeGraph& kg,
                          const KgeTables& tables);

}  // namespace kggen
