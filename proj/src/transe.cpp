#include "kggen/transe.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "kggen/errors.hpp"
#include "kggen/serialize.hpp"
#include "kggen/tensor.hpp"

namespace kggen {

namespace {

double l2_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

Tensor rows_to_tensor(const std::vector<std::vector<double>>& rows, std::size_t dim) {
    std::vector<double> flat;
    flat.reserve(rows.size() * dim);
    for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    return Tensor::from({rows.size(), dim}, std::move(flat));
}

std::vector<std::vector<double>> tensor_to_rows(const Tensor& t) {
    std::vector<std::vector<double>> rows(t.rows());
    for (std::size_t r = 0; r < t.rows(); ++r) {
        rows[r].assign(t.values().begin() + static_cast<std::ptrdiff_t>(r * t.cols()),
                       t.values().begin() + static_cast<std::ptrdiff_t>((r + 1) * t.cols()));
    }
    return rows;
}

}  // namespace

void KgeTables::save(const std::string& dir, const KnowledgeGraph& kg) const {
    std::filesystem::create_directories(dir);
    save_tensor(dir + "/entities.bin", rows_to_tensor(entities, dim));
    save_tensor(dir + "/relations.bin", rows_to_tensor(relations, dim));
    std::ofstream en(dir + "/entity_names.txt");
    if (!en) throw DataError("cannot open " + dir + "/entity_names.txt for writing");
    for (std::size_t i = 0; i < kg.num_entities(); ++i) en << kg.entity_name(i) << '\n';
    std::ofstream rn(dir + "/relation_names.txt");
    if (!rn) throw DataError("cannot open " + dir + "/relation_names.txt for writing");
    for (std::size_t i = 0; i < kg.num_relations(); ++i) rn << kg.relation_name(i) << '\n';
}

KgeTables KgeTables::load(const std::string& dir) {
    KgeTables tables;
    Tensor ent = load_tensor(dir + "/entities.bin");
    Tensor rel = load_tensor(dir + "/relations.bin");
    if (ent.rank() != 2 || rel.rank() != 2 || ent.cols() != rel.cols())
        throw DataError("embedding tables in " + dir + " are inconsistent");
    tables.dim = ent.cols();
    tables.entities = tensor_to_rows(ent);
    tables.relations = tensor_to_rows(rel);
    return tables;
}

double score_triple(std::size_t head, std::size_t rel, std::size_t tail,
                    const KgeTables& tables) {
    if (head >= tables.entities.size() || tail >= tables.entities.size() ||
        rel >= tables.relations.size())
        throw LookupError("score_triple: id outside the embedding tables");
    const auto& h = tables.entities[head];
    const auto& r = tables.relations[rel];
    const auto& t = tables.entities[tail];
    double s = 0.0;
    for (std::size_t i = 0; i < tables.dim; ++i) {
        const double d = h[i] + r[i] - t[i];
        s += d * d;
    }
    return std::sqrt(s);
}

Triple negative_sample(const Triple& triple, const KnowledgeGraph& kg, Rng& rng) {
    const std::size_t n = kg.num_entities();
    if (n < 2) throw DataError("negative_sample: graph needs at least two entities");
    const bool corrupt_head = rng.coin();
    Triple out = triple;
    for (int attempt = 0; attempt < 100; ++attempt) {
        std::size_t candidate = rng.uniform_index(n);
        if (corrupt_head) {
            if (candidate == triple.head) continue;
            out.head = candidate;
        } else {
            if (candidate == triple.tail) continue;
            out.tail = candidate;
        }
        if (!kg.has_triple(out.head, out.rel, out.tail)) return out;
    }
    // saturated graph: accept an existing triple, it still differs from the input
    while (true) {
        std::size_t candidate = rng.uniform_index(n);
        if (corrupt_head && candidate != triple.head) {
            out.head = candidate;
            return out;
        }
        if (!corrupt_head && candidate != triple.tail) {
            out.tail = candidate;
            return out;
        }
    }
}

KgeTrainResult train_transe(const std::vector<Triple>& triples, const KnowledgeGraph& kg,
                            const KgeConfig& config) {
    if (triples.empty()) throw DataError("train_transe: no triples");
    if (config.epochs == 0) throw ConfigError("train_transe: epochs must be >= 1");
    if (config.margin <= 0.0) throw ConfigError("train_transe: margin must be positive");

    Rng rng(config.seed);
    const std::size_t d = config.dim;
    const double bound = 6.0 / std::sqrt(static_cast<double>(d));

    KgeTables tables;
    tables.dim = d;
    tables.entities.assign(kg.num_entities(), std::vector<double>(d));
    tables.relations.assign(kg.num_relations(), std::vector<double>(d));
    for (auto& row : tables.entities)
        for (double& v : row) v = rng.uniform(-bound, bound);
    for (auto& row : tables.relations) {
        for (double& v : row) v = rng.uniform(-bound, bound);
        const double n = l2_norm(row);
        if (n > 0.0)
            for (double& v : row) v /= n;
    }

    KgeTrainResult result;
    result.initial = tables;

    std::vector<std::size_t> order(triples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    auto scratch = std::vector<double>(d);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t idx : order) {
            const Triple& pos = triples[idx];
            for (std::size_t neg_i = 0; neg_i < config.negatives_per_positive; ++neg_i) {
                const Triple neg = negative_sample(pos, kg, rng);
                auto& h = tables.entities[pos.head];
                auto& r = tables.relations[pos.rel];
                auto& t = tables.entities[pos.tail];
                auto& hn = tables.entities[neg.head];
                auto& tn = tables.entities[neg.tail];

                double pos_score = 0.0, neg_score = 0.0;
                for (std::size_t i = 0; i < d; ++i) {
                    const double dp = h[i] + r[i] - t[i];
                    const double dn = hn[i] + r[i] - tn[i];
                    pos_score += dp * dp;
                    neg_score += dn * dn;
                }
                pos_score = std::sqrt(pos_score);
                neg_score = std::sqrt(neg_score);
                const double loss = config.margin + pos_score - neg_score;
                if (std::isnan(loss)) throw NumericError("train_transe: loss became NaN");
                if (loss <= 0.0) continue;
                epoch_loss += loss;

                const double lr = config.learning_rate;
                const double ip = pos_score > 1e-12 ? 1.0 / pos_score : 0.0;
                const double in = neg_score > 1e-12 ? 1.0 / neg_score : 0.0;
                for (std::size_t i = 0; i < d; ++i) {
                    const double gp = (h[i] + r[i] - t[i]) * ip;   // d(pos)/d(h+r-t)
                    const double gn = (hn[i] + r[i] - tn[i]) * in;
                    scratch[i] = gp - gn;  // relation takes both sides
                    h[i] -= lr * gp;
                    t[i] += lr * gp;
                    hn[i] += lr * gn;
                    tn[i] -= lr * gn;
                }
                for (std::size_t i = 0; i < d; ++i) r[i] -= lr * scratch[i];
            }
        }
        // project entities back onto the unit ball
        for (auto& row : tables.entities) {
            const double n = l2_norm(row);
            if (n > 1.0)
                for (double& v : row) v /= n;
        }
        result.epoch_loss.push_back(epoch_loss);
    }
    result.tables = std::move(tables);
    return result;
}

double filtered_mean_rank(const std::vector<Triple>& triples, const KnowledgeGraph& kg,
                          const KgeTables& tables) {
    if (triples.empty()) throw DataError("filtered_mean_rank: no triples");
    double total = 0.0;
    for (const Triple& t : triples) {
        const double true_score = score_triple(t.head, t.rel, t.tail, tables);
        std::size_t rank = 1;
        for (std::size_t e = 0; e < kg.num_entities(); ++e) {
            if (e == t.tail) continue;
            if (kg.has_triple(t.head, t.rel, e)) continue;  // filtered setting
            if (score_triple(t.head, t.rel, e, tables) < true_score) ++rank;
        }
        total += static_cast<double>(rank);
    }
    return total / static_cast<double>(triples.size());
}

}  // namespace kggen
