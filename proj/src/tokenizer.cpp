#include "kggen/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "kggen/errors.hpp"

namespace kggen {

namespace {

const char* kSpecialNames[kNumSpecial] = {"<pad>", "<s>", "</s>", "<mask>", "<unk>"};

std::string pair_key(const std::string& a, const std::string& b) { return a + '\x1f' + b; }

// Pre-tokenization: each unit is either a word, a space folded into the next
// word, or a bare space from a run. Units are byte sequences; the marker
// replaces the folded space.
std::vector<std::string> pretokenize(const std::string& text) {
    std::vector<std::string> units;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        if (text[i] == ' ') {
            if (i + 1 < n && text[i + 1] != ' ') {
                std::size_t j = i + 1;
                while (j < n && text[j] != ' ') ++j;
                units.push_back(std::string(BpeModel::kSpaceMarker) +
                                text.substr(i + 1, j - i - 1));
                i = j;
            } else {
                units.emplace_back(BpeModel::kSpaceMarker);
                ++i;
            }
        } else {
            std::size_t j = i;
            while (j < n && text[j] != ' ') ++j;
            units.push_back(text.substr(i, j - i));
            i = j;
        }
    }
    return units;
}

// A unit's base symbols: the marker (if present) then single bytes.
std::vector<std::string> unit_symbols(const std::string& unit) {
    std::vector<std::string> syms;
    std::size_t i = 0;
    const std::string marker = BpeModel::kSpaceMarker;
    if (unit.compare(0, marker.size(), marker) == 0) {
        syms.push_back(marker);
        i = marker.size();
    }
    for (; i < unit.size(); ++i) syms.push_back(std::string(1, unit[i]));
    return syms;
}

}  // namespace

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() {
    for (const char* name : kSpecialNames) add(name);
}

int Vocabulary::add(const std::string& token) {
    auto it = ids_.find(token);
    if (it != ids_.end()) return it->second;
    const int id = static_cast<int>(tokens_.size());
    tokens_.push_back(token);
    ids_.emplace(token, id);
    return id;
}

std::optional<int> Vocabulary::id_of(const std::string& token) const {
    auto it = ids_.find(token);
    if (it == ids_.end()) return std::nullopt;
    return it->second;
}

const std::string& Vocabulary::token_of(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
        throw LookupError("vocabulary id " + std::to_string(id) + " out of range");
    return tokens_[static_cast<std::size_t>(id)];
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open " + path + " for writing");
    for (const auto& t : tokens_) os << t << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open " + path);
    Vocabulary v;
    std::string line;
    int id = 0;
    while (std::getline(is, line)) {
        if (id < kNumSpecial) {
            if (line != kSpecialNames[id])
                throw DataError("vocabulary " + path + ": reserved token " +
                                std::to_string(id) + " is '" + line + "'");
        } else {
            v.add(line);
        }
        ++id;
    }
    if (id < kNumSpecial) throw DataError("vocabulary " + path + " missing reserved tokens");
    return v;
}

// ---------------------------------------------------------------------------
// BPE
// ---------------------------------------------------------------------------

BpeModel train_bpe(const std::vector<std::string>& corpus, std::size_t target_vocab_size) {
    std::map<std::vector<std::string>, std::uint64_t> unit_counts;
    std::map<std::string, bool> alphabet_set;
    for (const std::string& line : corpus) {
        for (const std::string& unit : pretokenize(line)) {
            auto syms = unit_symbols(unit);
            for (const auto& s : syms) alphabet_set[s] = true;
            ++unit_counts[std::move(syms)];
        }
    }
    if (unit_counts.empty()) throw DataError("train_bpe: empty corpus");

    BpeModel model;
    for (const auto& [sym, _] : alphabet_set) model.alphabet_.push_back(sym);

    const std::size_t base = kNumSpecial + model.alphabet_.size();
    const std::size_t n_merges = target_vocab_size > base ? target_vocab_size - base : 0;

    std::vector<std::pair<std::vector<std::string>, std::uint64_t>> units(
        unit_counts.begin(), unit_counts.end());

    for (std::size_t step = 0; step < n_merges; ++step) {
        std::map<std::pair<std::string, std::string>, std::uint64_t> pair_counts;
        for (const auto& [syms, count] : units) {
            for (std::size_t i = 0; i + 1 < syms.size(); ++i)
                pair_counts[{syms[i], syms[i + 1]}] += count;
        }
        // highest count wins; ties broken by lexicographic pair order (map order)
        std::pair<std::string, std::string> best;
        std::uint64_t best_count = 0;
        for (const auto& [pr, count] : pair_counts) {
            if (count > best_count) {
                best_count = count;
                best = pr;
            }
        }
        if (best_count < 2) break;  // no pair repeats

        model.merge_rank_.emplace(pair_key(best.first, best.second),
                                  static_cast<int>(model.merges_.size()));
        model.merges_.push_back(best);
        const std::string merged = best.first + best.second;
        for (auto& [syms, count] : units) {
            std::vector<std::string> next;
            next.reserve(syms.size());
            for (std::size_t i = 0; i < syms.size(); ++i) {
                if (i + 1 < syms.size() && syms[i] == best.first && syms[i + 1] == best.second) {
                    next.push_back(merged);
                    ++i;
                } else {
                    next.push_back(syms[i]);
                }
            }
            syms = std::move(next);
        }
    }
    return model;
}

std::vector<std::string> BpeModel::apply_merges(std::vector<std::string> symbols) const {
    while (symbols.size() > 1) {
        int best_rank = -1;
        for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
            auto it = merge_rank_.find(pair_key(symbols[i], symbols[i + 1]));
            if (it != merge_rank_.end() && (best_rank < 0 || it->second < best_rank))
                best_rank = it->second;
        }
        if (best_rank < 0) break;
        const auto& pr = merges_[static_cast<std::size_t>(best_rank)];
        const std::string merged = pr.first + pr.second;
        std::vector<std::string> next;
        next.reserve(symbols.size());
        for (std::size_t i = 0; i < symbols.size(); ++i) {
            if (i + 1 < symbols.size() && symbols[i] == pr.first && symbols[i + 1] == pr.second) {
                next.push_back(merged);
                ++i;
            } else {
                next.push_back(symbols[i]);
            }
        }
        symbols = std::move(next);
    }
    return symbols;
}

std::vector<std::string> BpeModel::split(const std::string& text) const {
    std::vector<std::string> out;
    for (const std::string& unit : pretokenize(text)) {
        for (auto& sym : apply_merges(unit_symbols(unit))) out.push_back(std::move(sym));
    }
    return out;
}

void BpeModel::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open " + path + " for writing");
    for (std::size_t i = 0; i < alphabet_.size(); ++i) {
        if (i) os << ' ';
        os << alphabet_[i];
    }
    os << '\n';
    for (const auto& [l, r] : merges_) os << l << ' ' << r << '\n';
}

BpeModel BpeModel::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open " + path);
    BpeModel model;
    std::string line;
    if (!std::getline(is, line)) throw ParseError(path + ":1: missing alphabet line");
    {
        std::istringstream ls(line);
        std::string sym;
        while (ls >> sym) model.alphabet_.push_back(sym);
    }
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto sep = line.find(' ');
        if (sep == std::string::npos || sep + 1 >= line.size())
            throw ParseError(path + ":" + std::to_string(line_no) + ": bad merge line");
        std::string l = line.substr(0, sep);
        std::string r = line.substr(sep + 1);
        model.merge_rank_.emplace(pair_key(l, r), static_cast<int>(model.merges_.size()));
        model.merges_.emplace_back(std::move(l), std::move(r));
    }
    return model;
}

Vocabulary vocabulary_from(const BpeModel& model) {
    Vocabulary v;
    for (const auto& sym : model.alphabet()) v.add(sym);
    for (const auto& [l, r] : model.merges()) v.add(l + r);
    return v;
}

std::vector<int> encode(const std::string& text, const BpeModel& model,
                        const Vocabulary& vocab) {
    std::vector<int> ids;
    for (const std::string& tok : model.split(text)) {
        auto id = vocab.id_of(tok);
        ids.push_back(id ? *id : kUnkId);
    }
    return ids;
}

std::string decode(const std::vector<int>& ids, const Vocabulary& vocab) {
    std::string out;
    for (int id : ids) {
        if (id == kPadId || id == kBosId || id == kEosId) continue;
        out += vocab.token_of(id);
    }
    // unfold the space marker
    std::string result;
    result.reserve(out.size());
    const std::string marker = BpeModel::kSpaceMarker;
    std::size_t i = 0;
    while (i < out.size()) {
        if (out.compare(i, marker.size(), marker) == 0) {
            result += ' ';
            i += marker.size();
        } else {
            result += out[i++];
        }
    }
    return result;
}

std::vector<ConceptSpan> align_concepts(const std::vector<std::string>& concepts,
                                        const std::vector<int>& encoded, const BpeModel& model,
                                        const Vocabulary& vocab) {
    if (concepts.empty()) throw AlignmentError("align_concepts: empty concept set");
    std::vector<ConceptSpan> spans;
    spans.reserve(concepts.size());
    std::size_t pos = 0;
    for (std::size_t i = 0; i < concepts.size(); ++i) {
        const std::string piece = i == 0 ? concepts[i] : " " + concepts[i];
        const std::vector<int> piece_ids = encode(piece, model, vocab);
        if (piece_ids.empty())
            throw AlignmentError("align_concepts: concept '" + concepts[i] +
                                 "' produced no tokens");
        if (pos + piece_ids.size() > encoded.size() ||
            !std::equal(piece_ids.begin(), piece_ids.end(), encoded.begin() + pos)) {
            throw AlignmentError("align_concepts: concept '" + concepts[i] +
                                 "' does not match the encoded sequence at position " +
                                 std::to_string(pos) + " (tokenizer/vocabulary mismatch)");
        }
        spans.push_back({i + 1, pos, pos + piece_ids.size()});
        pos += piece_ids.size();
    }
    if (pos != encoded.size())
        throw AlignmentError("align_concepts: trailing tokens beyond the last concept");
    return spans;
}

}  // namespace kggen
