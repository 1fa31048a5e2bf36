#include "kggen/lemmatizer.hpp"

namespace kggen {

namespace {

bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }
bool is_consonant(char c) { return c >= 'a' && c <= 'z' && !is_vowel(c); }

bool ends_with(const std::string& w, const char* suffix) {
    const std::size_t n = std::string(suffix).size();
    return w.size() >= n && w.compare(w.size() - n, n, suffix) == 0;
}

// Letters that commonly double before -ing/-ed (run/running); ll, ss, ff, zz
// stay (fall/falling, miss/missed).
bool undoublable(char c) {
    switch (c) {
        case 'b':
        case 'd':
        case 'g':
        case 'm':
        case 'n':
        case 'p':
        case 'r':
        case 't':
            return true;
        default:
            return false;
    }
}

std::string strip_participle(std::string base) {
    const std::size_t n = base.size();
    if (n >= 3 && base[n - 1] == base[n - 2] && undoublable(base[n - 1])) {
        base.pop_back();
        return base;
    }
    // make -> mak -> make; skip when the shape is not consonant-vowel-consonant
    if (n >= 3 && is_consonant(base[n - 1]) && base[n - 1] != 'w' && base[n - 1] != 'x' &&
        base[n - 1] != 'y' && is_vowel(base[n - 2]) && is_consonant(base[n - 3])) {
        base += 'e';
    }
    return base;
}

}  // namespace

std::string lemmatize(const std::string& word) {
    const std::string& w = word;
    if (w.size() > 4 && ends_with(w, "ies")) return w.substr(0, w.size() - 3) + "y";
    if (w.size() > 3 && ends_with(w, "es")) {
        const std::string base = w.substr(0, w.size() - 2);
        // sibilant bases take the full -es; a single trailing s falls through
        // to the plain -s rule so "houses" stays idempotent ("house")
        if (ends_with(base, "ss") || ends_with(base, "x") || ends_with(base, "z") ||
            ends_with(base, "ch") || ends_with(base, "sh"))
            return base;
        return w.substr(0, w.size() - 1);  // makes -> make
    }
    if (w.size() > 3 && ends_with(w, "s") && !ends_with(w, "ss"))
        return w.substr(0, w.size() - 1);
    if (w.size() > 5 && ends_with(w, "ing")) return strip_participle(w.substr(0, w.size() - 3));
    if (w.size() > 4 && ends_with(w, "ed")) return strip_participle(w.substr(0, w.size() - 2));
    return w;
}

}  // namespace kggen
