#pragma once

#include <string>

namespace kggen {

// Rule-based suffix stripper for lowercase ASCII words; idempotent.
// Rules: ies->y; es->base when the base ends in s/x/z/ch/sh; s->base;
// ing/ed->base with doubled-consonant collapse and silent-e restoration.
std::string lemmatize(const std::string& word);

}  // namespace kggen
