#pragma once

#include <iosfwd>
#include <string>

#include "kggen/tensor.hpp"

namespace kggen {

// Binary tensor format: magic "KGT1", u64 rank, u64 extents, row-major f64,
// all little-endian.
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

}  // namespace kggen
