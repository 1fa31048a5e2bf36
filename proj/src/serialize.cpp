#include "kggen/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "kggen/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "tensor files are little-endian; big-endian hosts are unsupported");

namespace kggen {

namespace {

constexpr char kMagic[4] = {'K', 'G', 'T', '1'};

void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw DataError("tensor stream truncated");
    return v;
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
    os.write(kMagic, 4);
    write_u64(os, t.rank());
    for (std::size_t e : t.shape()) write_u64(os, e);
    os.write(reinterpret_cast<const char*>(t.values().data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!os) throw DataError("tensor write failed");
}

Tensor read_tensor(std::istream& is) {
    char magic[4] = {};
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("bad tensor magic (expected KGT1)");
    const std::uint64_t rank = read_u64(is);
    if (rank > 8) throw DataError("tensor rank " + std::to_string(rank) + " out of range");
    std::vector<std::size_t> shape(rank);
    std::size_t n = 1;
    for (auto& e : shape) {
        e = static_cast<std::size_t>(read_u64(is));
        n *= e;
    }
    std::vector<double> values(n);
    is.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw DataError("tensor stream truncated");
    return Tensor::from(std::move(shape), std::move(values));
}

void save_tensor(const std::string& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path + " for writing");
    write_tensor(os, t);
}

Tensor load_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path);
    return read_tensor(is);
}

}  // namespace kggen
