#include "matsim/pdsc.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <vector>

#include "matsim/errors.hpp"

namespace matsim {
namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    const std::array<char, 4> bytes = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                       static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(bytes.data(), 4);
}

std::uint32_t get_u32(std::istream& in) {
    std::array<unsigned char, 4> b{};
    in.read(reinterpret_cast<char*>(b.data()), 4);
    if (!in) throw ValidationError("PDSC: truncated header");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_pdsc(std::ostream& out, const RowMatrix& values) {
    out.write(kPdscMagic, 4);
    put_u32(out, kPdscVersion);
    put_u32(out, static_cast<std::uint32_t>(values.rows()));
    put_u32(out, static_cast<std::uint32_t>(values.cols()));
    std::vector<char> buffer(static_cast<std::size_t>(values.size()) * 4);
    for (Index i = 0; i < values.size(); ++i) {
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(values.data()[i]));
        for (int k = 0; k < 4; ++k) buffer[static_cast<std::size_t>(i) * 4 + k] = static_cast<char>((bits >> (8 * k)) & 0xff);
    }
    out.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    if (!out) throw ComputeError("PDSC: write failed");
}

RowMatrix read_pdsc(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kPdscMagic, 4) != 0) throw ValidationError("PDSC: bad magic bytes");
    const auto version = get_u32(in);
    if (version != kPdscVersion) throw ValidationError("PDSC: unsupported version " + std::to_string(version));
    const auto rows = get_u32(in);
    const auto cols = get_u32(in);
    std::vector<unsigned char> buffer(static_cast<std::size_t>(rows) * cols * 4);
    in.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(buffer.size()));
    if (!in) throw ValidationError("PDSC: truncated payload (expected " + std::to_string(rows) + "x" +
                                   std::to_string(cols) + " values)");
    RowMatrix values(rows, cols);
    for (Index i = 0; i < values.size(); ++i) {
        const std::size_t o = static_cast<std::size_t>(i) * 4;
        const std::uint32_t bits = static_cast<std::uint32_t>(buffer[o]) | (static_cast<std::uint32_t>(buffer[o + 1]) << 8) |
                                   (static_cast<std::uint32_t>(buffer[o + 2]) << 16) |
                                   (static_cast<std::uint32_t>(buffer[o + 3]) << 24);
        const float v = std::bit_cast<float>(bits);
        if (!std::isfinite(v)) {
            throw ValidationError("PDSC: non-finite value at row " + std::to_string(i / cols) + ", column " +
                                  std::to_string(i % cols));
        }
        values.data()[i] = v;
    }
    return values;
}

}  // namespace matsim
