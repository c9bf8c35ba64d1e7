#pragma once

#include <cstdint>
#include <iosfwd>

#include "matsim/types.hpp"

namespace matsim {

// Binary matrix container: magic "PDSC", u32 version (1), u32 rows, u32 cols,
// then rows*cols float32 values in row-major order. All integers and floats are
// little-endian. Several blocks may follow each other in one stream.
inline constexpr char kPdscMagic[4] = {'P', 'D', 'S', 'C'};
inline constexpr std::uint32_t kPdscVersion = 1;

void write_pdsc(std::ostream& out, const RowMatrix& values);
RowMatrix read_pdsc(std::istream& in);

}  // namespace matsim
