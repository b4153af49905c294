#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "gatpos/tape.hpp"

namespace gatpos::ad {

// Versioned little-endian parameter dump:
//   magic "GPOS", u32 format (currently 1), u32 count,
//   then per parameter: u32 name_len, name bytes, u32 rows, u32 cols,
//   rows*cols float64 values.
void save_params(const std::filesystem::path& path,
                 std::span<Param* const> params);

std::vector<Param> load_params(const std::filesystem::path& path);

}  // namespace gatpos::ad
