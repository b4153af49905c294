#include "gatpos/params_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "gatpos/errors.hpp"

namespace gatpos::ad {

static_assert(std::endian::native == std::endian::little,
              "parameter dump assumes a little-endian host");

namespace {

constexpr std::uint32_t kFormat = 1;

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (!in) throw FormatError("params: truncated file");
  return v;
}

}  // namespace

void save_params(const std::filesystem::path& path,
                 std::span<Param* const> params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write " + path.string());
  out.write("GPOS", 4);
  write_u32(out, kFormat);
  write_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const Param* p : params) {
    write_u32(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    write_u32(out, static_cast<std::uint32_t>(p->rows));
    write_u32(out, static_cast<std::uint32_t>(p->cols));
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
}

std::vector<Param> load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "GPOS", 4) != 0)
    throw FormatError(path.string() + ": bad magic");
  if (read_u32(in) != kFormat)
    throw FormatError(path.string() + ": unsupported format version");
  const std::uint32_t count = read_u32(in);
  std::vector<Param> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const std::uint32_t rows = read_u32(in);
    const std::uint32_t cols = read_u32(in);
    Param p(std::move(name), static_cast<int>(rows), static_cast<int>(cols));
    in.read(reinterpret_cast<char*>(p.value.data()),
            static_cast<std::streamsize>(p.value.size() * sizeof(double)));
    if (!in) throw FormatError(path.string() + ": truncated data");
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace gatpos::ad
