#include "spvi/tensor_io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "tensor container assumes a little-endian host");

namespace spvi {

namespace {
constexpr char kMagic[4] = {'S', 'P', 'V', 'I'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kDtypeF32 = 0;

void put_u32(std::ofstream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t get_u32(std::ifstream& is, const std::string& path) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 4))
    throw FileError("truncated tensor file: " + path);
  return v;
}
}  // namespace

void write_tensor(const std::filesystem::path& path,
                  const std::vector<std::uint32_t>& dims, const Vec& values) {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  require(static_cast<std::uint64_t>(values.size()) == n,
          "tensor payload length does not match dims");

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw FileError("cannot open for write: " + tmp.string());
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_u32(os, kDtypeF32);
    put_u32(os, static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) put_u32(os, d);
    std::vector<float> payload(values.size());
    for (Eigen::Index i = 0; i < values.size(); ++i)
      payload[static_cast<std::size_t>(i)] = static_cast<float>(values[i]);
    os.write(reinterpret_cast<const char*>(payload.data()),
             static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!os) throw FileError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

TensorFile read_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileError("cannot open tensor file: " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw ValidationError("bad tensor magic in " + path.string());
  const std::uint32_t version = get_u32(is, path.string());
  require(version == kVersion, "unsupported tensor version in " + path.string());
  const std::uint32_t dtype = get_u32(is, path.string());
  require(dtype == kDtypeF32, "unsupported tensor dtype in " + path.string());
  const std::uint32_t rank = get_u32(is, path.string());
  require(rank <= 8, "tensor rank too large in " + path.string());

  TensorFile t;
  t.dims.resize(rank);
  std::uint64_t n = 1;
  for (std::uint32_t r = 0; r < rank; ++r) {
    t.dims[r] = get_u32(is, path.string());
    n *= t.dims[r];
  }
  std::vector<float> payload(n);
  if (!is.read(reinterpret_cast<char*>(payload.data()),
               static_cast<std::streamsize>(n * sizeof(float))))
    throw FileError("truncated tensor payload: " + path.string());
  t.values.resize(static_cast<Eigen::Index>(n));
  for (std::uint64_t i = 0; i < n; ++i)
    t.values[static_cast<Eigen::Index>(i)] = static_cast<double>(payload[i]);
  return t;
}

void atomic_write_text(const std::filesystem::path& path, const std::string& text) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw FileError("cannot open for write: " + tmp.string());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!os) throw FileError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace spvi
