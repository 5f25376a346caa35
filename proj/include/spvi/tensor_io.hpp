#ifndef SPVI_TENSOR_IO_HPP
#define SPVI_TENSOR_IO_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spvi/common.hpp"

namespace spvi {

// Container format: magic "SPVI", u32 version, u32 dtype (0 = float32),
// u32 rank, u32 dims[rank], then row-major little-endian float32 payload.
struct TensorFile {
  std::vector<std::uint32_t> dims;
  Vec values;  // payload widened to double for internal use

  std::uint64_t size() const {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

void write_tensor(const std::filesystem::path& path,
                  const std::vector<std::uint32_t>& dims, const Vec& values);
TensorFile read_tensor(const std::filesystem::path& path);

// Atomic write: write to <path>.tmp then rename.
void atomic_write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace spvi

#endif
