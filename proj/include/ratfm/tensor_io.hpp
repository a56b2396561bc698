#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ratfm/tensor.hpp"

namespace ratfm {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// RTFM tensor file: "RTFM", u16 version, u16 rank, rank x u32 extents, float32 payload.
// All integers and floats little-endian; values are rounded to float32 on write.
inline constexpr std::uint16_t kRtfmVersion = 1;

std::vector<std::uint8_t> encode_rtfm(const Tensor& tensor);
Tensor decode_rtfm(const std::vector<std::uint8_t>& bytes);

void write_rtfm(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_rtfm(const std::filesystem::path& path);

/// Rounds every value through float32, i.e. what a write/read cycle would produce.
Tensor round_to_storage(const Tensor& tensor);

}  // namespace ratfm
