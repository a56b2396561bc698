#include "ratfm/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace ratfm {

namespace {

static_assert(std::endian::native == std::endian::little, "RTFM I/O assumes a little-endian host");

template <class T>
void put(std::vector<std::uint8_t>& out, T value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

template <class T>
T take(const std::vector<std::uint8_t>& in, std::size_t& offset) {
  if (offset + sizeof(T) > in.size()) throw FormatError("truncated RTFM data");
  T value;
  std::memcpy(&value, in.data() + offset, sizeof(T));
  offset += sizeof(T);
  return value;
}

}  // namespace

std::vector<std::uint8_t> encode_rtfm(const Tensor& tensor) {
  std::vector<std::uint8_t> out;
  const auto& shape = tensor.shape();
  out.reserve(8 + 4 * shape.size() + 4 * tensor.size());
  for (char c : {'R', 'T', 'F', 'M'}) out.push_back(static_cast<std::uint8_t>(c));
  put<std::uint16_t>(out, kRtfmVersion);
  put<std::uint16_t>(out, static_cast<std::uint16_t>(shape.size()));
  for (auto e : shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(e));
  for (double v : tensor.data()) put<float>(out, static_cast<float>(v));
  return out;
}

Tensor decode_rtfm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "RTFM", 4) != 0) throw FormatError("bad RTFM magic");
  std::size_t offset = 4;
  const auto version = take<std::uint16_t>(bytes, offset);
  if (version != kRtfmVersion) throw FormatError("unsupported RTFM version " + std::to_string(version));
  const auto rank = take<std::uint16_t>(bytes, offset);
  if (rank == 0) throw FormatError("RTFM rank must be >= 1");
  Shape shape(rank);
  for (auto& e : shape) {
    e = take<std::uint32_t>(bytes, offset);
    if (e == 0) throw FormatError("RTFM extent must be >= 1");
  }
  const std::size_t count = element_count(shape);
  if (bytes.size() - offset != count * sizeof(float)) throw FormatError("RTFM payload size does not match shape");
  std::vector<double> values(count);
  for (auto& v : values) v = static_cast<double>(take<float>(bytes, offset));
  return Tensor::from(std::move(shape), std::move(values));
}

void write_rtfm(const std::filesystem::path& path, const Tensor& tensor) {
  const auto bytes = encode_rtfm(tensor);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Tensor read_rtfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_rtfm(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Tensor round_to_storage(const Tensor& tensor) {
  std::vector<double> values(tensor.data().begin(), tensor.data().end());
  for (auto& v : values) v = static_cast<double>(static_cast<float>(v));
  return Tensor::from(tensor.shape(), std::move(values), tensor.requires_grad());
}

}  // namespace ratfm
