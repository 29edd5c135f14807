#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "abhe/tensor.hpp"

namespace abhe {

/// Named-tensor container used for checkpoints and datasets.
///
/// Layout (all integers little-endian):
///   "ABHE1"                       5-byte magic
///   repeated until end of file:
///     u32   name length
///     bytes name (UTF-8, no terminator)
///     u32   rank
///     u64   extent, rank times
///     f32   payload, product(extents) values, row-major
struct NamedTensor {
  std::string name;
  Tensor tensor;
};

inline constexpr char kContainerMagic[] = "ABHE1";

std::vector<std::uint8_t> encode_container(std::span<const NamedTensor> entries);
/// Throws IoError on a bad magic, truncated entry, or implausible header.
std::vector<NamedTensor> decode_container(std::span<const std::uint8_t> bytes);

void write_container(const std::filesystem::path& path, std::span<const NamedTensor> entries);
std::vector<NamedTensor> read_container(const std::filesystem::path& path);

}  // namespace abhe
