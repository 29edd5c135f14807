#include "abhe/container.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "abhe/error.hpp"

namespace abhe {

namespace {

constexpr std::size_t kMagicSize = 5;
constexpr std::uint32_t kMaxRank = 16;
constexpr std::uint32_t kMaxName = 1u << 16;

template <class T>
void put(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::uint8_t bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(bytes), std::end(bytes));
  out.insert(out.end(), std::begin(bytes), std::end(bytes));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  template <class T>
  T get(const char* what) {
    need(sizeof(T), what);
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(raw), std::end(raw));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }

  std::string string(std::size_t n) {
    need(n, "name");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw IoError(std::string("container truncated while reading ") + what + " at byte " + std::to_string(pos_));
    }
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_container(std::span<const NamedTensor> entries) {
  std::vector<std::uint8_t> out(kContainerMagic, kContainerMagic + kMagicSize);
  for (const auto& e : entries) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.tensor.rank()));
    for (int64_t extent : e.tensor.shape()) put<std::uint64_t>(out, static_cast<std::uint64_t>(extent));
    for (float v : e.tensor.data()) put<float>(out, v);
  }
  return out;
}

std::vector<NamedTensor> decode_container(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagicSize || std::memcmp(bytes.data(), kContainerMagic, kMagicSize) != 0) {
    throw IoError("not an ABHE1 container (bad magic)");
  }
  Reader r(bytes.subspan(kMagicSize));
  std::vector<NamedTensor> entries;
  while (!r.done()) {
    const auto name_len = r.get<std::uint32_t>("name length");
    if (name_len > kMaxName) throw IoError("container entry name length " + std::to_string(name_len) + " is implausible");
    NamedTensor e;
    e.name = r.string(name_len);
    const auto rank = r.get<std::uint32_t>("rank");
    if (rank == 0 || rank > kMaxRank) throw IoError("container entry '" + e.name + "' has invalid rank " + std::to_string(rank));
    Shape shape;
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const auto extent = r.get<std::uint64_t>("extent");
      if (extent == 0 || extent > (1ull << 40)) throw IoError("container entry '" + e.name + "' has invalid extent");
      shape.push_back(static_cast<int64_t>(extent));
      count *= extent;
    }
    r.need(count * sizeof(float), "payload");
    std::vector<float> values(count);
    for (auto& v : values) v = r.get<float>("payload");
    e.tensor = Tensor::from_vector(std::move(shape), std::move(values));
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_container(const std::filesystem::path& path, std::span<const NamedTensor> entries) {
  const auto bytes = encode_container(entries);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing " + path.string());
}

std::vector<NamedTensor> read_container(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return decode_container(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace abhe
