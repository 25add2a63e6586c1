// SPDX-License-Identifier: Apache-2.0
#include "rcf/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <fstream>
#include <iterator>
#include <type_traits>

#include <zlib.h>

#include "rcf/errors.hpp"

namespace rcf {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'R', 'C', 'F', 'K'};

class Writer {
 public:
  template <typename U>
  void put(U value) {
    static_assert(std::is_unsigned_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i)
      bytes.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
  }

  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      value |= static_cast<U>(static_cast<U>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return value;
  }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n)
      throw FormatError(std::string("checkpoint truncated while reading ") + what);
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in pieces to stay portable for huge files
  constexpr std::size_t kPiece = std::size_t{1} << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kPiece) {
    const std::size_t n = std::min(kPiece, bytes.size() - off);
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(std::span<const CheckpointEntry> entries) {
  Writer w;
  w.bytes.assign(kMagic.begin(), kMagic.end());
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (e.name.empty()) throw FormatError("checkpoint entry without a name");
    if (!e.tensor.defined()) throw FormatError("checkpoint entry '" + e.name + "' is empty");
    if (e.tensor.rank() > 255) throw FormatError("checkpoint entry '" + e.name + "' rank > 255");
    w.put(static_cast<std::uint32_t>(e.name.size()));
    w.bytes.insert(w.bytes.end(), e.name.begin(), e.name.end());
    w.put(static_cast<std::uint8_t>(e.tensor.dtype() == DType::f32 ? 0 : 1));
    w.put(static_cast<std::uint8_t>(e.tensor.rank()));
    for (std::size_t d : e.tensor.shape()) w.put(static_cast<std::uint64_t>(d));
    dispatch(e.tensor.dtype(), [&](auto tag) {
      using T = decltype(tag);
      using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
      for (T v : e.tensor.data<T>()) w.put(std::bit_cast<Bits>(v));
    });
  }
  w.put(crc_of(w.bytes));
  return std::move(w.bytes);
}

std::vector<CheckpointEntry> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagic.size() + 12 || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin()))
    throw FormatError("not a checkpoint (bad magic)");
  const auto body = bytes.first(bytes.size() - 4);
  Reader tail(bytes.last(4));
  if (crc_of(body) != tail.get<std::uint32_t>("crc"))
    throw FormatError("checkpoint CRC mismatch (file is corrupted)");

  Reader r(body.subspan(kMagic.size()));
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>("entry count");
  std::vector<CheckpointEntry> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>("name length");
    const auto name_bytes = r.take(name_len, "name");
    CheckpointEntry e{std::string(name_bytes.begin(), name_bytes.end()), {}};
    const auto tag = r.get<std::uint8_t>("dtype");
    if (tag > 1) throw FormatError("checkpoint entry '" + e.name + "' has unknown dtype tag");
    const DType dtype = tag == 0 ? DType::f32 : DType::f64;
    Shape shape(r.get<std::uint8_t>("rank"));
    std::uint64_t numel = 1;
    for (auto& d : shape) {
      const auto dim = r.get<std::uint64_t>("dims");
      if (dim == 0) throw FormatError("checkpoint entry '" + e.name + "' has a zero extent");
      if (numel > (std::uint64_t{1} << 40) / dim)
        throw FormatError("checkpoint entry '" + e.name + "' is implausibly large");
      numel *= dim;
      d = static_cast<std::size_t>(dim);
    }
    e.tensor = Tensor::zeros(shape, dtype);
    dispatch(dtype, [&](auto t) {
      using T = decltype(t);
      using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
      for (T& v : e.tensor.data<T>()) v = std::bit_cast<T>(r.get<Bits>("payload"));
    });
    out.push_back(std::move(e));
  }
  if (!r.done()) throw FormatError("checkpoint has trailing bytes after the last entry");
  return out;
}

void save_checkpoint(const std::filesystem::path& path, std::span<const CheckpointEntry> entries) {
  const auto bytes = encode_checkpoint(entries);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to " + path.string());
}

std::vector<CheckpointEntry> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                        std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

}  // namespace rcf
