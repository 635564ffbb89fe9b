#pragma once

// Reader for the IDX binary format used by MNIST: a big-endian header
// (magic 0x00000803 for unsigned-byte images, 0x00000801 for labels, one
// uint32 per dimension) followed by raw bytes. Files may be gzip-compressed;
// zlib reads either form transparently.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <zlib.h>

namespace rdd::idx {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kImagesMagic = 0x00000803;
inline constexpr std::uint32_t kLabelsMagic = 0x00000801;

struct Images {
  std::size_t count = 0, rows = 0, cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols, row-major per image

  [[nodiscard]] const std::uint8_t* image(std::size_t i) const { return pixels.data() + i * rows * cols; }
};

namespace detail {

struct GzCloser {
  void operator()(gzFile f) const { gzclose(f); }
};
using GzHandle = std::unique_ptr<std::remove_pointer_t<gzFile>, GzCloser>;

inline GzHandle open(const std::string& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw IoError("idx: cannot open " + path);
  return GzHandle(f);
}

inline void read_exact(gzFile f, void* dst, std::size_t bytes, const std::string& path) {
  auto* p = static_cast<unsigned char*>(dst);
  while (bytes > 0) {
    const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(bytes, 1u << 30));
    const int got = gzread(f, p, chunk);
    if (got <= 0) throw IoError("idx: truncated file " + path);
    p += got;
    bytes -= static_cast<std::size_t>(got);
  }
}

inline std::uint32_t read_be32(gzFile f, const std::string& path) {
  unsigned char b[4];
  read_exact(f, b, 4, path);
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

}  // namespace detail

inline Images read_images(const std::string& path) {
  auto f = detail::open(path);
  const std::uint32_t magic = detail::read_be32(f.get(), path);
  if (magic != kImagesMagic) throw IoError("idx: " + path + " is not an unsigned-byte image file (bad magic)");
  Images out;
  out.count = detail::read_be32(f.get(), path);
  out.rows = detail::read_be32(f.get(), path);
  out.cols = detail::read_be32(f.get(), path);
  out.pixels.resize(out.count * out.rows * out.cols);
  detail::read_exact(f.get(), out.pixels.data(), out.pixels.size(), path);
  return out;
}

inline std::vector<std::uint8_t> read_labels(const std::string& path) {
  auto f = detail::open(path);
  const std::uint32_t magic = detail::read_be32(f.get(), path);
  if (magic != kLabelsMagic) throw IoError("idx: " + path + " is not a label file (bad magic)");
  std::vector<std::uint8_t> out(detail::read_be32(f.get(), path));
  detail::read_exact(f.get(), out.data(), out.size(), path);
  return out;
}

}  // namespace rdd::idx
