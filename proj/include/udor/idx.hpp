#ifndef UDOR_IDX_HPP
#define UDOR_IDX_HPP

#include <zlib.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "udor/common.hpp"

namespace udor {

// Minimal reader for the MNIST IDX layout (images magic 2051, labels magic
// 2049, big-endian u32 header fields). Files may be plain or gzip-compressed;
// zlib's gz* API handles both transparently.
namespace idx {

struct Images {
  int64_t count = 0;
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<uint8_t> pixels;  // count*rows*cols, row-major
};

namespace detail {

inline std::vector<uint8_t> read_all(const std::filesystem::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<uint8_t> out;
  uint8_t buf[1 << 16];
  int n;
  while ((n = gzread(f, buf, sizeof(buf))) > 0) out.insert(out.end(), buf, buf + n);
  bool bad = n < 0;
  gzclose(f);
  if (bad) throw IoError("decompress error in " + path.string());
  return out;
}

inline uint32_t be32(const std::vector<uint8_t>& b, size_t off) {
  return (uint32_t(b[off]) << 24) | (uint32_t(b[off + 1]) << 16) |
         (uint32_t(b[off + 2]) << 8) | uint32_t(b[off + 3]);
}

// Accepts "name", "name.gz" in dir.
inline std::filesystem::path find_file(const std::filesystem::path& dir, const std::string& name) {
  namespace fs = std::filesystem;
  for (const char* suffix : {"", ".gz"}) {
    fs::path p = dir / (name + suffix);
    if (fs::exists(p)) return p;
  }
  throw IoError("missing " + name + "[.gz] under " + dir.string());
}

}  // namespace detail

inline Images load_images(const std::filesystem::path& path) {
  auto bytes = detail::read_all(path);
  if (bytes.size() < 16 || detail::be32(bytes, 0) != 2051u)
    throw FormatError("not an IDX image file: " + path.string());
  Images im;
  im.count = detail::be32(bytes, 4);
  im.rows = detail::be32(bytes, 8);
  im.cols = detail::be32(bytes, 12);
  size_t need = 16 + size_t(im.count) * im.rows * im.cols;
  if (bytes.size() < need) throw FormatError("truncated IDX image file: " + path.string());
  im.pixels.assign(bytes.begin() + 16, bytes.begin() + need);
  return im;
}

inline std::vector<uint8_t> load_labels(const std::filesystem::path& path) {
  auto bytes = detail::read_all(path);
  if (bytes.size() < 8 || detail::be32(bytes, 0) != 2049u)
    throw FormatError("not an IDX label file: " + path.string());
  size_t count = detail::be32(bytes, 4);
  if (bytes.size() < 8 + count) throw FormatError("truncated IDX label file: " + path.string());
  return std::vector<uint8_t>(bytes.begin() + 8, bytes.begin() + 8 + count);
}

inline void write_be32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(uint8_t(v >> 24));
  out.push_back(uint8_t(v >> 16));
  out.push_back(uint8_t(v >> 8));
  out.push_back(uint8_t(v));
}

// Writers are used by tests to build small fixtures.
inline void save_images(const std::filesystem::path& path, const Images& im) {
  std::vector<uint8_t> out;
  write_be32(out, 2051u);
  write_be32(out, uint32_t(im.count));
  write_be32(out, uint32_t(im.rows));
  write_be32(out, uint32_t(im.cols));
  out.insert(out.end(), im.pixels.begin(), im.pixels.end());
  write_text_file(path, std::string_view(reinterpret_cast<const char*>(out.data()), out.size()));
}

inline void save_labels(const std::filesystem::path& path, const std::vector<uint8_t>& labels) {
  std::vector<uint8_t> out;
  write_be32(out, 2049u);
  write_be32(out, uint32_t(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  write_text_file(path, std::string_view(reinterpret_cast<const char*>(out.data()), out.size()));
}

}  // namespace idx
}  // namespace udor

#endif  // UDOR_IDX_HPP
