#ifndef UDOR_CHECKPOINT_HPP
#define UDOR_CHECKPOINT_HPP

#include <torch/torch.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "udor/common.hpp"
#include "udor/networks.hpp"

namespace udor {
namespace ckpt {

// Checkpoint file layout (little-endian host assumed):
//   8 bytes   magic "UDORCKP1"
//   8 bytes   u64 header length
//   N bytes   JSON header {"format", "version", "meta", "tensors": [...]}
//   blobs     contiguous tensor bytes in header table order
// The JSON serializer sorts keys, so identical state produces identical bytes.

inline constexpr char kMagic[8] = {'U', 'D', 'O', 'R', 'C', 'K', 'P', '1'};

inline const char* dtype_tag(torch::Dtype d) {
  switch (d) {
    case torch::kFloat32: return "f32";
    case torch::kFloat64: return "f64";
    case torch::kInt64: return "i64";
    case torch::kUInt8: return "u8";
    default: throw FormatError("unsupported tensor dtype in checkpoint");
  }
}

inline torch::Dtype dtype_from_tag(const std::string& tag) {
  if (tag == "f32") return torch::kFloat32;
  if (tag == "f64") return torch::kFloat64;
  if (tag == "i64") return torch::kInt64;
  if (tag == "u8") return torch::kUInt8;
  throw FormatError("unknown tensor dtype tag '" + tag + "'");
}

inline void write(const std::filesystem::path& path, const nlohmann::json& meta,
                  const std::vector<std::pair<std::string, torch::Tensor>>& tensors) {
  nlohmann::json table = nlohmann::json::array();
  std::vector<torch::Tensor> blobs;
  std::map<std::string, bool> seen;
  for (auto& [name, t] : tensors) {
    if (seen.count(name)) throw FormatError("duplicate tensor name '" + name + "' in checkpoint");
    seen[name] = true;
    auto c = t.detach().contiguous();
    table.push_back({{"name", name},
                     {"dtype", dtype_tag(c.scalar_type())},
                     {"shape", c.sizes().vec()},
                     {"bytes", int64_t(c.nbytes())}});
    blobs.push_back(c);
  }
  nlohmann::json header = {
      {"format", "udor-checkpoint"}, {"version", 1}, {"meta", meta}, {"tensors", table}};
  const std::string header_str = header.dump();

  // write to a sibling temp file, then rename: a crash never corrupts the target
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(kMagic, 8);
    uint64_t len = header_str.size();
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(header_str.data(), std::streamsize(header_str.size()));
    for (auto& b : blobs)
      out.write(static_cast<const char*>(b.data_ptr()), std::streamsize(b.nbytes()));
    if (!out) throw IoError("failed writing checkpoint to '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at '" + path.string() + "'");
}

struct Loaded {
  nlohmann::json meta;
  std::map<std::string, torch::Tensor> tensors;

  const torch::Tensor& require(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError("checkpoint is missing tensor '" + name + "'");
    return it->second;
  }
};

// Reads and fully validates the file before returning; a malformed file
// throws FormatError and leaves no other state behind.
inline Loaded read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw FormatError("'" + path.string() + "' is not a checkpoint file");
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 8);
  if (!in || len == 0 || len > (1ull << 31)) throw FormatError("corrupt checkpoint header length");
  std::string header_str(len, '\0');
  in.read(header_str.data(), std::streamsize(len));
  if (!in) throw FormatError("truncated checkpoint header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what());
  }
  if (header.value("format", "") != "udor-checkpoint" || header.value("version", 0) != 1)
    throw FormatError("unsupported checkpoint format/version");

  Loaded out;
  out.meta = header.value("meta", nlohmann::json::object());
  try {
    for (auto& entry : header.at("tensors")) {
      const std::string name = entry.at("name").get<std::string>();
      const auto dtype = dtype_from_tag(entry.at("dtype").get<std::string>());
      const auto shape = entry.at("shape").get<std::vector<int64_t>>();
      const auto nbytes = entry.at("bytes").get<int64_t>();
      auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype));
      if (int64_t(t.nbytes()) != nbytes) throw FormatError("tensor byte count mismatch for '" + name + "'");
      in.read(static_cast<char*>(t.data_ptr()), std::streamsize(nbytes));
      if (!in) throw FormatError("truncated checkpoint blob for '" + name + "'");
      if (!out.tensors.emplace(name, std::move(t)).second)
        throw FormatError("duplicate tensor '" + name + "' in checkpoint");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint tensor table: ") + e.what());
  }
  // nothing may follow the last blob
  in.peek();
  if (!in.eof()) throw FormatError("trailing bytes after checkpoint blobs");
  return out;
}

// -- model <-> named tensor list --------------------------------------------

inline std::vector<std::pair<std::string, torch::Tensor>> named_model_tensors(
    const ModelBundle& bundle) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  auto add = [&](const std::string& prefix, const torch::nn::Module& m) {
    for (auto& p : m.named_parameters()) out.emplace_back(prefix + p.key(), p.value());
    for (auto& b : m.named_buffers()) out.emplace_back(prefix + b.key(), b.value());
  };
  add("encoder.", *bundle.encoder);
  add("decoder.", *bundle.decoder);
  add("classifier.", *bundle.classifier);
  add("critic.", *bundle.critic);
  return out;
}

// Copies checkpoint tensors into an existing bundle; every expected tensor
// must be present with matching shape and dtype before anything is written.
inline void apply_model_tensors(ModelBundle& bundle, const Loaded& loaded) {
  auto expected = named_model_tensors(bundle);
  for (auto& [name, dst] : expected) {
    const auto& src = loaded.require(name);
    if (src.sizes() != dst.sizes() || src.scalar_type() != dst.scalar_type())
      throw FormatError("checkpoint tensor '" + name + "' has mismatched shape or dtype");
  }
  torch::NoGradGuard no_grad;
  for (auto& [name, dst] : expected) dst.copy_(loaded.tensors.at(name));
}

}  // namespace ckpt
}  // namespace udor

#endif  // UDOR_CHECKPOINT_HPP
