#ifndef UDOR_SYNTHDATA_HPP
#define UDOR_SYNTHDATA_HPP

#include <torch/torch.h>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "udor/common.hpp"
#include "udor/idx.hpp"
#include "udor/image_io.hpp"

namespace udor {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Layout
// ---------------------------------------------------------------------------

struct SlotSpec {
  int row = 0;   // box anchor (top-left), before jitter
  int col = 0;
  int size = 16; // box side length
  int digit = 0; // source digit class this slot draws from
};

struct SlotLayout {
  int canvas_size = 32;
  std::vector<SlotSpec> slots;
  int offset_range = 0;  // max per-axis integer jitter

  int64_t n_slots() const { return int64_t(slots.size()); }

  std::vector<int> digit_classes() const {
    std::vector<int> classes;
    for (const auto& s : slots)
      if (std::find(classes.begin(), classes.end(), s.digit) == classes.end())
        classes.push_back(s.digit);
    return classes;
  }

  // top-left digit 0, top-right digit 1, left-bottom digit 2
  static SlotLayout multi_mnist(int offset = 0) {
    SlotLayout l;
    l.canvas_size = 32;
    l.slots = {{0, 0, 16, 0}, {0, 16, 16, 1}, {16, 0, 16, 2}};
    l.offset_range = offset;
    return l;
  }

  // offset-position datasets: two digit slots on a 32x32 canvas
  static SlotLayout two_digit(int offset) {
    SlotLayout l;
    l.canvas_size = 32;
    l.slots = {{0, 0, 16, 0}, {0, 16, 16, 1}};
    l.offset_range = offset;
    return l;
  }

  void validate() const {
    if (canvas_size <= 0) throw ConfigError("canvas_size must be positive");
    if (slots.empty()) throw ConfigError("layout needs at least one slot");
    if (offset_range < 0) throw ConfigError("offset_range must be >= 0");
    for (size_t i = 0; i < slots.size(); ++i) {
      const auto& s = slots[i];
      if (s.row < 0 || s.col < 0 || s.row + s.size > canvas_size || s.col + s.size > canvas_size)
        throw ConfigError("slot box leaves the canvas at offset 0");
      for (size_t j = i + 1; j < slots.size(); ++j) {
        const auto& t = slots[j];
        bool overlap = s.row < t.row + t.size && t.row < s.row + s.size &&
                       s.col < t.col + t.size && t.col < s.col + s.size;
        if (overlap) throw ConfigError("slot boxes overlap at offset 0");
      }
    }
  }

  json to_json() const {
    json slots_j = json::array();
    for (const auto& s : slots)
      slots_j.push_back({{"row", s.row}, {"col", s.col}, {"size", s.size}, {"digit", s.digit}});
    return {{"canvas_size", canvas_size}, {"offset_range", offset_range}, {"slots", slots_j}};
  }

  static SlotLayout from_json(const json& j) {
    SlotLayout l;
    l.canvas_size = j.at("canvas_size").get<int>();
    l.offset_range = j.at("offset_range").get<int>();
    for (const auto& s : j.at("slots"))
      l.slots.push_back({s.at("row").get<int>(), s.at("col").get<int>(),
                         s.at("size").get<int>(), s.at("digit").get<int>()});
    l.validate();
    return l;
  }
};

// ---------------------------------------------------------------------------
// Source glyphs
// ---------------------------------------------------------------------------

struct GlyphBank {
  // digit class -> [N,14,14] float glyphs in [0,1]
  std::map<int, torch::Tensor> by_class;

  const torch::Tensor& glyphs(int digit) const {
    auto it = by_class.find(digit);
    if (it == by_class.end()) throw ConfigError("no glyphs for digit " + std::to_string(digit));
    return it->second;
  }
};

// Reads train-images/train-labels IDX files (plain or .gz) from a directory
// and pools 28x28 sources down to 14x14. 14x14 sources pass through.
inline GlyphBank load_source_digits(const std::filesystem::path& archive_dir,
                                    const std::vector<int>& classes) {
  if (classes.empty()) throw ConfigError("no digit classes requested");
  if (!std::filesystem::exists(archive_dir))
    throw IoError("digit archive not found: " + archive_dir.string());
  auto images_path = idx::detail::find_file(archive_dir, "train-images-idx3-ubyte");
  auto labels_path = idx::detail::find_file(archive_dir, "train-labels-idx1-ubyte");
  auto images = idx::load_images(images_path);
  auto labels = idx::load_labels(labels_path);
  if (int64_t(labels.size()) != images.count)
    throw FormatError("image/label count mismatch in " + archive_dir.string());

  auto all = torch::from_blob(images.pixels.data(), {images.count, images.rows, images.cols},
                              torch::kUInt8)
                 .to(torch::kFloat32)
                 .div(255.0);
  if (images.rows == 28 && images.cols == 28) {
    all = torch::avg_pool2d(all.unsqueeze(1), 2).squeeze(1);
  } else if (!(images.rows == 14 && images.cols == 14)) {
    throw ConfigError("expected 28x28 or 14x14 source digits, got " +
                      std::to_string(images.rows) + "x" + std::to_string(images.cols));
  }

  GlyphBank bank;
  for (int c : classes) {
    std::vector<int64_t> idxs;
    for (int64_t i = 0; i < int64_t(labels.size()); ++i)
      if (labels[i] == c) idxs.push_back(i);
    if (idxs.empty()) throw ConfigError("digit class " + std::to_string(c) + " absent from archive");
    bank.by_class[c] = all.index_select(0, torch::tensor(idxs)).contiguous();
  }
  return bank;
}

// ---------------------------------------------------------------------------
// Composition
// ---------------------------------------------------------------------------

struct SlotChoice {
  int64_t glyph_id = -1;  // index into the slot's class collection, -1 = empty
};

struct CompositeSample {
  torch::Tensor image;                          // [1,H,W] in [0,1]
  std::vector<int> occupancy;                   // per slot: 0 = absent, k+1 = category of slot k
  std::vector<int64_t> glyph_ids;               // -1 for empty slots
  std::vector<std::pair<int, int>> offsets_used;  // per slot (dr,dc) after clamping
};

inline torch::Tensor make_empty_image(const SlotLayout& layout) {
  return torch::zeros({1, layout.canvas_size, layout.canvas_size}, torch::kFloat32);
}

namespace detail {

// Clamp the jittered box into the canvas, return the effective offset.
inline std::pair<int, int> clamp_offset(const SlotLayout& l, const SlotSpec& s, int dr, int dc) {
  int row = std::clamp(s.row + dr, 0, l.canvas_size - s.size);
  int col = std::clamp(s.col + dc, 0, l.canvas_size - s.size);
  return {row - s.row, col - s.col};
}

inline void paste_max(torch::Tensor& canvas, const torch::Tensor& glyph, int row, int col) {
  const int64_t gh = glyph.size(0), gw = glyph.size(1);
  auto patch = canvas.index({0, torch::indexing::Slice(row, row + gh),
                             torch::indexing::Slice(col, col + gw)});
  patch.copy_(torch::maximum(patch, glyph));
}

}  // namespace detail

// Deterministic composition with explicit per-slot offsets.
inline CompositeSample compose_with_offsets(const SlotLayout& layout, const GlyphBank& bank,
                                            const std::vector<SlotChoice>& choices,
                                            const std::vector<std::pair<int, int>>& offsets) {
  if (choices.size() != layout.slots.size() || offsets.size() != layout.slots.size())
    throw ConfigError("slot choices/offsets do not match layout");
  CompositeSample out;
  out.image = make_empty_image(layout);
  for (size_t s = 0; s < layout.slots.size(); ++s) {
    const auto& slot = layout.slots[s];
    auto [dr, dc] = detail::clamp_offset(layout, slot, offsets[s].first, offsets[s].second);
    out.offsets_used.emplace_back(dr, dc);
    if (choices[s].glyph_id < 0) {
      out.occupancy.push_back(0);
      out.glyph_ids.push_back(-1);
      continue;
    }
    const auto& glyphs = bank.glyphs(slot.digit);
    if (choices[s].glyph_id >= glyphs.size(0))
      throw ConfigError("glyph id out of range for slot " + std::to_string(s));
    auto glyph = glyphs[choices[s].glyph_id];
    // glyph centered in the box; 14x14 inside 16x16 leaves a 1px margin
    int margin = (slot.size - int(glyph.size(0))) / 2;
    detail::paste_max(out.image, glyph, slot.row + dr + margin, slot.col + dc + margin);
    out.occupancy.push_back(int(s) + 1);
    out.glyph_ids.push_back(choices[s].glyph_id);
  }
  return out;
}

// Jitter drawn uniformly in [-offset_range, +offset_range] per axis (then
// clamped so the box stays inside the canvas).
inline CompositeSample compose_sample(const SlotLayout& layout, const GlyphBank& bank,
                                      const std::vector<SlotChoice>& choices, uint64_t rng_seed) {
  std::mt19937_64 rng(rng_seed);
  std::uniform_int_distribution<int> jitter(-layout.offset_range, layout.offset_range);
  std::vector<std::pair<int, int>> offsets;
  for (size_t s = 0; s < layout.slots.size(); ++s) {
    int dr = layout.offset_range > 0 ? jitter(rng) : 0;
    int dc = layout.offset_range > 0 ? jitter(rng) : 0;
    offsets.emplace_back(dr, dc);
  }
  return compose_with_offsets(layout, bank, choices, offsets);
}

// ---------------------------------------------------------------------------
// Dataset generation
// ---------------------------------------------------------------------------

struct OccupancyModel {
  double p_occupied = 0.75;  // independent per slot
  int min_objects = 0;       // resample until at least this many slots occupied
};

namespace detail {

inline std::vector<SlotChoice> draw_choices(const SlotLayout& layout, const GlyphBank& bank,
                                            const OccupancyModel& occ, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<SlotChoice> choices(layout.slots.size());
  for (int attempt = 0; attempt < 1000; ++attempt) {
    int count = 0;
    for (size_t s = 0; s < layout.slots.size(); ++s) {
      if (coin(rng) < occ.p_occupied) {
        const auto& glyphs = bank.glyphs(layout.slots[s].digit);
        std::uniform_int_distribution<int64_t> pick(0, glyphs.size(0) - 1);
        choices[s].glyph_id = pick(rng);
        ++count;
      } else {
        choices[s].glyph_id = -1;
      }
    }
    if (count >= occ.min_objects) return choices;
  }
  throw ConfigError("occupancy model cannot satisfy min_objects");
}

}  // namespace detail

struct DatasetSpec {
  SlotLayout layout;
  OccupancyModel occupancy;
  int64_t n_samples = 0;
  uint64_t seed = 0;
  std::filesystem::path source_digits;
};

// Writes images/NNNNNN.png + manifest.jsonl + dataset.json. Sample i depends
// only on seed+i, so regeneration (or a parallel run) is pixel-exact.
inline void generate_dataset(const DatasetSpec& spec, const GlyphBank& bank,
                             const std::filesystem::path& out_dir) {
  spec.layout.validate();
  if (spec.n_samples <= 0) throw ConfigError("n_samples must be positive");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "images").string());

  std::ofstream manifest(out_dir / "manifest.jsonl", std::ios::binary);
  if (!manifest) throw IoError("cannot write manifest in " + out_dir.string());

  for (int64_t i = 0; i < spec.n_samples; ++i) {
    uint64_t sample_seed = spec.seed + uint64_t(i);
    std::mt19937_64 rng(sample_seed);
    auto choices = detail::draw_choices(spec.layout, bank, spec.occupancy, rng);
    std::uniform_int_distribution<int> jitter(-spec.layout.offset_range, spec.layout.offset_range);
    std::vector<std::pair<int, int>> offsets;
    for (size_t s = 0; s < spec.layout.slots.size(); ++s) {
      int dr = spec.layout.offset_range > 0 ? jitter(rng) : 0;
      int dc = spec.layout.offset_range > 0 ? jitter(rng) : 0;
      offsets.emplace_back(dr, dc);
    }
    auto sample = compose_with_offsets(spec.layout, bank, choices, offsets);

    char name[32];
    std::snprintf(name, sizeof(name), "%06lld.png", static_cast<long long>(i));
    write_png(out_dir / "images" / name, sample.image);

    json row;
    row["index"] = i;
    row["occupancy"] = sample.occupancy;
    row["glyph_ids"] = sample.glyph_ids;
    json offs = json::array();
    for (auto& [dr, dc] : sample.offsets_used) offs.push_back({dr, dc});
    row["offsets"] = offs;
    row["seed"] = sample_seed;
    manifest << row.dump() << "\n";
  }
  manifest.close();
  if (!manifest) throw IoError("manifest write failed in " + out_dir.string());

  json meta;
  meta["format"] = "udor-dataset";
  meta["version"] = 1;
  meta["layout"] = spec.layout.to_json();
  meta["n_samples"] = spec.n_samples;
  meta["seed"] = spec.seed;
  meta["occupancy"] = {{"p_occupied", spec.occupancy.p_occupied},
                       {"min_objects", spec.occupancy.min_objects}};
  meta["source_digits"] = spec.source_digits.string();
  write_text_file(out_dir / "dataset.json", meta.dump(2) + "\n");
}

struct DatasetInfo {
  SlotLayout layout;
  std::filesystem::path source_digits;
  uint64_t seed = 0;
  int64_t n_samples = 0;
};

// metadata only; cheap compared to load_dataset
inline DatasetInfo load_dataset_info(const std::filesystem::path& dir) {
  auto root = resolve_data_path(dir);
  if (!std::filesystem::exists(root / "dataset.json"))
    throw IoError("no dataset.json under " + root.string());
  json meta = json::parse(read_text_file(root / "dataset.json"));
  DatasetInfo info;
  info.layout = SlotLayout::from_json(meta.at("layout"));
  info.source_digits = meta.at("source_digits").get<std::string>();
  info.seed = meta.at("seed").get<uint64_t>();
  info.n_samples = meta.at("n_samples").get<int64_t>();
  return info;
}

struct LoadedDataset {
  SlotLayout layout;
  torch::Tensor images;   // [N,1,H,W]
  torch::Tensor labels;   // [N,n_slots] int64 occupancy classes (0 or k+1)
  std::filesystem::path source_digits;
  uint64_t seed = 0;
};

inline LoadedDataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  auto root = resolve_data_path(dir);
  if (!fs::exists(root / "dataset.json")) throw IoError("no dataset.json under " + root.string());
  json meta = json::parse(read_text_file(root / "dataset.json"));
  LoadedDataset ds;
  ds.layout = SlotLayout::from_json(meta.at("layout"));
  ds.seed = meta.at("seed").get<uint64_t>();
  ds.source_digits = meta.at("source_digits").get<std::string>();
  const int64_t n = meta.at("n_samples").get<int64_t>();
  const int64_t n_slots = ds.layout.n_slots();

  ds.images = torch::empty({n, 1, ds.layout.canvas_size, ds.layout.canvas_size}, torch::kFloat32);
  ds.labels = torch::zeros({n, n_slots}, torch::kInt64);
  std::ifstream manifest(root / "manifest.jsonl");
  if (!manifest) throw IoError("no manifest.jsonl under " + root.string());
  std::string line;
  int64_t i = 0;
  auto labels_acc = ds.labels.accessor<int64_t, 2>();
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    if (i >= n) throw FormatError("manifest has more rows than dataset.json n_samples");
    json row = json::parse(line);
    char name[32];
    std::snprintf(name, sizeof(name), "%06lld.png", static_cast<long long>(i));
    ds.images[i] = read_png(root / "images" / name);
    auto occ = row.at("occupancy");
    for (int64_t s = 0; s < n_slots; ++s) labels_acc[i][s] = occ.at(s).get<int64_t>();
    ++i;
  }
  if (i != n) throw FormatError("manifest row count does not match dataset.json");
  return ds;
}

// ---------------------------------------------------------------------------
// Probe sets (metric evaluation)
// ---------------------------------------------------------------------------

struct ProbeSet {
  int64_t T = 0;
  int64_t D = 0;
  int64_t fixed_slot = 0;
  torch::Tensor images;         // [T*D,1,H,W], group t occupies rows [t*D, (t+1)*D)
  torch::Tensor ground_truths;  // probe with the fixed slot's jittered box zeroed
  std::vector<std::pair<int, int>> fixed_boxes;  // per group: box top-left (row,col)
  int box_size = 16;

  torch::Tensor probe(int64_t t, int64_t d) const { return images[t * D + d]; }
};

// Fix one glyph (and its jitter) per group; resample everything else D times.
inline ProbeSet generate_probe_set(const SlotLayout& layout, const GlyphBank& bank, int64_t T,
                                   int64_t D, int64_t fixed_slot, uint64_t seed,
                                   const OccupancyModel& occ = {}) {
  layout.validate();
  if (T < 1 || D < 1) throw ConfigError("probe set needs T,D >= 1");
  if (fixed_slot < 0 || fixed_slot >= layout.n_slots())
    throw ConfigError("fixed_slot out of range");

  ProbeSet ps;
  ps.T = T;
  ps.D = D;
  ps.fixed_slot = fixed_slot;
  ps.box_size = layout.slots[fixed_slot].size;
  const int64_t hw = layout.canvas_size;
  ps.images = torch::empty({T * D, 1, hw, hw}, torch::kFloat32);
  ps.ground_truths = torch::empty({T * D, 1, hw, hw}, torch::kFloat32);

  const auto& fslot = layout.slots[fixed_slot];
  for (int64_t t = 0; t < T; ++t) {
    std::mt19937_64 rng(seed + uint64_t(t));
    const auto& fixed_glyphs = bank.glyphs(fslot.digit);
    std::uniform_int_distribution<int64_t> pick(0, fixed_glyphs.size(0) - 1);
    std::uniform_int_distribution<int> jitter(-layout.offset_range, layout.offset_range);
    SlotChoice fixed_choice{pick(rng)};
    int fdr = layout.offset_range > 0 ? jitter(rng) : 0;
    int fdc = layout.offset_range > 0 ? jitter(rng) : 0;
    auto [cdr, cdc] = detail::clamp_offset(layout, fslot, fdr, fdc);
    ps.fixed_boxes.emplace_back(fslot.row + cdr, fslot.col + cdc);

    for (int64_t d = 0; d < D; ++d) {
      std::vector<SlotChoice> choices(layout.slots.size());
      std::vector<std::pair<int, int>> offsets(layout.slots.size(), {0, 0});
      std::uniform_real_distribution<double> coin(0.0, 1.0);
      for (int64_t s = 0; s < layout.n_slots(); ++s) {
        if (s == fixed_slot) {
          choices[s] = fixed_choice;
          offsets[s] = {cdr, cdc};
          continue;
        }
        if (coin(rng) < occ.p_occupied) {
          const auto& glyphs = bank.glyphs(layout.slots[s].digit);
          std::uniform_int_distribution<int64_t> pick_other(0, glyphs.size(0) - 1);
          choices[s].glyph_id = pick_other(rng);
        }
        if (layout.offset_range > 0) offsets[s] = {jitter(rng), jitter(rng)};
      }
      auto sample = compose_with_offsets(layout, bank, choices, offsets);
      // round-trip through 8-bit so probes match what a stored dataset yields
      auto quantized = sample.image.mul(255.0).round().div(255.0);
      ps.images[t * D + d] = quantized;
      auto gt = quantized.clone();
      int br = fslot.row + cdr, bc = fslot.col + cdc;
      gt.index({0, torch::indexing::Slice(br, br + fslot.size),
                torch::indexing::Slice(bc, bc + fslot.size)})
          .zero_();
      ps.ground_truths[t * D + d] = gt;
    }
  }
  return ps;
}

// mean intensity inside a box; quantifies how cleared a slot is
inline double slot_clearance(const torch::Tensor& image, int row, int col, int size) {
  auto box = image.index({0, torch::indexing::Slice(row, row + size),
                          torch::indexing::Slice(col, col + size)});
  return box.mean().item<double>();
}

}  // namespace udor

#endif  // UDOR_SYNTHDATA_HPP
