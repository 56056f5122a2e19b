#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <vector>

#include "udor/networks.hpp"
#include "udor/synthdata.hpp"

namespace udor_test {

// Deterministic random-blob glyphs, 8-bit quantized so PNG round trips are
// exact. Small enough to compose on a 16x16 canvas.
udor::GlyphBank tiny_bank(const std::vector<int>& classes, int64_t per_class = 4,
                          int64_t size = 6, uint64_t seed = 99);

// 16x16 canvas, two 8x8 slots side by side (digits 0 and 1).
udor::SlotLayout tiny_layout(int offset = 0);

// Smallest workable model: 16x16 images, 3 conv blocks, narrow widths.
udor::ArchitectureConfig tiny_arch(int64_t n_parts = 2, int64_t part_length = 3);

// Empty scratch directory under the test working dir; wiped on each call.
std::filesystem::path fresh_dir(const std::string& name);

// In-memory dataset of composites over the tiny layout/bank.
udor::LoadedDataset tiny_dataset(int64_t n, uint64_t seed, int offset = 0);

}  // namespace udor_test
