#include "helpers.hpp"

#include "udor/common.hpp"
#include "udor/experiments.hpp"

namespace udor_test {

udor::GlyphBank tiny_bank(const std::vector<int>& classes, int64_t per_class,
                          int64_t size, uint64_t seed) {
  udor::GlyphBank bank;
  for (int cls : classes) {
    auto gen = at::detail::createCPUGenerator(udor::derive_seed(seed, "glyphs-" + std::to_string(cls)));
    auto g = torch::rand({per_class, size, size}, gen, torch::kFloat32);
    bank.by_class[cls] = g.mul(255.0).round().div(255.0);
  }
  return bank;
}

udor::SlotLayout tiny_layout(int offset) {
  udor::SlotLayout layout;
  layout.canvas_size = 16;
  layout.offset_range = offset;
  layout.slots = {{0, 0, 8, 0}, {0, 8, 8, 1}};
  layout.validate();
  return layout;
}

udor::ArchitectureConfig tiny_arch(int64_t n_parts, int64_t part_length) {
  udor::ArchitectureConfig arch;
  arch.image_size = 16;
  arch.n_parts = n_parts;
  arch.part_length = part_length;
  arch.encoder_widths = {8, 16, 32};
  arch.critic_widths = {8, 16, 32};
  arch.classifier_hidden = 32;
  arch.validate();
  return arch;
}

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::current_path() / "test_tmp" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

udor::LoadedDataset tiny_dataset(int64_t n, uint64_t seed, int offset) {
  auto layout = tiny_layout(offset);
  auto bank = tiny_bank(layout.digit_classes());
  udor::OccupancyModel occ;
  auto [images, labels] = udor::detail::sample_composites(layout, bank, occ, n, seed);
  udor::LoadedDataset data;
  data.layout = layout;
  data.images = images;
  data.labels = labels;
  data.seed = seed;
  return data;
}

}  // namespace udor_test
