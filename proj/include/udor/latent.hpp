#ifndef UDOR_LATENT_HPP
#define UDOR_LATENT_HPP

#include <torch/torch.h>

#include <random>
#include <vector>

#include "udor/common.hpp"

namespace udor {

// The latent code R is n contiguous parts of equal length, in fixed order:
// part k <-> object category k+1 (class 0 is the empty class). Codes are
// tensors shaped [..., n*part_length]; parts are views onto the last dim.
class PartitionedLatent {
 public:
  PartitionedLatent(torch::Tensor flat, int64_t n_parts)
      : flat_(std::move(flat)), n_(n_parts) {
    TORCH_CHECK(n_parts >= 1, "need at least one part");
    const int64_t dim = flat_.size(-1);
    if (dim % n_parts != 0)
      throw ConfigError("latent length " + std::to_string(dim) + " not divisible into " +
                        std::to_string(n_parts) + " parts");
    part_length_ = dim / n_parts;
  }

  static PartitionedLatent split(torch::Tensor flat, int64_t n_parts) {
    return PartitionedLatent(std::move(flat), n_parts);
  }

  int64_t n_parts() const { return n_; }
  int64_t part_length() const { return part_length_; }
  const torch::Tensor& flat() const { return flat_; }
  torch::Tensor concat() const { return flat_; }

  // k-th contiguous slice of the last dimension (a view)
  torch::Tensor part(int64_t k) const {
    check_index(k);
    return flat_.narrow(-1, k * part_length_, part_length_);
  }

  void check_index(int64_t k) const {
    if (k < 0 || k >= n_) throw ConfigError("part index " + std::to_string(k) + " out of range");
  }

  bool same_shape(const PartitionedLatent& other) const {
    return n_ == other.n_ && part_length_ == other.part_length_;
  }

 private:
  torch::Tensor flat_;
  int64_t n_;
  int64_t part_length_ = 0;
};

// Per-part slices of the encoded empty image. Snapshot of a specific encoder
// parameter state: must be re-extracted whenever the encoder changes.
struct EmptyPartBank {
  torch::Tensor code;  // [1, n*part_length]
  int64_t n_parts = 0;

  int64_t part_length() const { return code.size(-1) / n_parts; }
  torch::Tensor part(int64_t k) const {
    if (k < 0 || k >= n_parts) throw ConfigError("bank part index out of range");
    return code.narrow(-1, k * part_length(), part_length());
  }
};

// bank = split(encode(empty_image)); gradient flows into the encoder when the
// encode runs under autograd, which the removal loss requires.
template <class EncodeFn>
EmptyPartBank extract_empty_parts(EncodeFn&& encode, const torch::Tensor& empty_image,
                                  int64_t n_parts) {
  auto batched = empty_image.dim() == 3 ? empty_image.unsqueeze(0) : empty_image;
  EmptyPartBank bank;
  bank.code = encode(batched);
  bank.n_parts = n_parts;
  if (bank.code.size(-1) % n_parts != 0) throw ConfigError("empty code not divisible into parts");
  return bank;
}

// R0 = [r_1,...,r0_k,...,r_n]; pure, input untouched. Built with cat so the
// result participates in autograd through both the kept parts and the bank.
inline PartitionedLatent reset_part(const PartitionedLatent& latent, int64_t k,
                                    const EmptyPartBank& bank) {
  latent.check_index(k);
  if (bank.n_parts != latent.n_parts() || bank.part_length() != latent.part_length())
    throw ConfigError("empty-part bank does not match latent shape");
  std::vector<torch::Tensor> pieces;
  pieces.reserve(latent.n_parts());
  for (int64_t j = 0; j < latent.n_parts(); ++j) {
    if (j == k) {
      auto bp = bank.part(k);
      pieces.push_back(latent.flat().dim() > 1 ? bp.expand({latent.flat().size(0), -1})
                                               : bp.squeeze(0));
    } else {
      pieces.push_back(latent.part(j));
    }
  }
  return PartitionedLatent(torch::cat(pieces, -1), latent.n_parts());
}

inline PartitionedLatent reset_parts(const PartitionedLatent& latent,
                                     const std::vector<int64_t>& ks, const EmptyPartBank& bank) {
  PartitionedLatent out = latent;
  for (int64_t k : ks) out = reset_part(out, k, bank);
  return out;
}

// part k of the result comes from source; everything else from target
inline PartitionedLatent swap_part(const PartitionedLatent& target,
                                   const PartitionedLatent& source, int64_t k) {
  if (!target.same_shape(source)) throw ConfigError("swap_part shape mismatch");
  target.check_index(k);
  std::vector<torch::Tensor> pieces;
  pieces.reserve(target.n_parts());
  for (int64_t j = 0; j < target.n_parts(); ++j)
    pieces.push_back(j == k ? source.part(j) : target.part(j));
  return PartitionedLatent(torch::cat(pieces, -1), target.n_parts());
}

enum class RemovalPolicy {
  kSinglePart,  // exactly one uniformly random part (default)
  kSubset,      // each part independently with p=0.5, resampled if empty
};

inline std::vector<int64_t> sample_removal_indices(int64_t n_parts, std::mt19937_64& rng,
                                                   RemovalPolicy policy = RemovalPolicy::kSinglePart) {
  TORCH_CHECK(n_parts >= 1, "need at least one part");
  if (policy == RemovalPolicy::kSinglePart) {
    std::uniform_int_distribution<int64_t> pick(0, n_parts - 1);
    return {pick(rng)};
  }
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (;;) {
    std::vector<int64_t> out;
    for (int64_t k = 0; k < n_parts; ++k)
      if (coin(rng) < 0.5) out.push_back(k);
    if (!out.empty()) return out;
  }
}

}  // namespace udor

#endif  // UDOR_LATENT_HPP
