#ifndef UDOR_NETWORKS_HPP
#define UDOR_NETWORKS_HPP

#include <torch/torch.h>

#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "udor/common.hpp"
#include "udor/latent.hpp"

namespace udor {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct ArchitectureConfig {
  int64_t image_size = 32;  // square, power of two, >= 8
  int64_t n_parts = 3;
  int64_t part_length = 5;
  std::vector<int64_t> encoder_widths = {32, 64, 128, 256};  // decoder mirrors these
  std::vector<int64_t> critic_widths = {64, 128, 256, 512};
  int64_t classifier_hidden = 128;
  double leaky_slope = 0.2;
  bool residual = false;

  int64_t latent_dim() const { return n_parts * part_length; }
  int64_t n_classes() const { return n_parts + 1; }  // class 0 = empty

  // stride-2 blocks until the spatial size reaches 2
  static int64_t blocks_for(int64_t image_size) {
    int64_t b = 0, s = image_size;
    while (s > 2) {
      s /= 2;
      ++b;
    }
    return b;
  }

  static ArchitectureConfig for_image_size(int64_t size) {
    ArchitectureConfig a;
    a.image_size = size;
    if (size == 64) {
      a.encoder_widths = {32, 64, 128, 256, 512};
      a.critic_widths = {64, 128, 256, 512, 512};
    }
    return a;
  }

  void validate() const {
    if (image_size < 8 || (image_size & (image_size - 1)) != 0)
      throw ConfigError("image_size must be a power of two >= 8");
    if (n_parts < 1 || part_length < 1) throw ConfigError("n_parts and part_length must be >= 1");
    const auto blocks = size_t(blocks_for(image_size));
    if (encoder_widths.size() != blocks || critic_widths.size() != blocks)
      throw ConfigError("need " + std::to_string(blocks) + " channel widths for image size " +
                        std::to_string(image_size));
    if (classifier_hidden < 1) throw ConfigError("classifier_hidden must be >= 1");
  }

  bool operator==(const ArchitectureConfig&) const = default;

  nlohmann::json to_json() const {
    return {{"image_size", image_size},
            {"n_parts", n_parts},
            {"part_length", part_length},
            {"encoder_widths", encoder_widths},
            {"critic_widths", critic_widths},
            {"classifier_hidden", classifier_hidden},
            {"leaky_slope", leaky_slope},
            {"residual", residual}};
  }

  static ArchitectureConfig from_json(const nlohmann::json& j) {
    ArchitectureConfig a;
    a.image_size = j.value("image_size", a.image_size);
    a.n_parts = j.value("n_parts", a.n_parts);
    a.part_length = j.value("part_length", a.part_length);
    if (j.contains("encoder_widths")) a.encoder_widths = j.at("encoder_widths").get<std::vector<int64_t>>();
    if (j.contains("critic_widths")) a.critic_widths = j.at("critic_widths").get<std::vector<int64_t>>();
    a.classifier_hidden = j.value("classifier_hidden", a.classifier_hidden);
    a.leaky_slope = j.value("leaky_slope", a.leaky_slope);
    a.residual = j.value("residual", a.residual);
    a.validate();
    return a;
  }
};

// ---------------------------------------------------------------------------
// Blocks
// ---------------------------------------------------------------------------

namespace detail {

// Stride-2 conv block with optional 1x1 strided shortcut. GroupNorm keeps
// every normalization per-sample: the gradient penalty needs critics whose
// per-sample gradients are meaningful, and it makes encode() batch-size
// independent.
struct ConvBlockImpl : torch::nn::Module {
  ConvBlockImpl(int64_t cin, int64_t cout, int64_t groups, double slope, bool residual)
      : conv(torch::nn::Conv2dOptions(cin, cout, 4).stride(2).padding(1)),
        norm(torch::nn::GroupNormOptions(groups, cout)),
        act(torch::nn::LeakyReLUOptions().negative_slope(slope)),
        shortcut(nullptr) {
    register_module("conv", conv);
    register_module("norm", norm);
    register_module("act", act);
    if (residual) {
      shortcut = torch::nn::Conv2d(torch::nn::Conv2dOptions(cin, cout, 1).stride(2));
      register_module("shortcut", shortcut);
    }
  }

  torch::Tensor forward(torch::Tensor x) {
    auto y = act(norm(conv(x)));
    if (shortcut) y = y + shortcut(x);
    return y;
  }

  torch::nn::Conv2d conv;
  torch::nn::GroupNorm norm;
  torch::nn::LeakyReLU act;
  torch::nn::Conv2d shortcut;
};
TORCH_MODULE(ConvBlock);

struct DeconvBlockImpl : torch::nn::Module {
  DeconvBlockImpl(int64_t cin, int64_t cout, int64_t groups, double slope, bool residual)
      : deconv(torch::nn::ConvTranspose2dOptions(cin, cout, 4).stride(2).padding(1)),
        norm(torch::nn::GroupNormOptions(groups, cout)),
        act(torch::nn::LeakyReLUOptions().negative_slope(slope)),
        shortcut(nullptr) {
    register_module("deconv", deconv);
    register_module("norm", norm);
    register_module("act", act);
    if (residual) {
      shortcut = torch::nn::ConvTranspose2d(
          torch::nn::ConvTranspose2dOptions(cin, cout, 1).stride(2).output_padding(1));
      register_module("shortcut", shortcut);
    }
  }

  torch::Tensor forward(torch::Tensor x) {
    auto y = act(norm(deconv(x)));
    if (shortcut) y = y + shortcut(x);
    return y;
  }

  torch::nn::ConvTranspose2d deconv;
  torch::nn::GroupNorm norm;
  torch::nn::LeakyReLU act;
  torch::nn::ConvTranspose2d shortcut;
};
TORCH_MODULE(DeconvBlock);

}  // namespace detail

// ---------------------------------------------------------------------------
// Encoder f_phi: image [B,1,S,S] -> flat code [B, n*part_length]
// ---------------------------------------------------------------------------

struct EncoderImpl : torch::nn::Module {
  explicit EncoderImpl(const ArchitectureConfig& arch) : arch_(arch) {
    arch.validate();
    int64_t cin = 1;
    for (size_t i = 0; i < arch.encoder_widths.size(); ++i) {
      int64_t cout = arch.encoder_widths[i];
      // per-channel normalization: one group per channel
      blocks->push_back(detail::ConvBlock(cin, cout, cout, arch.leaky_slope, arch.residual));
      cin = cout;
    }
    register_module("blocks", blocks);
    head = register_module("head", torch::nn::Linear(cin * 2 * 2, arch.latent_dim()));
  }

  torch::Tensor forward(torch::Tensor image) {
    TORCH_CHECK(image.dim() == 4 && image.size(1) == 1 && image.size(2) == arch_.image_size &&
                    image.size(3) == arch_.image_size,
                "encoder expects [B,1,", arch_.image_size, ",", arch_.image_size, "]");
    auto h = blocks->forward(image);
    // latent stays unbounded linear: the empty-part vectors need no box
    return head(h.flatten(1));
  }

  torch::nn::Sequential blocks;
  torch::nn::Linear head{nullptr};
  ArchitectureConfig arch_;
};
TORCH_MODULE(Encoder);

// ---------------------------------------------------------------------------
// Decoder f_psi: flat code -> image in [0,1]
// ---------------------------------------------------------------------------

struct DecoderImpl : torch::nn::Module {
  explicit DecoderImpl(const ArchitectureConfig& arch) : arch_(arch) {
    arch.validate();
    head = register_module("head",
                           torch::nn::Linear(arch.latent_dim(), arch.encoder_widths.back() * 2 * 2));
    std::vector<int64_t> widths(arch.encoder_widths.rbegin(), arch.encoder_widths.rend());
    for (size_t i = 0; i + 1 < widths.size(); ++i)
      blocks->push_back(detail::DeconvBlock(widths[i], widths[i + 1], widths[i + 1],
                                            arch.leaky_slope, arch.residual));
    register_module("blocks", blocks);
    final_deconv = register_module(
        "final_deconv",
        torch::nn::ConvTranspose2d(
            torch::nn::ConvTranspose2dOptions(widths.back(), 1, 4).stride(2).padding(1)));
  }

  torch::Tensor forward(torch::Tensor code) {
    TORCH_CHECK(code.dim() == 2 && code.size(1) == arch_.latent_dim(), "decoder expects [B,",
                arch_.latent_dim(), "]");
    auto h = head(code).view({code.size(0), arch_.encoder_widths.back(), 2, 2});
    if (!blocks->is_empty()) h = blocks->forward(h);
    return torch::sigmoid(final_deconv(h));
  }

  torch::nn::Linear head{nullptr};
  torch::nn::Sequential blocks;
  torch::nn::ConvTranspose2d final_deconv{nullptr};
  ArchitectureConfig arch_;
};
TORCH_MODULE(Decoder);

// ---------------------------------------------------------------------------
// Part classifier f_varphi: part [B,part_length] -> probabilities [B,n+1]
// ---------------------------------------------------------------------------

struct PartClassifierImpl : torch::nn::Module {
  explicit PartClassifierImpl(const ArchitectureConfig& arch)
      : fc1(arch.part_length, arch.classifier_hidden),
        fc2(arch.classifier_hidden, arch.n_classes()),
        slope_(arch.leaky_slope),
        part_length_(arch.part_length) {
    register_module("fc1", fc1);
    register_module("fc2", fc2);
  }

  torch::Tensor logits(torch::Tensor part) {
    TORCH_CHECK(part.dim() == 2 && part.size(1) == part_length_, "classifier expects [B,",
                part_length_, "]");
    return fc2(torch::leaky_relu(fc1(part), slope_));
  }

  // simplex output; class 0 is the empty class l0
  torch::Tensor forward(torch::Tensor part) { return torch::softmax(logits(part), 1); }
  torch::Tensor log_probs(torch::Tensor part) { return torch::log_softmax(logits(part), 1); }

  torch::nn::Linear fc1, fc2;
  double slope_;
  int64_t part_length_;
};
TORCH_MODULE(PartClassifier);

// ---------------------------------------------------------------------------
// Critic f_theta: image -> unbounded scalar per sample
// ---------------------------------------------------------------------------

struct CriticImpl : torch::nn::Module {
  explicit CriticImpl(const ArchitectureConfig& arch) : arch_(arch) {
    arch.validate();
    int64_t cin = 1;
    for (int64_t cout : arch.critic_widths) {
      // layer-wise normalization (single group): per-sample, never batch-coupled
      blocks->push_back(detail::ConvBlock(cin, cout, 1, arch.leaky_slope, arch.residual));
      cin = cout;
    }
    register_module("blocks", blocks);
    head = register_module("head", torch::nn::Linear(cin * 2 * 2, 1));
  }

  torch::Tensor forward(torch::Tensor image) {
    TORCH_CHECK(image.dim() == 4 && image.size(1) == 1 && image.size(2) == arch_.image_size &&
                    image.size(3) == arch_.image_size,
                "critic expects [B,1,", arch_.image_size, ",", arch_.image_size, "]");
    auto h = blocks->forward(image);
    return head(h.flatten(1)).squeeze(1);
  }

  torch::nn::Sequential blocks;
  torch::nn::Linear head{nullptr};
  ArchitectureConfig arch_;
};
TORCH_MODULE(Critic);

// ---------------------------------------------------------------------------
// Bundle
// ---------------------------------------------------------------------------

// One encoder and one decoder parameter set: every encode/decode in every
// loss path calls these same modules.
struct ModelBundle {
  ArchitectureConfig arch;
  Encoder encoder{nullptr};
  Decoder decoder{nullptr};
  PartClassifier classifier{nullptr};
  Critic critic{nullptr};

  static ModelBundle create(const ArchitectureConfig& arch, uint64_t seed,
                            torch::Dtype dtype = torch::kFloat32) {
    arch.validate();
    ModelBundle b;
    b.arch = arch;
    b.encoder = Encoder(arch);
    b.decoder = Decoder(arch);
    b.classifier = PartClassifier(arch);
    b.critic = Critic(arch);
    b.init_weights(seed);
    if (dtype != torch::kFloat32) b.to(dtype);
    return b;
  }

  // DCGAN-style init from an explicit generator so construction order and the
  // global RNG never matter.
  void init_weights(uint64_t seed) {
    auto gen = at::detail::createCPUGenerator(derive_seed(seed, "init"));
    torch::NoGradGuard no_grad;
    for (auto* m : {static_cast<torch::nn::Module*>(encoder.get()),
                    static_cast<torch::nn::Module*>(decoder.get()),
                    static_cast<torch::nn::Module*>(classifier.get()),
                    static_cast<torch::nn::Module*>(critic.get())}) {
      for (auto& p : m->named_parameters()) {
        if (p.key().find("norm.weight") != std::string::npos) {
          p.value().normal_(1.0, 0.02, gen);
        } else if (p.key().find("bias") != std::string::npos) {
          p.value().zero_();
        } else {
          p.value().normal_(0.0, 0.02, gen);
        }
      }
    }
  }

  // ModuleHolder's const operator-> hides forward(); a holder copy is just a
  // shared handle, so these stay const without touching parameters.
  torch::Tensor encode(const torch::Tensor& image) const {
    auto m = encoder;
    return m->forward(image);
  }
  torch::Tensor decode(const torch::Tensor& code) const {
    auto m = decoder;
    return m->forward(code);
  }
  PartitionedLatent encode_split(const torch::Tensor& image) const {
    return PartitionedLatent(encode(image), arch.n_parts);
  }

  std::vector<torch::Tensor> generator_parameters() const {
    std::vector<torch::Tensor> out;
    for (auto& p : encoder->parameters()) out.push_back(p);
    for (auto& p : decoder->parameters()) out.push_back(p);
    for (auto& p : classifier->parameters()) out.push_back(p);
    return out;
  }

  std::vector<torch::Tensor> critic_parameters() const { return critic->parameters(); }

  void to(torch::Dtype dtype) {
    encoder->to(dtype);
    decoder->to(dtype);
    classifier->to(dtype);
    critic->to(dtype);
  }

  void train(bool on = true) {
    encoder->train(on);
    decoder->train(on);
    classifier->train(on);
    critic->train(on);
  }

  void set_generator_requires_grad(bool on) {
    for (auto& p : generator_parameters()) p.set_requires_grad(on);
  }
  void set_critic_requires_grad(bool on) {
    for (auto& p : critic_parameters()) p.set_requires_grad(on);
  }
};

}  // namespace udor

#endif  // UDOR_NETWORKS_HPP
