#ifndef UDOR_LOSSES_HPP
#define UDOR_LOSSES_HPP

#include <torch/torch.h>

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "udor/common.hpp"
#include "udor/latent.hpp"

namespace udor {

struct LossWeights {
  double alpha = 1.0;    // reconstruction term in the total
  double beta = 0.1;     // classification term in the total
  double gamma = 1.0;    // removing term in the total
  double eta = 0.01;     // adversarial term in the total
  double rho = 1.0;      // representation reconstruction inside rec
  double tau = 1.0;      // empty-part cross entropy inside cla
  double omega = 1.0;    // empty-image term inside rem
  double lambda_gp = 10.0;
  double log_eps = 1e-7;  // clamp floor for every log argument

  void validate() const {
    for (double v : {alpha, beta, gamma, eta, rho, tau, omega, lambda_gp, log_eps})
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("loss weights must be finite and >= 0");
  }

  nlohmann::json to_json() const {
    return {{"alpha", alpha},   {"beta", beta},   {"gamma", gamma},
            {"eta", eta},       {"rho", rho},     {"tau", tau},
            {"omega", omega},   {"lambda_gp", lambda_gp}, {"log_eps", log_eps}};
  }
  static LossWeights from_json(const nlohmann::json& j) {
    LossWeights w;
    w.alpha = j.value("alpha", w.alpha);
    w.beta = j.value("beta", w.beta);
    w.gamma = j.value("gamma", w.gamma);
    w.eta = j.value("eta", w.eta);
    w.rho = j.value("rho", w.rho);
    w.tau = j.value("tau", w.tau);
    w.omega = j.value("omega", w.omega);
    w.lambda_gp = j.value("lambda_gp", w.lambda_gp);
    w.log_eps = j.value("log_eps", w.log_eps);
    w.validate();
    return w;
  }
};

struct LossBreakdown {
  double rec = 0, cla = 0, rem = 0;
  double adv_generator = 0, adv_critic = 0, gp = 0;
  double total = 0;
};

namespace detail {

// sum of squared error per sample, averaged over the batch
inline torch::Tensor batch_sse(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes()) throw ConfigError("loss inputs must have matching shapes");
  auto d = a - b;
  return d.flatten(1).pow(2).sum(1).mean();
}

}  // namespace detail

// ||I - I'||^2 + rho * ||R - R'||^2, per-sample sums averaged over the batch.
// I pairs are images, R pairs are latent codes; only the leading batch
// dimension is assumed.
inline torch::Tensor reconstruction_loss(const torch::Tensor& image, const torch::Tensor& image_recon,
                                         const torch::Tensor& code, const torch::Tensor& code_recon,
                                         double rho) {
  return detail::batch_sse(image, image_recon) + rho * detail::batch_sse(code, code_recon);
}

// Fuzzy classification: part k should look like class k+1 or like "empty"
// (class 0). Soft OR of the two probabilities:
//   term_k = -log(1 - (1 - p_k[0]) * (1 - p_k[k+1]))
// plus a cross-entropy pull of every empty-bank part toward class 0:
//   tau * mean_k(-log p0_k[0]).
// All log arguments clamp to [eps, 1], so the result is always >= 0.
// `classify` maps a part batch [B, part_length] to probabilities [B, n+1].
template <typename ClassifyFn>
torch::Tensor fuzzy_classification_loss(const PartitionedLatent& latent, ClassifyFn&& classify,
                                        const EmptyPartBank& bank, double tau, double eps = 1e-7) {
  const int64_t n = latent.n_parts();
  if (bank.n_parts != n) throw ConfigError("empty-part bank size does not match latent partition");
  torch::Tensor first;
  for (int64_t k = 0; k < n; ++k) {
    auto p = classify(latent.part(k));
    if (p.dim() != 2 || p.size(1) != n + 1)
      throw ConfigError("classifier must output n+1 class probabilities");
    if (!p.isfinite().all().item().toBool())
      throw NumericError("classifier produced non-finite probabilities");
    auto p_empty = p.select(1, 0);
    auto p_own = p.select(1, k + 1);
    auto fuzzy_or = 1 - (1 - p_empty) * (1 - p_own);
    auto term = -torch::log(torch::clamp(fuzzy_or, eps, 1.0));
    first = first.defined() ? first + term.mean() : term.mean();
  }
  torch::Tensor second = torch::zeros({}, first.options());
  for (int64_t k = 0; k < n; ++k) {
    auto p0 = classify(bank.part(k));
    second = second - torch::log(torch::clamp(p0.select(1, 0), eps, 1.0)).mean();
  }
  return first + tau * second / double(n);
}

// ||R0 - R''||^2 + omega * ||I_e - I'_e||^2 with the same batch reduction as
// reconstruction_loss. R0 is the reset code, R'' its re-encoding; I_e the
// canonical empty image and I'_e its autoencoding.
inline torch::Tensor object_removing_loss(const torch::Tensor& reset_code,
                                          const torch::Tensor& reset_code_recon,
                                          const torch::Tensor& empty_image,
                                          const torch::Tensor& empty_image_recon, double omega) {
  return detail::batch_sse(reset_code, reset_code_recon) +
         omega * detail::batch_sse(empty_image, empty_image_recon);
}

enum class GpSampling {
  kInterpolated,  // penalty at eps*real + (1-eps)*fake, eps ~ U(0,1) per sample
  kFakeOnly,      // penalty at the fake samples themselves
};

// Critic objective E[f(fake)] - E[f(real)] + lambda * gp where
// gp = E[(||grad_x f(x_hat)||_2 - 1)^2]. Returns (loss, unweighted gp).
// Requires a backend that can differentiate through the gradient.
template <typename CriticFn>
std::pair<torch::Tensor, torch::Tensor> critic_loss_wgan_gp(
    CriticFn&& critic, const torch::Tensor& real_batch, const torch::Tensor& fake_batch,
    double lambda_gp, std::mt19937_64& rng, GpSampling sampling = GpSampling::kInterpolated) {
  if (real_batch.sizes() != fake_batch.sizes())
    throw ConfigError("real and fake batches must have matching shapes");
  auto real = real_batch.detach();
  auto fake = fake_batch.detach();

  torch::Tensor x_hat;
  if (sampling == GpSampling::kInterpolated) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::vector<double> mix(size_t(real.size(0)));
    for (auto& v : mix) v = uniform(rng);
    std::vector<int64_t> shape(size_t(real.dim()), 1);
    shape[0] = real.size(0);
    auto eps = torch::tensor(mix, real.options()).view(shape);
    x_hat = eps * real + (1 - eps) * fake;
  } else {
    x_hat = fake.clone();
  }
  x_hat.set_requires_grad(true);

  auto scores = critic(x_hat);
  // per-sample scores: summing gives each sample's own gradient in one pass
  auto grad = torch::autograd::grad({scores.sum()}, {x_hat}, /*grad_outputs=*/{},
                                    /*retain_graph=*/true, /*create_graph=*/true)[0];
  auto norms = grad.flatten(1).norm(2, 1);
  auto gp = (norms - 1).pow(2).mean();

  auto loss = critic(fake).mean() - critic(real).mean() + lambda_gp * gp;
  return {loss, gp};
}

// Generator side of the adversarial game: minimize -E[f(fake)].
template <typename CriticFn>
torch::Tensor generator_adversarial_term(CriticFn&& critic, const torch::Tensor& fake_batch) {
  return -critic(fake_batch).mean();
}

// Weighted generator total as a tensor (for backward).
inline torch::Tensor weighted_total(const torch::Tensor& rec, const torch::Tensor& cla,
                                    const torch::Tensor& rem, const torch::Tensor& adv_generator,
                                    const LossWeights& w) {
  return w.alpha * rec + w.beta * cla + w.gamma * rem + w.eta * adv_generator;
}

// Scalar bookkeeping with per-component NaN attribution.
inline LossBreakdown total_loss(double rec, double cla, double rem, double adv_generator,
                                const LossWeights& w) {
  const std::pair<const char*, double> parts[] = {
      {"rec", rec}, {"cla", cla}, {"rem", rem}, {"adv_generator", adv_generator}};
  for (auto& [name, v] : parts)
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + name + " loss");
  LossBreakdown b;
  b.rec = rec;
  b.cla = cla;
  b.rem = rem;
  b.adv_generator = adv_generator;
  b.total = w.alpha * rec + w.beta * cla + w.gamma * rem + w.eta * adv_generator;
  if (!std::isfinite(b.total)) throw NumericError("non-finite total loss");
  return b;
}

}  // namespace udor

#endif  // UDOR_LOSSES_HPP
