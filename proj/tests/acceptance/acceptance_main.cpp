// Acceptance gate: ten scripted criteria covering metric oracles, loss unit
// values, gradient checks, data determinism, smoke training, removal
// behavior, ablation orderings, linear-probe quality, the offset trend, and
// latent-operation properties. One [PASS]/[FAIL] line per criterion.
//
// Training cells cache their checkpoints and evaluation reports under the
// artifact root, so interrupted or repeated runs resume instead of
// retraining.

#include <torch/torch.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "udor/experiments.hpp"
#include "udor/metrics.hpp"
#include "udor/synthdata.hpp"
#include "udor/training.hpp"

namespace fs = std::filesystem;
using namespace udor;

namespace {

struct CheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool cond, const std::string& msg) {
  if (!cond) throw CheckFailure(msg);
}

template <typename T>
std::string str(const T& v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

struct Ctx {
  fs::path root;    // artifact root: datasets, runs, caches
  fs::path digits;  // source digit archive
  fs::path repo;    // source tree, for the archive-building script
};

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

void ensure_digits(const Ctx& ctx) {
  if (fs::exists(ctx.digits / "train-images-idx3-ubyte") ||
      fs::exists(ctx.digits / "train-images-idx3-ubyte.gz"))
    return;
  fs::create_directories(ctx.digits);
  const std::string cmd = "python3 \"" + (ctx.repo / "scripts" / "make_digits_idx.py").string() +
                          "\" --out \"" + ctx.digits.string() + "\"";
  std::cerr << "building digit archive: " << cmd << "\n";
  const int rc = std::system(cmd.c_str());
  if (rc != 0 || !(fs::exists(ctx.digits / "train-images-idx3-ubyte.gz") ||
                   fs::exists(ctx.digits / "train-images-idx3-ubyte")))
    throw IoError("digit archive missing; run scripts/make_digits_idx.py --out " +
                  ctx.digits.string());
}

fs::path ensure_dataset(const Ctx& ctx, const std::string& name, const SlotLayout& layout,
                        int64_t n, uint64_t seed) {
  const fs::path dir = ctx.root / "data" / name;
  if (fs::exists(dir / "dataset.json")) return dir;
  ensure_digits(ctx);
  auto glyphs = load_source_digits(ctx.digits, layout.digit_classes());
  DatasetSpec spec;
  spec.layout = layout;
  spec.n_samples = n;
  spec.seed = seed;
  spec.source_digits = ctx.digits;
  std::cerr << "generating dataset '" << name << "' (" << n << " samples)\n";
  generate_dataset(spec, glyphs, dir);
  return dir;
}

ArchitectureConfig desk_arch(int64_t n_parts, int64_t part_length) {
  ArchitectureConfig arch;
  arch.image_size = 32;
  arch.n_parts = n_parts;
  arch.part_length = part_length;
  arch.encoder_widths = {16, 32, 64, 128};
  arch.critic_widths = {16, 32, 64, 128};
  arch.classifier_hidden = 128;
  return arch;
}

TrainResult run_training(const LoadedDataset& data, const TrainConfig& cfg,
                         const std::string& label) {
  auto started = std::chrono::steady_clock::now();
  auto progress = [&](int64_t step, const LossBreakdown& b) {
    if (step == 1 || step % 500 == 0) {
      const double s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      std::cerr << label << " step " << step << "/" << cfg.total_steps << "  rec " << str(b.rec)
                << "  cla " << str(b.cla) << "  rem " << str(b.rem) << "  total " << str(b.total)
                << "  (" << str(s) << " s)\n";
    }
  };
  return train(data, cfg, progress);
}

MetricReport eval_cached(const fs::path& cache_file, const fs::path& ckpt,
                         const SlotLayout& layout, const GlyphBank& glyphs,
                         const EvalSpec& spec) {
  if (fs::exists(cache_file)) {
    try {
      return MetricReport::from_json(nlohmann::json::parse(read_text_file(cache_file)));
    } catch (...) {
    }
  }
  auto [models, cfg] = load_models(ckpt);
  models.train(false);
  auto report = evaluate_model(models, layout, glyphs, spec);
  write_text_file(cache_file, report.to_json().dump(2) + "\n");
  return report;
}

std::vector<std::vector<double>> read_csv_rows(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// 1. Metric oracles against naive loops
// ---------------------------------------------------------------------------

double naive_modularity(const torch::Tensor& codes) {
  auto z = codes.to(torch::kFloat64).contiguous();
  auto a = z.accessor<double, 3>();
  const int64_t T = z.size(0), D = z.size(1), L = z.size(2);
  double sum = 0;
  for (int64_t t = 0; t < T; ++t)
    for (int64_t l = 0; l < L; ++l) {
      double mean = 0;
      for (int64_t d = 0; d < D; ++d) mean += a[t][d][l];
      mean /= double(D);
      for (int64_t d = 0; d < D; ++d) sum += std::abs(a[t][d][l] - mean);
    }
  return sum / double(T * D);
}

double naive_integrity(const torch::Tensor& recon, const torch::Tensor& gt) {
  auto r = recon.to(torch::kFloat64).flatten().contiguous();
  auto g = gt.to(torch::kFloat64).flatten().contiguous();
  auto ra = r.accessor<double, 1>();
  auto ga = g.accessor<double, 1>();
  double sum = 0;
  for (int64_t i = 0; i < r.size(0); ++i) sum += std::abs(ga[i] - ra[i]);
  return sum / double(r.size(0));
}

std::string criterion_metric_oracles(const Ctx&) {
  std::mt19937_64 rng = make_rng(1001, "metric-oracles");
  std::uniform_int_distribution<int64_t> td(1, 20), len(1, 8), px(2, 6);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    const int64_t T = td(rng), D = td(rng), L = len(rng), S = px(rng);
    auto gen = at::detail::createCPUGenerator(2000 + uint64_t(i));
    auto codes = torch::randn({T, D, L}, gen, torch::kFloat64) * 3.0;
    worst = std::max(worst, std::abs(modularity_score(codes) - naive_modularity(codes)));
    auto recon = torch::rand({T, D, 1, S, S}, gen, torch::kFloat64);
    auto gt = torch::rand({T, D, 1, S, S}, gen, torch::kFloat64);
    worst = std::max(worst, std::abs(integrity_score(recon, gt) - naive_integrity(recon, gt)));
  }
  require(worst < 1e-10, "metric oracle deviation " + str(worst) + " >= 1e-10");
  return "100 instances, worst abs err " + str(worst);
}

// ---------------------------------------------------------------------------
// 2. Loss unit values
// ---------------------------------------------------------------------------

std::string criterion_loss_units(const Ctx&) {
  const double tol = 1e-6;
  auto near = [&](double got, double want, const std::string& what) {
    require(std::abs(got - want) < tol,
            what + ": got " + str(got) + ", expected " + str(want));
  };

  // reconstruction: identical inputs score zero; a lone pixel bump of 2
  // contributes its squared error, averaged over the batch
  auto img = torch::zeros({2, 1, 4, 4}, torch::kFloat64);
  auto code = torch::zeros({2, 6}, torch::kFloat64);
  near(reconstruction_loss(img, img, code, code, 1.0).item<double>(), 0.0, "rec identity");
  {
    auto recon = img.clone();
    recon[0][0][1][2] = 2.0;
    near(reconstruction_loss(img, recon, code, code, 1.0).item<double>(), 2.0,
         "rec pixel bump, batch of two");
    near(reconstruction_loss(img.narrow(0, 0, 1), recon.narrow(0, 0, 1), code.narrow(0, 0, 1),
                             code.narrow(0, 0, 1), 1.0)
             .item<double>(),
         4.0, "rec pixel bump, single sample");
  }

  // fuzzy classification: uniform probabilities over 3 classes give
  // -log(1 - (2/3)^2) = -log(5/9) per part
  {
    const double expected = -std::log(5.0 / 9.0);
    require(std::abs(expected - 0.5878) < 1e-4, "-log(5/9) reference mismatch");
    auto flat = torch::zeros({4, 6}, torch::kFloat64);
    PartitionedLatent latent(flat, 2);
    EmptyPartBank bank{torch::zeros({1, 6}, torch::kFloat64), 2};
    auto uniform = [](const torch::Tensor& p) {
      return torch::full({p.size(0), 3}, 1.0 / 3.0, p.options());
    };
    near(fuzzy_classification_loss(latent, uniform, bank, 0.0, 1e-7).item<double>(),
         2 * expected, "fuzzy uniform 3-class, two parts");
    // the empty-anchor term adds tau * mean_k(-log p0_k[empty])
    near(fuzzy_classification_loss(latent, uniform, bank, 1.0, 1e-7).item<double>(),
         2 * expected + std::log(3.0), "fuzzy uniform with empty anchor");

    // perfect classification scores zero: each part one-hot at its own
    // class, the empty parts one-hot at class 0
    auto tagged = torch::zeros({1, 2}, torch::kFloat64);
    tagged[0][0] = 10.0;
    tagged[0][1] = 20.0;
    EmptyPartBank pair_bank{torch::zeros({1, 2}, torch::kFloat64), 2};
    auto by_value = [](const torch::Tensor& p) {
      auto out = torch::zeros({p.size(0), 3}, p.options());
      for (int64_t b = 0; b < p.size(0); ++b) {
        const double v = p[b][0].item<double>();
        out[b][v == 10.0 ? 1 : (v == 20.0 ? 2 : 0)] = 1.0;
      }
      return out;
    };
    near(fuzzy_classification_loss(PartitionedLatent(tagged, 2), by_value, pair_bank, 1.0, 1e-7)
             .item<double>(),
         0.0, "fuzzy one-hot own class");

    // a part confidently predicted empty also satisfies the fuzzy OR
    auto always_empty = [](const torch::Tensor& p) {
      auto out = torch::zeros({p.size(0), 3}, p.options());
      out.select(1, 0).fill_(1.0);
      return out;
    };
    near(fuzzy_classification_loss(latent, always_empty, bank, 1.0, 1e-7).item<double>(), 0.0,
         "fuzzy one-hot empty class");
  }

  // removing loss: squared error on codes, plus omega times squared error on
  // the empty-image reconstruction
  {
    auto rc = torch::zeros({1, 4}, torch::kFloat64);
    auto ie = torch::zeros({1, 1, 2, 2}, torch::kFloat64);
    near(object_removing_loss(rc, rc, ie, ie, 3.0).item<double>(), 0.0, "rem identity");
    auto rc2 = rc.clone();
    rc2[0][1] = 3.0;
    near(object_removing_loss(rc, rc2, ie, ie, 2.0).item<double>(), 9.0,
         "rem code bump");
    auto ie2 = ie.clone();
    ie2[0][0][0][0] = 2.0;
    near(object_removing_loss(rc, rc, ie, ie2, 2.0).item<double>(), 8.0,
         "rem empty-image bump");
  }

  // adversarial term is minus the mean critic score, so pushing it down
  // raises the score
  {
    auto fake = torch::rand({3, 1, 4, 4}, at::detail::createCPUGenerator(11), torch::kFloat64);
    auto zero_critic = [](const torch::Tensor& x) { return x.flatten(1).sum(1) * 0.0; };
    near(generator_adversarial_term(zero_critic, fake).item<double>(), 0.0,
         "adv term, zero critic");
    auto const_critic = [](const torch::Tensor& x) {
      return x.flatten(1).sum(1) * 0.0 + 3.25;
    };
    near(generator_adversarial_term(const_critic, fake).item<double>(), -3.25,
         "adv term, constant critic");

    auto w = torch::randn({16}, at::detail::createCPUGenerator(12), torch::kFloat64);
    auto linear = [&](const torch::Tensor& x) { return x.flatten(1).matmul(w); };
    auto x = fake.clone().requires_grad_(true);
    auto term = generator_adversarial_term(linear, x);
    term.backward();
    auto stepped = (x - 0.1 * x.grad()).detach();
    require(linear(stepped).mean().item<double>() > linear(fake).mean().item<double>(),
            "descending the adversarial term must raise the mean critic score");
  }

  // critic with constant output: unit penalty, loss = lambda
  {
    auto rng = make_rng(77, "accept-gp-const");
    auto real = torch::rand({3, 1, 4, 4},
                            at::detail::createCPUGenerator(5), torch::kFloat64);
    auto fake = torch::rand({3, 1, 4, 4},
                            at::detail::createCPUGenerator(6), torch::kFloat64);
    auto constant = [](const torch::Tensor& x) {
      return x.flatten(1).sum(1) * 0.0 + 2.5;
    };
    auto [loss, gp] = critic_loss_wgan_gp(constant, real, fake, 10.0, rng,
                                          GpSampling::kInterpolated);
    near(gp.item<double>(), 1.0, "constant critic penalty");
    near(loss.item<double>(), 10.0, "constant critic loss");
  }

  // unit-norm linear critic: gradient norm is exactly 1, penalty 0
  {
    auto w = torch::ones({16}, torch::kFloat64) / 4.0;  // ||w|| = 1 for 4x4 inputs
    auto linear = [&](const torch::Tensor& x) { return x.flatten(1).matmul(w); };
    auto real = torch::rand({3, 1, 4, 4}, at::detail::createCPUGenerator(7), torch::kFloat64);
    auto fake = torch::rand({3, 1, 4, 4}, at::detail::createCPUGenerator(8), torch::kFloat64);
    auto rng = make_rng(78, "accept-gp-linear");
    auto [loss, gp] = critic_loss_wgan_gp(linear, real, fake, 10.0, rng,
                                          GpSampling::kInterpolated);
    near(gp.item<double>(), 0.0, "unit-gradient critic penalty");
    auto rng2 = make_rng(79, "accept-gp-linear2");
    auto [loss2, gp2] =
        critic_loss_wgan_gp(linear, real, fake, 10.0, rng2, GpSampling::kFakeOnly);
    near(gp2.item<double>(), 0.0, "unit-gradient critic penalty at fakes");
  }

  // weighted totals
  {
    LossWeights w;
    w.alpha = 1;
    w.beta = 1;
    w.gamma = 1;
    w.eta = 1;
    near(total_loss(0, 0, 0, 0, w).total, 0.0, "total at zero components");
    near(total_loss(1, 2, 3, 4, w).total, 10.0, "total at unit weights");
    w.alpha = 2;
    w.beta = 0.5;
    w.gamma = 1;
    w.eta = 0.1;
    near(total_loss(1, 2, 3, 4, w).total, 6.4, "total at mixed weights");
    // linear in each weight: second differences vanish
    for (double LossWeights::*field :
         {&LossWeights::alpha, &LossWeights::beta, &LossWeights::gamma, &LossWeights::eta}) {
      auto at = [&](double v) {
        LossWeights lw;
        lw.*field = v;
        return total_loss(1, 2, 3, 4, lw).total;
      };
      near(at(2.0) - 2 * at(1.0) + at(0.0), 0.0, "total linearity");
    }
  }

  // penalty against a direct finite-difference estimate of the gradient norm
  {
    auto gen = at::detail::createCPUGenerator(909);
    auto w1 = torch::randn({32, 64}, gen, torch::kFloat64) * 0.3;
    auto b1 = torch::randn({32}, gen, torch::kFloat64) * 0.1;
    auto w2 = torch::randn({32}, gen, torch::kFloat64) * 0.3;
    auto critic = [&](const torch::Tensor& x) {
      return torch::tanh(x.flatten(1).matmul(w1.t()) + b1).matmul(w2);
    };
    auto fake = torch::rand({4, 1, 8, 8}, gen, torch::kFloat64);
    auto real = torch::rand({4, 1, 8, 8}, gen, torch::kFloat64);
    auto rng = make_rng(80, "accept-gp-fd");
    auto [loss, gp] =
        critic_loss_wgan_gp(critic, real, fake, 10.0, rng, GpSampling::kFakeOnly);

    const double h = 1e-6;
    auto flat = fake.flatten(1);
    double penalty = 0;
    for (int64_t b = 0; b < 4; ++b) {
      double sq = 0;
      for (int64_t i = 0; i < 64; ++i) {
        auto plus = flat.clone();
        auto minus = flat.clone();
        plus[b][i] += h;
        minus[b][i] -= h;
        const double fp = critic(plus.view({4, 1, 8, 8}))[b].item<double>();
        const double fm = critic(minus.view({4, 1, 8, 8}))[b].item<double>();
        const double g = (fp - fm) / (2 * h);
        sq += g * g;
      }
      const double norm = std::sqrt(sq);
      penalty += (norm - 1.0) * (norm - 1.0);
    }
    penalty /= 4.0;
    const double rel = std::abs(gp.item<double>() - penalty) / std::max(1e-12, penalty);
    require(rel < 1e-2, "gp vs finite differences rel err " + str(rel));
  }

  return "all hand values within 1e-6";
}

// ---------------------------------------------------------------------------
// 3. Gradient checks through the real networks
// ---------------------------------------------------------------------------

std::string criterion_gradients(const Ctx&) {
  ArchitectureConfig arch;
  arch.image_size = 8;
  arch.n_parts = 2;
  arch.part_length = 3;
  arch.encoder_widths = {8, 16};
  arch.critic_widths = {8, 16};
  arch.classifier_hidden = 16;
  auto models = ModelBundle::create(arch, 3001, torch::kFloat64);
  models.train(true);

  auto gen = at::detail::createCPUGenerator(3002);
  auto batch = torch::rand({4, 1, 8, 8}, gen, torch::kFloat64);
  auto fixed_fake = torch::rand({4, 1, 8, 8}, gen, torch::kFloat64);
  auto empty = torch::zeros({1, 1, 8, 8}, torch::kFloat64);
  auto encode = [&](const torch::Tensor& x) { return models.encode(x); };
  auto critic_fn = [&](const torch::Tensor& x) { return models.critic->forward(x); };

  auto rec_eval = [&]() {
    auto code = models.encode(batch);
    auto recon = models.decode(code);
    return reconstruction_loss(batch, recon, code, models.encode(recon), 1.3);
  };
  auto cla_eval = [&]() {
    PartitionedLatent latent(models.encode(batch), arch.n_parts);
    auto bank = extract_empty_parts(encode, empty.squeeze(0), arch.n_parts);
    return fuzzy_classification_loss(
        latent, [&](const torch::Tensor& p) { return models.classifier->forward(p); }, bank, 0.9,
        1e-7);
  };
  auto rem_eval = [&]() {
    PartitionedLatent latent(models.encode(batch), arch.n_parts);
    auto bank = extract_empty_parts(encode, empty.squeeze(0), arch.n_parts);
    auto reset_code = reset_part(latent, 1, bank).concat();
    auto removed = models.decode(reset_code);
    return object_removing_loss(reset_code, models.encode(removed), empty,
                                models.decode(bank.code), 1.7);
  };
  auto critic_eval = [&]() {
    auto rng = make_rng(3003, "accept-critic-fd");  // same interpolation each call
    auto [loss, gp] = critic_loss_wgan_gp(critic_fn, batch, fixed_fake, 10.0, rng,
                                          GpSampling::kInterpolated);
    return loss;
  };
  auto adv_eval = [&]() {
    return generator_adversarial_term(critic_fn, models.decode(models.encode(batch)));
  };
  LossWeights w;
  w.beta = 0.1;
  w.eta = 0.01;
  auto total_eval = [&]() {
    return weighted_total(rec_eval(), cla_eval(), rem_eval(), adv_eval(), w);
  };

  auto all_params = models.generator_parameters();
  for (auto& p : models.critic_parameters()) all_params.push_back(p);

  // Nudge every parameter off its initial value. Zero biases would leave the
  // all-zero empty image's pre-activations exactly on activation kinks, where
  // central differences and the subgradient legitimately disagree.
  {
    torch::NoGradGuard no_grad;
    auto pgen = at::detail::createCPUGenerator(3005);
    for (auto& p : all_params) p.add_(torch::randn(p.sizes(), pgen, torch::kFloat64) * 0.05);
  }

  std::mt19937_64 pick_rng = make_rng(3004, "accept-fd-picks");
  int checked = 0;
  double worst = 0;
  auto fd_check = [&](const char* name, const std::function<torch::Tensor()>& eval) {
    for (auto& p : all_params)
      if (p.mutable_grad().defined()) p.mutable_grad().reset();
    eval().backward();
    const double h = 1e-6;
    for (auto& p : all_params) {
      if (!p.grad().defined()) continue;  // loss does not touch this tensor
      auto analytic = p.grad().detach().clone().flatten();
      auto flat = p.detach().flatten();
      std::uniform_int_distribution<int64_t> pick(0, flat.size(0) - 1);
      for (int rep = 0; rep < 2; ++rep) {
        const int64_t i = pick(pick_rng);
        const double orig = flat[i].item<double>();
        flat[i] = orig + h;
        const double fp = eval().item<double>();
        flat[i] = orig - h;
        const double fm = eval().item<double>();
        flat[i] = orig;
        const double fd = (fp - fm) / (2 * h);
        const double an = analytic[i].item<double>();
        const double rel = std::abs(fd - an) / std::max(1.0, std::abs(an));
        worst = std::max(worst, rel);
        require(rel < 1e-4, std::string(name) + " gradient mismatch at a " +
                                str(flat.size(0)) + "-dim tensor: fd " + str(fd) + " vs " +
                                str(an));
        ++checked;
      }
    }
  };

  fd_check("reconstruction", rec_eval);
  fd_check("classification", cla_eval);
  fd_check("removing", rem_eval);

  // the removing loss must reach both networks, not just the codes
  {
    for (auto& p : all_params)
      if (p.mutable_grad().defined()) p.mutable_grad().reset();
    rem_eval().backward();
    auto touched = [](const std::vector<torch::Tensor>& params) {
      for (auto& p : params)
        if (p.grad().defined() && p.grad().abs().sum().item<double>() > 0) return true;
      return false;
    };
    require(touched(models.encoder->parameters()),
            "removing loss leaves encoder gradients zero");
    require(touched(models.decoder->parameters()),
            "removing loss leaves decoder gradients zero");
  }
  fd_check("critic", critic_eval);
  fd_check("adversarial", adv_eval);
  fd_check("total", total_eval);
  return str(checked) + " coordinates, worst rel err " + str(worst);
}

// ---------------------------------------------------------------------------
// 4. Dataset determinism and probe invariants
// ---------------------------------------------------------------------------

std::string criterion_data_determinism(const Ctx& ctx) {
  ensure_digits(ctx);
  auto layout = SlotLayout::multi_mnist(3);
  auto glyphs = load_source_digits(ctx.digits, layout.digit_classes());

  // byte-identical regeneration
  const fs::path a = ctx.root / "tmp" / "regen_a", b = ctx.root / "tmp" / "regen_b";
  fs::remove_all(a);
  fs::remove_all(b);
  DatasetSpec spec;
  spec.layout = layout;
  spec.n_samples = 64;
  spec.seed = 4001;
  spec.source_digits = ctx.digits;
  generate_dataset(spec, glyphs, a);
  generate_dataset(spec, glyphs, b);
  std::vector<fs::path> rel;
  for (auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) rel.push_back(fs::relative(e.path(), a));
  std::sort(rel.begin(), rel.end());
  require(rel.size() >= 66, "regenerated dataset unexpectedly small");
  for (auto& r : rel)
    require(read_text_file(a / r) == read_text_file(b / r),
            "regeneration differs at " + r.string());

  // probe fixedness and ground-truth locality, checked pixel-exactly at
  // offset 0 where neighboring jitter cannot reach into the fixed box
  auto layout0 = SlotLayout::multi_mnist(0);
  auto glyphs0 = load_source_digits(ctx.digits, layout0.digit_classes());
  int64_t probes = 0;
  for (int64_t s = 0; s < layout0.n_slots(); ++s) {
    auto ps = generate_probe_set(layout0, glyphs0, 34, 10, s,
                                 derive_seed(4002, "slot-" + std::to_string(s)));
    const auto& slot = layout0.slots[size_t(s)];
    for (int64_t t = 0; t < ps.T; ++t) {
      auto [br, bc] = ps.fixed_boxes[size_t(t)];
      auto box = [&](const torch::Tensor& img) {
        return img.index({0, torch::indexing::Slice(br, br + slot.size),
                          torch::indexing::Slice(bc, bc + slot.size)});
      };
      auto ref = box(ps.images[t * ps.D]);
      require(ref.abs().sum().item<double>() > 0, "fixed slot is empty in a probe group");
      for (int64_t d = 0; d < ps.D; ++d) {
        const auto img = ps.images[t * ps.D + d];
        const auto gt = ps.ground_truths[t * ps.D + d];
        require(torch::equal(box(img), ref), "fixed box changed across a probe group");
        require(box(gt).abs().sum().item<double>() == 0.0, "ground truth keeps the fixed box");
        auto expected = img.clone();
        expected.index({0, torch::indexing::Slice(br, br + slot.size),
                        torch::indexing::Slice(bc, bc + slot.size)})
            .zero_();
        require(torch::equal(gt, expected), "ground truth differs outside the fixed box");
        ++probes;
      }
    }
  }
  require(probes >= 1000, "only " + str(probes) + " probes sampled");
  return str(probes) + " probes, regeneration byte-identical";
}

// ---------------------------------------------------------------------------
// 5-8. Smoke training and everything scored on it
// ---------------------------------------------------------------------------

struct SmokeSettings {
  int64_t n_samples = 10000;
  int64_t steps = 15000;
  int64_t batch = 32;
};

fs::path smoke_dataset(const Ctx& ctx) {
  return ensure_dataset(ctx, "multi_mnist_10k", SlotLayout::multi_mnist(0), SmokeSettings{}.n_samples,
                        5001);
}

TrainConfig smoke_config(const Ctx& ctx, const std::string& run_name) {
  SmokeSettings s;
  TrainConfig cfg;
  cfg.arch = desk_arch(3, 5);
  cfg.batch_size = s.batch;
  cfg.total_steps = s.steps;
  cfg.critic_steps = 5;
  cfg.checkpoint_every = 1000;
  cfg.seed = 101;
  cfg.data_dir = smoke_dataset(ctx).string();
  cfg.out_dir = (ctx.root / "runs" / run_name).string();
  return cfg;
}

fs::path smoke_checkpoint(const Ctx& ctx) {
  auto cfg = smoke_config(ctx, "udor_smoke");
  auto data = load_dataset(cfg.data_dir);
  return run_training(data, cfg, "udor_smoke").final_checkpoint;
}

std::string criterion_smoke_training(const Ctx& ctx) {
  auto cfg = smoke_config(ctx, "udor_smoke");
  auto data = load_dataset(cfg.data_dir);
  auto result = run_training(data, cfg, "udor_smoke");

  auto rows = read_csv_rows(result.log_path);
  require(int64_t(rows.size()) == cfg.total_steps,
          "expected " + str(cfg.total_steps) + " logged steps, found " + str(rows.size()));
  for (auto& row : rows)
    for (double v : row) require(std::isfinite(v), "non-finite value in the training log");

  auto mean_rec = [&](size_t from, size_t count) {
    double sum = 0;
    for (size_t i = from; i < from + count; ++i) sum += rows[i][1];
    return sum / double(count);
  };
  const double first = mean_rec(0, 500);
  const double last = mean_rec(rows.size() - 500, 500);
  require(last < 0.25 * first, "reconstruction did not drop enough: first-500 mean " +
                                   str(first) + ", last-500 mean " + str(last));
  return "rec " + str(first) + " -> " + str(last) + " (" + str(100 * last / first) + "%)";
}

std::string criterion_removal(const Ctx& ctx) {
  auto ckpt = smoke_checkpoint(ctx);
  auto [models, cfg] = load_models(ckpt);
  models.train(false);
  auto data_info = load_dataset_info(cfg.data_dir);
  auto glyphs = load_source_digits(ctx.digits, data_info.layout.digit_classes());

  std::vector<ProbeSet> sets;
  for (int64_t s = 0; s < models.arch.n_parts; ++s)
    sets.push_back(generate_probe_set(data_info.layout, glyphs, 17, 10, s,
                                      derive_seed(6001, "probe-" + std::to_string(s))));
  auto assignment = which_part_maps_to_slot(models, sets);

  torch::NoGradGuard no_grad;
  auto bank = [&] {
    auto empty = torch::zeros({1, models.arch.image_size, models.arch.image_size});
    return extract_empty_parts([&](const torch::Tensor& x) { return models.encode(x); }, empty,
                               models.arch.n_parts);
  }();

  double before_sum = 0, after_sum = 0;
  int64_t count = 0;
  for (int64_t s = 0; s < models.arch.n_parts; ++s) {
    const auto& ps = sets[size_t(s)];
    const auto& slot = data_info.layout.slots[size_t(s)];
    PartitionedLatent latent(models.encode(ps.images), models.arch.n_parts);
    auto cleared = models.decode(
        reset_part(latent, assignment.slot_to_part[size_t(s)], bank).concat());
    for (int64_t t = 0; t < ps.T; ++t) {
      auto [br, bc] = ps.fixed_boxes[size_t(t)];
      for (int64_t d = 0; d < ps.D; ++d) {
        before_sum += slot_clearance(ps.images[t * ps.D + d], int(br), int(bc), slot.size);
        after_sum += slot_clearance(cleared[t * ps.D + d], int(br), int(bc), slot.size);
        ++count;
      }
    }
  }
  const double before = before_sum / double(count), after = after_sum / double(count);
  require(count >= 500, "only " + str(count) + " probes scored");
  require(after < 0.5 * before, "cleared-slot intensity " + str(after) +
                                    " not below half of " + str(before));
  return str(count) + " probes, slot intensity " + str(before) + " -> " + str(after);
}

std::string criterion_ablations(const Ctx& ctx) {
  const fs::path data_dir = smoke_dataset(ctx);
  auto data = load_dataset(data_dir);
  auto glyphs = load_source_digits(ctx.digits, data.layout.digit_classes());

  EvalSpec eval;
  eval.T = 50;
  eval.D = 10;
  eval.seed = 7777;
  eval.with_probe_scores = false;

  const std::vector<uint64_t> seeds = {7101, 7102, 7103};
  const std::vector<std::string> methods = {"udor", "udor-norem", "udor-nogan"};
  std::map<std::pair<uint64_t, std::string>, MetricReport> reports;
  for (uint64_t seed : seeds) {
    for (const auto& method : methods) {
      auto cfg = apply_method(smoke_config(ctx, ""), method);
      cfg.total_steps = 5000;
      cfg.checkpoint_every = 2500;
      cfg.seed = seed;
      cfg.out_dir =
          (ctx.root / "runs" / ("abl_" + std::to_string(seed) + "_" + method)).string();
      const std::string label = "abl_" + std::to_string(seed) + "_" + method;
      auto trained = run_training(data, cfg, label);
      reports[{seed, method}] =
          eval_cached(fs::path(cfg.out_dir) / "accept_eval.json", trained.final_checkpoint,
                      data.layout, glyphs, eval);
    }
  }

  int m_wins = 0, v_wins = 0;
  std::ostringstream detail;
  for (uint64_t seed : seeds) {
    const auto& full = reports[{seed, "udor"}];
    const auto& norem = reports[{seed, "udor-norem"}];
    const auto& nogan = reports[{seed, "udor-nogan"}];
    if (full.modularity < norem.modularity) ++m_wins;
    if (full.integrity < nogan.integrity) ++v_wins;
    detail << " [seed " << seed << ": M " << str(full.modularity) << " vs "
           << str(norem.modularity) << ", V " << str(full.integrity) << " vs "
           << str(nogan.integrity) << "]";
  }
  require(m_wins >= 2, "M(full) < M(no-removal) held in only " + str(m_wins) + "/3 seeds:" +
                           detail.str());
  require(v_wins >= 2, "V(full) < V(no-critic) held in only " + str(v_wins) + "/3 seeds:" +
                           detail.str());
  return "M ordering " + str(m_wins) + "/3, V ordering " + str(v_wins) + "/3," + detail.str();
}

std::string criterion_linear_probe(const Ctx& ctx) {
  auto data_dir = smoke_dataset(ctx);
  auto info = load_dataset_info(data_dir);
  auto glyphs = load_source_digits(ctx.digits, info.layout.digit_classes());

  EvalSpec eval;
  eval.T = 50;
  eval.D = 10;
  eval.seed = 8888;
  eval.with_probe_scores = true;
  eval.probe_train_samples = 2000;
  eval.probe_test_samples = 1000;

  auto udor_ckpt = smoke_checkpoint(ctx);
  auto udor_report = eval_cached(udor_ckpt.parent_path() / "accept_eval_probe.json", udor_ckpt,
                                 info.layout, glyphs, eval);

  auto sae_cfg = smoke_config(ctx, "sae_smoke");
  sae_cfg.supervised_baseline = true;
  auto data = load_dataset(data_dir);
  auto sae_ckpt = run_training(data, sae_cfg, "sae_smoke").final_checkpoint;
  auto sae_report = eval_cached(sae_ckpt.parent_path() / "accept_eval_probe.json", sae_ckpt,
                                info.layout, glyphs, eval);

  require(udor_report.micro_f1 >= 90.0,
          "unsupervised micro-F1 " + str(udor_report.micro_f1) + " < 90.0");
  require(sae_report.micro_f1 >= 95.0,
          "supervised-baseline micro-F1 " + str(sae_report.micro_f1) + " < 95.0");
  return "micro-F1 " + str(udor_report.micro_f1) + " (unsupervised), " +
         str(sae_report.micro_f1) + " (supervised baseline)";
}

// ---------------------------------------------------------------------------
// 9. Offset trend
// ---------------------------------------------------------------------------

std::string criterion_offset_trend(const Ctx& ctx) {
  EvalSpec eval;
  eval.T = 50;
  eval.D = 10;
  eval.seed = 9999;
  eval.with_probe_scores = false;

  std::map<int, double> integrity;
  for (int offset : {0, 11}) {
    auto layout = SlotLayout::two_digit(offset);
    auto data_dir = ensure_dataset(ctx, "two_digit_off" + std::to_string(offset), layout, 8000,
                                   derive_seed(9001, "off-" + std::to_string(offset)));
    auto data = load_dataset(data_dir);
    auto glyphs = load_source_digits(ctx.digits, layout.digit_classes());

    TrainConfig cfg;
    cfg.arch = desk_arch(2, 5);
    cfg.batch_size = 32;
    cfg.total_steps = 6000;
    cfg.critic_steps = 5;
    cfg.checkpoint_every = 2000;
    cfg.seed = 301;
    cfg.data_dir = data_dir.string();
    cfg.out_dir = (ctx.root / "runs" / ("offset_" + std::to_string(offset))).string();
    const std::string label = "offset_" + std::to_string(offset);
    auto trained = run_training(data, cfg, label);
    auto report = eval_cached(fs::path(cfg.out_dir) / "accept_eval.json",
                              trained.final_checkpoint, layout, glyphs, eval);
    integrity[offset] = report.integrity;
  }
  require(integrity[0] < integrity[11], "V(offset 0) = " + str(integrity[0]) +
                                            " not below V(offset 11) = " + str(integrity[11]));
  return "V(0) " + str(integrity[0]) + " < V(11) " + str(integrity[11]);
}

// ---------------------------------------------------------------------------
// 10. Latent operation properties
// ---------------------------------------------------------------------------

std::string criterion_latent_properties(const Ctx&) {
  std::mt19937_64 rng = make_rng(10001, "latent-props");
  std::uniform_int_distribution<int64_t> n_dist(1, 6), len_dist(1, 6), batch_dist(1, 4);
  auto rand_u64 = [&] { return rng(); };
  int64_t cases = 0;

  // split/concat round-trip
  for (int i = 0; i < 5000; ++i) {
    const int64_t n = n_dist(rng), len = len_dist(rng), B = batch_dist(rng);
    auto gen = at::detail::createCPUGenerator(rand_u64());
    auto flat = torch::randn({B, n * len}, gen, torch::kFloat32);
    PartitionedLatent latent(flat, n);
    require(torch::equal(latent.concat(), flat), "split/concat changed the code");
    require(latent.part(n - 1).size(1) == len, "part width mismatch");
    ++cases;
  }

  // reset: idempotent, and the source tensors stay untouched
  for (int i = 0; i < 2500; ++i) {
    const int64_t n = n_dist(rng), len = len_dist(rng), B = batch_dist(rng);
    auto gen = at::detail::createCPUGenerator(rand_u64());
    auto flat = torch::randn({B, n * len}, gen, torch::kFloat32);
    auto flat_copy = flat.clone();
    EmptyPartBank bank{torch::randn({1, n * len}, gen, torch::kFloat32), n};
    std::uniform_int_distribution<int64_t> part(0, n - 1);
    const int64_t k = part(rng);
    PartitionedLatent latent(flat, n);
    auto once = reset_part(latent, k, bank).concat();
    auto twice = reset_part(PartitionedLatent(once, n), k, bank).concat();
    require(torch::equal(once, twice), "reset is not idempotent");
    require(torch::equal(flat, flat_copy), "reset mutated its input");
    require(torch::equal(PartitionedLatent(once, n).part(k),
                         bank.part(k).expand({B, len})),
            "reset part does not equal the empty vector");
    ++cases;
  }

  // swap with itself is the identity
  for (int i = 0; i < 2000; ++i) {
    const int64_t n = n_dist(rng), len = len_dist(rng), B = batch_dist(rng);
    auto gen = at::detail::createCPUGenerator(rand_u64());
    auto flat = torch::randn({B, n * len}, gen, torch::kFloat32);
    std::uniform_int_distribution<int64_t> part(0, n - 1);
    const int64_t k = part(rng);
    PartitionedLatent latent(flat, n);
    require(torch::equal(swap_part(latent, latent, k).concat(), flat),
            "self-swap changed the code");
    ++cases;
  }

  // assignment follows part permutations on synthetic codes
  std::uniform_int_distribution<int64_t> np_dist(2, 4);
  for (int i = 0; i < 500; ++i) {
    const int64_t n = np_dist(rng), len = 2, T = 4, D = 3;
    std::vector<int64_t> planted(static_cast<size_t>(n));
    std::vector<int64_t> perm(static_cast<size_t>(n));
    for (int64_t k = 0; k < n; ++k) planted[size_t(k)] = perm[size_t(k)] = k;
    std::shuffle(planted.begin(), planted.end(), rng);
    std::shuffle(perm.begin(), perm.end(), rng);

    std::vector<torch::Tensor> codes;
    for (int64_t s = 0; s < n; ++s) {
      auto gen = at::detail::createCPUGenerator(rand_u64());
      auto stack = torch::rand({T, D, n * len}, gen, torch::kFloat64) * 4.0 - 2.0;
      auto frozen = torch::rand({T, 1, len}, gen, torch::kFloat64) * 4.0 - 2.0;
      stack.narrow(2, planted[size_t(s)] * len, len).copy_(frozen.expand({T, D, len}));
      codes.push_back(stack);
    }
    auto base = assignment_from_codes(codes, n);
    require(base.slot_to_part == planted, "assignment missed the planted map");

    std::vector<torch::Tensor> shuffled;
    for (auto& c : codes) {
      auto out = torch::empty_like(c);
      for (int64_t k = 0; k < n; ++k)
        out.narrow(2, perm[size_t(k)] * len, len).copy_(c.narrow(2, k * len, len));
      shuffled.push_back(out);
    }
    auto moved = assignment_from_codes(shuffled, n);
    for (int64_t s = 0; s < n; ++s)
      require(moved.slot_to_part[size_t(s)] == perm[size_t(planted[size_t(s)])],
              "assignment did not follow the permutation");
    ++cases;
  }

  require(cases == 10000, "expected 10000 cases, ran " + str(cases));
  return "10000 randomized cases, zero failures";
}

}  // namespace

// ---------------------------------------------------------------------------

int main(int argc, char** argv) {
  torch::set_num_threads(1);

  CLI::App app{"acceptance criteria runner"};
  std::string only;
  std::string dir = UDOR_ACCEPT_DEFAULT;
  std::string digits;
  app.add_option("--only", only, "comma-separated criterion numbers (default: all)");
  app.add_option("--dir", dir, "artifact root for datasets, runs, and caches")
      ->capture_default_str();
  app.add_option("--digits", digits, "source digit archive (default: <repo>/data/digits)");
  CLI11_PARSE(app, argc, argv);

  Ctx ctx;
  ctx.root = fs::path(dir);
  ctx.repo = fs::path(UDOR_REPO_DIR);
  ctx.digits = digits.empty() ? ctx.repo / "data" / "digits" : fs::path(digits);
  fs::create_directories(ctx.root);

  std::vector<int> wanted;
  if (!only.empty()) {
    std::stringstream ss(only);
    std::string tok;
    while (std::getline(ss, tok, ',')) wanted.push_back(std::stoi(tok));
  }
  auto selected = [&](int id) {
    return wanted.empty() || std::find(wanted.begin(), wanted.end(), id) != wanted.end();
  };

  struct Criterion {
    int id;
    const char* title;
    std::function<std::string(const Ctx&)> fn;
  };
  const std::vector<Criterion> criteria = {
      {1, "metric oracles", criterion_metric_oracles},
      {2, "loss unit values", criterion_loss_units},
      {3, "gradient checks", criterion_gradients},
      {4, "dataset determinism and probe invariants", criterion_data_determinism},
      {5, "smoke training", criterion_smoke_training},
      {6, "removal behavior", criterion_removal},
      {7, "ablation orderings", criterion_ablations},
      {8, "linear probe", criterion_linear_probe},
      {9, "offset trend", criterion_offset_trend},
      {10, "latent operation properties", criterion_latent_properties},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected(c.id)) {
      std::cout << "[SKIP] " << c.id << " " << c.title << "\n";
      continue;
    }
    const auto started = std::chrono::steady_clock::now();
    try {
      const std::string detail = c.fn(ctx);
      const double s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      std::cout << "[PASS] " << c.id << " " << c.title << ": " << detail << " (" << str(s)
                << " s)\n";
    } catch (const std::exception& e) {
      const double s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      std::cout << "[FAIL] " << c.id << " " << c.title << ": " << e.what() << " (" << str(s)
                << " s)\n";
      ++failures;
    }
    std::cout.flush();
  }
  return failures == 0 ? 0 : 1;
}
