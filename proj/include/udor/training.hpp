#ifndef UDOR_TRAINING_HPP
#define UDOR_TRAINING_HPP

#include <torch/torch.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "udor/checkpoint.hpp"
#include "udor/common.hpp"
#include "udor/latent.hpp"
#include "udor/losses.hpp"
#include "udor/networks.hpp"
#include "udor/optim.hpp"
#include "udor/synthdata.hpp"

namespace udor {

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

struct TrainConfig {
  ArchitectureConfig arch;
  LossWeights loss_weights;
  AdamConfig adam;  // both parameter groups use the same optimizer settings
  int64_t batch_size = 32;
  int64_t total_steps = 15000;   // generator steps
  int64_t critic_steps = 5;      // critic updates before each generator update
  uint64_t seed = 0;
  bool disable_rem = false;      // ablation: drop the object-removing term
  bool disable_gan = false;      // ablation: drop the adversarial game entirely
  bool supervised_baseline = false;  // replace cla by labeled cross entropy, rem/adv off
  GpSampling gp_sampling = GpSampling::kInterpolated;
  RemovalPolicy removal_policy = RemovalPolicy::kSinglePart;
  int64_t checkpoint_every = 1000;
  std::string data_dir;  // dataset directory (resolved against UDOR_DATA_DIR)
  std::string out_dir;   // run artifacts: checkpoints, log, config echo

  bool rem_enabled() const { return !disable_rem && !supervised_baseline; }
  bool gan_enabled() const { return !disable_gan && !supervised_baseline; }

  void validate() const {
    arch.validate();
    loss_weights.validate();
    adam.validate();
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (total_steps < 0) throw ConfigError("total_steps must be >= 0");
    if (gan_enabled() && critic_steps < 1)
      throw ConfigError("critic_steps must be >= 1 while the adversarial game is enabled");
    if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
  }

  nlohmann::json to_json() const {
    return {{"arch", arch.to_json()},
            {"loss_weights", loss_weights.to_json()},
            {"adam", adam.to_json()},
            {"batch_size", batch_size},
            {"total_steps", total_steps},
            {"critic_steps", critic_steps},
            {"seed", seed},
            {"disable_rem", disable_rem},
            {"disable_gan", disable_gan},
            {"supervised_baseline", supervised_baseline},
            {"gp_sampling", gp_sampling == GpSampling::kInterpolated ? "interpolated" : "fake_only"},
            {"removal_policy", removal_policy == RemovalPolicy::kSinglePart ? "single" : "subset"},
            {"checkpoint_every", checkpoint_every},
            {"data_dir", data_dir},
            {"out_dir", out_dir}};
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    if (j.contains("arch")) c.arch = ArchitectureConfig::from_json(j.at("arch"));
    if (j.contains("loss_weights")) c.loss_weights = LossWeights::from_json(j.at("loss_weights"));
    if (j.contains("adam")) c.adam = AdamConfig::from_json(j.at("adam"));
    c.batch_size = j.value("batch_size", c.batch_size);
    c.total_steps = j.value("total_steps", c.total_steps);
    c.critic_steps = j.value("critic_steps", c.critic_steps);
    c.seed = j.value("seed", c.seed);
    c.disable_rem = j.value("disable_rem", c.disable_rem);
    c.disable_gan = j.value("disable_gan", c.disable_gan);
    c.supervised_baseline = j.value("supervised_baseline", c.supervised_baseline);
    const std::string gs = j.value("gp_sampling", "interpolated");
    if (gs == "interpolated") c.gp_sampling = GpSampling::kInterpolated;
    else if (gs == "fake_only") c.gp_sampling = GpSampling::kFakeOnly;
    else throw ConfigError("gp_sampling must be 'interpolated' or 'fake_only'");
    const std::string rp = j.value("removal_policy", "single");
    if (rp == "single") c.removal_policy = RemovalPolicy::kSinglePart;
    else if (rp == "subset") c.removal_policy = RemovalPolicy::kSubset;
    else throw ConfigError("removal_policy must be 'single' or 'subset'");
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.data_dir = j.value("data_dir", c.data_dir);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.validate();
    return c;
  }
};

struct RunningAverages {
  double rec = 0, cla = 0, rem = 0, adv_g = 0, adv_c = 0, gp = 0, total = 0;
  int64_t count = 0;

  void add(const LossBreakdown& b) {
    rec += b.rec;
    cla += b.cla;
    rem += b.rem;
    adv_g += b.adv_generator;
    adv_c += b.adv_critic;
    gp += b.gp;
    total += b.total;
    ++count;
  }
  double mean_rec() const { return count ? rec / double(count) : 0; }
  double mean_total() const { return count ? total / double(count) : 0; }

  nlohmann::json to_json() const {
    return {{"rec", rec}, {"cla", cla}, {"rem", rem},   {"adv_g", adv_g},
            {"adv_c", adv_c}, {"gp", gp},  {"total", total}, {"count", count}};
  }
  static RunningAverages from_json(const nlohmann::json& j) {
    RunningAverages r;
    r.rec = j.value("rec", 0.0);
    r.cla = j.value("cla", 0.0);
    r.rem = j.value("rem", 0.0);
    r.adv_g = j.value("adv_g", 0.0);
    r.adv_c = j.value("adv_c", 0.0);
    r.gp = j.value("gp", 0.0);
    r.total = j.value("total", 0.0);
    r.count = j.value("count", int64_t(0));
    return r;
  }
};

// ---------------------------------------------------------------------------
// State
// ---------------------------------------------------------------------------

struct TrainState {
  TrainConfig config;
  ModelBundle models;
  Adam gen_opt;
  Adam critic_opt;
  std::mt19937_64 data_rng;     // batch index draws
  std::mt19937_64 removal_rng;  // which parts a step resets
  std::mt19937_64 gp_rng;       // penalty interpolation coefficients
  torch::Tensor empty_image;    // [1,1,S,S] canonical empty canvas
  int64_t step = 0;             // completed generator steps
  RunningAverages averages;

  explicit TrainState(const TrainConfig& cfg)
      : config(cfg),
        models(ModelBundle::create(cfg.arch, derive_seed(cfg.seed, "model"))),
        gen_opt(models.generator_parameters(), cfg.adam),
        critic_opt(models.critic_parameters(), cfg.adam),
        data_rng(make_rng(cfg.seed, "data")),
        removal_rng(make_rng(cfg.seed, "removal")),
        gp_rng(make_rng(cfg.seed, "gp")),
        empty_image(torch::zeros({1, 1, cfg.arch.image_size, cfg.arch.image_size})) {
    cfg.validate();
  }
};

namespace detail {

inline std::pair<torch::Tensor, torch::Tensor> sample_batch(const LoadedDataset& data,
                                                            int64_t batch_size,
                                                            std::mt19937_64& rng) {
  const int64_t n = data.images.size(0);
  if (n < 1) throw ConfigError("dataset is empty");
  std::uniform_int_distribution<int64_t> pick(0, n - 1);
  std::vector<int64_t> idx(static_cast<size_t>(batch_size));
  for (auto& i : idx) i = pick(rng);
  auto sel = torch::tensor(idx, torch::kInt64);
  return {data.images.index_select(0, sel), data.labels.index_select(0, sel)};
}

inline void check_finite(const torch::Tensor& t, const char* component) {
  if (!t.isfinite().all().item<bool>())
    throw NumericError(std::string("non-finite ") + component + " loss at training step");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Steps
// ---------------------------------------------------------------------------

// One critic update: fakes are reset-reconstructions built from the current
// generator without gradients into it; only critic parameters move.
inline std::pair<double, double> critic_step(TrainState& state, const torch::Tensor& real_batch) {
  auto& cfg = state.config;
  if (!cfg.gan_enabled()) throw ConfigError("critic_step called with the adversarial game disabled");

  torch::Tensor fakes;
  {
    torch::NoGradGuard no_grad;
    auto bank = extract_empty_parts([&](const torch::Tensor& x) { return state.models.encode(x); },
                                    state.empty_image.squeeze(0), cfg.arch.n_parts);
    auto latent = state.models.encode_split(real_batch);
    auto indices = sample_removal_indices(cfg.arch.n_parts, state.removal_rng, cfg.removal_policy);
    fakes = state.models.decode(reset_parts(latent, indices, bank).concat());
  }

  auto critic_fn = [&](const torch::Tensor& x) { return state.models.critic->forward(x); };
  auto [loss, gp] = critic_loss_wgan_gp(critic_fn, real_batch, fakes, cfg.loss_weights.lambda_gp,
                                        state.gp_rng, cfg.gp_sampling);
  detail::check_finite(loss, "critic");
  state.critic_opt.zero_grad();
  loss.backward();
  state.critic_opt.step();
  return {loss.item<double>(), gp.item<double>()};
}

// One generator update covering both autoencoder paths:
//   R = encode(I), I' = decode(R), R' = encode(I')            (image path)
//   R0 = reset(R), I'0 = decode(R0), R'' = encode(I'0)        (removal path)
//   I'_e = decode(encode(empty))                              (empty anchor)
// `labels` is only consulted by the supervised baseline.
inline LossBreakdown generator_step(TrainState& state, const torch::Tensor& batch,
                                    const torch::Tensor& labels) {
  auto& cfg = state.config;
  auto& w = cfg.loss_weights;
  auto& models = state.models;
  const int64_t n = cfg.arch.n_parts;

  // critic weights stay frozen inside the generator graph
  if (cfg.gan_enabled()) models.set_critic_requires_grad(false);

  auto latent = models.encode_split(batch);
  auto image_recon = models.decode(latent.concat());
  auto code_recon = models.encode(image_recon);
  auto rec = reconstruction_loss(batch, image_recon, latent.concat(), code_recon, w.rho);

  auto bank = extract_empty_parts([&](const torch::Tensor& x) { return models.encode(x); },
                                  state.empty_image.squeeze(0), n);

  torch::Tensor cla;
  if (cfg.supervised_baseline) {
    if (!labels.defined() || labels.size(1) != n)
      throw ConfigError("supervised baseline needs per-slot labels");
    cla = torch::zeros({}, rec.options());
    for (int64_t k = 0; k < n; ++k)
      cla = cla + torch::nn::functional::cross_entropy(
                      models.classifier->logits(latent.part(k)), labels.select(1, k));
    cla = cla / double(n);
  } else {
    cla = fuzzy_classification_loss(
        latent, [&](const torch::Tensor& p) { return models.classifier->forward(p); }, bank, w.tau,
        w.log_eps);
  }

  torch::Tensor rem = torch::zeros({}, rec.options());
  torch::Tensor adv_g = torch::zeros({}, rec.options());
  if (cfg.rem_enabled() || cfg.gan_enabled()) {
    auto indices = sample_removal_indices(n, state.removal_rng, cfg.removal_policy);
    auto reset_code = reset_parts(latent, indices, bank).concat();
    auto removed_image = models.decode(reset_code);
    if (cfg.rem_enabled()) {
      auto reset_code_recon = models.encode(removed_image);
      auto empty_recon = models.decode(bank.code);
      rem = object_removing_loss(reset_code, reset_code_recon, state.empty_image, empty_recon,
                                 w.omega);
    }
    if (cfg.gan_enabled())
      adv_g = generator_adversarial_term(
          [&](const torch::Tensor& x) { return models.critic->forward(x); }, removed_image);
  }

  // scalar extraction doubles as the NaN gate with component attribution
  auto breakdown = total_loss(rec.item<double>(), cla.item<double>(), rem.item<double>(),
                              adv_g.item<double>(), w);

  auto total = weighted_total(rec, cla, rem, adv_g, w);
  state.gen_opt.zero_grad();
  total.backward();
  state.gen_opt.step();

  if (cfg.gan_enabled()) models.set_critic_requires_grad(true);
  return breakdown;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  nlohmann::json meta = {{"kind", "train-state"},
                         {"config", state.config.to_json()},
                         {"step", state.step},
                         {"rng",
                          {{"data", rng_state_string(state.data_rng)},
                           {"removal", rng_state_string(state.removal_rng)},
                           {"gp", rng_state_string(state.gp_rng)}}},
                         {"gen_opt_steps", state.gen_opt.step_counts()},
                         {"critic_opt_steps", state.critic_opt.step_counts()},
                         {"averages", state.averages.to_json()}};
  auto tensors = ckpt::named_model_tensors(state.models);
  auto add_opt = [&](const std::string& prefix, const Adam& opt) {
    for (size_t i = 0; i < opt.size(); ++i) {
      tensors.emplace_back(prefix + ".m." + std::to_string(i), opt.exp_avg()[i]);
      tensors.emplace_back(prefix + ".v." + std::to_string(i), opt.exp_avg_sq()[i]);
    }
  };
  add_opt("gen_opt", state.gen_opt);
  add_opt("critic_opt", state.critic_opt);
  ckpt::write(path, meta, tensors);
}

// Rebuilds a full TrainState from a checkpoint. When `expected_arch` is given,
// a checkpoint trained with a different architecture is rejected.
inline TrainState load_checkpoint(const std::filesystem::path& path,
                                  const std::optional<ArchitectureConfig>& expected_arch = {}) {
  auto loaded = ckpt::read(path);
  if (loaded.meta.value("kind", "") != "train-state")
    throw FormatError("'" + path.string() + "' does not hold a training state");
  TrainConfig config;
  try {
    config = TrainConfig::from_json(loaded.meta.at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config unreadable: ") + e.what());
  }
  if (expected_arch && !(config.arch == *expected_arch))
    throw FormatError("checkpoint was trained with a different architecture");

  TrainState state(config);
  ckpt::apply_model_tensors(state.models, loaded);

  auto load_opt = [&](const std::string& prefix, Adam& opt, const char* steps_key) {
    std::vector<int64_t> steps;
    try {
      steps = loaded.meta.at(steps_key).get<std::vector<int64_t>>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("checkpoint optimizer state unreadable: ") + e.what());
    }
    std::vector<torch::Tensor> m, v;
    for (size_t i = 0; i < opt.size(); ++i) {
      m.push_back(loaded.require(prefix + ".m." + std::to_string(i)));
      v.push_back(loaded.require(prefix + ".v." + std::to_string(i)));
    }
    opt.load_state(steps, m, v);
  };
  load_opt("gen_opt", state.gen_opt, "gen_opt_steps");
  load_opt("critic_opt", state.critic_opt, "critic_opt_steps");

  try {
    auto rng = loaded.meta.at("rng");
    rng_set_state(state.data_rng, rng.at("data").get<std::string>());
    rng_set_state(state.removal_rng, rng.at("removal").get<std::string>());
    rng_set_state(state.gp_rng, rng.at("gp").get<std::string>());
    state.step = loaded.meta.at("step").get<int64_t>();
    state.averages = RunningAverages::from_json(loaded.meta.value("averages", nlohmann::json::object()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata unreadable: ") + e.what());
  }
  return state;
}

// Inference-only loading: shares the checkpoint machinery but hands back just
// the models and the config they were trained with.
inline std::pair<ModelBundle, TrainConfig> load_models(const std::filesystem::path& path) {
  auto state = load_checkpoint(path);
  return {state.models, state.config};
}

inline std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& dir) {
  std::optional<std::filesystem::path> best;
  int64_t best_step = -1;
  if (!std::filesystem::is_directory(dir)) return best;
  for (auto& e : std::filesystem::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("ckpt_", 0) != 0 || e.path().extension() != ".bin") continue;
    try {
      const int64_t s = std::stoll(name.substr(5, name.size() - 5 - 4));
      if (s > best_step) {
        best_step = s;
        best = e.path();
      }
    } catch (...) {
      continue;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Loop
// ---------------------------------------------------------------------------

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path log_path;
  int64_t steps_run = 0;
  LossBreakdown last;
};

namespace detail {

inline std::string csv_row(int64_t step, const LossBreakdown& b) {
  std::ostringstream os;
  os.precision(10);
  os << step << ',' << b.rec << ',' << b.cla << ',' << b.rem << ',' << b.adv_generator << ','
     << b.adv_critic << ',' << b.gp << ',' << b.total;
  return os.str();
}

// keep only rows for steps <= resume point so the log matches the state
inline void truncate_log(const std::filesystem::path& log_path, int64_t max_step) {
  if (!std::filesystem::exists(log_path)) return;
  std::ifstream in(log_path);
  std::vector<std::string> keep;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (keep.empty() && line.rfind("step,", 0) == 0) {
      keep.push_back(line);
      continue;
    }
    try {
      if (std::stoll(line.substr(0, line.find(','))) <= max_step) keep.push_back(line);
    } catch (...) {
    }
  }
  in.close();
  std::ofstream out(log_path, std::ios::trunc);
  for (auto& l : keep) out << l << '\n';
}

}  // namespace detail

using ProgressFn = std::function<void(int64_t step, const LossBreakdown&)>;

// Alternating schedule: critic_steps critic updates, then one generator
// update, repeated until total_steps generator updates exist. Resumable: the
// latest ckpt_STEP.bin in out_dir (same architecture) continues seamlessly
// and replays the identical loss sequence.
inline TrainResult train(const LoadedDataset& data, const TrainConfig& config,
                         ProgressFn progress = {}, bool resume = true) {
  config.validate();
  if (config.out_dir.empty()) throw ConfigError("training needs an output directory");
  if (data.images.size(2) != config.arch.image_size)
    throw ConfigError("dataset image size does not match architecture");
  if (data.layout.slots.size() != size_t(config.arch.n_parts))
    throw ConfigError("dataset slot count does not match n_parts");

  const std::filesystem::path out_dir(config.out_dir);
  std::filesystem::create_directories(out_dir);
  const auto log_path = out_dir / "train_log.csv";

  std::optional<TrainState> state;
  if (resume) {
    if (auto ck = latest_checkpoint(out_dir)) {
      auto st = load_checkpoint(*ck, config.arch);
      if (st.step > config.total_steps)
        throw ConfigError("existing run at '" + out_dir.string() + "' already passed step " +
                          std::to_string(config.total_steps) + "; use a fresh out_dir");
      state.emplace(std::move(st));
    }
  }
  const bool fresh = !state.has_value();
  if (fresh) state.emplace(config);
  // training dynamics follow the caller's config (total_steps may extend a run)
  state->config = config;
  state->gen_opt.set_config(config.adam);
  state->critic_opt.set_config(config.adam);

  if (fresh || !std::filesystem::exists(log_path)) {
    std::ofstream log(log_path, std::ios::trunc);
    if (!log) throw IoError("cannot write training log '" + log_path.string() + "'");
    log << "step,rec,cla,rem,adv_g,adv_c,gp,total\n";
  } else {
    detail::truncate_log(log_path, state->step);
  }
  std::ofstream log(log_path, std::ios::app);
  if (!log) throw IoError("cannot append to training log '" + log_path.string() + "'");

  write_text_file(out_dir / "run.json", config.to_json().dump(2) + "\n");

  state->models.train(true);
  LossBreakdown last{};
  for (int64_t step = state->step + 1; step <= config.total_steps; ++step) {
    double adv_c_sum = 0, gp_sum = 0;
    if (config.gan_enabled()) {
      for (int64_t j = 0; j < config.critic_steps; ++j) {
        auto [real, labels] = detail::sample_batch(data, config.batch_size, state->data_rng);
        (void)labels;
        auto [cl, gp] = critic_step(*state, real);
        adv_c_sum += cl;
        gp_sum += gp;
      }
    }
    auto [batch, labels] = detail::sample_batch(data, config.batch_size, state->data_rng);
    auto breakdown = generator_step(*state, batch, labels);
    if (config.gan_enabled()) {
      breakdown.adv_critic = adv_c_sum / double(config.critic_steps);
      breakdown.gp = gp_sum / double(config.critic_steps);
    }
    state->step = step;
    state->averages.add(breakdown);
    log << detail::csv_row(step, breakdown) << '\n';
    log.flush();
    last = breakdown;
    if (progress) progress(step, breakdown);
    if (step % config.checkpoint_every == 0 || step == config.total_steps)
      save_checkpoint(*state, out_dir / ("ckpt_" + std::to_string(step) + ".bin"));
  }
  if (config.total_steps == 0 && fresh) save_checkpoint(*state, out_dir / "ckpt_0.bin");

  TrainResult result;
  result.final_checkpoint = out_dir / ("ckpt_" + std::to_string(state->step) + ".bin");
  result.log_path = log_path;
  result.steps_run = state->step;
  result.last = last;
  return result;
}

}  // namespace udor

#endif  // UDOR_TRAINING_HPP
