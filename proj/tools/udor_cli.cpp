// Command-line front end: dataset generation, training, evaluation, latent
// edits, sweeps, and plots. Exit codes: 0 ok, 2 configuration, 3 I/O,
// 4 numeric failure.

#include <torch/torch.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "udor/experiments.hpp"
#include "udor/image_io.hpp"
#include "udor/metrics.hpp"
#include "udor/plots.hpp"
#include "udor/synthdata.hpp"
#include "udor/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Config echo: the file is itself a valid --config input (extra keys are
// ignored on load).
void write_run_json(const fs::path& out_dir, const std::string& command, json config) {
  fs::create_directories(out_dir);
  config["version"] = udor::kVersion;
  config["command"] = command;
  udor::write_text_file(out_dir / "run.json", config.dump(2) + "\n");
}

json parse_json_file(const fs::path& path) {
  try {
    return json::parse(udor::read_text_file(path));
  } catch (const json::parse_error& e) {
    throw udor::ConfigError("cannot parse '" + path.string() + "': " + e.what());
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

// ---------------------------------------------------------------------------
// generate-data
// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string preset = "multi-mnist";
  int offset = 0;
  int64_t n = 0;
  uint64_t seed = 0;
  std::string out;
  std::string digits = "data/digits";
  double p_occupied = 0.75;
  int min_objects = 0;
};

int cmd_generate_data(const GenerateArgs& a) {
  udor::SlotLayout layout;
  if (a.preset == "multi-mnist") layout = udor::SlotLayout::multi_mnist(a.offset);
  else if (a.preset == "two-digit") layout = udor::SlotLayout::two_digit(a.offset);
  else throw udor::ConfigError("unknown preset '" + a.preset + "'");
  if (a.n <= 0) throw udor::ConfigError("--n must be positive");
  if (a.p_occupied < 0 || a.p_occupied > 1) throw udor::ConfigError("--p-occupied must be in [0,1]");

  auto glyphs = udor::load_source_digits(udor::resolve_data_path(a.digits), layout.digit_classes());
  udor::DatasetSpec spec;
  spec.layout = layout;
  spec.occupancy = {a.p_occupied, a.min_objects};
  spec.n_samples = a.n;
  spec.seed = a.seed;
  spec.source_digits = a.digits;
  udor::generate_dataset(spec, glyphs, a.out);

  write_run_json(a.out, "generate-data",
                 {{"preset", a.preset},
                  {"offset", a.offset},
                  {"n", a.n},
                  {"seed", a.seed},
                  {"out", a.out},
                  {"digits", a.digits},
                  {"p_occupied", a.p_occupied},
                  {"min_objects", a.min_objects}});
  std::cout << "wrote " << a.n << " samples to " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(udor::TrainConfig cfg, bool fresh, int64_t print_every) {
  cfg.validate();
  if (cfg.data_dir.empty()) throw udor::ConfigError("--data (or data_dir in the config) is required");
  if (cfg.out_dir.empty()) throw udor::ConfigError("--out (or out_dir in the config) is required");
  auto data = udor::load_dataset(udor::resolve_data_path(cfg.data_dir));

  auto progress = [&](int64_t step, const udor::LossBreakdown& b) {
    if (print_every > 0 && (step == 1 || step % print_every == 0))
      std::cerr << "step " << step << "  rec " << b.rec << "  cla " << b.cla << "  rem " << b.rem
                << "  adv_g " << b.adv_generator << "  total " << b.total << "\n";
  };
  auto result = udor::train(data, cfg, progress, /*resume=*/!fresh);
  write_run_json(cfg.out_dir, "train", cfg.to_json());
  std::cout << "final checkpoint: " << result.final_checkpoint.string() << "\n"
            << "training log:     " << result.log_path.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string ckpt;
  std::string data;    // dataset dir for layout + glyph source; default from checkpoint
  std::string digits;  // glyph archive override
  std::string out;
  udor::EvalSpec spec;
};

int cmd_eval(const EvalArgs& a) {
  auto [models, train_cfg] = udor::load_models(a.ckpt);
  const std::string data_dir = a.data.empty() ? train_cfg.data_dir : a.data;
  if (data_dir.empty())
    throw udor::ConfigError("no dataset directory: pass --data or use a checkpoint that records one");
  auto info = udor::load_dataset_info(udor::resolve_data_path(data_dir));
  auto digits_dir = a.digits.empty() ? info.source_digits : fs::path(a.digits);
  auto glyphs =
      udor::load_source_digits(udor::resolve_data_path(digits_dir), info.layout.digit_classes());

  auto report = udor::evaluate_model(models, info.layout, glyphs, a.spec);

  const fs::path out_dir = a.out.empty() ? fs::path(a.ckpt).parent_path() / "eval" : fs::path(a.out);
  fs::create_directories(out_dir);
  udor::write_text_file(out_dir / "report.json", report.to_json().dump(2) + "\n");
  write_run_json(out_dir, "eval",
                 {{"ckpt", a.ckpt}, {"data", data_dir}, {"eval", a.spec.to_json()}});
  std::cout << report.to_json().dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// edit
// ---------------------------------------------------------------------------

struct EditArgs {
  std::string ckpt;
  std::string input;
  std::string candidate;
  std::string out = "edits";
  int remove_part = -1;
};

int cmd_edit(const EditArgs& a) {
  auto [models, train_cfg] = udor::load_models(a.ckpt);
  const int64_t S = models.arch.image_size;

  std::vector<fs::path> input_paths;
  if (fs::is_directory(a.input)) {
    for (auto& e : fs::directory_iterator(a.input))
      if (e.path().extension() == ".png") input_paths.push_back(e.path());
    std::sort(input_paths.begin(), input_paths.end());
    if (input_paths.empty()) throw udor::IoError("no .png files under " + a.input);
  } else {
    if (!fs::exists(a.input)) throw udor::IoError("input image not found: " + a.input);
    input_paths.push_back(a.input);
  }

  auto load_image = [&](const fs::path& p) {
    auto img = udor::read_png(p);
    if (img.size(1) != S || img.size(2) != S)
      throw udor::ConfigError("image " + p.string() + " is not " + std::to_string(S) + "x" +
                              std::to_string(S));
    return img.unsqueeze(0);
  };

  torch::Tensor candidate = a.candidate.empty()
                                ? torch::zeros({1, 1, S, S})
                                : load_image(a.candidate);

  fs::create_directories(a.out);
  for (auto& p : input_paths) {
    auto input = load_image(p);
    auto edits = udor::apply_edits(models, input, candidate);
    const auto stem = p.stem().string();
    if (a.remove_part >= 0) {
      if (a.remove_part >= models.arch.n_parts) throw udor::ConfigError("--remove-part out of range");
      udor::write_png(fs::path(a.out) / (stem + "_removed_" + std::to_string(a.remove_part) + ".png"),
                      edits.removals[0][a.remove_part]);
    } else {
      udor::write_png(fs::path(a.out) / (stem + "_grid.png"),
                      udor::assemble_edit_grid(input, edits));
    }
  }
  write_run_json(a.out, "edit",
                 {{"ckpt", a.ckpt},
                  {"input", a.input},
                  {"candidate", a.candidate},
                  {"remove_part", a.remove_part},
                  {"n_inputs", input_paths.size()}});
  std::cout << "wrote " << input_paths.size() << " edit output(s) to " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

// --jobs prepass: one child process per cell, at most `jobs` in flight. Each
// child runs this same binary on a single-cell copy of the sweep file. The
// normal in-process pass afterwards reassembles rows from the cached per-cell
// reports, so a failed or killed child costs a retry, never a corrupt sweep.
void run_cells_in_processes(const udor::SweepSpec& spec, int jobs) {
  const fs::path dir = fs::path(spec.out_dir) / "cell_specs";
  fs::create_directories(dir);
  std::vector<fs::path> cell_specs;
  for (int64_t v : spec.values)
    for (const auto& m : spec.methods) {
      auto one = spec;
      one.values = {v};
      one.methods = {m};
      const auto p = dir / ("cell_" + std::to_string(v) + "_" + m + ".json");
      udor::write_text_file(p, one.to_json().dump(2) + "\n");
      cell_specs.push_back(p);
    }

  char exe[4096];
  const ssize_t len = ::readlink("/proc/self/exe", exe, sizeof(exe) - 1);
  if (len <= 0) throw udor::IoError("cannot resolve the running executable");
  exe[len] = '\0';

  size_t next = 0;
  int in_flight = 0;
  while (next < cell_specs.size() || in_flight > 0) {
    while (in_flight < jobs && next < cell_specs.size()) {
      const std::string sp = cell_specs[next++].string();
      const pid_t pid = ::fork();
      if (pid < 0) throw udor::IoError("fork failed");
      if (pid == 0) {
        ::execl(exe, exe, "sweep", "--spec", sp.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
      }
      ++in_flight;
    }
    int status = 0;
    if (::waitpid(-1, &status, 0) > 0) --in_flight;
  }
}

int cmd_sweep(const std::string& spec_path, bool allow_partial, int jobs) {
  auto spec = udor::SweepSpec::from_json(parse_json_file(spec_path));
  if (jobs < 1) throw udor::ConfigError("--jobs must be at least 1");
  if (jobs > 1 && spec.values.size() * spec.methods.size() > 1)
    run_cells_in_processes(spec, jobs);
  udor::SweepResult result;
  auto progress = [&](int64_t step, const udor::LossBreakdown& b) {
    if (step % 500 == 0) std::cerr << "  step " << step << " total " << b.total << "\n";
  };
  if (spec.variable == "part_length") {
    result = udor::run_part_length_sweep(spec, progress);
  } else {
    result = udor::run_offset_sweep(spec, progress);
  }
  write_run_json(spec.out_dir, "sweep", spec.to_json());

  const size_t ok = result.rows.size() - result.n_failed;
  std::cout << "sweep cells: " << ok << " ok, " << result.n_failed << " failed\n"
            << "results: " << result.csv_path.string() << "\n";
  for (auto& r : result.rows)
    if (r.failed)
      std::cerr << "cell " << spec.variable << "=" << r.value << " method=" << r.method
                << " failed: " << r.error << "\n";
  if (result.n_failed == 0) return 0;
  if (allow_partial && ok >= 1) return 0;
  throw udor::NumericError(std::to_string(result.n_failed) + " sweep cell(s) failed");
}

// ---------------------------------------------------------------------------
// plot
// ---------------------------------------------------------------------------

struct PlotArgs {
  std::string input;
  std::string out;
  std::string kind = "auto";  // loss | sweep
  std::string metric;         // loss: column name; sweep: modularity|integrity|micro_f1|...
};

int cmd_plot(const PlotArgs& a) {
  std::ifstream in(a.input);
  if (!in) throw udor::IoError("cannot open '" + a.input + "'");
  std::string header_line;
  if (!std::getline(in, header_line)) throw udor::FormatError("'" + a.input + "' is empty");
  auto header = split_csv_line(header_line);

  std::string kind = a.kind;
  if (kind == "auto") kind = header.size() > 1 && header[0] == "step" ? "loss" : "sweep";

  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(split_csv_line(line));
  if (rows.empty()) throw udor::FormatError("'" + a.input + "' has no data rows");

  auto column = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw udor::ConfigError("no column '" + name + "' in " + a.input);
    return size_t(it - header.begin());
  };

  std::vector<udor::plots::Series> series;
  std::string x_label, y_label, title;
  if (kind == "loss") {
    x_label = "step";
    y_label = "loss";
    title = "Training losses";
    std::vector<std::string> wanted =
        a.metric.empty() ? std::vector<std::string>{"rec", "total"} : std::vector<std::string>{a.metric};
    const size_t stride = std::max<size_t>(1, rows.size() / 2000);
    for (auto& name : wanted) {
      udor::plots::Series s{name, {}, {}};
      const size_t ci = column(name), xi = column("step");
      for (size_t i = 0; i < rows.size(); i += stride) {
        s.x.push_back(std::stod(rows[i][xi]));
        s.y.push_back(std::stod(rows[i][ci]));
      }
      series.push_back(std::move(s));
    }
  } else if (kind == "sweep") {
    const std::string metric = a.metric.empty() ? "modularity" : a.metric;
    x_label = header.at(0);
    y_label = metric;
    title = metric + " vs " + x_label;
    const size_t xi = 0, mi = column("method"), fi = column("failed"), ci = column(metric);
    std::vector<std::string> methods;
    for (auto& r : rows)
      if (std::find(methods.begin(), methods.end(), r[mi]) == methods.end()) methods.push_back(r[mi]);
    for (auto& m : methods) {
      udor::plots::Series s{m, {}, {}};
      for (auto& r : rows) {
        if (r[mi] != m || r[fi] == "1") continue;
        s.x.push_back(std::stod(r[xi]));
        s.y.push_back(std::stod(r[ci]));
      }
      if (!s.x.empty()) series.push_back(std::move(s));
    }
  } else {
    throw udor::ConfigError("--kind must be auto, loss, or sweep");
  }
  udor::plots::write_line_chart(a.out, title, x_label, y_label, series);
  std::cout << "wrote " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);  // single deterministic compute thread

  CLI::App app{"disassembling object representation toolkit"};
  app.set_version_flag("--version", std::string(udor::kVersion));
  app.require_subcommand(1);

  // generate-data ------------------------------------------------------------
  GenerateArgs gen;
  auto* g = app.add_subcommand("generate-data", "compose a synthetic multi-object dataset");
  g->add_option("--preset", gen.preset, "multi-mnist | two-digit")->capture_default_str();
  g->add_option("--offset", gen.offset, "max per-axis position jitter")->capture_default_str();
  g->add_option("--n", gen.n, "number of samples")->required();
  g->add_option("--seed", gen.seed, "master seed")->capture_default_str();
  g->add_option("--out", gen.out, "output directory")->required();
  g->add_option("--digits", gen.digits, "source digit archive directory")->capture_default_str();
  g->add_option("--p-occupied", gen.p_occupied, "per-slot occupancy probability")
      ->capture_default_str();
  g->add_option("--min-objects", gen.min_objects, "minimum occupied slots per sample")
      ->capture_default_str();

  // train ---------------------------------------------------------------------
  auto* t = app.add_subcommand("train", "train a model on a generated dataset");
  std::string t_config;
  bool t_fresh = false;
  int64_t t_print_every = 100;
  std::string t_data, t_out, t_ablate, t_baseline, t_gp_sampling, t_removal_policy;
  int64_t t_steps = -1, t_batch = -1, t_critic_steps = -1, t_ckpt_every = -1;
  int64_t t_n_parts = -1, t_part_length = -1, t_image_size = -1;
  uint64_t t_seed = 0;
  double t_lr = -1, t_alpha = -1, t_beta = -1, t_gamma = -1, t_eta = -1, t_rho = -1, t_tau = -1,
         t_omega = -1, t_lambda = -1;
  t->add_option("--config", t_config, "JSON config file; flags override its values");
  t->add_option("--data", t_data, "dataset directory");
  t->add_option("--out", t_out, "run output directory");
  t->add_option("--steps", t_steps, "generator steps");
  t->add_option("--batch", t_batch, "batch size");
  t->add_option("--critic-steps", t_critic_steps, "critic updates per generator update");
  t->add_option("--checkpoint-every", t_ckpt_every, "checkpoint cadence in generator steps");
  t->add_option("--seed", t_seed, "master seed");
  t->add_option("--n-parts", t_n_parts, "latent parts (= object slots)");
  t->add_option("--part-length", t_part_length, "dimensions per part");
  t->add_option("--image-size", t_image_size, "square canvas size");
  t->add_option("--lr", t_lr, "learning rate (both parameter groups)");
  t->add_option("--alpha", t_alpha, "reconstruction weight");
  t->add_option("--beta", t_beta, "classification weight");
  t->add_option("--gamma", t_gamma, "removing weight");
  t->add_option("--eta", t_eta, "adversarial weight");
  t->add_option("--rho", t_rho, "code-reconstruction weight inside rec");
  t->add_option("--tau", t_tau, "empty-part weight inside cla");
  t->add_option("--omega", t_omega, "empty-image weight inside rem");
  t->add_option("--lambda-gp", t_lambda, "gradient penalty weight");
  t->add_option("--ablate", t_ablate, "rem | gan");
  t->add_option("--baseline", t_baseline, "sae (supervised baseline)");
  t->add_option("--gp-sampling", t_gp_sampling, "interpolated | fake_only");
  t->add_option("--removal-policy", t_removal_policy, "single | subset");
  t->add_flag("--fresh", t_fresh, "ignore existing checkpoints in --out");
  t->add_option("--print-every", t_print_every, "progress print cadence (0 = quiet)");

  // eval -----------------------------------------------------------------------
  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "score a checkpoint: modularity, integrity, linear probe");
  e->add_option("--ckpt", ev.ckpt, "checkpoint file")->required();
  e->add_option("--data", ev.data, "dataset directory (default: recorded in checkpoint)");
  e->add_option("--digits", ev.digits, "glyph archive override");
  e->add_option("--out", ev.out, "report directory (default: <ckpt dir>/eval)");
  e->add_option("--T", ev.spec.T, "probe groups per slot")->capture_default_str();
  e->add_option("--D", ev.spec.D, "variants per group")->capture_default_str();
  e->add_option("--seed", ev.spec.seed, "probe seed")->capture_default_str();
  e->add_option("--probe-train", ev.spec.probe_train_samples, "linear probe training samples")
      ->capture_default_str();
  e->add_option("--probe-test", ev.spec.probe_test_samples, "linear probe test samples")
      ->capture_default_str();
  bool ev_no_probe = false;
  e->add_flag("--no-probe", ev_no_probe, "skip linear-probe classification");

  // edit -----------------------------------------------------------------------
  EditArgs ed;
  auto* d = app.add_subcommand("edit", "object-removed / object-swapped reconstructions");
  d->add_option("--ckpt", ed.ckpt, "checkpoint file")->required();
  d->add_option("--input", ed.input, "input PNG or directory of PNGs")->required();
  d->add_option("--candidate", ed.candidate, "candidate PNG for swaps (default: empty canvas)");
  d->add_option("--out", ed.out, "output directory")->capture_default_str();
  d->add_option("--remove-part", ed.remove_part, "emit a single targeted removal instead of a grid");

  // sweep ----------------------------------------------------------------------
  std::string s_spec;
  bool s_allow_partial = false;
  int s_jobs = 1;
  auto* s = app.add_subcommand("sweep", "train/evaluate a grid of configurations");
  s->add_option("--spec", s_spec, "sweep spec JSON")->required();
  s->add_flag("--allow-partial", s_allow_partial, "exit 0 if at least one cell succeeded");
  s->add_option("--jobs", s_jobs, "cells trained in parallel, one process each")
      ->capture_default_str();

  // plot -----------------------------------------------------------------------
  PlotArgs pl;
  auto* p = app.add_subcommand("plot", "render CSV outputs as SVG line charts");
  p->add_option("--input", pl.input, "CSV file (training log or sweep results)")->required();
  p->add_option("--out", pl.out, "output SVG path")->required();
  p->add_option("--kind", pl.kind, "auto | loss | sweep")->capture_default_str();
  p->add_option("--metric", pl.metric, "column to plot");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (g->parsed()) return cmd_generate_data(gen);
    if (t->parsed()) {
      udor::TrainConfig cfg;
      if (t->count("--config")) cfg = udor::TrainConfig::from_json(parse_json_file(t_config));
      if (t->count("--data")) cfg.data_dir = t_data;
      if (t->count("--out")) cfg.out_dir = t_out;
      if (t->count("--steps")) cfg.total_steps = t_steps;
      if (t->count("--batch")) cfg.batch_size = t_batch;
      if (t->count("--critic-steps")) cfg.critic_steps = t_critic_steps;
      if (t->count("--checkpoint-every")) cfg.checkpoint_every = t_ckpt_every;
      if (t->count("--seed")) cfg.seed = t_seed;
      if (t->count("--n-parts")) cfg.arch.n_parts = t_n_parts;
      if (t->count("--part-length")) cfg.arch.part_length = t_part_length;
      if (t->count("--image-size")) {
        auto widths = cfg.arch.encoder_widths;  // keep explicit widths from --config
        cfg.arch = udor::ArchitectureConfig::for_image_size(t_image_size);
        if (udor::ArchitectureConfig::blocks_for(t_image_size) == int64_t(widths.size()))
          cfg.arch.encoder_widths = widths;
        if (t->count("--n-parts")) cfg.arch.n_parts = t_n_parts;
        if (t->count("--part-length")) cfg.arch.part_length = t_part_length;
      }
      if (t->count("--lr")) cfg.adam.lr = t_lr;
      if (t->count("--alpha")) cfg.loss_weights.alpha = t_alpha;
      if (t->count("--beta")) cfg.loss_weights.beta = t_beta;
      if (t->count("--gamma")) cfg.loss_weights.gamma = t_gamma;
      if (t->count("--eta")) cfg.loss_weights.eta = t_eta;
      if (t->count("--rho")) cfg.loss_weights.rho = t_rho;
      if (t->count("--tau")) cfg.loss_weights.tau = t_tau;
      if (t->count("--omega")) cfg.loss_weights.omega = t_omega;
      if (t->count("--lambda-gp")) cfg.loss_weights.lambda_gp = t_lambda;
      if (t->count("--ablate")) {
        if (t_ablate == "rem") cfg.disable_rem = true;
        else if (t_ablate == "gan") cfg.disable_gan = true;
        else throw udor::ConfigError("--ablate must be 'rem' or 'gan'");
      }
      if (t->count("--baseline")) {
        if (t_baseline != "sae") throw udor::ConfigError("--baseline must be 'sae'");
        cfg.supervised_baseline = true;
      }
      if (t->count("--gp-sampling")) {
        if (t_gp_sampling == "interpolated") cfg.gp_sampling = udor::GpSampling::kInterpolated;
        else if (t_gp_sampling == "fake_only") cfg.gp_sampling = udor::GpSampling::kFakeOnly;
        else throw udor::ConfigError("--gp-sampling must be 'interpolated' or 'fake_only'");
      }
      if (t->count("--removal-policy")) {
        if (t_removal_policy == "single") cfg.removal_policy = udor::RemovalPolicy::kSinglePart;
        else if (t_removal_policy == "subset") cfg.removal_policy = udor::RemovalPolicy::kSubset;
        else throw udor::ConfigError("--removal-policy must be 'single' or 'subset'");
      }
      return cmd_train(cfg, t_fresh, t_print_every);
    }
    if (e->parsed()) {
      ev.spec.with_probe_scores = !ev_no_probe;
      return cmd_eval(ev);
    }
    if (d->parsed()) return cmd_edit(ed);
    if (s->parsed()) return cmd_sweep(s_spec, s_allow_partial, s_jobs);
    if (p->parsed()) return cmd_plot(pl);
    std::cerr << "no subcommand\n";
    return 2;
  } catch (const udor::ConfigError& err) {
    std::cerr << "configuration error: " << err.what() << "\n";
    return 2;
  } catch (const udor::FormatError& err) {
    std::cerr << "format error: " << err.what() << "\n";
    return 3;
  } catch (const udor::IoError& err) {
    std::cerr << "I/O error: " << err.what() << "\n";
    return 3;
  } catch (const udor::NumericError& err) {
    std::cerr << "numeric error: " << err.what() << "\n";
    return 4;
  } catch (const c10::Error& err) {
    std::cerr << "backend error: " << err.what_without_backtrace() << "\n";
    return 4;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
}
