#ifndef UDOR_EXPERIMENTS_HPP
#define UDOR_EXPERIMENTS_HPP

#include <torch/torch.h>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "udor/common.hpp"
#include "udor/image_io.hpp"
#include "udor/metrics.hpp"
#include "udor/plots.hpp"
#include "udor/synthdata.hpp"
#include "udor/training.hpp"

namespace udor {

// ---------------------------------------------------------------------------
// Full evaluation of one trained model
// ---------------------------------------------------------------------------

struct EvalSpec {
  int64_t T = 50;  // probe groups per slot
  int64_t D = 10;  // resampled variants per group
  uint64_t seed = 0;
  bool with_probe_scores = true;
  int64_t probe_train_samples = 2000;  // linear-probe training set size
  int64_t probe_test_samples = 1000;
  OccupancyModel occupancy;

  void validate() const {
    if (T < 1 || D < 2) throw ConfigError("evaluation needs T >= 1 and D >= 2");
    if (with_probe_scores && (probe_train_samples < 2 || probe_test_samples < 1))
      throw ConfigError("probe classification needs non-empty train/test sets");
  }

  nlohmann::json to_json() const {
    return {{"T", T},
            {"D", D},
            {"seed", seed},
            {"with_probe_scores", with_probe_scores},
            {"probe_train_samples", probe_train_samples},
            {"probe_test_samples", probe_test_samples}};
  }
  static EvalSpec from_json(const nlohmann::json& j) {
    EvalSpec e;
    e.T = j.value("T", e.T);
    e.D = j.value("D", e.D);
    e.seed = j.value("seed", e.seed);
    e.with_probe_scores = j.value("with_probe_scores", e.with_probe_scores);
    e.probe_train_samples = j.value("probe_train_samples", e.probe_train_samples);
    e.probe_test_samples = j.value("probe_test_samples", e.probe_test_samples);
    e.validate();
    return e;
  }
};

namespace detail {

// in-memory labeled composites for the linear probe; sample i depends only
// on seed+i, mirroring on-disk dataset generation
inline std::pair<torch::Tensor, torch::Tensor> sample_composites(const SlotLayout& layout,
                                                                 const GlyphBank& glyphs,
                                                                 const OccupancyModel& occupancy,
                                                                 int64_t n, uint64_t seed) {
  std::vector<torch::Tensor> images;
  auto labels = torch::zeros({n, int64_t(layout.slots.size())}, torch::kInt64);
  auto labels_acc = labels.accessor<int64_t, 2>();
  for (int64_t i = 0; i < n; ++i) {
    std::mt19937_64 rng(seed + uint64_t(i));
    auto choices = draw_choices(layout, glyphs, occupancy, rng);
    std::uniform_int_distribution<int> jitter(-layout.offset_range, layout.offset_range);
    std::vector<std::pair<int, int>> offsets;
    for (size_t s = 0; s < layout.slots.size(); ++s) {
      int dr = layout.offset_range > 0 ? jitter(rng) : 0;
      int dc = layout.offset_range > 0 ? jitter(rng) : 0;
      offsets.emplace_back(dr, dc);
    }
    auto sample = compose_with_offsets(layout, glyphs, choices, offsets);
    images.push_back(sample.image.mul(255.0).round().div(255.0));
    for (size_t s = 0; s < sample.occupancy.size(); ++s)
      labels_acc[i][int64_t(s)] = sample.occupancy[s];
  }
  return {torch::stack(images, 0), labels};
}

}  // namespace detail

// Builds one probe set per slot, resolves which part carries which slot,
// scores M/V per slot with the resolved parts (plus the naive identity
// convention), and optionally runs the linear probe.
inline MetricReport evaluate_model(const ModelBundle& models, const SlotLayout& layout,
                                   const GlyphBank& glyphs, const EvalSpec& spec) {
  spec.validate();
  if (layout.slots.size() != size_t(models.arch.n_parts))
    throw ConfigError("layout slot count does not match the model's part count");
  const int64_t n = models.arch.n_parts;

  std::vector<ProbeSet> probe_sets;
  for (int64_t s = 0; s < n; ++s)
    probe_sets.push_back(generate_probe_set(
        layout, glyphs, spec.T, spec.D, s, derive_seed(spec.seed, "probe-slot-" + std::to_string(s)),
        spec.occupancy));

  auto assignment = which_part_maps_to_slot(models, probe_sets);

  MetricReport report;
  report.T = spec.T;
  report.D = spec.D;
  report.part_length = models.arch.part_length;
  report.offset = layout.offset_range;
  report.degenerate_assignment = assignment.degenerate;

  double m_sum = 0, v_sum = 0, mi_sum = 0;
  for (int64_t s = 0; s < n; ++s) {
    auto mapped = evaluate_disassembly(models, probe_sets[size_t(s)],
                                       assignment.slot_to_part[size_t(s)]);
    m_sum += mapped.modularity;
    v_sum += mapped.integrity;
    mi_sum += evaluate_disassembly(models, probe_sets[size_t(s)], s).modularity;
  }
  report.modularity = m_sum / double(n);
  report.integrity = v_sum / double(n);
  report.modularity_identity = mi_sum / double(n);

  if (spec.with_probe_scores) {
    auto [train_imgs, train_labels] = detail::sample_composites(
        layout, glyphs, spec.occupancy, spec.probe_train_samples, derive_seed(spec.seed, "probe-train"));
    auto [test_imgs, test_labels] = detail::sample_composites(
        layout, glyphs, spec.occupancy, spec.probe_test_samples, derive_seed(spec.seed, "probe-test"));
    auto train_codes = detail::encode_chunked(models, train_imgs);
    auto test_codes = detail::encode_chunked(models, test_imgs);
    auto slot_to_part =
        assignment.degenerate ? identity_assignment(n) : assignment.slot_to_part;
    auto scores =
        linear_probe_classify(train_codes, train_labels, test_codes, test_labels, n, slot_to_part);
    report.per_class_precision = scores.per_class_precision;
    report.per_class_recall = scores.per_class_recall;
    report.overall_precision = scores.overall_precision;
    report.overall_recall = scores.overall_recall;
    report.micro_f1 = scores.micro_f1;
    report.macro_f1 = scores.macro_f1;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Edit grids
// ---------------------------------------------------------------------------

struct EditOutputs {
  torch::Tensor reconstruction;  // [K,1,S,S]
  torch::Tensor removals;        // [K,n,1,S,S] part k reset to empty
  torch::Tensor swaps;           // [K,n,1,S,S] part k taken from the candidate
};

inline EditOutputs apply_edits(const ModelBundle& models, const torch::Tensor& inputs,
                               const torch::Tensor& candidate) {
  if (inputs.dim() != 4 || candidate.dim() != 4 || candidate.size(0) != 1)
    throw ConfigError("edits expect inputs [K,1,S,S] and one candidate [1,1,S,S]");
  torch::NoGradGuard no_grad;
  const int64_t n = models.arch.n_parts;
  auto bank = detail::empty_bank(models);
  auto latent = models.encode_split(inputs);
  auto cand_latent = models.encode_split(candidate.expand_as(inputs).contiguous());

  EditOutputs out;
  out.reconstruction = models.decode(latent.concat());
  std::vector<torch::Tensor> removals, swaps;
  for (int64_t k = 0; k < n; ++k) {
    removals.push_back(models.decode(reset_part(latent, k, bank).concat()).unsqueeze(1));
    swaps.push_back(models.decode(swap_part(latent, cand_latent, k).concat()).unsqueeze(1));
  }
  out.removals = torch::cat(removals, 1);
  out.swaps = torch::cat(swaps, 1);
  return out;
}

// Rows are inputs; columns are [input | n removals | n swaps] with thin gray
// separators.
inline torch::Tensor assemble_edit_grid(const torch::Tensor& inputs, const EditOutputs& edits) {
  const int64_t K = inputs.size(0), n = edits.removals.size(1), S = inputs.size(3);
  const int64_t cols = 1 + 2 * n, gap = 2;
  auto grid = torch::full({1, K * S + (K - 1) * gap, cols * S + (cols - 1) * gap}, 0.35);
  auto put = [&](int64_t r, int64_t c, const torch::Tensor& img) {
    grid.narrow(1, r * (S + gap), S).narrow(2, c * (S + gap), S).copy_(img);
  };
  for (int64_t i = 0; i < K; ++i) {
    put(i, 0, inputs[i]);
    for (int64_t k = 0; k < n; ++k) {
      put(i, 1 + k, edits.removals[i][k]);
      put(i, 1 + n + k, edits.swaps[i][k]);
    }
  }
  return grid;
}

inline void emit_edit_grids(const ModelBundle& models, const torch::Tensor& inputs,
                            const torch::Tensor& candidate, const std::filesystem::path& path) {
  auto edits = apply_edits(models, inputs, candidate);
  write_png(path, assemble_edit_grid(inputs, edits));
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct SweepSpec {
  std::string variable = "part_length";  // or "offset"
  std::vector<int64_t> values;
  std::vector<std::string> methods = {"udor"};  // udor | udor-norem | udor-nogan | sae
  TrainConfig base;
  EvalSpec eval;
  std::string out_dir;
  std::string data_dir;        // part_length: existing dataset; offset: root for per-offset data
  std::string source_digits;   // glyph archive directory
  uint64_t data_seed = 0;      // offset sweep dataset generation
  int64_t n_train_samples = 10000;
  int64_t n_test_samples = 2000;

  static std::vector<int64_t> preset_part_lengths() { return {1, 3, 5, 7, 9, 11, 13, 15, 17, 19, 21}; }
  static std::vector<int64_t> preset_offsets() { return {0, 1, 2, 3, 4, 5, 7, 9, 11, 13, 15, 17}; }

  void validate() const {
    if (variable != "part_length" && variable != "offset")
      throw ConfigError("sweep variable must be 'part_length' or 'offset'");
    if (values.empty()) throw ConfigError("sweep values list is empty");
    if (methods.empty()) throw ConfigError("sweep methods list is empty");
    if (out_dir.empty()) throw ConfigError("sweep needs an output directory");
    for (auto& m : methods)
      if (m != "udor" && m != "udor-norem" && m != "udor-nogan" && m != "sae")
        throw ConfigError("unknown method '" + m + "'");
  }

  nlohmann::json to_json() const {
    return {{"variable", variable},
            {"values", values},
            {"methods", methods},
            {"base", base.to_json()},
            {"eval", eval.to_json()},
            {"out_dir", out_dir},
            {"data_dir", data_dir},
            {"source_digits", source_digits},
            {"data_seed", data_seed},
            {"n_train_samples", n_train_samples},
            {"n_test_samples", n_test_samples}};
  }
  static SweepSpec from_json(const nlohmann::json& j) {
    SweepSpec s;
    s.variable = j.value("variable", s.variable);
    if (j.contains("values")) s.values = j.at("values").get<std::vector<int64_t>>();
    if (j.contains("methods")) s.methods = j.at("methods").get<std::vector<std::string>>();
    if (j.contains("base")) s.base = TrainConfig::from_json(j.at("base"));
    if (j.contains("eval")) s.eval = EvalSpec::from_json(j.at("eval"));
    s.out_dir = j.value("out_dir", s.out_dir);
    s.data_dir = j.value("data_dir", s.data_dir);
    s.source_digits = j.value("source_digits", s.source_digits);
    s.data_seed = j.value("data_seed", s.data_seed);
    s.n_train_samples = j.value("n_train_samples", s.n_train_samples);
    s.n_test_samples = j.value("n_test_samples", s.n_test_samples);
    s.validate();
    return s;
  }
};

inline TrainConfig apply_method(TrainConfig cfg, const std::string& method) {
  if (method == "udor") {
  } else if (method == "udor-norem") {
    cfg.disable_rem = true;
  } else if (method == "udor-nogan") {
    cfg.disable_gan = true;
  } else if (method == "sae") {
    cfg.supervised_baseline = true;
  } else {
    throw ConfigError("unknown method '" + method + "'");
  }
  return cfg;
}

struct SweepRow {
  int64_t value = 0;
  std::string method;
  bool failed = false;
  std::string error;
  MetricReport report;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::filesystem::path csv_path;
  size_t n_failed = 0;
};

namespace detail {

inline std::string sweep_csv_header(const std::string& variable) {
  return variable + ",method,failed," + MetricReport::csv_header();
}

inline std::string sweep_csv_row(const std::string&, const SweepRow& r) {
  std::ostringstream os;
  os << r.value << ',' << r.method << ',' << (r.failed ? 1 : 0) << ',' << r.report.csv_row();
  return os.str();
}

// a finished cell leaves report.json behind; reruns reuse it
inline std::optional<MetricReport> cached_report(const std::filesystem::path& cell_dir) {
  auto p = cell_dir / "report.json";
  if (!std::filesystem::exists(p)) return std::nullopt;
  try {
    return MetricReport::from_json(nlohmann::json::parse(read_text_file(p)));
  } catch (...) {
    return std::nullopt;
  }
}

inline void write_sweep_outputs(const SweepSpec& spec, SweepResult& result) {
  std::filesystem::create_directories(spec.out_dir);
  result.csv_path = std::filesystem::path(spec.out_dir) / "results.csv";
  std::ofstream csv(result.csv_path, std::ios::trunc);
  if (!csv) throw IoError("cannot write '" + result.csv_path.string() + "'");
  csv << sweep_csv_header(spec.variable) << '\n';
  for (auto& r : result.rows) csv << sweep_csv_row(spec.variable, r) << '\n';
  csv.close();

  // one M curve and one V curve, a series per method
  std::vector<plots::Series> m_series, v_series;
  for (auto& method : spec.methods) {
    plots::Series ms{method, {}, {}}, vs{method, {}, {}};
    for (auto& r : result.rows) {
      if (r.method != method || r.failed) continue;
      ms.x.push_back(double(r.value));
      ms.y.push_back(r.report.modularity);
      vs.x.push_back(double(r.value));
      vs.y.push_back(r.report.integrity);
    }
    if (!ms.x.empty()) {
      m_series.push_back(ms);
      v_series.push_back(vs);
    }
  }
  if (!m_series.empty()) {
    plots::write_line_chart(std::filesystem::path(spec.out_dir) / "modularity.svg",
                            "Modularity vs " + spec.variable, spec.variable, "M", m_series);
    plots::write_line_chart(std::filesystem::path(spec.out_dir) / "integrity.svg",
                            "Integrity vs " + spec.variable, spec.variable, "V", v_series);
  }
}

inline SweepRow run_cell(const SweepSpec& spec, const LoadedDataset& data,
                         const GlyphBank& glyphs, int64_t value, const std::string& method,
                         const TrainConfig& cell_cfg, ProgressFn progress) {
  SweepRow row;
  row.value = value;
  row.method = method;
  const std::filesystem::path cell_dir(cell_cfg.out_dir);
  if (auto cached = cached_report(cell_dir)) {
    row.report = *cached;
    return row;
  }
  try {
    auto trained = train(data, cell_cfg, progress);
    auto [models, cfg] = load_models(trained.final_checkpoint);
    row.report = evaluate_model(models, data.layout, glyphs, spec.eval);
    write_text_file(cell_dir / "report.json", row.report.to_json().dump(2) + "\n");
  } catch (const Error& e) {
    row.failed = true;
    row.error = e.what();
  }
  return row;
}

}  // namespace detail

// Trains and scores every (part_length, method) cell on one shared dataset.
// Failed cells are recorded and the sweep continues; finished cells are
// never recomputed.
inline SweepResult run_part_length_sweep(const SweepSpec& spec, ProgressFn progress = {}) {
  spec.validate();
  if (spec.variable != "part_length") throw ConfigError("spec is not a part_length sweep");
  auto data = load_dataset(resolve_data_path(spec.data_dir));
  auto digits_dir =
      spec.source_digits.empty() ? data.source_digits : std::filesystem::path(spec.source_digits);
  auto glyphs = load_source_digits(resolve_data_path(digits_dir), data.layout.digit_classes());

  SweepResult result;
  for (int64_t pl : spec.values) {
    for (auto& method : spec.methods) {
      auto cfg = apply_method(spec.base, method);
      cfg.arch.part_length = pl;
      cfg.data_dir = spec.data_dir;
      cfg.out_dir = (std::filesystem::path(spec.out_dir) /
                     ("cell_pl" + std::to_string(pl) + "_" + method))
                        .string();
      result.rows.push_back(detail::run_cell(spec, data, glyphs, pl, method, cfg, progress));
      if (result.rows.back().failed) ++result.n_failed;
    }
  }
  detail::write_sweep_outputs(spec, result);
  return result;
}

// Ablation table at one part length: a part_length sweep with a single value
// and the three unsupervised variants.
inline SweepResult run_ablation_suite(SweepSpec spec, ProgressFn progress = {}) {
  spec.variable = "part_length";
  spec.values = {spec.base.arch.part_length};
  if (spec.methods.size() < 2) spec.methods = {"udor", "udor-norem", "udor-nogan"};
  return run_part_length_sweep(spec, progress);
}

// Per-offset datasets (one/two digit objects), one trained model per offset,
// M/V per offset plus an edit grid from held-out samples.
inline SweepResult run_offset_sweep(const SweepSpec& spec, ProgressFn progress = {}) {
  spec.validate();
  if (spec.variable != "offset") throw ConfigError("spec is not an offset sweep");
  if (spec.source_digits.empty()) throw ConfigError("offset sweep needs source_digits");

  SweepResult result;
  for (int64_t offset : spec.values) {
    auto layout = SlotLayout::two_digit(int(offset));
    layout.canvas_size = int(spec.base.arch.image_size);
    auto glyphs = load_source_digits(resolve_data_path(spec.source_digits), layout.digit_classes());

    const auto data_root = std::filesystem::path(resolve_data_path(spec.data_dir)) /
                           ("offset_" + std::to_string(offset));
    for (const char* split : {"train", "test"}) {
      const auto final_dir = data_root / split;
      if (std::filesystem::exists(final_dir / "dataset.json")) continue;
      DatasetSpec ds;
      ds.layout = layout;
      ds.n_samples = std::string(split) == "train" ? spec.n_train_samples : spec.n_test_samples;
      ds.seed = derive_seed(spec.data_seed, "offset-" + std::to_string(offset) + "-" + split);
      ds.source_digits = spec.source_digits;
      // stage then rename: concurrent sweep cells (--jobs) may want the same
      // split, and the loser of the rename race just keeps the winner's copy
      const auto staging = data_root / (std::string(split) + ".staging-" +
                                        std::to_string(std::chrono::steady_clock::now()
                                                           .time_since_epoch()
                                                           .count()));
      generate_dataset(ds, glyphs, staging);
      std::error_code rename_ec;
      std::filesystem::rename(staging, final_dir, rename_ec);
      if (rename_ec) {
        std::filesystem::remove_all(staging);
        if (!std::filesystem::exists(final_dir / "dataset.json"))
          throw IoError("cannot materialize dataset under " + final_dir.string());
      }
    }

    auto train_data = load_dataset(data_root / "train");
    for (auto& method : spec.methods) {
      auto cfg = apply_method(spec.base, method);
      cfg.arch.n_parts = int64_t(layout.slots.size());
      cfg.data_dir = (data_root / "train").string();
      cfg.out_dir = (std::filesystem::path(spec.out_dir) /
                     ("cell_off" + std::to_string(offset) + "_" + method))
                        .string();
      auto row = detail::run_cell(spec, train_data, glyphs, offset, method, cfg, progress);
      if (!row.failed) {
        // qualitative grid from the held-out split
        try {
          auto test_data = load_dataset(data_root / "test");
          auto [models, mc] = load_models(*latest_checkpoint(cfg.out_dir));
          auto inputs = test_data.images.narrow(0, 0, std::min<int64_t>(4, test_data.images.size(0)));
          auto candidate = test_data.images.narrow(0, test_data.images.size(0) - 1, 1);
          emit_edit_grids(models, inputs, candidate,
                          std::filesystem::path(cfg.out_dir) / "edit_grid.png");
        } catch (const Error&) {
        }
      }
      result.rows.push_back(row);
      if (row.failed) ++result.n_failed;
    }
  }
  detail::write_sweep_outputs(spec, result);
  return result;
}

}  // namespace udor

#endif  // UDOR_EXPERIMENTS_HPP
