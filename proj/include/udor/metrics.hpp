#ifndef UDOR_METRICS_HPP
#define UDOR_METRICS_HPP

#include <torch/torch.h>

#include <algorithm>
#include <cstdint>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "udor/common.hpp"
#include "udor/latent.hpp"
#include "udor/networks.hpp"
#include "udor/synthdata.hpp"

namespace udor {

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct MetricReport {
  double modularity = 0;           // M over probe groups, parts chosen by the learned map
  double integrity = 0;            // V against removal ground truths
  double modularity_identity = 0;  // M under the naive slot k <-> part k convention
  // multi-label classification scores, all percentages
  double per_class_precision = 0, per_class_recall = 0;  // C-P, C-R (macro)
  double overall_precision = 0, overall_recall = 0;      // O-P, O-R (micro)
  double micro_f1 = 0, macro_f1 = 0;
  // probe configuration echo
  int64_t T = 0, D = 0, part_length = 0, offset = 0;
  bool degenerate_assignment = false;

  nlohmann::json to_json() const {
    return {{"modularity", modularity},
            {"integrity", integrity},
            {"modularity_identity", modularity_identity},
            {"per_class_precision", per_class_precision},
            {"per_class_recall", per_class_recall},
            {"overall_precision", overall_precision},
            {"overall_recall", overall_recall},
            {"micro_f1", micro_f1},
            {"macro_f1", macro_f1},
            {"T", T},
            {"D", D},
            {"part_length", part_length},
            {"offset", offset},
            {"degenerate_assignment", degenerate_assignment}};
  }
  static MetricReport from_json(const nlohmann::json& j) {
    MetricReport r;
    r.modularity = j.value("modularity", 0.0);
    r.integrity = j.value("integrity", 0.0);
    r.modularity_identity = j.value("modularity_identity", 0.0);
    r.per_class_precision = j.value("per_class_precision", 0.0);
    r.per_class_recall = j.value("per_class_recall", 0.0);
    r.overall_precision = j.value("overall_precision", 0.0);
    r.overall_recall = j.value("overall_recall", 0.0);
    r.micro_f1 = j.value("micro_f1", 0.0);
    r.macro_f1 = j.value("macro_f1", 0.0);
    r.T = j.value("T", int64_t(0));
    r.D = j.value("D", int64_t(0));
    r.part_length = j.value("part_length", int64_t(0));
    r.offset = j.value("offset", int64_t(0));
    r.degenerate_assignment = j.value("degenerate_assignment", false);
    return r;
  }

  static std::string csv_header() {
    return "modularity,integrity,modularity_identity,per_class_precision,per_class_recall,"
           "overall_precision,overall_recall,micro_f1,macro_f1,T,D,part_length,offset";
  }
  std::string csv_row() const {
    std::ostringstream os;
    os.precision(10);
    os << modularity << ',' << integrity << ',' << modularity_identity << ','
       << per_class_precision << ',' << per_class_recall << ',' << overall_precision << ','
       << overall_recall << ',' << micro_f1 << ',' << macro_f1 << ',' << T << ',' << D << ','
       << part_length << ',' << offset;
    return os.str();
  }
};

// ---------------------------------------------------------------------------
// Core scores
// ---------------------------------------------------------------------------

// M = (1/(T*D)) * sum_t sum_d sum_vec |z_td - mean_d(z_t.)| over codes [T,D,L].
// Deliberately not normalized by the part length.
inline double modularity_score(const torch::Tensor& codes) {
  if (codes.dim() != 3) throw ConfigError("modularity expects codes shaped [T,D,part_length]");
  const auto T = codes.size(0), D = codes.size(1);
  if (T == 0 || D == 0) throw ConfigError("modularity needs T >= 1 and D >= 1");
  auto z = codes.to(torch::kFloat64);
  auto dev = (z - z.mean(1, /*keepdim=*/true)).abs().sum();
  return dev.item<double>() / double(T * D);
}

// V = mean absolute pixel difference between reconstructions and ground
// truths; shapes must match with [T,D,...] leading dims.
inline double integrity_score(const torch::Tensor& recon, const torch::Tensor& ground_truth) {
  if (recon.sizes() != ground_truth.sizes())
    throw ConfigError("integrity inputs must have matching shapes");
  if (recon.dim() < 3 || recon.size(0) == 0 || recon.size(1) == 0)
    throw ConfigError("integrity expects non-empty [T,D,...] stacks");
  return (ground_truth.to(torch::kFloat64) - recon.to(torch::kFloat64)).abs().mean().item<double>();
}

// slot_clearance (mean intensity inside a slot box) comes from the data
// header and is used here for removal-quality checks

// ---------------------------------------------------------------------------
// Probe encoding helpers
// ---------------------------------------------------------------------------

namespace detail {

inline torch::Tensor encode_chunked(const ModelBundle& models, const torch::Tensor& images,
                                    int64_t chunk = 512) {
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> outs;
  for (int64_t i = 0; i < images.size(0); i += chunk)
    outs.push_back(models.encode(images.narrow(0, i, std::min(chunk, images.size(0) - i))));
  return torch::cat(outs, 0);
}

inline torch::Tensor decode_chunked(const ModelBundle& models, const torch::Tensor& codes,
                                    int64_t chunk = 512) {
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> outs;
  for (int64_t i = 0; i < codes.size(0); i += chunk)
    outs.push_back(models.decode(codes.narrow(0, i, std::min(chunk, codes.size(0) - i))));
  return torch::cat(outs, 0);
}

inline EmptyPartBank empty_bank(const ModelBundle& models) {
  torch::NoGradGuard no_grad;
  auto empty = torch::zeros({1, models.arch.image_size, models.arch.image_size});
  return extract_empty_parts([&](const torch::Tensor& x) { return models.encode(x); }, empty,
                             models.arch.n_parts);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Disassembly evaluation on one probe set
// ---------------------------------------------------------------------------

struct DisassemblyEval {
  double modularity = 0;
  double integrity = 0;
};

// Probe groups fix one slot; the chosen part is read out of each code for M,
// and reset to the empty vector before decoding for V.
inline DisassemblyEval evaluate_disassembly(const ModelBundle& models, const ProbeSet& probes,
                                            int64_t fixed_part_index) {
  const auto& arch = models.arch;
  if (fixed_part_index < 0 || fixed_part_index >= arch.n_parts)
    throw ConfigError("fixed_part_index out of range");
  if (probes.images.size(0) != probes.T * probes.D) throw ConfigError("probe stack size mismatch");

  torch::NoGradGuard no_grad;
  auto codes = detail::encode_chunked(models, probes.images);
  PartitionedLatent latent(codes, arch.n_parts);

  DisassemblyEval out;
  out.modularity = modularity_score(
      latent.part(fixed_part_index).view({probes.T, probes.D, arch.part_length}));

  auto bank = detail::empty_bank(models);
  auto recon = detail::decode_chunked(models, reset_part(latent, fixed_part_index, bank).concat());
  out.integrity = integrity_score(
      recon.view({probes.T, probes.D, 1, arch.image_size, arch.image_size}),
      probes.ground_truths.view({probes.T, probes.D, 1, arch.image_size, arch.image_size}));
  return out;
}

// ---------------------------------------------------------------------------
// Slot -> part assignment
// ---------------------------------------------------------------------------

struct PartAssignment {
  std::vector<int64_t> slot_to_part;
  bool degenerate = false;   // two slots picked the same part
  torch::Tensor ratios;      // [n_slots, n_parts] variance ratios, f64
};

// For probe codes of the set that fixes slot s, the part carrying slot s is
// nearly constant across each group (variance over d small) while still
// varying across groups; resampled content keeps other parts moving. The
// within-group/total variance ratio is small exactly for that part.
inline PartAssignment assignment_from_codes(const std::vector<torch::Tensor>& codes_per_slot,
                                            int64_t n_parts) {
  const auto n_slots = int64_t(codes_per_slot.size());
  if (n_slots == 0) throw ConfigError("need one probe code stack per slot");
  PartAssignment out;
  out.ratios = torch::zeros({n_slots, n_parts}, torch::kFloat64);
  for (int64_t s = 0; s < n_slots; ++s) {
    auto codes = codes_per_slot[size_t(s)].to(torch::kFloat64);
    if (codes.dim() != 3) throw ConfigError("probe codes must be [T,D,latent_dim]");
    if (codes.size(1) < 2) throw ConfigError("need D >= 2 probes per group");
    PartitionedLatent latent(codes.flatten(0, 1), n_parts);
    for (int64_t k = 0; k < n_parts; ++k) {
      auto part = latent.part(k).view({codes.size(0), codes.size(1), -1});
      auto within = part.var(1, /*unbiased=*/false).mean();
      auto total = part.flatten(0, 1).var(0, /*unbiased=*/false).mean();
      out.ratios[s][k] = (within / (total + 1e-12)).item<double>();
    }
    out.slot_to_part.push_back(out.ratios[s].argmin().item<int64_t>());
  }
  std::set<int64_t> unique(out.slot_to_part.begin(), out.slot_to_part.end());
  out.degenerate = unique.size() != out.slot_to_part.size();
  return out;
}

inline PartAssignment which_part_maps_to_slot(const ModelBundle& models,
                                              const std::vector<ProbeSet>& probe_sets) {
  std::vector<torch::Tensor> codes;
  for (auto& ps : probe_sets)
    codes.push_back(
        detail::encode_chunked(models, ps.images).view({ps.T, ps.D, models.arch.latent_dim()}));
  return assignment_from_codes(codes, models.arch.n_parts);
}

// ---------------------------------------------------------------------------
// Linear probe classification
// ---------------------------------------------------------------------------

struct ProbeScores {
  double per_class_precision = 0, per_class_recall = 0;
  double overall_precision = 0, overall_recall = 0;
  double micro_f1 = 0, macro_f1 = 0;
};

namespace detail {

// One-vs-rest linear max-margin classifier: squared hinge + L2, full-batch
// adaptive gradient descent in f64. No randomness, so results are exact
// across runs.
struct LinearSvm {
  torch::Tensor W, b;  // [C,L], [C]

  static LinearSvm fit(const torch::Tensor& X_in, const torch::Tensor& y, int64_t n_classes,
                       int64_t iters = 300, double lr = 0.05, double reg = 1e-3) {
    auto X = X_in.to(torch::kFloat64);
    LinearSvm svm;
    svm.W = torch::zeros({n_classes, X.size(1)}, torch::kFloat64).set_requires_grad(true);
    svm.b = torch::zeros({n_classes}, torch::kFloat64).set_requires_grad(true);
    auto Y = torch::full({X.size(0), n_classes}, -1.0, torch::kFloat64);
    Y.scatter_(1, y.view({-1, 1}), 1.0);

    torch::Tensor mW = torch::zeros_like(svm.W), vW = torch::zeros_like(svm.W);
    torch::Tensor mb = torch::zeros_like(svm.b), vb = torch::zeros_like(svm.b);
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (int64_t t = 1; t <= iters; ++t) {
      auto scores = X.matmul(svm.W.t()) + svm.b;
      auto margins = torch::clamp_min(1.0 - Y * scores, 0.0);
      auto loss = margins.pow(2).sum(1).mean() + reg * svm.W.pow(2).sum();
      auto grads = torch::autograd::grad({loss}, {svm.W, svm.b});
      torch::NoGradGuard no_grad;
      auto adam = [&](torch::Tensor& p, torch::Tensor& m, torch::Tensor& v,
                      const torch::Tensor& g) {
        m.mul_(b1).add_(g, 1 - b1);
        v.mul_(b2).addcmul_(g, g, 1 - b2);
        auto mh = m / (1 - std::pow(b1, double(t)));
        auto vh = v / (1 - std::pow(b2, double(t)));
        p.add_(-lr * mh / (vh.sqrt() + eps));
      };
      adam(svm.W, mW, vW, grads[0]);
      adam(svm.b, mb, vb, grads[1]);
    }
    svm.W.set_requires_grad(false);
    svm.b.set_requires_grad(false);
    return svm;
  }

  torch::Tensor predict(const torch::Tensor& X) const {
    return (X.to(torch::kFloat64).matmul(W.t()) + b).argmax(1);
  }
};

}  // namespace detail

// Trains one linear classifier per part (n+1 classes) and scores the test
// set as a multi-label problem over the non-empty classes: micro scores pool
// every (sample, class) decision, macro scores average per class.
// slot_to_part maps each slot to the part that carries it; labels hold the
// occupancy class per slot (0 empty, otherwise slot index + 1).
inline ProbeScores linear_probe_classify(const torch::Tensor& train_codes,
                                         const torch::Tensor& train_labels,
                                         const torch::Tensor& test_codes,
                                         const torch::Tensor& test_labels, int64_t n_parts,
                                         const std::vector<int64_t>& slot_to_part) {
  if (slot_to_part.size() != size_t(n_parts))
    throw ConfigError("slot_to_part must cover every slot");
  const int64_t n_classes = n_parts + 1;
  PartitionedLatent train_latent(train_codes.to(torch::kFloat64), n_parts);
  PartitionedLatent test_latent(test_codes.to(torch::kFloat64), n_parts);

  const int64_t n_test = test_codes.size(0);
  auto pred = torch::zeros({n_test, n_parts}, torch::kInt64);
  for (int64_t s = 0; s < n_parts; ++s) {
    const int64_t p = slot_to_part[size_t(s)];
    if (p < 0 || p >= n_parts) throw ConfigError("slot_to_part entry out of range");
    auto y = train_labels.select(1, s).to(torch::kInt64).contiguous();
    std::set<int64_t> distinct;
    auto ya = y.accessor<int64_t, 1>();
    for (int64_t i = 0; i < y.size(0); ++i) distinct.insert(ya[i]);
    if (distinct.size() < 2)
      throw ConfigError("probe training labels for slot " + std::to_string(s) +
                        " contain a single class");
    auto svm = detail::LinearSvm::fit(train_latent.part(p), y, n_classes);
    pred.select(1, s).copy_(svm.predict(test_latent.part(p)));
  }

  // pooled and per-class tallies over classes 1..n
  std::vector<int64_t> tp(size_t(n_classes), 0), fp(size_t(n_classes), 0), fn(size_t(n_classes), 0);
  auto true_acc = test_labels.accessor<int64_t, 2>();
  auto pred_acc = pred.accessor<int64_t, 2>();
  for (int64_t i = 0; i < n_test; ++i) {
    std::set<int64_t> truth, got;
    for (int64_t s = 0; s < n_parts; ++s) {
      if (true_acc[i][s] > 0) truth.insert(true_acc[i][s]);
      if (pred_acc[i][s] > 0) got.insert(pred_acc[i][s]);
    }
    for (int64_t c = 1; c < n_classes; ++c) {
      const bool t = truth.count(c), g = got.count(c);
      if (t && g) ++tp[size_t(c)];
      else if (!t && g) ++fp[size_t(c)];
      else if (t && !g) ++fn[size_t(c)];
    }
  }

  auto ratio = [](double num, double den) { return den > 0 ? num / den : 0.0; };
  int64_t TP = 0, FP = 0, FN = 0;
  double cp_sum = 0, cr_sum = 0;
  for (int64_t c = 1; c < n_classes; ++c) {
    TP += tp[size_t(c)];
    FP += fp[size_t(c)];
    FN += fn[size_t(c)];
    cp_sum += ratio(double(tp[size_t(c)]), double(tp[size_t(c)] + fp[size_t(c)]));
    cr_sum += ratio(double(tp[size_t(c)]), double(tp[size_t(c)] + fn[size_t(c)]));
  }
  ProbeScores out;
  out.overall_precision = 100.0 * ratio(double(TP), double(TP + FP));
  out.overall_recall = 100.0 * ratio(double(TP), double(TP + FN));
  out.per_class_precision = 100.0 * cp_sum / double(n_parts);
  out.per_class_recall = 100.0 * cr_sum / double(n_parts);
  auto harmonic = [](double a, double b) { return (a + b) > 0 ? 2 * a * b / (a + b) : 0.0; };
  out.micro_f1 = harmonic(out.overall_precision, out.overall_recall);
  out.macro_f1 = harmonic(out.per_class_precision, out.per_class_recall);
  return out;
}

inline std::vector<int64_t> identity_assignment(int64_t n_parts) {
  std::vector<int64_t> v(static_cast<size_t>(n_parts));
  for (int64_t i = 0; i < n_parts; ++i) v[size_t(i)] = i;
  return v;
}

}  // namespace udor

#endif  // UDOR_METRICS_HPP
