#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "veil/common.hpp"
#include "veil/data.hpp"
#include "veil/image_io.hpp"
#include "veil/model.hpp"
#include "veil/perturb.hpp"

namespace veil {

// --- Clean models -----------------------------------------------------------------

/// Two evaluation architectures standing in for a deeper/shallower pair:
/// A = 3-block trunk [16,32,64], B = 4-block trunk [16,32,64,128].
enum class CleanVariant { A, B };

inline std::string to_string(CleanVariant v) {
  return v == CleanVariant::A ? "A" : "B";
}

inline CleanVariant clean_variant_from_string(const std::string& s) {
  if (s == "A" || s == "a") return CleanVariant::A;
  if (s == "B" || s == "b") return CleanVariant::B;
  throw ConfigError(concat("unknown clean-model variant: ", s));
}

inline ArchConfig arch_for_variant(CleanVariant v, int k_hidden, int k_public,
                                   int image_size = 32) {
  ArchConfig arch;
  arch.image_size = image_size;
  arch.trunk_widths = v == CleanVariant::A ? std::vector<int>{16, 32, 64}
                                           : std::vector<int>{16, 32, 64, 128};
  arch.k_hidden = k_hidden;
  arch.k_public = k_public;
  return arch;
}

struct CleanModelSpec {
  CleanVariant variant = CleanVariant::A;
  std::uint64_t seed = 2;
};

struct CleanModel {
  std::string variant;
  ForkedClassifier<float> model;
  double baseline_hidden_acc = 0.0;
  double baseline_public_acc = 0.0;
};

// --- Accuracy and majority metrics ---------------------------------------------------

/// Batched predictions over a dataset, chunked for memory.
inline std::pair<std::vector<int>, std::vector<int>> predict_dataset(
    const ForkedClassifier<float>& model, const Dataset& ds,
    int chunk_size = 128) {
  std::vector<int> ph, pp;
  ph.reserve(ds.size());
  pp.reserve(ds.size());
  for (std::size_t begin = 0; begin < ds.items.size();
       begin += static_cast<std::size_t>(chunk_size)) {
    const std::size_t end =
        std::min(ds.items.size(), begin + static_cast<std::size_t>(chunk_size));
    const int n = static_cast<int>(end - begin);
    const auto& first = ds.items.front().pixels;
    Tensor<float> x({n, first.dim(0), first.dim(1), first.dim(2)});
    const std::size_t stride = first.size();
    for (int i = 0; i < n; ++i)
      std::copy(ds.items[begin + static_cast<std::size_t>(i)].pixels.data(),
                ds.items[begin + static_cast<std::size_t>(i)].pixels.data() + stride,
                x.data() + static_cast<std::size_t>(i) * stride);
    auto [h, p] = predict(model, x);
    ph.insert(ph.end(), h.begin(), h.end());
    pp.insert(pp.end(), p.begin(), p.end());
  }
  return {std::move(ph), std::move(pp)};
}

/// Fraction of exact argmax matches per head.
inline std::pair<double, double> evaluate_accuracy(
    const ForkedClassifier<float>& model, const Dataset& ds) {
  require(!ds.empty(), "evaluate_accuracy: dataset is empty");
  auto [ph, pp] = predict_dataset(model, ds);
  std::size_t ch = 0, cp = 0;
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    if (ph[i] == ds.items[i].hidden_label) ++ch;
    if (pp[i] == ds.items[i].public_label) ++cp;
  }
  const double n = static_cast<double>(ds.size());
  return {static_cast<double>(ch) / n, static_cast<double>(cp) / n};
}

/// Share of the modal predicted class and of the modal true class.
/// Modal ties break toward the lowest class index.
inline std::pair<double, double> majority_shares(
    const std::vector<int>& predictions, const std::vector<int>& ground_truth) {
  require(!predictions.empty() && !ground_truth.empty(),
          "majority_shares: empty input");
  require(predictions.size() == ground_truth.size(),
          "majority_shares: misaligned sequences (", predictions.size(), " vs ",
          ground_truth.size(), ")");
  auto modal_share = [](const std::vector<int>& xs) {
    std::map<int, std::size_t> counts;
    for (int x : xs) ++counts[x];
    std::size_t best = 0;
    for (const auto& [cls, cnt] : counts)
      if (cnt > best) best = cnt;  // map order makes ties pick the lowest class
    return static_cast<double>(best) / static_cast<double>(xs.size());
  };
  return {modal_share(predictions), modal_share(ground_truth)};
}

/// Trains one clean evaluation model on unperturbed data and records its
/// clean-test baseline. Clean models must not share a seed with the surrogate.
inline CleanModel train_clean_model(const CleanModelSpec& spec,
                                    const Dataset& train_set,
                                    const Dataset& test_set, TrainConfig cfg,
                                    std::uint64_t surrogate_seed,
                                    std::ostream* log = nullptr) {
  require(spec.seed != surrogate_seed,
          "train_clean_model: clean seed ", spec.seed,
          " must differ from the surrogate seed");
  CleanModel cm;
  cm.variant = to_string(spec.variant);
  const auto arch = arch_for_variant(spec.variant, train_set.k_hidden,
                                     train_set.k_public, train_set.image_size());
  cm.model = ForkedClassifier<float>::init(arch, spec.seed);
  cfg.seed = spec.seed;
  train(cm.model, train_set, cfg, log);
  auto [bh, bp] = evaluate_accuracy(cm.model, test_set);
  cm.baseline_hidden_acc = bh;
  cm.baseline_public_acc = bp;
  return cm;
}

// --- Sweep -----------------------------------------------------------------------------

struct SweepGridItem {
  AttackMethod method = AttackMethod::Pgd;
  double epsilon = 0.2;
};

/// Parses grids like "pgd:0.2,fgsm:0.3,fgsm:0.4,fgsm:0.5".
inline std::vector<SweepGridItem> parse_sweep_grid(const std::string& text) {
  std::vector<SweepGridItem> grid;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t comma = text.find(',', start);
    if (comma == std::string::npos) comma = text.size();
    const std::string entry = text.substr(start, comma - start);
    if (!entry.empty()) {
      const std::size_t colon = entry.find(':');
      require(colon != std::string::npos, "sweep grid entry '", entry,
              "' must be method:epsilon");
      SweepGridItem item;
      item.method = attack_method_from_string(entry.substr(0, colon));
      try {
        item.epsilon = std::stod(entry.substr(colon + 1));
      } catch (const std::logic_error&) {
        throw ConfigError(concat("sweep grid entry '", entry, "': bad epsilon"));
      }
      grid.push_back(item);
    }
    start = comma + 1;
  }
  require(!grid.empty(), "sweep grid is empty");
  return grid;
}

struct ReportRow {
  std::string method;
  double epsilon = 0.0;
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  std::string clean_variant;
  double hidden_acc = 0.0;
  double public_acc = 0.0;
  double baseline_hidden_acc = 0.0;
  double baseline_public_acc = 0.0;
  double majority_pred_share = 0.0;
  double gt_majority_share = 0.0;
  int n = 0;
};

struct FailedRow {
  std::string method;
  double epsilon = 0.0;
  std::string clean_variant;  // "*" when the perturbation itself failed
  std::string error;
};

struct MetricsReport {
  std::vector<ReportRow> rows;
  std::vector<FailedRow> failures;
  nlohmann::ordered_json config_echo = nlohmann::ordered_json::object();
};

/// Runs the (method x epsilon) grid against every clean model. Rows are
/// assembled in (method, epsilon, variant) order; a failed perturbation
/// aborts its rows with context but never the sweep.
inline MetricsReport run_sweep(const ForkedClassifier<float>& surrogate,
                               const std::vector<CleanModel>& clean_models,
                               const Dataset& test_set,
                               const std::vector<SweepGridItem>& grid,
                               double alpha1, double alpha2, int steps = 40,
                               double step_size = -1.0,
                               std::ostream* log = nullptr) {
  require(!grid.empty(), "run_sweep: empty grid");
  require(!clean_models.empty(), "run_sweep: no clean models");
  require(!test_set.empty(), "run_sweep: empty test set");

  std::vector<int> gt_hidden, gt_public;
  gt_hidden.reserve(test_set.size());
  for (const auto& item : test_set.items) {
    gt_hidden.push_back(item.hidden_label);
    gt_public.push_back(item.public_label);
  }

  MetricsReport report;
  for (const auto& item : grid) {
    AttackConfig cfg;
    cfg.method = item.method;
    cfg.epsilon = item.epsilon;
    cfg.steps = steps;
    cfg.step_size = step_size;
    cfg.alpha1 = alpha1;
    cfg.alpha2 = alpha2;
    if (log)
      *log << "sweep: perturbing with " << to_string(item.method) << " eps "
           << item.epsilon << "\n";
    Dataset perturbed;
    try {
      perturbed = perturb_dataset(surrogate, test_set, cfg).dataset;
    } catch (const std::exception& e) {
      report.failures.push_back(
          {to_string(item.method), item.epsilon, "*", e.what()});
      continue;
    }
    for (const auto& cm : clean_models) {
      try {
        auto [ph, pp] = predict_dataset(cm.model, perturbed);
        ReportRow row;
        row.method = to_string(item.method);
        row.epsilon = item.epsilon;
        row.alpha1 = alpha1;
        row.alpha2 = alpha2;
        row.clean_variant = cm.variant;
        std::size_t ch = 0, cp = 0;
        for (std::size_t i = 0; i < ph.size(); ++i) {
          if (ph[i] == gt_hidden[i]) ++ch;
          if (pp[i] == gt_public[i]) ++cp;
        }
        row.n = static_cast<int>(test_set.size());
        row.hidden_acc = static_cast<double>(ch) / test_set.size();
        row.public_acc = static_cast<double>(cp) / test_set.size();
        row.baseline_hidden_acc = cm.baseline_hidden_acc;
        row.baseline_public_acc = cm.baseline_public_acc;
        auto [mps, gms] = majority_shares(ph, gt_hidden);
        row.majority_pred_share = mps;
        row.gt_majority_share = gms;
        report.rows.push_back(std::move(row));
      } catch (const std::exception& e) {
        report.failures.push_back(
            {to_string(item.method), item.epsilon, cm.variant, e.what()});
      }
    }
  }
  auto key = [](const ReportRow& r) {
    return std::make_tuple(r.method, r.epsilon, r.clean_variant);
  };
  std::stable_sort(report.rows.begin(), report.rows.end(),
                   [&](const ReportRow& a, const ReportRow& b) {
                     return key(a) < key(b);
                   });
  return report;
}

// --- Report emission ----------------------------------------------------------------------

namespace detail {

// Rates are quantized to 6 decimals at emission so CSV and JSON encode
// identical values and re-emission is byte-stable.
inline std::string format_rate(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline std::string format_param(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace detail

inline constexpr const char* kReportCsvHeader =
    "method,epsilon,alpha1,alpha2,clean_variant,hidden_acc,public_acc,"
    "baseline_hidden_acc,baseline_public_acc,majority_pred_share,"
    "gt_majority_share,n";

inline std::string report_to_csv(const MetricsReport& report) {
  std::string out = concat(kReportCsvHeader, "\n");
  for (const auto& r : report.rows) {
    out += concat(r.method, ",", detail::format_param(r.epsilon), ",",
                  detail::format_param(r.alpha1), ",",
                  detail::format_param(r.alpha2), ",", r.clean_variant, ",",
                  detail::format_rate(r.hidden_acc), ",",
                  detail::format_rate(r.public_acc), ",",
                  detail::format_rate(r.baseline_hidden_acc), ",",
                  detail::format_rate(r.baseline_public_acc), ",",
                  detail::format_rate(r.majority_pred_share), ",",
                  detail::format_rate(r.gt_majority_share), ",", r.n, "\n");
  }
  return out;
}

inline nlohmann::ordered_json report_to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["schema"] = "veil-report-v1";
  j["config"] = report.config_echo;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : report.rows) {
    nlohmann::ordered_json row;
    row["method"] = r.method;
    row["epsilon"] = std::stod(detail::format_param(r.epsilon));
    row["alpha1"] = std::stod(detail::format_param(r.alpha1));
    row["alpha2"] = std::stod(detail::format_param(r.alpha2));
    row["clean_variant"] = r.clean_variant;
    row["hidden_acc"] = std::stod(detail::format_rate(r.hidden_acc));
    row["public_acc"] = std::stod(detail::format_rate(r.public_acc));
    row["baseline_hidden_acc"] = std::stod(detail::format_rate(r.baseline_hidden_acc));
    row["baseline_public_acc"] = std::stod(detail::format_rate(r.baseline_public_acc));
    row["majority_pred_share"] = std::stod(detail::format_rate(r.majority_pred_share));
    row["gt_majority_share"] = std::stod(detail::format_rate(r.gt_majority_share));
    row["n"] = r.n;
    j["rows"].push_back(std::move(row));
  }
  j["failed_rows"] = nlohmann::ordered_json::array();
  for (const auto& f : report.failures) {
    nlohmann::ordered_json row;
    row["method"] = f.method;
    row["epsilon"] = std::stod(detail::format_param(f.epsilon));
    row["clean_variant"] = f.clean_variant;
    row["error"] = f.error;
    j["failed_rows"].push_back(std::move(row));
  }
  return j;
}

inline MetricsReport report_from_json(const nlohmann::ordered_json& j) {
  require<IoError>(j.contains("schema") && j["schema"] == "veil-report-v1",
                   "report: unknown or missing schema");
  MetricsReport report;
  if (j.contains("config")) report.config_echo = j["config"];
  for (const auto& row : j.value("rows", nlohmann::ordered_json::array())) {
    ReportRow r;
    r.method = row.at("method").get<std::string>();
    r.epsilon = row.at("epsilon").get<double>();
    r.alpha1 = row.at("alpha1").get<double>();
    r.alpha2 = row.at("alpha2").get<double>();
    r.clean_variant = row.at("clean_variant").get<std::string>();
    r.hidden_acc = row.at("hidden_acc").get<double>();
    r.public_acc = row.at("public_acc").get<double>();
    r.baseline_hidden_acc = row.at("baseline_hidden_acc").get<double>();
    r.baseline_public_acc = row.at("baseline_public_acc").get<double>();
    r.majority_pred_share = row.at("majority_pred_share").get<double>();
    r.gt_majority_share = row.at("gt_majority_share").get<double>();
    r.n = row.at("n").get<int>();
    report.rows.push_back(std::move(r));
  }
  for (const auto& row : j.value("failed_rows", nlohmann::ordered_json::array())) {
    FailedRow f;
    f.method = row.at("method").get<std::string>();
    f.epsilon = row.at("epsilon").get<double>();
    f.clean_variant = row.at("clean_variant").get<std::string>();
    f.error = row.at("error").get<std::string>();
    report.failures.push_back(std::move(f));
  }
  return report;
}

/// Writes the report as `csv` or `json` to `path`.
inline void emit_report(const MetricsReport& report, const std::string& path,
                        const std::string& format) {
  require(format == "csv" || format == "json",
          "emit_report: format must be csv or json, got ", format);
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError(concat("cannot write report: ", path));
  if (format == "csv")
    out << report_to_csv(report);
  else
    out << report_to_json(report).dump(2) << "\n";
  if (!out) throw IoError(concat("report write failed: ", path));
}

// --- Image grid -----------------------------------------------------------------------------

/// Side-by-side grid PNG: originals in the top row block, perturbed versions
/// beneath, 2-px white separators between cells. Unused trailing cells stay
/// white.
inline void export_image_grid(
    const std::vector<std::pair<Tensor<float>, Tensor<float>>>& pairs,
    const std::string& path, int columns) {
  require(!pairs.empty(), "export_image_grid: no image pairs");
  require(columns >= 1, "export_image_grid: columns must be >= 1");
  const auto& shape = pairs.front().first.shape();
  for (const auto& [orig, pert] : pairs) {
    require(orig.shape() == shape && pert.shape() == shape,
            "export_image_grid: all images must share one geometry, expected ",
            pairs.front().first.shape_str());
  }
  const int h = shape[1], w = shape[2];
  const int sep = 2;
  const int rows_half =
      (static_cast<int>(pairs.size()) + columns - 1) / columns;
  const int rows = 2 * rows_half;
  ImageU8 canvas;
  canvas.width = columns * w + (columns - 1) * sep;
  canvas.height = rows * h + (rows - 1) * sep;
  canvas.rgb.assign(static_cast<std::size_t>(canvas.width) * canvas.height * 3,
                    255);
  auto blit = [&](const Tensor<float>& img, int row, int col) {
    const ImageU8 q = quantize_image(img);
    const int x0 = col * (w + sep), y0 = row * (h + sep);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c)
          canvas.rgb[((static_cast<std::size_t>(y0 + y) * canvas.width) +
                      (x0 + x)) * 3 + c] =
              q.rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c];
  };
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const int r = static_cast<int>(i) / columns;
    const int c = static_cast<int>(i) % columns;
    blit(pairs[i].first, r, c);
    blit(pairs[i].second, rows_half + r, c);
  }
  write_png(canvas, path);
}

}  // namespace veil
