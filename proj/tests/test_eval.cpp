#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "veil/eval.hpp"

using namespace veil;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "veil_eval_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string file_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

ArchConfig tiny_arch(int k_hidden = 3) {
  ArchConfig arch;
  arch.image_size = 16;
  arch.trunk_widths = {4, 6};
  arch.public_block_width = 8;
  arch.head_width = 16;
  arch.k_hidden = k_hidden;
  arch.k_public = 2;
  return arch;
}

MetricsReport sample_report(int rows) {
  MetricsReport report;
  for (int i = 0; i < rows; ++i) {
    ReportRow r;
    r.method = i % 2 ? "pgd" : "fgsm";
    r.epsilon = 0.1 * (i + 1);
    r.alpha1 = 1.0;
    r.alpha2 = i % 2 ? 1.0 : 1e-5;
    r.clean_variant = i % 2 ? "A" : "B";
    r.hidden_acc = 0.123456789 + i * 0.01;
    r.public_acc = 0.9;
    r.baseline_hidden_acc = 0.95;
    r.baseline_public_acc = 0.97;
    r.majority_pred_share = 0.8;
    r.gt_majority_share = 0.4;
    r.n = 100;
    report.rows.push_back(r);
  }
  report.config_echo["steps"] = "40";
  return report;
}

}  // namespace

TEST_CASE("majority shares follow the modal counts") {
  auto [pred, gt] = majority_shares({1, 1, 2}, {0, 1, 2});
  CHECK(pred == doctest::Approx(2.0 / 3.0));
  CHECK(gt == doctest::Approx(1.0 / 3.0));

  auto [all_same, _] = majority_shares({4, 4, 4, 4}, {0, 1, 0, 1});
  CHECK(all_same == 1.0);
}

TEST_CASE("majority share ties break toward the lowest class") {
  auto [pred, gt] = majority_shares({2, 2, 1, 1}, {3, 3, 0, 0});
  CHECK(pred == doctest::Approx(0.5));
  CHECK(gt == doctest::Approx(0.5));
}

TEST_CASE("majority shares reproduce the reference fixture values") {
  // 10000 predictions with modal count 8292; ground truth modal count 3920.
  std::vector<int> preds, gt;
  for (int i = 0; i < 10000; ++i) preds.push_back(i < 8292 ? 0 : 1 + i % 4);
  for (int i = 0; i < 10000; ++i) gt.push_back(i < 3920 ? 0 : 1 + i % 4);
  auto [mps, gms] = majority_shares(preds, gt);
  CHECK(mps == 0.8292);
  CHECK(gms == 0.392);
}

TEST_CASE("majority shares reject empty input") {
  CHECK_THROWS_AS(majority_shares({}, {}), ConfigError);
  CHECK_THROWS_AS(majority_shares({1}, {1, 2}), ConfigError);
}

TEST_CASE("evaluate_accuracy counts exact argmax matches per head") {
  // Zero-initialized heads predict class 0 everywhere.
  auto model = ForkedClassifier<float>::init(tiny_arch(), 5);
  for (std::size_t li = 0; li < model.layer_count(); ++li) {
    model.layer(li).kernels.fill(0.0f);
    model.layer(li).bias.fill(0.0f);
  }
  Dataset ds;
  ds.k_hidden = 3;
  ds.k_public = 2;
  for (int i = 0; i < 4; ++i) {
    LabeledImage item;
    item.pixels = Tensor<float>({3, 16, 16});
    item.hidden_label = 0;          // all correct for the zero model
    item.public_label = i % 2;      // half correct
    item.id = concat("e", i);
    ds.items.push_back(std::move(item));
  }
  auto [ha, pa] = evaluate_accuracy(model, ds);
  CHECK(ha == 1.0);
  CHECK(pa == 0.5);

  Dataset empty;
  CHECK_THROWS_AS(evaluate_accuracy(model, empty), ConfigError);
}

TEST_CASE("clean model variants differ in parameter count") {
  const auto a = arch_for_variant(CleanVariant::A, 5, 2, 32);
  const auto b = arch_for_variant(CleanVariant::B, 5, 2, 32);
  auto ma = ForkedClassifier<float>::init(a, 1);
  auto mb = ForkedClassifier<float>::init(b, 1);
  std::size_t pa = 0, pb = 0;
  for (std::size_t li = 0; li < ma.layer_count(); ++li)
    pa += ma.layer(li).kernels.size() + ma.layer(li).bias.size();
  for (std::size_t li = 0; li < mb.layer_count(); ++li)
    pb += mb.layer(li).kernels.size() + mb.layer(li).bias.size();
  CHECK(pa != pb);
}

TEST_CASE("train_clean_model rejects the surrogate seed and is deterministic") {
  SyntheticSpec spec;
  spec.n = 60;
  spec.k_hidden = 3;
  spec.image_size = 16;
  spec.seed = 4;
  auto ds = generate_synthetic(spec);
  auto [train_set, test_set] = split(ds, 0.8, 1);

  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 16;
  CleanModelSpec cms;
  cms.seed = 7;
  CHECK_THROWS_AS(
      train_clean_model(cms, train_set, test_set, cfg, /*surrogate_seed=*/7),
      ConfigError);

  // Variant arch widths assume 32-px inputs; use a custom check at 16 px via
  // the generic trainer instead. Determinism of the helper itself:
  spec.image_size = 32;
  auto ds32 = generate_synthetic(spec);
  auto [tr32, te32] = split(ds32, 0.8, 1);
  auto c1 = train_clean_model(cms, tr32, te32, cfg, 1);
  auto c2 = train_clean_model(cms, tr32, te32, cfg, 1);
  for (std::size_t li = 0; li < c1.model.layer_count(); ++li)
    CHECK(c1.model.layer(li).kernels == c2.model.layer(li).kernels);
  CHECK(c1.baseline_hidden_acc == c2.baseline_hidden_acc);
}

TEST_CASE("sweep grid parsing") {
  auto grid = parse_sweep_grid("pgd:0.2,fgsm:0.3,fgsm:0.4,fgsm:0.5");
  REQUIRE(grid.size() == 4);
  CHECK(grid[0].method == AttackMethod::Pgd);
  CHECK(grid[0].epsilon == doctest::Approx(0.2));
  CHECK(grid[3].epsilon == doctest::Approx(0.5));
  CHECK_THROWS_AS(parse_sweep_grid(""), ConfigError);
  CHECK_THROWS_AS(parse_sweep_grid("pgd"), ConfigError);
  CHECK_THROWS_AS(parse_sweep_grid("warp:0.2"), ConfigError);
}

TEST_CASE("run_sweep produces one row per grid item and clean model") {
  SyntheticSpec spec;
  spec.n = 50;
  spec.k_hidden = 3;
  spec.image_size = 16;
  spec.seed = 14;
  auto ds = generate_synthetic(spec);

  auto surrogate = ForkedClassifier<float>::init(tiny_arch(), 5);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 16;
  cfg.seed = 5;
  train(surrogate, ds, cfg);

  std::vector<CleanModel> cleans;
  for (std::uint64_t seed : {11ull, 12ull}) {
    CleanModel cm;
    cm.variant = seed == 11 ? "A" : "B";
    cm.model = ForkedClassifier<float>::init(tiny_arch(), seed);
    TrainConfig ccfg = cfg;
    ccfg.seed = seed;
    train(cm.model, ds, ccfg);
    auto [bh, bp] = evaluate_accuracy(cm.model, ds);
    cm.baseline_hidden_acc = bh;
    cm.baseline_public_acc = bp;
    cleans.push_back(std::move(cm));
  }

  auto grid = parse_sweep_grid("pgd:0.2,fgsm:0.3");
  auto report = run_sweep(surrogate, cleans, ds, grid, 1.0, 1.0, 3);
  REQUIRE(report.rows.size() == 4);
  CHECK(report.failures.empty());
  // ordered by (method, epsilon, variant): fgsm rows first
  CHECK(report.rows[0].method == "fgsm");
  CHECK(report.rows[0].clean_variant == "A");
  CHECK(report.rows[1].clean_variant == "B");
  CHECK(report.rows[2].method == "pgd");
  // baseline columns depend only on the clean model
  CHECK(report.rows[0].baseline_hidden_acc == report.rows[2].baseline_hidden_acc);
  CHECK(report.rows[1].baseline_public_acc == report.rows[3].baseline_public_acc);
  for (const auto& row : report.rows) {
    CHECK(row.n == 50);
    CHECK(row.hidden_acc >= 0.0);
    CHECK(row.hidden_acc <= 1.0);
    CHECK(row.majority_pred_share >= 0.0);
    CHECK(row.majority_pred_share <= 1.0);
  }

  // determinism: rerunning yields byte-identical CSV
  auto report2 = run_sweep(surrogate, cleans, ds, grid, 1.0, 1.0, 3);
  CHECK(report_to_csv(report) == report_to_csv(report2));
}

TEST_CASE("csv emission has the pinned header and one line per row") {
  const auto dir = temp_dir("csv");
  auto report = sample_report(8);
  const auto path = (dir / "r.csv").string();
  emit_report(report, path, "csv");
  const auto text = file_text(path);
  std::size_t lines = 0;
  for (char c : text)
    if (c == '\n') ++lines;
  CHECK(lines == 9);  // header + 8 rows
  CHECK(text.rfind("method,epsilon,alpha1,alpha2,clean_variant,hidden_acc,"
                   "public_acc,baseline_hidden_acc,baseline_public_acc,"
                   "majority_pred_share,gt_majority_share,n\n",
                   0) == 0);
}

TEST_CASE("json and csv encode identical values") {
  auto report = sample_report(3);
  const auto j = report_to_json(report);
  const auto csv = report_to_csv(report);
  // spot-check one quantized value appears identically in both
  const double h0 = j["rows"][0]["hidden_acc"].get<double>();
  CHECK(csv.find("0.123457") != std::string::npos);  // %.6f of 0.123456789
  CHECK(h0 == doctest::Approx(0.123457).epsilon(1e-12));
  // round-trip through the JSON loses nothing that the CSV would keep
  auto back = report_from_json(j);
  CHECK(report_to_csv(back) == csv);
}

TEST_CASE("report re-emission is byte-identical") {
  const auto dir = temp_dir("reemit");
  auto report = sample_report(5);
  const auto p1 = (dir / "a.json").string();
  const auto p2 = (dir / "b.json").string();
  emit_report(report, p1, "json");
  std::ifstream in(p1);
  nlohmann::ordered_json j;
  in >> j;
  emit_report(report_from_json(j), p2, "json");
  CHECK(file_text(p1) == file_text(p2));
}

TEST_CASE("image grid geometry and round-trip") {
  const auto dir = temp_dir("grid");
  Rng rng(3);
  std::vector<std::pair<Tensor<float>, Tensor<float>>> pairs;
  for (int i = 0; i < 4; ++i) {
    Tensor<float> img({3, 32, 32});
    for (std::size_t j = 0; j < img.size(); ++j)
      img[j] = static_cast<float>(rng.uniform());
    pairs.emplace_back(img, img);  // perturbed == original
  }
  const auto path = (dir / "grid.png").string();
  export_image_grid(pairs, path, 4);
  const auto img = read_png(path);
  CHECK(img.width == 4 * 32 + 3 * 2);
  CHECK(img.height == 2 * 32 + 2);
  // originals on top, identical perturbed beneath: top half equals bottom half
  const int half_offset = (32 + 2) * img.width * 3;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < img.width * 3; ++x)
      CHECK(img.rgb[static_cast<std::size_t>(y) * img.width * 3 + x] ==
            img.rgb[static_cast<std::size_t>(half_offset) +
                    static_cast<std::size_t>(y) * img.width * 3 + x]);
  // cell (0,0) decodes back to the quantized first original
  const auto q = quantize_image(pairs[0].first);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      for (int c = 0; c < 3; ++c)
        CHECK(img.rgb[(static_cast<std::size_t>(y) * img.width + x) * 3 + c] ==
              q.rgb[(static_cast<std::size_t>(y) * 32 + x) * 3 + c]);
}

TEST_CASE("image grid rejects empty input and mixed geometry") {
  CHECK_THROWS_AS(export_image_grid({}, "/tmp/x.png", 4), ConfigError);
  std::vector<std::pair<Tensor<float>, Tensor<float>>> pairs;
  pairs.emplace_back(Tensor<float>({3, 32, 32}), Tensor<float>({3, 16, 16}));
  CHECK_THROWS_AS(export_image_grid(pairs, "/tmp/x.png", 1), ConfigError);
}
