// veil: obfuscate a hidden attribute in labeled images with large-epsilon
// adversarial perturbations while preserving a public attribute, and measure
// the trade-off with independently trained clean models.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "veil/config.hpp"
#include "veil/data.hpp"
#include "veil/eval.hpp"
#include "veil/grad_check.hpp"
#include "veil/model.hpp"
#include "veil/perturb.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

struct FlagSpec {
  std::string key;
  std::string help;
};

// Registers one CLI flag per config key; values captured as strings so the
// file/flag merge has a single code path.
class CommandConfig {
 public:
  CommandConfig(CLI::App* cmd, std::vector<FlagSpec> flags) : cmd_(cmd) {
    storage_.reserve(flags.size() + 1);
    for (auto& f : flags) {
      storage_.push_back({f.key, std::string()});
      std::string flag_name = "--" + f.key;
      for (auto& ch : flag_name)
        if (ch == '_') ch = '-';
      cmd->add_option(flag_name, storage_.back().second, f.help);
    }
    cmd->add_option("--config", config_path_,
                    "key=value config file; flags override file values");
  }

  veil::RunConfig resolve() const {
    veil::RunConfig cfg;
    if (!config_path_.empty()) cfg = veil::RunConfig::from_file(config_path_);
    for (const auto& [key, value] : storage_) {
      std::string flag_name = "--" + key;
      for (auto& ch : flag_name)
        if (ch == '_') ch = '-';
      if (cmd_->count(flag_name) > 0) cfg.set(key, value);
    }
    return cfg;
  }

 private:
  CLI::App* cmd_;
  std::string config_path_;
  std::vector<std::pair<std::string, std::string>> storage_;
};

void write_json_file(const std::string& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw veil::IoError(veil::concat("cannot write ", path));
  out << j.dump(2) << "\n";
}

void apply_threads(const veil::RunConfig& cfg) {
  const long long t = cfg.get_int("threads", 0);
  if (t > 0) veil::set_thread_count(static_cast<int>(t));
}

veil::TrainConfig train_config_from(const veil::RunConfig& cfg) {
  veil::TrainConfig tc;
  tc.epochs = static_cast<int>(cfg.get_int("epochs", 10));
  tc.batch_size = static_cast<int>(cfg.get_int("batch_size", 32));
  tc.lr = cfg.get_double("lr", 0.01);
  tc.momentum = cfg.get_double("momentum", 0.9);
  tc.alpha1 = cfg.get_double("train_alpha1", 1.0);
  tc.alpha2 = cfg.get_double("train_alpha2", 1.0);
  tc.seed = cfg.get_u64("seed", 1);
  tc.validate();
  return tc;
}

veil::AttackConfig attack_config_from(const veil::RunConfig& cfg) {
  veil::AttackConfig ac;
  ac.method = veil::attack_method_from_string(cfg.get_string("method", "pgd"));
  ac.epsilon = cfg.get_double("epsilon", 0.2);
  ac.steps = static_cast<int>(cfg.get_int("steps", 40));
  ac.step_size = cfg.get_double("step_size", -1.0);
  ac.alpha1 = cfg.get_double("alpha1", 1.0);
  ac.alpha2 = cfg.get_double("alpha2", 1.0);
  ac.validate();
  return ac;
}

int run_gen_data(const veil::RunConfig& cfg) {
  veil::SyntheticSpec spec;
  spec.n = static_cast<int>(cfg.get_int("n", 1000));
  spec.seed = cfg.get_u64("seed", 1);
  spec.noise_sigma = cfg.get_double("noise_sigma", 0.05);
  spec.jitter = static_cast<int>(cfg.get_int("jitter", 4));
  spec.k_hidden = static_cast<int>(cfg.get_int("k_hidden", 5));
  spec.k_public = static_cast<int>(cfg.get_int("k_public", 2));
  spec.image_size = static_cast<int>(cfg.get_int("image_size", 32));
  const std::string out = cfg.require_string("out");
  const std::string format = cfg.get_string("image_format", "ppm");

  const veil::Dataset ds = veil::generate_synthetic(spec);
  veil::write_manifest(ds, out, format);
  write_json_file((std::filesystem::path(out) / "run_config.json").string(),
                  cfg.echo());

  std::map<std::pair<int, int>, int> cells;
  for (const auto& item : ds.items)
    ++cells[{item.hidden_label, item.public_label}];
  std::cout << "wrote " << ds.size() << " samples to " << out << "\n";
  for (const auto& [cell, count] : cells)
    std::cout << "  hidden " << cell.first << " public " << cell.second << ": "
              << count << "\n";
  return 0;
}

int run_train(const veil::RunConfig& cfg) {
  apply_threads(cfg);
  const std::string data_dir = cfg.require_string("data");
  const std::string role = cfg.require_string("role");
  const std::string out = cfg.require_string("out");
  veil::require(role == "surrogate" || role == "clean-a" || role == "clean-b",
                "role must be surrogate, clean-a, or clean-b, got ", role);
  veil::TrainConfig tc = train_config_from(cfg);

  const veil::Dataset ds = veil::load_manifest(data_dir);
  veil::require<veil::IoError>(!ds.empty(), data_dir, ": dataset is empty");

  const veil::CleanVariant variant =
      role == "clean-b" ? veil::CleanVariant::B : veil::CleanVariant::A;
  const veil::ArchConfig arch = veil::arch_for_variant(
      variant, ds.k_hidden, ds.k_public, ds.image_size());
  auto model = veil::ForkedClassifier<float>::init(arch, tc.seed);
  veil::train(model, ds, tc, &std::cout);
  veil::save_model(model, out);

  nlohmann::ordered_json meta;
  meta["role"] = role;
  meta["variant"] = veil::to_string(variant);
  meta["config"] = cfg.echo();
  if (role != "surrogate") {
    const std::string eval_dir = cfg.get_string("eval_data", "");
    const veil::Dataset eval_ds =
        eval_dir.empty() ? ds : veil::load_manifest(eval_dir);
    auto [bh, bp] = veil::evaluate_accuracy(model, eval_ds);
    meta["baseline_hidden_acc"] = bh;
    meta["baseline_public_acc"] = bp;
    meta["baseline_on"] = eval_dir.empty() ? "train" : eval_dir;
  }
  write_json_file(out + ".meta.json", meta);
  std::cout << "wrote model to " << out << "\n";
  return 0;
}

int run_perturb(const veil::RunConfig& cfg) {
  apply_threads(cfg);
  const std::string model_path = cfg.require_string("model");
  const std::string data_dir = cfg.require_string("data");
  const std::string out = cfg.require_string("out");
  const std::string format = cfg.get_string("image_format", "ppm");
  const veil::AttackConfig ac = attack_config_from(cfg);

  const auto model = veil::load_model(model_path);
  const veil::Dataset ds = veil::load_manifest(data_dir);
  veil::require<veil::IoError>(!ds.empty(), data_dir, ": dataset is empty");

  const veil::PerturbResult result = veil::perturb_dataset(model, ds, ac);

  // Post-check: every sample inside the epsilon ball and the pixel range.
  double worst_delta = 0.0;
  for (std::size_t i = 0; i < result.dataset.items.size(); ++i) {
    const auto& diag = result.diagnostics[i];
    if (diag.max_abs_delta > ac.epsilon + 1e-6)
      throw veil::NumericError(veil::concat(
          "post-check failed: sample ", diag.id, " max |delta| ",
          diag.max_abs_delta, " exceeds epsilon ", ac.epsilon));
    for (std::size_t j = 0; j < result.dataset.items[i].pixels.size(); ++j) {
      const float v = result.dataset.items[i].pixels[j];
      if (v < 0.0f || v > 1.0f)
        throw veil::NumericError(veil::concat(
            "post-check failed: sample ", diag.id, " pixel outside [0,1]"));
    }
    worst_delta = std::max(worst_delta, diag.max_abs_delta);
  }

  veil::write_manifest(result.dataset, out, format);
  write_json_file((std::filesystem::path(out) / "run_config.json").string(),
                  cfg.echo());
  std::cout << "perturbed " << result.dataset.size() << " samples ("
            << veil::to_string(ac.method) << ", eps " << ac.epsilon
            << "); post-check ok, max |delta| " << worst_delta << "\n";
  return 0;
}

std::string infer_variant(const veil::ArchConfig& arch) {
  if (arch.trunk_widths == std::vector<int>{16, 32, 64}) return "A";
  if (arch.trunk_widths == std::vector<int>{16, 32, 64, 128}) return "B";
  return veil::concat("custom-", arch.trunk_widths.size(), "b");
}

int run_sweep(const veil::RunConfig& cfg) {
  apply_threads(cfg);
  const std::string surrogate_path = cfg.require_string("surrogate");
  const std::string data_dir = cfg.require_string("data");
  const std::string out_prefix = cfg.require_string("out_prefix");
  const auto grid = veil::parse_sweep_grid(
      cfg.get_string("grid", "pgd:0.2,fgsm:0.3,fgsm:0.4,fgsm:0.5"));
  const double alpha1 = cfg.get_double("alpha1", 1.0);
  const double alpha2 = cfg.get_double("alpha2", 1.0);
  const int steps = static_cast<int>(cfg.get_int("steps", 40));
  const double step_size = cfg.get_double("step_size", -1.0);

  const auto surrogate = veil::load_model(surrogate_path);
  const veil::Dataset test_set = veil::load_manifest(data_dir);
  veil::require<veil::IoError>(!test_set.empty(), data_dir, ": dataset is empty");

  std::vector<veil::CleanModel> clean_models;
  for (const std::string key : {"clean_a", "clean_b"}) {
    if (!cfg.has(key)) continue;
    veil::CleanModel cm;
    cm.model = veil::load_model(cfg.require_string(key));
    cm.variant = infer_variant(cm.model.arch());
    auto [bh, bp] = veil::evaluate_accuracy(cm.model, test_set);
    cm.baseline_hidden_acc = bh;
    cm.baseline_public_acc = bp;
    clean_models.push_back(std::move(cm));
  }
  veil::require(!clean_models.empty(),
                "sweep needs at least one of --clean-a/--clean-b");

  veil::MetricsReport report =
      veil::run_sweep(surrogate, clean_models, test_set, grid, alpha1, alpha2,
                      steps, step_size, &std::cout);
  report.config_echo = cfg.echo();
  veil::emit_report(report, out_prefix + ".csv", "csv");
  veil::emit_report(report, out_prefix + ".json", "json");
  std::cout << "sweep: " << report.rows.size() << " rows, "
            << report.failures.size() << " failures -> " << out_prefix
            << ".{csv,json}\n";
  if (report.rows.empty())
    throw veil::NumericError("sweep: every row failed");
  return 0;
}

int run_report(const veil::RunConfig& cfg) {
  const std::string in = cfg.require_string("in");
  const std::string format = cfg.get_string("format", "csv");
  veil::require(format == "csv" || format == "json",
                "format must be csv or json, got ", format);
  std::ifstream f(in);
  if (!f) throw veil::IoError(veil::concat("cannot open report: ", in));
  nlohmann::ordered_json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw veil::IoError(veil::concat(in, ": not a JSON report: ", e.what()));
  }
  const veil::MetricsReport report = veil::report_from_json(j);
  std::string out = cfg.get_string("out", "");
  if (out.empty()) {
    out = in;
    const auto dot = out.rfind('.');
    if (dot != std::string::npos) out.erase(dot);
    out += "." + format;
  }
  veil::emit_report(report, out, format);
  std::cout << "wrote " << out << "\n";
  return 0;
}

int run_grid(const veil::RunConfig& cfg) {
  const std::string clean_dir = cfg.require_string("data_clean");
  const std::string pert_dir = cfg.require_string("data_perturbed");
  const std::string out = cfg.require_string("out");
  const int count = static_cast<int>(cfg.get_int("count", 8));
  veil::require(count >= 1, "count must be >= 1, got ", count);
  int columns = static_cast<int>(cfg.get_int("columns", 0));
  if (columns <= 0) columns = count;

  const veil::Dataset clean = veil::load_manifest(clean_dir);
  const veil::Dataset perturbed = veil::load_manifest(pert_dir);
  std::map<std::string, const veil::LabeledImage*> by_id;
  for (const auto& item : perturbed.items) by_id[item.id] = &item;

  std::vector<std::pair<veil::Tensor<float>, veil::Tensor<float>>> pairs;
  for (const auto& item : clean.items) {
    if (static_cast<int>(pairs.size()) >= count) break;
    auto it = by_id.find(item.id);
    veil::require<veil::IoError>(it != by_id.end(), pert_dir,
                                 ": no perturbed image for id ", item.id);
    pairs.emplace_back(item.pixels, it->second->pixels);
  }
  veil::require<veil::IoError>(!pairs.empty(), clean_dir, ": no samples");
  veil::export_image_grid(pairs, out, columns);
  write_json_file(out + ".meta.json", cfg.echo());
  std::cout << "wrote " << pairs.size() << "-pair grid to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "veil: hidden-attribute obfuscation via large-epsilon adversarial "
      "perturbation"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data",
                                 "generate a deterministic synthetic dataset");
  CommandConfig gen_cfg(
      gen, {{"n", "sample count (default 1000)"},
            {"seed", "generator seed (default 1)"},
            {"out", "output dataset directory (required)"},
            {"noise_sigma", "gaussian pixel noise sigma (default 0.05)"},
            {"jitter", "max |position offset| in px (default 4)"},
            {"k_hidden", "hue families (default 5)"},
            {"k_public", "shapes (default 2)"},
            {"image_size", "square image size (default 32)"},
            {"image_format", "ppm or png (default ppm)"}});

  auto* train = app.add_subcommand("train", "train a forked classifier");
  CommandConfig train_cfg(
      train, {{"data", "training dataset directory (required)"},
              {"role", "surrogate, clean-a, or clean-b (required)"},
              {"seed", "init/shuffle seed (default 1)"},
              {"out", "output model file (required)"},
              {"epochs", "training epochs (default 10)"},
              {"batch_size", "mini-batch size (default 32)"},
              {"lr", "learning rate (default 0.01)"},
              {"momentum", "SGD momentum (default 0.9)"},
              {"train_alpha1", "hidden-loss weight (default 1)"},
              {"train_alpha2", "public-loss weight (default 1)"},
              {"eval_data", "held-out set for clean-role baselines (optional)"},
              {"threads", "worker threads (default: all cores)"}});

  auto* perturb = app.add_subcommand("perturb",
                                     "perturb a dataset against a model");
  CommandConfig perturb_cfg(
      perturb, {{"model", "surrogate model file (required)"},
                {"data", "dataset directory (required)"},
                {"method", "fgsm or pgd (default pgd)"},
                {"epsilon", "l-inf radius in [0,1] pixels (default 0.2)"},
                {"alpha1", "hidden-confusion weight (default 1)"},
                {"alpha2", "public-preservation weight (default 1)"},
                {"steps", "PGD steps (default 40)"},
                {"step_size", "PGD step size (default 2.5*eps/steps)"},
                {"out", "output dataset directory (required)"},
                {"image_format", "ppm or png (default ppm)"},
                {"threads", "worker threads (default: all cores)"}});

  auto* sweep = app.add_subcommand(
      "sweep", "run a (method x epsilon x clean-model) evaluation grid");
  CommandConfig sweep_cfg(
      sweep,
      {{"surrogate", "surrogate model file (required)"},
       {"clean_a", "clean model file, variant A"},
       {"clean_b", "clean model file, variant B"},
       {"data", "clean test dataset directory (required)"},
       {"grid",
        "method:epsilon list (default pgd:0.2,fgsm:0.3,fgsm:0.4,fgsm:0.5)"},
       {"alpha1", "hidden-confusion weight (default 1)"},
       {"alpha2", "public-preservation weight (default 1)"},
       {"steps", "PGD steps (default 40)"},
       {"step_size", "PGD step size (default 2.5*eps/steps)"},
       {"out_prefix", "report path prefix (required)"},
       {"threads", "worker threads (default: all cores)"}});

  auto* report = app.add_subcommand("report", "re-emit a JSON report");
  CommandConfig report_cfg(
      report, {{"in", "input report.json (required)"},
               {"format", "csv or json (default csv)"},
               {"out", "output path (default: input with new extension)"}});

  auto* grid = app.add_subcommand("grid",
                                  "export a side-by-side original/perturbed "
                                  "image grid");
  CommandConfig grid_cfg(
      grid, {{"data_clean", "original dataset directory (required)"},
             {"data_perturbed", "perturbed dataset directory (required)"},
             {"out", "output PNG path (required)"},
             {"count", "number of image pairs (default 8)"},
             {"columns", "grid columns (default: count)"}});

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return run_gen_data(gen_cfg.resolve());
    if (train->parsed()) return run_train(train_cfg.resolve());
    if (perturb->parsed()) return run_perturb(perturb_cfg.resolve());
    if (sweep->parsed()) return run_sweep(sweep_cfg.resolve());
    if (report->parsed()) return run_report(report_cfg.resolve());
    if (grid->parsed()) return run_grid(grid_cfg.resolve());
    return kExitConfig;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  } catch (const veil::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const veil::NumericError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const veil::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
