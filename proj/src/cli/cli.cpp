#include "ftm/cli/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ftm/data/npy.hpp"
#include "ftm/data/png_io.hpp"
#include "ftm/data/shapes.hpp"
#include "ftm/harness/plot.hpp"
#include "ftm/kernels/kernels.hpp"
#include "ftm/models/registry.hpp"
#include "ftm/models/serialize.hpp"
#include "ftm/models/zoo.hpp"
#include "ftm/train/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ftm::cli {

namespace {

void apply_simd_choice(const std::string& simd) {
  if (simd.empty() || simd == "auto") return;
  if (simd == "scalar")
    kern::set_isa(kern::Isa::scalar);
  else if (simd == "avx2")
    kern::set_isa(kern::Isa::avx2);
  else
    throw ConfigError("--simd must be scalar, avx2 or auto");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  size_t start = 0;
  while (start <= s.size()) {
    size_t comma = s.find(',', start);
    std::string tok = s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!tok.empty()) out.push_back(tok);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

std::string cmd_attack(const attack::RunConfig& cfg) {
  cfg.validate();
  if (cfg.output_dir.empty()) throw ConfigError("attack: output_dir is required");
  if (cfg.surrogate.empty()) throw ConfigError("attack: surrogate is required");
  if (cfg.dataset_manifest.empty()) throw ConfigError("attack: dataset_manifest is required");
  if (cfg.registry_path.empty()) throw ConfigError("attack: registry is required");

  models::Registry reg = models::load_registry(cfg.registry_path);
  attack::Model<float> surrogate = models::load_model(reg, cfg.surrogate);
  harness::EvalDataset ds = harness::load_dataset(cfg.dataset_manifest);
  if (cfg.max_images > 0) ds = harness::slice_dataset(ds, cfg.max_images);

  attack::AttackConfig acfg = cfg.atk;
  fs::create_directories(cfg.output_dir);
  attack::save_run_config(cfg, (fs::path(cfg.output_dir) / "config_snapshot.json").string());

  harness::CraftResult cr = harness::craft_adversarial(surrogate, ds, acfg);
  data::save_npy((fs::path(cfg.output_dir) / "adv.npy").string(), cr.adv);

  {
    std::ofstream f(fs::path(cfg.output_dir) / "labels.csv");
    f << "index,true_label,target_label\n";
    for (int i = 0; i < ds.size(); ++i)
      f << i << "," << ds.true_labels[static_cast<size_t>(i)] << "," << ds.target_labels[static_cast<size_t>(i)]
        << "\n";
  }
  {
    std::ofstream f(fs::path(cfg.output_dir) / "per_iter_loss.csv");
    f << "iteration,loss_sum\n";
    for (size_t i = 0; i < cr.per_iter_loss.size(); ++i) f << i << "," << cr.per_iter_loss[i] << "\n";
  }
  {
    json j;
    j["attack"] = cfg.attack;
    j["surrogate"] = cfg.surrogate;
    j["images"] = ds.size();
    j["per_image_seconds"] = cr.per_image_seconds;
    j["craft_seconds"] = cr.craft_seconds;
    j["zero_grad_events"] = cr.zero_grad_events;
    std::ofstream f(fs::path(cfg.output_dir) / "result.json");
    f << j.dump(2) << "\n";
  }
  if (cfg.export_png) {
    std::cerr << "[attack] note: PNG export quantizes to 8 bits; the stored .npy tensors are the faithful "
                 "adversarial examples\n";
    fs::create_directories(fs::path(cfg.output_dir) / "png");
    for (int i = 0; i < ds.size(); ++i) {
      TensorF one({cr.adv.dim(1), cr.adv.dim(2), cr.adv.dim(3)});
      std::copy(cr.adv.slice(i), cr.adv.slice(i) + cr.adv.slice_numel(), one.data());
      data::write_png_rgb((fs::path(cfg.output_dir) / "png" / ("adv_" + std::to_string(i) + ".png")).string(), one);
    }
  }
  return cfg.output_dir;
}

harness::TransferReport cmd_evaluate(const std::string& run_dir, const std::vector<std::string>& targets,
                                     const std::string& registry_override) {
  fs::path dir(run_dir);
  if (!fs::exists(dir / "adv.npy") || !fs::exists(dir / "config_snapshot.json") || !fs::exists(dir / "labels.csv"))
    throw EvalError("evaluate: run dir " + run_dir + " is missing artifacts (adv.npy/config_snapshot.json/labels.csv)");

  attack::RunConfig cfg = attack::load_run_config((dir / "config_snapshot.json").string());
  std::string registry_path = registry_override.empty() ? cfg.registry_path : registry_override;
  models::Registry reg = models::load_registry(registry_path);

  TensorF adv = data::load_npy((dir / "adv.npy").string());
  std::vector<int> y_t;
  {
    std::ifstream f(dir / "labels.csv");
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
      size_t c1 = line.find(','), c2 = line.rfind(',');
      if (c1 == std::string::npos || c2 == c1) continue;
      y_t.push_back(std::stoi(line.substr(c2 + 1)));
    }
  }
  if (static_cast<int>(y_t.size()) != adv.dim(0)) throw EvalError("evaluate: labels.csv does not match adv.npy");

  harness::TransferReport rep;
  fs::path report_path = dir / "report.json";
  if (fs::exists(report_path)) rep = harness::read_report_json(report_path.string());
  rep.dataset_id = fs::path(cfg.dataset_manifest).stem().string();
  rep.config_snapshot = attack::serialize_run_config(cfg);

  bool any_failed = false;
  for (const auto& tname : targets) {
    harness::TransferCell cell{cfg.attack, cfg.surrogate, tname, 0.0, false, ""};
    attack::Model<float> target = models::load_model(reg, tname);  // throws RegistryError for unknown names
    try {
      cell.success = harness::targeted_success_rate(adv, target, y_t);
    } catch (const std::exception& e) {
      cell.failed = true;
      cell.error = e.what();
      any_failed = true;
    }
    bool replaced = false;
    for (auto& c : rep.cells) {
      if (c.attack == cell.attack && c.surrogate == cell.surrogate && c.target == cell.target) {
        std::cerr << "[evaluate] overwriting existing cell (" << c.attack << ", " << c.surrogate << ", " << c.target
                  << ")\n";
        c = cell;
        replaced = true;
        break;
      }
    }
    if (!replaced) rep.cells.push_back(cell);
  }
  harness::write_report_json(rep, report_path.string());
  harness::write_matrix_csv(rep, (dir / "matrix.csv").string());
  if (any_failed) throw EvalError("evaluate: at least one target evaluation failed (see report.json)");
  return rep;
}

void cmd_prepare_desk(const PrepareDeskOptions& opt) {
  if (opt.out_dir.empty()) throw ConfigError("prepare-desk: --out is required");
  fs::create_directories(opt.out_dir);
  fs::create_directories(fs::path(opt.out_dir) / "weights");

  data::ShapesConfig scfg;
  scfg.seed = opt.seed;

  TensorF train_x, test_x, eval_x;
  std::vector<int> train_y, test_y, eval_y;
  data::generate_shapes(scfg, "train", 0, opt.train_count, train_x, train_y);
  data::generate_shapes(scfg, "test", 0, opt.test_count, test_x, test_y);
  data::generate_shapes(scfg, "eval", 0, opt.eval_count, eval_x, eval_y);

  // channel statistics from the training split
  std::vector<float> mean(3, 0.0f), stdev(3, 0.0f);
  {
    int64_t hw = static_cast<int64_t>(scfg.side) * scfg.side;
    for (int c = 0; c < 3; ++c) {
      double s = 0, s2 = 0;
      for (int b = 0; b < train_x.dim(0); ++b) {
        const float* p = train_x.data() + (static_cast<int64_t>(b) * 3 + c) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          s += p[i];
          s2 += p[i] * p[i];
        }
      }
      double n = static_cast<double>(train_x.dim(0)) * hw;
      double m = s / n;
      mean[static_cast<size_t>(c)] = static_cast<float>(m);
      stdev[static_cast<size_t>(c)] = static_cast<float>(std::sqrt(std::max(1e-8, s2 / n - m * m)));
    }
  }

  std::vector<std::string> archs = opt.archs.empty() ? models::desk_archs() : opt.archs;
  models::Registry reg;
  reg.path = (fs::path(opt.out_dir) / "registry.json").string();
  std::ofstream curves(fs::path(opt.out_dir) / "training_curves.csv");
  curves << "model,epoch,train_loss,test_accuracy\n";

  std::vector<nn::Sequential<float>> nets;
  std::vector<double> accs;
  for (size_t ai = 0; ai < archs.size(); ++ai) {
    const std::string& arch = archs[ai];
    nn::Sequential<float> net = models::build_arch<float>(arch, scfg.num_classes);
    Pcg32 init_rng = stream_rng(opt.seed, "init." + arch);
    models::init_weights(net, init_rng);

    train::TrainConfig tc;
    tc.epochs = opt.epochs;
    tc.seed = splitmix64(opt.seed ^ fnv1a(arch));
    tc.verbose = opt.verbose;
    train::TrainReport tr = train::train_classifier(net, train_x, train_y, test_x, test_y, tc, mean, stdev);
    for (size_t e = 0; e < tr.epoch_loss.size(); ++e)
      curves << "desk_" << arch << "," << e + 1 << "," << tr.epoch_loss[e] << "," << tr.epoch_test_acc[e] << "\n";
    curves.flush();
    if (tr.final_test_acc < opt.acc_floor)
      throw std::runtime_error("prepare-desk: model desk_" + arch + " reached only " +
                               std::to_string(tr.final_test_acc) + " test accuracy (floor " +
                               std::to_string(opt.acc_floor) + "); see training_curves.csv");

    std::string wfile = "weights/desk_" + arch + ".ftmw";
    models::save_weights((fs::path(opt.out_dir) / wfile).string(), net);
    models::ModelSpec spec;
    spec.name = "desk_" + arch;
    spec.arch = arch;
    spec.weights = wfile;
    spec.input_side = scfg.side;
    spec.num_classes = scfg.num_classes;
    spec.mean = mean;
    spec.std = stdev;
    spec.test_accuracy = tr.final_test_acc;
    reg.models.push_back(spec);
    nets.push_back(std::move(net));
    accs.push_back(tr.final_test_acc);
  }
  models::save_registry(reg, reg.path);

  // evaluation manifest with random target labels != true labels
  Pcg32 trg_rng = stream_rng(opt.seed, "eval_targets");
  std::vector<int> eval_targets(eval_y.size());
  for (size_t i = 0; i < eval_y.size(); ++i) {
    int t = (eval_y[i] + 1 + static_cast<int>(trg_rng.bounded(static_cast<uint32_t>(scfg.num_classes - 1)))) %
            scfg.num_classes;
    eval_targets[i] = t;
  }
  std::string manifest = harness::save_dataset(opt.out_dir, "eval_manifest", eval_x, eval_y, eval_targets);

  // pairwise prediction disagreement on the test split (heterogeneity)
  json prep;
  prep["seed"] = opt.seed;
  prep["manifest"] = manifest;
  prep["accuracies"] = accs;
  prep["disagreement"] = json::object();
  {
    std::vector<std::vector<int>> preds;
    for (size_t ai = 0; ai < nets.size(); ++ai) {
      std::vector<int> p;
      const int chunk = 128;
      for (int s = 0; s < test_x.dim(0); s += chunk) {
        int n = std::min(chunk, test_x.dim(0) - s);
        TensorF batch({n, 3, scfg.side, scfg.side});
        std::copy(test_x.slice(s), test_x.slice(s) + static_cast<int64_t>(n) * test_x.slice_numel(), batch.data());
        TensorF norm(batch.shape());
        for (int b = 0; b < n; ++b)
          for (int c = 0; c < 3; ++c) {
            int64_t hw = static_cast<int64_t>(scfg.side) * scfg.side;
            const float* sp = batch.data() + (static_cast<int64_t>(b) * 3 + c) * hw;
            float* dp = norm.data() + (static_cast<int64_t>(b) * 3 + c) * hw;
            for (int64_t i = 0; i < hw; ++i) dp[i] = (sp[i] - mean[static_cast<size_t>(c)]) / stdev[static_cast<size_t>(c)];
          }
        TensorF logits = nets[ai].forward(norm, false);
        std::vector<int> q = nn::argmax_rows(logits);
        p.insert(p.end(), q.begin(), q.end());
      }
      preds.push_back(std::move(p));
    }
    for (size_t a = 0; a < preds.size(); ++a)
      for (size_t b = a + 1; b < preds.size(); ++b) {
        int diff = 0;
        for (size_t i = 0; i < preds[a].size(); ++i)
          if (preds[a][i] != preds[b][i]) ++diff;
        double frac = static_cast<double>(diff) / static_cast<double>(preds[a].size());
        prep["disagreement"][reg.models[a].name + "|" + reg.models[b].name] = frac;
      }
  }
  std::ofstream pf(fs::path(opt.out_dir) / "prep_report.json");
  pf << prep.dump(2) << "\n";
}

void cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
  if (run_dirs.empty()) throw ConfigError("report: at least one run dir is required");
  fs::create_directories(out_dir);
  std::vector<harness::LabeledPoint> points;
  std::ofstream combined(fs::path(out_dir) / "combined_matrix.csv");
  combined << "run,attack,surrogate,target,success\n";
  for (const auto& dir : run_dirs) {
    harness::TransferReport rep = harness::read_report_json((fs::path(dir) / "report.json").string());
    json result;
    {
      std::ifstream f(fs::path(dir) / "result.json");
      if (f) f >> result;
    }
    double time_per_image = result.value("per_image_seconds", 0.0);
    double sum = 0;
    int n = 0;
    for (const auto& c : rep.cells) {
      combined << fs::path(dir).filename().string() << "," << c.attack << "," << c.surrogate << "," << c.target << ","
               << c.success << "\n";
      if (!c.failed && c.target != c.surrogate) {
        sum += c.success;
        ++n;
      }
    }
    harness::LabeledPoint pt;
    pt.label = result.value("attack", fs::path(dir).filename().string());
    pt.x = time_per_image;
    pt.y = n > 0 ? sum / n : 0.0;
    points.push_back(pt);
  }
  harness::write_svg_scatter((fs::path(out_dir) / "success_vs_time.svg").string(), "average black-box success vs cost",
                             "seconds per image", "targeted success rate", points);
}

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"ftm: transferable targeted adversarial attack toolkit"};
  app.require_subcommand(1);

  std::string simd = "auto";
  app.add_option("--simd", simd, "kernel backend: scalar|avx2|auto (env FTM_SIMD)");

  // ---- attack
  auto* atk = app.add_subcommand("attack", "craft adversarial examples");
  std::string config_path, preset, out_dir, attack_name, mode, surrogate, dataset, registry, targets_csv;
  std::vector<std::string> sets;
  uint64_t seed = 0;
  bool export_png = false;
  int max_images = 0;
  atk->add_option("--config", config_path, "run config JSON");
  atk->add_option("--preset", preset, "named preset (presets/<name>.cfg)");
  atk->add_option("--attack", attack_name, "named pipeline (MI, DI, RDI, RDI-SI, RDI-VT, RDI-Admix, RDI-CFM, RDI-FTM, RDI-FTM-E, custom)");
  atk->add_option("--mode", mode, "desk|full");
  atk->add_option("--seed", seed, "RNG seed");
  atk->add_option("--out", out_dir, "output run directory");
  atk->add_option("--surrogate", surrogate, "surrogate model name");
  atk->add_option("--dataset", dataset, "dataset manifest CSV");
  atk->add_option("--registry", registry, "model registry JSON");
  atk->add_option("--max-images", max_images, "limit the number of images");
  atk->add_flag("--export-png", export_png, "also export quantized PNGs");
  atk->add_option("--set", sets, "override config fields, key=value (repeatable)");

  // ---- evaluate
  auto* ev = app.add_subcommand("evaluate", "evaluate a finished run against target models");
  std::string ev_run, ev_registry;
  ev->add_option("--run", ev_run, "run directory")->required();
  ev->add_option("--targets", targets_csv, "comma-separated target model names")->required();
  ev->add_option("--registry", ev_registry, "registry override");

  // ---- ablate
  auto* ab = app.add_subcommand("ablate", "parameter sweeps with plots");
  std::string ab_kind, ab_grid, ab_out, ab_config;
  std::vector<std::string> ab_sets;
  ab->add_option("--config", ab_config, "run config JSON")->required();
  ab->add_option("--kind", ab_kind, "iterations|beta_sweep|p_alpha_grid|ensemble_size")->required();
  ab->add_option("--grid", ab_grid, "comma-separated grid values");
  ab->add_option("--out", ab_out, "output directory");
  ab->add_option("--set", ab_sets, "override config fields (repeatable)");

  // ---- prepare-desk
  auto* pd = app.add_subcommand("prepare-desk", "generate the desk dataset and train the desk model zoo");
  PrepareDeskOptions pdo;
  std::string pd_archs;
  pd->add_option("--seed", pdo.seed, "zoo seed");
  pd->add_option("--out", pdo.out_dir, "output directory")->required();
  pd->add_option("--train-count", pdo.train_count, "training images");
  pd->add_option("--test-count", pdo.test_count, "test images");
  pd->add_option("--eval-count", pdo.eval_count, "evaluation images (manifest)");
  pd->add_option("--epochs", pdo.epochs, "training epochs");
  pd->add_option("--acc-floor", pdo.acc_floor, "required test accuracy");
  pd->add_option("--archs", pd_archs, "comma-separated architecture subset");
  pd->add_flag("--verbose", pdo.verbose, "log per-epoch training progress");

  // ---- report
  auto* rp = app.add_subcommand("report", "comparison tables and plots across runs");
  std::string rp_runs, rp_out;
  rp->add_option("--runs", rp_runs, "comma-separated run directories")->required();
  rp->add_option("--out", rp_out, "output directory")->required();

  std::vector<const char*> argv;
  argv.push_back("ftm");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    apply_simd_choice(simd);
    if (atk->parsed()) {
      attack::RunConfig cfg;
      if (!preset.empty() && !config_path.empty()) throw ConfigError("attack: use either --preset or --config");
      if (!preset.empty()) {
        std::string p = "presets/" + preset + ".cfg";
        if (!fs::exists(p)) throw ConfigError("attack: preset file not found: " + p);
        cfg = attack::load_run_config(p);
      } else if (!config_path.empty()) {
        cfg = attack::load_run_config(config_path);
      }
      if (!attack_name.empty()) attack::set_config_field(cfg, "attack", attack_name);
      if (!mode.empty()) attack::set_config_field(cfg, "mode", mode);
      if (atk->count("--seed") > 0) attack::set_config_field(cfg, "atk.seed", std::to_string(seed));
      for (const auto& kv : sets) {
        size_t eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        attack::set_config_field(cfg, kv.substr(0, eq), kv.substr(eq + 1));
      }
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      if (!surrogate.empty()) cfg.surrogate = surrogate;
      if (!dataset.empty()) cfg.dataset_manifest = dataset;
      if (!registry.empty()) cfg.registry_path = registry;
      if (max_images > 0) cfg.max_images = max_images;
      if (export_png) cfg.export_png = true;
      std::string dir = cmd_attack(cfg);
      std::cout << "run written to " << dir << "\n";
    } else if (ev->parsed()) {
      harness::TransferReport rep = cmd_evaluate(ev_run, split_list(targets_csv), ev_registry);
      for (const auto& c : rep.cells)
        std::cout << c.attack << " @" << c.surrogate << " -> " << c.target << ": "
                  << (c.failed ? ("FAILED: " + c.error) : std::to_string(c.success)) << "\n";
    } else if (ab->parsed()) {
      attack::RunConfig cfg = attack::load_run_config(ab_config);
      for (const auto& kv : ab_sets) {
        size_t eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        attack::set_config_field(cfg, kv.substr(0, eq), kv.substr(eq + 1));
      }
      std::vector<double> grid;
      for (const auto& g : split_list(ab_grid)) grid.push_back(std::stod(g));
      std::string out = ab_out.empty() ? cfg.output_dir : ab_out;
      if (out.empty()) throw ConfigError("ablate: --out or config output_dir required");
      models::Registry reg2 = models::load_registry(cfg.registry_path);
      harness::EvalDataset ds = harness::load_dataset(cfg.dataset_manifest);
      if (cfg.max_images > 0) ds = harness::slice_dataset(ds, cfg.max_images);
      harness::AblationResult r = harness::run_ablation(ab_kind, grid, reg2, ds, cfg, out);
      std::cout << "ablation written: " << r.csv_path << ", " << r.svg_path << "\n";
    } else if (pd->parsed()) {
      if (!pd_archs.empty()) pdo.archs = split_list(pd_archs);
      cmd_prepare_desk(pdo);
      std::cout << "desk zoo written to " << pdo.out_dir << "\n";
    } else if (rp->parsed()) {
      cmd_report(split_list(rp_runs), rp_out);
      std::cout << "report written to " << rp_out << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const RegistryError& e) {
    std::cerr << "registry error: " << e.what() << "\n";
    return 3;
  } catch (const EvalError& e) {
    std::cerr << "evaluation error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace ftm::cli
