// Command-line harness: dataset generation, training, evaluation, ablations,
// robustness sweeps, and single-view rendering.

#include "mvu/dataset.hpp"
#include "mvu/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using mvu::Dataset;
using mvu::ImageF;
using mvu::TrainConfig;
using ordered_json = nlohmann::ordered_json;

namespace {

// Default output root: $MVU_OUT when set, else the working directory.
std::string default_out(const std::string& name) {
  const char* env = std::getenv("MVU_OUT");
  return (env && *env ? std::string(env) : std::string(".")) + "/" + name;
}

TrainConfig build_config(const std::string& config_file,
                         const std::vector<std::string>& overrides) {
  TrainConfig cfg;
  if (!config_file.empty()) mvu::apply_config_file(cfg, config_file);
  for (const std::string& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("override must be key=value: " + kv);
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

ImageF normalize_map(const ImageF& m) {
  ImageF out = m;
  float lo = m.data.empty() ? 0.f : m.data[0], hi = lo;
  for (float v : m.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const float span = hi - lo;
  for (float& v : out.data) v = span > 0 ? (v - lo) / span : 0.f;
  return out;
}

void write_previews(const std::string& dir, const Dataset& ds) {
  for (size_t i = 0; i < ds.views.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "%s/preview_%03zu.ppm", dir.c_str(), i);
    mvu::write_ppm(name, ds.views[i].cap.image);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feed-forward multi-view renderer with uncertainty-aware training"};
  app.require_subcommand(1);
  app.fallthrough();  // lets --config/--set appear after the subcommand name

  std::string config_file;
  std::vector<std::string> overrides;
  app.add_option("--config", config_file, "key=value config file")->capture_default_str();
  app.add_option("--set", overrides, "config override key=value (repeatable)");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic multi-view dataset");
  std::string gen_out = default_out("dataset");
  const mvu::GenConfig gen_defaults;
  uint64_t gen_seed = 7;
  int gen_level = 0, gen_w = gen_defaults.width, gen_h = gen_defaults.height;
  int gen_train = gen_defaults.n_train, gen_eval = gen_defaults.n_eval;
  int gen_prims = gen_defaults.n_primitives;
  bool gen_previews = false;
  gen->add_option("--out", gen_out, "output directory")->capture_default_str();
  gen->add_option("--seed", gen_seed, "scene/camera seed")->capture_default_str();
  gen->add_option("--level", gen_level, "number of distractor-bearing train views")
      ->capture_default_str();
  gen->add_option("--width", gen_w)->capture_default_str();
  gen->add_option("--height", gen_h)->capture_default_str();
  gen->add_option("--n-train", gen_train)->capture_default_str();
  gen->add_option("--n-eval", gen_eval)->capture_default_str();
  gen->add_option("--primitives", gen_prims)->capture_default_str();
  gen->add_flag("--previews", gen_previews, "also write 8-bit previews");

  // train
  auto* train = app.add_subcommand("train", "train a model");
  std::string train_data, train_out = default_out("run");
  train->add_option("--data", train_data, "dataset directory")->required();
  train->add_option("--out", train_out, "output directory")->capture_default_str();

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_data, eval_ckpt, eval_out = default_out("eval");
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--out", eval_out, "output directory")->capture_default_str();

  // ablate
  auto* ablate = app.add_subcommand("ablate", "train and evaluate every loss mode");
  std::string ab_data, ab_out = default_out("ablation");
  ablate->add_option("--data", ab_data, "dataset directory")->required();
  ablate->add_option("--out", ab_out, "output directory")->capture_default_str();

  // robustness
  auto* robust = app.add_subcommand("robustness", "PSNR vs distractor-bearing source count");
  std::string rb_data, rb_ckpt, rb_out = default_out("robustness");
  std::vector<int> rb_levels = {0, 1, 2, 3};
  robust->add_option("--data", rb_data, "dataset directory")->required();
  robust->add_option("--ckpt", rb_ckpt, "checkpoint (trains from scratch when omitted)");
  robust->add_option("--out", rb_out, "output directory")->capture_default_str();
  robust->add_option("--levels", rb_levels, "injection levels")->capture_default_str();

  // render
  auto* render = app.add_subcommand("render", "render one dataset view from a checkpoint");
  std::string rd_data, rd_ckpt, rd_out = default_out("render");
  int rd_view = 0;
  bool rd_uncertainty = false;
  render->add_option("--data", rd_data, "dataset directory")->required();
  render->add_option("--ckpt", rd_ckpt, "checkpoint file")->required();
  render->add_option("--view", rd_view, "view index")->capture_default_str();
  render->add_option("--out", rd_out, "output directory")->capture_default_str();
  render->add_flag("--uncertainty", rd_uncertainty, "also write normalized uncertainty maps");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      mvu::GenConfig gc;
      gc.width = gen_w;
      gc.height = gen_h;
      gc.n_train = gen_train;
      gc.n_eval = gen_eval;
      gc.n_primitives = gen_prims;
      const Dataset ds = mvu::make_dataset(gen_seed, gen_level, gc);
      fs::create_directories(gen_out);
      mvu::save_dataset(gen_out, ds);
      if (gen_previews) write_previews(gen_out, ds);
      std::cout << "wrote " << ds.views.size() << " views to " << gen_out << "\n";
    } else if (*train) {
      const TrainConfig cfg = build_config(config_file, overrides);
      const Dataset ds = mvu::load_dataset(train_data);
      mvu::Trainer t(cfg, ds);
      t.run(train_out);
      std::cout << "trained " << cfg.iterations << " iterations; checkpoint in " << train_out
                << "\n";
    } else if (*eval) {
      const Dataset ds = mvu::load_dataset(eval_data);
      mvu::Checkpoint ck = mvu::load_checkpoint_auto(eval_ckpt);
      TrainConfig cfg = TrainConfig::from_json(ck.config_json);
      for (const std::string& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
          throw std::invalid_argument("override must be key=value: " + kv);
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
      }
      const mvu::EvalReport rep = mvu::evaluate(ck.params, ds, cfg);
      fs::create_directories(eval_out);
      std::ofstream(eval_out + "/eval.json") << rep.to_json() << "\n";
      std::ofstream(eval_out + "/eval.txt") << rep.to_table();
      std::cout << rep.to_table();
    } else if (*ablate) {
      const TrainConfig cfg = build_config(config_file, overrides);
      const Dataset ds = mvu::load_dataset(ab_data);
      const auto rows = mvu::run_ablation(cfg, ds, ab_out);
      std::cout << mvu::ablation_table(rows);
    } else if (*robust) {
      const TrainConfig cfg = build_config(config_file, overrides);
      const Dataset ds = mvu::load_dataset(rb_data);
      mvu::ModelParams<float> params;
      if (rb_ckpt.empty()) {
        mvu::Trainer t(cfg, ds);
        t.run(rb_out + "/train");
        params = t.params();
      } else {
        params = mvu::load_checkpoint_auto(rb_ckpt).params;
      }
      const auto sweep = mvu::robustness_sweep(params, ds, cfg, rb_levels);
      fs::create_directories(rb_out);
      std::ofstream jl(rb_out + "/robustness.jsonl");
      for (const auto& [level, psnr] : sweep) {
        ordered_json j;
        j["level"] = level;
        j["mean_psnr"] = psnr;
        jl << j.dump() << "\n";
        std::cout << "level " << level << "  psnr " << psnr << "\n";
      }
    } else if (*render) {
      const Dataset ds = mvu::load_dataset(rd_data);
      if (rd_view < 0 || rd_view >= int(ds.views.size()))
        throw std::invalid_argument("render: view index out of range");
      mvu::Checkpoint ck = mvu::load_checkpoint_auto(rd_ckpt);
      const TrainConfig cfg = TrainConfig::from_json(ck.config_json);
      const Dataset::View& tv = ds.views[size_t(rd_view)];

      std::vector<int> pool;
      for (int i : ds.train_indices())
        if (i != rd_view) pool.push_back(i);
      const std::vector<int> sources =
          mvu::nearest_by_angle(ds, pool, tv.cap.pose, cfg.n_source_eval);

      ImageF beta_s;
      const ImageF img = mvu::render_image(ck.params, ds, sources, tv.cap.intrinsics, tv.cap.pose,
                                           cfg.samples_per_ray, &beta_s);
      fs::create_directories(rd_out);
      mvu::write_pfm(rd_out + "/render.pfm", img);
      mvu::write_ppm(rd_out + "/render.ppm", img);
      if (rd_uncertainty) {
        mvu::write_pfm(rd_out + "/beta_s.pfm", beta_s);
        mvu::write_pgm(rd_out + "/beta_s_norm.pgm", normalize_map(beta_s));
        const ImageF bt = mvu::beta_t_image(ck.params, tv.cap.image);
        mvu::write_pfm(rd_out + "/beta_t.pfm", bt);
        mvu::write_pgm(rd_out + "/beta_t_norm.pgm", normalize_map(bt));
      }
      if (!tv.cap.clean_image.data.empty())
        std::cout << "psnr vs clean: " << mvu::image_psnr(img, tv.cap.clean_image) << "\n";
      std::cout << "wrote render to " << rd_out << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
