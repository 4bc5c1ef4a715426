#pragma once

#include "mvu/checkpoint.hpp"
#include "mvu/config.hpp"
#include "mvu/dataset.hpp"
#include "mvu/losses.hpp"

#include <string>
#include <utility>
#include <vector>

namespace mvu {

struct EvalReport {
  std::vector<double> view_psnr, view_ssim;
  double mean_psnr = 0, mean_ssim = 0;
  double auroc = 0.5;  // pooled beta_t vs masks over distractor-bearing train views
  double wall_seconds = 0;
  std::string config_hash;
  int n_sources = 0;

  std::string to_json() const;
  std::string to_table() const;
};

// One batch of dilated 3x3 patches: centers plus all ray pixels, patch-major,
// offsets {-2,0,+2}^2 in row-major order (center at slot 4).
struct PatchBatchPixels {
  std::vector<std::pair<int, int>> centers;     // (cx, cy)
  std::vector<std::pair<int, int>> ray_pixels;  // 9 per patch, (x, y)
};

PatchBatchPixels sample_patch_rays(int width, int height, int n_patches, Rng& rng);

// Ring azimuth of a camera around the z axis.
double ring_angle(const Pose& pose);

// Indices from `pool` (into ds.views) sorted by ring-angle distance to the
// target pose; the closest `n` are returned.
std::vector<int> nearest_by_angle(const Dataset& ds, const std::vector<int>& pool,
                                  const Pose& target, int n);

// Renders a view with the feed-forward model (midpoint depth samples, no
// target-uncertainty involvement). Optionally emits the per-pixel beta_s map.
ImageF render_image(const ModelParams<float>& params, const Dataset& ds,
                    const std::vector<int>& source_views, const Intrinsics& intr,
                    const Pose& pose, int samples_per_ray, ImageF* beta_s_out = nullptr);

// Full-resolution target-view uncertainty for one image.
ImageF beta_t_image(const ModelParams<float>& params, const ImageF& image);

EvalReport evaluate(const ModelParams<float>& params, const Dataset& ds, const TrainConfig& cfg);

class Trainer {
 public:
  Trainer(TrainConfig cfg, const Dataset& ds);

  // One optimizer step; returns the batch loss.
  double step();

  // Runs cfg.iterations steps. When out_dir is nonempty, writes
  // train_log.jsonl and checkpoint.ckpt there (plus periodic checkpoints).
  void run(const std::string& out_dir);

  void save(const std::string& path) const;
  void load(const std::string& path);

  const ModelParams<float>& params() const { return params_; }
  ModelParams<float>& params() { return params_; }
  uint64_t iteration() const { return iter_; }
  const std::vector<std::string>& log_lines() const { return log_lines_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  void adam_update(Graph<float>& g, const std::vector<int>& param_nodes);
  void append_log(double loss, double mse, double ssim, double data, double bts, int target);

  TrainConfig cfg_;
  const Dataset* ds_;
  ModelParams<float> params_;
  AdamState adam_;
  Rng rng_;
  uint64_t iter_ = 0;
  std::vector<std::string> log_lines_;
  std::string out_dir_;
};

struct AblationRow {
  LossMode mode;
  EvalReport report;
};

// Trains one model per mode (identical seed/config otherwise) and evaluates.
std::vector<AblationRow> run_ablation(const TrainConfig& cfg, const Dataset& ds,
                                      const std::string& out_dir);

// Trains once, then evaluates with source sets holding exactly `level`
// distractor-bearing views. Returns (level, mean PSNR) pairs.
std::vector<std::pair<int, double>> robustness_sweep(const ModelParams<float>& params,
                                                     const Dataset& ds, const TrainConfig& cfg,
                                                     const std::vector<int>& levels);

std::string ablation_table(const std::vector<AblationRow>& rows);

// Loads a checkpoint using the config embedded in its header to size the
// parameter set; missing tensors fall back to their seeded init values.
Checkpoint load_checkpoint_auto(const std::string& path);

}  // namespace mvu
