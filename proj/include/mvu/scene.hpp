#pragma once

#include "mvu/camera.hpp"
#include "mvu/image.hpp"
#include "mvu/rng.hpp"

#include <optional>
#include <string>
#include <vector>

// Procedural multi-view scenes: a few textured primitives on a ground plane,
// Lambertian shading, plus per-view transient distractors with exact masks.

namespace mvu {

enum class PrimKind { Sphere, Box, GroundPlane, Billboard };

enum class TexKind { Solid, Checker, Noise };

struct Texture {
  TexKind kind = TexKind::Solid;
  double scale = 0.4;          // world-space cell size for checker/noise
  Vec3 color2 = Vec3::Zero();  // secondary color
  uint32_t salt = 0;           // noise hash salt
};

struct Primitive {
  PrimKind kind = PrimKind::Sphere;
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Ones();  // sphere: x=radius; box: half extents; plane: x=disc radius
  Vec3 albedo = Vec3::Ones();
  Texture tex;
};

struct SceneSpec {
  uint64_t seed = 0;
  std::vector<Primitive> primitives;  // static geometry, ground plane last
  Vec3 light_dir = Vec3(0, 0, 1);    // unit, points toward the light
  double ambient = 0.35;
  Vec3 bg_top = Vec3(0.55, 0.65, 0.80);
  Vec3 bg_bottom = Vec3(0.90, 0.85, 0.75);
  Vec3 scene_center = Vec3(0, 0, 0.4);  // normalization frame for the model
  double scene_radius = 1.6;
};

struct DistractorSpec {
  PrimKind kind = PrimKind::Sphere;  // sphere, box, or billboard sprite
  std::vector<uint8_t> per_view_presence;
  std::vector<Vec3> per_view_position;  // meaningful where present
  double size = 0.2;                    // radius / half extent
  Vec3 albedo = Vec3(1, 0.1, 0.1);
};

struct ViewCapture {
  ImageF image;        // with distractors
  ImageF clean_image;  // static scene only
  Mask mask;           // true where a distractor is the first hit
  Intrinsics intrinsics;
  Pose pose;
};

struct GenConfig {
  int n_primitives = 3;  // random primitives; ground plane added on top
  int width = 56, height = 40;
  int n_train = 12, n_eval = 4;
  double ring_radius = 2.4;
  double elev_lo = 0.55, elev_hi = 1.05;  // camera heights above ground
  double max_coverage = 0.25;  // cap on summed planned distractor screen fraction
  int n_distractors = 3;       // per distractor-bearing view
  double min_coverage_frac = 0.05, max_coverage_frac = 0.08;  // per distractor
};

struct Dataset {
  struct View {
    ViewCapture cap;
    std::string split;  // "train" or "eval-target"
  };
  std::vector<View> views;
  double near = 0.5, far = 5.0;
  uint64_t seed = 0;
  int distractor_level = 0;
  Vec3 norm_center = Vec3(0, 0, 0.4);  // scene normalization for the model
  double norm_radius = 1.6;
  SceneSpec scene;  // retained for oracle re-intersection in tests

  std::vector<int> train_indices() const;
  std::vector<int> eval_indices() const;
};

SceneSpec generate_scene(uint64_t seed, const GenConfig& cfg);

ViewCapture render_view(const SceneSpec& scene, const Pose& pose, const Intrinsics& intr,
                        const std::vector<DistractorSpec>& distractors, int view_index);

// Full pipeline: cameras on a jittered inward ring, exactly `distractor_level`
// train views carry distractors (nested as the level grows), eval targets clean.
Dataset make_dataset(uint64_t seed, int distractor_level, const GenConfig& cfg);

// First static-geometry hit along a ray; used by render_view and by tests for
// mask re-verification. Returns distance or nullopt on miss.
std::optional<double> first_static_hit(const SceneSpec& scene, const Ray& ray);

// First hit including view-present distractors; .second true when the hit is a
// distractor.
std::optional<std::pair<double, bool>> first_hit_with_distractors(
    const SceneSpec& scene, const std::vector<DistractorSpec>& distractors, int view_index,
    const Ray& ray, const Vec3& cam_center);

}  // namespace mvu
