#include "mvu/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mvu {

namespace {

constexpr double kTMin = 1e-6;
constexpr double kInf = std::numeric_limits<double>::infinity();

struct Hit {
  double t = kInf;
  Vec3 normal = Vec3::UnitZ();
  const Primitive* prim = nullptr;
};

bool hit_sphere(const Ray& r, const Vec3& c, double rad, double& t, Vec3& n) {
  const Vec3 oc = r.origin - c;
  const double b = oc.dot(r.direction);
  const double disc = b * b - (oc.squaredNorm() - rad * rad);
  if (disc < 0) return false;
  const double s = std::sqrt(disc);
  double tt = -b - s;
  if (tt <= kTMin) tt = -b + s;
  if (tt <= kTMin) return false;
  t = tt;
  n = (r.origin + tt * r.direction - c).normalized();
  return true;
}

bool hit_box(const Ray& r, const Vec3& c, const Vec3& half, double& t, Vec3& n) {
  double t0 = kTMin, t1 = kInf;
  int axis = -1;
  double sign = 1;
  for (int a = 0; a < 3; ++a) {
    const double o = r.origin[a] - c[a], d = r.direction[a];
    if (std::abs(d) < 1e-12) {
      if (std::abs(o) > half[a]) return false;
      continue;
    }
    double ta = (-half[a] - o) / d, tb = (half[a] - o) / d;
    double sg = -1;
    if (ta > tb) {
      std::swap(ta, tb);
      sg = 1;
    }
    if (ta > t0) {
      t0 = ta;
      axis = a;
      sign = sg;
    }
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  if (axis < 0) return false;  // origin inside: treat as miss
  t = t0;
  n = Vec3::Zero();
  n[axis] = sign;
  return true;
}

// Ground plane: z = c.z, restricted to a disc of radius size.x around (c.x, c.y).
bool hit_plane_disc(const Ray& r, const Vec3& c, double disc_radius, double& t, Vec3& n) {
  const double dz = r.direction.z();
  if (std::abs(dz) < 1e-12) return false;
  const double tt = (c.z() - r.origin.z()) / dz;
  if (tt <= kTMin) return false;
  const Vec3 p = r.origin + tt * r.direction;
  const double dx = p.x() - c.x(), dy = p.y() - c.y();
  if (dx * dx + dy * dy > disc_radius * disc_radius) return false;
  t = tt;
  n = Vec3(0, 0, dz < 0 ? 1 : -1);
  return true;
}

// Camera-facing disc.
bool hit_billboard(const Ray& r, const Vec3& c, double rad, const Vec3& cam_center, double& t,
                   Vec3& n) {
  Vec3 nn = cam_center - c;
  const double len = nn.norm();
  if (len < 1e-9) return false;
  nn /= len;
  const double denom = r.direction.dot(nn);
  if (std::abs(denom) < 1e-12) return false;
  const double tt = (c - r.origin).dot(nn) / denom;
  if (tt <= kTMin) return false;
  if ((r.origin + tt * r.direction - c).squaredNorm() > rad * rad) return false;
  t = tt;
  n = nn;
  return true;
}

bool hit_primitive(const Primitive& pr, const Ray& r, const Vec3& cam_center, double& t, Vec3& n) {
  switch (pr.kind) {
    case PrimKind::Sphere:
      return hit_sphere(r, pr.center, pr.size.x(), t, n);
    case PrimKind::Box:
      return hit_box(r, pr.center, pr.size, t, n);
    case PrimKind::GroundPlane:
      return hit_plane_disc(r, pr.center, pr.size.x(), t, n);
    case PrimKind::Billboard:
      return hit_billboard(r, pr.center, pr.size.x(), cam_center, t, n);
  }
  return false;
}

uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

double lattice_noise(int64_t ix, int64_t iy, int64_t iz, uint32_t salt) {
  uint64_t h = mix64((uint64_t(ix) * 0x9E3779B1u) ^ (uint64_t(iy) << 21) ^ (uint64_t(iz) << 42) ^
                     (uint64_t(salt) << 1));
  return double(h >> 11) * 0x1p-53;
}

double smoothstep(double f) { return f * f * (3 - 2 * f); }

double value_noise(const Vec3& p, uint32_t salt) {
  const double fx = std::floor(p.x()), fy = std::floor(p.y()), fz = std::floor(p.z());
  const int64_t ix = int64_t(fx), iy = int64_t(fy), iz = int64_t(fz);
  const double u = smoothstep(p.x() - fx), v = smoothstep(p.y() - fy), w = smoothstep(p.z() - fz);
  double acc = 0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const double wgt = (dx ? u : 1 - u) * (dy ? v : 1 - v) * (dz ? w : 1 - w);
        acc += wgt * lattice_noise(ix + dx, iy + dy, iz + dz, salt);
      }
  return acc;
}

Vec3 texture_albedo(const Primitive& pr, const Vec3& p) {
  switch (pr.tex.kind) {
    case TexKind::Solid:
      return pr.albedo;
    case TexKind::Checker: {
      const double s = pr.tex.scale;
      const int64_t cell = int64_t(std::floor(p.x() / s)) + int64_t(std::floor(p.y() / s)) +
                           int64_t(std::floor(p.z() / s));
      return (cell & 1) ? pr.tex.color2 : pr.albedo;
    }
    case TexKind::Noise: {
      const double v = value_noise(p / pr.tex.scale, pr.tex.salt);
      return pr.albedo + v * (pr.tex.color2 - pr.albedo);
    }
  }
  return pr.albedo;
}

Vec3 shade(const SceneSpec& scene, const Primitive& pr, const Vec3& p, const Vec3& n) {
  const Vec3 alb = texture_albedo(pr, p);
  const double diffuse = std::max(0.0, n.dot(scene.light_dir));
  return alb * (scene.ambient + (1.0 - scene.ambient) * diffuse);
}

Vec3 background(const SceneSpec& scene, const Vec3& dir) {
  const double t = 0.5 * (dir.z() + 1.0);
  return scene.bg_bottom + t * (scene.bg_top - scene.bg_bottom);
}

Hit trace_static(const SceneSpec& scene, const Ray& r, const Vec3& cam_center) {
  Hit best;
  for (const Primitive& pr : scene.primitives) {
    double t;
    Vec3 n;
    if (hit_primitive(pr, r, cam_center, t, n) && t < best.t) best = {t, n, &pr};
  }
  return best;
}

}  // namespace

std::optional<double> first_static_hit(const SceneSpec& scene, const Ray& ray) {
  const Hit h = trace_static(scene, ray, ray.origin);
  if (!h.prim) return std::nullopt;
  return h.t;
}

std::optional<std::pair<double, bool>> first_hit_with_distractors(
    const SceneSpec& scene, const std::vector<DistractorSpec>& distractors, int view_index,
    const Ray& ray, const Vec3& cam_center) {
  Hit h = trace_static(scene, ray, cam_center);
  double t_best = h.t;
  bool is_dis = false;
  for (const DistractorSpec& d : distractors) {
    if (view_index >= int(d.per_view_presence.size()) || !d.per_view_presence[view_index])
      continue;
    Primitive pr;
    pr.kind = d.kind;
    pr.center = d.per_view_position[view_index];
    pr.size = Vec3::Constant(d.size);
    double t;
    Vec3 n;
    if (hit_primitive(pr, ray, cam_center, t, n) && t < t_best) {
      t_best = t;
      is_dis = true;
    }
  }
  if (t_best == kInf) return std::nullopt;
  return std::make_pair(t_best, is_dis);
}

ViewCapture render_view(const SceneSpec& scene, const Pose& pose, const Intrinsics& intr,
                        const std::vector<DistractorSpec>& distractors, int view_index) {
  if (!(intr.fx > 0) || !(intr.fy > 0)) throw std::invalid_argument("render_view: bad intrinsics");
  pose.validate();
  ViewCapture cap;
  cap.intrinsics = intr;
  cap.pose = pose;
  cap.image = ImageF(intr.width, intr.height, 3);
  cap.clean_image = ImageF(intr.width, intr.height, 3);
  cap.mask = Mask(intr.width, intr.height);
  const Vec3 cam_center = pose.camera_center();

  for (int y = 0; y < intr.height; ++y) {
    for (int x = 0; x < intr.width; ++x) {
      const Ray ray = pixel_to_ray(intr, pose, double(x), double(y));
      const Hit hs = trace_static(scene, ray, cam_center);
      Vec3 clean;
      if (hs.prim)
        clean = shade(scene, *hs.prim, ray.origin + hs.t * ray.direction, hs.normal);
      else
        clean = background(scene, ray.direction);

      // Nearest distractor present in this view, if any in front of the static hit.
      double td = hs.t;
      Vec3 nd;
      const DistractorSpec* dhit = nullptr;
      for (const DistractorSpec& d : distractors) {
        if (view_index >= int(d.per_view_presence.size()) || !d.per_view_presence[view_index])
          continue;
        Primitive pr;
        pr.kind = d.kind;
        pr.center = d.per_view_position[view_index];
        pr.size = Vec3::Constant(d.size);
        pr.albedo = d.albedo;
        double t;
        Vec3 n;
        if (hit_primitive(pr, ray, cam_center, t, n) && t < td) {
          td = t;
          nd = n;
          dhit = &d;
        }
      }

      for (int c = 0; c < 3; ++c) cap.clean_image.at(y, x, c) = float(clean[c]);
      if (dhit) {
        Primitive pr;
        pr.albedo = dhit->albedo;
        pr.tex.kind = TexKind::Solid;
        const Vec3 col = shade(scene, pr, ray.origin + td * ray.direction, nd);
        for (int c = 0; c < 3; ++c) cap.image.at(y, x, c) = float(col[c]);
        cap.mask.at(y, x) = 1;
      } else {
        for (int c = 0; c < 3; ++c) cap.image.at(y, x, c) = cap.clean_image.at(y, x, c);
      }
    }
  }
  return cap;
}

SceneSpec generate_scene(uint64_t seed, const GenConfig& cfg) {
  if (cfg.n_primitives <= 0) throw std::invalid_argument("generate_scene: need at least 1 primitive");
  SceneSpec scene;
  scene.seed = seed;
  Rng rng(seed, 0xA11CEull);

  const double laz = rng.uniform(0, 2 * M_PI);
  const double lel = rng.uniform(0.6, 1.15);
  scene.light_dir = Vec3(std::cos(laz) * std::cos(lel), std::sin(laz) * std::cos(lel),
                         std::sin(lel))
                        .normalized();
  scene.ambient = rng.uniform(0.3, 0.42);

  const Vec3 palette[6] = {Vec3(0.82, 0.38, 0.30), Vec3(0.33, 0.55, 0.78), Vec3(0.42, 0.68, 0.38),
                           Vec3(0.78, 0.68, 0.32), Vec3(0.60, 0.42, 0.68), Vec3(0.36, 0.65, 0.62)};

  for (int i = 0; i < cfg.n_primitives; ++i) {
    Primitive pr;
    pr.kind = rng.below(2) == 0 ? PrimKind::Sphere : PrimKind::Box;
    const double ang = (i + rng.uniform(0.1, 0.9)) * 2 * M_PI / cfg.n_primitives;
    const double rad = rng.uniform(0.25, 0.8);
    const double size = rng.uniform(0.25, 0.45);
    if (pr.kind == PrimKind::Sphere) {
      pr.size = Vec3::Constant(size);
      pr.center = Vec3(rad * std::cos(ang), rad * std::sin(ang), size);
    } else {
      pr.size = Vec3(size * rng.uniform(0.7, 1.2), size * rng.uniform(0.7, 1.2),
                     size * rng.uniform(0.8, 1.4));
      pr.center = Vec3(rad * std::cos(ang), rad * std::sin(ang), pr.size.z());
    }
    pr.albedo = palette[rng.below(6)] + Vec3(rng.uniform(-0.06, 0.06), rng.uniform(-0.06, 0.06),
                                             rng.uniform(-0.06, 0.06));
    const uint32_t tk = rng.below(3);
    pr.tex.kind = tk == 0 ? TexKind::Solid : (tk == 1 ? TexKind::Checker : TexKind::Noise);
    pr.tex.scale = rng.uniform(0.12, 0.3);
    pr.tex.color2 = pr.albedo * 0.45;
    pr.tex.salt = uint32_t(rng.next_u32());
    scene.primitives.push_back(pr);
  }

  Primitive ground;
  ground.kind = PrimKind::GroundPlane;
  ground.center = Vec3::Zero();
  ground.size = Vec3(2.2, 0, 0);
  ground.albedo = Vec3(0.62, 0.60, 0.57);
  ground.tex.kind = TexKind::Checker;
  ground.tex.scale = 0.85;
  ground.tex.color2 = Vec3(0.42, 0.44, 0.48);
  scene.primitives.push_back(ground);

  scene.scene_center = Vec3(0, 0, 0.4);
  scene.scene_radius = 1.6;
  return scene;
}

std::vector<int> Dataset::train_indices() const {
  std::vector<int> idx;
  for (int i = 0; i < int(views.size()); ++i)
    if (views[i].split == "train") idx.push_back(i);
  return idx;
}

std::vector<int> Dataset::eval_indices() const {
  std::vector<int> idx;
  for (int i = 0; i < int(views.size()); ++i)
    if (views[i].split == "eval-target") idx.push_back(i);
  return idx;
}

Dataset make_dataset(uint64_t seed, int distractor_level, const GenConfig& cfg) {
  if (cfg.n_train < 2) throw std::invalid_argument("make_dataset: need at least 2 train views");
  if (distractor_level < 0 || distractor_level > cfg.n_train)
    throw std::invalid_argument("make_dataset: distractor_level out of range");
  if (cfg.width % 8 != 0 || cfg.height % 8 != 0)
    throw std::invalid_argument("make_dataset: image dims must be divisible by 8");
  if (cfg.n_distractors < 1)
    throw std::invalid_argument("make_dataset: need at least 1 distractor per dirty view");

  Dataset ds;
  ds.seed = seed;
  ds.distractor_level = distractor_level;
  ds.scene = generate_scene(seed, cfg);
  ds.norm_center = ds.scene.scene_center;
  ds.norm_radius = ds.scene.scene_radius;

  Intrinsics intr;
  intr.width = cfg.width;
  intr.height = cfg.height;
  intr.fx = intr.fy = double(cfg.width);
  intr.cx = (cfg.width - 1) / 2.0;
  intr.cy = (cfg.height - 1) / 2.0;

  Rng rng(seed, 0xCA3ull);
  std::vector<Pose> train_poses, eval_poses;
  for (int i = 0; i < cfg.n_train; ++i) {
    const double ang = (i + 0.3 * rng.uniform(-0.5, 0.5)) * 2 * M_PI / cfg.n_train;
    const double r = cfg.ring_radius * (1 + 0.05 * rng.uniform(-1, 1));
    const double z = rng.uniform(cfg.elev_lo, cfg.elev_hi);
    train_poses.push_back(look_at(Vec3(r * std::cos(ang), r * std::sin(ang), z),
                                  ds.scene.scene_center));
  }
  for (int i = 0; i < cfg.n_eval; ++i) {
    const double ang = (i + 0.5 + 0.2 * rng.uniform(-0.5, 0.5)) * 2 * M_PI / cfg.n_eval;
    const double r = cfg.ring_radius;
    const double z = 0.5 * (cfg.elev_lo + cfg.elev_hi) + 0.1 * rng.uniform(-1, 1);
    eval_poses.push_back(look_at(Vec3(r * std::cos(ang), r * std::sin(ang), z),
                                 ds.scene.scene_center));
  }

  // Depth bounds wide enough to cover every camera-to-ground distance.
  double dmin = kInf, dmax = 0;
  const double ground_r = ds.scene.primitives.back().size.x();
  for (const auto& p : train_poses) {
    const double d = (p.camera_center() - ds.scene.scene_center).norm();
    dmin = std::min(dmin, d);
    dmax = std::max(dmax, d);
  }
  for (const auto& p : eval_poses) {
    const double d = (p.camera_center() - ds.scene.scene_center).norm();
    dmin = std::min(dmin, d);
    dmax = std::max(dmax, d);
  }
  ds.near = std::max(0.15, dmin - ground_r - 0.3);
  ds.far = dmax + ground_r + 0.3;

  // Nested dirty-view selection: the first `level` entries of a seeded
  // permutation, so raising the level only adds views.
  std::vector<int> perm(cfg.n_train);
  std::iota(perm.begin(), perm.end(), 0);
  Rng prng(seed, 0xD157ull);
  for (int i = cfg.n_train - 1; i > 0; --i)
    std::swap(perm[i], perm[uint32_t(prng.below(uint32_t(i + 1)))]);
  std::vector<uint8_t> dirty(cfg.n_train, 0);
  for (int i = 0; i < distractor_level; ++i) dirty[perm[i]] = 1;

  std::vector<DistractorSpec> distractors;
  const Vec3 dis_palette[4] = {Vec3(0.95, 0.12, 0.10), Vec3(0.10, 0.85, 0.15),
                               Vec3(0.15, 0.20, 0.95), Vec3(0.95, 0.80, 0.10)};
  for (int i = 0; i < cfg.n_train; ++i) {
    if (!dirty[i]) continue;
    Rng drng(seed, 0xD157000ull + uint64_t(i));  // per-view, level-independent
    // Plan all blobs for this view first so the coverage cap can shrink them
    // together; draws stay in one fixed-order stream for determinism.
    struct Plan {
      double u, v, frac;
      uint32_t kind, color;
    };
    std::vector<Plan> plans(size_t(std::max(1, cfg.n_distractors)));
    double frac_sum = 0;
    for (Plan& p : plans) {
      p.u = drng.uniform(0.28, 0.72) * (cfg.width - 1);
      p.v = drng.uniform(0.30, 0.78) * (cfg.height - 1);
      p.frac = drng.uniform(cfg.min_coverage_frac, cfg.max_coverage_frac);
      p.kind = drng.below(3);
      p.color = drng.below(4);
      frac_sum += p.frac;
    }
    const double shrink = frac_sum > cfg.max_coverage ? cfg.max_coverage / frac_sum : 1.0;
    for (const Plan& p : plans) {
      const Ray ray = pixel_to_ray(intr, train_poses[i], p.u, p.v);
      double T = (train_poses[i].camera_center() - ds.scene.scene_center).norm();
      if (auto h = first_static_hit(ds.scene, ray)) T = *h;
      const double place = 0.55 * T;
      const double rho = std::sqrt(shrink * p.frac * cfg.width * cfg.height / M_PI);
      DistractorSpec d;
      d.kind = p.kind == 0 ? PrimKind::Sphere : (p.kind == 1 ? PrimKind::Box : PrimKind::Billboard);
      // A cube's widest silhouette (seen along its diagonal) is sqrt(3)*(2s)^2,
      // so shrink boxes to keep the planned screen-area budget an upper bound.
      const double shape = d.kind == PrimKind::Box ? std::sqrt(M_PI / (4.0 * std::sqrt(3.0))) : 1.0;
      d.size = shape * rho * place / intr.fx;
      d.albedo = dis_palette[p.color];
      d.per_view_presence.assign(cfg.n_train, 0);
      d.per_view_presence[i] = 1;
      d.per_view_position.assign(cfg.n_train, Vec3::Zero());
      d.per_view_position[i] = ray.origin + place * ray.direction;
      distractors.push_back(d);
    }
  }

  for (int i = 0; i < cfg.n_train; ++i) {
    Dataset::View v;
    v.cap = render_view(ds.scene, train_poses[i], intr, distractors, i);
    v.split = "train";
    ds.views.push_back(std::move(v));
  }
  for (int i = 0; i < cfg.n_eval; ++i) {
    Dataset::View v;
    v.cap = render_view(ds.scene, eval_poses[i], intr, {}, 0);
    v.split = "eval-target";
    ds.views.push_back(std::move(v));
  }
  return ds;
}

}  // namespace mvu
