#include "mvu/trainer.hpp"

#include "mvu/sampling.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace mvu {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

PatchBatchPixels sample_patch_rays(int width, int height, int n_patches, Rng& rng) {
  if (width < 5 || height < 5)
    throw std::invalid_argument("sample_patch_rays: image must be at least 5x5");
  if (n_patches < 1) throw std::invalid_argument("sample_patch_rays: need at least one patch");
  PatchBatchPixels out;
  out.centers.reserve(size_t(n_patches));
  out.ray_pixels.reserve(size_t(n_patches) * 9);
  for (int p = 0; p < n_patches; ++p) {
    // Centers keep the dilated 3x3 footprint inside the image.
    const int cx = 2 + rng.below_int(width - 4);
    const int cy = 2 + rng.below_int(height - 4);
    out.centers.emplace_back(cx, cy);
    for (int dy = -2; dy <= 2; dy += 2)
      for (int dx = -2; dx <= 2; dx += 2) out.ray_pixels.emplace_back(cx + dx, cy + dy);
  }
  return out;
}

double ring_angle(const Pose& pose) {
  const Vec3 c = pose.camera_center();
  return std::atan2(c.y(), c.x());
}

std::vector<int> nearest_by_angle(const Dataset& ds, const std::vector<int>& pool,
                                  const Pose& target, int n) {
  if (int(pool.size()) < n)
    throw std::invalid_argument("nearest_by_angle: pool smaller than requested count");
  const double a0 = ring_angle(target);
  std::vector<std::pair<double, int>> ranked;
  ranked.reserve(pool.size());
  for (int i : pool) {
    double d = std::fabs(ring_angle(ds.views[size_t(i)].cap.pose) - a0);
    d = std::fmod(d, 2 * M_PI);
    if (d > M_PI) d = 2 * M_PI - d;
    ranked.emplace_back(d, i);
  }
  std::sort(ranked.begin(), ranked.end());
  std::vector<int> out;
  out.reserve(size_t(n));
  for (int i = 0; i < n; ++i) out.push_back(ranked[size_t(i)].second);
  return out;
}

namespace {

// Row-grouping permutation taking per-ray colors [9P,3] to (patch,channel)
// rows of 9 positions each.
std::vector<int> patch_channel_index(int P) {
  std::vector<int> idx(size_t(P) * 27);
  for (int p = 0; p < P; ++p)
    for (int c = 0; c < 3; ++c)
      for (int j = 0; j < 9; ++j) idx[size_t((p * 3 + c) * 9 + j)] = (p * 9 + j) * 3 + c;
  return idx;
}

int feat_dim(int image_dim) { return (image_dim + 1) / 2; }

struct SourceBundle {
  std::vector<int> views;
  std::vector<Tensor<float>> feats;  // encoded once, reused across chunks
};

SourceBundle encode_sources(const ModelParams<float>& params, const Dataset& ds,
                            const std::vector<int>& source_views) {
  SourceBundle b;
  b.views = source_views;
  for (int s : source_views) {
    Graph<float> g;
    g.grad_enabled = false;
    const ParamNodes<float> pn = lift_params(g, params);
    const int img = g.constant(image_to_chw<float>(ds.views[size_t(s)].cap.image));
    b.feats.push_back(g.val(encode_source(g, pn, img)));
  }
  return b;
}

// Renders one chunk of rays with precomputed source features. Tokens/colors
// per 3D sample; writes colors and the composited source uncertainty.
void render_chunk(const ModelParams<float>& params, const Dataset& ds, const SourceBundle& src,
                  const std::vector<Vec3>& points, const std::vector<Vec3>& dirs,
                  const std::vector<double>& depths, int R, int K, float* color_out,
                  float* beta_out) {
  Graph<float> g;
  g.grad_enabled = false;
  const ParamNodes<float> pn = lift_params(g, params);
  const int N = int(src.views.size());
  std::vector<int> feats(static_cast<size_t>(N)), colors(static_cast<size_t>(N));
  std::vector<std::vector<float>> uvs(static_cast<size_t>(N));
  std::vector<std::vector<uint8_t>> valids(static_cast<size_t>(N));
  for (int n = 0; n < N; ++n) {
    const Dataset::View& sv = ds.views[size_t(src.views[size_t(n)])];
    const ViewSamplePlan plan =
        plan_view_samples(points, sv.cap.intrinsics, sv.cap.pose, sv.cap.image,
                          feat_dim(sv.cap.intrinsics.width), feat_dim(sv.cap.intrinsics.height));
    feats[size_t(n)] = g.constant(src.feats[size_t(n)]);
    uvs[size_t(n)] = plan.uv_feat;
    valids[size_t(n)] = plan.valid;
    Tensor<float> col({int(points.size()), 3});
    std::copy(plan.colors.begin(), plan.colors.end(), col.data.begin());
    colors[size_t(n)] = g.constant(std::move(col));
  }
  const int qpe = g.constant(posenc_points<float>(points, dirs, ds.norm_center, ds.norm_radius));
  const PointForward pf = aggregate_points(g, pn, feats, uvs, valids, colors, qpe);
  const int dpe = g.constant(posenc_depths<float>(depths, ds.near, ds.far));
  const int alpha = render_weights(g, pn, pf.token, dpe, R, K);
  const Tensor<float>& col = g.val(mix_rows(g, alpha, pf.mu));
  const Tensor<float>& bet = g.val(mix_sq_rows(g, alpha, pf.sigma2));
  std::copy(col.data.begin(), col.data.end(), color_out);
  std::copy(bet.data.begin(), bet.data.end(), beta_out);
}

std::string json_line(const ordered_json& j) { return j.dump(); }

}  // namespace

ImageF render_image(const ModelParams<float>& params, const Dataset& ds,
                    const std::vector<int>& source_views, const Intrinsics& intr,
                    const Pose& pose, int samples_per_ray, ImageF* beta_s_out) {
  if (source_views.empty()) throw std::invalid_argument("render_image: no source views");
  const int W = intr.width, H = intr.height, K = samples_per_ray;
  const SourceBundle src = encode_sources(params, ds, source_views);

  Rng unused(0);
  const std::vector<double> ts = sample_along_ray(ds.near, ds.far, K, false, unused);

  ImageF out(W, H, 3);
  ImageF beta(W, H, 1);
  constexpr int kChunk = 256;  // rays per graph
  std::vector<Vec3> points, dirs;
  std::vector<double> depths;
  std::vector<float> cbuf, bbuf;
  for (int r0 = 0; r0 < W * H; r0 += kChunk) {
    const int R = std::min(kChunk, W * H - r0);
    points.clear();
    dirs.clear();
    depths.clear();
    points.reserve(size_t(R) * K);
    dirs.reserve(size_t(R) * K);
    depths.reserve(size_t(R) * K);
    for (int r = 0; r < R; ++r) {
      const int pix = r0 + r;
      const Ray ray = pixel_to_ray(intr, pose, pix % W, pix / W);
      for (double t : ts) {
        points.push_back(ray.origin + t * ray.direction);
        dirs.push_back(ray.direction);
        depths.push_back(t);
      }
    }
    cbuf.assign(size_t(R) * 3, 0.f);
    bbuf.assign(size_t(R), 0.f);
    render_chunk(params, ds, src, points, dirs, depths, R, K, cbuf.data(), bbuf.data());
    for (int r = 0; r < R; ++r) {
      const int pix = r0 + r;
      for (int c = 0; c < 3; ++c) out.at(pix / W, pix % W, c) = cbuf[size_t(r) * 3 + size_t(c)];
      beta.at(pix / W, pix % W, 0) = bbuf[size_t(r)];
    }
  }
  if (beta_s_out) *beta_s_out = std::move(beta);
  return out;
}

ImageF beta_t_image(const ModelParams<float>& params, const ImageF& image) {
  Graph<float> g;
  g.grad_enabled = false;
  const ParamNodes<float> pn = lift_params(g, params);
  const int img = g.constant(image_to_chw<float>(image));
  const Tensor<float>& bt = g.val(beta_t_map(g, pn, img));
  ImageF out(image.width, image.height, 1);
  std::copy(bt.data.begin(), bt.data.end(), out.data.begin());
  return out;
}

EvalReport evaluate(const ModelParams<float>& params, const Dataset& ds, const TrainConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  EvalReport rep;
  rep.n_sources = cfg.n_source_eval;
  rep.config_hash = fnv1a_hex(cfg.to_json());

  const std::vector<int> train = ds.train_indices();
  for (int e : ds.eval_indices()) {
    const Dataset::View& tv = ds.views[size_t(e)];
    if (tv.cap.clean_image.data.empty())
      throw std::invalid_argument("evaluate: eval view lacks a clean reference");
    const std::vector<int> sources =
        nearest_by_angle(ds, train, tv.cap.pose, cfg.n_source_eval);
    const ImageF img = render_image(params, ds, sources, tv.cap.intrinsics, tv.cap.pose,
                                    cfg.samples_per_ray);
    rep.view_psnr.push_back(image_psnr(img, tv.cap.clean_image));
    rep.view_ssim.push_back(image_ssim(img, tv.cap.clean_image));
  }
  if (!rep.view_psnr.empty()) {
    for (double v : rep.view_psnr) rep.mean_psnr += v;
    for (double v : rep.view_ssim) rep.mean_ssim += v;
    rep.mean_psnr /= double(rep.view_psnr.size());
    rep.mean_ssim /= double(rep.view_ssim.size());
  }

  // Distractor detection: pooled per-pixel uncertainty against the masks of
  // every train view that actually contains a distractor.
  std::vector<float> scores;
  std::vector<uint8_t> labels;
  for (int i : train) {
    const Dataset::View& v = ds.views[size_t(i)];
    if (v.cap.mask.count() == 0) continue;
    const ImageF bt = beta_t_image(params, v.cap.image);
    scores.insert(scores.end(), bt.data.begin(), bt.data.end());
    labels.insert(labels.end(), v.cap.mask.data.begin(), v.cap.mask.data.end());
  }
  rep.auroc = labels.empty() ? 0.5 : auroc(scores, labels);

  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

std::string EvalReport::to_json() const {
  ordered_json j;
  j["mean_psnr"] = mean_psnr;
  j["mean_ssim"] = mean_ssim;
  j["auroc"] = auroc;
  j["view_psnr"] = view_psnr;
  j["view_ssim"] = view_ssim;
  j["n_sources"] = n_sources;
  j["config_hash"] = config_hash;
  j["wall_seconds"] = wall_seconds;
  return j.dump(2);
}

std::string EvalReport::to_table() const {
  std::ostringstream os;
  os << "view    psnr      ssim\n";
  char buf[96];
  for (size_t i = 0; i < view_psnr.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%-6zu %8.3f  %7.4f\n", i, view_psnr[i], view_ssim[i]);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "mean   %8.3f  %7.4f   auroc %.4f\n", mean_psnr, mean_ssim,
                auroc);
  os << buf;
  return os.str();
}

Trainer::Trainer(TrainConfig cfg, const Dataset& ds)
    : cfg_(std::move(cfg)), ds_(&ds), rng_(cfg_.seed, 0x7e11ull) {
  cfg_.validate();
  const int n_train = int(ds.train_indices().size());
  if (n_train < 2) throw std::invalid_argument("Trainer: need at least two train views");
  if (cfg_.n_source_train > n_train - 1)
    throw std::invalid_argument("Trainer: n_source_train exceeds available source views");
  params_ = init_params<float>(cfg_.seed, cfg_.dims);
  adam_.init_like(params_);
}

double Trainer::step() {
  const std::vector<int> train = ds_->train_indices();
  const int ti = train[rng_.below(uint32_t(train.size()))];
  const Dataset::View& tv = ds_->views[size_t(ti)];
  const Intrinsics& intr = tv.cap.intrinsics;
  const int W = intr.width, H = intr.height;

  std::vector<int> pool;
  for (int i : train)
    if (i != ti) pool.push_back(i);
  const std::vector<int> sources = nearest_by_angle(*ds_, pool, tv.cap.pose, cfg_.n_source_train);

  const PatchBatchPixels batch = sample_patch_rays(W, H, cfg_.patches_per_batch, rng_);
  const int P = int(batch.centers.size());
  const int M = P * 9, K = cfg_.samples_per_ray;

  std::vector<Vec3> points, dirs;
  std::vector<double> depths;
  points.reserve(size_t(M) * K);
  dirs.reserve(size_t(M) * K);
  depths.reserve(size_t(M) * K);
  for (const auto& [px, py] : batch.ray_pixels) {
    const Ray ray = pixel_to_ray(intr, tv.cap.pose, px, py);
    const std::vector<double> ts = sample_along_ray(ds_->near, ds_->far, K, cfg_.stratified, rng_);
    for (double t : ts) {
      points.push_back(ray.origin + t * ray.direction);
      dirs.push_back(ray.direction);
      depths.push_back(t);
    }
  }

  Graph<float> g;
  g.reserve(512);
  const ParamNodes<float> pn = lift_params(g, params_);
  const int N = int(sources.size());
  std::vector<int> feats(static_cast<size_t>(N)), color_nodes(static_cast<size_t>(N));
  std::vector<std::vector<float>> uvs(static_cast<size_t>(N));
  std::vector<std::vector<uint8_t>> valids(static_cast<size_t>(N));
  for (int n = 0; n < N; ++n) {
    const Dataset::View& sv = ds_->views[size_t(sources[size_t(n)])];
    const int img = g.constant(image_to_chw<float>(sv.cap.image));
    feats[size_t(n)] = encode_source(g, pn, img);
    const ViewSamplePlan plan =
        plan_view_samples(points, sv.cap.intrinsics, sv.cap.pose, sv.cap.image,
                          feat_dim(sv.cap.intrinsics.width), feat_dim(sv.cap.intrinsics.height));
    uvs[size_t(n)] = plan.uv_feat;
    valids[size_t(n)] = plan.valid;
    Tensor<float> col({M * K, 3});
    std::copy(plan.colors.begin(), plan.colors.end(), col.data.begin());
    color_nodes[size_t(n)] = g.constant(std::move(col));
  }
  const int qpe =
      g.constant(posenc_points<float>(points, dirs, ds_->norm_center, ds_->norm_radius));
  const PointForward pf = aggregate_points(g, pn, feats, uvs, valids, color_nodes, qpe);
  const int dpe = g.constant(posenc_depths<float>(depths, ds_->near, ds_->far));
  const int alpha = render_weights(g, pn, pf.token, dpe, M, K);
  const int ray_color = mix_rows(g, alpha, pf.mu);
  const int ray_beta = mix_sq_rows(g, alpha, pf.sigma2);

  const int pred_rows = gather_flat(g, ray_color, patch_channel_index(P), {3 * P, 9});
  Tensor<float> tgt({3 * P, 9});
  for (int p = 0; p < P; ++p)
    for (int c = 0; c < 3; ++c)
      for (int j = 0; j < 9; ++j) {
        const auto [px, py] = batch.ray_pixels[size_t(p * 9 + j)];
        tgt[(p * 3 + c) * 9 + j] = tv.cap.image.at(py, px, c);
      }
  const int tgt_rows = g.constant(std::move(tgt));
  const int beta_s_patch = row_mean(g, reshape(g, ray_beta, {P, 9}));

  int beta_t_patch = -1;
  if (cfg_.loss.mode != LossMode::NoBeta) {
    const int timg = g.constant(image_to_chw<float>(tv.cap.image));
    const int bt_full = beta_t_map(g, pn, timg);
    std::vector<int> cidx(static_cast<size_t>(P));
    for (int p = 0; p < P; ++p)
      cidx[size_t(p)] = batch.centers[size_t(p)].second * W + batch.centers[size_t(p)].first;
    beta_t_patch = gather_flat(g, bt_full, std::move(cidx), {P, 1});
  }

  const PatchLossNodes<float> ln =
      multi_uncer_loss(g, pred_rows, tgt_rows, beta_s_patch, beta_t_patch, cfg_.loss);
  const double loss = double(g.val(ln.loss)[0]);
  if (!std::isfinite(loss)) {
    // Dump the batch before halting so the failure can be replayed.
    ordered_json dump;
    dump["iter"] = iter_ + 1;
    dump["target"] = ti;
    dump["loss"] = "non-finite";
    dump["sources"] = sources;
    ordered_json centers = ordered_json::array();
    for (const auto& [cx, cy] : batch.centers) centers.push_back({cx, cy});
    dump["patch_centers"] = centers;
    const std::string path =
        (out_dir_.empty() ? std::string("nan_batch.json") : out_dir_ + "/nan_batch.json");
    std::ofstream(path) << dump.dump(2) << "\n";
    throw std::runtime_error("non-finite loss at iteration " + std::to_string(iter_ + 1) +
                             "; batch dumped to " + path);
  }
  g.backward(ln.loss);
  adam_update(g, pn.all);
  ++iter_;

  auto mean_of = [&g](int id) {
    if (id < 0) return 1.0;
    const Tensor<float>& t = g.val(id);
    double acc = 0;
    for (int i = 0; i < t.numel(); ++i) acc += double(t[i]);
    return acc / double(t.numel());
  };
  if (cfg_.log_every > 0 &&
      (iter_ % uint64_t(cfg_.log_every) == 0 || iter_ == uint64_t(cfg_.iterations)))
    append_log(loss, mean_of(ln.mse), mean_of(ln.ssim), mean_of(ln.data_term),
               mean_of(ln.beta_ts), ti);
  return loss;
}

void Trainer::adam_update(Graph<float>& g, const std::vector<int>& param_nodes) {
  adam_.step += 1;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double c1 = 1.0 - std::pow(b1, double(adam_.step));
  const double c2 = 1.0 - std::pow(b2, double(adam_.step));
  std::vector<Tensor<float>*> slots;
  params_.visit([&slots](const char*, Tensor<float>& t) { slots.push_back(&t); });
  for (size_t i = 0; i < param_nodes.size(); ++i) {
    const int id = param_nodes[i];
    const float* gp = g.has_grad(id) ? g.grad(id).data.data() : nullptr;
    Tensor<float>& th = *slots[i];
    Tensor<float>& m = adam_.m[i];
    Tensor<float>& v = adam_.v[i];
    for (int e = 0; e < th.numel(); ++e) {
      const double ge = gp ? double(gp[e]) : 0.0;
      m[e] = float(b1 * double(m[e]) + (1 - b1) * ge);
      v[e] = float(b2 * double(v[e]) + (1 - b2) * ge * ge);
      th[e] = float(double(th[e]) -
                    cfg_.lr * (double(m[e]) / c1) / (std::sqrt(double(v[e]) / c2) + eps));
    }
  }
}

void Trainer::append_log(double loss, double mse, double ssim, double data, double bts,
                         int target) {
  ordered_json j;
  j["iter"] = iter_;
  j["loss"] = loss;
  j["mse"] = mse;
  j["ssim"] = ssim;
  j["data"] = data;
  j["beta_ts"] = bts;
  j["target"] = target;
  log_lines_.push_back(json_line(j));
}

void Trainer::run(const std::string& out_dir) {
  out_dir_ = out_dir;
  if (!out_dir.empty()) fs::create_directories(out_dir);
  if (log_lines_.empty()) {
    ordered_json j;
    j["event"] = "start";
    j["seed"] = cfg_.seed;
    j["iterations"] = cfg_.iterations;
    j["n_source_train"] = cfg_.n_source_train;
    j["n_source_eval"] = cfg_.n_source_eval;
    j["loss_mode"] = to_string(cfg_.loss.mode);
    j["config_hash"] = fnv1a_hex(cfg_.to_json());
    log_lines_.push_back(json_line(j));
  }
  while (iter_ < uint64_t(cfg_.iterations)) {
    step();
    if (!out_dir.empty() && cfg_.checkpoint_every > 0 &&
        iter_ % uint64_t(cfg_.checkpoint_every) == 0 && iter_ < uint64_t(cfg_.iterations)) {
      char name[48];
      std::snprintf(name, sizeof name, "ckpt_%06llu.ckpt", (unsigned long long)iter_);
      save(out_dir + "/" + name);
    }
  }
  if (!out_dir.empty()) {
    std::ofstream log(out_dir + "/train_log.jsonl");
    for (const std::string& line : log_lines_) log << line << "\n";
    save(out_dir + "/checkpoint.ckpt");
  }
}

void Trainer::save(const std::string& path) const {
  save_checkpoint(path, params_, adam_, iter_, rng_, cfg_.to_json());
}

void Trainer::load(const std::string& path) {
  Checkpoint ck = load_checkpoint(path, params_);
  params_ = std::move(ck.params);
  adam_ = std::move(ck.adam);
  iter_ = ck.iteration;
  rng_.restore(ck.rng_state, ck.rng_inc);
  cfg_ = TrainConfig::from_json(ck.config_json);
}

std::vector<AblationRow> run_ablation(const TrainConfig& cfg, const Dataset& ds,
                                      const std::string& out_dir) {
  const LossMode modes[] = {LossMode::NoBeta,  LossMode::BetaSOnly, LossMode::BetaTOnly,
                            LossMode::MseOnly, LossMode::SsimOnly,  LossMode::Full};
  std::vector<AblationRow> rows;
  for (LossMode m : modes) {
    TrainConfig c = cfg;
    c.loss.mode = m;
    Trainer t(c, ds);
    t.run(out_dir.empty() ? "" : out_dir + "/" + to_string(m));
    rows.push_back({m, evaluate(t.params(), ds, c)});
  }
  if (!out_dir.empty()) {
    std::ofstream jl(out_dir + "/ablation.jsonl");
    for (const AblationRow& r : rows) {
      ordered_json j;
      j["mode"] = to_string(r.mode);
      j["mean_psnr"] = r.report.mean_psnr;
      j["mean_ssim"] = r.report.mean_ssim;
      j["auroc"] = r.report.auroc;
      jl << j.dump() << "\n";
    }
    std::ofstream tbl(out_dir + "/ablation.txt");
    tbl << ablation_table(rows);
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "mode          psnr      ssim     auroc\n";
  char buf[96];
  for (const AblationRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%-12s %8.3f  %7.4f  %7.4f\n", to_string(r.mode),
                  r.report.mean_psnr, r.report.mean_ssim, r.report.auroc);
    os << buf;
  }
  return os.str();
}

std::vector<std::pair<int, double>> robustness_sweep(const ModelParams<float>& params,
                                                     const Dataset& ds, const TrainConfig& cfg,
                                                     const std::vector<int>& levels) {
  std::vector<int> dirty, clean;
  for (int i : ds.train_indices())
    (ds.views[size_t(i)].cap.mask.count() > 0 ? dirty : clean).push_back(i);

  std::vector<std::pair<int, double>> out;
  for (int level : levels) {
    if (level < 0 || level > cfg.n_source_eval)
      throw std::invalid_argument("robustness_sweep: level outside source count");
    if (int(dirty.size()) < level || int(clean.size()) < cfg.n_source_eval - level)
      throw std::invalid_argument("robustness_sweep: not enough views for requested mix");
    double acc = 0;
    int count = 0;
    for (int e : ds.eval_indices()) {
      const Dataset::View& tv = ds.views[size_t(e)];
      std::vector<int> sources = nearest_by_angle(ds, dirty, tv.cap.pose, level);
      const std::vector<int> cs =
          nearest_by_angle(ds, clean, tv.cap.pose, cfg.n_source_eval - level);
      sources.insert(sources.end(), cs.begin(), cs.end());
      const ImageF img = render_image(params, ds, sources, tv.cap.intrinsics, tv.cap.pose,
                                      cfg.samples_per_ray);
      acc += image_psnr(img, tv.cap.clean_image);
      ++count;
    }
    out.emplace_back(level, acc / count);
  }
  return out;
}

Checkpoint load_checkpoint_auto(const std::string& path) {
  const TrainConfig cfg = TrainConfig::from_json(read_checkpoint_config(path));
  return load_checkpoint(path, init_params<float>(cfg.seed, cfg.dims));
}

}  // namespace mvu
