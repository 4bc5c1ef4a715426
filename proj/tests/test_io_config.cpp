#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mvu/checkpoint.hpp"
#include "mvu/dataset.hpp"
#include "mvu/scene.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace mvu;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const char* tag) {
    path = fs::temp_directory_path() / (std::string("mvu_io_") + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const char* name) const { return (path / name).string(); }
};

ImageF random_image(int w, int h, int c, Rng& rng, double lo = -2.0, double hi = 2.0) {
  ImageF img(w, h, c);
  for (float& v : img.data) v = float(rng.uniform(lo, hi));
  return img;
}

bool params_equal(const ModelParams<float>& a, const ModelParams<float>& b) {
  bool eq = true;
  std::vector<const Tensor<float>*> bs;
  b.visit([&bs](const char*, const Tensor<float>& t) { bs.push_back(&t); });
  size_t i = 0;
  a.visit([&](const char*, const Tensor<float>& t) {
    eq = eq && t.shape == bs[i]->shape && t.data == bs[i]->data;
    ++i;
  });
  return eq;
}

}  // namespace

TEST_CASE("pfm round-trips floats losslessly") {
  TempDir tmp("pfm");
  Rng rng(91);
  for (int channels : {1, 3}) {
    const ImageF img = random_image(7, 5, channels, rng);
    const std::string path = tmp / (channels == 1 ? "gray.pfm" : "color.pfm");
    write_pfm(path, img);
    const ImageF back = read_pfm(path);
    CHECK(back.width == img.width);
    CHECK(back.height == img.height);
    CHECK(back.channels == img.channels);
    CHECK(back.data == img.data);  // bit-exact
  }
  CHECK_THROWS(read_pfm(tmp / "missing.pfm"));
}

TEST_CASE("pbm round-trips masks at odd widths") {
  TempDir tmp("pbm");
  Rng rng(92);
  for (int w : {8, 10, 17}) {
    Mask m(w, 6);
    for (uint8_t& v : m.data) v = rng.uniform() < 0.4 ? 1 : 0;
    const std::string path = tmp / "m.pbm";
    write_pbm(path, m);
    const Mask back = read_pbm(path);
    CHECK(back.width == m.width);
    CHECK(back.height == m.height);
    CHECK(back.data == m.data);
  }
}

TEST_CASE("preview writers emit the expected binary headers") {
  TempDir tmp("ppm");
  Rng rng(93);
  write_ppm(tmp / "c.ppm", random_image(4, 3, 3, rng, 0, 1));
  write_pgm(tmp / "g.pgm", random_image(4, 3, 1, rng, 0, 1));
  char buf[3] = {};
  std::ifstream(tmp / "c.ppm").read(buf, 2);
  CHECK(std::string(buf) == "P6");
  std::ifstream(tmp / "g.pgm").read(buf, 2);
  CHECK(std::string(buf) == "P5");
}

TEST_CASE("dataset save/load round-trip") {
  TempDir tmp("dataset");
  GenConfig cfg;
  cfg.width = 48;
  cfg.height = 32;
  cfg.n_train = 3;
  cfg.n_eval = 1;
  const Dataset ds = make_dataset(17, 1, cfg);
  save_dataset(tmp / "d", ds);
  const Dataset back = load_dataset(tmp / "d");

  CHECK(back.seed == ds.seed);
  CHECK(back.distractor_level == ds.distractor_level);
  CHECK(back.near == ds.near);
  CHECK(back.far == ds.far);
  CHECK(back.norm_center == ds.norm_center);
  CHECK(back.norm_radius == ds.norm_radius);
  REQUIRE(back.views.size() == ds.views.size());
  for (size_t i = 0; i < ds.views.size(); ++i) {
    const auto& a = ds.views[i];
    const auto& b = back.views[i];
    CHECK(b.split == a.split);
    CHECK(b.cap.image.data == a.cap.image.data);
    CHECK(b.cap.clean_image.data == a.cap.clean_image.data);
    CHECK(b.cap.mask.data == a.cap.mask.data);
    CHECK(b.cap.intrinsics.fx == a.cap.intrinsics.fx);
    CHECK(b.cap.intrinsics.cx == a.cap.intrinsics.cx);
    CHECK(b.cap.pose.rotation == a.cap.pose.rotation);
    CHECK(b.cap.pose.translation == a.cap.pose.translation);
  }
  CHECK(back.train_indices() == ds.train_indices());
  CHECK(back.eval_indices() == ds.eval_indices());

  CHECK_THROWS(load_dataset(tmp / "nope"));
}

TEST_CASE("config overrides cover every key and round-trip through json") {
  TrainConfig cfg;
  cfg.set("seed", "42");
  cfg.set("iterations", "123");
  cfg.set("n_source_train", "3");
  cfg.set("n_source_eval", "6");
  cfg.set("patches", "17");
  cfg.set("k_samples", "12");
  cfg.set("lr", "0.001");
  cfg.set("stratified", "false");
  cfg.set("log_every", "10");
  cfg.set("checkpoint_every", "50");
  cfg.set("loss.mode", "beta_s_only");
  cfg.set("loss.lambda", "0.2");
  cfg.set("loss.omega", "0.25");
  cfg.set("loss.w_mse", "0.7");
  cfg.set("loss.w_ssim", "0.3");
  cfg.set("tu.c1", "8");
  cfg.set("tu.c2", "12");
  cfg.set("tu.c3", "16");
  cfg.set("tu.dec", "20");
  CHECK_NOTHROW(cfg.validate());
  CHECK_THROWS_AS(cfg.set("bogus_key", "1"), std::invalid_argument);

  const TrainConfig back = TrainConfig::from_json(cfg.to_json());
  CHECK(back.seed == 42);
  CHECK(back.iterations == 123);
  CHECK(back.n_source_train == 3);
  CHECK(back.n_source_eval == 6);
  CHECK(back.patches_per_batch == 17);
  CHECK(back.samples_per_ray == 12);
  CHECK(back.lr == 0.001);
  CHECK(back.stratified == false);
  CHECK(back.log_every == 10);
  CHECK(back.checkpoint_every == 50);
  CHECK(back.loss.mode == LossMode::BetaSOnly);
  CHECK(back.loss.lambda == 0.2);
  CHECK(back.loss.omega == 0.25);
  CHECK(back.loss.w_mse == 0.7);
  CHECK(back.loss.w_ssim == 0.3);
  CHECK(back.dims.tu_c1 == 8);
  CHECK(back.dims.tu_c2 == 12);
  CHECK(back.dims.tu_c3 == 16);
  CHECK(back.dims.tu_dec == 20);
  CHECK(back.to_json() == cfg.to_json());
}

TEST_CASE("config validation rejects bad values") {
  TrainConfig cfg;
  cfg.iterations = -1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.lr = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.patches_per_batch = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.n_source_train = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("config files: comments, whitespace, malformed lines") {
  TempDir tmp("cfg");
  {
    std::ofstream out(tmp / "ok.cfg");
    out << "# a comment line\n"
        << "\n"
        << "  iterations = 250  # trailing comment\n"
        << "loss.mode=mse_only\n"
        << "\tlr =  0.002\n";
  }
  const auto entries = read_config_file(tmp / "ok.cfg");
  REQUIRE(entries.size() == 3);
  CHECK(entries[0] == std::pair<std::string, std::string>("iterations", "250"));
  CHECK(entries[1] == std::pair<std::string, std::string>("loss.mode", "mse_only"));
  CHECK(entries[2] == std::pair<std::string, std::string>("lr", "0.002"));

  TrainConfig cfg;
  apply_config_file(cfg, tmp / "ok.cfg");
  CHECK(cfg.iterations == 250);
  CHECK(cfg.loss.mode == LossMode::MseOnly);
  CHECK(cfg.lr == 0.002);

  {
    std::ofstream out(tmp / "bad.cfg");
    out << "this line has no equals sign\n";
  }
  CHECK_THROWS(read_config_file(tmp / "bad.cfg"));
  CHECK_THROWS(read_config_file(tmp / "missing.cfg"));
}

TEST_CASE("fnv1a digest matches known vectors and is stable") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  CHECK(fnv1a_hex("config") == fnv1a_hex("config"));
  CHECK(fnv1a_hex("config") != fnv1a_hex("confih"));
}

TEST_CASE("checkpoint round-trip restores everything bit for bit") {
  TempDir tmp("ckpt");
  const ModelParams<float> params = init_params<float>(3);
  AdamState adam;
  adam.init_like(params);
  adam.step = 5;
  Rng moments(94);
  for (auto& t : adam.m)
    for (int i = 0; i < t.numel(); ++i) t[i] = float(moments.uniform(-1, 1));
  for (auto& t : adam.v)
    for (int i = 0; i < t.numel(); ++i) t[i] = float(moments.uniform(0, 1));

  Rng rng(95);
  rng.next_u64();
  rng.next_u64();
  const TrainConfig cfg;
  save_checkpoint(tmp / "a.ckpt", params, adam, 77, rng, cfg.to_json());

  const ModelParams<float> base = init_params<float>(4);  // different values on purpose
  const Checkpoint ck = load_checkpoint(tmp / "a.ckpt", base);
  CHECK(ck.iteration == 77);
  CHECK(ck.rng_state == rng.state());
  CHECK(ck.rng_inc == rng.inc());
  CHECK(ck.config_json == cfg.to_json());
  CHECK(ck.missing.empty());
  CHECK(params_equal(ck.params, params));
  CHECK(ck.adam.step == 5);
  REQUIRE(ck.adam.m.size() == adam.m.size());
  for (size_t i = 0; i < adam.m.size(); ++i) {
    CHECK(ck.adam.m[i].data == adam.m[i].data);
    CHECK(ck.adam.v[i].data == adam.v[i].data);
  }

  // the restored rng continues the saved stream
  Rng replay(0);
  replay.restore(ck.rng_state, ck.rng_inc);
  Rng expect = rng;
  CHECK(replay.next_u64() == expect.next_u64());
  CHECK(replay.next_u64() == expect.next_u64());
}

TEST_CASE("filtered checkpoints leave dropped tensors at the base values") {
  TempDir tmp("ckpt_filter");
  const ModelParams<float> params = init_params<float>(5);
  AdamState adam;
  adam.init_like(params);
  Rng rng(96);
  save_checkpoint(tmp / "f.ckpt", params, adam, 1, rng, TrainConfig{}.to_json(),
                  [](const std::string& name) { return name.rfind("tu.", 0) != 0; });

  const ModelParams<float> base = init_params<float>(6);
  const Checkpoint ck = load_checkpoint(tmp / "f.ckpt", base);
  CHECK(ck.missing.size() == 14);
  for (const std::string& name : ck.missing) CHECK(name.rfind("tu.", 0) == 0);

  // dropped tensors fall back to base, the rest match the saved values
  CHECK(ck.params.tu_enc1_w.data == base.tu_enc1_w.data);
  CHECK(ck.params.tu_mlp2_w.data == base.tu_mlp2_w.data);
  CHECK(ck.params.se_conv1_w.data == params.se_conv1_w.data);
  CHECK(ck.params.ag_key_w.data == params.ag_key_w.data);
  CHECK(ck.params.ag_null.data == params.ag_null.data);
}

TEST_CASE("checkpoint header reads and corruption errors") {
  TempDir tmp("ckpt_bad");
  const ModelParams<float> params = init_params<float>(7);
  AdamState adam;
  adam.init_like(params);
  Rng rng(97);
  TrainConfig cfg;
  cfg.iterations = 999;
  save_checkpoint(tmp / "ok.ckpt", params, adam, 2, rng, cfg.to_json());
  CHECK(read_checkpoint_config(tmp / "ok.ckpt") == cfg.to_json());
  CHECK(TrainConfig::from_json(read_checkpoint_config(tmp / "ok.ckpt")).iterations == 999);

  {
    std::ofstream out(tmp / "garbage.ckpt", std::ios::binary);
    out << "NOTACKPTxxxxxxxxxxxxxxxx";
  }
  CHECK_THROWS(load_checkpoint(tmp / "garbage.ckpt", params));
  CHECK_THROWS(read_checkpoint_config(tmp / "garbage.ckpt"));

  // truncate the valid file to half
  {
    std::ifstream in(tmp / "ok.ckpt", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(tmp / "trunc.ckpt", std::ios::binary);
    out.write(bytes.data(), std::streamsize(bytes.size() / 2));
  }
  CHECK_THROWS(load_checkpoint(tmp / "trunc.ckpt", params));

  CHECK_THROWS(load_checkpoint(tmp / "missing.ckpt", params));
  CHECK_THROWS(read_checkpoint_config(tmp / "missing.ckpt"));
}
