#include "mvu/dataset.hpp"

#include "mvu/image.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace mvu {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

void save_dataset(const std::string& dir, const Dataset& ds) {
  fs::create_directories(dir);
  json views = json::array();
  char name[64];
  for (size_t i = 0; i < ds.views.size(); ++i) {
    const auto& v = ds.views[i];
    std::snprintf(name, sizeof(name), "view_%03zu", i);
    const std::string base(name);
    write_pfm(dir + "/" + base + "_image.pfm", v.cap.image);
    write_pfm(dir + "/" + base + "_clean.pfm", v.cap.clean_image);
    write_pbm(dir + "/" + base + "_mask.pbm", v.cap.mask);

    json jv;
    jv["split"] = v.split;
    jv["image"] = base + "_image.pfm";
    jv["clean_image"] = base + "_clean.pfm";
    jv["mask"] = base + "_mask.pbm";
    jv["intrinsics"] = {{"fx", v.cap.intrinsics.fx}, {"fy", v.cap.intrinsics.fy},
                        {"cx", v.cap.intrinsics.cx}, {"cy", v.cap.intrinsics.cy},
                        {"width", v.cap.intrinsics.width}, {"height", v.cap.intrinsics.height}};
    json R = json::array();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) R.push_back(v.cap.pose.rotation(r, c));
    jv["rotation"] = R;  // row-major world-to-camera
    jv["translation"] = {v.cap.pose.translation.x(), v.cap.pose.translation.y(),
                         v.cap.pose.translation.z()};
    views.push_back(jv);
  }

  json manifest;
  manifest["format"] = "mvu-dataset";
  manifest["version"] = 1;
  manifest["seed"] = ds.seed;
  manifest["distractor_level"] = ds.distractor_level;
  manifest["near"] = ds.near;
  manifest["far"] = ds.far;
  manifest["norm_center"] = {ds.norm_center.x(), ds.norm_center.y(), ds.norm_center.z()};
  manifest["norm_radius"] = ds.norm_radius;
  manifest["views"] = std::move(views);

  std::ofstream out(dir + "/manifest.json");
  if (!out) throw std::runtime_error(dir + ": cannot write manifest");
  out << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream in(dir + "/manifest.json");
  if (!in) throw std::runtime_error(dir + ": missing manifest.json");
  json manifest = json::parse(in);
  if (manifest.value("format", "") != "mvu-dataset")
    throw std::runtime_error(dir + ": not a dataset directory");

  Dataset ds;
  ds.seed = manifest.at("seed").get<uint64_t>();
  ds.distractor_level = manifest.at("distractor_level").get<int>();
  ds.near = manifest.at("near").get<double>();
  ds.far = manifest.at("far").get<double>();
  const auto& jc = manifest.at("norm_center");
  for (int i = 0; i < 3; ++i) ds.norm_center[i] = jc.at(i).get<double>();
  ds.norm_radius = manifest.at("norm_radius").get<double>();

  for (const auto& jv : manifest.at("views")) {
    Dataset::View v;
    v.split = jv.at("split").get<std::string>();
    v.cap.image = read_pfm(dir + "/" + jv.at("image").get<std::string>());
    v.cap.clean_image = read_pfm(dir + "/" + jv.at("clean_image").get<std::string>());
    v.cap.mask = read_pbm(dir + "/" + jv.at("mask").get<std::string>());
    const auto& ji = jv.at("intrinsics");
    v.cap.intrinsics.fx = ji.at("fx").get<double>();
    v.cap.intrinsics.fy = ji.at("fy").get<double>();
    v.cap.intrinsics.cx = ji.at("cx").get<double>();
    v.cap.intrinsics.cy = ji.at("cy").get<double>();
    v.cap.intrinsics.width = ji.at("width").get<int>();
    v.cap.intrinsics.height = ji.at("height").get<int>();
    v.cap.intrinsics.validate();
    const auto& jr = jv.at("rotation");
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) v.cap.pose.rotation(r, c) = jr.at(r * 3 + c).get<double>();
    const auto& jt = jv.at("translation");
    for (int r = 0; r < 3; ++r) v.cap.pose.translation[r] = jt.at(r).get<double>();
    v.cap.pose.validate();
    ds.views.push_back(std::move(v));
  }
  return ds;
}

}  // namespace mvu
