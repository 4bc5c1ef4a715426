#include "mvu/config.hpp"

#include <json.hpp>

#include <fstream>
#include <stdexcept>

namespace mvu {

using json = nlohmann::ordered_json;

void TrainConfig::validate() const {
  if (n_source_train < 1 || n_source_eval < 1)
    throw std::invalid_argument("config: need at least one source view");
  if (patches_per_batch < 1) throw std::invalid_argument("config: patches_per_batch must be >= 1");
  if (samples_per_ray < 1) throw std::invalid_argument("config: samples_per_ray must be >= 1");
  if (iterations < 0) throw std::invalid_argument("config: iterations must be >= 0");
  if (!(lr > 0)) throw std::invalid_argument("config: lr must be positive");
  loss.validate();
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "seed") seed = std::stoull(value);
  else if (key == "iterations") iterations = std::stoi(value);
  else if (key == "n_source_train") n_source_train = std::stoi(value);
  else if (key == "n_source_eval") n_source_eval = std::stoi(value);
  else if (key == "patches") patches_per_batch = std::stoi(value);
  else if (key == "k_samples") samples_per_ray = std::stoi(value);
  else if (key == "lr") lr = std::stod(value);
  else if (key == "stratified") stratified = value == "1" || value == "true";
  else if (key == "log_every") log_every = std::stoi(value);
  else if (key == "checkpoint_every") checkpoint_every = std::stoi(value);
  else if (key == "loss.mode") loss.mode = loss_mode_from_string(value);
  else if (key == "loss.lambda") loss.lambda = std::stod(value);
  else if (key == "loss.omega") loss.omega = std::stod(value);
  else if (key == "loss.w_mse") loss.w_mse = std::stod(value);
  else if (key == "loss.w_ssim") loss.w_ssim = std::stod(value);
  else if (key == "tu.c1") dims.tu_c1 = std::stoi(value);
  else if (key == "tu.c2") dims.tu_c2 = std::stoi(value);
  else if (key == "tu.c3") dims.tu_c3 = std::stoi(value);
  else if (key == "tu.dec") dims.tu_dec = std::stoi(value);
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

std::string TrainConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["iterations"] = iterations;
  j["n_source_train"] = n_source_train;
  j["n_source_eval"] = n_source_eval;
  j["patches"] = patches_per_batch;
  j["k_samples"] = samples_per_ray;
  j["lr"] = lr;
  j["stratified"] = stratified;
  j["log_every"] = log_every;
  j["checkpoint_every"] = checkpoint_every;
  j["loss"] = {{"mode", to_string(loss.mode)}, {"lambda", loss.lambda}, {"omega", loss.omega},
               {"w_mse", loss.w_mse}, {"w_ssim", loss.w_ssim}};
  j["tu"] = {{"c1", dims.tu_c1}, {"c2", dims.tu_c2}, {"c3", dims.tu_c3}, {"dec", dims.tu_dec}};
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  TrainConfig cfg;
  cfg.seed = j.at("seed").get<uint64_t>();
  cfg.iterations = j.at("iterations").get<int>();
  cfg.n_source_train = j.at("n_source_train").get<int>();
  cfg.n_source_eval = j.at("n_source_eval").get<int>();
  cfg.patches_per_batch = j.at("patches").get<int>();
  cfg.samples_per_ray = j.at("k_samples").get<int>();
  cfg.lr = j.at("lr").get<double>();
  cfg.stratified = j.at("stratified").get<bool>();
  cfg.log_every = j.at("log_every").get<int>();
  cfg.checkpoint_every = j.at("checkpoint_every").get<int>();
  const auto& jl = j.at("loss");
  cfg.loss.mode = loss_mode_from_string(jl.at("mode").get<std::string>());
  cfg.loss.lambda = jl.at("lambda").get<double>();
  cfg.loss.omega = jl.at("omega").get<double>();
  cfg.loss.w_mse = jl.at("w_mse").get<double>();
  cfg.loss.w_ssim = jl.at("w_ssim").get<double>();
  const auto& jt = j.at("tu");
  cfg.dims.tu_c1 = jt.at("c1").get<int>();
  cfg.dims.tu_c2 = jt.at("c2").get<int>();
  cfg.dims.tu_c3 = jt.at("c3").get<int>();
  cfg.dims.tu_dec = jt.at("dec").get<int>();
  return cfg;
}

std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open config file");
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key=value");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return entries;
}

void apply_config_file(TrainConfig& cfg, const std::string& path) {
  for (const auto& [k, v] : read_config_file(path)) cfg.set(k, v);
}

std::string fnv1a_hex(const std::string& text) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace mvu
