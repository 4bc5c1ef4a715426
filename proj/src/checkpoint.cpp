#include "mvu/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace mvu {

namespace {

constexpr char kMagic[8] = {'M', 'V', 'U', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<char*>(b), 4);
}

void put_u64(std::ostream& out, uint64_t v) {
  put_u32(out, static_cast<uint32_t>(v));
  put_u32(out, static_cast<uint32_t>(v >> 32));
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

uint64_t get_u64(std::istream& in) {
  const uint64_t lo = get_u32(in);
  const uint64_t hi = get_u32(in);
  return lo | hi << 32;
}

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, uint32_t(s.size()));
  out.write(s.data(), std::streamsize(s.size()));
}

std::string get_string(std::istream& in) {
  const uint32_t n = get_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  return s;
}

void put_f32(std::ostream& out, const float* data, size_t n) {
  // Floats are stored as little-endian IEEE-754 words.
  for (size_t i = 0; i < n; ++i) {
    uint32_t u;
    std::memcpy(&u, &data[i], 4);
    put_u32(out, u);
  }
}

void get_f32(std::istream& in, float* data, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    const uint32_t u = get_u32(in);
    std::memcpy(&data[i], &u, 4);
  }
}

void put_tensor(std::ostream& out, const std::string& name, const Tensor<float>& t) {
  put_string(out, name);
  put_u32(out, uint32_t(t.shape.size()));
  for (int d : t.shape) put_u32(out, uint32_t(d));
  put_f32(out, t.data.data(), t.data.size());
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams<float>& params,
                     const AdamState& adam, uint64_t iteration, const Rng& rng,
                     const std::string& config_json,
                     const std::function<bool(const std::string&)>& filter) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out.write(kMagic, 8);
  put_u32(out, kVersion);
  put_u64(out, iteration);
  put_u64(out, rng.state());
  put_u64(out, rng.inc());
  put_string(out, config_json);

  std::vector<std::pair<std::string, const Tensor<float>*>> kept;
  std::vector<std::pair<const Tensor<float>*, const Tensor<float>*>> kept_adam;
  {
    size_t i = 0;
    params.visit([&](const char* name, const Tensor<float>& t) {
      if (!filter || filter(name)) {
        kept.emplace_back(name, &t);
        if (!adam.m.empty()) kept_adam.emplace_back(&adam.m[i], &adam.v[i]);
      }
      ++i;
    });
  }
  put_u32(out, uint32_t(kept.size()));
  for (const auto& [name, t] : kept) put_tensor(out, name, *t);

  const bool has_adam = !adam.m.empty();
  out.put(has_adam ? 1 : 0);
  if (has_adam) {
    put_u64(out, uint64_t(adam.step));
    for (const auto& [m, v] : kept_adam) {
      put_f32(out, m->data.data(), m->data.size());
      put_f32(out, v->data.data(), v->data.size());
    }
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

Checkpoint load_checkpoint(const std::string& path, const ModelParams<float>& base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error(path + ": not a checkpoint file");
  if (get_u32(in) != kVersion) throw std::runtime_error(path + ": unsupported version");

  Checkpoint ck;
  ck.params = base;
  ck.iteration = get_u64(in);
  ck.rng_state = get_u64(in);
  ck.rng_inc = get_u64(in);
  ck.config_json = get_string(in);

  struct Entry {
    Tensor<float>* t = nullptr;
    size_t index = 0;
    bool loaded = false;
  };
  std::map<std::string, Entry> by_name;
  {
    size_t i = 0;
    ck.params.visit([&](const char* name, Tensor<float>& t) { by_name[name] = {&t, i++, false}; });
  }
  ck.adam.init_like(ck.params);

  const uint32_t n_tensors = get_u32(in);
  std::vector<size_t> loaded_order;  // visit indices in file order, for adam payload
  for (uint32_t i = 0; i < n_tensors; ++i) {
    const std::string name = get_string(in);
    const uint32_t ndim = get_u32(in);
    std::vector<int> shape(ndim);
    for (uint32_t d = 0; d < ndim; ++d) shape[d] = int(get_u32(in));
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::runtime_error(path + ": unknown tensor '" + name + "'");
    if (it->second.t->shape != shape)
      throw std::runtime_error(path + ": shape mismatch for '" + name + "'");
    get_f32(in, it->second.t->data.data(), it->second.t->data.size());
    it->second.loaded = true;
    loaded_order.push_back(it->second.index);
  }
  for (const auto& [name, e] : by_name)
    if (!e.loaded) ck.missing.push_back(name);

  const int has_adam = in.get();
  if (has_adam == 1) {
    ck.adam.step = int64_t(get_u64(in));
    for (size_t idx : loaded_order) {
      get_f32(in, ck.adam.m[idx].data.data(), ck.adam.m[idx].data.size());
      get_f32(in, ck.adam.v[idx].data.data(), ck.adam.v[idx].data.size());
    }
  }
  if (!in) throw std::runtime_error(path + ": truncated checkpoint");
  return ck;
}

std::string read_checkpoint_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error(path + ": not a checkpoint file");
  if (get_u32(in) != kVersion) throw std::runtime_error(path + ": unsupported version");
  get_u64(in);  // iteration
  get_u64(in);  // rng state
  get_u64(in);  // rng inc
  const std::string cfg = get_string(in);
  if (!in) throw std::runtime_error(path + ": truncated checkpoint");
  return cfg;
}

}  // namespace mvu
