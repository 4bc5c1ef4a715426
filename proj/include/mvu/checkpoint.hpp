#pragma once

#include "mvu/config.hpp"
#include "mvu/model.hpp"
#include "mvu/rng.hpp"

#include <functional>
#include <string>
#include <vector>

namespace mvu {

// Adam moment buffers, one pair per parameter tensor in visit order.
struct AdamState {
  std::vector<Tensor<float>> m, v;
  int64_t step = 0;

  void init_like(const ModelParams<float>& p) {
    m.clear();
    v.clear();
    step = 0;
    p.visit([this](const char*, const Tensor<float>& t) {
      m.push_back(Tensor<float>::zeros(t.shape));
      v.push_back(Tensor<float>::zeros(t.shape));
    });
  }
};

struct Checkpoint {
  ModelParams<float> params;
  AdamState adam;
  uint64_t iteration = 0;
  uint64_t rng_state = 0, rng_inc = 0;
  std::string config_json;
  std::vector<std::string> missing;  // tensors absent from the file (left at input values)
};

// Versioned little-endian binary container. `filter` (when given) selects
// which tensors are written, e.g. to drop a module.
void save_checkpoint(const std::string& path, const ModelParams<float>& params,
                     const AdamState& adam, uint64_t iteration, const Rng& rng,
                     const std::string& config_json,
                     const std::function<bool(const std::string&)>& filter = nullptr);

// `base` provides shapes and values for any tensors missing from the file.
Checkpoint load_checkpoint(const std::string& path, const ModelParams<float>& base);

// Reads just the embedded config JSON, so callers can size the base params
// before a full load.
std::string read_checkpoint_config(const std::string& path);

}  // namespace mvu
