#pragma once

#include "mvu/scene.hpp"

#include <string>

namespace mvu {

// Directory layout: manifest.json plus per-view PFM images (lossless float)
// and PBM masks. Loading a saved dataset reproduces images and poses exactly;
// the procedural SceneSpec is not persisted (only generation needs it).
void save_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);

}  // namespace mvu
