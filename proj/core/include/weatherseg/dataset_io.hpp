#pragma once

#include <filesystem>

#include "weatherseg/scenegen.hpp"

// On-disk dataset layout:
//
//   root/manifest.json
//   root/{train,test}/scene_<id>/clear.png
//   root/{train,test}/scene_<id>/degraded_<k>.png
//   root/{train,test}/scene_<id>/labels.png      (single channel class ids)
//   root/{train,test}/scene_<id>/meta.json       (recipes and seeds)
namespace weatherseg::scene {

config::Json recipe_to_json(const weather::WeatherRecipe& r);
weather::WeatherRecipe recipe_from_json(const config::Json& j);

config::Json manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const config::Json& j);

// Writes every split and the manifest. The returned manifest is exactly what
// was written.
DatasetManifest write_dataset(const Dataset& dataset, const std::filesystem::path& root);

struct LoadOptions {
  // Re-render each degraded variant from (clear, recipe) and require a
  // byte-identical match.
  bool verify_render = false;
};

// Loads and validates: files present, sizes consistent, class ids in range,
// per-sample config hash equal to the manifest's. Throws DataError naming the
// offending sample.
Dataset load_dataset(const std::filesystem::path& root, const LoadOptions& options = {});
DatasetManifest load_manifest(const std::filesystem::path& root);

}  // namespace weatherseg::scene
