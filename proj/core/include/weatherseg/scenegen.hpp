#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "weatherseg/config.hpp"
#include "weatherseg/image.hpp"
#include "weatherseg/rng.hpp"
#include "weatherseg/weathersim.hpp"

// Procedural paired clear/degraded scenes with exact pixel labels.
namespace weatherseg::scene {

enum class ShapeKind { kSky, kTerrain, kStructure, kTree, kStone, kRoad };

std::string_view to_string(ShapeKind k);
ShapeKind shape_kind_from_string(std::string_view s);

// How one class is drawn. The first sky and first terrain class form the
// background split at the horizon; every other class is drawn on top with
// probability `presence`, `min_count`..`max_count` instances.
struct ClassStyle {
  std::string name;
  ShapeKind shape = ShapeKind::kTerrain;
  std::array<double, 3> color{0.5, 0.5, 0.5};
  double color_jitter = 0.05;   // per-scene uniform shift of the base color
  double texture_amp = 0.05;    // value-noise amplitude
  double texture_scale = 4.0;   // value-noise lattice spacing, pixels
  double presence = 1.0;
  int min_count = 1;
  int max_count = 1;
};

std::vector<ClassStyle> default_classes();

struct SceneConfig {
  int height = 64;
  int width = 64;
  std::vector<ClassStyle> classes = default_classes();

  int num_classes() const { return static_cast<int>(classes.size()); }
  void validate() const;
};

struct Scene {
  Image image;
  LabelMap labels;
};

// Deterministic per seed. The returned image is already quantized to 8 bits
// so that the stored clear image is exactly the one degradations see.
Scene generate_scene(std::uint64_t seed, const SceneConfig& config);

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  double sample(Rng& rng) const;
  bool operator==(const Range&) const = default;
};

struct EffectSetOption {
  std::vector<weather::Effect> effects;
  double weight = 1.0;
};

// Sampling distribution over weather recipes.
struct WeatherConfig {
  std::vector<EffectSetOption> effect_sets;
  int variants_per_scene = 1;

  Range rain_density{0.04, 0.10};
  Range rain_opacity{0.55, 0.85};
  Range rain_angle_deg{65.0, 115.0};
  Range rain_length{6.0, 14.0};
  Range rain_brightness{0.72, 0.90};

  Range snow_density{0.05, 0.14};
  Range snow_opacity{0.70, 1.00};
  Range snow_radius{0.8, 1.8};
  Range snow_brightness{0.86, 0.97};

  Range fog_beta{0.8, 2.2};
  Range fog_airlight{0.55, 0.95};
  Range fog_airlight_tint{-0.06, 0.06};  // per-channel offset around the gray level
  double layered_depth_probability = 0.3;
  Range depth_base{0.1, 0.4};
  Range depth_gradient{0.6, 1.6};
  int layered_bands = 3;
  std::optional<weather::DepthSpec> fixed_depth;

  void validate() const;
};

WeatherConfig default_weather_config();

struct Variant {
  Image image;
  weather::WeatherRecipe recipe;
};

struct PairedSample {
  std::string id;
  Image clear;
  LabelMap labels;
  std::vector<Variant> degraded;
};

PairedSample generate_pair(std::uint64_t seed, const SceneConfig& scene_config,
                           const WeatherConfig& weather_config, std::string id = {});

// Reference to one degraded variant within a split.
struct VariantRef {
  std::string sample_id;
  int k = 0;
  auto operator<=>(const VariantRef&) const = default;
};

struct VariantSummary {
  VariantRef ref;
  std::vector<weather::Effect> effects;
};

struct SplitManifest {
  std::vector<std::string> sample_ids;
  std::vector<VariantSummary> variants;
  std::map<std::string, int> effect_set_counts;  // keyed by effect_set_name
};

struct DatasetManifest {
  int format_version = 1;
  std::string config_hash;
  std::uint64_t global_seed = 0;
  config::Json config;  // normalized generation config echo
  std::vector<std::string> class_names;
  std::map<std::string, SplitManifest> splits;  // "train", "test"
};

SplitManifest summarize_split(const std::vector<PairedSample>& samples);

struct Strata {
  std::vector<VariantRef> single;
  std::vector<VariantRef> multi;
};

Strata stratify(const SplitManifest& split);

// Generation config as a whole: what `gen-data` consumes.
struct DatasetConfig {
  SceneConfig scene;
  WeatherConfig weather;
  int train_scenes = 200;
  int test_scenes = 50;
  std::uint64_t global_seed = 0;
};

std::uint64_t sample_seed(std::uint64_t global_seed, const std::string& split, int index);
std::string sample_id(int index);

struct Dataset {
  DatasetManifest manifest;
  std::vector<PairedSample> train;
  std::vector<PairedSample> test;

  const std::vector<PairedSample>& split(const std::string& name) const;
};

Dataset generate_dataset(const DatasetConfig& config);

// Config (de)serialization; parse errors name the dotted key.
SceneConfig parse_scene_config(const config::Node& node);
WeatherConfig parse_weather_config(const config::Node& node);
DatasetConfig parse_dataset_config(const config::Node& root);
config::Json to_json(const SceneConfig& c);
config::Json to_json(const WeatherConfig& c);
config::Json to_json(const DatasetConfig& c);

}  // namespace weatherseg::scene
