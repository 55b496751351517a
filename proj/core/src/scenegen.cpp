#include "weatherseg/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "weatherseg/error.hpp"

namespace weatherseg::scene {
namespace {

using weather::Effect;

// Smooth value noise in [-1, 1] on a lattice with the given spacing.
class ValueNoise {
 public:
  ValueNoise(int height, int width, double spacing, Rng& rng)
      : spacing_(std::max(1.0, spacing)),
        gw_(static_cast<int>(std::ceil(width / spacing_)) + 2),
        gh_(static_cast<int>(std::ceil(height / spacing_)) + 2),
        lattice_(static_cast<std::size_t>(gw_) * gh_) {
    for (double& v : lattice_) v = rng.uniform(-1.0, 1.0);
  }

  double at(int y, int x) const {
    const double fy = (y + 0.5) / spacing_;
    const double fx = (x + 0.5) / spacing_;
    const int iy = static_cast<int>(fy);
    const int ix = static_cast<int>(fx);
    const double ty = smooth(fy - iy);
    const double tx = smooth(fx - ix);
    const double a = node(iy, ix) * (1 - tx) + node(iy, ix + 1) * tx;
    const double b = node(iy + 1, ix) * (1 - tx) + node(iy + 1, ix + 1) * tx;
    return a * (1 - ty) + b * ty;
  }

 private:
  static double smooth(double t) { return t * t * (3.0 - 2.0 * t); }
  double node(int y, int x) const { return lattice_[static_cast<std::size_t>(y) * gw_ + x]; }

  double spacing_;
  int gw_;
  int gh_;
  std::vector<double> lattice_;
};

class Painter {
 public:
  Painter(const SceneConfig& cfg, Rng& rng)
      : cfg_(cfg), image_(cfg.height, cfg.width), labels_(cfg.height, cfg.width) {
    for (const ClassStyle& s : cfg.classes) {
      std::array<double, 3> base{};
      for (int c = 0; c < 3; ++c) {
        base[c] = std::clamp(s.color[c] + rng.uniform(-s.color_jitter, s.color_jitter), 0.0, 1.0);
      }
      bases_.push_back(base);
      noise_.emplace_back(cfg.height, cfg.width, s.texture_scale, rng);
    }
  }

  void paint(int y, int x, int cls, double brightness = 0.0) {
    if (y < 0 || x < 0 || y >= cfg_.height || x >= cfg_.width) return;
    const ClassStyle& s = cfg_.classes[cls];
    double tex = s.texture_amp * noise_[cls].at(y, x);
    if (s.shape == ShapeKind::kStructure && (y % 4 == 0 || x % 5 == 0)) tex -= 0.08;
    for (int c = 0; c < 3; ++c) {
      image_.at(y, x, c) = std::clamp(bases_[cls][c] + tex + brightness, 0.0, 1.0);
    }
    labels_.at(y, x) = static_cast<std::uint8_t>(cls);
  }

  void ellipse(double cy, double cx, double ry, double rx, int cls) {
    for (int y = static_cast<int>(cy - ry); y <= static_cast<int>(cy + ry) + 1; ++y) {
      for (int x = static_cast<int>(cx - rx); x <= static_cast<int>(cx + rx) + 1; ++x) {
        const double dy = (y + 0.5 - cy) / ry;
        const double dx = (x + 0.5 - cx) / rx;
        if (dy * dy + dx * dx <= 1.0) paint(y, x, cls);
      }
    }
  }

  Scene finish() { return Scene{image_.quantized(), std::move(labels_)}; }

 private:
  const SceneConfig& cfg_;
  Image image_;
  LabelMap labels_;
  std::vector<std::array<double, 3>> bases_;
  std::vector<ValueNoise> noise_;
};

int first_of(const SceneConfig& cfg, ShapeKind kind) {
  for (int i = 0; i < cfg.num_classes(); ++i) {
    if (cfg.classes[i].shape == kind) return i;
  }
  return -1;
}

Range parse_range(const config::Node& n, std::string_view key, Range fallback) {
  if (!n.has(key)) return fallback;
  const auto v = n.numbers(key);
  if (v.size() != 2) throw ConfigError(n.key_path(key), "expected [lo, hi]");
  if (v[0] > v[1]) throw ConfigError(n.key_path(key), "lo exceeds hi");
  return Range{v[0], v[1]};
}

config::Json range_json(const Range& r) { return config::Json::array({r.lo, r.hi}); }

std::vector<Effect> parse_effects(const config::Node& n, const config::Json& j) {
  std::vector<Effect> out;
  auto add = [&](const std::string& name) {
    try {
      out.push_back(weather::effect_from_string(name));
    } catch (const InvalidInput&) {
      throw ConfigError(n.path(), "unknown weather effect '" + name + "'");
    }
  };
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    std::size_t start = 0;
    while (start <= s.size()) {
      const std::size_t plus = s.find('+', start);
      add(s.substr(start, plus == std::string::npos ? std::string::npos : plus - start));
      if (plus == std::string::npos) break;
      start = plus + 1;
    }
  } else if (j.is_array()) {
    for (const auto& e : j) {
      if (!e.is_string()) throw ConfigError(n.path(), "effects must be strings");
      add(e.get<std::string>());
    }
  } else {
    throw ConfigError(n.path(), "expected an effect set");
  }
  return out;
}

}  // namespace

std::string_view to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::kSky: return "sky";
    case ShapeKind::kTerrain: return "terrain";
    case ShapeKind::kStructure: return "structure";
    case ShapeKind::kTree: return "tree";
    case ShapeKind::kStone: return "stone";
    case ShapeKind::kRoad: return "road";
  }
  return "?";
}

ShapeKind shape_kind_from_string(std::string_view s) {
  for (ShapeKind k : {ShapeKind::kSky, ShapeKind::kTerrain, ShapeKind::kStructure,
                      ShapeKind::kTree, ShapeKind::kStone, ShapeKind::kRoad}) {
    if (to_string(k) == s) return k;
  }
  throw InvalidInput("unknown shape kind '" + std::string(s) + "'");
}

std::vector<ClassStyle> default_classes() {
  return {
      {"sky", ShapeKind::kSky, {0.55, 0.70, 0.92}, 0.08, 0.03, 16.0, 1.0, 1, 1},
      {"terrain", ShapeKind::kTerrain, {0.46, 0.40, 0.24}, 0.06, 0.08, 4.0, 1.0, 1, 1},
      {"structure", ShapeKind::kStructure, {0.66, 0.60, 0.58}, 0.06, 0.04, 8.0, 0.75, 1, 3},
      {"tree", ShapeKind::kTree, {0.14, 0.40, 0.14}, 0.05, 0.10, 2.0, 0.75, 1, 3},
      {"stone", ShapeKind::kStone, {0.52, 0.52, 0.56}, 0.05, 0.12, 2.5, 0.65, 1, 3},
      {"road", ShapeKind::kRoad, {0.22, 0.22, 0.25}, 0.04, 0.02, 8.0, 0.6, 1, 1},
  };
}

void SceneConfig::validate() const {
  if (height < 16 || width < 16) throw InvalidInput("scene: image size must be at least 16x16");
  if (classes.size() < 2) throw InvalidInput("scene: at least two classes are required");
  if (classes.size() > 255) throw InvalidInput("scene: at most 255 classes are supported");
  if (first_of(*this, ShapeKind::kSky) < 0 || first_of(*this, ShapeKind::kTerrain) < 0)
    throw InvalidInput("scene: a sky class and a terrain class are required");
  std::set<std::string> names;
  for (const ClassStyle& s : classes) {
    if (!names.insert(s.name).second)
      throw InvalidInput("scene: duplicate class name '" + s.name + "'");
    if (s.min_count < 0 || s.max_count < s.min_count)
      throw InvalidInput("scene: class '" + s.name + "' has an invalid count range");
    if (s.presence < 0.0 || s.presence > 1.0)
      throw InvalidInput("scene: class '" + s.name + "' presence outside [0, 1]");
  }
}

Scene generate_scene(std::uint64_t seed, const SceneConfig& cfg) {
  cfg.validate();
  Rng rng(seed);
  const int h = cfg.height;
  const int w = cfg.width;
  Painter p(cfg, rng);
  const int sky = first_of(cfg, ShapeKind::kSky);
  const int ground = first_of(cfg, ShapeKind::kTerrain);
  const int horizon = static_cast<int>(rng.uniform(0.25, 0.5) * h);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (y < horizon) {
        p.paint(y, x, sky, 0.12 * y / std::max(1, horizon));
      } else {
        p.paint(y, x, ground);
      }
    }
  }

  // Foreground classes in a fixed drawing order; each draws from the rng in
  // the same order whether or not it ends up present.
  const std::array<ShapeKind, 6> order{ShapeKind::kSky,   ShapeKind::kTerrain,
                                       ShapeKind::kRoad,  ShapeKind::kStructure,
                                       ShapeKind::kTree,  ShapeKind::kStone};
  for (ShapeKind kind : order) {
    for (int cls = 0; cls < cfg.num_classes(); ++cls) {
      const ClassStyle& s = cfg.classes[cls];
      if (s.shape != kind || cls == sky || cls == ground) continue;
      const bool present = rng.bernoulli(s.presence);
      const int count = rng.uniform_int(s.min_count, s.max_count);
      if (!present) continue;
      for (int n = 0; n < count; ++n) {
        switch (kind) {
          case ShapeKind::kSky:  // cloud-like blobs above the horizon
            p.ellipse(rng.uniform(0, horizon), rng.uniform(0, w), rng.uniform(2, 0.12 * h + 2),
                      rng.uniform(4, 0.25 * w + 4), cls);
            break;
          case ShapeKind::kTerrain:  // ground patches
            p.ellipse(rng.uniform(horizon, h), rng.uniform(0, w), rng.uniform(3, 0.15 * h + 3),
                      rng.uniform(5, 0.3 * w + 5), cls);
            break;
          case ShapeKind::kRoad: {
            const double bottom_center = rng.uniform(0.3, 0.7) * w;
            const double bottom_half = rng.uniform(0.15, 0.3) * w;
            const double vanish = rng.uniform(0.4, 0.6) * w;
            for (int y = horizon; y < h; ++y) {
              const double t = static_cast<double>(y - horizon) / std::max(1, h - 1 - horizon);
              const double center = vanish + t * (bottom_center - vanish);
              const double half = 1.0 + t * (bottom_half - 1.0);
              for (int x = static_cast<int>(center - half); x <= static_cast<int>(center + half);
                   ++x) {
                p.paint(y, x, cls);
              }
            }
            break;
          }
          case ShapeKind::kStructure: {
            const int bw = static_cast<int>(rng.uniform(0.1, 0.3) * w);
            const int bh = static_cast<int>(rng.uniform(0.15, 0.4) * h);
            const int x0 = static_cast<int>(rng.uniform(0, w - bw));
            const int bottom = horizon + static_cast<int>(rng.uniform(0, 0.12) * h);
            for (int y = bottom - bh; y < bottom; ++y) {
              for (int x = x0; x < x0 + bw; ++x) p.paint(y, x, cls);
            }
            break;
          }
          case ShapeKind::kTree: {
            const double cy = rng.uniform(horizon - 0.12 * h, horizon + 0.3 * h);
            const double cx = rng.uniform(0, w);
            const int blobs = rng.uniform_int(3, 6);
            for (int b = 0; b < blobs; ++b) {
              const double r = rng.uniform(2.5, 0.1 * w + 2.5);
              p.ellipse(cy + rng.uniform(-5, 5), cx + rng.uniform(-6, 6), r, r, cls);
            }
            break;
          }
          case ShapeKind::kStone:
            p.ellipse(rng.uniform(0.55 * h, h), rng.uniform(0, w), rng.uniform(2, 0.07 * h + 2),
                      rng.uniform(3, 0.1 * w + 3), cls);
            break;
        }
      }
    }
  }
  return p.finish();
}

double Range::sample(Rng& rng) const { return lo == hi ? lo : rng.uniform(lo, hi); }

void WeatherConfig::validate() const {
  if (effect_sets.empty()) throw InvalidInput("weather: effect-set list is empty");
  double total = 0.0;
  for (const EffectSetOption& o : effect_sets) {
    if (o.effects.empty()) throw InvalidInput("weather: empty effect set");
    if (!(o.weight >= 0.0)) throw InvalidInput("weather: negative effect-set weight");
    std::set<Effect> seen(o.effects.begin(), o.effects.end());
    if (seen.size() != o.effects.size()) throw InvalidInput("weather: repeated effect in a set");
    total += o.weight;
  }
  if (!(total > 0.0)) throw InvalidInput("weather: effect-set weights sum to zero");
  if (variants_per_scene < 1) throw InvalidInput("weather: variants_per_scene must be >= 1");
  if (rain_density.lo <= 0.0 || rain_density.hi > 1.0 || snow_density.lo <= 0.0 ||
      snow_density.hi > 1.0)
    throw InvalidInput("weather: particle density must lie in (0, 1]");
  if (fog_beta.lo <= 0.0) throw InvalidInput("weather: fog beta must be positive");
  if (layered_bands < 1) throw InvalidInput("weather: layered_bands must be >= 1");
}

WeatherConfig default_weather_config() {
  WeatherConfig c;
  c.effect_sets = {{{Effect::kRain}, 1.0},
                   {{Effect::kSnow}, 1.0},
                   {{Effect::kFog}, 1.0},
                   {{Effect::kRain, Effect::kFog}, 1.0},
                   {{Effect::kSnow, Effect::kFog}, 1.0}};
  return c;
}

namespace {

weather::WeatherRecipe sample_recipe(Rng& rng, const WeatherConfig& wc, int height) {
  double total = 0.0;
  for (const auto& o : wc.effect_sets) total += o.weight;
  double pick = rng.uniform() * total;
  const EffectSetOption* chosen = &wc.effect_sets.back();
  for (const auto& o : wc.effect_sets) {
    if (pick < o.weight) {
      chosen = &o;
      break;
    }
    pick -= o.weight;
  }
  weather::WeatherRecipe r;
  r.effects = chosen->effects;
  // Parameters for every effect are always drawn so that the stream does not
  // depend on which set was chosen.
  weather::ParticleRecipe rain;
  rain.density = wc.rain_density.sample(rng);
  rain.opacity = wc.rain_opacity.sample(rng);
  rain.streak.angle_deg = wc.rain_angle_deg.sample(rng);
  rain.streak.length = wc.rain_length.sample(rng);
  rain.streak.brightness = wc.rain_brightness.sample(rng);

  weather::ParticleRecipe snow;
  snow.density = wc.snow_density.sample(rng);
  snow.opacity = wc.snow_opacity.sample(rng);
  snow.streak.flake_radius = wc.snow_radius.sample(rng);
  snow.streak.brightness = wc.snow_brightness.sample(rng);

  weather::FogRecipe fog;
  fog.beta = wc.fog_beta.sample(rng);
  const double gray = wc.fog_airlight.sample(rng);
  for (double& a : fog.airlight) a = std::clamp(gray + wc.fog_airlight_tint.sample(rng), 0.0, 1.0);
  const bool layered = rng.bernoulli(wc.layered_depth_probability);
  const double base = wc.depth_base.sample(rng);
  const double gradient = wc.depth_gradient.sample(rng);
  if (wc.fixed_depth) {
    fog.depth = *wc.fixed_depth;
  } else if (layered) {
    fog.depth.kind = weather::DepthKind::kLayered;
    const int bands = std::min(wc.layered_bands, height);
    for (int b = 0; b < bands; ++b) {
      const double frac = bands > 1 ? 1.0 - static_cast<double>(b) / (bands - 1) : 0.5;
      fog.depth.layers.push_back(base + gradient * frac);
    }
  } else {
    fog.depth.kind = weather::DepthKind::kPlanar;
    fog.depth.base = base;
    fog.depth.gradient = gradient;
  }
  if (r.has(Effect::kRain)) r.rain = rain;
  if (r.has(Effect::kSnow)) r.snow = snow;
  if (r.has(Effect::kFog)) r.fog = fog;
  r.rng_seed = rng.next_u64();
  return r;
}

}  // namespace

PairedSample generate_pair(std::uint64_t seed, const SceneConfig& scene_config,
                           const WeatherConfig& weather_config, std::string id) {
  weather_config.validate();
  Scene scene = generate_scene(derive_seed(seed, "scene"), scene_config);
  PairedSample out{std::move(id), std::move(scene.image), std::move(scene.labels), {}};
  for (int k = 0; k < weather_config.variants_per_scene; ++k) {
    Rng rng(derive_seed(derive_seed(seed, "weather"), static_cast<std::uint64_t>(k)));
    const weather::WeatherRecipe recipe = sample_recipe(rng, weather_config, scene_config.height);
    weather::Rendered rendered = weather::compose_weather(out.clear, recipe);
    out.degraded.push_back(Variant{rendered.image.quantized(), std::move(rendered.recipe)});
  }
  return out;
}

SplitManifest summarize_split(const std::vector<PairedSample>& samples) {
  SplitManifest m;
  for (const PairedSample& s : samples) {
    m.sample_ids.push_back(s.id);
    for (int k = 0; k < static_cast<int>(s.degraded.size()); ++k) {
      const auto& effects = s.degraded[k].recipe.effects;
      m.variants.push_back(VariantSummary{{s.id, k}, effects});
      ++m.effect_set_counts[weather::effect_set_name(effects)];
    }
  }
  return m;
}

Strata stratify(const SplitManifest& split) {
  Strata out;
  for (const VariantSummary& v : split.variants) {
    (v.effects.size() >= 2 ? out.multi : out.single).push_back(v.ref);
  }
  return out;
}

std::uint64_t sample_seed(std::uint64_t global_seed, const std::string& split, int index) {
  return derive_seed(derive_seed(global_seed, split), static_cast<std::uint64_t>(index));
}

std::string sample_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05d", index);
  return buf;
}

const std::vector<PairedSample>& Dataset::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "test") return test;
  throw InvalidInput("unknown split '" + name + "'");
}

Dataset generate_dataset(const DatasetConfig& config) {
  config.scene.validate();
  config.weather.validate();
  if (config.train_scenes < 0 || config.test_scenes < 0)
    throw InvalidInput("dataset: scene counts must be nonnegative");
  Dataset ds;
  for (const char* split : {"train", "test"}) {
    auto& dst = std::string(split) == "train" ? ds.train : ds.test;
    const int count = std::string(split) == "train" ? config.train_scenes : config.test_scenes;
    dst.reserve(count);
    for (int i = 0; i < count; ++i) {
      dst.push_back(generate_pair(sample_seed(config.global_seed, split, i), config.scene,
                                  config.weather, sample_id(i)));
    }
    ds.manifest.splits[split] = summarize_split(dst);
  }
  ds.manifest.config = to_json(config);
  ds.manifest.config_hash = config::hash_hex(ds.manifest.config);
  ds.manifest.global_seed = config.global_seed;
  for (const ClassStyle& c : config.scene.classes) ds.manifest.class_names.push_back(c.name);
  return ds;
}

SceneConfig parse_scene_config(const config::Node& n) {
  n.allow_only({"height", "width", "classes"});
  SceneConfig c;
  c.height = static_cast<int>(n.integer("height", c.height));
  c.width = static_cast<int>(n.integer("width", c.width));
  if (n.has("classes")) {
    c.classes.clear();
    const auto defaults = default_classes();
    for (const config::Node& cn : n.list("classes")) {
      cn.allow_only({"name", "shape", "color", "color_jitter", "texture_amp", "texture_scale",
                     "presence", "min_count", "max_count"});
      ClassStyle s;
      s.name = cn.string("name");
      const std::string shape = cn.string("shape", s.name);
      try {
        s.shape = shape_kind_from_string(shape);
      } catch (const InvalidInput& e) {
        throw ConfigError(cn.key_path("shape"), e.what());
      }
      // Unspecified style fields fall back to the default class of that shape.
      for (const ClassStyle& d : defaults) {
        if (d.shape == s.shape) {
          const std::string name = s.name;
          s = d;
          s.name = name;
          break;
        }
      }
      if (cn.has("color")) {
        const auto col = cn.numbers("color");
        if (col.size() != 3) throw ConfigError(cn.key_path("color"), "expected [r, g, b]");
        s.color = {col[0], col[1], col[2]};
      }
      s.color_jitter = cn.number("color_jitter", s.color_jitter);
      s.texture_amp = cn.number("texture_amp", s.texture_amp);
      s.texture_scale = cn.number("texture_scale", s.texture_scale);
      s.presence = cn.number("presence", s.presence);
      s.min_count = static_cast<int>(cn.integer("min_count", s.min_count));
      s.max_count = static_cast<int>(cn.integer("max_count", s.max_count));
      c.classes.push_back(s);
    }
  }
  try {
    c.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(n.path(), e.what());
  }
  return c;
}

WeatherConfig parse_weather_config(const config::Node& n) {
  n.allow_only({"effect_sets", "variants_per_scene", "rain_density", "rain_opacity",
                "rain_angle_deg", "rain_length", "rain_brightness", "snow_density",
                "snow_opacity", "snow_radius", "snow_brightness", "fog_beta", "fog_airlight",
                "fog_airlight_tint", "layered_depth_probability", "depth_base", "depth_gradient",
                "layered_bands", "fixed_depth"});
  WeatherConfig c = default_weather_config();
  if (n.has("effect_sets")) {
    c.effect_sets.clear();
    for (const config::Node& en : n.list("effect_sets")) {
      EffectSetOption o;
      if (en.raw().is_object()) {
        en.allow_only({"effects", "weight"});
        const auto it = en.raw().find("effects");
        if (it == en.raw().end() || it->is_null())
          throw ConfigError(en.key_path("effects"), "required key is missing");
        const config::Json* effects = &*it;
        o.effects = parse_effects(config::Node(effects, en.key_path("effects")), *effects);
        o.weight = en.number("weight", 1.0);
      } else {
        o.effects = parse_effects(en, en.raw());
      }
      c.effect_sets.push_back(o);
    }
  }
  c.variants_per_scene = static_cast<int>(n.integer("variants_per_scene", c.variants_per_scene));
  c.rain_density = parse_range(n, "rain_density", c.rain_density);
  c.rain_opacity = parse_range(n, "rain_opacity", c.rain_opacity);
  c.rain_angle_deg = parse_range(n, "rain_angle_deg", c.rain_angle_deg);
  c.rain_length = parse_range(n, "rain_length", c.rain_length);
  c.rain_brightness = parse_range(n, "rain_brightness", c.rain_brightness);
  c.snow_density = parse_range(n, "snow_density", c.snow_density);
  c.snow_opacity = parse_range(n, "snow_opacity", c.snow_opacity);
  c.snow_radius = parse_range(n, "snow_radius", c.snow_radius);
  c.snow_brightness = parse_range(n, "snow_brightness", c.snow_brightness);
  c.fog_beta = parse_range(n, "fog_beta", c.fog_beta);
  c.fog_airlight = parse_range(n, "fog_airlight", c.fog_airlight);
  c.fog_airlight_tint = parse_range(n, "fog_airlight_tint", c.fog_airlight_tint);
  c.layered_depth_probability = n.number("layered_depth_probability", c.layered_depth_probability);
  c.depth_base = parse_range(n, "depth_base", c.depth_base);
  c.depth_gradient = parse_range(n, "depth_gradient", c.depth_gradient);
  c.layered_bands = static_cast<int>(n.integer("layered_bands", c.layered_bands));
  if (n.has("fixed_depth")) {
    const config::Node d = n.child("fixed_depth");
    d.allow_only({"kind", "base", "gradient", "layers"});
    weather::DepthSpec spec;
    try {
      spec.kind = weather::depth_kind_from_string(d.string("kind", "planar"));
    } catch (const InvalidInput& e) {
      throw ConfigError(d.key_path("kind"), e.what());
    }
    spec.base = d.number("base", 0.0);
    spec.gradient = d.number("gradient", 0.0);
    spec.layers = d.numbers("layers", std::vector<double>{});
    c.fixed_depth = spec;
  }
  try {
    c.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(n.path(), e.what());
  }
  return c;
}

DatasetConfig parse_dataset_config(const config::Node& root) {
  DatasetConfig c;
  c.scene = parse_scene_config(root.child("scene"));
  c.weather = parse_weather_config(root.child("weather"));
  const config::Node d = root.child("dataset");
  d.allow_only({"train_scenes", "test_scenes"});
  c.train_scenes = static_cast<int>(d.integer("train_scenes", c.train_scenes));
  c.test_scenes = static_cast<int>(d.integer("test_scenes", c.test_scenes));
  if (c.train_scenes < 0) throw ConfigError(d.key_path("train_scenes"), "must be >= 0");
  if (c.test_scenes < 0) throw ConfigError(d.key_path("test_scenes"), "must be >= 0");
  const long long seed = root.integer("seed", 0);
  if (seed < 0) throw ConfigError(root.key_path("seed"), "must be >= 0");
  c.global_seed = static_cast<std::uint64_t>(seed);
  return c;
}

config::Json to_json(const SceneConfig& c) {
  config::Json classes = config::Json::array();
  for (const ClassStyle& s : c.classes) {
    classes.push_back({{"name", s.name},
                       {"shape", to_string(s.shape)},
                       {"color", s.color},
                       {"color_jitter", s.color_jitter},
                       {"texture_amp", s.texture_amp},
                       {"texture_scale", s.texture_scale},
                       {"presence", s.presence},
                       {"min_count", s.min_count},
                       {"max_count", s.max_count}});
  }
  return {{"height", c.height}, {"width", c.width}, {"classes", classes}};
}

config::Json to_json(const WeatherConfig& c) {
  config::Json sets = config::Json::array();
  for (const EffectSetOption& o : c.effect_sets) {
    config::Json effects = config::Json::array();
    for (Effect e : o.effects) effects.push_back(weather::to_string(e));
    sets.push_back({{"effects", effects}, {"weight", o.weight}});
  }
  config::Json j = {{"effect_sets", sets},
                    {"variants_per_scene", c.variants_per_scene},
                    {"rain_density", range_json(c.rain_density)},
                    {"rain_opacity", range_json(c.rain_opacity)},
                    {"rain_angle_deg", range_json(c.rain_angle_deg)},
                    {"rain_length", range_json(c.rain_length)},
                    {"rain_brightness", range_json(c.rain_brightness)},
                    {"snow_density", range_json(c.snow_density)},
                    {"snow_opacity", range_json(c.snow_opacity)},
                    {"snow_radius", range_json(c.snow_radius)},
                    {"snow_brightness", range_json(c.snow_brightness)},
                    {"fog_beta", range_json(c.fog_beta)},
                    {"fog_airlight", range_json(c.fog_airlight)},
                    {"fog_airlight_tint", range_json(c.fog_airlight_tint)},
                    {"layered_depth_probability", c.layered_depth_probability},
                    {"depth_base", range_json(c.depth_base)},
                    {"depth_gradient", range_json(c.depth_gradient)},
                    {"layered_bands", c.layered_bands}};
  if (c.fixed_depth) {
    j["fixed_depth"] = {{"kind", weather::to_string(c.fixed_depth->kind)},
                        {"base", c.fixed_depth->base},
                        {"gradient", c.fixed_depth->gradient},
                        {"layers", c.fixed_depth->layers}};
  }
  return j;
}

config::Json to_json(const DatasetConfig& c) {
  return {{"scene", to_json(c.scene)},
          {"weather", to_json(c.weather)},
          {"dataset", {{"train_scenes", c.train_scenes}, {"test_scenes", c.test_scenes}}},
          {"seed", c.global_seed}};
}

}  // namespace weatherseg::scene
