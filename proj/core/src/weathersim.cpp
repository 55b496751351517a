#include "weatherseg/weathersim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "weatherseg/error.hpp"
#include "weatherseg/rng.hpp"

namespace weatherseg::weather {
namespace {

void check_layer(const Image& clear, const ParticleLayer& layer, const char* who) {
  if (layer.mask.height() != clear.height() || layer.mask.width() != clear.width() ||
      !layer.appearance.same_shape(clear)) {
    throw InvalidInput(std::string(who) + ": particle layer does not match image dimensions");
  }
  for (double m : layer.mask.data())
    if (!(m >= 0.0 && m <= 1.0)) throw InvalidInput(std::string(who) + ": mask value outside [0, 1]");
}

Image composite(const Image& clear, const ParticleLayer& layer) {
  Image out(clear.height(), clear.width());
  for (int y = 0; y < clear.height(); ++y) {
    for (int x = 0; x < clear.width(); ++x) {
      const double m = layer.mask.at(y, x);
      for (int c = 0; c < Image::kChannels; ++c) {
        const double v = clear.at(y, x, c) * (1.0 - m) + layer.appearance.at(y, x, c) * m;
        out.at(y, x, c) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

// Running mean of a mask under max-compositing.
class CoverageMask {
 public:
  CoverageMask(int h, int w) : mask_(h, w), total_(static_cast<double>(h) * w) {}

  bool put(int y, int x, double v) {
    if (y < 0 || x < 0 || y >= mask_.height() || x >= mask_.width()) return false;
    double& cur = mask_.at(y, x);
    if (v <= cur) return false;
    sum_ += v - cur;
    cur = v;
    return true;
  }
  double coverage() const { return sum_ / total_; }
  Raster& raster() { return mask_; }

 private:
  Raster mask_;
  double total_;
  double sum_ = 0.0;
};

void draw_rain(CoverageMask& cov, Image& appearance, double density, const StreakParams& p,
               Rng& rng) {
  const int h = appearance.height();
  const int w = appearance.width();
  const double base_angle = p.angle_deg * std::numbers::pi / 180.0;
  const long max_streaks = 64L * h * w;
  for (long n = 0; n < max_streaks && cov.coverage() < density; ++n) {
    const double angle = base_angle + rng.normal() * (3.0 * std::numbers::pi / 180.0);
    const double len = std::max(1.0, p.length * rng.uniform(0.7, 1.3));
    const double intensity = rng.uniform(0.55, 1.0);
    const double shade = std::clamp(p.brightness + rng.uniform(-0.06, 0.06), 0.0, 1.0);
    const double x0 = rng.uniform(-0.2 * w, 1.2 * w);
    const double y0 = rng.uniform(-0.2 * h, 1.2 * h);
    const double dx = std::cos(angle);
    const double dy = std::sin(angle);
    const int half_width = std::max(0, static_cast<int>(std::lround(p.width)) - 1);
    const int steps = static_cast<int>(std::ceil(len * 2.0));
    for (int s = 0; s <= steps; ++s) {
      const double t = 0.5 * s;
      // Streaks fade toward both ends.
      const double fade = 1.0 - std::abs(2.0 * t / len - 1.0) * 0.5;
      const int cx = static_cast<int>(std::floor(x0 + t * dx));
      const int cy = static_cast<int>(std::floor(y0 + t * dy));
      for (int o = -half_width; o <= half_width; ++o) {
        const int px = cx + static_cast<int>(std::lround(-dy * o));
        const int py = cy + static_cast<int>(std::lround(dx * o));
        if (cov.put(py, px, intensity * fade)) {
          for (int c = 0; c < Image::kChannels; ++c) appearance.at(py, px, c) = shade;
        }
      }
    }
  }
}

void draw_snow(CoverageMask& cov, Image& appearance, double density, const StreakParams& p,
               Rng& rng) {
  const int h = appearance.height();
  const int w = appearance.width();
  const long max_flakes = 64L * h * w;
  for (long n = 0; n < max_flakes && cov.coverage() < density; ++n) {
    const double radius = std::max(0.5, p.flake_radius * rng.uniform(0.6, 1.6));
    const double intensity = rng.uniform(0.6, 1.0);
    const double cx = rng.uniform(0.0, w);
    const double cy = rng.uniform(0.0, h);
    const int reach = static_cast<int>(std::ceil(radius * 1.5));
    for (int y = static_cast<int>(cy) - reach; y <= static_cast<int>(cy) + reach; ++y) {
      for (int x = static_cast<int>(cx) - reach; x <= static_cast<int>(cx) + reach; ++x) {
        const double ddx = x + 0.5 - cx;
        const double ddy = y + 0.5 - cy;
        const double r2 = (ddx * ddx + ddy * ddy) / (radius * radius);
        if (r2 > 2.25) continue;
        cov.put(y, x, intensity * std::exp(-0.5 * r2 * 1.5));
      }
    }
  }
  // S: flake brightness with a slight per-channel offset biased to blue.
  const std::array<double, 3> offset{-0.04, -0.01, 0.05};
  const Raster& m = cov.raster();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double b = p.brightness * (0.9 + 0.1 * m.at(y, x));
      for (int c = 0; c < Image::kChannels; ++c) {
        appearance.at(y, x, c) = std::clamp(b + offset[c], 0.0, 1.0);
      }
    }
  }
}

void check_particle_recipe(const ParticleRecipe& p, const char* name) {
  if (!(p.density > 0.0 && p.density <= 1.0))
    throw InvalidInput(std::string(name) + ": density must be in (0, 1]");
  if (!(p.opacity >= 0.0 && p.opacity <= 1.0))
    throw InvalidInput(std::string(name) + ": opacity must be in [0, 1]");
}

}  // namespace

std::string_view to_string(Effect e) {
  switch (e) {
    case Effect::kRain: return "rain";
    case Effect::kSnow: return "snow";
    case Effect::kFog: return "fog";
  }
  return "?";
}

Effect effect_from_string(std::string_view s) {
  if (s == "rain") return Effect::kRain;
  if (s == "snow") return Effect::kSnow;
  if (s == "fog") return Effect::kFog;
  throw InvalidInput("unknown weather effect '" + std::string(s) + "'");
}

std::string effect_set_name(std::vector<Effect> effects) {
  std::sort(effects.begin(), effects.end());
  std::string out;
  for (Effect e : effects) {
    if (!out.empty()) out += '+';
    out += to_string(e);
  }
  return out;
}

Image apply_rain(const Image& clear, const ParticleLayer& layer) {
  check_layer(clear, layer, "apply_rain");
  return composite(clear, layer);
}

Image apply_snow(const Image& clear, const ParticleLayer& layer) {
  check_layer(clear, layer, "apply_snow");
  return composite(clear, layer);
}

Image apply_fog(const Image& clear, const FogParams& fog) {
  if (!(fog.beta > 0.0) || !std::isfinite(fog.beta))
    throw InvalidInput("apply_fog: beta must be positive and finite");
  if (fog.depth.height() != clear.height() || fog.depth.width() != clear.width())
    throw InvalidInput("apply_fog: depth map does not match image dimensions");
  for (double d : fog.depth.data()) {
    if (!(d >= 0.0) || !std::isfinite(d))
      throw InvalidInput("apply_fog: depth must be nonnegative and finite");
  }
  Image out(clear.height(), clear.width());
  for (int y = 0; y < clear.height(); ++y) {
    for (int x = 0; x < clear.width(); ++x) {
      const double t = std::exp(-fog.beta * fog.depth.at(y, x));
      for (int c = 0; c < Image::kChannels; ++c) {
        const double v = clear.at(y, x, c) * t + fog.airlight[c] * (1.0 - t);
        out.at(y, x, c) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

ParticleLayer gen_particle_layer(ParticleKind kind, int height, int width, double density,
                                 const StreakParams& streak, std::uint64_t seed) {
  if (!(density > 0.0 && density <= 1.0))
    throw InvalidInput("gen_particle_layer: density must be in (0, 1]");
  if (height <= 0 || width <= 0) throw InvalidInput("gen_particle_layer: empty raster");
  Rng rng(seed);
  CoverageMask cov(height, width);
  Image appearance(height, width, std::clamp(streak.brightness, 0.0, 1.0));
  if (kind == ParticleKind::kRain) {
    draw_rain(cov, appearance, density, streak, rng);
  } else {
    draw_snow(cov, appearance, density, streak, rng);
  }
  return ParticleLayer{std::move(cov.raster()), std::move(appearance)};
}

std::string_view to_string(DepthKind k) {
  return k == DepthKind::kPlanar ? "planar" : "layered";
}

DepthKind depth_kind_from_string(std::string_view s) {
  if (s == "planar") return DepthKind::kPlanar;
  if (s == "layered") return DepthKind::kLayered;
  throw InvalidInput("unknown depth kind '" + std::string(s) + "'");
}

Raster gen_depth_map(const DepthSpec& spec, int height, int width, std::uint64_t seed) {
  if (height <= 0 || width <= 0) throw InvalidInput("gen_depth_map: empty raster");
  Raster depth(height, width);
  if (spec.kind == DepthKind::kPlanar) {
    if (spec.base < 0.0 || spec.base + spec.gradient < 0.0)
      throw InvalidInput("gen_depth_map: planar depth would be negative");
    for (int y = 0; y < height; ++y) {
      const double frac = height > 1 ? 1.0 - static_cast<double>(y) / (height - 1) : 0.0;
      const double d = spec.base + spec.gradient * frac;
      for (int x = 0; x < width; ++x) depth.at(y, x) = d;
    }
    return depth;
  }
  const int bands = static_cast<int>(spec.layers.size());
  if (bands == 0) throw InvalidInput("gen_depth_map: layered depth needs at least one layer");
  if (bands > height) throw InvalidInput("gen_depth_map: more layers than rows");
  for (double v : spec.layers) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw InvalidInput("gen_depth_map: layer depth must be nonnegative");
  }
  // Choose bands-1 distinct cut rows in [1, height-1].
  Rng rng(seed);
  std::set<int> cuts;
  while (static_cast<int>(cuts.size()) < bands - 1) cuts.insert(rng.uniform_int(1, height - 1));
  std::vector<int> starts{0};
  starts.insert(starts.end(), cuts.begin(), cuts.end());
  starts.push_back(height);
  for (int b = 0; b < bands; ++b) {
    for (int y = starts[b]; y < starts[b + 1]; ++y) {
      for (int x = 0; x < width; ++x) depth.at(y, x) = spec.layers[b];
    }
  }
  return depth;
}

bool WeatherRecipe::has(Effect e) const {
  return std::find(effects.begin(), effects.end(), e) != effects.end();
}

void WeatherRecipe::validate() const {
  if (effects.empty()) throw InvalidInput("weather recipe: effect list is empty");
  std::set<Effect> seen;
  for (Effect e : effects) {
    if (!seen.insert(e).second)
      throw InvalidInput("weather recipe: effect '" + std::string(to_string(e)) + "' repeated");
  }
  if (has(Effect::kRain)) {
    if (!rain) throw InvalidInput("weather recipe: rain listed without rain parameters");
    check_particle_recipe(*rain, "rain");
  }
  if (has(Effect::kSnow)) {
    if (!snow) throw InvalidInput("weather recipe: snow listed without snow parameters");
    check_particle_recipe(*snow, "snow");
  }
  if (has(Effect::kFog)) {
    if (!fog) throw InvalidInput("weather recipe: fog listed without fog parameters");
    if (!(fog->beta > 0.0)) throw InvalidInput("weather recipe: fog beta must be positive");
    for (double a : fog->airlight) {
      if (!(a >= 0.0 && a <= 1.0)) throw InvalidInput("weather recipe: airlight outside [0, 1]");
    }
  }
}

Rendered compose_weather(const Image& clear, const WeatherRecipe& recipe) {
  recipe.validate();
  WeatherRecipe resolved = recipe;
  Rng seeds(recipe.rng_seed);
  const std::uint64_t fog_seed = seeds.next_u64();
  const std::uint64_t rain_seed = seeds.next_u64();
  const std::uint64_t snow_seed = seeds.next_u64();

  const int h = clear.height();
  const int w = clear.width();
  Image img = clear;
  if (resolved.has(Effect::kFog)) {
    FogRecipe& f = *resolved.fog;
    if (!f.seed) f.seed = fog_seed;
    FogParams params{f.beta, f.airlight, gen_depth_map(f.depth, h, w, *f.seed)};
    img = apply_fog(img, params);
  }
  for (Effect e : resolved.effects) {
    if (e == Effect::kFog) continue;
    ParticleRecipe& p = e == Effect::kRain ? *resolved.rain : *resolved.snow;
    if (!p.seed) p.seed = e == Effect::kRain ? rain_seed : snow_seed;
    ParticleLayer layer =
        gen_particle_layer(e == Effect::kRain ? ParticleKind::kRain : ParticleKind::kSnow, h, w,
                           p.density, p.streak, *p.seed);
    for (double& m : layer.mask.data()) m *= p.opacity;
    img = e == Effect::kRain ? apply_rain(img, layer) : apply_snow(img, layer);
  }
  return Rendered{std::move(img), std::move(resolved)};
}

}  // namespace weatherseg::weather
