#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "weatherseg/image.hpp"

// Weather image formation: particle compositing (rain, snow) and
// homogeneous-medium fog scattering over a depth map.
namespace weatherseg::weather {

enum class Effect { kRain, kSnow, kFog };

std::string_view to_string(Effect e);
Effect effect_from_string(std::string_view s);

// Canonical "+"-joined name of an effect set, e.g. "rain+fog". Order follows
// the Effect enum, not the input order.
std::string effect_set_name(std::vector<Effect> effects);

// M (mask) and the appearance map composited where M > 0: the streak map R
// for rain, the chromatic aberration map S for snow.
struct ParticleLayer {
  Raster mask;
  Image appearance;
};

struct FogParams {
  double beta = 0.0;                        // attenuation per unit depth
  std::array<double, 3> airlight{1, 1, 1};  // radiance at infinite depth
  Raster depth;                             // scene distance per pixel
};

// out = J (1 - M) + R M, per pixel and channel.
Image apply_rain(const Image& clear, const ParticleLayer& layer);
// out = J (1 - M) + S M.
Image apply_snow(const Image& clear, const ParticleLayer& layer);
// out = J e^{-beta d} + L (1 - e^{-beta d}).
Image apply_fog(const Image& clear, const FogParams& fog);

enum class ParticleKind { kRain, kSnow };

struct StreakParams {
  double angle_deg = 80.0;    // streak direction, degrees from the +x axis
  double length = 9.0;        // mean streak length in pixels
  double width = 1.0;         // streak thickness in pixels
  double flake_radius = 1.3;  // mean snow flake radius in pixels
  double brightness = 0.85;   // base appearance brightness
};

// Procedural particle mask whose mean tracks `density` (in (0, 1]).
ParticleLayer gen_particle_layer(ParticleKind kind, int height, int width, double density,
                                 const StreakParams& streak, std::uint64_t seed);

enum class DepthKind { kPlanar, kLayered };

std::string_view to_string(DepthKind k);
DepthKind depth_kind_from_string(std::string_view s);

// planar:  d(y) = base + gradient * (1 - y / (H - 1)); the top row is farthest.
// layered: horizontal bands, top to bottom, taking `layers` values in order;
//          band boundaries are drawn from the seed.
struct DepthSpec {
  DepthKind kind = DepthKind::kPlanar;
  double base = 0.0;
  double gradient = 0.0;
  std::vector<double> layers;

  bool operator==(const DepthSpec&) const = default;
};

Raster gen_depth_map(const DepthSpec& spec, int height, int width, std::uint64_t seed);

struct ParticleRecipe {
  double density = 0.1;
  double opacity = 1.0;  // scales the generated mask; 0 gives an empty layer
  StreakParams streak;
  std::optional<std::uint64_t> seed;
};

struct FogRecipe {
  double beta = 1.0;
  std::array<double, 3> airlight{1, 1, 1};
  DepthSpec depth;
  std::optional<std::uint64_t> seed;
};

// Everything needed to re-render a degraded image from its clear image.
// Missing per-effect seeds are derived from `rng_seed` in the fixed order
// fog, rain, snow (three draws are always consumed).
struct WeatherRecipe {
  std::vector<Effect> effects;
  std::optional<ParticleRecipe> rain;
  std::optional<ParticleRecipe> snow;
  std::optional<FogRecipe> fog;
  std::uint64_t rng_seed = 0;

  void validate() const;
  bool has(Effect e) const;
  bool is_multi_effect() const { return effects.size() >= 2; }
};

struct Rendered {
  Image image;
  WeatherRecipe recipe;  // with every seed resolved
};

// Fog first, then particle layers in recipe order. Every stage clamps to
// [0, 1].
Rendered compose_weather(const Image& clear, const WeatherRecipe& recipe);

}  // namespace weatherseg::weather
