#include "weatherseg/dataset_io.hpp"

#include <fstream>
#include <sstream>

#include "weatherseg/error.hpp"
#include "weatherseg/png_io.hpp"

namespace weatherseg::scene {
namespace fs = std::filesystem;
using config::Json;
using weather::Effect;

namespace {

Json particle_json(const weather::ParticleRecipe& p) {
  Json j = {{"density", p.density},
            {"opacity", p.opacity},
            {"angle_deg", p.streak.angle_deg},
            {"length", p.streak.length},
            {"width", p.streak.width},
            {"flake_radius", p.streak.flake_radius},
            {"brightness", p.streak.brightness}};
  if (p.seed) j["seed"] = *p.seed;
  return j;
}

weather::ParticleRecipe particle_from(const Json& j) {
  weather::ParticleRecipe p;
  p.density = j.at("density").get<double>();
  p.opacity = j.at("opacity").get<double>();
  p.streak.angle_deg = j.at("angle_deg").get<double>();
  p.streak.length = j.at("length").get<double>();
  p.streak.width = j.at("width").get<double>();
  p.streak.flake_radius = j.at("flake_radius").get<double>();
  p.streak.brightness = j.at("brightness").get<double>();
  if (j.contains("seed")) p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("", "cannot write " + path.string());
  out << text;
}

Json read_json(const fs::path& path, const std::string& sample) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(sample, "missing file " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw DataError(sample, "malformed JSON in " + path.string() + ": " + e.what());
  }
}

std::string scene_dir_name(const std::string& id) { return "scene_" + id; }

void load_split(const fs::path& root, const std::string& split, const DatasetManifest& manifest,
                const LoadOptions& options, std::vector<PairedSample>& out) {
  const SplitManifest& sm = manifest.splits.at(split);
  const int num_classes = static_cast<int>(manifest.class_names.size());
  std::map<std::string, int> variant_counts;
  for (const VariantSummary& v : sm.variants) ++variant_counts[v.ref.sample_id];
  out.reserve(sm.sample_ids.size());
  for (const std::string& id : sm.sample_ids) {
    const std::string sample = split + "/" + id;
    const fs::path dir = root / split / scene_dir_name(id);
    try {
      const Json meta = read_json(dir / "meta.json", sample);
      if (meta.value("config_hash", std::string()) != manifest.config_hash)
        throw DataError(sample, "config hash does not match the manifest");
      PairedSample s;
      s.id = id;
      s.clear = png::read_rgb(dir / "clear.png");
      s.labels = png::read_gray(dir / "labels.png");
      if (s.labels.height() != s.clear.height() || s.labels.width() != s.clear.width())
        throw DataError(sample, "label map size differs from the clear image");
      if (s.labels.max_id() >= num_classes)
        throw DataError(sample, "label map contains class id " +
                                    std::to_string(s.labels.max_id()) + " >= " +
                                    std::to_string(num_classes));
      const Json& recipes = meta.at("variants");
      if (static_cast<int>(recipes.size()) != variant_counts[id])
        throw DataError(sample, "variant count differs from the manifest");
      for (std::size_t k = 0; k < recipes.size(); ++k) {
        Variant v;
        v.recipe = recipe_from_json(recipes[k]);
        v.image = png::read_rgb(dir / ("degraded_" + std::to_string(k) + ".png"));
        if (!v.image.same_shape(s.clear))
          throw DataError(sample, "degraded image " + std::to_string(k) + " has a different size");
        if (options.verify_render) {
          const Image again = weather::compose_weather(s.clear, v.recipe).image.quantized();
          if (again.to_bytes() != v.image.to_bytes())
            throw DataError(sample, "degraded image " + std::to_string(k) +
                                        " does not re-render from its recipe");
        }
        s.degraded.push_back(std::move(v));
      }
      out.push_back(std::move(s));
    } catch (const DataError& e) {
      if (!e.sample().empty()) throw;
      throw DataError(sample, e.what());
    } catch (const Json::exception& e) {
      throw DataError(sample, std::string("malformed meta.json: ") + e.what());
    } catch (const InvalidInput& e) {
      throw DataError(sample, e.what());
    }
  }
}

}  // namespace

Json recipe_to_json(const weather::WeatherRecipe& r) {
  Json effects = Json::array();
  for (Effect e : r.effects) effects.push_back(weather::to_string(e));
  Json j = {{"effects", effects}, {"rng_seed", r.rng_seed}};
  if (r.rain) j["rain"] = particle_json(*r.rain);
  if (r.snow) j["snow"] = particle_json(*r.snow);
  if (r.fog) {
    const auto& f = *r.fog;
    Json fog = {{"beta", f.beta},
                {"airlight", f.airlight},
                {"depth",
                 {{"kind", weather::to_string(f.depth.kind)},
                  {"base", f.depth.base},
                  {"gradient", f.depth.gradient},
                  {"layers", f.depth.layers}}}};
    if (f.seed) fog["seed"] = *f.seed;
    j["fog"] = fog;
  }
  return j;
}

weather::WeatherRecipe recipe_from_json(const Json& j) {
  weather::WeatherRecipe r;
  for (const auto& e : j.at("effects")) r.effects.push_back(weather::effect_from_string(e.get<std::string>()));
  r.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  if (j.contains("rain")) r.rain = particle_from(j.at("rain"));
  if (j.contains("snow")) r.snow = particle_from(j.at("snow"));
  if (j.contains("fog")) {
    const Json& f = j.at("fog");
    weather::FogRecipe fog;
    fog.beta = f.at("beta").get<double>();
    fog.airlight = f.at("airlight").get<std::array<double, 3>>();
    const Json& d = f.at("depth");
    fog.depth.kind = weather::depth_kind_from_string(d.at("kind").get<std::string>());
    fog.depth.base = d.at("base").get<double>();
    fog.depth.gradient = d.at("gradient").get<double>();
    fog.depth.layers = d.at("layers").get<std::vector<double>>();
    if (f.contains("seed")) fog.seed = f.at("seed").get<std::uint64_t>();
    r.fog = fog;
  }
  r.validate();
  return r;
}

Json manifest_to_json(const DatasetManifest& m) {
  Json splits = Json::object();
  for (const auto& [name, sm] : m.splits) {
    Json variants = Json::array();
    for (const VariantSummary& v : sm.variants) {
      Json effects = Json::array();
      for (Effect e : v.effects) effects.push_back(weather::to_string(e));
      variants.push_back({{"sample_id", v.ref.sample_id}, {"k", v.ref.k}, {"effects", effects}});
    }
    splits[name] = {{"sample_ids", sm.sample_ids},
                    {"variants", variants},
                    {"effect_set_counts", sm.effect_set_counts}};
  }
  return {{"format_version", m.format_version},
          {"config_hash", m.config_hash},
          {"global_seed", m.global_seed},
          {"config", m.config},
          {"class_names", m.class_names},
          {"splits", splits}};
}

DatasetManifest manifest_from_json(const Json& j) {
  DatasetManifest m;
  m.format_version = j.at("format_version").get<int>();
  if (m.format_version != 1)
    throw DataError("", "unsupported manifest format_version " + std::to_string(m.format_version));
  m.config_hash = j.at("config_hash").get<std::string>();
  m.global_seed = j.at("global_seed").get<std::uint64_t>();
  m.config = j.at("config");
  m.class_names = j.at("class_names").get<std::vector<std::string>>();
  for (const auto& [name, sj] : j.at("splits").items()) {
    SplitManifest sm;
    sm.sample_ids = sj.at("sample_ids").get<std::vector<std::string>>();
    for (const auto& vj : sj.at("variants")) {
      VariantSummary v;
      v.ref.sample_id = vj.at("sample_id").get<std::string>();
      v.ref.k = vj.at("k").get<int>();
      for (const auto& e : vj.at("effects"))
        v.effects.push_back(weather::effect_from_string(e.get<std::string>()));
      sm.variants.push_back(std::move(v));
    }
    sm.effect_set_counts = sj.at("effect_set_counts").get<std::map<std::string, int>>();
    m.splits[name] = std::move(sm);
  }
  return m;
}

DatasetManifest write_dataset(const Dataset& dataset, const fs::path& root) {
  DatasetManifest manifest = dataset.manifest;
  fs::create_directories(root);
  for (const char* split_name : {"train", "test"}) {
    const std::string split = split_name;
    const auto& samples = dataset.split(split);
    manifest.splits[split] = summarize_split(samples);
    for (const PairedSample& s : samples) {
      const fs::path dir = root / split / scene_dir_name(s.id);
      fs::create_directories(dir);
      png::write_rgb(dir / "clear.png", s.clear);
      png::write_gray(dir / "labels.png", s.labels);
      Json variants = Json::array();
      for (std::size_t k = 0; k < s.degraded.size(); ++k) {
        png::write_rgb(dir / ("degraded_" + std::to_string(k) + ".png"), s.degraded[k].image);
        variants.push_back(recipe_to_json(s.degraded[k].recipe));
      }
      const Json meta = {{"sample_id", s.id},
                         {"split", split},
                         {"config_hash", manifest.config_hash},
                         {"variants", variants}};
      write_text(dir / "meta.json", meta.dump(2) + "\n");
    }
  }
  write_text(root / "manifest.json", manifest_to_json(manifest).dump(2) + "\n");
  return manifest;
}

DatasetManifest load_manifest(const fs::path& root) {
  const Json j = read_json(root / "manifest.json", "");
  DatasetManifest m;
  try {
    m = manifest_from_json(j);
  } catch (const Json::exception& e) {
    throw DataError("", std::string("malformed manifest.json: ") + e.what());
  } catch (const InvalidInput& e) {
    throw DataError("", std::string("malformed manifest.json: ") + e.what());
  }
  if (config::hash_hex(m.config) != m.config_hash)
    throw DataError("", "manifest config hash does not match its config echo");
  for (const char* split : {"train", "test"}) {
    if (!m.splits.contains(split)) throw DataError("", std::string("manifest lacks split ") + split);
  }
  return m;
}

Dataset load_dataset(const fs::path& root, const LoadOptions& options) {
  Dataset ds;
  ds.manifest = load_manifest(root);
  load_split(root, "train", ds.manifest, options, ds.train);
  load_split(root, "test", ds.manifest, options, ds.test);
  return ds;
}

}  // namespace weatherseg::scene
