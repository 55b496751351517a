#include "weatherseg/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "weatherseg/error.hpp"
#include "weatherseg/rng.hpp"

namespace weatherseg::embed {
namespace {

using Plane = std::vector<double>;

Plane box_blur(const Plane& src, int h, int w, int radius) {
  Plane tmp(src.size()), out(src.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0;
      int n = 0;
      for (int dx = -radius; dx <= radius; ++dx) {
        const int xx = std::clamp(x + dx, 0, w - 1);
        s += src[static_cast<std::size_t>(y) * w + xx];
        ++n;
      }
      tmp[static_cast<std::size_t>(y) * w + x] = s / n;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0;
      int n = 0;
      for (int dy = -radius; dy <= radius; ++dy) {
        const int yy = std::clamp(y + dy, 0, h - 1);
        s += tmp[static_cast<std::size_t>(yy) * w + x];
        ++n;
      }
      out[static_cast<std::size_t>(y) * w + x] = s / n;
    }
  }
  return out;
}

double mean_of(const Plane& p) {
  double s = 0;
  for (double v : p) s += v;
  return p.empty() ? 0.0 : s / static_cast<double>(p.size());
}

double quantile(Plane p, double q) {
  if (p.empty()) return 0.0;
  const auto idx = static_cast<std::size_t>(q * static_cast<double>(p.size() - 1));
  std::nth_element(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(idx), p.end());
  return p[idx];
}

Embedding normalized(Embedding v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw InvalidInput("embedding has zero or non-finite norm");
  return v / n;
}

void check_image(const Image& image) {
  if (image.empty()) throw InvalidInput("embed_image: empty image");
  if (!image.all_finite()) throw InvalidInput("embed_image: non-finite pixel values");
}

}  // namespace

FeatureProbe feature_probe(const Image& img) {
  const int h = img.height();
  const int w = img.width();
  const std::size_t n = img.pixel_count();
  const double inv_n = 1.0 / static_cast<double>(n);
  FeatureProbe f{};

  Plane lum(n), dark(n), bright(n), sat(n);
  std::array<double, 3> mean{}, sq{};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const double r = img.at(y, x, 0), g = img.at(y, x, 1), b = img.at(y, x, 2);
      lum[i] = 0.299 * r + 0.587 * g + 0.114 * b;
      dark[i] = std::min({r, g, b});
      bright[i] = std::max({r, g, b});
      sat[i] = bright[i] > 1e-6 ? (bright[i] - dark[i]) / bright[i] : 0.0;
      for (int c = 0; c < 3; ++c) {
        const double v = img.at(y, x, c);
        mean[c] += v;
        sq[c] += v * v;
      }
    }
  }
  for (int c = 0; c < 3; ++c) {
    mean[c] *= inv_n;
    f[c] = mean[c];
    f[3 + c] = 4.0 * std::sqrt(std::max(0.0, sq[c] * inv_n - mean[c] * mean[c]));
  }
  for (double v : lum) {
    const int bin = std::clamp(static_cast<int>(v * 8.0), 0, 7);
    f[6 + bin] += 2.0 * inv_n;
  }

  // Gradients on luminance.
  auto L = [&](int y, int x) {
    return lum[static_cast<std::size_t>(std::clamp(y, 0, h - 1)) * w + std::clamp(x, 0, w - 1)];
  };
  double gsum = 0, gsq = 0, lap = 0;
  std::array<double, 4> orient{};
  int specks = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = 0.5 * (L(y, x + 1) - L(y, x - 1));
      const double gy = 0.5 * (L(y + 1, x) - L(y - 1, x));
      const double mag = std::sqrt(gx * gx + gy * gy);
      gsum += mag;
      gsq += mag * mag;
      orient[0] += gx * gx;
      orient[1] += 0.5 * (gx + gy) * (gx + gy);
      orient[2] += gy * gy;
      orient[3] += 0.5 * (gx - gy) * (gx - gy);
      const double nb = (L(y - 1, x) + L(y + 1, x) + L(y, x - 1) + L(y, x + 1)) * 0.25;
      lap += std::abs(L(y, x) - nb);
      if (L(y, x) - nb > 0.04) ++specks;
    }
  }
  const double gmean = gsum * inv_n;
  f[14] = 10.0 * gmean;
  f[15] = 10.0 * std::sqrt(std::max(0.0, gsq * inv_n - gmean * gmean));
  const double osum = orient[0] + orient[1] + orient[2] + orient[3] + 1e-12;
  for (int k = 0; k < 4; ++k) f[16 + k] = 4.0 * orient[k] / osum - 1.0;

  // Band-pass energies from a box-blur pyramid.
  const Plane b1 = box_blur(lum, h, w, 1);
  const Plane b2 = box_blur(lum, h, w, 2);
  const Plane b4 = box_blur(lum, h, w, 4);
  const Plane b8 = box_blur(lum, h, w, 8);
  const std::array<const Plane*, 5> pyr{&lum, &b1, &b2, &b4, &b8};
  for (int k = 0; k < 4; ++k) {
    double e = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = (*pyr[k])[i] - (*pyr[k + 1])[i];
      e += d * d;
    }
    f[20 + k] = 10.0 * std::sqrt(e * inv_n);
  }

  // Dark channel: per-pixel min over channels, then a 3x3 min filter.
  Plane dark_min(n);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double m = 1.0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = std::clamp(y + dy, 0, h - 1);
          const int xx = std::clamp(x + dx, 0, w - 1);
          m = std::min(m, dark[static_cast<std::size_t>(yy) * w + xx]);
        }
      }
      dark_min[static_cast<std::size_t>(y) * w + x] = m;
    }
  }
  f[24] = 2.0 * mean_of(dark_min);
  f[25] = 2.0 * quantile(dark_min, 0.9);
  f[26] = mean_of(bright);
  const double sat_mean = mean_of(sat);
  double sat_var = 0;
  for (double s : sat) sat_var += (s - sat_mean) * (s - sat_mean);
  f[27] = 2.0 * sat_mean;
  f[28] = 4.0 * std::sqrt(sat_var * inv_n);
  f[29] = 2.0 * (quantile(lum, 0.95) - quantile(lum, 0.05));
  f[30] = 4.0 * static_cast<double>(std::count_if(lum.begin(), lum.end(),
                                                  [](double v) { return v > 0.85; })) *
          inv_n;
  f[31] = 5.0 * (mean[2] - mean[0]);
  f[32] = 10.0 * specks * inv_n;

  auto half_std = [&](int y0, int y1) {
    double s = 0, s2 = 0;
    int cnt = 0;
    for (int y = y0; y < y1; ++y) {
      for (int x = 0; x < w; ++x) {
        const double v = lum[static_cast<std::size_t>(y) * w + x];
        s += v;
        s2 += v * v;
        ++cnt;
      }
    }
    if (cnt == 0) return 0.0;
    const double m = s / cnt;
    return std::sqrt(std::max(0.0, s2 / cnt - m * m));
  };
  f[33] = 4.0 * half_std(0, h / 2);
  f[34] = 4.0 * half_std(h / 2, h);
  f[35] = 20.0 * lap * inv_n;
  f[36] = 2.0 * (mean_of(bright) - mean_of(dark));

  const double lm = mean_of(lum);
  double m2 = 0, m3 = 0, m4 = 0;
  for (double v : lum) {
    const double d = v - lm;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 *= inv_n;
  m3 *= inv_n;
  m4 *= inv_n;
  const double sd = std::sqrt(m2) + 1e-9;
  f[37] = std::clamp(0.5 * m3 / (sd * sd * sd), -3.0, 3.0);
  f[38] = std::clamp(0.1 * (m4 / (m2 * m2 + 1e-18) - 3.0), -3.0, 3.0);
  f[39] = 1.0;
  return f;
}

MockBackend::MockBackend(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim < 2) throw InvalidInput("MockBackend: dimension must be >= 2");
  Rng rng(derive_seed(seed, "image-projection"));
  projection_.resize(kProbeFeatures, dim);
  for (int i = 0; i < kProbeFeatures; ++i) {
    for (int j = 0; j < dim; ++j) projection_(i, j) = rng.normal();
  }
}

Embedding MockBackend::embed_image(const Image& image) const {
  check_image(image);
  const FeatureProbe f = feature_probe(image);
  const Eigen::Map<const Eigen::RowVectorXd> row(f.data(), kProbeFeatures);
  return normalized((row * projection_).transpose());
}

Embedding MockBackend::embed_text(std::string_view text) const {
  if (text.empty()) throw InvalidInput("embed_text: empty text");
  Rng rng(derive_seed(seed_, fnv1a64(text)));
  Embedding v(dim_);
  for (int j = 0; j < dim_; ++j) v(j) = rng.normal();
  return normalized(std::move(v));
}

WeightsFileBackend::WeightsFileBackend(const std::filesystem::path& path)
    : source_(path.filename().string()) {
  std::ifstream in(path);
  if (!in) throw DataError("", "encoder weights not found: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
    if (j.at("format").get<std::string>() != "weatherseg-encoder-v1")
      throw DataError("", "unsupported encoder weights format in " + path.string());
    dim_ = j.at("dim").get<int>();
    const auto& rows = j.at("image_projection");
    if (dim_ < 2 || rows.size() != static_cast<std::size_t>(kProbeFeatures))
      throw DataError("", "encoder weights: image_projection must have 40 rows");
    projection_.resize(kProbeFeatures, dim_);
    for (int i = 0; i < kProbeFeatures; ++i) {
      const auto row = rows.at(i).get<std::vector<double>>();
      if (row.size() != static_cast<std::size_t>(dim_))
        throw DataError("", "encoder weights: projection row width differs from dim");
      for (int k = 0; k < dim_; ++k) projection_(i, k) = row[k];
    }
    for (const auto& [text, vec] : j.at("text_embeddings").items()) {
      const auto v = vec.get<std::vector<double>>();
      if (v.size() != static_cast<std::size_t>(dim_))
        throw DataError("", "encoder weights: text embedding width differs from dim");
      text_.emplace(text, normalized(Eigen::Map<const Eigen::VectorXd>(v.data(), dim_)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("", "malformed encoder weights " + path.string() + ": " + e.what());
  } catch (const InvalidInput& e) {
    throw DataError("", "invalid encoder weights " + path.string() + ": " + e.what());
  }
}

Embedding WeightsFileBackend::embed_image(const Image& image) const {
  check_image(image);
  const FeatureProbe f = feature_probe(image);
  const Eigen::Map<const Eigen::RowVectorXd> row(f.data(), kProbeFeatures);
  return normalized((row * projection_).transpose());
}

Embedding WeightsFileBackend::embed_text(std::string_view text) const {
  if (text.empty()) throw InvalidInput("embed_text: empty text");
  const auto it = text_.find(text);
  if (it == text_.end())
    throw InvalidInput("encoder weights have no embedding for '" + std::string(text) + "'");
  return it->second;
}

std::unique_ptr<Backend> real_encoder_adapter(const std::filesystem::path& weights_path) {
  return std::make_unique<WeightsFileBackend>(weights_path);
}

std::string_view to_string(Category c) {
  switch (c) {
    case Category::kRain: return "rain";
    case Category::kSnow: return "snow";
    case Category::kFog: return "fog";
    case Category::kClear: return "clear";
  }
  return "?";
}

std::optional<Category> concept_category(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  auto any = [&](std::initializer_list<std::string_view> words) {
    return std::any_of(words.begin(), words.end(),
                       [&](std::string_view w) { return lower.find(w) != std::string::npos; });
  };
  if (any({"rain", "drizzle", "shower", "downpour"})) return Category::kRain;
  if (any({"snow", "blizzard", "sleet", "flake"})) return Category::kSnow;
  if (any({"fog", "haze", "hazy", "mist", "smog"})) return Category::kFog;
  if (any({"clear", "sunny", "visibility", "fair"})) return Category::kClear;
  return std::nullopt;
}

ConceptBank build_concept_bank(const std::vector<std::string>& texts, const Backend& backend) {
  if (texts.size() < 2) throw InvalidInput("concept bank needs at least two concepts");
  std::set<std::string> seen;
  for (const auto& t : texts) {
    if (t.empty()) throw InvalidInput("concept bank: empty concept string");
    if (!seen.insert(t).second) throw InvalidInput("concept bank: duplicate concept '" + t + "'");
  }
  ConceptBank bank;
  bank.texts = texts;
  bank.embeddings.resize(static_cast<Eigen::Index>(texts.size()), backend.dim());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    bank.embeddings.row(static_cast<Eigen::Index>(i)) = backend.embed_text(texts[i]).transpose();
  }
  return bank;
}

std::vector<std::string> default_concepts() {
  return {"rain",
          "a rainy day",
          "heavy rain streaks",
          "light drizzle",
          "a photo taken in the rain",
          "snow",
          "a snowy day",
          "falling snowflakes",
          "a heavy snowstorm",
          "a photo taken in the snow",
          "fog",
          "a foggy day",
          "thick haze",
          "dense mist",
          "a photo taken in the fog",
          "clear weather",
          "a sunny day",
          "a clear sky",
          "good visibility",
          "a photo taken in clear weather"};
}

std::vector<std::string> four_concepts() { return {"rain", "snow", "fog", "clear weather"}; }

std::vector<std::string> load_concept_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("", "cannot open concept bank file " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    const auto first = line.find_first_not_of(' ');
    if (first == std::string::npos || line[first] == '#') continue;
    out.push_back(line.substr(first));
  }
  return out;
}

double cosine(const Embedding& a, const Embedding& b) {
  return a.dot(b) / (a.norm() * b.norm());
}

}  // namespace weatherseg::embed
