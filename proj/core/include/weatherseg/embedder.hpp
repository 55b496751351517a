#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "weatherseg/image.hpp"

// Frozen joint image/text embedding space behind a pluggable backend.
namespace weatherseg::embed {

using Embedding = Eigen::VectorXd;

inline constexpr int kProbeFeatures = 40;
using FeatureProbe = std::array<double, kProbeFeatures>;

// Hand-designed global statistics of an image: color moments, luminance
// histogram, gradient and oriented-gradient energy, band-pass energies,
// dark/bright channel, saturation and speck density. Weather-sensitive by
// construction (fog flattens contrast and the dark channel, streaks raise
// oriented gradient energy, flakes raise speck density). Values are O(1).
FeatureProbe feature_probe(const Image& image);

class Backend {
 public:
  virtual ~Backend() = default;
  virtual int dim() const = 0;
  virtual std::string name() const = 0;
  // Unit L2 norm; throws InvalidInput on non-finite pixels.
  virtual Embedding embed_image(const Image& image) const = 0;
  // Unit L2 norm; throws InvalidInput on empty text.
  virtual Embedding embed_text(std::string_view text) const = 0;
};

// Feature probe -> fixed seeded Gaussian projection -> normalize. Text maps to
// a Gaussian vector seeded by a stable hash of the string.
class MockBackend final : public Backend {
 public:
  explicit MockBackend(int dim = 512, std::uint64_t seed = 0x5eedc11bULL);
  int dim() const override { return dim_; }
  std::string name() const override { return "mock"; }
  Embedding embed_image(const Image& image) const override;
  Embedding embed_text(std::string_view text) const override;

 private:
  int dim_;
  std::uint64_t seed_;
  Eigen::MatrixXd projection_;  // kProbeFeatures x dim
};

// Adapter for exported encoder weights: a JSON file
//   {"format": "weatherseg-encoder-v1", "dim": D,
//    "image_projection": [[D numbers] x 40],
//    "text_embeddings": {"<text>": [D numbers], ...}}
// Image embeddings are the probe projected by the stored matrix; text
// embeddings are looked up (unknown text is an error). Throws DataError for a
// missing or malformed file.
class WeightsFileBackend final : public Backend {
 public:
  explicit WeightsFileBackend(const std::filesystem::path& weights_path);
  int dim() const override { return dim_; }
  std::string name() const override { return "weights:" + source_; }
  Embedding embed_image(const Image& image) const override;
  Embedding embed_text(std::string_view text) const override;

 private:
  int dim_ = 0;
  std::string source_;
  Eigen::MatrixXd projection_;
  std::map<std::string, Embedding, std::less<>> text_;
};

std::unique_ptr<Backend> real_encoder_adapter(const std::filesystem::path& weights_path);

enum class Category { kRain, kSnow, kFog, kClear };
std::string_view to_string(Category c);
// Keyword classification of a concept phrase; nullopt when no keyword hits.
std::optional<Category> concept_category(std::string_view text);

struct ConceptBank {
  std::vector<std::string> texts;
  Eigen::MatrixXd embeddings;  // N x D, unit rows

  int size() const { return static_cast<int>(texts.size()); }
  int dim() const { return static_cast<int>(embeddings.cols()); }
};

// N >= 2, unique, nonempty strings.
ConceptBank build_concept_bank(const std::vector<std::string>& texts, const Backend& backend);

std::vector<std::string> default_concepts();   // 20 phrasings
std::vector<std::string> four_concepts();      // one per category
// One concept per line; blank lines and lines starting with '#' are skipped.
std::vector<std::string> load_concept_file(const std::filesystem::path& path);

double cosine(const Embedding& a, const Embedding& b);

}  // namespace weatherseg::embed
