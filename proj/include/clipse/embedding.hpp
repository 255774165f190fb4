#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clipse/error.hpp"

namespace clipse {

// A point in the shared image/text embedding space.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<float> values) : values_(std::move(values)) {}

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  const float* data() const noexcept { return values_.data(); }
  std::span<const float> values() const noexcept { return values_; }
  float operator[](std::size_t i) const { return values_[i]; }

  // L2 norm accumulated in double precision.
  double norm() const noexcept;
  bool all_finite() const noexcept;

  // Bitwise comparison; two NaN payloads never occur in valid vectors.
  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  std::vector<float> values_;
};

struct ProviderDescriptor {
  std::string model_id;
  std::size_t dimension = 0;
  bool normalize = true;

  friend bool operator==(const ProviderDescriptor&, const ProviderDescriptor&) = default;
};

// Throws std::invalid_argument when model_id is empty or has control characters,
// or when dimension is zero.
void validate_descriptor(const ProviderDescriptor& descriptor);

// Maps images and text into one embedding space.
//
// Implementations must be safe for concurrent calls after construction, or
// document otherwise so callers can serialize access.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual const ProviderDescriptor& descriptor() const noexcept = 0;

  // Throws DecodeError for bytes that are not a supported raster image and
  // ProviderError for backend failures.
  virtual EmbeddingVector embed_image(std::span<const std::uint8_t> image_bytes) const = 0;

  // Empty text is valid input.
  virtual EmbeddingVector embed_text(std::string_view query) const = 0;
};

using ProviderPtr = std::shared_ptr<const EmbeddingProvider>;

// SHA-256 of the bytes seeds a 64-bit Mersenne Twister, which is expanded
// into `dimension` uniform values in [-1, 1) and then L2-normalized.
EmbeddingVector reference_embed(std::span<const std::uint8_t> bytes, std::size_t dimension);
EmbeddingVector reference_embed(std::string_view bytes, std::size_t dimension);

// Throws ZeroVectorError when the norm is below 1e-12.
EmbeddingVector l2_normalize(const EmbeddingVector& v);

// Deterministic stand-in for a vision-language model. Image input must decode
// as PNG or JPEG; the embedding itself is derived from the encoded bytes.
// Stateless and safe for concurrent use.
class ReferenceEmbedder final : public EmbeddingProvider {
 public:
  static constexpr std::size_t kDefaultDimension = 512;
  static constexpr std::string_view kModelPrefix = "reference-sha256-mt64";

  explicit ReferenceEmbedder(std::size_t dimension = kDefaultDimension);

  const ProviderDescriptor& descriptor() const noexcept override { return descriptor_; }
  EmbeddingVector embed_image(std::span<const std::uint8_t> image_bytes) const override;
  EmbeddingVector embed_text(std::string_view query) const override;

 private:
  ProviderDescriptor descriptor_;
};

// Named provider factories selectable from the command line. "reference" is
// always registered; model adapters register themselves under their own name.
class ProviderRegistry {
 public:
  struct Options {
    std::size_t dimension = ReferenceEmbedder::kDefaultDimension;
  };
  using Factory = std::function<ProviderPtr(const Options&)>;

  static ProviderRegistry& instance();

  void add(std::string name, Factory factory);
  bool contains(std::string_view name) const;
  std::vector<std::string> names() const;

  // Throws ProviderError for unknown names.
  ProviderPtr create(std::string_view name, const Options& options) const;

 private:
  ProviderRegistry();
  std::map<std::string, Factory, std::less<>> factories_;
};

}  // namespace clipse
