#include "clipse/embedding.hpp"

#include <openssl/evp.h>

#include <array>
#include <cmath>
#include <mutex>
#include <random>
#include <stdexcept>

#include "clipse/image.hpp"

namespace clipse {

double EmbeddingVector::norm() const noexcept {
  double sum = 0.0;
  for (float v : values_) sum += static_cast<double>(v) * v;
  return std::sqrt(sum);
}

bool EmbeddingVector::all_finite() const noexcept {
  for (float v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void validate_descriptor(const ProviderDescriptor& descriptor) {
  if (descriptor.model_id.empty()) {
    throw std::invalid_argument("model_id must not be empty");
  }
  for (unsigned char c : descriptor.model_id) {
    if (c < 0x20 || c == 0x7f) {
      throw std::invalid_argument("model_id must not contain control characters");
    }
  }
  if (descriptor.dimension == 0) {
    throw std::invalid_argument("dimension must be at least 1");
  }
}

namespace {

std::array<unsigned char, 32> sha256(std::span<const std::uint8_t> bytes) {
  std::array<unsigned char, 32> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != digest.size()) {
    throw ProviderError("sha256 digest failed");
  }
  return digest;
}

}  // namespace

EmbeddingVector reference_embed(std::span<const std::uint8_t> bytes, std::size_t dimension) {
  if (dimension == 0) throw std::invalid_argument("reference_embed: dimension must be >= 1");

  const auto digest = sha256(bytes);
  std::array<std::uint32_t, 8> words{};
  for (std::size_t w = 0; w < words.size(); ++w) {
    words[w] = static_cast<std::uint32_t>(digest[4 * w]) |
               static_cast<std::uint32_t>(digest[4 * w + 1]) << 8 |
               static_cast<std::uint32_t>(digest[4 * w + 2]) << 16 |
               static_cast<std::uint32_t>(digest[4 * w + 3]) << 24;
  }
  std::seed_seq seq(words.begin(), words.end());
  std::mt19937_64 rng(seq);

  // Uniform in [-1, 1) from the top 53 bits; independent of the standard
  // library's distribution implementations.
  std::vector<double> raw(dimension);
  double sum = 0.0;
  for (double& x : raw) {
    x = static_cast<double>(rng() >> 11) * 0x1.0p-52 - 1.0;
    sum += x * x;
  }
  // All-zero draw: fall back to the first basis vector.
  if (sum == 0.0) {
    raw[0] = 1.0;
    sum = 1.0;
  }
  const double inv = 1.0 / std::sqrt(sum);
  std::vector<float> values(dimension);
  for (std::size_t i = 0; i < dimension; ++i) {
    values[i] = static_cast<float>(raw[i] * inv);
  }
  return EmbeddingVector(std::move(values));
}

EmbeddingVector reference_embed(std::string_view bytes, std::size_t dimension) {
  return reference_embed(
      std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(bytes.data()),
                                    bytes.size()),
      dimension);
}

EmbeddingVector l2_normalize(const EmbeddingVector& v) {
  const double n = v.norm();
  if (!(n >= 1e-12)) {
    throw ZeroVectorError("cannot normalize a vector with norm below 1e-12");
  }
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = static_cast<float>(static_cast<double>(v[i]) / n);
  }
  return EmbeddingVector(std::move(out));
}

ReferenceEmbedder::ReferenceEmbedder(std::size_t dimension) {
  descriptor_.model_id = std::string(kModelPrefix) + "-d" + std::to_string(dimension);
  descriptor_.dimension = dimension;
  descriptor_.normalize = true;
  validate_descriptor(descriptor_);
}

EmbeddingVector ReferenceEmbedder::embed_image(std::span<const std::uint8_t> image_bytes) const {
  image::decode(image_bytes);
  return reference_embed(image_bytes, descriptor_.dimension);
}

EmbeddingVector ReferenceEmbedder::embed_text(std::string_view query) const {
  return reference_embed(query, descriptor_.dimension);
}

namespace {
std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

ProviderRegistry::ProviderRegistry() {
  factories_.emplace("reference", [](const Options& options) -> ProviderPtr {
    return std::make_shared<ReferenceEmbedder>(options.dimension);
  });
}

ProviderRegistry& ProviderRegistry::instance() {
  static ProviderRegistry registry;
  return registry;
}

void ProviderRegistry::add(std::string name, Factory factory) {
  std::lock_guard lock(registry_mutex());
  factories_.insert_or_assign(std::move(name), std::move(factory));
}

bool ProviderRegistry::contains(std::string_view name) const {
  std::lock_guard lock(registry_mutex());
  return factories_.find(name) != factories_.end();
}

std::vector<std::string> ProviderRegistry::names() const {
  std::lock_guard lock(registry_mutex());
  std::vector<std::string> out;
  for (const auto& [name, factory] : factories_) out.push_back(name);
  return out;
}

ProviderPtr ProviderRegistry::create(std::string_view name, const Options& options) const {
  Factory factory;
  {
    std::lock_guard lock(registry_mutex());
    auto it = factories_.find(name);
    if (it == factories_.end()) {
      throw ProviderError("unknown embedder: " + std::string(name));
    }
    factory = it->second;
  }
  return factory(options);
}

}  // namespace clipse
