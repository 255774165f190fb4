#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <thread>

#include "clipse/embedding.hpp"
#include "clipse/image.hpp"

using namespace clipse;

namespace {

std::vector<std::uint8_t> solid_png(std::uint32_t w, std::uint32_t h, std::uint8_t value) {
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(w) * h * 3, value);
  return image::encode_png_rgb(w, h, rgb);
}

}  // namespace

TEST(ReferenceEmbed, IsDeterministicBitwise) {
  const std::string bytes = "some bytes";
  const auto a = reference_embed(bytes, 64);
  const auto b = reference_embed(bytes, 64);
  ASSERT_EQ(a.size(), 64u);
  EXPECT_EQ(a, b);
}

TEST(ReferenceEmbed, IsUnitNorm) {
  for (std::size_t d : {1u, 2u, 8u, 512u, 1000u}) {
    const auto v = reference_embed("x" + std::to_string(d), d);
    EXPECT_NEAR(v.norm(), 1.0, 1e-5) << "D=" << d;
    EXPECT_TRUE(v.all_finite());
  }
}

TEST(ReferenceEmbed, DistinctInputsGiveDistinctVectors) {
  EXPECT_NE(reference_embed("b1", 8), reference_embed("b2", 8));
}

TEST(ReferenceEmbed, SingleBitFlipChangesVector) {
  std::vector<std::uint8_t> bytes(32, 0xAB);
  const auto base = reference_embed(bytes, 16);
  for (std::size_t bit = 0; bit < bytes.size() * 8; bit += 7) {
    auto flipped = bytes;
    flipped[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    EXPECT_NE(reference_embed(flipped, 16), base) << "bit " << bit;
  }
}

TEST(ReferenceEmbed, AvalancheOverRandomInputs) {
  std::mt19937_64 rng(7);
  std::set<std::vector<float>> seen;
  std::set<std::string> inputs;
  while (inputs.size() < 100) {
    std::string s(1 + rng() % 40, '\0');
    for (auto& c : s) c = static_cast<char>(rng());
    inputs.insert(s);
  }
  for (const auto& s : inputs) {
    const auto v = reference_embed(s, 8);
    seen.insert(std::vector<float>(v.values().begin(), v.values().end()));
  }
  EXPECT_EQ(seen.size(), inputs.size());
}

TEST(ReferenceEmbed, RejectsZeroDimension) {
  EXPECT_THROW(reference_embed("x", 0), std::invalid_argument);
}

TEST(L2Normalize, ThreeFourFiveTriangle) {
  const auto v = l2_normalize(EmbeddingVector({3.0f, 4.0f}));
  EXPECT_NEAR(v[0], 0.6, 1e-6);
  EXPECT_NEAR(v[1], 0.8, 1e-6);
}

TEST(L2Normalize, UnitVectorIsFixedPoint) {
  const auto u = reference_embed("unit", 32);
  const auto v = l2_normalize(u);
  for (std::size_t i = 0; i < u.size(); ++i) EXPECT_NEAR(v[i], u[i], 1e-6);
}

TEST(L2Normalize, IsIdempotent) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<float> dist(-10.0f, 10.0f);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<float> raw(1 + trial % 17);
    for (auto& x : raw) x = dist(rng);
    const auto once = l2_normalize(EmbeddingVector(raw));
    const auto twice = l2_normalize(once);
    EXPECT_NEAR(once.norm(), 1.0, 1e-6);
    for (std::size_t i = 0; i < raw.size(); ++i) EXPECT_NEAR(once[i], twice[i], 1e-6);
  }
}

TEST(L2Normalize, ZeroVectorThrows) {
  EXPECT_THROW(l2_normalize(EmbeddingVector({0.0f, 0.0f})), ZeroVectorError);
  EXPECT_THROW(l2_normalize(EmbeddingVector({1e-20f, 0.0f})), ZeroVectorError);
}

TEST(ReferenceEmbedder, DescriptorIsSelfDescribing) {
  ReferenceEmbedder e(128);
  EXPECT_EQ(e.descriptor().dimension, 128u);
  EXPECT_TRUE(e.descriptor().normalize);
  EXPECT_NE(e.descriptor().model_id.find("d128"), std::string::npos);
  EXPECT_NE(ReferenceEmbedder(64).descriptor().model_id, e.descriptor().model_id);
}

TEST(ReferenceEmbedder, TinyBlackPngEmbedsToUnitVector) {
  ReferenceEmbedder e(512);
  const auto png = solid_png(1, 1, 0);
  const auto v = e.embed_image(png);
  ASSERT_EQ(v.size(), 512u);
  EXPECT_TRUE(v.all_finite());
  EXPECT_NEAR(v.norm(), 1.0, 1e-5);
  EXPECT_EQ(v, e.embed_image(png));
}

TEST(ReferenceEmbedder, DistinctImagesAreNotIdentical) {
  ReferenceEmbedder e(64);
  const auto a = e.embed_image(solid_png(2, 2, 0));
  const auto b = e.embed_image(solid_png(2, 2, 255));
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += static_cast<double>(a[i]) * b[i];
  EXPECT_LT(dot, 1.0);
}

TEST(ReferenceEmbedder, NonImageBytesRaiseDecodeError) {
  ReferenceEmbedder e(16);
  const std::string text = "definitely not a png";
  EXPECT_THROW(e.embed_image(std::span<const std::uint8_t>(
                   reinterpret_cast<const std::uint8_t*>(text.data()), text.size())),
               DecodeError);
  // Valid signature, corrupt body.
  auto png = solid_png(4, 4, 10);
  png.resize(png.size() / 2);
  EXPECT_THROW(e.embed_image(png), DecodeError);
}

TEST(ReferenceEmbedder, TextEmbeddingIsDeterministicAndUnitNorm) {
  ReferenceEmbedder e(512);
  const auto q = e.embed_text("a cat exploring the dark night");
  EXPECT_EQ(q, e.embed_text("a cat exploring the dark night"));
  EXPECT_NEAR(q.norm(), 1.0, 1e-5);
}

TEST(ReferenceEmbedder, EmptyTextIsValid) {
  ReferenceEmbedder e(32);
  const auto v = e.embed_text("");
  EXPECT_EQ(v.size(), 32u);
  EXPECT_TRUE(v.all_finite());
}

TEST(ReferenceEmbedder, ConcurrentUseAgreesWithSerial) {
  ReferenceEmbedder e(256);
  const auto expected = e.embed_text("shared");
  std::vector<std::thread> threads;
  std::atomic<int> mismatches{0};
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&] {
      for (int i = 0; i < 200; ++i) {
        if (e.embed_text("shared") != expected) ++mismatches;
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(mismatches.load(), 0);
}

TEST(Descriptor, Validation) {
  EXPECT_NO_THROW(validate_descriptor({"model", 4, true}));
  EXPECT_THROW(validate_descriptor({"", 4, true}), std::invalid_argument);
  EXPECT_THROW(validate_descriptor({"bad\nid", 4, true}), std::invalid_argument);
  EXPECT_THROW(validate_descriptor({"model", 0, true}), std::invalid_argument);
}

namespace {

// Adapter that wraps the reference embedder under a different model id, to
// exercise registration.
class RenamedEmbedder final : public EmbeddingProvider {
 public:
  explicit RenamedEmbedder(std::size_t d) : inner_(d), descriptor_{"renamed", d, true} {}
  const ProviderDescriptor& descriptor() const noexcept override { return descriptor_; }
  EmbeddingVector embed_image(std::span<const std::uint8_t> b) const override {
    return inner_.embed_image(b);
  }
  EmbeddingVector embed_text(std::string_view q) const override { return inner_.embed_text(q); }

 private:
  ReferenceEmbedder inner_;
  ProviderDescriptor descriptor_;
};

}  // namespace

TEST(ProviderRegistry, ReferenceIsBuiltIn) {
  auto& registry = ProviderRegistry::instance();
  EXPECT_TRUE(registry.contains("reference"));
  const auto p = registry.create("reference", {24});
  EXPECT_EQ(p->descriptor().dimension, 24u);
}

TEST(ProviderRegistry, UnknownNameThrows) {
  EXPECT_THROW(ProviderRegistry::instance().create("no-such-model", {}), ProviderError);
}

TEST(ProviderRegistry, AdaptersCanRegister) {
  auto& registry = ProviderRegistry::instance();
  registry.add("renamed-test", [](const ProviderRegistry::Options& o) -> ProviderPtr {
    return std::make_shared<RenamedEmbedder>(o.dimension);
  });
  const auto p = registry.create("renamed-test", {12});
  EXPECT_EQ(p->descriptor().model_id, "renamed");
  EXPECT_EQ(p->embed_text("q").size(), 12u);
}
