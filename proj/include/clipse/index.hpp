#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "clipse/embedding.hpp"

namespace clipse {

// What a persisted index records about the model that produced it.
struct IndexDescriptor {
  std::string model_id;
  std::size_t dimension = 0;

  static IndexDescriptor from(const ProviderDescriptor& d) { return {d.model_id, d.dimension}; }

  friend bool operator==(const IndexDescriptor&, const IndexDescriptor&) = default;
};

struct ImageRecord {
  std::string path;
  EmbeddingVector embedding;
};

struct RecordView {
  std::string_view path;
  std::span<const float> embedding;
};

// Non-empty, relative, '/'-separated, valid UTF-8, no "." / ".." / empty
// segments and no NUL bytes.
bool is_valid_record_path(std::string_view path) noexcept;

// Immutable set of image embeddings. Paths are unique and sorted by byte
// order; embeddings are stored row-major in one contiguous buffer.
class SearchIndex {
 public:
  SearchIndex() = default;

  // Throws InvariantError unless paths are valid, strictly ascending, and
  // embeddings.size() == paths.size() * descriptor.dimension with finite values.
  SearchIndex(IndexDescriptor descriptor, std::vector<std::string> paths,
              std::vector<float> embeddings, std::string created_at);

  // Sorts records by path first.
  static SearchIndex from_records(IndexDescriptor descriptor, std::vector<ImageRecord> records,
                                  std::string created_at);

  const IndexDescriptor& descriptor() const noexcept { return descriptor_; }
  const std::string& model_id() const noexcept { return descriptor_.model_id; }
  std::size_t dimension() const noexcept { return descriptor_.dimension; }
  std::size_t size() const noexcept { return paths_.size(); }
  bool empty() const noexcept { return paths_.empty(); }
  // Empty when the source format does not carry a creation time.
  const std::string& created_at() const noexcept { return created_at_; }

  const std::vector<std::string>& paths() const noexcept { return paths_; }
  std::span<const float> embeddings() const noexcept { return embeddings_; }
  std::span<const float> embedding(std::size_t i) const noexcept {
    return std::span<const float>(embeddings_).subspan(i * descriptor_.dimension,
                                                       descriptor_.dimension);
  }
  RecordView record(std::size_t i) const noexcept { return {paths_[i], embedding(i)}; }

  // Binary search over the sorted paths.
  std::optional<std::size_t> find(std::string_view path) const noexcept;

  // Same descriptor, same paths, bitwise-equal embeddings. created_at is metadata
  // and not compared.
  bool same_content(const SearchIndex& other) const noexcept;

 private:
  IndexDescriptor descriptor_;
  std::vector<std::string> paths_;
  std::vector<float> embeddings_;
  std::string created_at_;
};

struct SkippedFile {
  std::string path;
  std::string reason;
};

struct BuildReport {
  std::size_t indexed_count = 0;
  std::vector<SkippedFile> skipped;
  double elapsed_seconds = 0.0;
};

struct BuildOptions {
  bool follow_symlinks = false;
  // Lower-case suffixes including the dot; matched case-insensitively.
  std::set<std::string> extensions = {".png", ".jpg", ".jpeg", ".webp"};
};

struct BuildResult {
  SearchIndex index;
  BuildReport report;
};

// Walks image_dir recursively and embeds every matching file, one at a time.
// Unreadable or undecodable files are reported in `skipped`.
// Throws DirectoryNotFound, and EmptyIndexError when nothing was indexed.
BuildResult build_index(const std::filesystem::path& image_dir, const EmbeddingProvider& provider,
                        const BuildOptions& options = {});

// Current UTC time as an RFC 3339 timestamp with second precision.
std::string utc_timestamp_now();

// JSON index: {"format":"clipse-index","version":1,"model_id",...,"images":[...]}.
std::string to_json(const SearchIndex& index);
SearchIndex from_json(std::string_view text);

// CSIX binary index (little-endian, no padding):
//   "CSIX" | u32 version=1 | u32 dimension | u64 record_count |
//   u32 model_id_len | model_id | { u32 path_len | path | dimension x f32 }*
inline constexpr char kCsixMagic[4] = {'C', 'S', 'I', 'X'};
inline constexpr std::uint32_t kCsixVersion = 1;
inline constexpr std::size_t kCsixHeaderSize = 4 + 4 + 4 + 8;

std::vector<std::uint8_t> to_csix(const SearchIndex& index);
SearchIndex from_csix(std::span<const std::uint8_t> bytes);
// Exact encoded size of `index` in CSIX.
std::size_t csix_size(const SearchIndex& index) noexcept;

// Throw EmptyIndexError for an empty index and IoError on write failure.
void save_json(const SearchIndex& index, const std::filesystem::path& file);
void save_binary(const SearchIndex& index, const std::filesystem::path& file);

// Throw IoError or FormatError. Loaded indexes satisfy every SearchIndex
// invariant and hold at least one record.
SearchIndex load_json(const std::filesystem::path& file);
SearchIndex load_binary(const std::filesystem::path& file);
// Picks the format from the file's leading bytes.
SearchIndex load_index(const std::filesystem::path& file);

void convert(const std::filesystem::path& json_file, const std::filesystem::path& binary_file);

// Whole-file helpers shared by the loaders; throw IoError.
std::vector<std::uint8_t> read_file(const std::filesystem::path& file);
void write_file_atomic(const std::filesystem::path& file, std::span<const std::uint8_t> bytes);

}  // namespace clipse
