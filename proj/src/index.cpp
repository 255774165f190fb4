#include "clipse/index.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iterator>
#include <numeric>
#include <system_error>

namespace clipse {
namespace fs = std::filesystem;

namespace {

bool valid_utf8(std::string_view s) noexcept {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t extra;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      extra = 1;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + extra >= s.size()) return false;
    for (std::size_t k = 1; k <= extra; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    static constexpr std::uint32_t kMin[4] = {0, 0x80, 0x800, 0x10000};
    if (cp < kMin[extra] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    i += extra + 1;
  }
  return true;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

bool is_valid_record_path(std::string_view path) noexcept {
  if (path.empty() || path.front() == '/') return false;
  if (path.find('\0') != std::string_view::npos) return false;
  if (!valid_utf8(path)) return false;
  std::size_t start = 0;
  while (start <= path.size()) {
    auto end = path.find('/', start);
    if (end == std::string_view::npos) end = path.size();
    const auto segment = path.substr(start, end - start);
    if (segment.empty() || segment == "." || segment == "..") return false;
    start = end + 1;
  }
  return true;
}

SearchIndex::SearchIndex(IndexDescriptor descriptor, std::vector<std::string> paths,
                         std::vector<float> embeddings, std::string created_at)
    : descriptor_(std::move(descriptor)),
      paths_(std::move(paths)),
      embeddings_(std::move(embeddings)),
      created_at_(std::move(created_at)) {
  if (descriptor_.dimension == 0) throw InvariantError("index dimension must be at least 1");
  if (descriptor_.model_id.empty()) throw InvariantError("index model_id must not be empty");
  if (embeddings_.size() != paths_.size() * descriptor_.dimension) {
    throw InvariantError("embedding buffer holds " + std::to_string(embeddings_.size()) +
                         " values, expected " +
                         std::to_string(paths_.size() * descriptor_.dimension));
  }
  for (std::size_t i = 0; i < paths_.size(); ++i) {
    if (!is_valid_record_path(paths_[i])) {
      throw InvariantError("invalid record path at " + std::to_string(i) + ": \"" + paths_[i] +
                           "\"");
    }
    if (i > 0 && !(paths_[i - 1] < paths_[i])) {
      throw InvariantError(paths_[i - 1] == paths_[i]
                               ? "duplicate record path: \"" + paths_[i] + "\""
                               : "record paths not sorted at " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < embeddings_.size(); ++i) {
    if (!std::isfinite(embeddings_[i])) {
      throw InvariantError("non-finite embedding value in record " +
                           std::to_string(i / descriptor_.dimension));
    }
  }
}

SearchIndex SearchIndex::from_records(IndexDescriptor descriptor, std::vector<ImageRecord> records,
                                      std::string created_at) {
  std::sort(records.begin(), records.end(),
            [](const ImageRecord& a, const ImageRecord& b) { return a.path < b.path; });
  std::vector<std::string> paths;
  std::vector<float> flat;
  paths.reserve(records.size());
  flat.reserve(records.size() * descriptor.dimension);
  for (auto& r : records) {
    if (r.embedding.size() != descriptor.dimension) {
      throw InvariantError("record \"" + r.path + "\" has dimension " +
                           std::to_string(r.embedding.size()) + ", index dimension is " +
                           std::to_string(descriptor.dimension));
    }
    flat.insert(flat.end(), r.embedding.values().begin(), r.embedding.values().end());
    paths.push_back(std::move(r.path));
  }
  return SearchIndex(std::move(descriptor), std::move(paths), std::move(flat),
                     std::move(created_at));
}

std::optional<std::size_t> SearchIndex::find(std::string_view path) const noexcept {
  auto it = std::lower_bound(paths_.begin(), paths_.end(), path,
                             [](const std::string& a, std::string_view b) { return a < b; });
  if (it == paths_.end() || *it != path) return std::nullopt;
  return static_cast<std::size_t>(it - paths_.begin());
}

bool SearchIndex::same_content(const SearchIndex& other) const noexcept {
  if (descriptor_ != other.descriptor_ || paths_ != other.paths_) return false;
  return embeddings_.size() == other.embeddings_.size() &&
         std::equal(embeddings_.begin(), embeddings_.end(), other.embeddings_.begin(),
                    [](float a, float b) {
                      return std::bit_cast<std::uint32_t>(a) == std::bit_cast<std::uint32_t>(b);
                    });
}

std::string utc_timestamp_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

BuildResult build_index(const fs::path& image_dir, const EmbeddingProvider& provider,
                        const BuildOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  std::error_code ec;
  if (!fs::is_directory(image_dir, ec)) {
    throw DirectoryNotFound("image directory not found: " + image_dir.string());
  }

  std::set<std::string> extensions;
  for (const auto& e : options.extensions) extensions.insert(lower(e));

  auto dir_options = fs::directory_options::skip_permission_denied;
  if (options.follow_symlinks) dir_options |= fs::directory_options::follow_directory_symlink;

  std::vector<fs::path> candidates;
  fs::recursive_directory_iterator it(image_dir, dir_options, ec);
  if (ec) throw DirectoryNotFound("cannot read image directory " + image_dir.string() + ": " +
                                  ec.message());
  for (; it != fs::recursive_directory_iterator(); it.increment(ec)) {
    if (ec) break;
    const auto& entry = *it;
    if (!options.follow_symlinks && entry.is_symlink(ec)) {
      if (entry.is_directory(ec)) it.disable_recursion_pending();
      continue;
    }
    if (!entry.is_regular_file(ec)) continue;
    if (!extensions.contains(lower(entry.path().extension().string()))) continue;
    candidates.push_back(entry.path());
  }

  BuildReport report;
  std::vector<ImageRecord> records;
  const auto& descriptor = provider.descriptor();
  for (const auto& file : candidates) {
    const std::string rel = file.lexically_relative(image_dir).generic_string();
    if (!is_valid_record_path(rel)) {
      report.skipped.push_back({rel, "InvalidPath: path is not valid UTF-8 or not relative"});
      continue;
    }
    std::vector<std::uint8_t> bytes;
    try {
      bytes = read_file(file);
    } catch (const IoError& e) {
      report.skipped.push_back({rel, std::string("IoError: ") + e.what()});
      continue;
    }
    try {
      auto embedding = provider.embed_image(bytes);
      if (embedding.size() != descriptor.dimension) {
        throw ProviderError("provider returned dimension " + std::to_string(embedding.size()));
      }
      records.push_back({rel, std::move(embedding)});
    } catch (const DecodeError& e) {
      report.skipped.push_back({rel, std::string("DecodeError: ") + e.what()});
    }
  }

  if (records.empty()) {
    throw EmptyIndexError("no images indexed in " + image_dir.string() + " (" +
                          std::to_string(report.skipped.size()) + " skipped)");
  }

  auto index = SearchIndex::from_records(IndexDescriptor::from(descriptor), std::move(records),
                                         utc_timestamp_now());
  report.indexed_count = index.size();
  std::sort(report.skipped.begin(), report.skipped.end(),
            [](const SkippedFile& a, const SkippedFile& b) { return a.path < b.path; });
  report.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return {std::move(index), std::move(report)};
}

std::vector<std::uint8_t> read_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  in.seekg(0, std::ios::end);
  const auto size = in.tellg();
  if (size < 0) throw IoError("cannot determine size of " + file.string());
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  if (!bytes.empty() && !in.read(reinterpret_cast<char*>(bytes.data()), size)) {
    throw IoError("read failed for " + file.string());
  }
  return bytes;
}

void write_file_atomic(const fs::path& file, std::span<const std::uint8_t> bytes) {
  fs::path tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, file, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move " + tmp.string() + " to " + file.string());
  }
}

}  // namespace clipse
