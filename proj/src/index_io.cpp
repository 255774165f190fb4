#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <limits>
#include <regex>

#include <json.hpp>

#include "clipse/index.hpp"

namespace clipse {
namespace fs = std::filesystem;

namespace {

using json = nlohmann::json;

constexpr std::string_view kJsonFormat = "clipse-index";
constexpr int kJsonVersion = 1;

void append_float(std::string& out, float v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, end);
}

bool valid_rfc3339(const std::string& s) {
  static const std::regex re(
      R"(^\d{4}-\d{2}-\d{2}[Tt]\d{2}:\d{2}:\d{2}(\.\d+)?([Zz]|[+-]\d{2}:\d{2})$)");
  return std::regex_match(s, re);
}

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
  }
}

class CsixReader {
 public:
  explicit CsixReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(bytes_[pos_ + i]) << (8 * i);
    }
    pos_ += sizeof(T);
    return value;
  }

  std::string_view get_bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string_view out(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return out;
  }

  void get_floats(float* dst, std::size_t n, const char* what) {
    need(n * 4, what);
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(dst, bytes_.data() + pos_, n * 4);
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t bits = 0;
        for (std::size_t b = 0; b < 4; ++b) {
          bits |= static_cast<std::uint32_t>(bytes_[pos_ + 4 * i + b]) << (8 * b);
        }
        dst[i] = std::bit_cast<float>(bits);
      }
    }
    pos_ += n * 4;
  }

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError("truncated CSIX file reading " + std::string(what) + " at offset " +
                        std::to_string(pos_) + ": expected " + std::to_string(n) +
                        " bytes, " + std::to_string(remaining()) + " available");
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::span<const std::uint8_t> as_bytes(const std::string& s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

}  // namespace

std::string to_json(const SearchIndex& index) {
  std::string out;
  out.reserve(128 + index.size() * (32 + index.dimension() * 12));
  out += "{\"format\":\"";
  out += kJsonFormat;
  out += "\",\"version\":";
  out += std::to_string(kJsonVersion);
  out += ",\"model_id\":";
  out += json(index.model_id()).dump();
  out += ",\"dimension\":";
  out += std::to_string(index.dimension());
  out += ",\"created_at\":";
  out += json(index.created_at().empty() ? utc_timestamp_now() : index.created_at()).dump();
  out += ",\"images\":[";
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (i) out += ',';
    out += "\n{\"path\":";
    out += json(index.paths()[i]).dump();
    out += ",\"embedding\":[";
    const auto e = index.embedding(i);
    for (std::size_t d = 0; d < e.size(); ++d) {
      if (d) out += ',';
      append_float(out, e[d]);
    }
    out += "]}";
  }
  out += "\n]}\n";
  return out;
}

SearchIndex from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError("invalid JSON at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  if (!doc.is_object()) throw FormatError("index JSON must be an object");

  auto field = [&](const char* name) -> const json& {
    auto it = doc.find(name);
    if (it == doc.end()) throw FormatError(std::string("missing field \"") + name + "\"");
    return *it;
  };

  const auto& format = field("format");
  if (!format.is_string() || format.get<std::string>() != kJsonFormat) {
    throw FormatError("unknown format tag, expected \"clipse-index\"");
  }
  const auto& version = field("version");
  if (!version.is_number_integer() || version.get<long long>() != kJsonVersion) {
    throw FormatError("unsupported index version " + version.dump());
  }
  const auto& model_id = field("model_id");
  if (!model_id.is_string() || model_id.get<std::string>().empty()) {
    throw FormatError("model_id must be a non-empty string");
  }
  const auto& dimension = field("dimension");
  if (!dimension.is_number_unsigned() || dimension.get<std::uint64_t>() == 0 ||
      dimension.get<std::uint64_t>() > std::numeric_limits<std::uint32_t>::max()) {
    throw FormatError("dimension must be a positive integer");
  }
  const auto& created_at = field("created_at");
  if (!created_at.is_string() || !valid_rfc3339(created_at.get<std::string>())) {
    throw FormatError("created_at must be an RFC 3339 timestamp");
  }
  const auto& images = field("images");
  if (!images.is_array()) throw FormatError("images must be an array");
  if (images.empty()) throw FormatError("index holds no images");

  const std::size_t dim = dimension.get<std::size_t>();
  std::vector<std::string> paths;
  std::vector<float> flat;
  paths.reserve(images.size());
  flat.reserve(images.size() * dim);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& image = images[i];
    const auto where = "images[" + std::to_string(i) + "]";
    if (!image.is_object()) throw FormatError(where + " must be an object");
    auto path = image.find("path");
    auto embedding = image.find("embedding");
    if (path == image.end() || !path->is_string()) {
      throw FormatError(where + ".path must be a string");
    }
    if (embedding == image.end() || !embedding->is_array()) {
      throw FormatError(where + ".embedding must be an array");
    }
    if (embedding->size() != dim) {
      throw FormatError(where + ".embedding has length " + std::to_string(embedding->size()) +
                        ", dimension is " + std::to_string(dim));
    }
    for (const auto& v : *embedding) {
      if (!v.is_number()) throw FormatError(where + ".embedding holds a non-number");
      const double d = v.get<double>();
      const float f = static_cast<float>(d);
      if (!std::isfinite(f)) throw FormatError(where + ".embedding holds a non-finite value");
      flat.push_back(f);
    }
    paths.push_back(path->get<std::string>());
  }

  try {
    return SearchIndex({model_id.get<std::string>(), dim}, std::move(paths), std::move(flat),
                       created_at.get<std::string>());
  } catch (const InvariantError& e) {
    throw FormatError(e.what());
  }
}

std::size_t csix_size(const SearchIndex& index) noexcept {
  std::size_t total = kCsixHeaderSize + 4 + index.model_id().size();
  for (const auto& p : index.paths()) total += 4 + p.size() + 4 * index.dimension();
  return total;
}

std::vector<std::uint8_t> to_csix(const SearchIndex& index) {
  std::vector<std::uint8_t> out;
  out.reserve(csix_size(index));
  out.insert(out.end(), std::begin(kCsixMagic), std::end(kCsixMagic));
  put_le<std::uint32_t>(out, kCsixVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(index.dimension()));
  put_le<std::uint64_t>(out, index.size());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(index.model_id().size()));
  out.insert(out.end(), index.model_id().begin(), index.model_id().end());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto& p = index.paths()[i];
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.size()));
    out.insert(out.end(), p.begin(), p.end());
    for (float v : index.embedding(i)) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

SearchIndex from_csix(std::span<const std::uint8_t> bytes) {
  CsixReader in(bytes);
  const auto magic = in.get_bytes(4, "magic");
  if (magic != std::string_view(kCsixMagic, 4)) throw FormatError("bad magic, not a CSIX file");
  const auto version = in.get<std::uint32_t>("version");
  if (version != kCsixVersion) {
    throw FormatError("unsupported CSIX version " + std::to_string(version));
  }
  const auto dim = in.get<std::uint32_t>("dimension");
  if (dim == 0) throw FormatError("CSIX dimension must be at least 1");
  const auto count = in.get<std::uint64_t>("record_count");
  if (count == 0) throw FormatError("index holds no images");
  const auto model_len = in.get<std::uint32_t>("model_id_len");
  std::string model_id(in.get_bytes(model_len, "model_id"));
  if (model_id.empty()) throw FormatError("model_id must not be empty");

  // Each record needs at least 4 + 4 * dim bytes; reject impossible counts
  // before reserving.
  const std::uint64_t min_record = 4 + 4ull * dim;
  if (count > in.remaining() / min_record) {
    throw FormatError("truncated CSIX file reading " + std::to_string(count) +
                      " records at offset " + std::to_string(in.position()) +
                      ": expected at least " + std::to_string(count * min_record) + " bytes, " +
                      std::to_string(in.remaining()) + " available");
  }
  std::vector<std::string> paths;
  std::vector<float> flat(static_cast<std::size_t>(count) * dim);
  paths.reserve(static_cast<std::size_t>(count));
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto len = in.get<std::uint32_t>("path_len");
    paths.emplace_back(in.get_bytes(len, "path"));
    in.get_floats(flat.data() + r * dim, dim, "embedding");
  }
  if (in.remaining() != 0) {
    throw FormatError("trailing " + std::to_string(in.remaining()) + " bytes after record " +
                      std::to_string(count) + " at offset " + std::to_string(in.position()));
  }
  try {
    return SearchIndex({std::move(model_id), dim}, std::move(paths), std::move(flat), "");
  } catch (const InvariantError& e) {
    throw FormatError(e.what());
  }
}

void save_json(const SearchIndex& index, const fs::path& file) {
  if (index.empty()) throw EmptyIndexError("refusing to save an empty index");
  write_file_atomic(file, as_bytes(to_json(index)));
}

void save_binary(const SearchIndex& index, const fs::path& file) {
  if (index.empty()) throw EmptyIndexError("refusing to save an empty index");
  write_file_atomic(file, to_csix(index));
}

SearchIndex load_json(const fs::path& file) {
  const auto bytes = read_file(file);
  return from_json(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

SearchIndex load_binary(const fs::path& file) { return from_csix(read_file(file)); }

SearchIndex load_index(const fs::path& file) {
  const auto bytes = read_file(file);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kCsixMagic, 4) == 0) return from_csix(bytes);
  return from_json(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

void convert(const fs::path& json_file, const fs::path& binary_file) {
  save_binary(load_json(json_file), binary_file);
}

}  // namespace clipse
