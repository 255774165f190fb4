#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace clipse::image {

enum class Format { png, jpeg, unknown };

struct RasterInfo {
  Format format = Format::unknown;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
};

Format sniff_format(std::span<const std::uint8_t> bytes) noexcept;

// Fully decodes the image to validate it. Throws DecodeError for unsupported
// formats and corrupt data.
RasterInfo decode(std::span<const std::uint8_t> bytes);

// Encodes an 8-bit RGB raster as PNG. `rgb` holds width * height * 3 bytes.
std::vector<std::uint8_t> encode_png_rgb(std::uint32_t width, std::uint32_t height,
                                         std::span<const std::uint8_t> rgb);

// MIME type for a file name, by extension. Falls back to application/octet-stream.
std::string_view content_type_for(std::string_view path);

}  // namespace clipse::image
