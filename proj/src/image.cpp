#include "clipse/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <csetjmp>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <string>

#include <jpeglib.h>

#include "clipse/error.hpp"

namespace clipse::image {
namespace {

constexpr std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

RasterInfo decode_png(std::span<const std::uint8_t> bytes) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    std::string msg = img.message;
    png_image_free(&img);
    throw DecodeError("png: " + msg);
  }
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, pixels.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw DecodeError("png: " + msg);
  }
  RasterInfo info{Format::png, img.width, img.height};
  png_image_free(&img);
  return info;
}

struct JpegErrorManager {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

void jpeg_silent(j_common_ptr) {}

// Returns false and fills `message` on failure. No C++ objects with
// non-trivial destructors live across the setjmp.
bool decode_jpeg_raw(std::span<const std::uint8_t> bytes, RasterInfo& info,
                     char (&message)[JMSG_LENGTH_MAX]) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_exit;
  err.pub.output_message = jpeg_silent;
  JSAMPLE* row = nullptr;
  if (setjmp(err.jump)) {
    std::memcpy(message, err.message, sizeof(message));
    std::free(row);
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  jpeg_start_decompress(&cinfo);
  row = static_cast<JSAMPLE*>(
      std::malloc(static_cast<std::size_t>(cinfo.output_width) * cinfo.output_components));
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW rows[1] = {row};
    jpeg_read_scanlines(&cinfo, rows, 1);
  }
  info = RasterInfo{Format::jpeg, cinfo.output_width, cinfo.output_height};
  jpeg_finish_decompress(&cinfo);
  std::free(row);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

RasterInfo decode_jpeg(std::span<const std::uint8_t> bytes) {
  RasterInfo info;
  char message[JMSG_LENGTH_MAX] = {};
  if (!decode_jpeg_raw(bytes, info, message)) {
    throw DecodeError(std::string("jpeg: ") + message);
  }
  return info;
}

}  // namespace

Format sniff_format(std::span<const std::uint8_t> bytes) noexcept {
  if (bytes.size() >= 8 && std::equal(std::begin(kPngSignature), std::end(kPngSignature),
                                      bytes.begin())) {
    return Format::png;
  }
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) {
    return Format::jpeg;
  }
  return Format::unknown;
}

RasterInfo decode(std::span<const std::uint8_t> bytes) {
  switch (sniff_format(bytes)) {
    case Format::png:
      return decode_png(bytes);
    case Format::jpeg:
      return decode_jpeg(bytes);
    case Format::unknown:
      break;
  }
  throw DecodeError("unsupported or unrecognized image format");
}

std::vector<std::uint8_t> encode_png_rgb(std::uint32_t width, std::uint32_t height,
                                         std::span<const std::uint8_t> rgb) {
  if (rgb.size() != static_cast<std::size_t>(width) * height * 3) {
    throw std::invalid_argument("encode_png_rgb: pixel buffer size does not match extent");
  }
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = width;
  img.height = height;
  img.format = PNG_FORMAT_RGB;

  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, rgb.data(), 0, nullptr)) {
    throw Error(std::string("png encode: ") + img.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, rgb.data(), 0, nullptr)) {
    throw Error(std::string("png encode: ") + img.message);
  }
  out.resize(size);
  return out;
}

std::string_view content_type_for(std::string_view path) {
  const auto dot = path.rfind('.');
  if (dot == std::string_view::npos) return "application/octet-stream";
  std::string ext(path.substr(dot + 1));
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (ext == "png") return "image/png";
  if (ext == "jpg" || ext == "jpeg") return "image/jpeg";
  if (ext == "webp") return "image/webp";
  if (ext == "gif") return "image/gif";
  if (ext == "html" || ext == "htm") return "text/html; charset=utf-8";
  if (ext == "js" || ext == "mjs") return "text/javascript; charset=utf-8";
  if (ext == "css") return "text/css; charset=utf-8";
  if (ext == "json") return "application/json";
  if (ext == "svg") return "image/svg+xml";
  return "application/octet-stream";
}

}  // namespace clipse::image
