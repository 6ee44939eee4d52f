#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "attrnet/errors.hpp"
#include "attrnet/tensor.hpp"

namespace attrnet {

/// 8-bit RGB image, rows top to bottom, channels interleaved.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), rgb(w * h * 3, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return rgb[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return rgb[(y * width + x) * 3 + c]; }

  bool operator==(const Image&) const = default;
};

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError(path.string(), "cannot open file");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IngestError(path.string(), "read failed");
  return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw WriteError(path.string(), "cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw WriteError(path.string(), "write failed");
}

namespace detail {

inline bool is_png(const std::vector<std::uint8_t>& b) {
  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  return b.size() >= 8 && std::equal(sig, sig + 8, b.begin());
}

inline bool is_jpeg(const std::vector<std::uint8_t>& b) {
  return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF;
}

inline Image decode_png(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw IngestError(origin, std::string("png decode failed (") + img.message + ")");
  }
  img.format = PNG_FORMAT_RGB;
  Image out(img.width, img.height);
  if (!png_image_finish_read(&img, nullptr, out.rgb.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw IngestError(origin, "png decode failed (" + msg + ")");
  }
  return out;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

inline void jpeg_silent(j_common_ptr) {}

// Kept free of objects with destructors between setjmp and longjmp.
inline bool decode_jpeg_raw(const std::vector<std::uint8_t>& bytes, std::uint8_t** data, std::size_t* w, std::size_t* h,
                            char* message) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  err.base.output_message = jpeg_silent;
  *data = nullptr;
  if (setjmp(err.jump)) {
    std::snprintf(message, JMSG_LENGTH_MAX, "%s", err.message);
    jpeg_destroy_decompress(&cinfo);
    std::free(*data);
    *data = nullptr;
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  *w = cinfo.output_width;
  *h = cinfo.output_height;
  const std::size_t stride = *w * 3;
  *data = static_cast<std::uint8_t*>(std::malloc(stride * *h));
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = *data + cinfo.output_scanline * stride;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

inline Image decode_jpeg(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  std::uint8_t* data = nullptr;
  std::size_t w = 0, h = 0;
  char message[JMSG_LENGTH_MAX] = {0};
  if (!decode_jpeg_raw(bytes, &data, &w, &h, message)) {
    throw IngestError(origin, std::string("jpeg decode failed (") + message + ")");
  }
  Image out(w, h);
  std::copy(data, data + w * h * 3, out.rgb.begin());
  std::free(data);
  return out;
}

inline bool encode_jpeg_raw(const Image& img, int quality, std::uint8_t** buf, unsigned long* size, char* message) {
  jpeg_compress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  err.base.output_message = jpeg_silent;
  if (setjmp(err.jump)) {
    std::snprintf(message, JMSG_LENGTH_MAX, "%s", err.message);
    jpeg_destroy_compress(&cinfo);
    return false;
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, buf, size);
  cinfo.image_width = static_cast<JDIMENSION>(img.width);
  cinfo.image_height = static_cast<JDIMENSION>(img.height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  const std::size_t stride = img.width * 3;
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = const_cast<std::uint8_t*>(img.rgb.data()) + cinfo.next_scanline * stride;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  return true;
}

}  // namespace detail

/// Decodes PNG or JPEG bytes (detected by signature) to 8-bit RGB.
/// `origin` names the source in error messages.
inline Image decode_image(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  if (detail::is_png(bytes)) return detail::decode_png(bytes, origin);
  if (detail::is_jpeg(bytes)) return detail::decode_jpeg(bytes, origin);
  throw IngestError(origin, "unrecognized image format");
}

inline Image read_image(const std::filesystem::path& path) {
  return decode_image(read_file_bytes(path), path.string());
}

inline std::vector<std::uint8_t> encode_png(const Image& img) {
  png_image p{};
  p.version = PNG_IMAGE_VERSION;
  p.width = static_cast<png_uint_32>(img.width);
  p.height = static_cast<png_uint_32>(img.height);
  p.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&p, nullptr, &size, 0, img.rgb.data(), 0, nullptr)) {
    throw Error(std::string("png encode failed: ") + p.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&p, out.data(), &size, 0, img.rgb.data(), 0, nullptr)) {
    throw Error(std::string("png encode failed: ") + p.message);
  }
  out.resize(size);
  return out;
}

inline std::vector<std::uint8_t> encode_jpeg(const Image& img, int quality = 95) {
  std::uint8_t* buf = nullptr;
  unsigned long size = 0;
  char message[JMSG_LENGTH_MAX] = {0};
  const bool ok = detail::encode_jpeg_raw(img, quality, &buf, &size, message);
  std::vector<std::uint8_t> out;
  if (ok) out.assign(buf, buf + size);
  std::free(buf);
  if (!ok) throw Error(std::string("jpeg encode failed: ") + message);
  return out;
}

/// Writes PNG unless the extension is .jpg/.jpeg.
inline void write_image(const std::filesystem::path& path, const Image& img) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  write_file_bytes(path, ext == ".jpg" || ext == ".jpeg" ? encode_jpeg(img) : encode_png(img));
}

/// Bilinear resize (half-pixel centers, edge clamped, aspect not preserved)
/// followed by division by 255. Returns [3, height, width].
template <class T = float>
Tensor<T> resize_rescale(const Image& img, std::size_t out_w, std::size_t out_h) {
  if (img.width == 0 || img.height == 0) throw DimensionError("resize of an empty image");
  if (out_w == 0 || out_h == 0) throw DimensionError("resize target must be positive");
  Tensor<T> out({3, out_h, out_w});
  T* o = out.mutable_ptr();
  const std::size_t plane = out_h * out_w;
  if (out_w == img.width && out_h == img.height) {
    for (std::size_t y = 0; y < out_h; ++y)
      for (std::size_t x = 0; x < out_w; ++x)
        for (std::size_t c = 0; c < 3; ++c) o[c * plane + y * out_w + x] = static_cast<T>(img.at(x, y, c) / 255.0);
    return out;
  }
  struct Tap {
    std::size_t i0, i1;
    double t;
  };
  auto taps = [](std::size_t in, std::size_t n) {
    std::vector<Tap> v(n);
    const double scale = static_cast<double>(in) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = (static_cast<double>(i) + 0.5) * scale - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(in - 1));
      const auto i0 = static_cast<std::size_t>(std::floor(s));
      v[i] = {i0, std::min(i0 + 1, in - 1), s - static_cast<double>(i0)};
    }
    return v;
  };
  const auto tx = taps(img.width, out_w);
  const auto ty = taps(img.height, out_h);
  auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
  for (std::size_t y = 0; y < out_h; ++y) {
    for (std::size_t x = 0; x < out_w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = lerp(img.at(tx[x].i0, ty[y].i0, c), img.at(tx[x].i1, ty[y].i0, c), tx[x].t);
        const double bot = lerp(img.at(tx[x].i0, ty[y].i1, c), img.at(tx[x].i1, ty[y].i1, c), tx[x].t);
        o[c * plane + y * out_w + x] = static_cast<T>(lerp(top, bot, ty[y].t) / 255.0);
      }
    }
  }
  return out;
}

template <class T = float>
Tensor<T> resize_rescale(const Image& img, std::size_t target) {
  return resize_rescale<T>(img, target, target);
}

}  // namespace attrnet
