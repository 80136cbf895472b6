// SPDX-License-Identifier: Apache-2.0
#include "oceanql/error.hpp"
#include "oceanql/vision/image.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>

#include <jpeglib.h>

namespace oceanql::vision {

ImageFormat sniff_format(std::string_view bytes) {
  static constexpr unsigned char kPng[] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPng, 8) == 0) return ImageFormat::Png;
  if (bytes.size() >= 3 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
      static_cast<unsigned char>(bytes[1]) == 0xD8 && static_cast<unsigned char>(bytes[2]) == 0xFF) {
    return ImageFormat::Jpeg;
  }
  return ImageFormat::Unknown;
}

namespace {

Image decode_png(std::string_view bytes) {
  png_image pi;
  std::memset(&pi, 0, sizeof pi);
  pi.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&pi, bytes.data(), bytes.size())) {
    throw FormatError(std::string("png: ") + pi.message);
  }
  pi.format = PNG_FORMAT_RGBA;
  Image img(static_cast<int>(pi.width), static_cast<int>(pi.height));
  if (!png_image_finish_read(&pi, nullptr, img.rgba.data(), 0, nullptr)) {
    std::string msg = pi.message;
    png_image_free(&pi);
    throw FormatError("png: " + msg);
  }
  return img;
}

struct JpegErr {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_fail(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErr*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

Image decode_jpeg(std::string_view bytes) {
  jpeg_decompress_struct cinfo;
  JpegErr err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_fail;
  Image img;
  // No C++ objects with destructors are constructed between setjmp and longjmp.
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw FormatError(std::string("jpeg: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  img = Image(static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height));
  std::vector<unsigned char> row(cinfo.output_width * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    unsigned char* rp = row.data();
    const int y = static_cast<int>(cinfo.output_scanline);
    jpeg_read_scanlines(&cinfo, &rp, 1);
    for (int x = 0; x < img.width; ++x) img.set(x, y, row[x * 3], row[x * 3 + 1], row[x * 3 + 2]);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

}  // namespace

Image decode_image(std::string_view bytes) {
  switch (sniff_format(bytes)) {
    case ImageFormat::Png: return decode_png(bytes);
    case ImageFormat::Jpeg: return decode_jpeg(bytes);
    case ImageFormat::Unknown: break;
  }
  throw FormatError("unsupported image format");
}

std::string encode_png(const Image& img) {
  if (img.empty()) throw FormatError("png: empty image");
  png_image pi;
  std::memset(&pi, 0, sizeof pi);
  pi.version = PNG_IMAGE_VERSION;
  pi.width = static_cast<png_uint_32>(img.width);
  pi.height = static_cast<png_uint_32>(img.height);
  pi.format = PNG_FORMAT_RGBA;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&pi, nullptr, &size, 0, img.rgba.data(), 0, nullptr)) {
    throw FormatError(std::string("png: ") + pi.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&pi, out.data(), &size, 0, img.rgba.data(), 0, nullptr)) {
    throw FormatError(std::string("png: ") + pi.message);
  }
  out.resize(size);
  return out;
}

}  // namespace oceanql::vision
