#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <vector>

#include "mcsplat/scene_io.hpp"
#include "mcsplat/types.hpp"

namespace mcsplat {
namespace {

struct FileCloser {
  std::FILE* fp = nullptr;
  ~FileCloser() {
    if (fp) std::fclose(fp);
  }
};

}  // namespace

Image read_png(const std::string& path) {
  FileCloser file;
  file.fp = std::fopen(path.c_str(), "rb");
  if (!file.fp) throw runtime_failure("png: cannot open " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw runtime_failure("png: allocation failure");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw runtime_failure("png: allocation failure");
  }

  // libpng reports errors by longjmp back here; clean up, then throw.
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw runtime_failure("png: failed to decode " + path);
  }

  png_init_io(png, file.fp);
  png_read_info(png, info);

  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int color_type = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(png);
  }
  png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);  // stored big-endian; read native LE
  png_read_update_info(png, info);

  const int out_depth = png_get_bit_depth(png, info);
  const int channels = png_get_channels(png, info);
  if (channels != 3 || (out_depth != 8 && out_depth != 16)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw runtime_failure("png: unsupported bit depth " + std::to_string(out_depth) + " with " +
                          std::to_string(channels) + " channels in " + path);
  }

  const size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<unsigned char> raw(rowbytes * height);
  std::vector<png_bytep> rows(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = raw.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(static_cast<int>(width), static_cast<int>(height));
  if (out_depth == 8) {
    for (png_uint_32 y = 0; y < height; ++y) {
      const unsigned char* row = raw.data() + y * rowbytes;
      for (png_uint_32 x = 0; x < width; ++x) {
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = row[3 * x + c] / 255.0;
      }
    }
  } else {
    for (png_uint_32 y = 0; y < height; ++y) {
      const uint16_t* row = reinterpret_cast<const uint16_t*>(raw.data() + y * rowbytes);
      for (png_uint_32 x = 0; x < width; ++x) {
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = row[3 * x + c] / 65535.0;
      }
    }
  }
  return img;
}

void write_png(const std::string& path, const Image& img, int bit_depth) {
  MCSPLAT_CHECK(bit_depth == 8 || bit_depth == 16, "png: bit depth must be 8 or 16");
  MCSPLAT_CHECK(img.width > 0 && img.height > 0, "png: empty image");

  FileCloser file;
  file.fp = std::fopen(path.c_str(), "wb");
  if (!file.fp) throw runtime_failure("png: cannot write " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw runtime_failure("png: allocation failure");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw runtime_failure("png: allocation failure");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw runtime_failure("png: failed to encode " + path);
  }

  png_init_io(png, file.fp);
  png_set_IHDR(png, info, img.width, img.height, bit_depth, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);  // native LE buffer -> big-endian file

  const double maxval = bit_depth == 8 ? 255.0 : 65535.0;
  auto quantize = [&](double v) {
    v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return static_cast<long>(std::lround(v * maxval));
  };

  if (bit_depth == 8) {
    std::vector<unsigned char> row(static_cast<size_t>(img.width) * 3);
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        for (int c = 0; c < 3; ++c) {
          row[3 * static_cast<size_t>(x) + c] = static_cast<unsigned char>(quantize(img.at(y, x, c)));
        }
      }
      png_write_row(png, row.data());
    }
  } else {
    std::vector<uint16_t> row(static_cast<size_t>(img.width) * 3);
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        for (int c = 0; c < 3; ++c) {
          row[3 * static_cast<size_t>(x) + c] = static_cast<uint16_t>(quantize(img.at(y, x, c)));
        }
      }
      png_write_row(png, reinterpret_cast<png_bytep>(row.data()));
    }
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace mcsplat
