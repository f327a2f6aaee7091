#include "dass/imageio.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include "dass/errors.hpp"

namespace dass {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

uint8_t to_u8(float v) {
  float q = (v + 1.0f) * 0.5f * 255.0f;
  q = std::round(q);
  return static_cast<uint8_t>(q < 0 ? 0 : (q > 255 ? 255 : q));
}

void write_png(const std::string& path, int w, int h, int channels,
               const std::vector<uint8_t>& rows_data) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("png write: cannot open " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png write failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, w, h, 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y)
    rows[y] = const_cast<png_bytep>(rows_data.data() + static_cast<size_t>(y) * w * channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void read_png(const std::string& path, int& w, int& h, int& channels,
              std::vector<uint8_t>& out) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("png read: cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png read failed: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  w = static_cast<int>(png_get_image_width(png, info));
  h = static_cast<int>(png_get_image_height(png, info));
  int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  channels = static_cast<int>(png_get_channels(png, info));
  out.resize(static_cast<size_t>(w) * h * channels);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y)
    rows[y] = out.data() + static_cast<size_t>(y) * w * channels;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
}

}  // namespace

void write_image_png(const ImageTensor& img, const std::string& path) {
  if (img.n != 1 || img.c != 3) throw ContractError("write_image_png: expected 1x3xHxW");
  std::vector<uint8_t> data(static_cast<size_t>(img.h) * img.w * 3);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < 3; ++c)
        data[(static_cast<size_t>(y) * img.w + x) * 3 + c] = to_u8(img.at(0, c, y, x));
  write_png(path, img.w, img.h, 3, data);
}

ImageTensor read_image_png(const std::string& path) {
  int w, h, ch;
  std::vector<uint8_t> data;
  read_png(path, w, h, ch, data);
  if (ch < 3) throw DataError("read_image_png: not an RGB image: " + path);
  ImageTensor img(1, 3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(0, c, y, x) =
            data[(static_cast<size_t>(y) * w + x) * ch + c] / 255.0f * 2.0f - 1.0f;
  return img;
}

void write_label_png(const LabelMap& label, const std::string& path) {
  write_png(path, label.w, label.h, 1, label.v);
}

LabelMap read_label_png(const std::string& path) {
  int w, h, ch;
  std::vector<uint8_t> data;
  read_png(path, w, h, ch, data);
  if (ch != 1) throw DataError("read_label_png: not a single-channel image: " + path);
  LabelMap label(h, w);
  label.v = std::move(data);
  return label;
}

}  // namespace dass
