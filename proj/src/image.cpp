#include "spheresfm/image.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>

#include <jpeglib.h>
#include <png.h>

#include "spheresfm/error.hpp"

namespace spheresfm {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) throw Error(ErrorCategory::IoError, "cannot open " + path.string());
  return f;
}

Raster load_png(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCategory::IoError, "libpng initialisation failed");
  }
  Raster out;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCategory::IoError, "corrupt PNG " + path.string());
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  out.width = int(png_get_image_width(png, info));
  out.height = int(png_get_image_height(png, info));
  out.pixels.resize(std::size_t(out.width) * out.height);
  rows.resize(out.height);
  for (int y = 0; y < out.height; ++y) {
    rows[y] = reinterpret_cast<png_bytep>(&out.pixels[std::size_t(y) * out.width]);
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

struct JpegErrorMgr {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  std::longjmp(err->jump, 1);
}

Raster load_jpeg(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  jpeg_decompress_struct cinfo{};
  JpegErrorMgr err{};
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_exit;
  Raster out;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw Error(ErrorCategory::IoError, "corrupt JPEG " + path.string());
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out.width = int(cinfo.output_width);
  out.height = int(cinfo.output_height);
  out.pixels.resize(std::size_t(out.width) * out.height);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = reinterpret_cast<JSAMPROW>(&out.pixels[std::size_t(cinfo.output_scanline) * out.width]);
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

void write_png(int width, int height, int color_type, int channels, const std::uint8_t* data,
               const std::filesystem::path& path) {
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCategory::IoError, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCategory::IoError, "failed writing " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, png_uint_32(width), png_uint_32(height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(data + std::size_t(y) * width * channels));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

static_assert(sizeof(Rgb) == 3, "Rgb must be tightly packed");

EquirectImage::EquirectImage(Raster raster) : raster_(std::move(raster)) {
  size().validate();
  if (raster_.pixels.size() != std::size_t(raster_.width) * raster_.height) {
    throw Error(ErrorCategory::InvalidArgument, "pixel count does not match image size");
  }
}

Eigen::Vector3f sample_bilinear(const EquirectImage& img, const PixelCoord& p) {
  const int w = img.size().width;
  const int h = img.size().height;
  const double fx = p.x - 0.5;
  const double fy = std::clamp(p.y - 0.5, 0.0, double(h - 1));
  const double x0f = std::floor(fx);
  const double y0f = std::floor(fy);
  const float tx = float(fx - x0f);
  const float ty = float(fy - y0f);
  auto wrap = [w](long long i) { return int(((i % w) + w) % w); };
  const int x0 = wrap((long long)x0f);
  const int x1 = wrap((long long)x0f + 1);
  const int y0 = int(y0f);
  const int y1 = std::min(y0 + 1, h - 1);

  auto px = [&](int x, int y) {
    const Rgb& c = img.at(x, y);
    return Eigen::Vector3f(c.r, c.g, c.b);
  };
  const Eigen::Vector3f top = (1.0f - tx) * px(x0, y0) + tx * px(x1, y0);
  const Eigen::Vector3f bottom = (1.0f - tx) * px(x0, y1) + tx * px(x1, y1);
  return (1.0f - ty) * top + ty * bottom;
}

Rgb to_rgb(const Eigen::Vector3f& c) {
  auto q = [](float v) { return std::uint8_t(std::clamp(std::lround(v), 0L, 255L)); };
  return {q(c.x()), q(c.y()), q(c.z())};
}

Raster load_raster(const std::filesystem::path& path) {
  unsigned char sig[8] = {};
  {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCategory::IoError, "cannot open " + path.string());
    in.read(reinterpret_cast<char*>(sig), sizeof(sig));
  }
  if (png_sig_cmp(sig, 0, 8) == 0) return load_png(path);
  if (sig[0] == 0xFF && sig[1] == 0xD8) return load_jpeg(path);
  throw Error(ErrorCategory::IoError, "unsupported image format: " + path.string());
}

EquirectImage load_equirect(const std::filesystem::path& path) {
  return EquirectImage(load_raster(path));
}

void save_png(const Raster& raster, const std::filesystem::path& path) {
  write_png(raster.width, raster.height, PNG_COLOR_TYPE_RGB, 3,
            reinterpret_cast<const std::uint8_t*>(raster.pixels.data()), path);
}

void save_png_gray(int width, int height, const std::vector<std::uint8_t>& gray,
                   const std::filesystem::path& path) {
  write_png(width, height, PNG_COLOR_TYPE_GRAY, 1, gray.data(), path);
}

}  // namespace spheresfm
