#include <png.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "cofi/data.hpp"

namespace cofi {

Image read_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    fail(std::filesystem::exists(path) ? ErrorKind::kCorruptFile : ErrorKind::kIo,
         path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    fail(ErrorKind::kCorruptFile, path.string() + ": " + msg);
  }
  Image im = Image::filled(int(png.width), int(png.height), Eigen::Vector3d::Zero());
  for (Index i = 0; i < im.rgb.rows(); ++i)
    for (int c = 0; c < 3; ++c) im.rgb(i, c) = buf[std::size_t(3 * i + c)] / 255.0;
  return im;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  image.validate();
  std::vector<png_byte> buf(std::size_t(image.rgb.rows()) * 3);
  for (Index i = 0; i < image.rgb.rows(); ++i)
    for (int c = 0; c < 3; ++c)
      buf[std::size_t(3 * i + c)] = png_byte(std::lround(std::clamp(image.rgb(i, c), 0.0, 1.0) * 255.0));
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  png.width = png_uint_32(image.width);
  png.height = png_uint_32(image.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, buf.data(), 0, nullptr)) {
    fail(ErrorKind::kIo, path.string() + ": " + png.message);
  }
}

// Pixel-centre aligned bilinear resampling with edge clamping.
Image resize_bilinear(const Image& image, int width, int height) {
  image.validate();
  if (width <= 0 || height <= 0) fail(ErrorKind::kConfig, "resize target must be positive");
  Image out = Image::filled(width, height, Eigen::Vector3d::Zero());
  const double sx = double(image.width) / width;
  const double sy = double(image.height) / height;
  for (int v = 0; v < height; ++v) {
    const double y = std::clamp((v + 0.5) * sy - 0.5, 0.0, double(image.height - 1));
    const int y0 = int(std::floor(y));
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double fy = y - y0;
    for (int u = 0; u < width; ++u) {
      const double x = std::clamp((u + 0.5) * sx - 0.5, 0.0, double(image.width - 1));
      const int x0 = int(std::floor(x));
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double fx = x - x0;
      out.pixel(u, v) = (1 - fy) * ((1 - fx) * image.pixel(x0, y0) + fx * image.pixel(x1, y0)) +
                        fy * ((1 - fx) * image.pixel(x0, y1) + fx * image.pixel(x1, y1));
    }
  }
  return out;
}

}  // namespace cofi
