#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <png.h>

#include "mvre/error.hpp"
#include "mvre/numkit/tensor.hpp"

namespace mvre::geotile {

/// H x W x C image (HWC, row-major) with channel values in [0, 1].
struct ImageTensor {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 3;
  std::vector<double> data;

  ImageTensor() = default;
  ImageTensor(std::size_t h, std::size_t w, std::size_t c = 3, double fill = 0.0)
      : height(h), width(w), channels(c), data(h * w * c, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t c) { return data[(y * width + x) * channels + c]; }
  double at(std::size_t y, std::size_t x, std::size_t c) const { return data[(y * width + x) * channels + c]; }

  bool in_unit_range() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
  }

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;
};

/// Decodes PNG bytes to RGB with channels scaled by 1/255.
inline ImageTensor decode_png(std::span<const unsigned char> bytes) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    throw MalformedImageError(std::string("png decode: ") + img.message);
  img.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> raw(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, raw.data(), 0, nullptr)) {
    png_image_free(&img);
    throw MalformedImageError(std::string("png decode: ") + img.message);
  }
  ImageTensor out(img.height, img.width, 3);
  for (std::size_t i = 0; i < raw.size(); ++i) out.data[i] = raw[i] / 255.0;
  return out;
}

/// Encodes an RGB image as 8-bit PNG (values rounded to the nearest 1/255).
inline std::vector<unsigned char> encode_png(const ImageTensor& image) {
  if (image.channels != 3) throw InvalidArgument("encode_png expects 3 channels");
  std::vector<unsigned char> raw(image.data.size());
  for (std::size_t i = 0; i < raw.size(); ++i)
    raw[i] = static_cast<unsigned char>(std::lround(std::clamp(image.data[i], 0.0, 1.0) * 255.0));
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, raw.data(), 0, nullptr))
    throw Error(std::string("png encode: ") + img.message);
  std::vector<unsigned char> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, raw.data(), 0, nullptr))
    throw Error(std::string("png encode: ") + img.message);
  out.resize(size);
  return out;
}

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes via a temporary sibling and rename, so readers never observe a
/// partially written file.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::filesystem::create_directories(path.parent_path());
  static std::atomic<std::uint64_t> counter{0};
  auto tmp = path;
  tmp += ".tmp" + std::to_string(counter++) + "." + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void write_png(const std::filesystem::path& path, const ImageTensor& image) {
  write_file_atomic(path, encode_png(image));
}

inline ImageTensor read_png(const std::filesystem::path& path) { return decode_png(read_file_bytes(path)); }

/// Bilinear resampling with pixel-center alignment; identity when sizes match.
inline ImageTensor resize(const ImageTensor& src, std::size_t height, std::size_t width) {
  if (src.height == height && src.width == width) return src;
  ImageTensor out(height, width, src.channels);
  const double sy = static_cast<double>(src.height) / static_cast<double>(height);
  const double sx = static_cast<double>(src.width) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < src.channels; ++c) {
        const double top = src.at(y0, x0, c) * (1 - wx) + src.at(y0, x1, c) * wx;
        const double bottom = src.at(y1, x0, c) * (1 - wx) + src.at(y1, x1, c) * wx;
        out.at(y, x, c) = top * (1 - wy) + bottom * wy;
      }
    }
  }
  return out;
}

/// Stacks equally sized images into an [N, H, W, C] batch tensor.
inline numkit::Tensor stack_images(std::span<const ImageTensor> images) {
  if (images.empty()) throw InvalidArgument("stack_images: no images");
  const auto& first = images.front();
  std::vector<double> data;
  data.reserve(images.size() * first.data.size());
  for (const auto& im : images) {
    if (im.height != first.height || im.width != first.width || im.channels != first.channels)
      throw ShapeError("stack_images: images differ in size");
    data.insert(data.end(), im.data.begin(), im.data.end());
  }
  return numkit::Tensor({images.size(), first.height, first.width, first.channels}, std::move(data));
}

}  // namespace mvre::geotile
