#include "bbadv/image.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <string>

namespace bbadv {

namespace {

void check_dims(int channels, int width, int height) {
  if (channels <= 0 || width <= 0 || height <= 0) {
    throw ShapeError("image dimensions must be positive, got " +
                     std::to_string(channels) + "x" + std::to_string(width) +
                     "x" + std::to_string(height));
  }
}

void check_bounds(Bounds b) {
  if (!(b.lb < b.ub)) {
    throw BoundsError("bounds require lb < ub, got [" + std::to_string(b.lb) +
                      ", " + std::to_string(b.ub) + "]");
  }
}

}  // namespace

Image::Image(int channels, int width, int height, Bounds bounds)
    : channels_(channels), width_(width), height_(height), bounds_(bounds) {
  check_dims(channels, width, height);
  check_bounds(bounds);
  data_.assign(static_cast<std::size_t>(channels) * width * height, 0.0f);
}

Image::Image(int channels, int width, int height, std::vector<float> data,
             Bounds bounds)
    : channels_(channels),
      width_(width),
      height_(height),
      bounds_(bounds),
      data_(std::move(data)) {
  check_dims(channels, width, height);
  check_bounds(bounds);
  const auto want = static_cast<std::size_t>(channels) * width * height;
  if (data_.size() != want) {
    throw ShapeError("image data length " + std::to_string(data_.size()) +
                     " does not match " + std::to_string(want));
  }
}

std::size_t Image::offset(int b, int x, int y) const {
  if (b < 1 || b > channels_ || x < 1 || x > width_ || y < 1 || y > height_) {
    throw ParameterError("coordinate (" + std::to_string(b) + "," +
                         std::to_string(x) + "," + std::to_string(y) +
                         ") outside " + std::to_string(channels_) + "x" +
                         std::to_string(width_) + "x" +
                         std::to_string(height_));
  }
  return (static_cast<std::size_t>(b - 1) * width_ + (x - 1)) * height_ +
         (y - 1);
}

double l1_per_coordinate(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ShapeError("l1_per_coordinate: shape mismatch");
  double sum = 0.0;
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    sum += std::abs(static_cast<double>(da[i]) - static_cast<double>(db[i]));
  }
  return sum / static_cast<double>(da.size());
}

std::vector<PixelLoc> diff_pixels(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ShapeError("diff_pixels: shape mismatch");
  std::vector<PixelLoc> out;
  for (int x = 1; x <= a.width(); ++x) {
    for (int y = 1; y <= a.height(); ++y) {
      for (int c = 1; c <= a.channels(); ++c) {
        // Bitwise comparison: perturbations are explicit, so any difference
        // counts, including -0.0 vs 0.0.
        if (std::bit_cast<std::uint32_t>(a.at(c, x, y)) !=
            std::bit_cast<std::uint32_t>(b.at(c, x, y))) {
          out.push_back({x, y});
          break;
        }
      }
    }
  }
  return out;
}

bool validate(const Image& img) {
  const Bounds b = img.bounds();
  for (float v : img.data()) {
    if (!(v >= b.lb && v <= b.ub)) return false;
  }
  return true;
}

}  // namespace bbadv
