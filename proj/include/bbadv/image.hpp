#ifndef BBADV_IMAGE_HPP
#define BBADV_IMAGE_HPP

#include <compare>
#include <cstddef>
#include <span>
#include <vector>

#include "bbadv/errors.hpp"

namespace bbadv {

/// Coordinate bounds of the normalized image space. lb < ub always;
/// lb <= 0 <= ub additionally holds for bounds produced by normalization
/// (the cyclic update relies on it and re-checks).
struct Bounds {
  float lb = -1.0f;
  float ub = 1.0f;
};

struct ImageShape {
  int channels = 0;
  int width = 0;
  int height = 0;
  bool operator==(const ImageShape&) const = default;
};

/// Pixel location, 1-indexed: x is the column in [1..w], y the row in [1..h].
/// Ordering is (x, y) lexicographic, matching the storage order of Image.
struct PixelLoc {
  int x = 0;
  int y = 0;
  auto operator<=>(const PixelLoc&) const = default;
};

/// A channels x width x height tensor of 32-bit coordinates, stored
/// row-major over (channel, x, y). Treated as an immutable value once
/// built: attack code copies, then edits the copy.
class Image {
 public:
  Image(int channels, int width, int height, Bounds bounds);
  Image(int channels, int width, int height, std::vector<float> data,
        Bounds bounds);

  int channels() const { return channels_; }
  int width() const { return width_; }
  int height() const { return height_; }
  ImageShape shape() const { return {channels_, width_, height_}; }
  Bounds bounds() const { return bounds_; }
  std::size_t size() const { return data_.size(); }
  std::span<const float> data() const { return data_; }

  /// 1-indexed access: b in [1..channels], x in [1..width], y in [1..height].
  float at(int b, int x, int y) const { return data_[offset(b, x, y)]; }
  void set(int b, int x, int y, float v) { data_[offset(b, x, y)] = v; }

  bool same_shape(const Image& o) const {
    return channels_ == o.channels_ && width_ == o.width_ &&
           height_ == o.height_;
  }

 private:
  std::size_t offset(int b, int x, int y) const;

  int channels_;
  int width_;
  int height_;
  Bounds bounds_;
  std::vector<float> data_;
};

struct LabeledImage {
  Image image;
  int label = 0;  // 1-based class label
};

/// Mean absolute per-coordinate difference; the inner summation of the
/// perturbation metric. Accumulated in double.
double l1_per_coordinate(const Image& a, const Image& b);

/// Locations whose value differs in any channel. Comparison is bitwise,
/// order is (x, y) lexicographic.
std::vector<PixelLoc> diff_pixels(const Image& a, const Image& b);

/// True iff every coordinate lies in [lb, ub], both ends inclusive.
bool validate(const Image& img);

}  // namespace bbadv

#endif
