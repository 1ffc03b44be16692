#include "bbadv/perturb.hpp"

#include <algorithm>
#include <string>

namespace bbadv {

Image pert(const Image& img, double p, PixelLoc loc) {
  if (loc.x < 1 || loc.x > img.width() || loc.y < 1 || loc.y > img.height()) {
    throw ParameterError("pert: pixel (" + std::to_string(loc.x) + "," +
                         std::to_string(loc.y) + ") outside " +
                         std::to_string(img.width()) + "x" +
                         std::to_string(img.height()));
  }
  Image out = img;
  for (int b = 1; b <= img.channels(); ++b) {
    out.set(b, loc.x, loc.y,
            static_cast<float>(p * pert_sign(img.at(b, loc.x, loc.y))));
  }
  return out;
}

Image pert_set(const Image& img, double p, std::span<const PixelLoc> locs) {
  if (locs.empty()) throw ParameterError("pert_set: empty location set");
  Image out = img;
  for (const PixelLoc& loc : locs) {
    if (loc.x < 1 || loc.x > img.width() || loc.y < 1 ||
        loc.y > img.height()) {
      throw ParameterError("pert_set: pixel (" + std::to_string(loc.x) + "," +
                           std::to_string(loc.y) + ") out of range");
    }
    for (int b = 1; b <= img.channels(); ++b) {
      out.set(b, loc.x, loc.y,
              static_cast<float>(p * pert_sign(img.at(b, loc.x, loc.y))));
    }
  }
  return out;
}

double cyclic(double r, double value, Bounds bounds) {
  if (!(r >= 0.0 && r <= 2.0)) {
    throw ParameterError("cyclic: r=" + std::to_string(r) +
                         " outside [0,2]");
  }
  const double lb = bounds.lb;
  const double ub = bounds.ub;
  if (!(lb <= 0.0 && 0.0 <= ub)) {
    throw BoundsError("cyclic: bounds [" + std::to_string(lb) + "," +
                      std::to_string(ub) + "] must straddle 0");
  }
  double v = r * value;
  if (v < lb) {
    v += ub - lb;
  } else if (v > ub) {
    v -= ub - lb;
  }
  // One wrap suffices for in-range inputs; the clamp only absorbs the last
  // ulp of rounding in (ub - lb).
  return std::clamp(v, lb, ub);
}

}  // namespace bbadv
