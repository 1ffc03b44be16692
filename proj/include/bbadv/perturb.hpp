#ifndef BBADV_PERTURB_HPP
#define BBADV_PERTURB_HPP

#include <span>

#include "bbadv/image.hpp"

namespace bbadv {

/// Sign of a coordinate value with the fixed convention sign(0) = +1
/// (zero-valued background pixels must perturb deterministically).
inline double pert_sign(float v) { return v < 0.0f ? -1.0 : 1.0; }

/// Point perturbation: a copy of img where every channel of pixel loc is
/// set to p * sign(value). p is unconstrained, so the result may leave
/// [lb, ub]; callers that need validity run the cyclic update instead.
Image pert(const Image& img, double p, PixelLoc loc);

/// pert applied independently at every location in locs; locations must be
/// distinct and in range. Order of application does not matter.
Image pert_set(const Image& img, double p, std::span<const PixelLoc> locs);

/// Wrap-around scaling: r*value, pushed back into [lb, ub] by one shift of
/// (ub - lb) if it escaped. Requires r in [0,2] and lb <= 0 <= ub, which
/// together guarantee a single shift suffices.
double cyclic(double r, double value, Bounds bounds);

}  // namespace bbadv

#endif
