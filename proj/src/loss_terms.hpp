#pragma once

#include <optional>
#include <vector>

#include "prgbd/losses.hpp"

namespace prgbd::detail {

/// Where a term writes its weighted gradient and (for the c field) curvature.
struct GradientSink {
  double* c = nullptr;
  double* curvature = nullptr;
};

/// Photometric loss of the current frame; with a sink, adds weight * gradient.
std::optional<double> photometric_terms(const Image& current, const std::vector<PhotometricSource>& sources,
                                        const DepthField& d_c, const CameraIntrinsics& k, double weight,
                                        const GradientSink* sink);

inline constexpr double kDepthCurvatureFloor = 1e-3;
inline constexpr double kPhotometricCurvatureFloor = 1e-3;
inline constexpr double kSmoothnessCurvatureFloor = 1e-4;

}  // namespace prgbd::detail
