#ifndef LRP3D_SYNTHETIC_HPP
#define LRP3D_SYNTHETIC_HPP

#include <array>
#include <cstdint>
#include <string>

#include "lrp3d/trainer.hpp"

namespace lrp3d {

inline const Shape kDefaultCaseShape = {6, 19, 48, 48};

/// Pseudo-modality names, in channel order.
inline constexpr std::array<const char*, 6> kModalityNames = {"ADC", "MTT", "rCBF", "rCBV", "Tmax", "TTP"};

inline constexpr double kMinLesionFraction = 0.005;
inline constexpr double kMaxLesionFraction = 0.10;

/// Smooth background noise per channel with 1-2 ellipsoid lesions that shift
/// each channel by its own offset. Values are clamped to [0, 1]; the lesion
/// occupies between 0.5% and 10% of the voxels. Spatial dims must be >= 8.
Case gen_synthetic_case(std::uint64_t seed, Index index, const Shape& shape = kDefaultCaseShape);
Dataset gen_synthetic(std::uint64_t seed, Index n_cases, const Shape& shape = kDefaultCaseShape);

/// Dataset directory layout: <id>_x.vol (f32) and <id>_mask.vol (u8) per case,
/// plus cases.txt listing the ids in order.
void save_dataset(const Dataset& data, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace lrp3d

#endif  // LRP3D_SYNTHETIC_HPP
