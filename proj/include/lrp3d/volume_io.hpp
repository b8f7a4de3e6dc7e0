#ifndef LRP3D_VOLUME_IO_HPP
#define LRP3D_VOLUME_IO_HPP

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "lrp3d/tensor.hpp"

namespace lrp3d {

// VOL1 volume file, little-endian:
//   "VOL1" | u8 rank | u32 dims[rank] | u8 dtype (0 = f32, 1 = u8 mask) | row-major payload

using Volume = std::variant<TensorF, Mask>;

std::vector<std::uint8_t> encode_volume(const TensorF& t);
std::vector<std::uint8_t> encode_volume(const Mask& m);
Volume decode_volume(const std::vector<std::uint8_t>& bytes);

void write_volume(const TensorF& t, const std::string& path);
void write_volume(const Mask& m, const std::string& path);
Volume read_volume(const std::string& path);

/// read_volume, requiring the given dtype.
TensorF read_tensor(const std::string& path);
Mask read_mask(const std::string& path);

/// 8-bit raster; channels 1 (PGM, P5) or 3 (PPM, P6).
struct Image {
  Index width = 0;
  Index height = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(Index x, Index y, int c = 0) const {
    return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
  bool operator==(const Image&) const = default;
};

/// Signed heatmap: positive values ramp black -> red, negative black -> blue,
/// scaled by max|slice|. `vol` is (D,H,W) or (1,D,H,W).
Image render_signed_slice(const TensorF& vol, Index depth);

/// Grayscale, min-max scaled; a constant slice renders black.
Image render_gray_slice(const TensorF& vol, Index depth);

/// Signed heatmap blended 50/50 over the grayscale base slice.
Image render_overlay_slice(const TensorF& heat, const TensorF& base, Index depth);

std::vector<std::uint8_t> encode_pnm(const Image& img);
void write_image(const Image& img, const std::string& path);

enum class SliceMode { Signed, Unsigned };

/// Signed -> .ppm heatmap, Unsigned -> .pgm grayscale.
void export_slice(const TensorF& vol, Index depth, const std::string& path, SliceMode mode);
void export_overlay(const TensorF& heat, const TensorF& base, Index depth, const std::string& path);

}  // namespace lrp3d

#endif  // LRP3D_VOLUME_IO_HPP
