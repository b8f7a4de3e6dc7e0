#ifndef LRP3D_UNET_HPP
#define LRP3D_UNET_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lrp3d/network.hpp"

namespace lrp3d {

struct UNetConfig {
  Index in_channels = 6;
  Index out_channels = 1;
  Index depth = 2;
  Index base_filters = 4;
  Shape input_shape;  // (C,D,H,W); optional, validated when present

  bool operator==(const UNetConfig&) const = default;

  std::string to_json() const;
  static UNetConfig from_json(const std::string& text);

  /// Throws ConfigError naming the failing level.
  void validate() const;
};

/// Number of layers emitted by build_unet for the given depth.
constexpr Index unet_layer_count(Index depth) { return 16 * depth - 9; }

/// Per level: two (conv3 -> batchnorm -> relu) blocks; max-pool between
/// encoder levels; decoder levels up-convolve (stride 2) followed by relu,
/// concat the skip tensor and run two conv blocks; final 1x1x1 conv emits
/// logits. Parameters are zero until init_kaiming.
template <typename Scalar = float>
Network<Scalar> build_unet(const UNetConfig& config);

/// Conv and up-conv weights ~ N(0, 2/fan_in), biases zero, batch-norm at identity.
template <typename Scalar>
void init_kaiming(Network<Scalar>& net, std::uint64_t seed);

struct LoadedModel {
  UNetConfig config;
  Network<float> net;
};

std::vector<std::uint8_t> encode_weights(const Network<float>& net, const UNetConfig& config);
LoadedModel decode_weights(const std::vector<std::uint8_t>& bytes);

void save_weights(const Network<float>& net, const UNetConfig& config, const std::string& path);
LoadedModel load_weights(const std::string& path);

/// Loads tensors into an existing network; throws WiringError at the first
/// tensor whose name or shape disagrees.
void load_weights_into(Network<float>& net, const std::string& path);

}  // namespace lrp3d

#endif  // LRP3D_UNET_HPP
