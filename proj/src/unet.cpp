#include "lrp3d/unet.hpp"

#include <json.hpp>

#include <array>
#include <cmath>

#include "binary_io.hpp"
#include "lrp3d/rng.hpp"

namespace lrp3d {

namespace {

using json = nlohmann::json;

constexpr std::array<char, 4> kWeightsMagic = {'N', 'N', 'W', '1'};

template <typename Scalar>
Conv3d<Scalar> make_conv(Index cin, Index cout, Index k, int padding) {
  return {Tensor<Scalar>(Shape{cout, cin, k, k, k}), Tensor<Scalar>(Shape{cout}), 1, padding};
}

template <typename Scalar>
BatchNorm<Scalar> make_bn(Index c) {
  return {Tensor<Scalar>::constant(Shape{c}, Scalar(1)), Tensor<Scalar>(Shape{c}), Tensor<Scalar>(Shape{c}),
          Tensor<Scalar>::constant(Shape{c}, Scalar(1)), 1e-5};
}

template <typename Scalar>
void conv_block(Network<Scalar>& net, Index cin, Index cout) {
  net.layers.push_back(make_conv<Scalar>(cin, cout, 3, 1));
  net.layers.push_back(make_bn<Scalar>(cout));
  net.layers.push_back(ReLU{});
}

struct ParsedWeights {
  std::string config_json;
  std::vector<NamedTensor<float>> tensors;
};

ParsedWeights parse_weights(const detail::Bytes& bytes) {
  detail::ByteReader in(bytes, "weights file");
  std::array<char, 4> magic{};
  in.get_bytes(magic.data(), magic.size(), "magic");
  if (magic != kWeightsMagic) throw FormatError("weights file: bad magic", 0);
  ParsedWeights out;
  const auto json_len = in.get<std::uint32_t>("config length");
  out.config_json = in.get_string(json_len, "config json");
  const auto count = in.get<std::uint32_t>("tensor count");
  // every tensor needs at least name length + rank bytes
  if (static_cast<std::uint64_t>(count) * 3 > in.remaining()) in.fail("tensor count exceeds file size");
  out.tensors.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto name_len = in.get<std::uint16_t>("tensor name length");
    std::string name = in.get_string(name_len, "tensor name");
    const auto rank = in.get<std::uint8_t>("tensor rank");
    if (rank > 5) in.fail("tensor '" + name + "' has rank " + std::to_string(rank));
    Shape shape;
    std::uint64_t elems = 1;
    for (std::uint8_t r = 0; r < rank; ++r) {
      const auto d = in.get<std::uint32_t>("tensor dim");
      if (d == 0) in.fail("tensor '" + name + "' has a zero dimension");
      elems *= d;
      if (elems > in.remaining()) in.fail("tensor '" + name + "' dims exceed file size");
      shape.push_back(static_cast<Index>(d));
    }
    Tensor<float> tensor(shape);
    in.get_bytes(tensor.data(), static_cast<std::size_t>(elems) * sizeof(float), "tensor data");
    out.tensors.push_back({std::move(name), std::move(tensor)});
  }
  if (in.remaining() != 0) in.fail("trailing bytes after last tensor");
  return out;
}

void assign_tensors(Network<float>& net, std::vector<NamedTensor<float>>& tensors) {
  std::size_t i = 0;
  for_each_state_tensor<float>(net, [&](const std::string& name, Tensor<float>& target) {
    if (i >= tensors.size()) throw WiringError("weights file is missing tensor '" + name + "'");
    auto& src = tensors[i++];
    if (src.name != name)
      throw WiringError("tensor '" + src.name + "' found where '" + name + "' was expected");
    if (src.tensor.shape() != target.shape())
      throw WiringError("tensor '" + name + "' has shape " + shape_string(src.tensor.shape()) + ", network expects " +
                        shape_string(target.shape()));
    target = std::move(src.tensor);
  });
  if (i != tensors.size()) throw WiringError("unexpected extra tensor '" + tensors[i].name + "'");
}

}  // namespace

std::string UNetConfig::to_json() const {
  json j;
  j["in_channels"] = in_channels;
  j["out_channels"] = out_channels;
  j["depth"] = depth;
  j["base_filters"] = base_filters;
  j["input_shape"] = input_shape;
  return j.dump();
}

UNetConfig UNetConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config is not valid JSON: ") + e.what());
  }
  UNetConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "in_channels") c.in_channels = value.get<Index>();
      else if (key == "out_channels") c.out_channels = value.get<Index>();
      else if (key == "depth") c.depth = value.get<Index>();
      else if (key == "base_filters") c.base_filters = value.get<Index>();
      else if (key == "input_shape") c.input_shape = value.get<Shape>();
      else throw ConfigError("unknown model config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

void UNetConfig::validate() const {
  if (depth < 1) throw ConfigError("depth must be >= 1, got " + std::to_string(depth));
  if (in_channels < 1 || out_channels < 1 || base_filters < 1)
    throw ConfigError("channel counts and base_filters must be positive");
  if (input_shape.empty()) return;
  if (input_shape.size() != 4) throw ConfigError("input_shape must be (C,D,H,W), got " + shape_string(input_shape));
  if (input_shape[0] != in_channels)
    throw ConfigError("input_shape has " + std::to_string(input_shape[0]) + " channels, in_channels is " +
                      std::to_string(in_channels));
  Shape spatial = spatial_of(input_shape);
  for (Index level = 1; level < depth; ++level) {
    for (std::size_t a = 0; a < 3; ++a) {
      if (spatial[a] < 2)
        throw ConfigError("level " + std::to_string(level) + ": spatial extent " + std::to_string(spatial[a]) +
                          " on axis " + "DHW"[a] + " cannot be halved");
      spatial[a] = (spatial[a] + 1) / 2;
    }
  }
}

template <typename Scalar>
Network<Scalar> build_unet(const UNetConfig& config) {
  config.validate();
  Network<Scalar> net;
  net.in_channels = config.in_channels;
  auto filters = [&](Index level) { return config.base_filters << level; };

  std::vector<Index> skip_ids;
  for (Index level = 0; level < config.depth; ++level) {
    const Index cin = level == 0 ? config.in_channels : filters(level - 1);
    if (level > 0) net.layers.push_back(MaxPool3d{2});
    conv_block(net, cin, filters(level));
    conv_block(net, filters(level), filters(level));
    skip_ids.push_back(net.size() - 1);
  }
  for (Index level = config.depth - 2; level >= 0; --level) {
    const Index cin = filters(level + 1);
    const Index cout = filters(level);
    net.layers.push_back(UpConv3d<Scalar>{Tensor<Scalar>(Shape{cin, cout, 2, 2, 2}), Tensor<Scalar>(Shape{cout}), 2});
    net.layers.push_back(ReLU{});
    net.layers.push_back(Concat{skip_ids[static_cast<std::size_t>(level)]});
    conv_block(net, 2 * cout, cout);
    conv_block(net, cout, cout);
  }
  net.layers.push_back(make_conv<Scalar>(filters(0), config.out_channels, 1, 0));
  net.validate_wiring();
  return net;
}

template <typename Scalar>
void init_kaiming(Network<Scalar>& net, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& layer : net.layers) {
    if (auto* conv = std::get_if<Conv3d<Scalar>>(&layer)) {
      const auto& s = conv->weight.shape();
      const double std_dev = std::sqrt(2.0 / static_cast<double>(s[1] * s[2] * s[3] * s[4]));
      for (Index i = 0; i < conv->weight.size(); ++i) conv->weight[i] = static_cast<Scalar>(std_dev * rng.normal());
      conv->bias.vec().setZero();
    } else if (auto* up = std::get_if<UpConv3d<Scalar>>(&layer)) {
      // each output voxel sees Cin * (k/stride)^3 inputs
      const auto& s = up->weight.shape();
      const double taps = static_cast<double>(s[2] * s[3] * s[4]) / std::pow(static_cast<double>(up->stride), 3);
      const double fan_in = std::max(1.0, static_cast<double>(s[0]) * taps);
      const double std_dev = std::sqrt(2.0 / fan_in);
      for (Index i = 0; i < up->weight.size(); ++i) up->weight[i] = static_cast<Scalar>(std_dev * rng.normal());
      up->bias.vec().setZero();
    } else if (auto* bn = std::get_if<BatchNorm<Scalar>>(&layer)) {
      bn->scale.vec().setOnes();
      bn->shift.vec().setZero();
      bn->running_mean.vec().setZero();
      bn->running_var.vec().setOnes();
    }
  }
}

std::vector<std::uint8_t> encode_weights(const Network<float>& net, const UNetConfig& config) {
  detail::ByteWriter out;
  out.put_bytes(kWeightsMagic.data(), kWeightsMagic.size());
  const std::string cfg = config.to_json();
  out.put(static_cast<std::uint32_t>(cfg.size()));
  out.put_string(cfg);
  std::uint32_t count = 0;
  for_each_state_tensor<float>(net, [&](const std::string&, const Tensor<float>&) { ++count; });
  out.put(count);
  for_each_state_tensor<float>(net, [&](const std::string& name, const Tensor<float>& t) {
    out.put(static_cast<std::uint16_t>(name.size()));
    out.put_string(name);
    out.put(static_cast<std::uint8_t>(t.rank()));
    for (Index d : t.shape()) out.put(static_cast<std::uint32_t>(d));
    out.put_bytes(t.data(), static_cast<std::size_t>(t.size()) * sizeof(float));
  });
  return out.take();
}

LoadedModel decode_weights(const std::vector<std::uint8_t>& bytes) {
  ParsedWeights parsed = parse_weights(bytes);
  LoadedModel model;
  try {
    model.config = UNetConfig::from_json(parsed.config_json);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("weights file config echo: ") + e.what(), 8);
  }
  model.net = build_unet<float>(model.config);
  assign_tensors(model.net, parsed.tensors);
  return model;
}

void save_weights(const Network<float>& net, const UNetConfig& config, const std::string& path) {
  detail::write_file(path, encode_weights(net, config));
}

LoadedModel load_weights(const std::string& path) { return decode_weights(detail::read_file(path)); }

void load_weights_into(Network<float>& net, const std::string& path) {
  ParsedWeights parsed = parse_weights(detail::read_file(path));
  Network<float> staged = net;
  assign_tensors(staged, parsed.tensors);
  net = std::move(staged);
}

template Network<float> build_unet<float>(const UNetConfig&);
template Network<double> build_unet<double>(const UNetConfig&);
template void init_kaiming(Network<float>&, std::uint64_t);
template void init_kaiming(Network<double>&, std::uint64_t);

}  // namespace lrp3d
