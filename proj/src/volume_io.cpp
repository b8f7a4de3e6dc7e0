#include "lrp3d/volume_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "binary_io.hpp"

namespace lrp3d {

namespace {

constexpr std::array<char, 4> kVolumeMagic = {'V', 'O', 'L', '1'};
constexpr std::uint8_t kDtypeF32 = 0;
constexpr std::uint8_t kDtypeU8 = 1;

void put_header(detail::ByteWriter& out, const Shape& shape, std::uint8_t dtype) {
  if (shape.empty() || shape.size() > 5) throw DimensionError("volume rank must be 1..5, got " + shape_string(shape));
  out.put_bytes(kVolumeMagic.data(), kVolumeMagic.size());
  out.put(static_cast<std::uint8_t>(shape.size()));
  for (Index d : shape) {
    if (d <= 0 || d > std::numeric_limits<std::uint32_t>::max())
      throw DimensionError("volume dimension out of range in " + shape_string(shape));
    out.put(static_cast<std::uint32_t>(d));
  }
  out.put(dtype);
}

// Spatial slice of a (D,H,W) or (1,D,H,W) volume as a row-major H x W block.
struct SliceView {
  Index h = 0, w = 0;
  const float* data = nullptr;
};

SliceView slice_of(const TensorF& vol, Index depth) {
  Shape s = vol.shape();
  if (s.size() == 4 && s[0] == 1) s.erase(s.begin());
  if (s.size() != 3) throw DimensionError("slice export needs a (D,H,W) volume, got " + shape_string(vol.shape()));
  if (depth < 0 || depth >= s[0])
    throw DimensionError("depth index " + std::to_string(depth) + " out of range [0, " + std::to_string(s[0]) + ")");
  return {s[1], s[2], vol.data() + depth * s[1] * s[2]};
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))); }

}  // namespace

std::vector<std::uint8_t> encode_volume(const TensorF& t) {
  detail::ByteWriter out;
  put_header(out, t.shape(), kDtypeF32);
  out.put_bytes(t.data(), static_cast<std::size_t>(t.size()) * sizeof(float));
  return out.take();
}

std::vector<std::uint8_t> encode_volume(const Mask& m) {
  if (m.size() != shape_size(m.shape)) throw DimensionError("mask data does not match its shape");
  detail::ByteWriter out;
  put_header(out, m.shape, kDtypeU8);
  out.put_bytes(m.data.data(), m.data.size());
  return out.take();
}

Volume decode_volume(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader in(bytes, "volume file");
  std::array<char, 4> magic{};
  in.get_bytes(magic.data(), magic.size(), "magic");
  if (magic != kVolumeMagic) throw FormatError("volume file: bad magic", 0);
  const auto rank = in.get<std::uint8_t>("rank");
  if (rank == 0 || rank > 5) in.fail("unsupported rank " + std::to_string(rank));
  Shape shape;
  std::uint64_t elems = 1;
  for (std::uint8_t r = 0; r < rank; ++r) {
    const auto d = in.get<std::uint32_t>("dims");
    if (d == 0) in.fail("zero dimension on axis " + std::to_string(r));
    if (elems > std::numeric_limits<std::uint64_t>::max() / d) in.fail("dimension product overflows");
    elems *= d;
    shape.push_back(static_cast<Index>(d));
  }
  const auto dtype = in.get<std::uint8_t>("dtype");
  if (dtype == kDtypeF32) {
    if (elems > in.remaining() / sizeof(float))
      throw FormatError("volume file: truncated payload, dims " + shape_string(shape) + " need " +
                            std::to_string(elems * sizeof(float)) + " bytes, " + std::to_string(in.remaining()) +
                            " present",
                        in.offset());
    TensorF t(shape);
    in.get_bytes(t.data(), static_cast<std::size_t>(elems) * sizeof(float), "payload");
    if (in.remaining()) in.fail("trailing bytes after payload");
    return t;
  }
  if (dtype == kDtypeU8) {
    if (elems > in.remaining())
      throw FormatError("volume file: truncated payload, dims " + shape_string(shape) + " need " +
                            std::to_string(elems) + " bytes, " + std::to_string(in.remaining()) + " present",
                        in.offset());
    Mask m(shape);
    const auto start = in.offset();
    in.get_bytes(m.data.data(), m.data.size(), "payload");
    for (std::size_t i = 0; i < m.data.size(); ++i)
      if (m.data[i] > 1) throw FormatError("volume file: mask value " + std::to_string(m.data[i]) + " is not 0/1", start + i);
    if (in.remaining()) in.fail("trailing bytes after payload");
    return m;
  }
  throw FormatError("volume file: unknown dtype " + std::to_string(dtype), in.offset() - 1);
}

void write_volume(const TensorF& t, const std::string& path) { detail::write_file(path, encode_volume(t)); }
void write_volume(const Mask& m, const std::string& path) { detail::write_file(path, encode_volume(m)); }
Volume read_volume(const std::string& path) { return decode_volume(detail::read_file(path)); }

TensorF read_tensor(const std::string& path) {
  Volume v = read_volume(path);
  if (auto* t = std::get_if<TensorF>(&v)) return std::move(*t);
  throw FormatError(path + ": expected an f32 volume, found a mask", 4);
}

Mask read_mask(const std::string& path) {
  Volume v = read_volume(path);
  if (auto* m = std::get_if<Mask>(&v)) return std::move(*m);
  throw FormatError(path + ": expected a u8 mask volume, found f32 data", 4);
}

Image render_signed_slice(const TensorF& vol, Index depth) {
  const SliceView s = slice_of(vol, depth);
  Image img{s.w, s.h, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(s.w * s.h * 3), 0)};
  double peak = 0.0;
  for (Index i = 0; i < s.h * s.w; ++i) peak = std::max(peak, std::abs(static_cast<double>(s.data[i])));
  if (peak == 0.0) return img;
  for (Index i = 0; i < s.h * s.w; ++i) {
    const double t = static_cast<double>(s.data[i]) / peak;
    auto* px = &img.pixels[static_cast<std::size_t>(i * 3)];
    if (t > 0) px[0] = to_byte(255.0 * t);
    if (t < 0) px[2] = to_byte(-255.0 * t);
  }
  return img;
}

Image render_gray_slice(const TensorF& vol, Index depth) {
  const SliceView s = slice_of(vol, depth);
  Image img{s.w, s.h, 1, std::vector<std::uint8_t>(static_cast<std::size_t>(s.w * s.h), 0)};
  if (s.h * s.w == 0) return img;
  const auto [lo_it, hi_it] = std::minmax_element(s.data, s.data + s.h * s.w);
  const double lo = *lo_it, hi = *hi_it;
  if (hi == lo) return img;
  for (Index i = 0; i < s.h * s.w; ++i)
    img.pixels[static_cast<std::size_t>(i)] = to_byte(255.0 * (static_cast<double>(s.data[i]) - lo) / (hi - lo));
  return img;
}

Image render_overlay_slice(const TensorF& heat, const TensorF& base, Index depth) {
  const Image h = render_signed_slice(heat, depth);
  const Image g = render_gray_slice(base, depth);
  if (h.width != g.width || h.height != g.height)
    throw DimensionError("overlay: heatmap slice " + std::to_string(h.height) + "x" + std::to_string(h.width) +
                         " vs base slice " + std::to_string(g.height) + "x" + std::to_string(g.width));
  Image out = h;
  for (Index i = 0; i < h.width * h.height; ++i)
    for (int c = 0; c < 3; ++c) {
      auto& px = out.pixels[static_cast<std::size_t>(i * 3 + c)];
      px = static_cast<std::uint8_t>((px + g.pixels[static_cast<std::size_t>(i)]) / 2);
    }
  return out;
}

std::vector<std::uint8_t> encode_pnm(const Image& img) {
  detail::ByteWriter out;
  out.put_string((img.channels == 3 ? "P6\n" : "P5\n") + std::to_string(img.width) + " " +
                 std::to_string(img.height) + "\n255\n");
  out.put_bytes(img.pixels.data(), img.pixels.size());
  return out.take();
}

void write_image(const Image& img, const std::string& path) { detail::write_file(path, encode_pnm(img)); }

void export_slice(const TensorF& vol, Index depth, const std::string& path, SliceMode mode) {
  write_image(mode == SliceMode::Signed ? render_signed_slice(vol, depth) : render_gray_slice(vol, depth), path);
}

void export_overlay(const TensorF& heat, const TensorF& base, Index depth, const std::string& path) {
  write_image(render_overlay_slice(heat, base, depth), path);
}

}  // namespace lrp3d
