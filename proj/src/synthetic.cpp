#include "lrp3d/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "lrp3d/rng.hpp"
#include "lrp3d/volume_io.hpp"

namespace lrp3d {

namespace {

constexpr std::array<double, 6> kBaseLevel = {0.55, 0.40, 0.50, 0.45, 0.35, 0.40};
constexpr std::array<double, 6> kLesionOffset = {-0.25, 0.30, -0.30, -0.20, 0.35, 0.25};
constexpr double kBackgroundAmplitude = 0.2;
constexpr double kVoxelNoise = 0.03;
constexpr Index kCoarseStep = 6;
constexpr int kMaxAttempts = 1000;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct Ellipsoid {
  std::array<double, 3> center;
  std::array<double, 3> radius;
};

Ellipsoid draw_ellipsoid(Rng& rng, const std::array<Index, 3>& dims) {
  static constexpr std::array<double, 3> lo = {0.10, 0.08, 0.08};
  static constexpr std::array<double, 3> hi = {0.25, 0.20, 0.20};
  Ellipsoid e{};
  for (int a = 0; a < 3; ++a) {
    const double n = static_cast<double>(dims[a]);
    e.radius[a] = std::max(1.0, n * rng.uniform(lo[a], hi[a]));
    const double margin = std::min(e.radius[a], (n - 1.0) / 2.0);
    e.center[a] = rng.uniform(margin, n - 1.0 - margin);
  }
  return e;
}

bool inside(const Ellipsoid& e, Index d, Index h, Index w) {
  const double dz = (static_cast<double>(d) - e.center[0]) / e.radius[0];
  const double dy = (static_cast<double>(h) - e.center[1]) / e.radius[1];
  const double dx = (static_cast<double>(w) - e.center[2]) / e.radius[2];
  return dz * dz + dy * dy + dx * dx <= 1.0;
}

// Random coarse lattice, trilinearly upsampled to the full grid; values in [0, 1].
std::vector<double> smooth_noise(Rng& rng, const std::array<Index, 3>& dims) {
  std::array<Index, 3> g{};
  for (int a = 0; a < 3; ++a) g[a] = (dims[a] - 1) / kCoarseStep + 2;
  std::vector<double> lattice(static_cast<std::size_t>(g[0] * g[1] * g[2]));
  for (double& v : lattice) v = rng.uniform();
  auto node = [&](Index i, Index j, Index k) { return lattice[static_cast<std::size_t>((i * g[1] + j) * g[2] + k)]; };

  std::vector<double> out(static_cast<std::size_t>(dims[0] * dims[1] * dims[2]));
  std::size_t o = 0;
  for (Index d = 0; d < dims[0]; ++d) {
    const Index i0 = d / kCoarseStep;
    const double fz = static_cast<double>(d % kCoarseStep) / kCoarseStep;
    for (Index h = 0; h < dims[1]; ++h) {
      const Index j0 = h / kCoarseStep;
      const double fy = static_cast<double>(h % kCoarseStep) / kCoarseStep;
      for (Index w = 0; w < dims[2]; ++w) {
        const Index k0 = w / kCoarseStep;
        const double fx = static_cast<double>(w % kCoarseStep) / kCoarseStep;
        double v = 0.0;
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c)
              v += (a ? fz : 1 - fz) * (b ? fy : 1 - fy) * (c ? fx : 1 - fx) * node(i0 + a, j0 + b, k0 + c);
        out[o++] = v;
      }
    }
  }
  return out;
}

std::string case_id(Index index) {
  std::ostringstream s;
  s << "case_" << std::setw(3) << std::setfill('0') << index;
  return s.str();
}

}  // namespace

Case gen_synthetic_case(std::uint64_t seed, Index index, const Shape& shape) {
  if (shape.size() != 4) throw DimensionError("synthetic case shape must be (C,D,H,W), got " + shape_string(shape));
  if (shape[0] < 1) throw DimensionError("synthetic case needs at least one channel");
  for (std::size_t a = 1; a < 4; ++a)
    if (shape[a] < 8) throw DimensionError("synthetic spatial dims must be >= 8, got " + shape_string(shape));

  Rng rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(index))));
  const std::array<Index, 3> dims = {shape[1], shape[2], shape[3]};
  const Index spatial = dims[0] * dims[1] * dims[2];

  Case c;
  c.id = case_id(index);
  c.mask = Mask({dims[0], dims[1], dims[2]});
  bool ok = false;
  for (int attempt = 0; attempt < kMaxAttempts && !ok; ++attempt) {
    std::vector<Ellipsoid> lesions(1 + rng.below(2));
    for (auto& e : lesions) e = draw_ellipsoid(rng, dims);
    std::size_t i = 0;
    for (Index d = 0; d < dims[0]; ++d)
      for (Index h = 0; h < dims[1]; ++h)
        for (Index w = 0; w < dims[2]; ++w, ++i)
          c.mask.data[i] = std::any_of(lesions.begin(), lesions.end(), [&](const Ellipsoid& e) { return inside(e, d, h, w); });
    const double frac = static_cast<double>(c.mask.count()) / static_cast<double>(spatial);
    ok = frac >= kMinLesionFraction && frac <= kMaxLesionFraction;
  }
  if (!ok) throw NumericError("synthetic generator could not place a lesion within the volume bounds for " + c.id);

  c.x = TensorF(shape);
  for (Index ch = 0; ch < shape[0]; ++ch) {
    const std::size_t m = static_cast<std::size_t>(ch) % kBaseLevel.size();
    const std::vector<double> bg = smooth_noise(rng, dims);
    float* out = c.x.data() + ch * spatial;
    for (Index i = 0; i < spatial; ++i) {
      double v = kBaseLevel[m] + kBackgroundAmplitude * (bg[static_cast<std::size_t>(i)] - 0.5) + kVoxelNoise * rng.normal();
      if (c.mask.data[static_cast<std::size_t>(i)]) v += kLesionOffset[m];
      out[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return c;
}

Dataset gen_synthetic(std::uint64_t seed, Index n_cases, const Shape& shape) {
  if (n_cases < 1) throw ConfigError("case count must be positive");
  Dataset data;
  data.reserve(static_cast<std::size_t>(n_cases));
  for (Index i = 0; i < n_cases; ++i) data.push_back(gen_synthetic_case(seed, i, shape));
  return data;
}

void save_dataset(const Dataset& data, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::string listing;
  for (const auto& c : data) {
    write_volume(c.x, (fs::path(dir) / (c.id + "_x.vol")).string());
    write_volume(c.mask, (fs::path(dir) / (c.id + "_mask.vol")).string());
    listing += c.id + "\n";
  }
  std::ofstream out(fs::path(dir) / "cases.txt", std::ios::binary);
  out << listing;
  if (!out) throw FormatError("cannot write " + (fs::path(dir) / "cases.txt").string(), 0);
}

Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "cases.txt");
  if (!in) throw FormatError("dataset directory " + dir + " has no cases.txt", 0);
  Dataset data;
  std::string id;
  while (std::getline(in, id)) {
    if (id.empty()) continue;
    Case c;
    c.id = id;
    c.x = read_tensor((fs::path(dir) / (id + "_x.vol")).string());
    c.mask = read_mask((fs::path(dir) / (id + "_mask.vol")).string());
    if (c.x.rank() != 4 || spatial_of(c.x.shape()) != c.mask.shape)
      throw DimensionError("case " + id + ": input " + shape_string(c.x.shape()) + " and mask " +
                           shape_string(c.mask.shape) + " do not match");
    data.push_back(std::move(c));
  }
  if (data.empty()) throw FormatError("dataset directory " + dir + " lists no cases", 0);
  return data;
}

}  // namespace lrp3d
