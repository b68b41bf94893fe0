#pragma once

// Global layout feature: the per-class binary occupancy raster of a diagram
// is pushed through four conv+maxpool stages and an affine head, yielding a
// vector the size of the GRU hidden state.

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "dggn/data.hpp"
#include "dggn/rng.hpp"
#include "dggn/tensor.hpp"

namespace dggn {

inline constexpr std::size_t kMaskGrid = 64;  // raster is class x 64 x 64 regardless of image size

struct MaskRaster {
  // kNumClasses * kMaskGrid * kMaskGrid entries in {0, 1}, channel-major
  std::vector<double> grid = std::vector<double>(kNumClasses * kMaskGrid * kMaskGrid, 0.0);

  double at(std::size_t c, std::size_t y, std::size_t x) const { return grid[(c * kMaskGrid + y) * kMaskGrid + x]; }
};

// Cell (c, y, x) is set iff some object of class c covers the cell center.
inline MaskRaster rasterize(const std::vector<DiagramObject>& objects) {
  MaskRaster raster;
  const double n = static_cast<double>(kMaskGrid);
  for (const DiagramObject& o : objects) {
    // centers (i + 0.5)/n inside [min, max]
    const auto lo = [&](double v) { return std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil(v * n - 0.5))); };
    const auto hi = [&](double v) {
      return std::min<std::ptrdiff_t>(kMaskGrid - 1, static_cast<std::ptrdiff_t>(std::floor(v * n - 0.5)));
    };
    const std::ptrdiff_t x0 = lo(o.box.xmin), x1 = hi(o.box.xmax);
    const std::ptrdiff_t y0 = lo(o.box.ymin), y1 = hi(o.box.ymax);
    const std::size_t c = static_cast<std::size_t>(o.cls);
    for (std::ptrdiff_t y = y0; y <= y1; ++y)
      for (std::ptrdiff_t x = x0; x <= x1; ++x)
        raster.grid[(c * kMaskGrid + static_cast<std::size_t>(y)) * kMaskGrid + static_cast<std::size_t>(x)] = 1.0;
  }
  return raster;
}

inline constexpr std::size_t kEncoderStages = 4;
inline constexpr std::size_t kEncoderChannels[kEncoderStages + 1] = {kNumClasses, 8, 16, 32, 32};
// 64 -> 32 -> 16 -> 8 -> 4 spatial, so the flattened tail is 32*4*4
inline constexpr std::size_t kEncoderFlat = 32 * 4 * 4;

struct MaskEncoderParams {
  std::array<Tensor, kEncoderStages> kernels;  // [C_out, C_in, 3, 3]
  std::array<Tensor, kEncoderStages> biases;   // [C_out]
  Tensor w_out;                                // [m, kEncoderFlat]
  Tensor b_out;                                // [m]

  std::size_t output_dim() const { return w_out.shape()[0]; }

  static MaskEncoderParams init(std::size_t hidden_dim, Rng& rng) {
    MaskEncoderParams p;
    for (std::size_t s = 0; s < kEncoderStages; ++s) {
      const std::size_t cin = kEncoderChannels[s], cout = kEncoderChannels[s + 1];
      const double bound = 1.0 / std::sqrt(static_cast<double>(cin * 9));
      std::vector<double> k(cout * cin * 9);
      for (double& v : k) v = rng.uniform(-bound, bound);
      p.kernels[s] = make_tensor({cout, cin, 3, 3}, std::move(k), true);
      p.biases[s] = make_zeros({cout}, true);
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(kEncoderFlat));
    std::vector<double> w(hidden_dim * kEncoderFlat);
    for (double& v : w) v = rng.uniform(-bound, bound);
    p.w_out = make_tensor({hidden_dim, kEncoderFlat}, std::move(w), true);
    p.b_out = make_zeros({hidden_dim}, true);
    return p;
  }

  std::vector<Tensor> tensors() const {
    std::vector<Tensor> out;
    for (std::size_t s = 0; s < kEncoderStages; ++s) {
      out.push_back(kernels[s]);
      out.push_back(biases[s]);
    }
    out.push_back(w_out);
    out.push_back(b_out);
    return out;
  }
};

inline Tensor encode_global(Tape& tape, const MaskRaster& raster, const MaskEncoderParams& params) {
  Tensor x = make_tensor({kNumClasses, kMaskGrid, kMaskGrid}, raster.grid, false);
  for (std::size_t s = 0; s < kEncoderStages; ++s) x = tape.conv2d_maxpool(x, params.kernels[s], params.biases[s]);
  x = tape.reshape(x, {kEncoderFlat});
  return tape.add(tape.matvec(params.w_out, x), params.b_out);
}

}  // namespace dggn
