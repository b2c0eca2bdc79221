#pragma once

#include <filesystem>

#include "cci/detect.hpp"
#include "cci/tensor.hpp"

namespace cci::image {

/// Binary PPM ("P6", maxval <= 255, scaled to [0, 1]) or FKT1 (1 x 3 x H x W).
Tensor load(const std::filesystem::path& path);
/// Writes a 1 x 3 x H x W tensor as 8-bit P6, clamping to [0, 1].
void save_p6(const std::filesystem::path& path, const Tensor& image);

/// Bilinear resize with half-pixel centers and edge clamping.
Tensor resize_bilinear(const Tensor& image, int out_h, int out_w);

/// Geometry of an aspect-preserving resize into a centered square canvas.
struct Letterbox {
  int src_w = 0;
  int src_h = 0;
  int size = 0;
  int new_w = 0;  // resized extent inside the canvas
  int new_h = 0;
  int pad_x = 0;  // left padding
  int pad_y = 0;  // top padding
};

inline constexpr float kLetterboxFill = 114.0f / 255.0f;

Letterbox letterbox_geometry(int src_w, int src_h, int size);
Tensor letterbox(const Tensor& image, const Letterbox& geometry, float fill = kLetterboxFill);

/// Canvas-normalized box -> source-image-normalized box, clamped to the unit square.
BoundingBox to_source(const BoundingBox& box, const Letterbox& geometry);
/// Source-image-normalized box -> canvas-normalized box.
BoundingBox to_canvas(const BoundingBox& box, const Letterbox& geometry);

}  // namespace cci::image
