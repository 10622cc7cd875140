#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "zoneprior/volgrid.hpp"

namespace zoneprior {

/// 8-bit RGB raster, row-major, 3 bytes per pixel.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t* at(int x, int y) { return pixels.data() + 3 * (std::size_t(y) * width + x); }
  const std::uint8_t* at(int x, int y) const { return pixels.data() + 3 * (std::size_t(y) * width + x); }
};

/// Axial slice `z` in grayscale (min-max scaled over the slice) with TZ
/// blended red and PZ blended green at 50% opacity. Each voxel becomes a
/// zoom x zoom block.
RgbImage overlay_slice(const Volume& image, const LabelVolume& labels, Index z, int zoom = 1);

/// Places panels left to right separated by `gap` black columns.
RgbImage hconcat(const std::vector<RgbImage>& panels, int gap = 2);

void write_png(const RgbImage& img, const std::filesystem::path& path);

void render_overlay(const Volume& image, const LabelVolume& labels, Index z, const std::filesystem::path& out,
                    int zoom = 4);

/// One panel per label volume, in the given order (e.g. reference, baseline,
/// constrained), all over the same image slice.
void render_triptych(const Volume& image, const std::vector<LabelVolume>& labels, Index z,
                     const std::filesystem::path& out, int zoom = 4);

}  // namespace zoneprior
