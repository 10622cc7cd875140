#include "zoneprior/render.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <memory>

#include "zoneprior/errors.hpp"

namespace zoneprior {

RgbImage overlay_slice(const Volume& image, const LabelVolume& labels, Index z, int zoom) {
  const Shape3& s = image.geom.shape;
  if (!(labels.geom.shape == s)) throw ValidationError("overlay: image and label grids differ");
  if (z < 0 || z >= s.nz)
    throw ValidationError("slice index " + std::to_string(z) + " out of range [0, " + std::to_string(s.nz) + ")");
  if (zoom < 1) throw ValidationError("zoom must be >= 1");

  float lo = image.at(0, 0, z), hi = lo;
  for (Index y = 0; y < s.ny; ++y)
    for (Index x = 0; x < s.nx; ++x) {
      lo = std::min(lo, image.at(x, y, z));
      hi = std::max(hi, image.at(x, y, z));
    }
  const float range = hi > lo ? hi - lo : 1.0f;

  RgbImage out{int(s.nx) * zoom, int(s.ny) * zoom, {}};
  out.pixels.assign(std::size_t(out.width) * out.height * 3, 0);
  for (Index y = 0; y < s.ny; ++y)
    for (Index x = 0; x < s.nx; ++x) {
      const float g = 255.0f * (image.at(x, y, z) - lo) / range;
      float rgb[3] = {g, g, g};
      const int label = labels.labels[s.index(x, y, z)];
      if (label == kTz || label == kPz) {
        const int ch = label == kTz ? 0 : 1;
        for (int c = 0; c < 3; ++c) rgb[c] = 0.5f * rgb[c] + (c == ch ? 0.5f * 255.0f : 0.0f);
      }
      for (int dy = 0; dy < zoom; ++dy)
        for (int dx = 0; dx < zoom; ++dx) {
          auto* p = out.at(int(x) * zoom + dx, int(y) * zoom + dy);
          for (int c = 0; c < 3; ++c) p[c] = std::uint8_t(std::clamp(rgb[c] + 0.5f, 0.0f, 255.0f));
        }
    }
  return out;
}

RgbImage hconcat(const std::vector<RgbImage>& panels, int gap) {
  if (panels.empty()) throw ValidationError("hconcat needs at least one panel");
  RgbImage out;
  for (const auto& p : panels) {
    out.width += p.width;
    out.height = std::max(out.height, p.height);
  }
  out.width += gap * int(panels.size() - 1);
  out.pixels.assign(std::size_t(out.width) * out.height * 3, 0);
  int x0 = 0;
  for (const auto& p : panels) {
    for (int y = 0; y < p.height; ++y) std::copy_n(p.at(0, y), 3 * p.width, out.at(x0, y));
    x0 += p.width + gap;
  }
  return out;
}

void write_png(const RgbImage& img, const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y) png_write_row(png, img.at(0, y));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void render_overlay(const Volume& image, const LabelVolume& labels, Index z, const std::filesystem::path& out,
                    int zoom) {
  write_png(overlay_slice(image, labels, z, zoom), out);
}

void render_triptych(const Volume& image, const std::vector<LabelVolume>& labels, Index z,
                     const std::filesystem::path& out, int zoom) {
  std::vector<RgbImage> panels;
  for (const auto& l : labels) panels.push_back(overlay_slice(image, l, z, zoom));
  write_png(hconcat(panels), out);
}

}  // namespace zoneprior
