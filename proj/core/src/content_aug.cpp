// Copyright 2026 The OSDG Authors.
// SPDX-License-Identifier: Apache-2.0

#include "osdg/content_aug.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "osdg/error.hpp"
#include "osdg/image_io.hpp"

namespace osdg::aug {
namespace {

std::string stem_of(const SampleRecord& s) {
  const auto slash = s.id.find_last_of('/');
  return slash == std::string::npos ? s.id : s.id.substr(slash + 1);
}

Mask fit_mask(Mask m, int H, int W) {
  if (m.dim(0) == H && m.dim(1) == W) return m;
  Image as_img = m.reshaped({1, m.dim(0), m.dim(1)});
  Image r = io::resize_bilinear(as_img, H, W);
  Mask out({H, W});
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = r[i] >= 0.5f ? 1.0f : 0.0f;
  return out;
}

Tensor<float> grayscale(const Image& img) {
  const int H = img.dim(1), W = img.dim(2);
  Tensor<float> g({H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      g.at(y, x) = 0.299f * img.at(0, y, x) + 0.587f * img.at(1, y, x) + 0.114f * img.at(2, y, x);
  return g;
}

Tensor<float> box_blur(const Tensor<float>& g, int r) {
  if (r <= 0) return g;
  const int H = g.dim(0), W = g.dim(1);
  Tensor<float> out({H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double s = 0;
      int n = 0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const int yy = std::clamp(y + dy, 0, H - 1), xx = std::clamp(x + dx, 0, W - 1);
          s += g.at(yy, xx);
          ++n;
        }
      out.at(y, x) = static_cast<float>(s / n);
    }
  return out;
}

Image gaussian_blur(const Image& img, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(2 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double ksum = 0;
  for (int i = -radius; i <= radius; ++i) ksum += k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= ksum;
  const int C = img.dim(0), H = img.dim(1), W = img.dim(2);
  Image tmp(img.shape()), out(img.shape());
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double s = 0;
        for (int i = -radius; i <= radius; ++i)
          s += k[static_cast<std::size_t>(i + radius)] * img.at(c, y, std::clamp(x + i, 0, W - 1));
        tmp.at(c, y, x) = static_cast<float>(s);
      }
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double s = 0;
        for (int i = -radius; i <= radius; ++i)
          s += k[static_cast<std::size_t>(i + radius)] * tmp.at(c, std::clamp(y + i, 0, H - 1), x);
        out.at(c, y, x) = static_cast<float>(s);
      }
  return out;
}

}  // namespace

std::filesystem::path sidecar_path(const std::filesystem::path& root, const std::string& kind,
                                   const SampleRecord& sample) {
  return root / kind / sample.domain / sample.class_name / (stem_of(sample) + ".png");
}

Mask MaskProvider::mask_for(const SampleRecord& sample) const {
  const int H = sample.image.dim(1), W = sample.image.dim(2);
  switch (kind_) {
    case Kind::all_foreground:
      return Mask({H, W}, 1.0f);
    case Kind::oracle:
      if (!sample.mask) throw DataError("oracle mask provider: sample '" + sample.id + "' carries no mask");
      if (sample.mask->shape() != Shape{H, W})
        throw ShapeError("mask of sample '" + sample.id + "' does not match its image");
      return *sample.mask;
    case Kind::sidecar_files: {
      const auto path = sidecar_path(root_, "masks", sample);
      if (!std::filesystem::exists(path))
        throw DataError("missing mask sidecar for sample '" + sample.id + "': " + path.string());
      return fit_mask(io::read_mask(path), H, W);
    }
  }
  throw ConfigError("unknown mask provider kind");
}

MaskProvider::Kind parse_mask_kind(const std::string& name) {
  if (name == "oracle") return MaskProvider::Kind::oracle;
  if (name == "sidecar" || name == "sidecar_files") return MaskProvider::Kind::sidecar_files;
  if (name == "all_foreground") return MaskProvider::Kind::all_foreground;
  throw ConfigError("unknown mask provider '" + name + "' (oracle, sidecar_files, all_foreground)");
}

std::string to_string(MaskProvider::Kind kind) {
  switch (kind) {
    case MaskProvider::Kind::oracle: return "oracle";
    case MaskProvider::Kind::sidecar_files: return "sidecar_files";
    case MaskProvider::Kind::all_foreground: return "all_foreground";
  }
  return "?";
}

SampleRecord suppress_background(const SampleRecord& sample, const MaskProvider& provider, const Rgb& fill) {
  Mask mask = provider.mask_for(sample);
  SampleRecord out = sample;
  const int H = sample.image.dim(1), W = sample.image.dim(2);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const float m = mask.at(y, x);
        out.image.at(c, y, x) = sample.image.at(c, y, x) * m + fill[static_cast<std::size_t>(c)] * (1.0f - m);
      }
  out.mask = std::move(mask);
  return out;
}

EdgeOperator::Kind parse_edge_kind(const std::string& name) {
  if (name == "gradient" || name == "gradient_magnitude") return EdgeOperator::Kind::gradient_magnitude;
  if (name == "external" || name == "external_files") return EdgeOperator::Kind::external_files;
  throw ConfigError("unknown edge operator '" + name + "' (gradient_magnitude, external_files)");
}

std::string to_string(EdgeOperator::Kind kind) {
  return kind == EdgeOperator::Kind::gradient_magnitude ? "gradient_magnitude" : "external_files";
}

Image edge_map(const Image& image, int blur_radius, bool normalize) {
  if (image.rank() != 3 || image.dim(0) != 3) throw ShapeError("edge_map: expected 3 x H x W image");
  const Tensor<float> g = box_blur(grayscale(image), blur_radius);
  const int H = g.dim(0), W = g.dim(1);
  Tensor<float> mag({H, W});
  float peak = 0.0f;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const float gx = x + 1 < W ? g.at(y, x + 1) - g.at(y, x) : 0.0f;
      const float gy = y + 1 < H ? g.at(y + 1, x) - g.at(y, x) : 0.0f;
      const float m = std::sqrt(gx * gx + gy * gy);
      mag.at(y, x) = m;
      peak = std::max(peak, m);
    }
  Image out({3, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      float v = mag.at(y, x);
      v = normalize ? (peak > 0.0f ? v / peak : 0.0f) : std::min(v, 1.0f);
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = v;
    }
  return out;
}

SampleRecord extract_edges(const SampleRecord& sample, const EdgeOperator& op) {
  SampleRecord out = sample;
  if (op.kind == EdgeOperator::Kind::gradient_magnitude) {
    out.edge = edge_map(sample.image, op.blur_radius, op.normalize);
    return out;
  }
  const auto path = sidecar_path(op.root, "edges", sample);
  if (!std::filesystem::exists(path))
    throw DataError("missing edge sidecar for sample '" + sample.id + "': " + path.string());
  out.edge = io::resize_bilinear(io::read_image(path), sample.image.dim(1), sample.image.dim(2));
  return out;
}

Image weak_augment(const Image& image, std::mt19937_64& rng) {
  const int C = image.dim(0), H = image.dim(1), W = image.dim(2);
  const int pad = std::max(1, H / 8);
  std::uniform_int_distribution<int> off(-pad, pad);
  std::bernoulli_distribution flip(0.5);
  const int dy = off(rng), dx = off(rng);
  const bool f = flip(rng);
  Image out(image.shape());
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const int sy = y + dy;
        int sx = x + dx;
        if (f) sx = W - 1 - sx;
        out.at(c, y, x) = (sy >= 0 && sy < H && sx >= 0 && sx < W) ? image.at(c, sy, sx) : 0.0f;
      }
  return out;
}

Image strong_augment(const Image& image, std::mt19937_64& rng) {
  Image out = weak_augment(image, rng);
  std::bernoulli_distribution gray(0.5);
  std::uniform_real_distribution<double> sigma(0.1, 2.0);
  const bool to_gray = gray(rng);
  const double s = sigma(rng);
  if (to_gray) {
    const Tensor<float> g = grayscale(out);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < g.dim(0); ++y)
        for (int x = 0; x < g.dim(1); ++x) out.at(c, y, x) = g.at(y, x);
  }
  return gaussian_blur(out, s);
}

}  // namespace osdg::aug
