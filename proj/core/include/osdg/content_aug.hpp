// Copyright 2026 The OSDG Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <filesystem>
#include <random>
#include <string>

#include "osdg/types.hpp"

namespace osdg::aug {

using Rgb = std::array<float, 3>;

/// `<root>/<kind>/<domain>/<class>/<stem>.png`, the sidecar layout for masks
/// ("masks") and precomputed edge maps ("edges").
std::filesystem::path sidecar_path(const std::filesystem::path& root, const std::string& kind,
                                   const SampleRecord& sample);

/// Source of foreground masks for background suppression.
class MaskProvider {
 public:
  enum class Kind { oracle, sidecar_files, all_foreground };

  /// Uses the exact mask already attached to the sample (synthetic data).
  static MaskProvider oracle() { return MaskProvider(Kind::oracle, {}); }
  /// Reads `<root>/masks/<domain>/<class>/<stem>.png`; nonzero = foreground.
  static MaskProvider sidecar_files(std::filesystem::path root) {
    return MaskProvider(Kind::sidecar_files, std::move(root));
  }
  static MaskProvider all_foreground() { return MaskProvider(Kind::all_foreground, {}); }

  Kind kind() const noexcept { return kind_; }
  const std::filesystem::path& root() const noexcept { return root_; }

  /// H x W binary mask aligned with `sample.image`. Throws DataError naming
  /// the sample when the mask is unavailable.
  Mask mask_for(const SampleRecord& sample) const;

 private:
  MaskProvider(Kind k, std::filesystem::path root) : kind_(k), root_(std::move(root)) {}
  Kind kind_;
  std::filesystem::path root_;
};

MaskProvider::Kind parse_mask_kind(const std::string& name);
std::string to_string(MaskProvider::Kind kind);

/// image * mask + fill * (1 - mask), per channel. Label and domain are kept
/// and the mask is recorded on the returned sample.
SampleRecord suppress_background(const SampleRecord& sample, const MaskProvider& provider, const Rgb& fill);

struct EdgeOperator {
  enum class Kind { gradient_magnitude, external_files };
  Kind kind = Kind::gradient_magnitude;
  int blur_radius = 0;  // box blur radius in pixels before differencing
  bool normalize = true;
  std::filesystem::path root;  // for external_files
};

EdgeOperator::Kind parse_edge_kind(const std::string& name);
std::string to_string(EdgeOperator::Kind kind);

/// Grayscale -> optional box blur -> forward-difference gradient magnitude,
/// scaled into [0, 1] (by its maximum when `normalize`, else clamped) and
/// replicated to three channels. The result is cached in `edge`.
SampleRecord extract_edges(const SampleRecord& sample, const EdgeOperator& op);

/// Edge map of a bare image with the gradient-magnitude operator.
Image edge_map(const Image& image, int blur_radius, bool normalize);

/// Random crop (from a 12.5% zero pad) and random horizontal flip.
Image weak_augment(const Image& image, std::mt19937_64& rng);
/// Weak augmentation plus random grayscale and Gaussian blur.
Image strong_augment(const Image& image, std::mt19937_64& rng);

}  // namespace osdg::aug
