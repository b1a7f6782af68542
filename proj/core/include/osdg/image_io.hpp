// Copyright 2026 The OSDG Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>

#include "osdg/types.hpp"

namespace osdg::io {

/// Reads a PNG or JPEG file as 3 x H x W floats in [0, 1]. Grayscale input is
/// replicated to three channels. Throws DataError on failure.
Image read_image(const std::filesystem::path& path);

/// Reads a single-channel PNG as H x W with nonzero pixels mapped to 1.
Mask read_mask(const std::filesystem::path& path);

/// Writes a 3 x H x W (or 1 x H x W) image as 8-bit PNG, clamping to [0, 1].
void write_png(const std::filesystem::path& path, const Image& image);

/// Writes an H x W mask as a single-channel PNG (0 or 255).
void write_mask_png(const std::filesystem::path& path, const Mask& mask);

/// Bilinear resize of a C x H x W image (align-corners off).
Image resize_bilinear(const Image& image, int height, int width);

}  // namespace osdg::io
