// Copyright 2026 The OSDG Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "osdg/types.hpp"

namespace osdg::data {

using Rgb = std::array<float, 3>;

/// A labelled collection. Sample labels are known ids or the unknown token.
struct Dataset {
  LabelSpace labels;
  std::vector<SampleRecord> samples;
};

// ---------------------------------------------------------------------------
// Synthetic multi-domain shapes benchmark.

enum class Texture { flat, stripes, checker, blobs, noise, dots };

/// How one domain renders: a background texture over two background colours,
/// a foreground palette, and per-sample jitter of palette and outline.
struct DomainStyle {
  std::string name;
  Texture texture = Texture::flat;
  Rgb background_a{0.5f, 0.5f, 0.5f};
  Rgb background_b{0.5f, 0.5f, 0.5f};
  Rgb foreground{1.0f, 1.0f, 1.0f};
  double palette_jitter = 0.05;  // uniform +- per channel
  double stroke_jitter = 0.05;   // relative radial wobble of the outline
  double texture_scale = 4.0;    // texture period in pixels
  double pixel_noise = 0.02;     // Gaussian sensor noise
};

struct SyntheticSpec {
  std::vector<std::string> known_classes = {"circle", "square", "triangle", "cross"};
  std::vector<std::string> unknown_classes = {"star", "ring", "ellipse"};
  std::vector<DomainStyle> domains;
  int samples_per_class_per_domain = 25;
  int image_size = 32;
  std::uint64_t seed = 0;
};

/// Shapes the renderer knows.
const std::vector<std::string>& synthetic_shapes();

/// Three contrasting domain recipes ("stripes", "checker", "blobs").
std::vector<DomainStyle> default_domains();

/// Throws ConfigError on overlapping class lists, unknown shapes, fewer than
/// two domains or a non-positive size.
void validate_spec(const SyntheticSpec& spec);

/// Deterministic under `spec.seed`; every sample carries its exact
/// foreground mask. Known classes get ids in list order, unknown classes the
/// unknown token. Samples are ordered by domain, then class, then index.
Dataset generate_synthetic(const SyntheticSpec& spec);

/// Mean absolute difference of per-domain mean pixel colours, the smallest
/// over all domain pairs. Quantifies the style shift the recipes create.
double min_domain_colour_gap(const Dataset& ds);

/// Writes `<root>/<domain>/<class>/<stem>.png`, the oracle masks under
/// `<root>/masks/...` and the known class list as `<root>/classes.txt`.
void write_dataset(const Dataset& ds, const std::filesystem::path& root);

// ---------------------------------------------------------------------------
// Directory datasets: `<root>/<domain>/<class>/<image>`.

struct DatasetManifest {
  std::filesystem::path root;
  std::filesystem::path classes_file;  // defaults to <root>/classes.txt
  bool load_masks = false;             // attach `<root>/masks/...` sidecars
  bool require_masks = false;          // missing sidecar for a source sample -> DataError
  int image_size = 0;                  // resize to a square of this size; 0 keeps the file size
};

struct ManifestSplit {
  LabelSpace labels;
  std::vector<std::string> source_domains;
  Dataset source;                // known classes only
  std::vector<Dataset> targets;  // one per remaining domain, all classes
  std::vector<std::string> target_domains;
};

std::vector<std::string> read_class_list(const std::filesystem::path& path);

/// Domain directories under the root, sorted, excluding sidecar trees.
std::vector<std::string> list_domains(const std::filesystem::path& root);

/// Loads every domain in `source_domains` as the (known-classes-only) source
/// and every other domain as a target. Throws DataError on an empty domain,
/// a missing source domain or a missing required sidecar.
ManifestSplit load_manifest(const DatasetManifest& manifest, const std::vector<std::string>& source_domains);

/// Loads a single domain with all its classes.
Dataset load_domain(const DatasetManifest& manifest, const LabelSpace& labels, const std::string& domain,
                    bool known_only);

/// One JSON object per line: id, path, domain, class, label.
void write_index(const Dataset& ds, const std::filesystem::path& root, const std::filesystem::path& index_path);
Dataset read_index(const std::filesystem::path& index_path, const std::filesystem::path& root,
                   const LabelSpace& labels, int image_size);

// ---------------------------------------------------------------------------

struct Normalization {
  Rgb mean{0.0f, 0.0f, 0.0f};
  Rgb std{1.0f, 1.0f, 1.0f};
  bool operator==(const Normalization&) const = default;
};

/// Per-channel pixel mean and standard deviation over the samples.
Normalization compute_normalization(const std::vector<SampleRecord>& samples);

/// (image - mean) / std per channel.
Image normalize(const Image& image, const Normalization& norm);

/// Seeded stratified split: round(fraction * n_c) samples of every class go
/// to the second part (at least one when a class has two or more samples).
std::pair<std::vector<SampleRecord>, std::vector<SampleRecord>> stratified_split(
    const std::vector<SampleRecord>& samples, double fraction, std::uint64_t seed);

}  // namespace osdg::data
