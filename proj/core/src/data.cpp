// Copyright 2026 The OSDG Authors.
// SPDX-License-Identifier: Apache-2.0

#include "osdg/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "osdg/error.hpp"
#include "osdg/image_io.hpp"

namespace osdg::data {
namespace fs = std::filesystem;
namespace {

constexpr double kPi = std::numbers::pi;

bool inside_shape(const std::string& shape, double x, double y) {
  const double rho = std::hypot(x, y);
  const double phi = std::atan2(y, x);
  if (shape == "circle") return rho <= 1.0;
  if (shape == "square") return std::max(std::abs(x), std::abs(y)) <= 0.8;
  if (shape == "triangle") {
    for (int k = 0; k < 3; ++k) {
      const double b = -kPi / 2 + 2 * kPi * k / 3;
      if (x * std::cos(b) + y * std::sin(b) > 0.5) return false;
    }
    return true;
  }
  if (shape == "cross")
    return (std::abs(x) <= 0.3 && std::abs(y) <= 0.95) || (std::abs(y) <= 0.3 && std::abs(x) <= 0.95);
  if (shape == "star") return rho <= 0.55 + 0.4 * std::cos(5 * phi);
  if (shape == "ring") return rho >= 0.55 && rho <= 1.0;
  if (shape == "ellipse") return x * x + (y / 0.5) * (y / 0.5) <= 1.0;
  throw ConfigError("unknown synthetic shape '" + shape + "'");
}

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
  Rgb out;
  for (std::size_t c = 0; c < 3; ++c) out[c] = static_cast<float>(a[c] + (b[c] - a[c]) * t);
  return out;
}

// Background mixing weight in [0, 1] for every pixel.
std::vector<double> background_field(const DomainStyle& st, int S, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<double> t(static_cast<std::size_t>(S) * S, 0.0);
  const double period = std::max(2.0, st.texture_scale * (0.8 + 0.4 * u01(rng)));
  const double angle = u01(rng) * kPi;
  const double phase = u01(rng) * 2 * kPi;
  auto at = [&](int y, int x) -> double& { return t[static_cast<std::size_t>(y) * S + x]; };
  switch (st.texture) {
    case Texture::flat:
      break;
    case Texture::stripes:
      for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x)
          at(y, x) = 0.5 + 0.5 * std::sin(2 * kPi * (x * std::cos(angle) + y * std::sin(angle)) / period + phase);
      break;
    case Texture::checker: {
      const double ox = u01(rng) * period, oy = u01(rng) * period;
      const double rot = (u01(rng) - 0.5) * 0.5;
      for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
          const double xr = x * std::cos(rot) - y * std::sin(rot) + ox;
          const double yr = x * std::sin(rot) + y * std::cos(rot) + oy;
          const long cell = static_cast<long>(std::floor(xr / period)) + static_cast<long>(std::floor(yr / period));
          at(y, x) = (cell % 2 == 0) ? 0.0 : 1.0;
        }
      break;
    }
    case Texture::blobs: {
      const int n = 4 + static_cast<int>(u01(rng) * 4);
      for (int i = 0; i < n; ++i) {
        const double cx = u01(rng) * S, cy = u01(rng) * S;
        const double r = period * (0.6 + u01(rng));
        for (int y = 0; y < S; ++y)
          for (int x = 0; x < S; ++x) {
            const double d2 = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (r * r);
            at(y, x) += std::exp(-d2);
          }
      }
      for (auto& v : t) v = std::min(1.0, v);
      break;
    }
    case Texture::noise: {
      std::vector<double> raw(t.size());
      for (auto& v : raw) v = u01(rng);
      const int r = std::max(1, static_cast<int>(period / 3));
      for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
          double s = 0;
          int cnt = 0;
          for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
              const int yy = std::clamp(y + dy, 0, S - 1), xx = std::clamp(x + dx, 0, S - 1);
              s += raw[static_cast<std::size_t>(yy) * S + xx];
              ++cnt;
            }
          at(y, x) = std::clamp((s / cnt - 0.5) * 3 + 0.5, 0.0, 1.0);
        }
      break;
    }
    case Texture::dots: {
      const double ox = u01(rng) * period, oy = u01(rng) * period;
      for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
          const double fx = std::fmod(x + ox, period) - period / 2, fy = std::fmod(y + oy, period) - period / 2;
          at(y, x) = std::hypot(fx, fy) <= period / 4 ? 1.0 : 0.0;
        }
      break;
    }
  }
  return t;
}

SampleRecord render_sample(const SyntheticSpec& spec, const DomainStyle& st, const std::string& shape, int label,
                           int index, std::mt19937_64& rng) {
  const int S = spec.image_size;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  const double cx = (u01(rng) - 0.5) * 0.3, cy = (u01(rng) - 0.5) * 0.3;
  const double radius = 0.5 + u01(rng) * 0.22;
  const double rot = u01(rng) * 2 * kPi;
  const double w1 = st.stroke_jitter * (u01(rng) * 2 - 1), w2 = st.stroke_jitter * (u01(rng) * 2 - 1);
  const double p1 = u01(rng) * 2 * kPi, p2 = u01(rng) * 2 * kPi;

  Rgb fg = st.foreground;
  for (auto& c : fg) c = static_cast<float>(std::clamp(c + st.palette_jitter * (u01(rng) * 2 - 1), 0.0, 1.0));
  Rgb bga = st.background_a, bgb = st.background_b;
  for (std::size_t c = 0; c < 3; ++c) {
    const double j = st.palette_jitter * (u01(rng) * 2 - 1);
    bga[c] = static_cast<float>(std::clamp(bga[c] + j, 0.0, 1.0));
    bgb[c] = static_cast<float>(std::clamp(bgb[c] + j, 0.0, 1.0));
  }
  const auto field = background_field(st, S, rng);

  SampleRecord s;
  s.image = Image({3, S, S});
  Mask mask({S, S});
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      const double u = (x + 0.5) / S * 2 - 1 - cx, v = (y + 0.5) / S * 2 - 1 - cy;
      const double lx = u * std::cos(rot) + v * std::sin(rot), ly = -u * std::sin(rot) + v * std::cos(rot);
      const double phi = std::atan2(ly, lx);
      const double wobble = 1.0 + w1 * std::sin(2 * phi + p1) + w2 * std::sin(3 * phi + p2);
      const double scale = radius * wobble;
      const bool fg_px = inside_shape(shape, lx / scale, ly / scale);
      mask.at(y, x) = fg_px ? 1.0f : 0.0f;
      const Rgb col = fg_px ? fg : lerp(bga, bgb, field[static_cast<std::size_t>(y) * S + x]);
      for (int c = 0; c < 3; ++c)
        s.image.at(c, y, x) = static_cast<float>(
            std::clamp(col[static_cast<std::size_t>(c)] + st.pixel_noise * normal(rng), 0.0, 1.0));
    }
  s.label = label;
  s.class_name = shape;
  s.domain = st.name;
  char stem[32];
  std::snprintf(stem, sizeof(stem), "%05d", index);
  s.id = st.name + "/" + shape + "/" + stem;
  s.mask = std::move(mask);
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

int label_for(const LabelSpace& labels, const std::string& cls) {
  if (cls == "unknown") throw DataError("class directory named 'unknown' collides with the unknown token");
  return labels.id_of(cls).value_or(labels.unknown_token());
}

SampleRecord load_sample(const fs::path& root, const fs::path& rel, const std::string& domain,
                         const std::string& cls, int label, int image_size, bool load_masks, bool require_masks) {
  SampleRecord s;
  s.image = io::read_image(root / rel);
  if (image_size > 0) s.image = io::resize_bilinear(s.image, image_size, image_size);
  s.domain = domain;
  s.class_name = cls;
  s.label = label;
  s.id = domain + "/" + cls + "/" + rel.stem().string();
  if (load_masks) {
    const fs::path mp = root / "masks" / domain / cls / (rel.stem().string() + ".png");
    if (fs::exists(mp)) {
      Mask m = io::read_mask(mp);
      if (m.dim(0) != s.image.dim(1) || m.dim(1) != s.image.dim(2)) {
        Image r = io::resize_bilinear(m.reshaped({1, m.dim(0), m.dim(1)}), s.image.dim(1), s.image.dim(2));
        m = Mask({s.image.dim(1), s.image.dim(2)});
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = r[i] >= 0.5f ? 1.0f : 0.0f;
      }
      s.mask = std::move(m);
    } else if (require_masks) {
      throw DataError("missing mask sidecar for sample '" + s.id + "': " + mp.string());
    }
  }
  return s;
}

}  // namespace

const std::vector<std::string>& synthetic_shapes() {
  static const std::vector<std::string> shapes = {"circle", "square", "triangle", "cross",
                                                  "star",   "ring",   "ellipse"};
  return shapes;
}

std::vector<DomainStyle> default_domains() {
  DomainStyle stripes{"stripes", Texture::stripes, {0.85f, 0.55f, 0.25f}, {0.55f, 0.25f, 0.10f},
                      {0.15f, 0.35f, 0.90f}, 0.08, 0.06, 5.0, 0.03};
  DomainStyle checker{"checker", Texture::checker, {0.20f, 0.60f, 0.30f}, {0.10f, 0.35f, 0.15f},
                      {0.95f, 0.90f, 0.20f}, 0.08, 0.06, 4.0, 0.03};
  // The held-out style keeps the stripes palette and changes only the
  // texture, so a classifier that latched onto texture is what gets punished.
  DomainStyle blobs = stripes;
  blobs.name = "blobs";
  blobs.texture = Texture::blobs;
  return {stripes, checker, blobs};
}

void validate_spec(const SyntheticSpec& spec) {
  const auto& shapes = synthetic_shapes();
  std::set<std::string> seen;
  for (const auto* list : {&spec.known_classes, &spec.unknown_classes})
    for (const auto& c : *list) {
      if (std::find(shapes.begin(), shapes.end(), c) == shapes.end())
        throw ConfigError("synthetic spec: unknown shape '" + c + "'");
      if (!seen.insert(c).second) throw ConfigError("synthetic spec: class '" + c + "' listed twice");
    }
  if (spec.known_classes.size() < 2) throw ConfigError("synthetic spec: need at least 2 known classes");
  if (spec.domains.size() < 2) throw ConfigError("synthetic spec: need at least 2 domains");
  std::set<std::string> names;
  for (const auto& d : spec.domains) {
    if (d.name.empty() || d.name == "masks" || d.name == "edges")
      throw ConfigError("synthetic spec: invalid domain name '" + d.name + "'");
    if (!names.insert(d.name).second) throw ConfigError("synthetic spec: duplicate domain '" + d.name + "'");
  }
  if (spec.samples_per_class_per_domain < 1) throw ConfigError("synthetic spec: samples_per_class_per_domain < 1");
  if (spec.image_size < 8) throw ConfigError("synthetic spec: image_size must be >= 8");
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  validate_spec(spec);
  Dataset ds;
  ds.labels = make_label_space(spec.known_classes);
  std::vector<std::string> classes = spec.known_classes;
  classes.insert(classes.end(), spec.unknown_classes.begin(), spec.unknown_classes.end());
  for (std::size_t d = 0; d < spec.domains.size(); ++d)
    for (std::size_t c = 0; c < classes.size(); ++c) {
      const int label = c < spec.known_classes.size() ? static_cast<int>(c) : ds.labels.unknown_token();
      for (int i = 0; i < spec.samples_per_class_per_domain; ++i) {
        std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                          static_cast<std::uint32_t>(d), static_cast<std::uint32_t>(c),
                          static_cast<std::uint32_t>(i)};
        std::mt19937_64 rng(seq);
        ds.samples.push_back(render_sample(spec, spec.domains[d], classes[c], label, i, rng));
      }
    }
  return ds;
}

double min_domain_colour_gap(const Dataset& ds) {
  std::map<std::string, std::pair<std::array<double, 3>, std::size_t>> acc;
  for (const auto& s : ds.samples) {
    auto& [sum, n] = acc[s.domain];
    const std::size_t hw = static_cast<std::size_t>(s.image.dim(1)) * s.image.dim(2);
    for (int c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < hw; ++i) sum[static_cast<std::size_t>(c)] += s.image[c * hw + i];
    n += hw;
  }
  double gap = std::numeric_limits<double>::infinity();
  for (auto a = acc.begin(); a != acc.end(); ++a)
    for (auto b = std::next(a); b != acc.end(); ++b) {
      double d = 0;
      for (std::size_t c = 0; c < 3; ++c)
        d += std::abs(a->second.first[c] / a->second.second - b->second.first[c] / b->second.second);
      gap = std::min(gap, d / 3);
    }
  return gap;
}

void write_dataset(const Dataset& ds, const fs::path& root) {
  fs::create_directories(root);
  {
    std::ofstream out(root / "classes.txt");
    for (const auto& c : ds.labels.known_classes()) out << c << '\n';
  }
  for (const auto& s : ds.samples) {
    const auto stem = s.id.substr(s.id.find_last_of('/') + 1);
    io::write_png(root / s.domain / s.class_name / (stem + ".png"), s.image);
    if (s.mask) io::write_mask_png(root / "masks" / s.domain / s.class_name / (stem + ".png"), *s.mask);
  }
}

std::vector<std::string> read_class_list(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read class list " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (!line.empty() && line[0] != '#') out.push_back(line);
  }
  return out;
}

std::vector<std::string> list_domains(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("dataset root is not a directory: " + root.string());
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(root)) {
    const auto name = e.path().filename().string();
    if (e.is_directory() && name != "masks" && name != "edges" && name[0] != '.') out.push_back(name);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Dataset load_domain(const DatasetManifest& manifest, const LabelSpace& labels, const std::string& domain,
                    bool known_only) {
  const fs::path dir = manifest.root / domain;
  if (!fs::is_directory(dir)) throw DataError("domain directory not found: " + dir.string());
  Dataset ds;
  ds.labels = labels;
  std::vector<std::string> classes;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) classes.push_back(e.path().filename().string());
  std::sort(classes.begin(), classes.end());
  for (const auto& cls : classes) {
    const int label = label_for(labels, cls);
    if (known_only && !labels.is_known(label)) continue;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir / cls))
      if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path().filename());
    std::sort(files.begin(), files.end());
    for (const auto& f : files)
      ds.samples.push_back(load_sample(manifest.root, fs::path(domain) / cls / f, domain, cls, label,
                                       manifest.image_size, manifest.load_masks,
                                       manifest.require_masks && known_only));
  }
  if (ds.samples.empty()) throw DataError("domain '" + domain + "' contains no images");
  return ds;
}

ManifestSplit load_manifest(const DatasetManifest& manifest, const std::vector<std::string>& source_domains) {
  const fs::path classes_file = manifest.classes_file.empty() ? manifest.root / "classes.txt" : manifest.classes_file;
  ManifestSplit split;
  split.labels = make_label_space(read_class_list(classes_file));
  const auto domains = list_domains(manifest.root);
  for (const auto& s : source_domains)
    if (std::find(domains.begin(), domains.end(), s) == domains.end())
      throw DataError("source domain '" + s + "' not found under " + manifest.root.string());
  split.source_domains = source_domains;
  split.source.labels = split.labels;
  for (const auto& s : source_domains) {
    Dataset part = load_domain(manifest, split.labels, s, /*known_only=*/true);
    split.source.samples.insert(split.source.samples.end(), std::make_move_iterator(part.samples.begin()),
                                std::make_move_iterator(part.samples.end()));
  }
  for (const auto& d : domains) {
    if (std::find(source_domains.begin(), source_domains.end(), d) != source_domains.end()) continue;
    split.targets.push_back(load_domain(manifest, split.labels, d, /*known_only=*/false));
    split.target_domains.push_back(d);
  }
  return split;
}

void write_index(const Dataset& ds, const fs::path& root, const fs::path& index_path) {
  std::ofstream out(index_path);
  if (!out) throw DataError("cannot write index " + index_path.string());
  for (const auto& s : ds.samples) {
    const auto stem = s.id.substr(s.id.find_last_of('/') + 1);
    // Locate the file on disk; the scan may have picked up any supported extension.
    fs::path rel;
    for (const char* ext : {".png", ".jpg", ".jpeg", ".PNG", ".JPG", ".JPEG"}) {
      const fs::path candidate = fs::path(s.domain) / s.class_name / (stem + ext);
      if (fs::exists(root / candidate)) {
        rel = candidate;
        break;
      }
    }
    if (rel.empty()) throw DataError("index: no image file for sample '" + s.id + "'");
    nlohmann::json rec = {{"id", s.id},     {"path", rel.generic_string()}, {"domain", s.domain},
                          {"class", s.class_name}, {"label", s.label}};
    out << rec.dump() << '\n';
  }
}

Dataset read_index(const fs::path& index_path, const fs::path& root, const LabelSpace& labels, int image_size) {
  std::ifstream in(index_path);
  if (!in) throw DataError("cannot read index " + index_path.string());
  Dataset ds;
  ds.labels = labels;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto rec = nlohmann::json::parse(line);
    SampleRecord s = load_sample(root, rec.at("path").get<std::string>(), rec.at("domain").get<std::string>(),
                                 rec.at("class").get<std::string>(), rec.at("label").get<int>(), image_size, false,
                                 false);
    s.id = rec.at("id").get<std::string>();
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Normalization compute_normalization(const std::vector<SampleRecord>& samples) {
  if (samples.empty()) throw DataError("cannot compute normalization of an empty sample set");
  std::array<double, 3> sum{}, sq{};
  double n = 0;
  for (const auto& s : samples) {
    const std::size_t hw = static_cast<std::size_t>(s.image.dim(1)) * s.image.dim(2);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < hw; ++i) {
        const double v = s.image[c * hw + i];
        sum[c] += v;
        sq[c] += v * v;
      }
    n += static_cast<double>(hw);
  }
  Normalization norm;
  for (std::size_t c = 0; c < 3; ++c) {
    const double m = sum[c] / n;
    norm.mean[c] = static_cast<float>(m);
    norm.std[c] = static_cast<float>(std::sqrt(std::max(sq[c] / n - m * m, 1e-12)));
  }
  return norm;
}

Image normalize(const Image& image, const Normalization& norm) {
  Image out(image.shape());
  const std::size_t hw = static_cast<std::size_t>(image.dim(1)) * image.dim(2);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < hw; ++i) out[c * hw + i] = (image[c * hw + i] - norm.mean[c]) / norm.std[c];
  return out;
}

std::pair<std::vector<SampleRecord>, std::vector<SampleRecord>> stratified_split(
    const std::vector<SampleRecord>& samples, double fraction, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < samples.size(); ++i) by_class[samples[i].label].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<bool> held(samples.size(), false);
  for (auto& [label, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t k = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(idx.size())));
    if (fraction > 0 && k == 0 && idx.size() >= 2) k = 1;
    k = std::min(k, idx.size() - 1);
    for (std::size_t j = 0; j < k; ++j) held[idx[j]] = true;
  }
  std::pair<std::vector<SampleRecord>, std::vector<SampleRecord>> out;
  for (std::size_t i = 0; i < samples.size(); ++i) (held[i] ? out.second : out.first).push_back(samples[i]);
  return out;
}

}  // namespace osdg::data
