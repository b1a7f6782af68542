// Command-line front end: dataset generation, training, evaluation, previews,
// feature export and the ablation grid.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "osdg/ablation.hpp"
#include "osdg/checkpoint.hpp"
#include "osdg/config.hpp"
#include "osdg/content_aug.hpp"
#include "osdg/data.hpp"
#include "osdg/error.hpp"
#include "osdg/evaluation.hpp"
#include "osdg/image_io.hpp"
#include "osdg/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace osdg;

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<int> parse_widths(const std::string& s) {
  std::vector<int> w;
  for (const auto& item : split_list(s)) {
    try {
      std::size_t used = 0;
      w.push_back(std::stoi(item, &used));
      if (used != item.size() || w.back() <= 0) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("widths: '" + s + "' is not a comma-separated list of positive integers");
    }
  }
  if (w.empty()) throw ConfigError("widths: at least one stage is required");
  return w;
}

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json metrics_json(const eval::Metrics& m) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"acc_k", m.acc_k}, {"acc_u", opt(m.acc_u)}, {"acc", m.acc}, {"hs", opt(m.hs)}, {"samples", m.samples}};
}

// ---------------------------------------------------------------------------
// Settings shared by train and ablate: a key-value file overridden by flags.

struct RunSettings {
  std::string config_file;
  std::string data;
  std::string source;
  std::string out;
  std::string ablate;
  std::string widths = "32,64,128";
  std::string masks = "sidecar_files";
  std::string edges = "gradient_magnitude";
  int edge_blur = 0;
  std::string ova_source = "edges";
  double val_fraction = 0.1;
  int image_size = 0;
  std::vector<std::string> overrides;  // key=value on the training config
  TrainConfig cfg;
};

void add_run_flags(CLI::App* cmd, RunSettings& s) {
  cmd->add_option("--config", s.config_file, "key = value file (training keys plus any flag name below)");
  cmd->add_option("--data", s.data, "dataset root: <root>/<domain>/<class>/<image>");
  cmd->add_option("--source", s.source, "comma-separated source domains");
  cmd->add_option("--out", s.out, "output directory");
  cmd->add_option("--ablate", s.ablate, "components to turn off: bs,gpsa,kd,eova,ova");
  cmd->add_option("--widths", s.widths, "encoder stage widths")->capture_default_str();
  cmd->add_option("--masks", s.masks, "mask provider: sidecar_files, oracle, all_foreground")->capture_default_str();
  cmd->add_option("--edges", s.edges, "edge operator: gradient_magnitude, external_files")->capture_default_str();
  cmd->add_option("--edge-blur", s.edge_blur, "box blur radius before edge extraction")->capture_default_str();
  cmd->add_option("--ova-source", s.ova_source, "one-vs-all positive view: edges, weak, strong")->capture_default_str();
  cmd->add_option("--val-fraction", s.val_fraction, "stratified validation share")->capture_default_str();
  cmd->add_option("--image-size", s.image_size, "resize images to this square size (0 keeps files)");
  cmd->add_option("--set", s.overrides, "training key override, e.g. --set lr=0.01 (repeatable)");
}

// File values first, then explicit flags win.
void resolve(RunSettings& s, const CLI::App* cmd) {
  KeyValues kv;
  if (!s.config_file.empty()) kv = read_key_value_file(s.config_file);
  auto from_file = [&](const char* key, const char* flag, auto& field) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    if (cmd->count(flag) == 0) {
      using F = std::decay_t<decltype(field)>;
      if constexpr (std::is_same_v<F, std::string>) {
        field = it->second;
      } else {
        try {
          std::size_t used = 0;
          if constexpr (std::is_same_v<F, int>) field = std::stoi(it->second, &used);
          else field = std::stod(it->second, &used);
          if (used != it->second.size()) throw std::invalid_argument(key);
        } catch (const std::exception&) {
          throw ConfigError(std::string(key) + ": cannot parse '" + it->second + "'");
        }
      }
    }
    kv.erase(it);
  };
  from_file("data", "--data", s.data);
  from_file("source", "--source", s.source);
  from_file("out", "--out", s.out);
  from_file("ablate", "--ablate", s.ablate);
  from_file("widths", "--widths", s.widths);
  from_file("masks", "--masks", s.masks);
  from_file("edges", "--edges", s.edges);
  from_file("edge_blur", "--edge-blur", s.edge_blur);
  from_file("ova_source", "--ova-source", s.ova_source);
  from_file("val_fraction", "--val-fraction", s.val_fraction);
  from_file("image_size", "--image-size", s.image_size);
  apply_train_keys(s.cfg, kv);
  if (!kv.empty()) throw ConfigError("unknown configuration key '" + kv.begin()->first + "'");

  KeyValues flags;
  for (const auto& o : s.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
    flags[o.substr(0, eq)] = o.substr(eq + 1);
  }
  apply_train_keys(s.cfg, flags);
  if (!flags.empty()) throw ConfigError("unknown training key '" + flags.begin()->first + "'");
  s.cfg = validate_config(s.cfg);
  if (s.data.empty()) throw ConfigError("data: a dataset root is required");
  if (s.source.empty()) throw ConfigError("source: at least one source domain is required");
  if (s.out.empty()) throw ConfigError("out: an output directory is required");
}

train::TrainOptions train_options(const RunSettings& s) {
  train::TrainOptions opt;
  opt.model.widths = parse_widths(s.widths);
  opt.val_fraction = s.val_fraction;
  switch (aug::parse_mask_kind(s.masks)) {
    case aug::MaskProvider::Kind::oracle: opt.inputs.masks = aug::MaskProvider::oracle(); break;
    case aug::MaskProvider::Kind::sidecar_files: opt.inputs.masks = aug::MaskProvider::sidecar_files(s.data); break;
    case aug::MaskProvider::Kind::all_foreground: opt.inputs.masks = aug::MaskProvider::all_foreground(); break;
  }
  opt.inputs.edges.kind = aug::parse_edge_kind(s.edges);
  opt.inputs.edges.blur_radius = s.edge_blur;
  opt.inputs.edges.root = s.data;
  return opt;
}

train::AblationSwitches switches_of(const RunSettings& s) {
  auto sw = train::ablate(s.ablate);
  sw.ova_source = train::parse_ova_source(s.ova_source);
  train::validate_switches(sw);
  return sw;
}

data::DatasetManifest manifest_of(const RunSettings& s) {
  data::DatasetManifest m;
  m.root = s.data;
  m.image_size = s.image_size;
  // The oracle provider reads masks attached at load time.
  m.load_masks = m.require_masks = aug::parse_mask_kind(s.masks) == aug::MaskProvider::Kind::oracle;
  return m;
}

json settings_json(const RunSettings& s, const std::string& command) {
  return {{"command", command},     {"data", s.data},
          {"source", split_list(s.source)}, {"out", s.out},
          {"ablate", s.ablate},       {"widths", parse_widths(s.widths)},
          {"masks", s.masks},         {"edges", s.edges},
          {"edge_blur", s.edge_blur}, {"ova_source", s.ova_source},
          {"val_fraction", s.val_fraction}, {"image_size", s.image_size},
          {"train_config", to_key_values(s.cfg)},
          {"config_hash", std::to_string(config_hash(s.cfg))}};
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::string out;
  int per_class = 25;
  int size = 32;
  std::uint64_t seed = 0;
  std::string domains = "stripes,checker,blobs";
  std::string known = "circle,square,triangle,cross";
  std::string unknown = "star,ring,ellipse";
};

int cmd_gen(const GenArgs& a) {
  data::SyntheticSpec spec;
  spec.known_classes = split_list(a.known);
  spec.unknown_classes = split_list(a.unknown);
  spec.samples_per_class_per_domain = a.per_class;
  spec.image_size = a.size;
  spec.seed = a.seed;
  const auto recipes = data::default_domains();
  for (const auto& name : split_list(a.domains)) {
    auto it = std::find_if(recipes.begin(), recipes.end(), [&](const auto& d) { return d.name == name; });
    if (it == recipes.end()) throw ConfigError("domains: no recipe named '" + name + "'");
    spec.domains.push_back(*it);
  }
  const auto ds = data::generate_synthetic(spec);
  data::write_dataset(ds, a.out);
  const double gap = data::min_domain_colour_gap(ds);
  write_json(fs::path(a.out) / "resolved_config.json",
             {{"command", "gen-synthetic"}, {"out", a.out}, {"per_class", a.per_class}, {"size", a.size},
              {"seed", a.seed}, {"domains", split_list(a.domains)}, {"known", spec.known_classes},
              {"unknown", spec.unknown_classes}, {"samples", ds.samples.size()}, {"min_colour_gap", gap}});
  std::printf("wrote %zu samples to %s (min domain colour gap %.3f)\n", ds.samples.size(), a.out.c_str(), gap);
  return 0;
}

int cmd_train(RunSettings& s, const CLI::App* cmd) {
  resolve(s, cmd);
  const auto sw = switches_of(s);
  auto opt = train_options(s);
  opt.out_dir = s.out;
  opt.on_epoch = [](const train::EpochRecord& e) {
    std::fprintf(stderr, "epoch %3d  lr %.3g  loss %.4f  val %s\n", e.epoch, e.lr, e.mean_total,
                 e.val_accuracy ? std::to_string(*e.val_accuracy).c_str() : "-");
  };
  const auto split = data::load_manifest(manifest_of(s), split_list(s.source));
  auto record = settings_json(s, "train");
  record["switches"] = train::describe(sw);
  write_json(fs::path(s.out) / "resolved_config.json", record);
  const auto result = train::run_training(split.source, s.cfg, sw, opt);
  json summary = {{"epochs", s.cfg.epochs},
                  {"steps", result.steps.size()},
                  {"best_epoch", result.best_epoch},
                  {"final_mean_loss", result.epochs.empty() ? json(nullptr) : json(result.epochs.back().mean_total)}};
  if (!result.epochs.empty() && result.epochs.back().val_accuracy)
    summary["final_val_accuracy"] = *result.epochs.back().val_accuracy;
  write_json(fs::path(s.out) / "summary.json", summary);
  std::printf("%s\n", summary.dump().c_str());
  return 0;
}

struct EvalArgs {
  std::string checkpoint, data, domains, out;
  int image_size = 0;
};

std::vector<std::string> target_domains(const std::string& data_root, const std::string& listed) {
  auto d = split_list(listed);
  return d.empty() ? data::list_domains(data_root) : d;
}

int cmd_eval(const EvalArgs& a) {
  const auto ckpt = load_checkpoint(a.checkpoint);
  data::DatasetManifest m;
  m.root = a.data;
  m.image_size = a.image_size;
  std::vector<eval::DomainResult> results;
  for (const auto& d : target_domains(a.data, a.domains)) {
    const auto ds = data::load_domain(m, ckpt.labels, d, false);
    results.push_back(eval::evaluate_domain(ckpt, ds, d));
    eval::write_predictions(results.back().predictions, fs::path(a.out) / ("predictions_" + d + ".ndjson"));
  }
  eval::write_metrics_summary(results, fs::path(a.out) / "metrics.json");
  write_json(fs::path(a.out) / "resolved_config.json",
             {{"command", "eval"}, {"checkpoint", a.checkpoint}, {"data", a.data},
              {"domains", target_domains(a.data, a.domains)}, {"image_size", a.image_size},
              {"config_hash", std::to_string(config_hash(ckpt.config))}, {"switches", ckpt.switches}});
  for (const auto& r : results)
    std::printf("%-12s %s\n", r.domain.c_str(), metrics_json(r.metrics).dump().c_str());
  return 0;
}

struct PreviewArgs {
  std::string data, domain, out, masks = "sidecar_files";
  int n = 4;
  int edge_blur = 0;
  int image_size = 0;
};

int cmd_preview(const PreviewArgs& a) {
  data::DatasetManifest m;
  m.root = a.data;
  m.image_size = a.image_size;
  m.load_masks = aug::parse_mask_kind(a.masks) == aug::MaskProvider::Kind::oracle;
  const auto labels = make_label_space(data::read_class_list(fs::path(a.data) / "classes.txt"));
  const std::string domain = a.domain.empty() ? data::list_domains(a.data).front() : a.domain;
  const auto ds = data::load_domain(m, labels, domain, false);
  int n = a.n;
  if (n > static_cast<int>(ds.samples.size())) {
    std::fprintf(stderr, "warning: %d previews requested but '%s' has %zu samples; clipping\n", n, domain.c_str(),
                 ds.samples.size());
    n = static_cast<int>(ds.samples.size());
  }
  aug::MaskProvider provider = aug::MaskProvider::all_foreground();
  switch (aug::parse_mask_kind(a.masks)) {
    case aug::MaskProvider::Kind::oracle: provider = aug::MaskProvider::oracle(); break;
    case aug::MaskProvider::Kind::sidecar_files: provider = aug::MaskProvider::sidecar_files(a.data); break;
    case aug::MaskProvider::Kind::all_foreground: break;
  }
  const auto fill = data::compute_normalization(ds.samples).mean;
  aug::EdgeOperator edges;
  edges.blur_radius = a.edge_blur;
  fs::create_directories(a.out);
  for (int i = 0; i < n; ++i) {
    const auto& s = ds.samples[static_cast<std::size_t>(i)];
    const auto masked = aug::suppress_background(s, provider, fill).image;
    const auto edge = *aug::extract_edges(s, edges).edge;
    const int H = s.image.dim(1), W = s.image.dim(2);
    Image grid({3, H, 3 * W});
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          grid.at(c, y, x) = s.image.at(c, y, x);
          grid.at(c, y, W + x) = masked.at(c, y, x);
          grid.at(c, y, 2 * W + x) = edge.at(c, y, x);
        }
    char name[32];
    std::snprintf(name, sizeof(name), "triptych_%03d.png", i);
    io::write_png(fs::path(a.out) / name, grid);
  }
  write_json(fs::path(a.out) / "resolved_config.json",
             {{"command", "preview-aug"}, {"data", a.data}, {"domain", domain}, {"n", n}, {"masks", a.masks},
              {"edge_blur", a.edge_blur}, {"fill", fill}, {"image_size", a.image_size}});
  std::printf("wrote %d triptychs to %s\n", n, a.out.c_str());
  return 0;
}

struct ExportArgs {
  std::string checkpoint, data, domains, out;
  int image_size = 0;
};

int cmd_export(const ExportArgs& a) {
  const auto ckpt = load_checkpoint(a.checkpoint);
  auto model = model_from_checkpoint(ckpt);
  data::DatasetManifest m;
  m.root = a.data;
  m.image_size = a.image_size;
  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream csv(out);
  if (!csv) throw DataError("cannot write " + a.out);
  csv << "id,domain,label";
  for (int f = 0; f < model.feature_dim(); ++f) csv << ",f" << f;
  csv << '\n';
  model::GpsaStates gpsa = ckpt.gpsa;
  style::Rng rng(0);  // untouched in eval mode
  std::size_t rows = 0;
  for (const auto& d : target_domains(a.data, a.domains)) {
    const auto ds = data::load_domain(m, ckpt.labels, d, false);
    for (std::size_t begin = 0; begin < ds.samples.size(); begin += 64) {
      const std::size_t end = std::min(ds.samples.size(), begin + 64);
      const int B = static_cast<int>(end - begin);
      const auto& first = ds.samples[begin].image;
      Tensor<float> batch({B, 3, first.dim(1), first.dim(2)});
      const std::size_t chw = first.size();
      for (std::size_t i = begin; i < end; ++i) {
        const auto x = data::normalize(ds.samples[i].image, ckpt.normalization);
        std::copy(x.storage().begin(), x.storage().end(), batch.storage().begin() + (i - begin) * chw);
      }
      const auto pooled = model.forward(batch, {}, gpsa, rng).pooled.value();
      for (int b = 0; b < B; ++b) {
        const auto& s = ds.samples[begin + static_cast<std::size_t>(b)];
        csv << s.id << ',' << s.domain << ',' << s.label;
        char buf[32];
        for (int f = 0; f < pooled.dim(1); ++f) {
          std::snprintf(buf, sizeof(buf), ",%.9g", static_cast<double>(pooled.at(b, f)));
          csv << buf;
        }
        csv << '\n';
        ++rows;
      }
    }
  }
  write_json(out.parent_path() / (out.stem().string() + ".config.json"),
             {{"command", "export-features"}, {"checkpoint", a.checkpoint}, {"data", a.data},
              {"domains", target_domains(a.data, a.domains)}, {"rows", rows}, {"features", model.feature_dim()}});
  std::printf("wrote %zu rows to %s\n", rows, a.out.c_str());
  return 0;
}

struct AblateArgs {
  std::string targets;
  std::string seeds = "0,1,2";
  std::string variants = "ce,ova,de_kd,de_kd_ova,debug";
  unsigned parallel = 0;
};

int cmd_ablate(RunSettings& s, const AblateArgs& a, const CLI::App* cmd) {
  resolve(s, cmd);
  if (!s.ablate.empty()) throw ConfigError("ablate: the grid sets the switches; drop --ablate");
  const auto split = data::load_manifest(manifest_of(s), split_list(s.source));
  std::vector<data::Dataset> targets;
  std::vector<std::string> names;
  const auto wanted = split_list(a.targets);
  for (std::size_t i = 0; i < split.targets.size(); ++i)
    if (wanted.empty() || std::find(wanted.begin(), wanted.end(), split.target_domains[i]) != wanted.end()) {
      targets.push_back(split.targets[i]);
      names.push_back(split.target_domains[i]);
    }
  if (targets.empty()) throw ConfigError("ablate: no target domain selected");
  std::vector<ablation::Variant> variants;
  for (const auto& v : split_list(a.variants)) variants.push_back(ablation::variant_by_name(v));
  ablation::GridOptions opt;
  opt.train = train_options(s);
  opt.parallel = a.parallel;
  opt.out_dir = s.out;
  opt.seeds.clear();
  for (const auto& v : split_list(a.seeds)) opt.seeds.push_back(std::stoull(v));

  auto record = settings_json(s, "ablate");
  record["targets"] = names;
  record["seeds"] = opt.seeds;
  record["variants"] = split_list(a.variants);
  write_json(fs::path(s.out) / "resolved_config.json", record);

  const auto rows = ablation::run_grid(split.source, targets, names, s.cfg, variants, opt);
  const auto table = ablation::format_table(rows);
  std::ofstream(fs::path(s.out) / "table.txt") << table;
  ablation::write_table_json(rows, fs::path(s.out) / "table.json");
  std::printf("%s", table.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open-set single-source domain generalization toolkit"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen-synthetic", "render the synthetic multi-domain shapes benchmark");
  c_gen->add_option("--out", gen.out, "output root")->required();
  c_gen->add_option("--per-class", gen.per_class, "samples per class per domain")->capture_default_str();
  c_gen->add_option("--size", gen.size, "image side in pixels")->capture_default_str();
  c_gen->add_option("--seed", gen.seed, "generator seed")->capture_default_str();
  c_gen->add_option("--domains", gen.domains, "domain recipes")->capture_default_str();
  c_gen->add_option("--known", gen.known, "known shape classes")->capture_default_str();
  c_gen->add_option("--unknown", gen.unknown, "unknown shape classes")->capture_default_str();

  RunSettings train_s;
  auto* c_train = app.add_subcommand("train", "train on the source domains");
  add_run_flags(c_train, train_s);

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "open-set evaluation of a checkpoint on target domains");
  c_eval->add_option("--checkpoint", ev.checkpoint, "checkpoint file")->required();
  c_eval->add_option("--data", ev.data, "dataset root")->required();
  c_eval->add_option("--domains", ev.domains, "domains to evaluate (default: all)");
  c_eval->add_option("--out", ev.out, "output directory")->required();
  c_eval->add_option("--image-size", ev.image_size, "resize images to this square size (0 keeps files)");

  PreviewArgs pv;
  auto* c_prev = app.add_subcommand("preview-aug", "write original / masked / edge-map triptychs");
  c_prev->add_option("--data", pv.data, "dataset root")->required();
  c_prev->add_option("--domain", pv.domain, "domain to preview (default: first)");
  c_prev->add_option("-n,--n", pv.n, "number of samples")->capture_default_str();
  c_prev->add_option("--out", pv.out, "output directory")->required();
  c_prev->add_option("--masks", pv.masks, "mask provider")->capture_default_str();
  c_prev->add_option("--edge-blur", pv.edge_blur, "box blur radius before edge extraction");
  c_prev->add_option("--image-size", pv.image_size, "resize images to this square size (0 keeps files)");

  ExportArgs ex;
  auto* c_exp = app.add_subcommand("export-features", "dump pooled encoder features as CSV");
  c_exp->add_option("--checkpoint", ex.checkpoint, "checkpoint file")->required();
  c_exp->add_option("--data", ex.data, "dataset root")->required();
  c_exp->add_option("--domains", ex.domains, "domains to export (default: all)");
  c_exp->add_option("--out", ex.out, "CSV file")->required();
  c_exp->add_option("--image-size", ex.image_size, "resize images to this square size (0 keeps files)");

  RunSettings abl_s;
  AblateArgs abl;
  auto* c_abl = app.add_subcommand("ablate", "train and evaluate the component grid over seeds");
  add_run_flags(c_abl, abl_s);
  c_abl->add_option("--targets", abl.targets, "target domains (default: all non-source)");
  c_abl->add_option("--seeds", abl.seeds, "comma-separated seeds")->capture_default_str();
  c_abl->add_option("--variants", abl.variants, "grid entries")->capture_default_str();
  c_abl->add_option("--parallel", abl.parallel, "concurrent runs (0 = hardware threads)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*c_gen) return cmd_gen(gen);
    if (*c_train) return cmd_train(train_s, c_train);
    if (*c_eval) return cmd_eval(ev);
    if (*c_prev) return cmd_preview(pv);
    if (*c_exp) return cmd_export(ex);
    if (*c_abl) return cmd_ablate(abl_s, abl, c_abl);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
