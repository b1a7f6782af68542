// Acceptance harness: prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. `--quick` shrinks the ablation for local
// iteration; ctest runs the full version.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>

#include "gradcheck.hpp"
#include "oracle.hpp"
#include "osdg/ablation.hpp"
#include "osdg/checkpoint.hpp"
#include "osdg/error.hpp"
#include "osdg/evaluation.hpp"
#include "osdg/losses.hpp"
#include "osdg/ops.hpp"
#include "osdg/style_uncertainty.hpp"
#include "osdg/trainer.hpp"

using namespace osdg;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double rel_err(double a, long double ref) {
  const long double d = std::abs(static_cast<long double>(a) - ref);
  return static_cast<double>(d / std::max(std::abs(ref), 1e-300L));
}

FeatureMap<double> random_map(int B, int C, int H, int W, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> scale(0.2, 3.0), shift(-2.0, 2.0);
  Tensor<double> t({B, C, H, W});
  std::normal_distribution<double> n(0.0, 1.0);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const double s = scale(rng), m = shift(rng);
      for (int i = 0; i < H * W; ++i) t[(static_cast<std::size_t>(b) * C + c) * H * W + i] = m + s * n(rng);
    }
  return {std::move(t), "stage"};
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> dim(2, 6), lab(0, 4);
  double worst_stat = 0, worst_loss = 0;
  constexpr int kTrials = 100;
  for (int t = 0; t < kTrials; ++t) {
    const int B = dim(rng), C = dim(rng), H = dim(rng), W = dim(rng);
    const auto z = random_map(B, C, H, W, rng);
    const auto st = style::instance_stats(z);
    const auto ref = oracle::instance_stats(z.data.storage(), B, C, H, W);
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        worst_stat = std::max(worst_stat, rel_err(st.mu.at(b, c), ref.mu[b][c]));
        worst_stat = std::max(worst_stat, rel_err(st.var.at(b, c), ref.var[b][c]));
      }
    // Batch variance of the statistics, then one moving-average update.
    const auto bsv = style::batch_stat_variance(st);
    style::GlobalUncertainty gu(C, 0.5 + 0.4 * (t % 5) / 4.0);
    std::uniform_real_distribution<double> u0(0.0, 2.0);
    for (int c = 0; c < C; ++c) {
      gu.u_mu[c] = u0(rng);
      gu.u_sigma[c] = u0(rng);
    }
    const auto before = gu;
    style::update_global(gu, bsv);
    for (int c = 0; c < C; ++c) {
      std::vector<long double> mus(B), sigmas(B);
      for (int b = 0; b < B; ++b) {
        mus[b] = ref.mu[b][c];
        sigmas[b] = std::sqrt(ref.var[b][c] + 1e-6L);
      }
      const long double vm = oracle::population_variance(mus), vs = oracle::population_variance(sigmas);
      worst_stat = std::max(worst_stat, rel_err(bsv.var_mu[c], vm));
      worst_stat = std::max(worst_stat, rel_err(bsv.var_sigma[c], vs));
      const long double a = before.alpha;
      worst_stat = std::max(worst_stat, rel_err(gu.u_mu[c], a * before.u_mu[c] + (1 - a) * vm));
      worst_stat = std::max(worst_stat, rel_err(gu.u_sigma[c], a * before.u_sigma[c] + (1 - a) * vs));
    }

    // Losses.
    const int K = 5;
    std::vector<int> y(B);
    for (auto& v : y) v = lab(rng);
    const Tensor<double> s({B, C, H, W}, oracle::random_vector(z.data.size(), rng, 2.0));
    const Tensor<double> te({B, C, H, W}, oracle::random_vector(z.data.size(), rng, 2.0));
    const double tau = 0.5 + (t % 4) * 0.5;
    worst_loss = std::max(worst_loss, std::abs(losses::kd_loss(s, te, tau) -
                                               static_cast<double>(oracle::kd(s.storage(), te.storage(), B, C, H, W, tau))));
    const Tensor<double> le({B, K, 2}, oracle::random_vector(B * K * 2, rng, 3.0));
    const Tensor<double> li({B, K, 2}, oracle::random_vector(B * K * 2, rng, 3.0));
    const auto pe = oracle::binary_probs(le.storage(), B, K), pi = oracle::binary_probs(li.storage(), B, K);
    worst_loss = std::max(worst_loss, std::abs(losses::ova_loss(losses::binary_probs(li), y) -
                                               static_cast<double>(oracle::ova(pi, y))));
    worst_loss = std::max(worst_loss,
                          std::abs(losses::eova_loss(losses::binary_probs(le), losses::binary_probs(li), y) -
                                   static_cast<double>(oracle::eova(pe, pi, y))));
  }
  const double secs = seconds_since(t0);
  const bool pass = worst_stat <= 1e-6 && worst_loss <= 1e-6 && secs < 30;
  return {pass, fmt("%d inputs each; max rel err stats %.2e, max abs err losses %.2e, %.2fs", kTrials, worst_stat,
                    worst_loss, secs)};
}

Outcome criterion2() {
  std::mt19937_64 rng(7);
  style::Rng noise(8);
  double worst_identity = 0, worst_mu = 0, worst_sigma = 0;
  for (int t = 0; t < 100; ++t) {
    const auto z = random_map(3, 4, 5, 5, rng);
    const auto st = style::instance_stats(z);
    // Zero uncertainty: any draw leaves the statistics where they are.
    style::GlobalUncertainty zero(4, 0.8);
    const auto p0 = style::sample_perturbation(st, zero, noise);
    // Zero draws under a nonzero uncertainty.
    style::GlobalUncertainty gu(4, 0.8);
    for (int c = 0; c < 4; ++c) gu.u_mu[c] = gu.u_sigma[c] = 0.5 + c;
    const auto p1 = style::perturbation_from_noise(st, gu, Tensor<double>({3, 4}), Tensor<double>({3, 4}));
    for (const auto* p : {&p0, &p1}) {
      const auto out = style::restyle(z, st, *p);
      for (std::size_t i = 0; i < z.data.size(); ++i)
        worst_identity = std::max(worst_identity, std::abs(out.data[i] - z.data[i]));
    }
    // Moment property under a genuine perturbation.
    const auto p = style::sample_perturbation(st, gu, noise);
    const auto st2 = style::instance_stats(style::restyle(z, st, p));
    for (std::size_t i = 0; i < st.mu.size(); ++i) {
      worst_mu = std::max(worst_mu, std::abs(st2.mu[i] - p.beta[i]));
      worst_sigma = std::max(worst_sigma, std::abs(std::sqrt(st2.var[i]) - std::abs(p.gamma[i])));
    }
  }
  const bool pass = worst_identity <= 1e-5 && worst_mu <= 1e-4 && worst_sigma <= 1e-4;
  return {pass, fmt("100 maps; identity max-abs %.2e, moment errors mean %.2e / spread %.2e", worst_identity, worst_mu,
                    worst_sigma)};
}

Outcome criterion3() {
  double worst = 0;
  bool finite = true;
  for (double alpha : {0.5, 0.6, 0.7, 0.8, 0.9}) {
    style::GlobalUncertainty gu(2, alpha);
    const double c = 0.37;
    style::BatchStatVariance<double> bsv{Tensor<double>({2}, c), Tensor<double>({2}, 2 * c)};
    for (int n = 1; n <= 200; ++n) {
      style::update_global(gu, bsv);
      const double expect = 1 - std::pow(alpha, n);
      worst = std::max({worst, std::abs(gu.u_mu[0] - c * expect), std::abs(gu.u_sigma[1] - 2 * c * expect)});
      finite = finite && std::isfinite(gu.u_mu[0]) && std::isfinite(gu.u_sigma[1]);
    }
  }
  return {worst <= 1e-9 && finite, fmt("alpha 0.5..0.9, 200 updates each; max err %.2e, finite %s", worst,
                                       finite ? "yes" : "no")};
}

Outcome criterion4() {
  const auto t0 = Clock::now();
  data::SyntheticSpec spec;
  spec.domains = data::default_domains();
  spec.domains.resize(2);
  spec.unknown_classes = {};
  spec.samples_per_class_per_domain = 3;
  spec.image_size = 8;
  spec.seed = 3;
  const auto ds = data::generate_synthetic(spec);
  std::vector<const SampleRecord*> members;
  for (std::size_t i = 0; i < 6; ++i) members.push_back(&ds.samples[i * ds.samples.size() / 6]);
  const auto norm = data::compute_normalization(ds.samples);
  train::BranchInputs inputs;
  inputs.fill = norm.mean;
  const auto sw = train::ablate("gpsa");
  std::mt19937_64 aug_rng(0);
  const auto batch = train::make_batch<double>(members, ds.labels, inputs, norm, sw, aug_rng);

  model::Model<double> m({3, {4}, 4}, {}, 2);
  auto gpsa = m.make_gpsa_states(0.8);
  TrainConfig cfg;
  cfg.lambda1 = 0.5;
  cfg.lambda2 = 2.0;
  cfg.tau = 0.5;
  style::Rng rng(0);
  const std::span<const int> y(batch.labels);
  const model::ForwardOptions branch{style::Mode::train, false, 0.0, true};
  const model::ForwardOptions edge{style::Mode::train, false, 0.0, false};
  const Tensor<double> teacher = m.forward(batch.suppressed, branch, gpsa, rng).pre_pool.value();

  enum Term { ce, kd, eova, all };
  auto objective = [&](Term term) {
    const auto o = m.forward(batch.original, branch, gpsa, rng);
    const auto o_bs = m.forward(batch.suppressed, branch, gpsa, rng);
    const auto o_edge = m.forward(batch.positive, edge, gpsa, rng);
    const auto l_ce = ag::weighted_sum<double>(
        {losses::ce_loss(o.class_logits, y), losses::ce_loss(o_bs.class_logits, y)}, {0.5, 0.5});
    const auto l_kd = losses::kd_loss(o.pre_pool, teacher, cfg.tau);
    const auto l_eova = losses::eova_loss(o_edge.binary_logits, o.binary_logits, y);
    if (term == ce) return l_ce;
    if (term == kd) return l_kd;
    if (term == eova) return l_eova;
    return ag::weighted_sum<double>({l_ce, l_eova, l_kd}, {1.0, cfg.lambda1, cfg.lambda2});
  };

  std::string detail = fmt("%zu params;", m.parameter_count());
  bool pass = m.parameter_count() <= 200;
  const char* names[] = {"ce", "kd", "eova", "all"};
  for (Term term : {ce, kd, eova, all}) {
    m.zero_grad();
    // The full objective's gradient comes from the training step itself.
    ag::backward(term == all ? train::step_loss(batch, m, gpsa, cfg, sw, rng).total : objective(term));
    gradcheck::Agreement agree;
    for (auto& [name, p] : m.parameters()) {
      const Tensor<double> analytic = p.grad();
      gradcheck::tally(agree, analytic,
                       gradcheck::central(p.mutable_value(), [&] { return objective(term).value()[0]; }, 1e-4), 1e-4);
    }
    pass = pass && agree.fraction() >= 0.95;
    detail += fmt(" %s %.1f%%", names[term], 100 * agree.fraction());
  }

  // Distillation never sends gradient into the teacher branch.
  model::Model<double> student({3, {4}, 4}, {}, 1), teacher_net({3, {4}, 4}, {}, 2);
  auto gs = student.make_gpsa_states(0.8), gt = teacher_net.make_gpsa_states(0.8);
  const auto so = student.forward(batch.original, edge, gs, rng);
  const auto to = teacher_net.forward(batch.suppressed, edge, gt, rng);
  student.zero_grad();
  teacher_net.zero_grad();
  ag::backward(losses::kd_loss(so.pre_pool, to.pre_pool.value(), 1.0));
  double teacher_abs = 0;
  for (auto& [name, p] : teacher_net.parameters())
    for (double g : p.grad().storage()) teacher_abs += std::abs(g);
  pass = pass && teacher_abs == 0.0;
  const double secs = seconds_since(t0);
  pass = pass && secs < 120;
  detail += fmt("; teacher grad sum %.1f; %.2fs", teacher_abs, secs);
  return {pass, detail};
}

Outcome criterion5() {
  const auto labels = make_label_space({"a", "b", "c", "d"});
  const int U = labels.unknown_token();
  bool pass = eval::entropy_threshold(4) == 1.0;
  pass = pass && eval::decide(std::vector<double>(4, 0.7), labels).decision == U;
  pass = pass && eval::decide(std::vector<double>{0, 60, 0, 0}, labels).decision == 1;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 2.0);
  int cold_unknown = 0, hot_unknown = 0;
  const int N = 200;
  for (int i = 0; i < N; ++i) {
    std::vector<double> l(4), cold(4), hot(4);
    for (auto& v : l) v = n(rng);
    for (int k = 0; k < 4; ++k) {
      cold[k] = l[k] * 1e-6;
      hot[k] = l[k] * 1e6;
    }
    cold_unknown += eval::decide(cold, labels).decision == U;
    hot_unknown += eval::decide(hot, labels).decision == U;
  }
  pass = pass && cold_unknown == N && hot_unknown == 0;
  return {pass, fmt("threshold(4) = %.3f bit; scaled t->0: %d%% unknown, t->inf: %d%% unknown",
                    eval::entropy_threshold(4), 100 * cold_unknown / N, 100 * hot_unknown / N)};
}

Outcome criterion6() {
  const double pacs = eval::combine(48.78, 58.05, 4).acc;
  const double office = eval::combine(75.04, 65.28, 10).acc;
  const bool pass = std::abs(pacs - 50.63) <= 0.01 && std::abs(office - 74.15) <= 0.01;
  return {pass, fmt("photo fixture acc %.4f (50.63), office31 fixture acc %.4f (74.15)", pacs, office)};
}

// The synthetic benchmark: two source styles, one held-out target style.
struct Benchmark {
  data::Dataset source, target;
};

Benchmark make_benchmark(int per_class, int size, std::uint64_t seed) {
  data::SyntheticSpec spec;
  spec.domains = data::default_domains();
  spec.samples_per_class_per_domain = per_class;
  spec.image_size = size;
  spec.seed = seed;
  const auto all = data::generate_synthetic(spec);
  Benchmark b;
  b.source.labels = b.target.labels = all.labels;
  const std::string target = spec.domains.back().name;
  for (const auto& s : all.samples) {
    if (s.domain == target) b.target.samples.push_back(s);
    else if (all.labels.is_known(s.label)) b.source.samples.push_back(s);
  }
  return b;
}

Outcome criterion7(bool quick, const fs::path& out_dir) {
  const auto t0 = Clock::now();
  const auto bench = make_benchmark(quick ? 40 : 175, 32, 7);
  TrainConfig cfg;
  cfg.epochs = quick ? 6 : 30;
  cfg.lr = 0.03;
  cfg.lr_decay_every = quick ? 4 : 20;
  ablation::GridOptions opt;
  opt.train.model.widths = {16, 32, 64};
  opt.seeds = {0, 1, 2};
  std::vector<ablation::Variant> variants = {ablation::variant_by_name("ce"), ablation::variant_by_name("de_kd_ova"),
                                             ablation::variant_by_name("debug")};
  const auto rows = ablation::run_grid(bench.source, {bench.target}, {"blobs"}, cfg, variants, opt);
  const auto table = ablation::format_table(rows);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream(out_dir / "acceptance_ablation.txt") << table;
    ablation::write_table_json(rows, out_dir / "acceptance_ablation.json");
  }
  std::printf("%s", table.c_str());
  const auto& ce = ablation::mean_row(rows, "ce", "blobs").metrics;
  const auto& ova = ablation::mean_row(rows, "de_kd_ova", "blobs").metrics;
  const auto& full = ablation::mean_row(rows, "debug", "blobs").metrics;
  const double hs_gain = full.hs.value_or(0) - ce.hs.value_or(0);
  const double accu_gain = full.acc_u.value_or(0) - ova.acc_u.value_or(0);
  const double secs = seconds_since(t0);
  const bool pass = hs_gain >= 5 && accu_gain >= 3 && secs <= 30 * 60;
  return {pass, fmt("%zu source images, %d epochs x 3 seeds; hs full %.2f vs ce %.2f (%+.2f, need >= 5); "
                    "acc_u edges %.2f vs originals %.2f (%+.2f, need >= 3); %.0fs",
                    bench.source.samples.size(), cfg.epochs, full.hs.value_or(0), ce.hs.value_or(0), hs_gain,
                    full.acc_u.value_or(0), ova.acc_u.value_or(0), accu_gain, secs)};
}

Outcome criterion8(const fs::path& scratch) {
  const auto bench = make_benchmark(12, 16, 3);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.lr = 0.03;
  cfg.seed = 11;
  train::TrainOptions opt;
  opt.model.widths = {8, 16, 32};
  opt.out_dir = scratch / "run_a";
  const auto a = train::run_training(bench.source, cfg, train::full_method(), opt);
  opt.out_dir = scratch / "run_b";
  const auto b = train::run_training(bench.source, cfg, train::full_method(), opt);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const bool logs_equal = !a.steps.empty() && a.steps == b.steps &&
                          slurp(scratch / "run_a" / "steps.jsonl") == slurp(scratch / "run_b" / "steps.jsonl");

  const auto direct = eval::evaluate_domain(a.final_checkpoint, bench.target, "blobs");
  const auto loaded = eval::evaluate_domain(load_checkpoint(scratch / "run_a" / "final.ckpt", bench.source.labels),
                                            bench.target, "blobs");
  eval::write_predictions(direct.predictions, scratch / "direct.ndjson");
  eval::write_predictions(loaded.predictions, scratch / "loaded.ndjson");
  const bool dumps_equal = slurp(scratch / "direct.ndjson") == slurp(scratch / "loaded.ndjson");
  return {logs_equal && dumps_equal,
          fmt("%zu steps logged twice: %s; evaluation dump after save/load: %s", a.steps.size(),
              logs_equal ? "identical" : "DIFFERENT", dumps_equal ? "bit-identical" : "DIFFERENT")};
}

}  // namespace

int main(int argc, char** argv) {
  bool quick = false;
  fs::path out_dir;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--quick") == 0) quick = true;
    else if (std::strcmp(argv[i], "--out") == 0 && i + 1 < argc) out_dir = argv[++i];
  }
  const fs::path scratch = fs::temp_directory_path() / "osdg_acceptance";
  fs::remove_all(scratch);
  fs::create_directories(scratch);

  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "reference oracles", criterion1},
      {2, "style augmentation identity and moments", criterion2},
      {3, "moving-average closed form", criterion3},
      {4, "gradient checks", criterion4},
      {5, "inference contract", criterion5},
      {6, "metric fixtures", criterion6},
      {7, "desk-scale ablation", [&] { return criterion7(quick, out_dir); }},
      {8, "determinism and persistence", [&] { return criterion8(scratch); }},
  };
  std::vector<std::string> lines;
  bool all = true;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    lines.push_back(fmt("[%s] %d %s: %s", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str()));
    std::printf("%s\n", lines.back().c_str());
    std::fflush(stdout);
  }
  std::printf("\nsummary\n");
  for (const auto& l : lines) std::printf("%s\n", l.c_str());
  fs::remove_all(scratch);
  return all ? 0 : 1;
}
