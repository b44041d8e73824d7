// rwseg: command-line driver for the random-walk segmentation refiner.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "rwseg/bench.hpp"
#include "rwseg/error.hpp"
#include "rwseg/nrvf.hpp"
#include "rwseg/outputs.hpp"
#include "rwseg/pipeline.hpp"
#include "rwseg/reference.hpp"
#include "rwseg/synthetic.hpp"

namespace fs = std::filesystem;
using namespace rwseg;

namespace {

constexpr int kExitPipelineError = 1;
constexpr int kExitUsage = 2;

struct CommonFlags {
  double alpha = 0.9;
  double beta = 0.5;
  double c = 1.0;
  double epsilon_self = 1e-2;
  int steps = 40;
  double tolerance = 0.0;  // > 0: derive steps from the residual bound
  std::string mode = "truncated";
  std::string fusion = "weighted";
  std::string affinity = "fused";
  std::string order = "per-head";
  std::string nonneg = "shift";
  std::uint64_t seed = 0;
  std::string out;
};

void add_walk_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--alpha", f.alpha, "Probability of taking another step, in (0,1)")
      ->capture_default_str();
  cmd->add_option("--beta", f.beta, "Global/local mix in [0,1]")->capture_default_str();
  cmd->add_option("--c", f.c, "Head-weighting temperature")->capture_default_str();
  cmd->add_option("--epsilon-self", f.epsilon_self, "Local self-transition affinity")
      ->capture_default_str();
  cmd->add_option("--steps", f.steps, "Truncated walk length L")->capture_default_str();
  cmd->add_option("--tolerance", f.tolerance,
                  "Pick the smallest L with N*alpha^(L+1) <= tolerance (overrides --steps)");
  cmd->add_option("--mode", f.mode, "truncated | exact-dense | exact-woodbury")
      ->capture_default_str()
      ->check(CLI::IsMember({"truncated", "exact-dense", "exact-woodbury"}));
  cmd->add_option("--order", f.order, "per-head | raw")
      ->capture_default_str()
      ->check(CLI::IsMember({"per-head", "raw"}));
  cmd->add_option("--nonneg", f.nonneg, "shift | clamp")
      ->capture_default_str()
      ->check(CLI::IsMember({"shift", "clamp"}));
  cmd->add_option("--seed", f.seed, "Seed recorded in the manifest / used by generators")
      ->capture_default_str();
}

void add_fusion_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--fusion", f.fusion, "single | mean | weighted")
      ->capture_default_str()
      ->check(CLI::IsMember({"single", "mean", "weighted"}));
  cmd->add_option("--affinity", f.affinity, "global | local | fused")
      ->capture_default_str()
      ->check(CLI::IsMember({"global", "local", "fused"}));
}

PipelineOptions to_options(const CommonFlags& f, Index nodes) {
  PipelineOptions o;
  o.walk.alpha = f.alpha;
  o.walk.fusion.beta = f.beta;
  o.walk.fusion.epsilon_self = f.epsilon_self;
  o.walk.temperature = f.c;
  o.walk.steps = f.steps;
  if (f.tolerance > 0.0) {
    o.walk.residual_tolerance = f.tolerance;
    o.walk.steps = steps_for_tolerance(f.alpha, nodes, f.tolerance);
  }
  o.walk.mode = parse_walk_mode(f.mode);
  o.fusion = parse_fusion(f.fusion);
  o.affinity = parse_affinity(f.affinity);
  o.order = parse_order(f.order);
  o.nonneg = parse_nonneg(f.nonneg);
  return o;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  nrvf::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::pair<int, int> parse_size(const std::string& text) {
  int h = 0, w = 0;
  char x = 0;
  std::istringstream in(text);
  if (!(in >> h >> x >> w) || (x != 'x' && x != 'X') || h < 1 || w < 1) {
    throw CLI::ValidationError("size", "expected HxW, got '" + text + "'");
  }
  return {h, w};
}

// --- refine ----------------------------------------------------------------

void refine_one(const fs::path& input, const fs::path& out_dir, const CommonFlags& flags,
                std::pair<int, int> upsample) {
  const nrvf::BundleFile bundle = nrvf::load_bundle(input);
  const PipelineOptions options = to_options(flags, bundle.features.nodes());
  PipelineResult result = run_pipeline(bundle, options, input.string());
  result.manifest.config.seed = flags.seed;
  result.manifest.config.upsample_h = upsample.first;
  result.manifest.config.upsample_w = upsample.second;
  const ClassMask mask = upsample.first > 0
                             ? upsample_nearest(result.mask, upsample.first, upsample.second)
                             : result.mask;
  save_outputs(result.probabilities, mask, result.manifest, out_dir);
}

int cmd_refine(const std::string& input, const CommonFlags& flags, int jobs,
               const std::string& upsample_text) {
  const auto upsample = upsample_text.empty() ? std::pair{0, 0} : parse_size(upsample_text);
  const fs::path out = flags.out.empty() ? fs::path("rwseg_out") : fs::path(flags.out);
  if (!fs::is_directory(input)) {
    refine_one(input, out, flags, upsample);
    std::cout << "wrote " << (out / "mask.pgm").string() << "\n";
    return 0;
  }

  std::vector<fs::path> inputs;
  for (const auto& entry : fs::directory_iterator(input)) {
    if (entry.is_regular_file() && entry.path().extension() == ".nrvf") inputs.push_back(entry.path());
  }
  std::sort(inputs.begin(), inputs.end());
  std::atomic<std::size_t> next{0};
  std::atomic<int> failures{0};
  std::mutex log;
  auto worker = [&]() {
    for (std::size_t i = next++; i < inputs.size(); i = next++) {
      try {
        refine_one(inputs[i], out / inputs[i].stem(), flags, upsample);
      } catch (const Error& e) {
        ++failures;
        std::lock_guard lock(log);
        std::cerr << inputs[i].string() << ": error: " << e.what() << "\n";
      }
    }
  };
  std::vector<std::thread> pool;
  for (int j = 0; j < std::max(1, jobs); ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  std::cout << "processed " << inputs.size() << " bundles, " << failures << " failed\n";
  return failures == 0 ? 0 : kExitPipelineError;
}

// --- verify ----------------------------------------------------------------

int cmd_verify(std::uint64_t seed, bool quick) {
  std::mt19937_64 rng(seed);
  reference::ExactnessParams exact;
  reference::TailParams tail;
  reference::WoodburyParams woodbury;
  reference::PathParams path;
  reference::HeadWeightingParams weighting;
  if (quick) {
    exact.instances = 20;
    tail.instances_per_case = 1;
    woodbury.instances = 6;
    path.instances = 2;
    weighting.vectors = 200;
  }
  std::vector<reference::CheckResult> results{
      reference::check_exact_dense(exact, rng), reference::check_tail_equality(tail, rng),
      reference::check_woodbury(woodbury, rng), reference::check_path_equivalence(path, rng),
      reference::check_entropy_fusion(weighting, rng)};

  bool ok = true;
  double final_rows = 0.0;
  double iterate_rows = 0.0;
  for (const auto& r : results) {
    std::cout << (r.passed ? "ok   " : "FAIL ") << r.name << ": max deviation " << r.max_deviation
              << " (tol " << r.tolerance << ") [" << r.detail << "]\n";
    ok = ok && r.passed;
    final_rows = std::max(final_rows, r.final_row_sum_error);
    iterate_rows = std::max(iterate_rows, r.intermediate_row_sum_error);
  }
  const bool rows_ok = final_rows <= 1e-5 && iterate_rows <= 1e-6;
  std::cout << (rows_ok ? "ok   " : "FAIL ") << "row sums: final " << final_rows
            << " (tol 1e-05), iterates " << iterate_rows << " (tol 1e-06)\n";
  return ok && rows_ok ? 0 : kExitPipelineError;
}

// --- synth -----------------------------------------------------------------

int cmd_synth(const std::string& out, const std::string& grid, SyntheticSpec spec,
              const std::string& label_mode, const std::string& truth_path) {
  const auto [h, w] = parse_size(grid);
  spec.grid_h = h;
  spec.grid_w = w;
  spec.label_mode = label_mode == "cross" ? nrvf::LabelMode::CrossAttention
                                          : nrvf::LabelMode::Probabilities;
  const SyntheticScene scene = make_synthetic_scene(spec);
  nrvf::save_bundle(scene.bundle, out);
  if (!truth_path.empty()) nrvf::write_file(truth_path, encode_pgm(scene.truth));
  std::cout << "wrote " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random-walk refinement of coarse segmentation probabilities"};
  app.require_subcommand(1);

  CommonFlags flags;

  auto* refine = app.add_subcommand("refine", "Refine one bundle (or a directory of bundles)");
  std::string refine_input;
  int jobs = 1;
  std::string upsample;
  refine->add_option("input", refine_input, "NRVF bundle or directory of .nrvf files")->required();
  refine->add_option("--out", flags.out, "Output directory (default rwseg_out)");
  refine->add_option("--jobs", jobs, "Workers when the input is a directory")->capture_default_str();
  refine->add_option("--upsample", upsample, "Nearest-neighbor resize of the mask to HxW");
  add_walk_flags(refine, flags);
  add_fusion_flags(refine, flags);

  auto* convergence = app.add_subcommand("convergence", "Argmax change and iterate delta vs L (CSV)");
  std::string conv_input;
  std::vector<int> conv_steps{0, 1, 5, 10, 20, 40, 80};
  convergence->add_option("input", conv_input, "NRVF bundle")->required();
  convergence->add_option("--out", flags.out, "CSV path (default stdout)");
  convergence->add_option("--steps-list", conv_steps, "Ascending walk lengths")
      ->delimiter(',')
      ->capture_default_str();
  add_walk_flags(convergence, flags);
  add_fusion_flags(convergence, flags);

  auto* ablate = app.add_subcommand("ablate", "Compare head fusion and affinity variants (CSV)");
  std::string ablate_input;
  std::vector<std::string> ablate_fusions;
  std::vector<std::string> ablate_affinities;
  std::vector<std::string> ablate_orders;
  std::string reference_mask;
  ablate->add_option("input", ablate_input, "NRVF bundle")->required();
  ablate->add_option("--out", flags.out, "CSV path (default stdout)");
  ablate->add_option("--fusion", ablate_fusions, "Restrict to these fusions (default: all)")
      ->check(CLI::IsMember({"single", "mean", "weighted"}));
  ablate->add_option("--affinity", ablate_affinities, "Restrict to these affinities (default: all)")
      ->check(CLI::IsMember({"global", "local", "fused"}));
  ablate->add_option("--orders", ablate_orders, "Fusion orders to compare (default: per-head, raw)")
      ->check(CLI::IsMember({"per-head", "raw"}));
  ablate->add_option("--reference", reference_mask, "Grid-resolution PGM to score against");
  add_walk_flags(ablate, flags);

  auto* bench = app.add_subcommand("bench", "Per-iteration scaling of low-rank vs dense walks (CSV)");
  BenchOptions bench_options;
  bool bench_quick = false;
  bench->add_option("--out", flags.out, "CSV path (default stdout)");
  bench->add_option("--seed", bench_options.seed, "Instance seed")->capture_default_str();
  bench->add_option("--min-seconds", bench_options.min_seconds, "Minimum time per repeat")
      ->capture_default_str();
  bench->add_flag("--quick", bench_quick, "Small sizes only (smoke run)");

  auto* verify = app.add_subcommand("verify", "Oracle-equivalence suite on random instances");
  std::uint64_t verify_seed = 0;
  bool verify_quick = false;
  verify->add_option("--seed", verify_seed, "Instance seed")->capture_default_str();
  verify->add_flag("--quick", verify_quick, "Fewer instances");

  auto* synth = app.add_subcommand("synth", "Write a synthetic NRVF bundle");
  std::string synth_out;
  std::string synth_grid = "24x24";
  std::string synth_labels = "probs";
  std::string synth_truth;
  SyntheticSpec spec;
  synth->add_option("--out", synth_out, "Output .nrvf path")->required();
  synth->add_option("--grid", synth_grid, "Grid HxW")->capture_default_str();
  synth->add_option("--dim", spec.feature_dim, "Feature dimension")->capture_default_str();
  synth->add_option("--heads", spec.heads, "Head count")->capture_default_str();
  synth->add_option("--classes", spec.classes, "Class count")->capture_default_str();
  synth->add_option("--feature-noise", spec.feature_noise)->capture_default_str();
  synth->add_option("--label-noise", spec.label_noise)->capture_default_str();
  synth->add_option("--label-mode", synth_labels, "probs | cross")
      ->check(CLI::IsMember({"probs", "cross"}))
      ->capture_default_str();
  synth->add_option("--seed", spec.seed, "Generator seed")->capture_default_str();
  synth->add_option("--truth", synth_truth, "Also write the ground-truth mask (PGM)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*refine) return cmd_refine(refine_input, flags, jobs, upsample);

    if (*convergence) {
      const auto bundle = nrvf::load_bundle(conv_input);
      const auto rows =
          convergence_report(bundle, to_options(flags, bundle.features.nodes()), conv_steps);
      write_text(flags.out, convergence_csv(rows));
      return 0;
    }

    if (*ablate) {
      const auto bundle = nrvf::load_bundle(ablate_input);
      std::vector<FusionStrategy> fusions;
      for (const auto& s : ablate_fusions) fusions.push_back(parse_fusion(s));
      if (fusions.empty()) {
        fusions = {FusionStrategy::Single, FusionStrategy::Mean, FusionStrategy::Weighted};
      }
      std::vector<AffinitySource> affinities;
      for (const auto& s : ablate_affinities) affinities.push_back(parse_affinity(s));
      if (affinities.empty()) {
        affinities = {AffinitySource::Global, AffinitySource::Local, AffinitySource::Fused};
      }
      std::vector<FusionOrder> orders;
      for (const auto& s : ablate_orders) orders.push_back(parse_order(s));
      if (orders.empty()) orders = {FusionOrder::PerHeadTransition, FusionOrder::RawAffinity};
      std::optional<ClassMask> reference;
      if (!reference_mask.empty()) reference = decode_pgm(nrvf::read_file(reference_mask));
      const auto rows = ablation_grid(bundle, to_options(flags, bundle.features.nodes()), fusions,
                                      affinities, orders, reference ? &*reference : nullptr);
      write_text(flags.out, ablation_csv(rows));
      return 0;
    }

    if (*bench) {
      if (bench_quick) {
        bench_options.low_rank_sizes = {256, 1024};
        bench_options.dense_sizes = {256, 1024};
        bench_options.min_seconds = std::min(bench_options.min_seconds, 0.05);
        bench_options.repeats = 1;
      }
      write_text(flags.out, bench_csv(run_scaling_bench(bench_options)));
      return 0;
    }

    if (*verify) return cmd_verify(verify_seed, verify_quick);

    if (*synth) return cmd_synth(synth_out, synth_grid, spec, synth_labels, synth_truth);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitPipelineError;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitPipelineError;
  }
  return kExitUsage;
}
