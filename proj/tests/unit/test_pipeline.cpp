#include "rwseg/pipeline.hpp"

#include <algorithm>

#include "rwseg/synthetic.hpp"
#include "support.hpp"

using namespace rwseg;
using namespace rwseg::testing;

namespace {

nrvf::BundleFile scene(std::uint64_t seed, int heads = 4, int side = 12) {
  SyntheticSpec spec;
  spec.grid_h = side;
  spec.grid_w = side;
  spec.heads = heads;
  spec.feature_dim = 8;
  spec.seed = seed;
  return make_synthetic_scene(spec).bundle;
}

}  // namespace

TEST_CASE("option names round trip") {
  for (auto s : {FusionStrategy::Single, FusionStrategy::Mean, FusionStrategy::Weighted}) {
    CHECK(parse_fusion(to_string(s)) == s);
  }
  for (auto s : {AffinitySource::Global, AffinitySource::Local, AffinitySource::Fused}) {
    CHECK(parse_affinity(to_string(s)) == s);
  }
  for (auto s : {FusionOrder::PerHeadTransition, FusionOrder::RawAffinity}) {
    CHECK(parse_order(to_string(s)) == s);
  }
  for (auto m : {WalkMode::ExactDense, WalkMode::ExactWoodbury, WalkMode::TruncatedIterative}) {
    CHECK(parse_walk_mode(to_string(m)) == m);
  }
  CHECK(error_of([] { parse_fusion("median"); }) == ErrorCode::InvalidArgument);

  PipelineOptions o;
  o.walk.alpha = 0.7;
  o.walk.steps = 9;
  o.fusion = FusionStrategy::Mean;
  o.affinity = AffinitySource::Local;
  o.order = FusionOrder::RawAffinity;
  o.nonneg = NonNegPolicy::Clamp;
  const PipelineOptions back = PipelineOptions::from_run_config(o.to_run_config());
  CHECK(back.to_run_config() == o.to_run_config());
}

TEST_CASE("zero-step refinement reproduces the argmax of G") {
  for (auto mode : {nrvf::LabelMode::Probabilities, nrvf::LabelMode::CrossAttention}) {
    SyntheticSpec spec;
    spec.label_mode = mode;
    spec.seed = 3;
    const auto bundle = make_synthetic_scene(spec).bundle;
    PipelineOptions o;
    o.walk.steps = 0;
    const auto result = run_pipeline(bundle, o);
    const auto g = nrvf::make_label_generator(bundle);
    CHECK(result.mask.labels == argmax_mask(g.probabilities(), 24, 24).labels);
  }
}

TEST_CASE("single fusion selects the minimum-entropy head") {
  const auto bundle = scene(7);
  PipelineOptions o;
  o.fusion = FusionStrategy::Single;
  const auto g = nrvf::make_label_generator(bundle);
  const auto prepared = prepare_transition(bundle.features, g, o);
  const auto& e = prepared.weighting.entropies;
  const auto best = int(std::min_element(e.begin(), e.end()) - e.begin());
  CHECK(prepared.selected_head == best);
  for (std::size_t h = 0; h < e.size(); ++h) {
    CHECK(prepared.weighting.weights[h] == (int(h) == best ? 1.0 : 0.0));
  }
}

TEST_CASE("mean and weighted fusion weights") {
  const auto bundle = scene(8);
  const auto g = nrvf::make_label_generator(bundle);
  PipelineOptions o;
  o.fusion = FusionStrategy::Mean;
  for (double w : prepare_transition(bundle.features, g, o).weighting.weights) CHECK(w == 0.25);
  o.fusion = FusionStrategy::Weighted;
  o.walk.temperature = 2.0;
  const auto hw = prepare_transition(bundle.features, g, o).weighting;
  const auto expected = head_weights(hw.entropies, 2.0);
  for (std::size_t h = 0; h < expected.size(); ++h) CHECK(hw.weights[h] == expected[h]);
}

TEST_CASE("every configuration yields a stochastic result") {
  const auto bundle = scene(9, 3, 8);
  for (auto fusion : {FusionStrategy::Single, FusionStrategy::Mean, FusionStrategy::Weighted}) {
    for (auto affinity : {AffinitySource::Global, AffinitySource::Local, AffinitySource::Fused}) {
      for (auto order : {FusionOrder::PerHeadTransition, FusionOrder::RawAffinity}) {
        for (auto nonneg : {NonNegPolicy::Shift, NonNegPolicy::Clamp}) {
          PipelineOptions o;
          o.fusion = fusion;
          o.affinity = affinity;
          o.order = order;
          o.nonneg = nonneg;
          const auto r = run_pipeline(bundle, o);
          CHECK(reference::max_row_sum_error(r.probabilities.p, 1.0) <= 1e-9);
          CHECK(r.probabilities.p.minCoeff() >= 0.0);
        }
      }
    }
  }
}

TEST_CASE("exact modes agree with a long truncated walk") {
  const auto bundle = scene(10, 2, 8);
  PipelineOptions o;
  o.walk.steps = 400;
  const auto truncated = run_pipeline(bundle, o).probabilities.p;
  o.walk.mode = WalkMode::ExactDense;
  const auto exact = run_pipeline(bundle, o).probabilities.p;
  CHECK(max_abs(truncated, exact) <= 1e-9);
}

TEST_CASE("Woodbury mode needs a single low-rank global transition") {
  const auto bundle = scene(11, 3, 8);
  PipelineOptions o;
  o.walk.mode = WalkMode::ExactWoodbury;
  CHECK(error_of([&] { run_pipeline(bundle, o); }) == ErrorCode::UnsupportedMode);

  o.fusion = FusionStrategy::Single;
  o.affinity = AffinitySource::Global;
  const auto woodbury = run_pipeline(bundle, o).probabilities.p;
  o.walk.mode = WalkMode::ExactDense;
  CHECK(max_abs(woodbury, run_pipeline(bundle, o).probabilities.p) <= 1e-9);

  o.walk.mode = WalkMode::ExactWoodbury;
  o.nonneg = NonNegPolicy::Clamp;
  CHECK(error_of([&] { run_pipeline(bundle, o); }) == ErrorCode::UnsupportedMode);
}

TEST_CASE("pipeline output is deterministic") {
  const auto bundle = scene(12);
  PipelineOptions o;
  const auto a = run_pipeline(bundle, o);
  const auto b = run_pipeline(bundle, o);
  CHECK(nrvp::encode(a.probabilities, 12, 12) == nrvp::encode(b.probabilities, 12, 12));
  CHECK(a.mask.labels == b.mask.labels);
}

TEST_CASE("manifest records the run") {
  const auto bundle = scene(13, 2, 6);
  PipelineOptions o;
  o.walk.steps = 7;
  const auto r = run_pipeline(bundle, o, "x.nrvf");
  CHECK(r.manifest.input_path == "x.nrvf");
  CHECK(r.manifest.steps_used == 7);
  CHECK(r.manifest.heads.size() == 2);
  CHECK(r.manifest.residual_bound == doctest::Approx(residual_l1(0.9, 7, 36)));
  CHECK(r.manifest.config == o.to_run_config());
  for (const char* stage : {"label_generator", "transition", "walk", "decode"}) {
    CHECK(r.manifest.timings_ms.count(stage) == 1);
  }
}

TEST_CASE("convergence report") {
  const auto bundle = scene(14);
  PipelineOptions o;
  const std::vector<int> steps{0, 1, 5, 10, 20, 40, 80};
  const auto rows = convergence_report(bundle, o, steps);
  REQUIRE(rows.size() == steps.size());
  CHECK(rows[0].changed_fraction == 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].steps == steps[i]);
    CHECK(rows[i].residual_bound == doctest::Approx(residual_l1(0.9, steps[i], 144)));
  }
  // Each row's walk equals a standalone walk of that length.
  o.walk.steps = 20;
  const auto standalone = run_pipeline(bundle, o).probabilities.p;
  o.walk.steps = 10;
  const auto previous = run_pipeline(bundle, o).probabilities.p;
  CHECK(rows[4].iterate_delta == doctest::Approx((standalone - previous).cwiseAbs().maxCoeff()));
  const std::string csv = convergence_csv(rows);
  CHECK(csv.rfind("steps,previous_steps,changed_fraction,per_step_change,iterate_delta,residual_bound\n", 0) ==
        0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 8);
  CHECK(error_of([&] { convergence_report(bundle, o, {5, 1}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("ablation grid") {
  SyntheticSpec spec;
  spec.grid_h = 10;
  spec.grid_w = 10;
  spec.seed = 15;
  const auto s = make_synthetic_scene(spec);
  const std::vector<FusionStrategy> fusions{FusionStrategy::Single, FusionStrategy::Weighted};
  const std::vector<AffinitySource> affinities{AffinitySource::Local, AffinitySource::Fused};
  const std::vector<FusionOrder> orders{FusionOrder::PerHeadTransition};
  const auto rows = ablation_grid(s.bundle, PipelineOptions{}, fusions, affinities, orders, &s.truth);
  REQUIRE(rows.size() == 4);
  for (const auto& r : rows) {
    CHECK(r.reference_accuracy >= 0.0);
    CHECK(r.reference_accuracy <= 1.0);
    CHECK(r.weights.size() == 4);
  }
  CHECK(ablation_csv(rows).find("per-head,local,single,") != std::string::npos);
  const ClassMask wrong{3, 3, std::vector<std::uint32_t>(9, 0)};
  CHECK(error_of([&] { ablation_grid(s.bundle, PipelineOptions{}, fusions, affinities, orders, &wrong); }) ==
        ErrorCode::GridMismatch);
}
