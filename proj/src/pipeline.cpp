#include "rwseg/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <optional>
#include <sstream>

#include "rwseg/error.hpp"

namespace rwseg {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

[[noreturn]] void bad_choice(std::string_view what, std::string_view text) {
  fail(ErrorCode::InvalidArgument, "unknown " + std::string(what) + " '" + std::string(text) + "'");
}

std::vector<double> strategy_weights(FusionStrategy strategy, const std::vector<double>& entropies,
                                     double c, int& selected) {
  const std::size_t h = entropies.size();
  selected = -1;
  switch (strategy) {
    case FusionStrategy::Weighted: return head_weights(entropies, c);
    case FusionStrategy::Mean: return std::vector<double>(h, 1.0 / double(h));
    case FusionStrategy::Single: {
      // min_element returns the first minimum, so ties go to the lower index.
      selected = int(std::min_element(entropies.begin(), entropies.end()) - entropies.begin());
      std::vector<double> w(h, 0.0);
      w[std::size_t(selected)] = 1.0;
      return w;
    }
  }
  bad_choice("fusion strategy", "?");
}

}  // namespace

std::string_view to_string(FusionStrategy s) {
  switch (s) {
    case FusionStrategy::Single: return "single";
    case FusionStrategy::Mean: return "mean";
    case FusionStrategy::Weighted: return "weighted";
  }
  return "?";
}

std::string_view to_string(AffinitySource s) {
  switch (s) {
    case AffinitySource::Global: return "global";
    case AffinitySource::Local: return "local";
    case AffinitySource::Fused: return "fused";
  }
  return "?";
}

std::string_view to_string(FusionOrder s) {
  switch (s) {
    case FusionOrder::PerHeadTransition: return "per-head";
    case FusionOrder::RawAffinity: return "raw";
  }
  return "?";
}

std::string_view to_string(NonNegPolicy p) {
  switch (p) {
    case NonNegPolicy::Clamp: return "clamp";
    case NonNegPolicy::Shift: return "shift";
  }
  return "?";
}

FusionStrategy parse_fusion(std::string_view text) {
  if (text == "single") return FusionStrategy::Single;
  if (text == "mean") return FusionStrategy::Mean;
  if (text == "weighted") return FusionStrategy::Weighted;
  bad_choice("fusion strategy", text);
}

AffinitySource parse_affinity(std::string_view text) {
  if (text == "global") return AffinitySource::Global;
  if (text == "local") return AffinitySource::Local;
  if (text == "fused") return AffinitySource::Fused;
  bad_choice("affinity source", text);
}

FusionOrder parse_order(std::string_view text) {
  if (text == "per-head") return FusionOrder::PerHeadTransition;
  if (text == "raw") return FusionOrder::RawAffinity;
  bad_choice("fusion order", text);
}

NonNegPolicy parse_nonneg(std::string_view text) {
  if (text == "shift") return NonNegPolicy::Shift;
  if (text == "clamp") return NonNegPolicy::Clamp;
  bad_choice("nonnegativity policy", text);
}

double PipelineOptions::effective_beta() const {
  switch (affinity) {
    case AffinitySource::Global: return 1.0;
    case AffinitySource::Local: return 0.0;
    case AffinitySource::Fused: return walk.fusion.beta;
  }
  return walk.fusion.beta;
}

RunConfig PipelineOptions::to_run_config() const {
  RunConfig c;
  c.alpha = walk.alpha;
  c.steps = walk.steps;
  c.beta = walk.fusion.beta;
  c.epsilon_self = walk.fusion.epsilon_self;
  c.temperature = walk.temperature;
  c.residual_tolerance = walk.residual_tolerance;
  c.mode = std::string(to_string(walk.mode));
  c.fusion = std::string(to_string(fusion));
  c.affinity = std::string(to_string(affinity));
  c.order = std::string(to_string(order));
  c.nonneg = std::string(to_string(nonneg));
  return c;
}

PipelineOptions PipelineOptions::from_run_config(const RunConfig& c) {
  PipelineOptions o;
  o.walk.alpha = c.alpha;
  o.walk.steps = c.steps;
  o.walk.fusion.beta = c.beta;
  o.walk.fusion.epsilon_self = c.epsilon_self;
  o.walk.temperature = c.temperature;
  o.walk.residual_tolerance = c.residual_tolerance;
  o.walk.mode = parse_walk_mode(c.mode);
  o.fusion = parse_fusion(c.fusion);
  o.affinity = parse_affinity(c.affinity);
  o.order = parse_order(c.order);
  o.nonneg = parse_nonneg(c.nonneg);
  return o;
}

PreparedTransition prepare_transition(const FeatureBundle& features, const LabelGenerator& g,
                                      const PipelineOptions& options) {
  features.validate();
  options.walk.validate();
  if (g.nodes() != features.nodes()) {
    fail(ErrorCode::DimensionMismatch, "G has " + std::to_string(g.nodes()) +
                                           " rows for a " + std::to_string(features.nodes()) +
                                           "-node grid");
  }
  const double beta = options.effective_beta();
  const bool use_global = beta > 0.0;
  const bool use_local = beta < 1.0;
  const std::size_t head_count = features.heads.size();

  std::vector<AffinityMatrix> global_raw;
  std::vector<AffinityMatrix> local_raw;
  std::vector<CompositeTransition> per_head;
  per_head.reserve(head_count);
  for (const auto& head : features.heads) {
    std::optional<StochasticMatrix> sg;
    std::optional<StochasticMatrix> sl;
    if (use_global) {
      global_raw.push_back(global_affinity(head, options.nonneg));
      sg = row_normalize(global_raw.back());
    }
    if (use_local) {
      local_raw.push_back(local_affinity(head, features.grid_h, features.grid_w,
                                         options.walk.fusion.epsilon_self));
      sl = row_normalize(local_raw.back());
    }
    if (sg && sl) {
      per_head.push_back(fuse(*sg, *sl, beta));
    } else {
      per_head.emplace_back(sg ? *sg : *sl);
    }
  }

  PreparedTransition out;
  out.weighting = weigh_heads(per_head, g, options.walk.temperature);
  out.weighting.weights = strategy_weights(options.fusion, out.weighting.entropies,
                                           options.walk.temperature, out.selected_head);
  const auto& weights = out.weighting.weights;

  if (options.order == FusionOrder::PerHeadTransition) {
    out.transition = fuse_transitions(per_head, weights);
    return out;
  }

  // Raw order: sum the unnormalized affinities, then normalize once.
  auto fuse_raw = [&](const std::vector<AffinityMatrix>& raw) {
    std::vector<AffinityMatrix> kept;
    std::vector<double> kept_w;
    for (std::size_t h = 0; h < raw.size(); ++h) {
      if (weights[h] == 0.0) continue;
      kept.push_back(raw[h]);
      kept_w.push_back(weights[h]);
    }
    return row_normalize(fuse_heads(kept, kept_w));
  };
  if (use_global && use_local) {
    out.transition = fuse(fuse_raw(global_raw), fuse_raw(local_raw), beta);
  } else {
    out.transition = CompositeTransition(fuse_raw(use_global ? global_raw : local_raw));
  }
  return out;
}

LabelProbabilities run_walk(const PreparedTransition& prepared, const LabelGenerator& g,
                            const PipelineOptions& options) {
  const auto& cfg = options.walk;
  switch (cfg.mode) {
    case WalkMode::TruncatedIterative: return truncated_walk(prepared.transition, g, cfg);
    case WalkMode::ExactDense:
      return exact_walk_dense(prepared.transition.to_dense(), g, cfg.alpha);
    case WalkMode::ExactWoodbury: {
      const auto& terms = prepared.transition.terms();
      const LowRankAffinity* factors =
          terms.size() == 1 ? std::get_if<LowRankAffinity>(&terms.front().matrix.representation())
                            : nullptr;
      if (factors == nullptr) {
        fail(ErrorCode::UnsupportedMode,
             "exact-woodbury needs a single low-rank global transition (one head or "
             "--fusion single, --affinity global, --nonneg shift)");
      }
      return exact_walk_woodbury(terms.front().weight * factors->left, factors->right, g,
                                 cfg.alpha);
    }
  }
  fail(ErrorCode::InvalidArgument, "unknown walk mode");
}

PipelineResult run_pipeline(const nrvf::BundleFile& bundle, const PipelineOptions& options,
                            const std::string& input_path) {
  PipelineResult out;
  auto& manifest = out.manifest;

  auto t0 = Clock::now();
  const LabelGenerator g = nrvf::make_label_generator(bundle);
  manifest.timings_ms["label_generator"] = elapsed_ms(t0);

  t0 = Clock::now();
  const PreparedTransition prepared = prepare_transition(bundle.features, g, options);
  manifest.timings_ms["transition"] = elapsed_ms(t0);

  t0 = Clock::now();
  out.probabilities = run_walk(prepared, g, options);
  manifest.timings_ms["walk"] = elapsed_ms(t0);

  t0 = Clock::now();
  const auto& f = bundle.features;
  out.mask = argmax_mask(out.probabilities, f.grid_h, f.grid_w);
  manifest.timings_ms["decode"] = elapsed_ms(t0);

  out.weighting = prepared.weighting;
  out.selected_head = prepared.selected_head;

  manifest.config = options.to_run_config();
  manifest.input_path = input_path;
  manifest.source_tag = f.source_tag;
  manifest.grid_h = f.grid_h;
  manifest.grid_w = f.grid_w;
  manifest.classes = int(g.classes());
  manifest.class_names = g.class_names();
  for (std::size_t h = 0; h < f.heads.size(); ++h) {
    manifest.heads.push_back(HeadRecord{f.heads[h].layer_index, f.heads[h].head_index,
                                        prepared.weighting.entropies[h],
                                        prepared.weighting.weights[h]});
  }
  manifest.steps_used = out.probabilities.steps_used;
  manifest.residual_bound = out.probabilities.residual_bound_value;
  return out;
}

std::vector<ConvergenceRow> convergence_report(const nrvf::BundleFile& bundle,
                                               const PipelineOptions& options,
                                               const std::vector<int>& step_list) {
  if (step_list.empty()) return {};
  if (!std::is_sorted(step_list.begin(), step_list.end()) || step_list.front() < 0) {
    fail(ErrorCode::InvalidArgument, "convergence steps must be ascending and nonnegative");
  }
  const LabelGenerator g = nrvf::make_label_generator(bundle);
  const PreparedTransition prepared = prepare_transition(bundle.features, g, options);
  const double alpha = options.walk.alpha;
  const auto& f = bundle.features;

  std::vector<std::pair<int, Matrix>> snapshots;
  std::size_t next = 0;
  auto capture = [&](int step, const Matrix& unnormalized) {
    while (next < step_list.size() && step_list[next] == step) {
      Matrix p = step == 0 ? g.probabilities()
                           : Matrix(unnormalized / (1.0 - std::pow(alpha, step + 1)));
      snapshots.emplace_back(step, std::move(p));
      ++next;
    }
  };
  WalkConfig cfg = options.walk;
  cfg.steps = step_list.back();
  truncated_walk(prepared.transition, g, cfg, capture);

  std::vector<ConvergenceRow> rows;
  for (std::size_t i = 0; i < snapshots.size(); ++i) {
    ConvergenceRow row;
    row.steps = snapshots[i].first;
    row.residual_bound = residual_l1(alpha, row.steps, f.nodes());
    if (i > 0) {
      const auto& prev = snapshots[i - 1];
      row.previous_steps = prev.first;
      row.changed_fraction =
          changed_fraction(argmax_mask(prev.second, f.grid_h, f.grid_w),
                           argmax_mask(snapshots[i].second, f.grid_h, f.grid_w));
      const int span = row.steps - row.previous_steps;
      row.per_step_change = span > 0 ? row.changed_fraction / span : 0.0;
      row.iterate_delta = (snapshots[i].second - prev.second).cwiseAbs().maxCoeff();
    } else {
      row.previous_steps = row.steps;
    }
    rows.push_back(row);
  }
  return rows;
}

std::string convergence_csv(const std::vector<ConvergenceRow>& rows) {
  std::ostringstream out;
  out << std::setprecision(10);
  out << "steps,previous_steps,changed_fraction,per_step_change,iterate_delta,residual_bound\n";
  for (const auto& r : rows) {
    out << r.steps << ',' << r.previous_steps << ',' << r.changed_fraction << ','
        << r.per_step_change << ',' << r.iterate_delta << ',' << r.residual_bound << '\n';
  }
  return out.str();
}

std::vector<AblationRow> ablation_grid(const nrvf::BundleFile& bundle,
                                       const PipelineOptions& base,
                                       const std::vector<FusionStrategy>& fusions,
                                       const std::vector<AffinitySource>& affinities,
                                       const std::vector<FusionOrder>& orders,
                                       const ClassMask* reference) {
  const LabelGenerator g = nrvf::make_label_generator(bundle);
  const auto& f = bundle.features;
  const ClassMask g_mask = argmax_mask(g.probabilities(), f.grid_h, f.grid_w);
  if (reference != nullptr && reference->labels.size() != g_mask.labels.size()) {
    fail(ErrorCode::GridMismatch, "reference mask does not match the feature grid");
  }

  std::vector<AblationRow> rows;
  for (auto order : orders) {
    for (auto affinity : affinities) {
      for (auto fusion : fusions) {
        PipelineOptions options = base;
        options.fusion = fusion;
        options.affinity = affinity;
        options.order = order;
        const PreparedTransition prepared = prepare_transition(f, g, options);
        const LabelProbabilities probs = run_walk(prepared, g, options);
        const ClassMask mask = argmax_mask(probs, f.grid_h, f.grid_w);

        AblationRow row{fusion, affinity, order, prepared.weighting.weights};
        row.mean_entropy = head_entropy(probs.p);
        row.changed_vs_g = changed_fraction(g_mask, mask);
        if (reference != nullptr) row.reference_accuracy = 1.0 - changed_fraction(*reference, mask);
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << std::setprecision(10);
  out << "order,affinity,fusion,mean_entropy,changed_vs_g,reference_accuracy,weights\n";
  for (const auto& r : rows) {
    out << to_string(r.order) << ',' << to_string(r.affinity) << ',' << to_string(r.fusion) << ','
        << r.mean_entropy << ',' << r.changed_vs_g << ',';
    if (r.reference_accuracy >= 0.0) out << r.reference_accuracy;
    out << ',';
    for (std::size_t i = 0; i < r.weights.size(); ++i) out << (i ? ";" : "") << r.weights[i];
    out << '\n';
  }
  return out.str();
}

}  // namespace rwseg
