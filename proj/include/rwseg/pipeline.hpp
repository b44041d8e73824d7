#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "rwseg/entropy_fusion.hpp"
#include "rwseg/nrvf.hpp"
#include "rwseg/outputs.hpp"
#include "rwseg/walk.hpp"

namespace rwseg {

enum class FusionStrategy { Single, Mean, Weighted };
enum class AffinitySource { Global, Local, Fused };
enum class FusionOrder { PerHeadTransition, RawAffinity };

std::string_view to_string(FusionStrategy s);
std::string_view to_string(AffinitySource s);
std::string_view to_string(FusionOrder s);
std::string_view to_string(NonNegPolicy p);
FusionStrategy parse_fusion(std::string_view text);
AffinitySource parse_affinity(std::string_view text);
FusionOrder parse_order(std::string_view text);
NonNegPolicy parse_nonneg(std::string_view text);

struct PipelineOptions {
  WalkConfig walk;
  FusionStrategy fusion = FusionStrategy::Weighted;
  AffinitySource affinity = AffinitySource::Fused;
  FusionOrder order = FusionOrder::PerHeadTransition;
  NonNegPolicy nonneg = NonNegPolicy::Shift;

  /// Effective global/local mix: 1 for Global, 0 for Local, beta for Fused.
  double effective_beta() const;
  RunConfig to_run_config() const;
  static PipelineOptions from_run_config(const RunConfig& cfg);
};

/// The fused transition of one image plus how its heads were weighted.
struct PreparedTransition {
  CompositeTransition transition;
  HeadWeighting weighting;  // entropies always; weights as used by the walk
  int selected_head = -1;   // index of the min-entropy head for Single, else -1
};

PreparedTransition prepare_transition(const FeatureBundle& features, const LabelGenerator& g,
                                      const PipelineOptions& options);

/// Runs the walk selected by options.walk.mode on a prepared transition.
LabelProbabilities run_walk(const PreparedTransition& prepared, const LabelGenerator& g,
                            const PipelineOptions& options);

struct PipelineResult {
  LabelProbabilities probabilities;
  ClassMask mask;  // grid resolution
  HeadWeighting weighting;
  int selected_head = -1;
  RunManifest manifest;
};

PipelineResult run_pipeline(const nrvf::BundleFile& bundle, const PipelineOptions& options,
                            const std::string& input_path = {});

struct ConvergenceRow {
  int steps = 0;
  int previous_steps = 0;
  double changed_fraction = 0.0;  // argmax changes vs the previous row
  double per_step_change = 0.0;   // changed_fraction / (steps - previous_steps)
  double iterate_delta = 0.0;     // max |P_L - P_prev|
  double residual_bound = 0.0;
};

/// Truncated walks at each listed L (ascending) over one prepared transition.
std::vector<ConvergenceRow> convergence_report(const nrvf::BundleFile& bundle,
                                               const PipelineOptions& options,
                                               const std::vector<int>& step_list);

std::string convergence_csv(const std::vector<ConvergenceRow>& rows);

struct AblationRow {
  FusionStrategy fusion;
  AffinitySource affinity;
  FusionOrder order;
  std::vector<double> weights;
  double mean_entropy = 0.0;     // of the refined probabilities
  double changed_vs_g = 0.0;     // fraction of nodes relabeled by the walk
  double reference_accuracy = -1.0;  // vs an optional reference mask
};

std::vector<AblationRow> ablation_grid(const nrvf::BundleFile& bundle,
                                       const PipelineOptions& base,
                                       const std::vector<FusionStrategy>& fusions,
                                       const std::vector<AffinitySource>& affinities,
                                       const std::vector<FusionOrder>& orders,
                                       const ClassMask* reference = nullptr);

std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace rwseg
