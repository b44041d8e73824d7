#include "rwseg/synthetic.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "rwseg/error.hpp"

namespace rwseg {
namespace {

Matrix gaussian(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  }
  return m;
}

}  // namespace

SyntheticScene make_synthetic_scene(const SyntheticSpec& spec) {
  if (spec.grid_h < 2 || spec.grid_w < 2 || spec.feature_dim < 1 || spec.heads < 1 ||
      spec.classes < 1 || spec.classes > 255) {
    fail(ErrorCode::InvalidArgument, "invalid synthetic scene parameters");
  }
  std::mt19937_64 rng(spec.seed);
  const Index n = Index(spec.grid_h) * spec.grid_w;
  const int k = spec.classes;
  const int d = spec.feature_dim;

  // Region layout: nearest of K random centers.
  std::uniform_real_distribution<double> uy(0.0, spec.grid_h), ux(0.0, spec.grid_w);
  std::vector<std::pair<double, double>> centers(static_cast<std::size_t>(k));
  for (auto& c : centers) c = {uy(rng), ux(rng)};
  SyntheticScene scene;
  scene.truth = ClassMask{spec.grid_h, spec.grid_w, std::vector<std::uint32_t>(std::size_t(n))};
  for (int y = 0; y < spec.grid_h; ++y) {
    for (int x = 0; x < spec.grid_w; ++x) {
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t label = 0;
      for (int c = 0; c < k; ++c) {
        const double dy = y + 0.5 - centers[c].first;
        const double dx = x + 0.5 - centers[c].second;
        if (dy * dy + dx * dx < best) {
          best = dy * dy + dx * dx;
          label = std::uint32_t(c);
        }
      }
      scene.truth.labels[std::size_t(y) * spec.grid_w + x] = label;
    }
  }

  auto& bundle = scene.bundle;
  auto& f = bundle.features;
  f.grid_h = spec.grid_h;
  f.grid_w = spec.grid_w;
  f.feature_dim = d;
  f.source_tag = "synthetic seed=" + std::to_string(spec.seed);
  for (int c = 0; c < k; ++c) bundle.class_names.push_back("class_" + std::to_string(c));

  const Matrix prototypes = gaussian(k, d, rng);
  for (int h = 0; h < spec.heads; ++h) {
    const double sigma = spec.feature_noise * (1.0 + 0.5 * h);
    HeadFeatures head;
    head.layer_index = h < (spec.heads + 1) / 2 ? 1 : 0;
    head.head_index = h;
    head.queries = gaussian(n, d, rng) * sigma;
    head.keys = gaussian(n, d, rng) * sigma;
    for (Index i = 0; i < n; ++i) {
      head.queries.row(i) += prototypes.row(scene.truth.labels[std::size_t(i)]);
      head.keys.row(i) += prototypes.row(scene.truth.labels[std::size_t(i)]);
    }
    f.heads.push_back(std::move(head));
  }

  auto& labels = bundle.labels;
  labels.mode = spec.label_mode;
  if (spec.label_mode == nrvf::LabelMode::Probabilities) {
    Matrix logits = gaussian(n, k, rng) * spec.label_noise;
    for (Index i = 0; i < n; ++i) {
      logits(i, scene.truth.labels[std::size_t(i)]) += spec.label_strength;
      auto row = logits.row(i);
      row.array() = (row.array() - row.maxCoeff()).exp();
      row /= row.sum();
    }
    labels.probabilities = std::move(logits);
  } else {
    // Scores Q K^T / sqrt(D) with prompt keys scaled so the true class
    // leads by about label_strength.
    const double scale = std::sqrt(spec.label_strength * std::sqrt(double(d)) / d);
    labels.prompt_keys = gaussian(k, d, rng) * scale;
    labels.token_queries = gaussian(n, d, rng) * (spec.label_noise * scale);
    for (Index i = 0; i < n; ++i) {
      labels.token_queries.row(i) += labels.prompt_keys.row(scene.truth.labels[std::size_t(i)]);
    }
  }
  return scene;
}

}  // namespace rwseg
