#pragma once

#include <cstddef>

#include "pcil/attention.hpp"
#include "pcil/autodiff.hpp"
#include "pcil/centroid.hpp"
#include "pcil/errors.hpp"
#include "pcil/encoder.hpp"
#include "pcil/geometry.hpp"
#include "pcil/head.hpp"
#include "pcil/optim.hpp"

namespace pcil {

struct ModelConfig {
  EncoderConfig encoder;
  CentroidConfig centroid;
  std::size_t attention_reduction = 4;
  ClassifierConfig classifier;
  std::size_t initial_classes = 2;

  void validate() const {
    encoder.validate();
    if (centroid.structures == 0 || centroid.neighbors == 0) {
      throw ConfigError("centroid structure count and neighborhood size must be positive");
    }
    AttentionConfig{encoder.feature_dim(), attention_reduction}.validate();
    if (classifier.input_dim != encoder.feature_dim()) {
      throw ConfigError("classifier input width must match the encoder feature width");
    }
    if (initial_classes == 0) throw ConfigError("at least one initial class required");
  }
};

struct ForwardOptions {
  bool adapt_centroids = true;   // off: plain farthest-point anchors, no refinement
  bool attention = true;         // off: pool the raw structure features
  const SelectionPlan* replay = nullptr;
  SelectionPlan* record = nullptr;
};

struct ForwardResult {
  NodePtr feature;   // global descriptor, length d
  NodePtr logits;    // length C
  NodePtr gate;      // attention gate [L,d], null when attention is off
  SelectionPlan plan;
};

// Full pipeline: per-point encoder, adaptive local structures, channel
// attention over the structure bank, max pool, classifier.
class Model {
public:
  Model(const ModelConfig& cfg, ParamSet& params, Rng& rng)
      : cfg_(validated(cfg)),
        encoder_(cfg.encoder, params, rng),
        centroids_(cfg.centroid, cfg.encoder.feature_dim(), params, rng),
        attention_(AttentionConfig{cfg.encoder.feature_dim(), cfg.attention_reduction}, params, rng),
        classifier_(cfg.classifier, cfg.initial_classes, params, rng) {}

  ForwardResult forward(const PointCloud& cloud, const ForwardOptions& opts = {}) const {
    ForwardResult out;
    NodePtr coords = Encoder::points_node(cloud);
    NodePtr feats = encoder_.encode(cloud);
    auto structures = centroids_.build(cloud, feats, coords, opts.adapt_centroids, opts.replay,
                                       opts.record ? opts.record : &out.plan);
    NodePtr fg = CentroidBuilder::assemble(structures);
    NodePtr pooled;
    if (opts.attention) {
      auto att = attention_.attend(fg);
      out.gate = att.gate;
      pooled = Attention::global_pool(att.gated);
    } else {
      pooled = Attention::global_pool(fg);
    }
    out.feature = pooled;
    out.logits = classifier_.logits(pooled);
    if (opts.record) out.plan = *opts.record;
    return out;
  }

  static const ModelConfig& validated(const ModelConfig& cfg) {
    cfg.validate();
    return cfg;
  }

  Classifier& classifier() { return classifier_; }
  const Classifier& classifier() const { return classifier_; }
  const ModelConfig& config() const { return cfg_; }
  std::size_t feature_dim() const { return cfg_.encoder.feature_dim(); }

private:
  ModelConfig cfg_;
  Encoder encoder_;
  CentroidBuilder centroids_;
  Attention attention_;
  Classifier classifier_;
};

}  // namespace pcil
