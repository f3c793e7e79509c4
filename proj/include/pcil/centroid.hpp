#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "pcil/autodiff.hpp"
#include "pcil/encoder.hpp"
#include "pcil/errors.hpp"
#include "pcil/geometry.hpp"
#include "pcil/optim.hpp"

namespace pcil {

struct CentroidConfig {
  std::size_t structures = 64;    // L
  std::size_t neighbors = 16;     // k
  std::size_t refine_iters = 1;
  // Initialization scale of the offset head. With a unit-scale init the
  // predicted offsets are a few percent of the neighborhood radius and the
  // re-collected neighborhoods rarely change; a larger scale makes the
  // adaptive refinement actually move centroids at small point counts.
  double offset_gain = 1.0;

  void validate(std::size_t cloud_size) const {
    if (structures < 1 || structures > cloud_size) {
      throw SamplingError("centroid config: L=" + std::to_string(structures) + " for a cloud of " +
                          std::to_string(cloud_size) + " points");
    }
    if (neighbors < 1 || neighbors >= cloud_size + 1) {
      throw NeighborhoodError("centroid config: k=" + std::to_string(neighbors) + " for a cloud of " +
                              std::to_string(cloud_size) + " points");
    }
    if (!std::isfinite(offset_gain) || offset_gain < 0.0) {
      throw ConfigError("centroid config: offset gain must be finite and non-negative");
    }
  }
};

// One local geometric structure: a (possibly virtual) centroid position, the
// indices of its k nearest points, and the gathered structure feature.
struct LocalStructure {
  NodePtr pos;                          // [3], differentiable once offsets apply
  std::vector<std::size_t> neighbors;   // k distinct point indices
  NodePtr feat;                         // [d], gathered over the neighborhood
  NodePtr own_feat;                     // [d], the centroid's own semantic feature
};

// Frozen index choices of one forward pass. Recording and replaying the plan
// pins the discrete selections so finite differences probe a fixed graph.
struct SelectionPlan {
  std::vector<std::size_t> fps;
  std::vector<std::vector<std::size_t>> init_neighbors;           // per structure
  std::vector<std::vector<std::vector<std::size_t>>> refined;     // per iter, per structure
};

// Adaptive-geometric centroid construction. Structures are seeded by farthest
// point sampling, features gathered by a shared linear+ReLU block with a max
// over the neighborhood, and centroids then translated by a learned weighted
// vote of their edge vectors before the neighborhood is re-collected.
class CentroidBuilder {
public:
  CentroidBuilder(const CentroidConfig& cfg, std::size_t feature_dim, ParamSet& params, Rng& rng)
      : cfg_(cfg), dim_(feature_dim) {
    std::vector<double> w(dim_);
    glorot_fill(w, dim_, 1, rng);
    for (double& v : w) v *= cfg.offset_gain;
    offset_w_ = params.create("centroid.offset.W", {dim_, 1}, std::move(w));
    offset_b_ = params.create_zeros("centroid.offset.b", {1});
    gather_w_ = params.create_glorot("centroid.gather.W", dim_, dim_, rng);
    gather_b_ = params.create_zeros("centroid.gather.b", {dim_});
  }

  const CentroidConfig& config() const { return cfg_; }

  // Shared gather map: elementwise max over the transformed neighbor features.
  NodePtr gather_feature(const NodePtr& neighbor_feats) const {
    if (neighbor_feats->data.rank() != 2 || neighbor_feats->shape()[0] == 0) {
      throw NeighborhoodError("gather_feature: need at least one neighbor row");
    }
    return max_reduce(relu(linear(neighbor_feats, gather_w_, gather_b_)), 0);
  }

  NodePtr gather_for(const NodePtr& features, const std::vector<std::size_t>& neighbor_idx) const {
    return gather_feature(gather_rows(features, neighbor_idx));
  }

  std::vector<LocalStructure> init_structures(const PointCloud& cloud, const NodePtr& features,
                                              const SelectionPlan* replay = nullptr,
                                              SelectionPlan* record = nullptr) const {
    cfg_.validate(cloud.size());
    if (features->shape()[0] != cloud.size()) {
      throw DimensionError("init_structures: features not row-aligned with cloud");
    }
    std::vector<std::size_t> fps_idx =
        replay ? replay->fps : farthest_point_sampling(cloud, cfg_.structures);
    if (record) record->fps = fps_idx;
    std::vector<LocalStructure> out;
    out.reserve(cfg_.structures);
    for (std::size_t l = 0; l < cfg_.structures; ++l) {
      LocalStructure s;
      const Point& anchor = cloud.points[fps_idx[l]];
      s.pos = constant(Tensor({3}, {anchor[0], anchor[1], anchor[2]}));
      s.neighbors = replay ? replay->init_neighbors[l] : knn(cloud, anchor, cfg_.neighbors);
      s.feat = gather_for(features, s.neighbors);
      // The anchor is a real cloud point here, so its semantic feature is the
      // encoder output at that point.
      s.own_feat = reshape(gather_rows(features, {fps_idx[l]}), {dim_});
      if (record) record->init_neighbors.push_back(s.neighbors);
      out.push_back(std::move(s));
    }
    return out;
  }

  // Offset vote: the feature difference of each neighbor maps to a scalar edge
  // weight, the weighted edge vectors (centroid minus neighbor) are averaged.
  NodePtr predict_offset(const LocalStructure& s, const NodePtr& features,
                         const NodePtr& coords) const {
    const std::size_t k = s.neighbors.size();
    NodePtr nbr_feats = gather_rows(features, s.neighbors);
    NodePtr diffs = sub(repeat_row(s.own_feat, k), nbr_feats);
    detail::check_finite(diffs->values(), "predict_offset");
    NodePtr weights = linear(diffs, offset_w_, offset_b_);  // [k,1], no activation
    NodePtr edges = sub(repeat_row(s.pos, k), gather_rows(coords, s.neighbors));
    return mean_rows(scale_rows(edges, reshape(weights, {k})));
  }

  // Move the centroid, re-collect its neighborhood around the new position,
  // and regather the structure feature. Index selection is a detached choice:
  // gradients flow through features and positions for the chosen indices only.
  LocalStructure update_structure(const LocalStructure& s, const NodePtr& offset,
                                  const PointCloud& cloud, const NodePtr& features,
                                  const std::vector<std::size_t>* replay_neighbors = nullptr) const {
    detail::check_finite(offset->values(), "update_structure");
    LocalStructure out;
    out.pos = add(s.pos, offset);
    if (replay_neighbors) {
      out.neighbors = *replay_neighbors;
    } else {
      const Point moved{out.pos->values()[0], out.pos->values()[1], out.pos->values()[2]};
      out.neighbors = knn(cloud, moved, cfg_.neighbors);
    }
    out.feat = gather_for(features, out.neighbors);
    // A moved centroid is virtual, so the gathered feature stands in as its
    // semantic feature for any further refinement round.
    out.own_feat = out.feat;
    return out;
  }

  // Full adaptive pass: refine_iters rounds of offset prediction and
  // neighborhood reconstruction. With adapt=false the initial FPS structures
  // are returned untouched (the fixed-sampling ablation).
  std::vector<LocalStructure> build(const PointCloud& cloud, const NodePtr& features,
                                    const NodePtr& coords, bool adapt = true,
                                    const SelectionPlan* replay = nullptr,
                                    SelectionPlan* record = nullptr) const {
    std::vector<LocalStructure> structures = init_structures(cloud, features, replay, record);
    if (!adapt) return structures;
    for (std::size_t iter = 0; iter < cfg_.refine_iters; ++iter) {
      if (record) record->refined.emplace_back();
      for (std::size_t l = 0; l < structures.size(); ++l) {
        NodePtr offset = predict_offset(structures[l], features, coords);
        const std::vector<std::size_t>* replayed =
            replay ? &replay->refined[iter][l] : nullptr;
        structures[l] = update_structure(structures[l], offset, cloud, features, replayed);
        if (record) record->refined.back().push_back(structures[l].neighbors);
      }
    }
    return structures;
  }

  // Concatenate structure features: row l of f_g is the l-th gathered feature.
  static NodePtr assemble(const std::vector<LocalStructure>& structures) {
    std::vector<NodePtr> rows;
    rows.reserve(structures.size());
    for (const auto& s : structures) rows.push_back(s.feat);
    return stack_rows(rows);
  }

private:
  CentroidConfig cfg_;
  std::size_t dim_;
  NodePtr offset_w_, offset_b_;
  NodePtr gather_w_, gather_b_;
};

}  // namespace pcil
