#pragma once

#include <string>
#include <vector>

#include "pcil/autodiff.hpp"
#include "pcil/errors.hpp"
#include "pcil/geometry.hpp"
#include "pcil/optim.hpp"

namespace pcil {

// Shared per-point MLP: a stack of linear+ReLU blocks applied to every point
// with the same weights. The tapped block's output is what the geometric
// stages consume; blocks past the tap are never instantiated.
struct EncoderConfig {
  std::vector<std::size_t> widths{3, 32, 64, 64};
  std::size_t tap = 3;  // 1-based block whose output feeds geometry

  std::size_t blocks() const { return widths.size() - 1; }
  std::size_t feature_dim() const { return widths[tap]; }

  void validate() const {
    if (widths.size() < 2 || widths[0] != 3) {
      throw ConfigError("encoder widths must start at 3 and name at least one block");
    }
    if (tap < 1 || tap > blocks()) {
      throw ConfigError("encoder tap block " + std::to_string(tap) + " does not exist");
    }
  }
};

class Encoder {
public:
  Encoder(const EncoderConfig& cfg, ParamSet& params, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    for (std::size_t b = 0; b < cfg_.tap; ++b) {
      const std::string tag = "encoder.block" + std::to_string(b + 1);
      weights_.push_back(params.create_glorot(tag + ".W", cfg_.widths[b], cfg_.widths[b + 1], rng));
      biases_.push_back(params.create_zeros(tag + ".b", {cfg_.widths[b + 1]}));
    }
  }

  // Per-point features [U,d]; row i depends only on point i, so any row
  // permutation of the input permutes the output rows identically.
  NodePtr encode(const PointCloud& cloud) const {
    if (!is_normalized(cloud)) {
      throw PreconditionError("encode: cloud is not unit-sphere normalized");
    }
    return encode_points(points_node(cloud));
  }

  NodePtr encode_points(const NodePtr& coords) const {
    NodePtr h = coords;
    for (std::size_t b = 0; b < weights_.size(); ++b) {
      h = relu(linear(h, weights_[b], biases_[b]));
    }
    return h;
  }

  static NodePtr points_node(const PointCloud& cloud) {
    Tensor t = Tensor::zeros({cloud.size(), 3});
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      t.values[i * 3 + 0] = cloud.points[i][0];
      t.values[i * 3 + 1] = cloud.points[i][1];
      t.values[i * 3 + 2] = cloud.points[i][2];
    }
    return constant(std::move(t));
  }

  const EncoderConfig& config() const { return cfg_; }

private:
  EncoderConfig cfg_;
  std::vector<NodePtr> weights_;
  std::vector<NodePtr> biases_;
};

}  // namespace pcil
