#pragma once

#include <string>
#include <utility>

#include "pcil/autodiff.hpp"
#include "pcil/errors.hpp"
#include "pcil/optim.hpp"

namespace pcil {

struct AttentionConfig {
  std::size_t dim = 64;       // d, channel count
  std::size_t reduction = 4;  // r

  std::size_t bottleneck() const { return dim / reduction; }

  void validate() const {
    if (reduction < 1 || dim % reduction != 0 || bottleneck() < 1) {
      throw ConfigError("attention: d=" + std::to_string(dim) + " must be divisible by r=" +
                        std::to_string(reduction));
    }
  }
};

// Residual channel gate over structure features: squeeze each row through a
// d/r bottleneck, expand back, squash to (0,1), then rescale the input with a
// residual bypass, f_p = A_g * f_g + f_g. Rows never mix.
class Attention {
public:
  Attention(const AttentionConfig& cfg, ParamSet& params, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    down_w_ = params.create_glorot("attention.down.W", cfg_.dim, cfg_.bottleneck(), rng);
    down_b_ = params.create_zeros("attention.down.b", {cfg_.bottleneck()});
    up_w_ = params.create_glorot("attention.up.W", cfg_.bottleneck(), cfg_.dim, rng);
    up_b_ = params.create_zeros("attention.up.b", {cfg_.dim});
  }

  struct Result {
    NodePtr gated;  // f_p [L,d]
    NodePtr gate;   // A_g [L,d], kept for inspection and CSV export
  };

  Result attend(const NodePtr& fg) const {
    if (fg->data.rank() != 2 || fg->shape()[1] != cfg_.dim) {
      throw DimensionError("attend: expected [L," + std::to_string(cfg_.dim) + "], got " +
                           shape_str(fg->shape()));
    }
    NodePtr gate = sigmoid(linear(relu(linear(fg, down_w_, down_b_)), up_w_, up_b_));
    NodePtr gated = add(mul(gate, fg), fg);
    return {std::move(gated), std::move(gate)};
  }

  // Elementwise max over the L structure rows -> global feature f_c [d].
  static NodePtr global_pool(const NodePtr& fp) {
    if (fp->data.rank() != 2 || fp->shape()[0] == 0) {
      throw DimensionError("global_pool: need a nonempty [L,d] matrix");
    }
    return max_reduce(fp, 0);
  }

  const AttentionConfig& config() const { return cfg_; }

private:
  AttentionConfig cfg_;
  NodePtr down_w_, down_b_, up_w_, up_b_;
};

}  // namespace pcil
