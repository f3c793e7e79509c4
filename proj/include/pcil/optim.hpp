#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "pcil/autodiff.hpp"
#include "pcil/errors.hpp"
#include "pcil/rng.hpp"
#include "pcil/tensor.hpp"

namespace pcil {

struct AdamConfig {
  double lr = 0.0025;
  double weight_decay = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Glorot-style uniform fill in +-sqrt(6/(fan_in+fan_out)).
inline void glorot_fill(std::vector<double>& values, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : values) v = rng.uniform(-limit, limit);
}

// Named trainable tensors with per-parameter Adam moment buffers and a shared
// step counter. Leaf nodes are stable across forward passes; op graphs built
// on top of them are discarded after each step.
class ParamSet {
public:
  struct Entry {
    std::string name;
    NodePtr node;
    std::vector<double> m;
    std::vector<double> v;
  };

  // Creating a name that already exists returns the existing node (shape
  // checked, values kept), so a fresh model wrapper can attach to trained
  // parameters.
  NodePtr create(const std::string& name, Shape shape, std::vector<double> values) {
    if (auto it = index_.find(name); it != index_.end()) {
      NodePtr existing = entries_[it->second].node;
      if (existing->data.shape != shape) {
        throw OptimizerStateError("parameter '" + name + "' already exists with shape " +
                                  shape_str(existing->data.shape) + ", requested " +
                                  shape_str(shape));
      }
      return existing;
    }
    Entry e;
    e.name = name;
    e.node = leaf(Tensor(std::move(shape), std::move(values)), true);
    e.m.assign(e.node->size(), 0.0);
    e.v.assign(e.node->size(), 0.0);
    index_[name] = entries_.size();
    entries_.push_back(std::move(e));
    return entries_.back().node;
  }

  NodePtr create_glorot(const std::string& name, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    std::vector<double> values(fan_in * fan_out);
    glorot_fill(values, fan_in, fan_out, rng);
    return create(name, {fan_in, fan_out}, std::move(values));
  }

  NodePtr create_zeros(const std::string& name, Shape shape) {
    const std::size_t n = shape_numel(shape);
    return create(name, std::move(shape), std::vector<double>(n, 0.0));
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  NodePtr get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw OptimizerStateError("no parameter named '" + name + "'");
    return entries_[it->second].node;
  }

  Entry& entry(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw OptimizerStateError("no parameter named '" + name + "'");
    return entries_[it->second];
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

  std::int64_t step_count() const { return step_; }
  void set_step_count(std::int64_t s) { step_ = s; }

  std::size_t total_values() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.node->size();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) {
      e.node->data.ensure_grad();
      e.node->data.clear_grad();
    }
  }

  // Grow a rank-2 parameter [in,C] to [in,C+extra] (or a rank-1 [C] bias to
  // [C+extra]). Existing values and Adam moments keep their slots bit-exactly;
  // new slots take the supplied values with zeroed moments.
  void expand_cols(const std::string& name, std::size_t extra, const std::vector<double>& new_values) {
    if (extra == 0) return;
    Entry& e = entry(name);
    Tensor& t = e.node->data;
    if (t.rank() == 1) {
      const std::size_t old_c = t.shape[0];
      if (new_values.size() != extra) throw DimensionError("expand_cols: need " + std::to_string(extra) + " bias values");
      t.shape[0] = old_c + extra;
      t.values.insert(t.values.end(), new_values.begin(), new_values.end());
      e.m.resize(old_c + extra, 0.0);
      e.v.resize(old_c + extra, 0.0);
    } else if (t.rank() == 2) {
      const std::size_t in = t.shape[0];
      const std::size_t old_c = t.shape[1];
      const std::size_t new_c = old_c + extra;
      if (new_values.size() != in * extra) {
        throw DimensionError("expand_cols: need " + std::to_string(in * extra) + " weight values");
      }
      auto widen = [&](const std::vector<double>& src, const double* fresh) {
        std::vector<double> dst(in * new_c, 0.0);
        for (std::size_t a = 0; a < in; ++a) {
          for (std::size_t j = 0; j < old_c; ++j) dst[a * new_c + j] = src[a * old_c + j];
          if (fresh) {
            for (std::size_t j = 0; j < extra; ++j) dst[a * new_c + old_c + j] = fresh[a * extra + j];
          }
        }
        return dst;
      };
      t.values = widen(t.values, new_values.data());
      e.m = widen(e.m, nullptr);
      e.v = widen(e.v, nullptr);
      t.shape[1] = new_c;
    } else {
      throw DimensionError("expand_cols: unsupported rank " + std::to_string(t.rank()));
    }
    e.node->data.grad.clear();
  }

  // Copy current parameter values (no graph, no moments); used for
  // immutable evaluation snapshots and checkpoint round-trip tests.
  std::unordered_map<std::string, Tensor> snapshot_values() const {
    std::unordered_map<std::string, Tensor> out;
    for (const auto& e : entries_) {
      Tensor t(e.node->data.shape, e.node->data.values);
      out.emplace(e.name, std::move(t));
    }
    return out;
  }

  void restore_values(const std::unordered_map<std::string, Tensor>& snap) {
    for (auto& e : entries_) {
      auto it = snap.find(e.name);
      if (it == snap.end()) throw OptimizerStateError("snapshot missing parameter '" + e.name + "'");
      if (!same_shape(it->second.shape, e.node->data.shape)) {
        throw DimensionError("snapshot shape mismatch for '" + e.name + "'");
      }
      e.node->data.values = it->second.values;
    }
  }

private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::int64_t step_ = 0;
};

// Bias-corrected Adam with decoupled weight decay. Requires every parameter's
// gradient buffer to be populated (zero_grad or a backward pass); clears
// gradients afterwards and bumps the shared step counter.
// Rescale all gradients so their joint L2 norm is at most `max_norm`.
// Returns the norm before clipping. A non-positive `max_norm` is a no-op,
// as is a batch whose gradients already fit.
inline double clip_gradients(ParamSet& params, double max_norm) {
  double sq = 0.0;
  for (const auto& e : params.entries()) {
    if (!e.node->data.has_grad()) {
      throw OptimizerStateError("clip_gradients: parameter '" + e.name + "' has no gradient");
    }
    for (double g : e.node->data.grad) sq += g * g;
  }
  const double total = std::sqrt(sq);
  if (max_norm > 0.0 && total > max_norm) {
    const double scale = max_norm / total;
    for (auto& e : params.entries())
      for (double& g : e.node->data.grad) g *= scale;
  }
  return total;
}

inline void adam_step(ParamSet& params, const AdamConfig& cfg = {}) {
  for (const auto& e : params.entries()) {
    if (!e.node->data.has_grad()) {
      throw OptimizerStateError("adam_step: parameter '" + e.name + "' has no gradient");
    }
  }
  params.set_step_count(params.step_count() + 1);
  const double t = static_cast<double>(params.step_count());
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& e : params.entries()) {
    Tensor& p = e.node->data;
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      const double g = p.grad[i];
      e.m[i] = cfg.beta1 * e.m[i] + (1.0 - cfg.beta1) * g;
      e.v[i] = cfg.beta2 * e.v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = e.m[i] / bc1;
      const double vhat = e.v[i] / bc2;
      p.values[i] -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * p.values[i]);
    }
    p.clear_grad();
  }
}

}  // namespace pcil
