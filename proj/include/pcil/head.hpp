#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "pcil/autodiff.hpp"
#include "pcil/errors.hpp"
#include "pcil/optim.hpp"

namespace pcil {

struct ClassifierConfig {
  std::size_t input_dim = 64;
  std::size_t h1 = 64, h2 = 64, h3 = 32;
};

// Four-layer MLP over the global feature with an output layer that widens as
// class increments arrive. Existing output weights are preserved bit-exactly
// when new class columns are appended.
class Classifier {
public:
  Classifier(const ClassifierConfig& cfg, std::size_t initial_classes, ParamSet& params, Rng& rng)
      : cfg_(cfg), params_(&params), num_classes_(initial_classes) {
    w1_ = params.create_glorot("head.fc1.W", cfg.input_dim, cfg.h1, rng);
    b1_ = params.create_zeros("head.fc1.b", {cfg.h1});
    w2_ = params.create_glorot("head.fc2.W", cfg.h1, cfg.h2, rng);
    b2_ = params.create_zeros("head.fc2.b", {cfg.h2});
    w3_ = params.create_glorot("head.fc3.W", cfg.h2, cfg.h3, rng);
    b3_ = params.create_zeros("head.fc3.b", {cfg.h3});
    w_out_ = params.create_glorot("head.out.W", cfg.h3, initial_classes, rng);
    b_out_ = params.create_zeros("head.out.b", {initial_classes});
  }

  std::size_t num_classes() const { return num_classes_; }

  NodePtr logits(const NodePtr& fc) const {
    if (fc->size() != cfg_.input_dim) {
      throw DimensionError("classifier: feature length " + std::to_string(fc->size()) +
                           ", expected " + std::to_string(cfg_.input_dim));
    }
    NodePtr h = reshape(fc, {1, cfg_.input_dim});
    h = relu(linear(h, w1_, b1_));
    h = relu(linear(h, w2_, b2_));
    h = relu(linear(h, w3_, b3_));
    return reshape(linear(h, w_out_, b_out_), {num_classes_});
  }

  // Softmax scores over the currently known classes.
  NodePtr classify(const NodePtr& fc) const { return softmax(logits(fc)); }

  // Append output slots for newly arriving classes; a no-op for zero.
  void expand_classes(std::size_t added, Rng& rng) {
    if (added == 0) return;
    std::vector<double> w_new(cfg_.h3 * added);
    glorot_fill(w_new, cfg_.h3, num_classes_ + added, rng);
    params_->expand_cols("head.out.W", added, w_new);
    params_->expand_cols("head.out.b", added, std::vector<double>(added, 0.0));
    num_classes_ += added;
  }

  const ClassifierConfig& config() const { return cfg_; }

private:
  ClassifierConfig cfg_;
  ParamSet* params_;
  std::size_t num_classes_;
  NodePtr w1_, b1_, w2_, b2_, w3_, b3_, w_out_, b_out_;
};

// Mean softmax-score bookkeeping for score fairness compensation. Initial
// per-class records and per-state new-class means are write-once; the
// current-state means for past classes are refreshed every state.
class StatsStore {
public:
  struct ClassRecord {
    int initial_state = 0;
    double psi_init = 0.0;  // mean score when the class was first learned
  };

  void record_initial(int class_id, int state, double psi) {
    if (per_class_.count(class_id)) {
      throw StatisticsError("psi_init for class " + std::to_string(class_id) + " already recorded");
    }
    check_psi(psi, "psi_init");
    per_class_[class_id] = {state, psi};
  }

  void record_state_mean(int state, double psi_new) {
    if (psi_new_.count(state)) {
      throw StatisticsError("psi_new for state " + std::to_string(state) + " already recorded");
    }
    check_psi(psi_new, "psi_new");
    psi_new_[state] = psi_new;
  }

  void set_current(int class_id, double psi_cur) {
    check_psi(psi_cur, "psi_cur");
    psi_cur_[class_id] = psi_cur;
  }

  bool knows_class(int class_id) const { return per_class_.count(class_id) != 0; }

  const ClassRecord& class_record(int class_id) const {
    auto it = per_class_.find(class_id);
    if (it == per_class_.end()) {
      throw CompensationError("no statistics for class " + std::to_string(class_id));
    }
    return it->second;
  }

  double psi_cur(int class_id) const {
    auto it = psi_cur_.find(class_id);
    if (it == psi_cur_.end()) {
      throw CompensationError("no current-state mean for class " + std::to_string(class_id));
    }
    return it->second;
  }

  double psi_new(int state) const {
    auto it = psi_new_.find(state);
    if (it == psi_new_.end()) {
      throw CompensationError("no new-class mean for state " + std::to_string(state));
    }
    return it->second;
  }

  bool has_psi_new(int state) const { return psi_new_.count(state) != 0; }

  std::vector<int> classes_first_seen_in(int state) const {
    std::vector<int> out;
    for (const auto& [cls, rec] : per_class_) {
      if (rec.initial_state == state) out.push_back(cls);
    }
    return out;
  }

  std::vector<int> classes_before(int state) const {
    std::vector<int> out;
    for (const auto& [cls, rec] : per_class_) {
      if (rec.initial_state < state) out.push_back(cls);
    }
    return out;
  }

  const std::map<int, ClassRecord>& class_records() const { return per_class_; }
  const std::map<int, double>& current_means() const { return psi_cur_; }
  const std::map<int, double>& state_means() const { return psi_new_; }

  void clear_current() { psi_cur_.clear(); }

private:
  static void check_psi(double v, const char* what) {
    if (!(v > 0.0 && v <= 1.0)) {
      throw StatisticsError(std::string(what) + " = " + std::to_string(v) + " outside (0,1]");
    }
  }

  std::map<int, ClassRecord> per_class_;
  std::map<int, double> psi_cur_;   // per past class, for the current state
  std::map<int, double> psi_new_;   // per state, mean over that state's new classes
};

inline double mean_of(const std::vector<double>& xs, const char* what) {
  if (xs.empty()) throw StatisticsError(std::string(what) + ": no samples");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

// Store the post-training score statistics of one state: psi_init for every
// class that first appeared here, refreshed psi_cur for every past class, and
// the state's new-class mean. Score lists hold the softmax score a sample's
// own class received.
inline void record_statistics(StatsStore& stats, int state,
                              const std::map<int, std::vector<double>>& new_class_scores,
                              const std::map<int, std::vector<double>>& past_class_scores) {
  if (new_class_scores.empty()) throw StatisticsError("record_statistics: state has no new classes");
  stats.clear_current();
  double acc = 0.0;
  for (const auto& [cls, scores] : new_class_scores) {
    const double m = mean_of(scores, "new-class scores");
    stats.record_initial(cls, state, m);
    acc += m;
  }
  stats.record_state_mean(state, acc / static_cast<double>(new_class_scores.size()));
  for (const auto& [cls, scores] : past_class_scores) {
    if (!stats.knows_class(cls)) {
      throw StatisticsError("past class " + std::to_string(cls) + " was never recorded");
    }
    stats.set_current(cls, mean_of(scores, "past-class scores"));
  }
}

// Score fairness compensation: when the raw argmax lands on one of state s's
// new classes, every past-class score is rescaled by the ratio of its initial
// mean score to its current one, times the ratio of new-class means between
// the two states. New-class scores are never touched and the result is left
// unnormalized; only the argmax ranking is meant to be consumed.
inline std::vector<double> rectify_scores(const std::vector<double>& raw, const StatsStore& stats,
                                          int state) {
  if (state < 2) return raw;
  const std::vector<int> past = stats.classes_before(state);
  if (past.empty()) return raw;
  std::size_t top = 0;
  for (std::size_t i = 1; i < raw.size(); ++i) {
    if (raw[i] > raw[top]) top = i;
  }
  const auto& top_rec = stats.class_record(static_cast<int>(top));
  if (top_rec.initial_state != state) return raw;  // raw winner is a past class

  std::vector<double> out = raw;
  const double psi_new_s = stats.psi_new(state);
  for (int cls : past) {
    const auto& rec = stats.class_record(cls);
    const double coeff =
        (rec.psi_init / stats.psi_cur(cls)) * (psi_new_s / stats.psi_new(rec.initial_state));
    out[static_cast<std::size_t>(cls)] *= coeff;
  }
  return out;
}

}  // namespace pcil
