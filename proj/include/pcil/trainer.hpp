#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "pcil/data.hpp"
#include "pcil/errors.hpp"
#include "pcil/head.hpp"
#include "pcil/model.hpp"
#include "pcil/optim.hpp"
#include "pcil/rng.hpp"
#include "pcil/textio.hpp"

namespace pcil {

inline constexpr std::uint64_t kStreamInit = 0x696e6974;
inline constexpr std::uint64_t kStreamExpand = 0x65787064;
inline constexpr std::uint64_t kStreamSgd = 0x73676420;
inline constexpr std::uint64_t kStreamExemplar = 0x6578656d;

struct TrainerConfig {
  std::size_t epochs = 150;
  std::size_t batch_size = 32;
  AdamConfig adam;
  bool augment = false;
  // Global gradient-norm ceiling. The first batches of a state see a loss
  // spike from the freshly added classifier columns; clipping keeps that
  // shock from throwing the run into a bad basin. Sized well above the
  // typical batch norm so only the spikes are touched. Zero disables.
  double clip_norm = 10.0;
};

struct RunConfig {
  ModelConfig model;
  TrainerConfig trainer;
  std::vector<std::size_t> schedule;  // classes introduced per state
  std::size_t exemplar_budget = 60;   // 0 disables rehearsal entirely
  bool herding = true;                // false: uniform random exemplar choice
  bool adaptive_centroids = true;
  bool attention = true;
  bool compensation = true;           // false: report raw scores in both columns
  std::uint64_t seed = 1;

  ForwardOptions forward_options() const {
    ForwardOptions o;
    o.adapt_centroids = adaptive_centroids;
    o.attention = attention;
    return o;
  }
};

// Class ids arrive shuffled across states; classifier outputs are indexed by
// order of appearance. This keeps the two naming schemes attached.
struct ClassMap {
  std::vector<int> classes;     // slot -> dataset class id
  std::map<int, int> slots;     // dataset class id -> slot

  void add(const std::vector<int>& new_classes) {
    for (int cls : new_classes) {
      if (slots.count(cls)) {
        throw ScheduleError("class " + std::to_string(cls) + " introduced twice");
      }
      slots[cls] = static_cast<int>(classes.size());
      classes.push_back(cls);
    }
  }

  int slot_of(int cls) const {
    auto it = slots.find(cls);
    if (it == slots.end()) {
      throw EvaluationError("sample of class " + std::to_string(cls) + " was never trained");
    }
    return it->second;
  }

  std::size_t size() const { return classes.size(); }
};

struct ExemplarMemory {
  std::size_t budget = 0;
  std::map<int, std::vector<PointCloud>> stored;  // dataset class id -> exemplars

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& [cls, pool] : stored) n += pool.size();
    return n;
  }

  void check(const ClassMap& seen) const {
    if (total() > budget) {
      throw MemoryError("exemplar memory holds " + std::to_string(total()) + " of " +
                        std::to_string(budget));
    }
    for (const auto& [cls, pool] : stored) {
      if (!seen.slots.count(cls)) {
        throw MemoryError("exemplar memory holds unseen class " + std::to_string(cls));
      }
      if (pool.empty()) throw MemoryError("empty exemplar list for class " + std::to_string(cls));
    }
  }
};

// Greedy herding: repeatedly add the candidate that keeps the running mean of
// selected features closest to the full class mean. Returns indices in
// selection order so later truncation keeps the most representative prefix.
inline std::vector<std::size_t> herding_select(const std::vector<std::vector<double>>& features,
                                               std::size_t quota) {
  if (features.empty()) throw MemoryError("herding: no candidates");
  const std::size_t dim = features[0].size();
  std::vector<double> target(dim, 0.0);
  for (const auto& f : features) {
    if (f.size() != dim) throw DimensionError("herding: inconsistent feature lengths");
    for (std::size_t d = 0; d < dim; ++d) target[d] += f[d];
  }
  for (double& v : target) v /= static_cast<double>(features.size());

  const std::size_t take = std::min(quota, features.size());
  std::vector<std::size_t> picked;
  std::vector<bool> used(features.size(), false);
  std::vector<double> sum(dim, 0.0);
  for (std::size_t m = 1; picked.size() < take; ++m) {
    std::size_t best = features.size();
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < features.size(); ++i) {
      if (used[i]) continue;
      double d2 = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = target[d] - (sum[d] + features[i][d]) / static_cast<double>(m);
        d2 += diff * diff;
      }
      if (d2 < best_d) {
        best_d = d2;
        best = i;
      }
    }
    used[best] = true;
    picked.push_back(best);
    for (std::size_t d = 0; d < dim; ++d) sum[d] += features[best][d];
  }
  return picked;
}

// Rebalance the memory for the classes seen so far (including this state's
// arrivals): old classes keep the front of their selection order, new classes
// are filled by herding over the model's global features, or uniformly at
// random in random mode.
inline void update_exemplars(ExemplarMemory& mem, const DatasetSplit& data,
                             const std::vector<int>& new_classes, std::size_t classes_seen,
                             const Model& model, const RunConfig& cfg, int state) {
  if (mem.budget == 0) return;
  if (mem.budget < classes_seen) {
    throw MemoryError("budget " + std::to_string(mem.budget) + " cannot give every one of " +
                      std::to_string(classes_seen) + " classes an exemplar");
  }
  const std::size_t quota = mem.budget / classes_seen;
  for (auto& [cls, pool] : mem.stored) {
    if (pool.size() > quota) pool.resize(quota);
  }
  std::vector<int> order(new_classes);
  std::sort(order.begin(), order.end());
  const ForwardOptions fwd = cfg.forward_options();
  for (int cls : order) {
    const auto& candidates = data.train.at(static_cast<std::size_t>(cls));
    if (candidates.empty()) throw MemoryError("no training data for class " + std::to_string(cls));
    std::vector<std::size_t> picked;
    if (cfg.herding) {
      std::vector<std::vector<double>> feats;
      feats.reserve(candidates.size());
      for (const auto& cloud : candidates) {
        feats.push_back(model.forward(cloud, fwd).feature->data.values);
      }
      picked = herding_select(feats, quota);
    } else {
      std::vector<std::size_t> idx(candidates.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      Rng rng(derive_seed(derive_seed(cfg.seed, kStreamExemplar),
                          static_cast<std::uint64_t>(state) * 1000 + static_cast<std::uint64_t>(cls)));
      rng.shuffle(idx);
      idx.resize(std::min(quota, idx.size()));
      picked = idx;
    }
    auto& pool = mem.stored[cls];
    pool.clear();
    for (std::size_t i : picked) pool.push_back(candidates[i]);
  }
}

namespace detail {

inline std::vector<double> softmax_values(const std::vector<double>& logits) {
  double top = -std::numeric_limits<double>::infinity();
  for (double v : logits) top = std::max(top, v);
  double z = 0.0;
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return out;
}

inline std::size_t argmax_slot(const std::vector<double>& scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

}  // namespace detail

// One state's optimization: batches drawn uniformly from the union of the
// state's new data and the exemplar store, mean cross-entropy, Adam. Returns
// the per-epoch mean loss trace.
inline std::vector<double> train_state(Model& model, ParamSet& params, const DatasetSplit& data,
                                       const std::vector<int>& new_classes,
                                       const ExemplarMemory& mem, const ClassMap& cmap,
                                       const RunConfig& cfg, int state) {
  std::vector<std::pair<const PointCloud*, int>> pool;  // cloud, classifier slot
  for (int cls : new_classes) {
    for (const auto& cloud : data.train.at(static_cast<std::size_t>(cls))) {
      pool.emplace_back(&cloud, cmap.slot_of(cls));
    }
  }
  for (const auto& [cls, exemplars] : mem.stored) {
    if (std::find(new_classes.begin(), new_classes.end(), cls) != new_classes.end()) {
      continue;  // this state's own data is already in the pool
    }
    for (const auto& cloud : exemplars) pool.emplace_back(&cloud, cmap.slot_of(cls));
  }
  if (pool.empty()) throw ScheduleError("state " + std::to_string(state) + " has no training data");

  const ForwardOptions fwd = cfg.forward_options();
  Rng rng(derive_seed(derive_seed(cfg.seed, kStreamSgd), static_cast<std::uint64_t>(state)));
  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<double> trace;
  trace.reserve(cfg.trainer.epochs);
  for (std::size_t epoch = 0; epoch < cfg.trainer.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t at = 0; at < order.size(); at += cfg.trainer.batch_size) {
      const std::size_t stop = std::min(order.size(), at + cfg.trainer.batch_size);
      std::vector<NodePtr> rows;
      std::vector<int> labels;
      rows.reserve(stop - at);
      labels.reserve(stop - at);
      for (std::size_t j = at; j < stop; ++j) {
        const auto& [cloud, slot] = pool[order[j]];
        if (cfg.trainer.augment) {
          PointCloud jittered = augment(*cloud, rng.bits());
          rows.push_back(model.forward(jittered, fwd).logits);
        } else {
          rows.push_back(model.forward(*cloud, fwd).logits);
        }
        labels.push_back(slot);
      }
      NodePtr loss = cross_entropy(stack_rows(rows), labels);
      params.zero_grad();
      backward(loss);
      clip_gradients(params, cfg.trainer.clip_norm);
      adam_step(params, cfg.trainer.adam);
      loss_sum += loss->data.values[0] * static_cast<double>(stop - at);
    }
    trace.push_back(loss_sum / static_cast<double>(order.size()));
  }
  return trace;
}

// Post-state bookkeeping: mean softmax score each class assigns to itself,
// over the state's full training data for new classes and over the surviving
// exemplars for past ones.
inline void record_state_statistics(StatsStore& stats, const Model& model,
                                    const DatasetSplit& data, const std::vector<int>& new_classes,
                                    const ExemplarMemory& mem, const ClassMap& cmap,
                                    const RunConfig& cfg, int state) {
  const ForwardOptions fwd = cfg.forward_options();
  const auto own_scores = [&](const std::vector<PointCloud>& clouds, int slot) {
    std::vector<double> scores;
    scores.reserve(clouds.size());
    for (const auto& cloud : clouds) {
      const auto probs = detail::softmax_values(model.forward(cloud, fwd).logits->data.values);
      scores.push_back(probs[static_cast<std::size_t>(slot)]);
    }
    return scores;
  };
  std::map<int, std::vector<double>> new_scores, past_scores;
  for (int cls : new_classes) {
    const int slot = cmap.slot_of(cls);
    new_scores[slot] = own_scores(data.train.at(static_cast<std::size_t>(cls)), slot);
  }
  for (const auto& [cls, exemplars] : mem.stored) {
    const int slot = cmap.slot_of(cls);
    if (new_scores.count(slot)) continue;
    past_scores[slot] = own_scores(exemplars, slot);
  }
  record_statistics(stats, state, new_scores, past_scores);
}

struct EvalResult {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  std::size_t past_as_new = 0;  // past-class samples predicted as a current-state class
  std::size_t past_total = 0;
};

// Top-1 accuracy over the test clouds of every class seen so far. With
// compensation, scores pass through the fairness rectification before the
// argmax; the raw argmax path is the no-compensation ablation.
inline EvalResult evaluate(const Model& model, const StatsStore& stats, const DatasetSplit& data,
                           const ClassMap& cmap, int state, bool use_compensation,
                           const ForwardOptions& fwd) {
  EvalResult r;
  for (int cls : cmap.classes) {
    if (cls < 0 || static_cast<std::size_t>(cls) >= data.test.size()) {
      throw EvaluationError("no test data for class " + std::to_string(cls));
    }
    const int slot = cmap.slot_of(cls);
    const bool is_past = stats.knows_class(slot) && stats.class_record(slot).initial_state < state;
    for (const auto& cloud : data.test[static_cast<std::size_t>(cls)]) {
      std::vector<double> scores =
          detail::softmax_values(model.forward(cloud, fwd).logits->data.values);
      if (use_compensation) scores = rectify_scores(scores, stats, state);
      const std::size_t pred = detail::argmax_slot(scores);
      r.correct += (pred == static_cast<std::size_t>(slot)) ? 1 : 0;
      ++r.total;
      if (is_past) {
        ++r.past_total;
        const auto& pred_rec = stats.class_record(static_cast<int>(pred));
        if (pred_rec.initial_state == state) ++r.past_as_new;
      }
    }
  }
  if (r.total == 0) throw EvaluationError("evaluation saw no test samples");
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
  return r;
}

struct StateLog {
  int state = 0;
  std::size_t classes_seen = 0;
  double acc_with_comp = 0.0;
  double acc_without_comp = 0.0;
  double loss_final = 0.0;
  double seconds = 0.0;
  std::vector<double> loss_trace;
  std::size_t past_as_new_with = 0;
  std::size_t past_as_new_without = 0;
  std::size_t past_total = 0;
};

struct RunLog {
  std::vector<StateLog> states;

  // Mean of the per-state accuracies, the usual summary for incremental runs.
  double average_accuracy(bool with_compensation = true) const {
    if (states.empty()) throw EvaluationError("empty run log");
    double s = 0.0;
    for (const auto& st : states) {
      s += with_compensation ? st.acc_with_comp : st.acc_without_comp;
    }
    return s / static_cast<double>(states.size());
  }

  double final_accuracy(bool with_compensation = true) const {
    if (states.empty()) throw EvaluationError("empty run log");
    const auto& st = states.back();
    return with_compensation ? st.acc_with_comp : st.acc_without_comp;
  }

  void write_csv(std::ostream& out, bool include_timing = true) const {
    out << "state,classes_seen,acc_with_comp,acc_without_comp,loss_final";
    if (include_timing) out << ",seconds";
    out << '\n';
    for (const auto& st : states) {
      out << st.state << ',' << st.classes_seen << ',' << detail::fmt_double(st.acc_with_comp)
          << ',' << detail::fmt_double(st.acc_without_comp) << ','
          << detail::fmt_double(st.loss_final);
      if (include_timing) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.3f", st.seconds);
        out << ',' << buf;
      }
      out << '\n';
    }
  }
};

struct RunArtifacts {
  RunLog log;
  ParamSet params;
  StatsStore stats;
  ClassMap cmap;
  ExemplarMemory memory;
  std::vector<std::vector<int>> states;  // class schedule actually used
};

// Rebind a model wrapper to the trained parameters of a finished run, e.g. to
// probe predictions. The artifacts must stay where they are while the model is
// alive.
inline Model probe_model(const RunConfig& cfg, RunArtifacts& art) {
  ModelConfig mc = cfg.model;
  mc.initial_classes = art.cmap.size();
  Rng rng(derive_seed(cfg.seed, kStreamInit));
  return Model(mc, art.params, rng);
}

class Runner {
public:
  // Full incremental loop over the schedule. The caller keeps the artifacts
  // (parameters, statistics, logs) for checkpointing or further probing; the
  // callback sees them after every finished state, e.g. to checkpoint.
  static RunArtifacts run(
      const DatasetSplit& data, const RunConfig& cfg,
      const std::function<void(const StateLog&, const RunArtifacts&)>& on_state = {}) {
    RunArtifacts art;
    art.states = incremental_split(data, cfg.schedule);
    art.memory.budget = cfg.exemplar_budget;

    ModelConfig mc = cfg.model;
    mc.initial_classes = art.states[0].size();
    Rng init_rng(derive_seed(cfg.seed, kStreamInit));
    Model model(mc, art.params, init_rng);
    Rng expand_rng(derive_seed(cfg.seed, kStreamExpand));

    const ForwardOptions fwd = cfg.forward_options();
    for (std::size_t s = 1; s <= art.states.size(); ++s) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto& new_classes = art.states[s - 1];
      if (s > 1) model.classifier().expand_classes(new_classes.size(), expand_rng);
      art.cmap.add(new_classes);

      update_exemplars(art.memory, data, new_classes, art.cmap.size(), model, cfg,
                       static_cast<int>(s));
      art.memory.check(art.cmap);

      StateLog log;
      log.state = static_cast<int>(s);
      log.classes_seen = art.cmap.size();
      log.loss_trace = train_state(model, art.params, data, new_classes, art.memory, art.cmap, cfg,
                                   static_cast<int>(s));
      log.loss_final = log.loss_trace.empty() ? 0.0 : log.loss_trace.back();

      record_state_statistics(art.stats, model, data, new_classes, art.memory, art.cmap, cfg,
                              static_cast<int>(s));

      // Without rehearsal there are no past-class samples to refresh the
      // current-state means from, so the rectification has no statistics to
      // apply and scoring stays raw. The same fallback serves the
      // compensation-off ablation.
      EvalResult without =
          evaluate(model, art.stats, data, art.cmap, static_cast<int>(s), false, fwd);
      EvalResult with =
          cfg.exemplar_budget > 0 && cfg.compensation
              ? evaluate(model, art.stats, data, art.cmap, static_cast<int>(s), true, fwd)
              : without;
      log.acc_with_comp = with.accuracy;
      log.acc_without_comp = without.accuracy;
      log.past_as_new_with = with.past_as_new;
      log.past_as_new_without = without.past_as_new;
      log.past_total = with.past_total;
      log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      art.log.states.push_back(log);
      if (on_state) on_state(log, art);
    }
    return art;
  }
};

}  // namespace pcil
