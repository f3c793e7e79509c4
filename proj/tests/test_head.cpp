#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "pcil/head.hpp"
#include "pcil/rng.hpp"

using namespace pcil;

namespace {

Tensor random_feature(std::size_t d, Rng& rng) {
  Tensor t = Tensor::zeros({d});
  for (double& v : t.values) v = rng.uniform(-1.0, 1.0);
  return t;
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

// stats tables used by the rectification cases: class 0 and 1 learned in
// state 1, class 2 and 3 new in state 2
StatsStore two_state_stats(double psi0_init, double psi0_cur) {
  StatsStore stats;
  stats.record_initial(0, 1, psi0_init);
  stats.record_initial(1, 1, 0.5);
  stats.record_state_mean(1, 0.25);
  stats.record_initial(2, 2, 0.5);
  stats.record_initial(3, 2, 0.5);
  stats.record_state_mean(2, 0.5);
  stats.set_current(0, psi0_cur);
  stats.set_current(1, 0.5);
  return stats;
}

}  // namespace

TEST_CASE("zeroed classifier weights score every class equally") {
  ParamSet params;
  Rng rng(71);
  Classifier head({6, 8, 8, 4}, 3, params, rng);
  for (auto& e : params.entries()) {
    for (double& v : e.node->data.values) v = 0.0;
  }
  NodePtr scores = head.classify(constant(random_feature(6, rng)));
  for (double s : scores->values()) {
    REQUIRE_THAT(s, Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-15));
  }
}

TEST_CASE("classify is the softmax of the logits") {
  ParamSet params;
  Rng rng(72);
  Classifier head({5, 6, 6, 4}, 4, params, rng);
  Tensor f = random_feature(5, rng);
  NodePtr logits = head.logits(constant(f));
  NodePtr scores = head.classify(constant(f));
  REQUIRE(logits->shape() == Shape{4});
  double sum = 0.0;
  for (double s : scores->values()) sum += s;
  REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
  REQUIRE(argmax(scores->values()) == argmax(logits->values()));
}

TEST_CASE("classifier rejects features of the wrong length") {
  ParamSet params;
  Rng rng(73);
  Classifier head({5, 6, 6, 4}, 2, params, rng);
  REQUIRE_THROWS_AS(head.logits(constant(random_feature(6, rng))), DimensionError);
}

TEST_CASE("expanding by zero classes changes nothing") {
  ParamSet params;
  Rng rng(74);
  Classifier head({4, 4, 4, 4}, 2, params, rng);
  const std::vector<double> w_before = params.get("head.out.W")->values();
  Rng expand_rng(99);
  head.expand_classes(0, expand_rng);
  REQUIRE(head.num_classes() == 2);
  REQUIRE(params.get("head.out.W")->values() == w_before);
}

TEST_CASE("expanding the output keeps old logits bit for bit") {
  ParamSet params;
  Rng rng(75);
  Classifier head({4, 5, 5, 4}, 3, params, rng);
  Tensor f = random_feature(4, rng);
  const std::vector<double> before = head.logits(constant(f))->values();

  Rng expand_rng(100);
  head.expand_classes(2, expand_rng);
  REQUIRE(head.num_classes() == 5);
  const std::vector<double> after = head.logits(constant(f))->values();
  REQUIRE(after.size() == 5);
  for (std::size_t j = 0; j < 3; ++j) REQUIRE(after[j] == before[j]);
}

TEST_CASE("repeated expansion reaches the requested width") {
  ParamSet params;
  Rng rng(76);
  Classifier head({4, 4, 4, 4}, 4, params, rng);
  Rng expand_rng(101);
  head.expand_classes(2, expand_rng);
  head.expand_classes(2, expand_rng);
  REQUIRE(head.num_classes() == 8);
  REQUIRE(params.get("head.out.W")->shape() == Shape{4, 8});
  REQUIRE(params.get("head.out.b")->shape() == Shape{8});
  REQUIRE(head.logits(constant(random_feature(4, rng)))->size() == 8);
}

TEST_CASE("initial statistics are write-once") {
  StatsStore stats;
  stats.record_initial(0, 1, 0.8);
  REQUIRE_THROWS_AS(stats.record_initial(0, 2, 0.9), StatisticsError);
  stats.record_state_mean(1, 0.8);
  REQUIRE_THROWS_AS(stats.record_state_mean(1, 0.7), StatisticsError);
  REQUIRE(stats.knows_class(0));
  REQUIRE_FALSE(stats.knows_class(1));
  REQUIRE(stats.class_record(0).initial_state == 1);
  REQUIRE(stats.class_record(0).psi_init == 0.8);
}

TEST_CASE("mean scores must sit inside the half-open unit interval") {
  StatsStore stats;
  REQUIRE_THROWS_AS(stats.record_initial(0, 1, 0.0), StatisticsError);
  REQUIRE_THROWS_AS(stats.record_initial(0, 1, 1.2), StatisticsError);
  REQUIRE_THROWS_AS(stats.record_initial(0, 1, std::nan("")), StatisticsError);
  REQUIRE_THROWS_AS(stats.record_state_mean(1, -0.1), StatisticsError);
  REQUIRE_THROWS_AS(stats.set_current(0, 0.0), StatisticsError);
  REQUIRE_NOTHROW(stats.record_initial(0, 1, 1.0));
}

TEST_CASE("missing statistics raise compensation errors") {
  StatsStore stats;
  stats.record_initial(0, 1, 0.5);
  REQUIRE_THROWS_AS(stats.class_record(5), CompensationError);
  REQUIRE_THROWS_AS(stats.psi_cur(0), CompensationError);
  REQUIRE_THROWS_AS(stats.psi_new(1), CompensationError);
  REQUIRE_FALSE(stats.has_psi_new(1));
}

TEST_CASE("class partitions by first-seen state") {
  StatsStore stats;
  stats.record_initial(0, 1, 0.5);
  stats.record_initial(1, 1, 0.5);
  stats.record_initial(2, 2, 0.5);
  REQUIRE(stats.classes_first_seen_in(2) == std::vector<int>{2});
  std::vector<int> before = stats.classes_before(2);
  std::sort(before.begin(), before.end());
  REQUIRE(before == std::vector<int>{0, 1});
  REQUIRE(stats.classes_before(1).empty());
}

TEST_CASE("recording a state averages per-class then across classes") {
  StatsStore stats;
  stats.record_initial(1, 1, 0.9);
  stats.record_state_mean(1, 0.9);

  std::map<int, std::vector<double>> new_scores{{3, {0.5, 0.7}}, {4, {0.9, 0.3}}};
  std::map<int, std::vector<double>> past_scores{{1, {0.2, 0.4}}};
  record_statistics(stats, 2, new_scores, past_scores);

  REQUIRE_THAT(stats.class_record(3).psi_init, Catch::Matchers::WithinAbs(0.6, 1e-12));
  REQUIRE_THAT(stats.class_record(4).psi_init, Catch::Matchers::WithinAbs(0.6, 1e-12));
  REQUIRE(stats.class_record(3).initial_state == 2);
  REQUIRE_THAT(stats.psi_new(2), Catch::Matchers::WithinAbs(0.6, 1e-12));
  REQUIRE_THAT(stats.psi_cur(1), Catch::Matchers::WithinAbs(0.3, 1e-12));
}

TEST_CASE("recording clears stale current-state means first") {
  StatsStore stats;
  stats.record_initial(0, 1, 0.9);
  stats.record_state_mean(1, 0.9);
  stats.set_current(0, 0.123);
  record_statistics(stats, 2, {{1, {0.8}}}, {});
  REQUIRE(stats.current_means().empty());
}

TEST_CASE("recording rejects empty or unknown inputs") {
  StatsStore stats;
  REQUIRE_THROWS_AS(record_statistics(stats, 1, {}, {}), StatisticsError);
  StatsStore other;
  REQUIRE_THROWS_AS(record_statistics(other, 2, {{2, {0.5}}}, {{7, {0.5}}}), StatisticsError);
  REQUIRE_THROWS_AS(mean_of({}, "x"), StatisticsError);
}

TEST_CASE("perfectly confident scores record as one") {
  StatsStore stats;
  record_statistics(stats, 1, {{0, {1.0, 1.0}}, {1, {1.0}}}, {});
  REQUIRE(stats.psi_new(1) == 1.0);
  REQUIRE(stats.class_record(0).psi_init == 1.0);
}

TEST_CASE("rectification is inert before any past classes exist") {
  StatsStore stats = two_state_stats(0.8, 0.4);
  const std::vector<double> raw{0.1, 0.2, 0.3, 0.4};
  REQUIRE(rectify_scores(raw, stats, 1) == raw);

  StatsStore fresh;
  record_statistics(fresh, 2, {{0, {0.5}}, {1, {0.5}}, {2, {0.5}}, {3, {0.5}}}, {});
  REQUIRE(rectify_scores(raw, fresh, 2) == raw);
}

TEST_CASE("rectification leaves a past-class winner alone") {
  StatsStore stats = two_state_stats(0.8, 0.4);
  const std::vector<double> raw{0.6, 0.1, 0.2, 0.1};
  REQUIRE(rectify_scores(raw, stats, 2) == raw);
}

TEST_CASE("matched statistics give unit coefficients") {
  // every initial/current and state-mean ratio collapses to one
  StatsStore uniform;
  uniform.record_initial(0, 1, 0.5);
  uniform.record_initial(1, 1, 0.5);
  uniform.record_state_mean(1, 0.5);
  uniform.record_initial(2, 2, 0.5);
  uniform.record_initial(3, 2, 0.5);
  uniform.record_state_mean(2, 0.5);
  uniform.set_current(0, 0.5);
  uniform.set_current(1, 0.5);
  const std::vector<double> raw{0.1, 0.2, 0.4, 0.3};
  REQUIRE(rectify_scores(raw, uniform, 2) == raw);
}

TEST_CASE("a faded past class recovers the contested argmax") {
  StatsStore stats = two_state_stats(0.8, 0.4);
  // psi_new(2)/psi_new(1) = 0.5/0.25, psi_init/psi_cur = 0.8/0.4
  const std::vector<double> raw{0.2, 0.01, 0.8, 0.05};
  const std::vector<double> out = rectify_scores(raw, stats, 2);
  REQUIRE(out[0] == 0.2 * (0.8 / 0.4) * (0.5 / 0.25));
  REQUIRE(out[0] == 0.8);
  REQUIRE(out[2] == 0.8);
  REQUIRE(out[3] == 0.05);
}

TEST_CASE("rectified new-class scores are untouched") {
  StatsStore stats = two_state_stats(0.9, 0.3);
  const std::vector<double> raw{0.1, 0.15, 0.5, 0.25};
  const std::vector<double> out = rectify_scores(raw, stats, 2);
  REQUIRE(out[2] == raw[2]);
  REQUIRE(out[3] == raw[3]);
  REQUIRE(out[0] > raw[0]);
}

TEST_CASE("rectifying without statistics for the winner fails") {
  StatsStore stats;
  stats.record_initial(0, 1, 0.5);
  stats.record_state_mean(1, 0.5);
  // class 1 exists in the score vector but was never recorded
  const std::vector<double> raw{0.2, 0.8};
  REQUIRE_THROWS_AS(rectify_scores(raw, stats, 2), CompensationError);
}

TEST_CASE("rectification matches directly computed coefficients") {
  StatsStore stats;
  stats.record_initial(0, 1, 0.71);
  stats.record_initial(1, 1, 0.64);
  stats.record_state_mean(1, 0.675);
  stats.record_initial(2, 2, 0.55);
  stats.record_state_mean(2, 0.55);
  stats.record_initial(3, 3, 0.62);
  stats.record_initial(4, 3, 0.58);
  stats.record_state_mean(3, 0.6);
  stats.set_current(0, 0.31);
  stats.set_current(1, 0.40);
  stats.set_current(2, 0.22);

  const std::vector<double> raw{0.11, 0.07, 0.09, 0.41, 0.32};
  const std::vector<double> out = rectify_scores(raw, stats, 3);
  REQUIRE(out[0] == raw[0] * ((0.71 / 0.31) * (0.6 / 0.675)));
  REQUIRE(out[1] == raw[1] * ((0.64 / 0.40) * (0.6 / 0.675)));
  REQUIRE(out[2] == raw[2] * ((0.55 / 0.22) * (0.6 / 0.55)));
  REQUIRE(out[3] == raw[3]);
  REQUIRE(out[4] == raw[4]);
}
