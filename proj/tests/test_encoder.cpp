#include <catch_amalgamated.hpp>

#include <vector>

#include "pcil/encoder.hpp"
#include "pcil/gradcheck.hpp"
#include "pcil/rng.hpp"

using namespace pcil;

namespace {

PointCloud ball_cloud(std::size_t n, Rng& rng) {
  PointCloud c;
  c.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.points.push_back({rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)});
  }
  return c;
}

}  // namespace

TEST_CASE("encoder config validation") {
  EncoderConfig ok{{3, 8, 16, 16}, 3};
  REQUIRE_NOTHROW(ok.validate());
  REQUIRE(ok.blocks() == 3);
  REQUIRE(ok.feature_dim() == 16);

  REQUIRE_THROWS_AS((EncoderConfig{{2, 8}, 1}.validate()), ConfigError);
  REQUIRE_THROWS_AS((EncoderConfig{{3}, 1}.validate()), ConfigError);
  REQUIRE_THROWS_AS((EncoderConfig{{3, 8}, 0}.validate()), ConfigError);
  REQUIRE_THROWS_AS((EncoderConfig{{3, 8, 16}, 3}.validate()), ConfigError);
}

TEST_CASE("blocks past the tap are never created") {
  ParamSet params;
  Rng rng(7);
  Encoder enc({{3, 8, 16, 32}, 2}, params, rng);
  REQUIRE(params.has("encoder.block1.W"));
  REQUIRE(params.has("encoder.block2.W"));
  REQUIRE_FALSE(params.has("encoder.block3.W"));
  REQUIRE(enc.config().feature_dim() == 16);
}

TEST_CASE("identical points produce identical feature rows") {
  ParamSet params;
  Rng rng(8);
  Encoder enc({{3, 6, 10}, 2}, params, rng);
  PointCloud c;
  c.points = {{0.1, 0.2, 0.3}, {0.5, -0.4, 0.0}, {0.1, 0.2, 0.3}};
  NodePtr f = enc.encode(c);
  REQUIRE(f->shape() == Shape{3, 10});
  for (std::size_t j = 0; j < 10; ++j) {
    REQUIRE(f->values()[0 * 10 + j] == f->values()[2 * 10 + j]);
  }
}

TEST_CASE("permuting the points permutes the feature rows") {
  ParamSet params;
  Rng rng(9);
  Encoder enc({{3, 6, 12}, 2}, params, rng);
  PointCloud c = ball_cloud(8, rng);
  const std::vector<std::size_t> perm{5, 2, 7, 0, 1, 6, 3, 4};
  PointCloud shuffled;
  for (std::size_t i : perm) shuffled.points.push_back(c.points[i]);

  NodePtr a = enc.encode(c);
  NodePtr b = enc.encode(shuffled);
  for (std::size_t r = 0; r < perm.size(); ++r) {
    for (std::size_t j = 0; j < 12; ++j) {
      REQUIRE(b->values()[r * 12 + j] == a->values()[perm[r] * 12 + j]);
    }
  }
}

TEST_CASE("zeroed weights yield zero features") {
  ParamSet params;
  Rng rng(10);
  Encoder enc({{3, 4, 4}, 2}, params, rng);
  for (auto& e : params.entries()) {
    for (double& v : e.node->data.values) v = 0.0;
  }
  PointCloud c = ball_cloud(5, rng);
  NodePtr f = enc.encode(c);
  for (double v : f->values()) REQUIRE(v == 0.0);
}

TEST_CASE("encode rejects an unnormalized cloud") {
  ParamSet params;
  Rng rng(11);
  Encoder enc({{3, 4}, 1}, params, rng);
  PointCloud c;
  c.points = {{2.0, 0.0, 0.0}, {0.0, 0.0, 0.0}};
  REQUIRE_THROWS_AS(enc.encode(c), PreconditionError);
}

TEST_CASE("encoder gradients match finite differences") {
  ParamSet params;
  Rng rng(12);
  Encoder enc({{3, 4, 5}, 2}, params, rng);
  PointCloud c = ball_cloud(6, rng);
  NodePtr coords = Encoder::points_node(c);
  Tensor pin = Tensor::zeros({6, 5});
  for (double& v : pin.values) v = rng.uniform(-1.0, 1.0);
  auto loss = [&] { return sum_all(mul(enc.encode_points(coords), constant(pin))); };
  GradCheckResult r = grad_check(loss, params);
  INFO("worst " << r.worst_param << "[" << r.worst_index << "]");
  REQUIRE(r.max_rel_error < 1e-3);
}
