#include <catch_amalgamated.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "pcil/checkpoint.hpp"
#include "pcil/data.hpp"
#include "pcil/model.hpp"
#include "pcil/rng.hpp"

using namespace pcil;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::MessageMatches;

namespace {

std::uint64_t bits_of(double v) {
  std::uint64_t u = 0;
  std::memcpy(&u, &v, sizeof u);
  return u;
}

StatsStore sample_stats() {
  StatsStore stats;
  stats.record_initial(0, 1, 0.71);
  stats.record_initial(1, 1, 1.0 / 3.0);
  stats.record_initial(2, 2, 0.55);
  stats.record_state_mean(1, 0.675);
  stats.record_state_mean(2, 0.55);
  stats.set_current(0, 0.31);
  stats.set_current(1, 0.4);
  return stats;
}

ModelConfig demo_model() {
  ModelConfig mc;
  mc.encoder.widths = {3, 4, 8, 8};
  mc.encoder.tap = 3;
  mc.centroid.structures = 4;
  mc.centroid.neighbors = 3;
  mc.attention_reduction = 2;
  mc.classifier = {8, 8, 8, 8};
  mc.initial_classes = 3;
  return mc;
}

}  // namespace

TEST_CASE("checkpoints restore values and statistics bit for bit") {
  ParamSet src;
  src.create("w", {2, 3}, {std::numbers::pi, 0.1, 1.0 / 3.0, 1e-300, -6.02e23, 42.0});
  src.create("b", {3}, {0.1 + 0.2, -0.0, 5e-324});
  StatsStore stats = sample_stats();

  std::stringstream file;
  save_checkpoint(file, src, stats, 2);

  ParamSet dst;
  dst.create("w", {2, 3}, std::vector<double>(6, 9.0));
  dst.create("b", {3}, std::vector<double>(3, 9.0));
  StatsStore loaded;
  REQUIRE(load_checkpoint(file, dst, loaded) == 2);

  for (const char* name : {"w", "b"}) {
    const auto& a = src.get(name)->data.values;
    const auto& b = dst.get(name)->data.values;
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      REQUIRE(bits_of(a[i]) == bits_of(b[i]));
    }
  }

  REQUIRE(loaded.class_records().size() == 3);
  for (int cls : {0, 1, 2}) {
    REQUIRE(loaded.class_record(cls).initial_state == stats.class_record(cls).initial_state);
    REQUIRE(bits_of(loaded.class_record(cls).psi_init) == bits_of(stats.class_record(cls).psi_init));
  }
  REQUIRE(loaded.psi_new(1) == 0.675);
  REQUIRE(loaded.psi_new(2) == 0.55);
  REQUIRE(loaded.psi_cur(0) == 0.31);
  REQUIRE(loaded.psi_cur(1) == 0.4);
}

TEST_CASE("saving the same state twice yields identical bytes") {
  ParamSet params;
  params.create("w", {4}, {0.25, -1.75, 3e-7, 11.0});
  StatsStore stats = sample_stats();
  std::stringstream a, b;
  save_checkpoint(a, params, stats, 5);
  save_checkpoint(b, params, stats, 5);
  REQUIRE(a.str() == b.str());
  REQUIRE(a.str().rfind("end\n") == a.str().size() - 4);
}

TEST_CASE("a reloaded model reproduces the saved model's outputs") {
  const PointCloud cloud = sample_shape(1, 64, 77);
  ModelConfig mc = demo_model();

  ParamSet trained;
  Rng r1(101);
  Model original(mc, trained, r1);
  StatsStore stats = sample_stats();
  std::stringstream file;
  save_checkpoint(file, trained, stats, 2);

  ParamSet fresh;
  Rng r2(999);
  Model revived(mc, fresh, r2);
  StatsStore ignored;
  load_checkpoint(file, fresh, ignored);

  const auto want = original.forward(cloud).logits->data.values;
  const auto got = revived.forward(cloud).logits->data.values;
  REQUIRE(want == got);
}

TEST_CASE("checkpoint parsing rejects malformed files") {
  ParamSet params;
  params.create("w", {2}, {1.0, 2.0});
  StatsStore stats;

  auto load_text = [&](const std::string& text) {
    std::stringstream in(text);
    ParamSet target;
    target.create("w", {2}, {0.0, 0.0});
    StatsStore fresh;
    return load_checkpoint(in, target, fresh);
  };

  std::stringstream good;
  save_checkpoint(good, params, stats, 1);
  const std::string text = good.str();

  SECTION("wrong magic") {
    REQUIRE_THROWS_MATCHES(load_text("nonsense 1\n"), ParseError,
                           MessageMatches(ContainsSubstring("not a checkpoint file")));
  }
  SECTION("unsupported version") {
    REQUIRE_THROWS_MATCHES(load_text("pcil-checkpoint 7\n"), ParseError,
                           MessageMatches(ContainsSubstring("unsupported checkpoint version")));
  }
  SECTION("missing end marker") {
    REQUIRE_THROWS_MATCHES(load_text(text.substr(0, text.size() - 4)), ParseError,
                           MessageMatches(ContainsSubstring("missing end marker")));
  }
  SECTION("truncated parameter block") {
    const auto cut = text.find("\n", text.find("param w"));
    REQUIRE_THROWS_MATCHES(load_text(text.substr(0, cut + 1)), ParseError,
                           MessageMatches(ContainsSubstring("missing values for 'w'")));
  }
  SECTION("unknown parameter") {
    std::string renamed = text;
    renamed.replace(renamed.find("param w"), 7, "param q");
    REQUIRE_THROWS_MATCHES(load_text(renamed), ParseError,
                           MessageMatches(ContainsSubstring("unknown parameter 'q'")));
  }
  SECTION("shape mismatch") {
    std::string reshaped = text;
    reshaped.replace(reshaped.find("param w 1 2"), 11, "param w 1 3");
    REQUIRE_THROWS_MATCHES(load_text(reshaped), ParseError,
                           MessageMatches(ContainsSubstring("shape mismatch for 'w'")));
  }
  SECTION("wrong value count") {
    REQUIRE_THROWS_MATCHES(load_text("pcil-checkpoint 1\nstate 1\nparams 1\nparam w 1 2\n1 2 3\n"),
                           ParseError,
                           MessageMatches(ContainsSubstring("expected 2 values for 'w', found 3")));
  }
  SECTION("bad number in values") {
    std::string mangled = text;
    mangled.replace(mangled.find("\n1 2\n"), 5, "\n1 x\n");
    REQUIRE_THROWS_MATCHES(load_text(mangled), ParseError,
                           MessageMatches(ContainsSubstring("bad number 'x'")));
  }
}

TEST_CASE("file-based checkpoints report io errors") {
  ParamSet params;
  StatsStore stats;
  REQUIRE_THROWS_AS(load_checkpoint("/nonexistent/dir/x.ckpt", params, stats), IoError);
  REQUIRE_THROWS_AS(save_checkpoint("/nonexistent/dir/x.ckpt", params, stats, 1), IoError);

  auto dir = std::filesystem::temp_directory_path() / "pcil_ckpt_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "a.ckpt").string();
  params.create("w", {1}, {2.5});
  save_checkpoint(path, params, sample_stats(), 3);

  ParamSet target;
  target.create("w", {1}, {0.0});
  StatsStore loaded;
  REQUIRE(load_checkpoint(path, target, loaded) == 3);
  REQUIRE(target.get("w")->data.values == std::vector<double>{2.5});
  std::filesystem::remove_all(dir);
}
