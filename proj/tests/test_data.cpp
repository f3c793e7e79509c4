#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pcil/data.hpp"
#include "pcil/rng.hpp"

using namespace pcil;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::MessageMatches;

namespace {

bool same_points(const PointCloud& a, const PointCloud& b) {
  if (a.points.size() != b.points.size()) return false;
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    if (a.points[i] != b.points[i]) return false;
  }
  return true;
}

std::filesystem::path fresh_dir(const char* tag) {
  auto dir = std::filesystem::temp_directory_path() / (std::string("pcil_data_") + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("shape class names are distinct and bounded") {
  std::set<std::string> names;
  for (int cls = 0; cls < static_cast<int>(kShapeClassCount); ++cls) {
    names.insert(shape_class_name(cls));
  }
  REQUIRE(names.size() == kShapeClassCount);
  REQUIRE(std::string(shape_class_name(0)) == "sphere");
  REQUIRE_THROWS_AS(shape_class_name(-1), GenerationError);
  REQUIRE_THROWS_AS(shape_class_name(10), GenerationError);
}

TEST_CASE("sphere samples stay near the unit shell after normalization") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    PointCloud c = sample_shape(0, 96, seed);
    REQUIRE(c.points.size() == 96);
    REQUIRE(c.label == 0);
    REQUIRE(is_normalized(c));
    double sum = 0.0, sum2 = 0.0, lo = 1e9;
    for (const Point& p : c.points) {
      const double r = norm(p);
      sum += r;
      sum2 += r * r;
      lo = std::min(lo, r);
    }
    const double mean = sum / 96.0;
    REQUIRE(lo >= 0.7);
    REQUIRE(std::sqrt(std::max(0.0, sum2 / 96.0 - mean * mean)) < 0.1);
  }
}

TEST_CASE("every class generates valid labeled clouds") {
  for (int cls = 0; cls < static_cast<int>(kShapeClassCount); ++cls) {
    PointCloud c = sample_shape(cls, 64, 7);
    REQUIRE(c.points.size() == 64);
    REQUIRE(c.label == cls);
    REQUIRE(is_normalized(c));
  }
}

TEST_CASE("sampling is deterministic in the seed") {
  PointCloud a = sample_shape(3, 64, 42);
  PointCloud b = sample_shape(3, 64, 42);
  PointCloud c = sample_shape(3, 64, 43);
  REQUIRE(same_points(a, b));
  REQUIRE_FALSE(same_points(a, c));
}

TEST_CASE("sampling validates its inputs") {
  REQUIRE_THROWS_AS(sample_shape(0, 0, 1), GenerationError);
  REQUIRE_THROWS_AS(sample_shape(0, 64, 1, -0.1), GenerationError);
  REQUIRE_THROWS_AS(sample_shape(0, 64, 1, 0.6), GenerationError);
  REQUIRE_THROWS_AS(sample_shape(11, 64, 1), GenerationError);
}

TEST_CASE("clutter replaces points but keeps the cloud valid") {
  PointCloud clean = sample_shape(4, 100, 9, 0.0);
  PointCloud dirty = sample_shape(4, 100, 9, 0.2);
  REQUIRE(dirty.points.size() == 100);
  REQUIRE(is_normalized(dirty));
  REQUIRE_FALSE(same_points(clean, dirty));
}

TEST_CASE("generated splits are deterministic and seed-sensitive") {
  DatasetSplit a = generate(3, 2, 1, 64, 11);
  DatasetSplit b = generate(3, 2, 1, 64, 11);
  DatasetSplit c = generate(3, 2, 1, 64, 12);
  REQUIRE(a.num_classes() == 3);
  REQUIRE(a.points_per_cloud == 64);
  for (std::size_t cls = 0; cls < 3; ++cls) {
    REQUIRE(a.train[cls].size() == 2);
    REQUIRE(a.test[cls].size() == 1);
    for (std::size_t i = 0; i < 2; ++i) {
      REQUIRE(same_points(a.train[cls][i], b.train[cls][i]));
    }
    REQUIRE(same_points(a.test[cls][0], b.test[cls][0]));
    REQUIRE_FALSE(same_points(a.test[cls][0], c.test[cls][0]));
  }
}

TEST_CASE("train and test pools never share a cloud") {
  DatasetSplit split = generate(4, 3, 2, 64, 13);
  for (std::size_t cls = 0; cls < 4; ++cls) {
    for (const auto& tr : split.train[cls]) {
      for (const auto& te : split.test[cls]) {
        REQUIRE_FALSE(same_points(tr, te));
      }
    }
  }
}

TEST_CASE("generate validates its inputs") {
  REQUIRE_THROWS_AS(generate(0, 1, 1, 64, 1), GenerationError);
  REQUIRE_THROWS_AS(generate(11, 1, 1, 64, 1), GenerationError);
  REQUIRE_THROWS_AS(generate(2, 0, 1, 64, 1), GenerationError);
  REQUIRE_THROWS_AS(generate(2, 1, 0, 64, 1), GenerationError);
  REQUIRE_THROWS_AS(generate(2, 1, 1, 63, 1), GenerationError);
}

TEST_CASE("a nearest-centroid reference separates the classes") {
  DatasetSplit split = generate(kShapeClassCount, 15, 10, 96, 600);
  StatsOracle oracle = StatsOracle::fit(split);
  REQUIRE(oracle.test_accuracy(split) >= 0.9);
}

TEST_CASE("rotation about the vertical axis preserves distances") {
  Rng rng(14);
  PointCloud c;
  c.label = 5;
  for (int i = 0; i < 12; ++i) {
    c.points.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
  }
  PointCloud r = rotate_z(c, 1.234);
  REQUIRE(r.label == 5);
  for (std::size_t i = 0; i < c.size(); ++i) {
    REQUIRE_THAT(norm(r.points[i]), Catch::Matchers::WithinAbs(norm(c.points[i]), 1e-9));
    REQUIRE(r.points[i][2] == c.points[i][2]);
    for (std::size_t j = i + 1; j < c.size(); ++j) {
      REQUIRE_THAT(squared_dist(r.points[i], r.points[j]),
                   Catch::Matchers::WithinAbs(squared_dist(c.points[i], c.points[j]), 1e-9));
    }
  }
  PointCloud id = rotate_z(c, 0.0);
  REQUIRE(same_points(id, c));
}

TEST_CASE("jitter respects sigma zero and the clip bound") {
  PointCloud c = sample_shape(1, 64, 21);
  Rng j1(1);
  PointCloud still = jitter_points(c, 0.0, 0.05, j1);
  REQUIRE(same_points(still, c));

  Rng j2(2);
  PointCloud moved = jitter_points(c, 1.0, 0.05, j2);
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (int a = 0; a < 3; ++a) {
      REQUIRE(std::abs(moved.points[i][a] - c.points[i][a]) <= 0.05);
    }
  }
}

TEST_CASE("augmentation keeps the label, size, and normalization") {
  PointCloud c = sample_shape(6, 80, 31);
  PointCloud a1 = augment(c, 99);
  PointCloud a2 = augment(c, 99);
  PointCloud a3 = augment(c, 100);
  REQUIRE(a1.label == c.label);
  REQUIRE(a1.points.size() == c.points.size());
  REQUIRE(is_normalized(a1));
  REQUIRE(same_points(a1, a2));
  REQUIRE_FALSE(same_points(a1, a3));

  PointCloud big;
  big.points = {{3, 0, 0}, {0, 0, 0}};
  REQUIRE_THROWS_AS(augment(big, 1), PreconditionError);
}

TEST_CASE("the reference classifier barely notices augmentation") {
  DatasetSplit split = generate(kShapeClassCount, 15, 10, 96, 601);
  StatsOracle oracle = StatsOracle::fit(split);
  const double clean = oracle.test_accuracy(split);

  DatasetSplit augmented = split;
  std::uint64_t salt = 0;
  for (auto& cls : augmented.test) {
    for (auto& cloud : cls) cloud = augment(cloud, derive_seed(602, salt++));
  }
  const double noisy = oracle.test_accuracy(augmented);
  REQUIRE(clean - noisy < 0.05);
}

TEST_CASE("class schedules partition the classes") {
  DatasetSplit split = generate(6, 1, 1, 64, 17);

  SECTION("single state") {
    auto states = incremental_split(split, {6});
    REQUIRE(states.size() == 1);
    std::set<int> seen(states[0].begin(), states[0].end());
    REQUIRE(seen == std::set<int>{0, 1, 2, 3, 4, 5});
  }
  SECTION("three pairs") {
    auto states = incremental_split(split, {2, 2, 2});
    REQUIRE(states.size() == 3);
    std::set<int> seen;
    for (const auto& st : states) {
      REQUIRE(st.size() == 2);
      for (int cls : st) REQUIRE(seen.insert(cls).second);
    }
    REQUIRE(seen.size() == 6);
  }
  SECTION("deterministic for a fixed dataset seed") {
    REQUIRE(incremental_split(split, {2, 2, 2}) == incremental_split(split, {2, 2, 2}));
  }
  SECTION("invalid schedules") {
    REQUIRE_THROWS_AS(incremental_split(split, {}), ScheduleError);
    REQUIRE_THROWS_AS(incremental_split(split, {3, 0, 3}), ScheduleError);
    REQUIRE_THROWS_AS(incremental_split(split, {2, 2}), ScheduleError);
    REQUIRE_THROWS_AS(incremental_split(split, {4, 4}), ScheduleError);
  }
}

TEST_CASE("cloud files round trip bit for bit") {
  PointCloud c = sample_shape(2, 64, 51);
  c.label = 2;
  std::stringstream ss;
  save_cloud(ss, c);
  PointCloud back = load_cloud(ss);
  REQUIRE(back.label == 2);
  REQUIRE(same_points(back, c));

  auto dir = fresh_dir("roundtrip");
  const std::string path = (dir / "cloud.pcd").string();
  save_cloud(path, c);
  PointCloud from_file = load_cloud(path);
  REQUIRE(same_points(from_file, c));
  std::filesystem::remove_all(dir);
}

TEST_CASE("cloud parsing reports malformed input with line numbers") {
  auto parse = [](const std::string& text) {
    std::stringstream ss(text);
    return load_cloud(ss);
  };
  REQUIRE_THROWS_MATCHES(parse(""), ParseError, MessageMatches(ContainsSubstring("line 1")));
  REQUIRE_THROWS_MATCHES(parse("pcx 1 0\n0 0 0\n"), ParseError,
                         MessageMatches(ContainsSubstring("expected header")));
  REQUIRE_THROWS_MATCHES(parse("pcd 1\n0 0 0\n"), ParseError,
                         MessageMatches(ContainsSubstring("expected header")));
  REQUIRE_THROWS_MATCHES(parse("pcd 0 0\n"), ParseError,
                         MessageMatches(ContainsSubstring("positive")));
  REQUIRE_THROWS_MATCHES(parse("pcd two 0\n"), ParseError,
                         MessageMatches(ContainsSubstring("bad integer")));
  REQUIRE_THROWS_MATCHES(parse("pcd 5 0\n0 0 0\n1 1 1\n2 2 2\n"), ParseError,
                         MessageMatches(ContainsSubstring("expected point 4 of 5")));
  REQUIRE_THROWS_MATCHES(parse("pcd 1 0\n0.1 0.2\n"), ParseError,
                         MessageMatches(ContainsSubstring("three coordinates")));
  REQUIRE_THROWS_MATCHES(parse("pcd 1 0\n0.1 0.2 abc\n"), ParseError,
                         MessageMatches(ContainsSubstring("bad number")));
  REQUIRE_THROWS_MATCHES(parse("pcd 1 0\n0 0 0\n1 1 1\n"), ParseError,
                         MessageMatches(ContainsSubstring("trailing content")));
}

TEST_CASE("datasets round trip through a manifest directory") {
  DatasetSplit split = generate(2, 2, 1, 64, 53);
  auto dir = fresh_dir("manifest");
  save_dataset(dir.string(), split);
  REQUIRE(std::filesystem::exists(dir / "manifest.txt"));
  REQUIRE(std::filesystem::exists(dir / "sphere_train_0.pcd"));
  REQUIRE(std::filesystem::exists(dir / "box_test_0.pcd"));

  DatasetSplit back = load_dataset((dir / "manifest.txt").string());
  REQUIRE(back.num_classes() == 2);
  REQUIRE(back.points_per_cloud == 64);
  REQUIRE(back.seed == 53);
  for (std::size_t cls = 0; cls < 2; ++cls) {
    REQUIRE(back.train[cls].size() == 2);
    REQUIRE(back.test[cls].size() == 1);
    for (std::size_t i = 0; i < 2; ++i) {
      REQUIRE(same_points(back.train[cls][i], split.train[cls][i]));
    }
    REQUIRE(same_points(back.test[cls][0], split.test[cls][0]));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("manifest loading validates structure and contents") {
  REQUIRE_THROWS_AS(load_dataset("/nonexistent/manifest.txt"), IoError);

  auto dir = fresh_dir("badmanifest");
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream out(dir / name);
    out << text;
  };

  write("wrong_magic.txt", "manifest 1\n");
  REQUIRE_THROWS_MATCHES(load_dataset((dir / "wrong_magic.txt").string()), ParseError,
                         MessageMatches(ContainsSubstring("not a dataset manifest")));

  write("bad_row.txt", "pcd-manifest 1\nclasses 1\npoints 64\nseed 1\n0 train\n");
  REQUIRE_THROWS_MATCHES(load_dataset((dir / "bad_row.txt").string()), ParseError,
                         MessageMatches(ContainsSubstring("line 5")));

  write("bad_class.txt", "pcd-manifest 1\nclasses 1\npoints 64\nseed 1\n3 train x.pcd\n");
  REQUIRE_THROWS_MATCHES(load_dataset((dir / "bad_class.txt").string()), ParseError,
                         MessageMatches(ContainsSubstring("class id out of range")));

  write("cloud.pcd", "pcd 1 0\n0 0 1\n");
  write("bad_split.txt", "pcd-manifest 1\nclasses 1\npoints 1\nseed 1\n0 dev cloud.pcd\n");
  REQUIRE_THROWS_MATCHES(load_dataset((dir / "bad_split.txt").string()), ParseError,
                         MessageMatches(ContainsSubstring("'train' or 'test'")));

  write("bad_count.txt", "pcd-manifest 1\nclasses 1\npoints 64\nseed 1\n0 train cloud.pcd\n");
  REQUIRE_THROWS_MATCHES(load_dataset((dir / "bad_count.txt").string()), ParseError,
                         MessageMatches(ContainsSubstring("manifest declares")));

  write("missing_test.txt", "pcd-manifest 1\nclasses 1\npoints 1\nseed 1\n0 train cloud.pcd\n");
  REQUIRE_THROWS_MATCHES(load_dataset((dir / "missing_test.txt").string()), ParseError,
                         MessageMatches(ContainsSubstring("missing train or test")));
  std::filesystem::remove_all(dir);
}

TEST_CASE("per-cloud statistics are finite and order-insensitive") {
  PointCloud c = sample_shape(4, 96, 71);
  auto s1 = cloud_statistics(c);
  for (double v : s1) REQUIRE(std::isfinite(v));

  PointCloud reversed = c;
  std::reverse(reversed.points.begin(), reversed.points.end());
  auto s2 = cloud_statistics(reversed);
  for (std::size_t d = 0; d < kCloudStatCount; ++d) {
    REQUIRE_THAT(s2[d], Catch::Matchers::WithinAbs(s1[d], 1e-9));
  }
  REQUIRE_THROWS_AS(cloud_statistics(PointCloud{}), GenerationError);
}
