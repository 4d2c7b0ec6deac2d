#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "clld/data.hpp"
#include "helpers.hpp"

using namespace clld;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

double mask_sum(const Tensor<float>& m) {
  double s = 0;
  for (float v : m.storage()) s += v;
  return s;
}

}  // namespace

TEST_CASE("scenes are reproducible from seed and scenario") {
  GeneratorConfig c;
  for (auto s : kAllScenarios) {
    const auto a = generate_scene(17, s, c), b = generate_scene(17, s, c);
    CHECK(test::bit_equal(a.image, b.image));
    CHECK(a.lanes == b.lanes);
  }
  CHECK(!test::bit_equal(generate_scene(17, Scenario::kNormal, c).image, generate_scene(18, Scenario::kNormal, c).image));
}

TEST_CASE("scene invariants") {
  GeneratorConfig c;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto scene = generate_scene(seed, kAllScenarios[seed % 5], c);
    CHECK(scene.image.shape() == Shape{3, 64, 64});
    CHECK(scene.lanes.size() >= 1);
    CHECK(scene.lanes.size() <= 4);
    double prev = -1e9;
    for (const auto& lane : scene.lanes) {
      CHECK(lane.size() >= 2);
      for (const auto& p : lane) {
        CHECK(p.x >= 0.0);
        CHECK(p.x <= 63.0);
        CHECK(p.y >= 0.0);
        CHECK(p.y <= 63.0);
      }
      CHECK(lane.front().x > prev);
      prev = lane.front().x;
    }
  }
}

TEST_CASE("occluded scenes hide at least a tenth of one lane") {
  GeneratorConfig c;
  std::size_t ok = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SceneDiagnostics d;
    generate_scene(seed, Scenario::kOccluded, c, &d);
    bool hit = false;
    for (const auto& stroke : d.lane_strokes) {
      std::size_t total = 0, covered = 0;
      for (std::size_t i = 0; i < stroke.size(); ++i) {
        total += stroke[i];
        covered += stroke[i] && d.occluded[i];
      }
      if (total && static_cast<double>(covered) >= 0.1 * static_cast<double>(total)) hit = true;
    }
    ok += hit;
  }
  CHECK(ok == 100);
}

TEST_CASE("normal strokes are brighter than the background") {
  GeneratorConfig c;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SceneDiagnostics d;
    const auto scene = generate_scene(seed, Scenario::kNormal, c, &d);
    double stroke = 0, background = 0;
    std::size_t ns = 0, nb = 0;
    for (std::size_t idx = 0; idx < 64 * 64; ++idx) {
      bool on = false;
      for (const auto& s : d.lane_strokes) on = on || s[idx];
      const double l = luminance(scene.image, idx / 64, idx % 64);
      (on ? stroke : background) += l;
      (on ? ns : nb) += 1;
    }
    REQUIRE(ns > 0);
    CHECK(stroke / static_cast<double>(ns) > background / static_cast<double>(nb));
  }
}

TEST_CASE("labels match pixels in unoccluded scenarios") {
  GeneratorConfig c;
  std::size_t bright = 0, total = 0;
  for (Scenario s : {Scenario::kNormal, Scenario::kShadow, Scenario::kNight}) {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      SceneDiagnostics d;
      const auto scene = generate_scene(seed, s, c, &d);
      std::vector<std::uint8_t> any(64 * 64, 0);
      for (const auto& st : d.lane_strokes)
        for (std::size_t i = 0; i < any.size(); ++i) any[i] |= st[i];
      for (std::size_t idx = 0; idx < any.size(); ++idx) {
        if (!any[idx]) continue;
        const long r = static_cast<long>(idx / 64), col = static_cast<long>(idx % 64);
        double bg = 0;
        std::size_t n = 0;
        for (long dr = -3; dr <= 3; ++dr) {
          for (long dc = -3; dc <= 3; ++dc) {
            const long rr = r + dr, cc = col + dc;
            if (rr < 0 || cc < 0 || rr >= 64 || cc >= 64 || any[rr * 64 + cc]) continue;
            bg += luminance(scene.image, rr, cc);
            ++n;
          }
        }
        if (n == 0) continue;
        ++total;
        bright += luminance(scene.image, r, col) > bg / static_cast<double>(n) + 0.02;
      }
    }
  }
  REQUIRE(total > 0);
  CHECK(static_cast<double>(bright) >= 0.95 * static_cast<double>(total));
}

TEST_CASE("annotation parsing") {
  std::size_t dropped = 0;
  auto one = parse_culane_lines("10 590 20 580 30 570", &dropped);
  REQUIRE(one);
  REQUIRE(one->size() == 1);
  CHECK((*one)[0] == Polyline{{10, 590}, {20, 580}, {30, 570}});
  CHECK(parse_culane_lines("", &dropped)->empty());
  CHECK(dropped == 0);
  CHECK(parse_culane_lines("10", &dropped)->empty());
  CHECK(dropped == 1);
  CHECK(!parse_culane_lines("10 5x0 20 580", &dropped));
  CHECK(format_culane_lines(*one) == "10 590 20 580 30 570\n");
  auto fractional = parse_culane_lines("1.25 2.5 3 4\n", nullptr);
  CHECK(format_culane_lines(*fractional) == "1.25 2.5 3 4\n");
}

TEST_CASE("list ingestion collects per-entry errors") {
  const auto root = fresh_dir("clld_unit_culane");
  write_file(root / "a" / "1.lines.txt", "10 50 12 40 14 30\n\n5 50 6 45\n7\n");
  write_file(root / "a" / "2.lines.txt", "");
  write_file(root / "a" / "4.lines.txt", "1 2 x 4\n");
  write_file(root / "list" / "test_shadow.txt", "/a/1.jpg\na/2.jpg\na/3.jpg\na/4.jpg\n");
  const auto r = load_culane_annotation(root / "list" / "test_shadow.txt", root, Scenario::kNormal, false);
  REQUIRE(r.scenes.size() == 2);
  CHECK(r.scenes[0].lanes.size() == 2);
  CHECK(r.scenes[0].scenario == Scenario::kShadow);
  CHECK(r.scenes[1].lanes.empty());
  CHECK(r.dropped_lanes == 1);
  REQUIRE(r.errors.size() == 2);
  CHECK(r.errors[0].find("a/3.jpg") != std::string::npos);
  CHECK(r.errors[1].find("a/4.jpg") != std::string::npos);
  CHECK_THROWS_AS(load_culane_annotation(root / "list" / "none.txt", root), LoadError);
  fs::remove_all(root);
}

TEST_CASE("dataset round trip through disk") {
  const auto dir = fresh_dir("clld_unit_dataset");
  DatasetSpec spec;
  spec.count = 12;
  spec.seed = 3;
  const auto scenes = generate_dataset(spec);
  write_dataset(spec, scenes, dir);
  const auto loaded = load_dataset(dir);
  REQUIRE(loaded.size() == scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    CHECK(loaded[i].scenario == scenes[i].scenario);
    CHECK(loaded[i].seed == scenes[i].seed);
    CHECK(format_culane_lines(loaded[i].lanes) == format_culane_lines(scenes[i].lanes));
    // 8-bit PNG quantization is exact because the generator already quantizes.
    CHECK(test::bit_equal(loaded[i].image, scenes[i].image));
  }
  fs::remove_all(dir);
  CHECK_THROWS_AS(load_dataset(dir), LoadError);
}

TEST_CASE("scenario counts assign the remainder to normal") {
  DatasetSpec spec;
  spec.count = 100;
  spec.proportions = {{Scenario::kNormal, 0.5}, {Scenario::kShadow, 0.2}, {Scenario::kOccluded, 0.2}, {Scenario::kNight, 0.1}};
  CHECK(scenario_counts(spec) == std::vector<std::size_t>{50, 20, 20, 10, 0});
  spec.count = 7;
  spec.proportions = {{Scenario::kShadow, 0.3}};
  CHECK(scenario_counts(spec) == std::vector<std::size_t>{5, 2, 0, 0, 0});
  spec.proportions = {{Scenario::kShadow, 0.8}, {Scenario::kNight, 0.5}};
  CHECK_THROWS_AS(scenario_counts(spec), ConfigError);
  spec.count = 0;
  spec.proportions = DatasetSpec{}.proportions;
  CHECK(generate_dataset(spec).empty());
}

TEST_CASE("lane mask rasterization") {
  CHECK(mask_sum(render_lane_mask({}, 3, 10, 10)) == 0.0f);
  const Polyline lane{{2.0, 4.3}, {7.0, 4.3}};
  const auto mask = render_lane_mask({lane}, 3, 10, 10);
  std::size_t expected = 0;
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 10; ++x) {
      const double cx = std::clamp(static_cast<double>(x), 2.0, 7.0);
      const double d = std::hypot(x - cx, y - 4.3);
      const bool in = d <= 1.5;
      expected += in;
      CHECK(mask[static_cast<std::size_t>(y * 10 + x)] == (in ? 1.0f : 0.0f));
    }
  }
  CHECK(static_cast<std::size_t>(mask_sum(mask)) == expected);
  CHECK_THROWS_AS(render_lane_mask({lane}, 0.5, 10, 10), ConfigError);

  GeneratorConfig c;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto scene = generate_scene(seed, Scenario::kNormal, c);
    double prev = 0;
    for (double w : {1.0, 2.0, 4.0, 8.0}) {
      const double n = mask_sum(render_lane_mask(scene.lanes, w, 64, 64));
      CHECK(n >= prev);
      prev = n;
    }
  }
}
