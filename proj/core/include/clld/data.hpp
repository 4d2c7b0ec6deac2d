#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "clld/tensor.hpp"

namespace clld {

enum class Scenario { kNormal, kShadow, kOccluded, kNight, kCrowd };

inline constexpr Scenario kAllScenarios[] = {Scenario::kNormal, Scenario::kShadow, Scenario::kOccluded,
                                             Scenario::kNight, Scenario::kCrowd};

std::string_view scenario_name(Scenario s);
std::optional<Scenario> parse_scenario(std::string_view name);

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

// Ordered lane points in pixel coordinates; pixel (col, row) has its
// centre at (x, y) = (col, row).
using Polyline = std::vector<Point>;

struct LaneScene {
  // [3,H,W] RGB in [0,1], quantized to multiples of 1/255.
  Tensor<float> image;
  std::vector<Polyline> lanes;
  Scenario scenario = Scenario::kNormal;
  std::uint64_t seed = 0;
  std::string name;
};

struct GeneratorConfig {
  std::size_t image_h = 64;
  std::size_t image_w = 64;
  std::size_t lane_count_min = 2;
  std::size_t lane_count_max = 4;
  // Lateral bend at the horizon as a fraction of the image width.
  double curvature_min = -0.25;
  double curvature_max = 0.25;
  double mark_width_px = 2.0;
  std::size_t occluder_count_min = 1;
  std::size_t occluder_count_max = 2;
  std::size_t crowd_occluder_min = 3;
  std::size_t crowd_occluder_max = 6;
  std::size_t shadow_polygon_count = 2;
  double brightness_min = 0.85;
  double brightness_max = 1.15;
  double night_scale_min = 0.3;
  double night_scale_max = 0.5;
  double texture_noise_std = 0.03;
  double dashed_probability = 0.5;

  // Throws ConfigError on degenerate ranges.
  void validate() const;
};

// Pixel bookkeeping from the renderer, used to audit labels.
struct SceneDiagnostics {
  // Per lane, [H*W] flags of painted stroke pixels before occlusion.
  std::vector<std::vector<std::uint8_t>> lane_strokes;
  // [H*W] flags of pixels covered by opaque occluders.
  std::vector<std::uint8_t> occluded;
};

// Deterministic in (seed, scenario, config). Ground-truth polylines are
// recorded before occlusion effects are drawn.
LaneScene generate_scene(std::uint64_t seed, Scenario scenario, const GeneratorConfig& config,
                         SceneDiagnostics* diagnostics = nullptr);

// Union over lanes of all pixels whose centre lies within width_px / 2 of
// some polyline segment. Values are 0 or 1.
Tensor<float> render_lane_mask(const std::vector<Polyline>& lanes, double width_px, std::size_t h, std::size_t w);

// Rec. 601 luma of pixel (row, col).
float luminance(const Tensor<float>& image, std::size_t row, std::size_t col);

// --- CuLane-format annotation I/O -----------------------------------------

struct CulaneLoadResult {
  std::vector<LaneScene> scenes;
  // One message per entry that could not be loaded.
  std::vector<std::string> errors;
  // Lanes dropped for having fewer than two valid points.
  std::size_t dropped_lanes = 0;
};

// Parses one `.lines.txt` body: a lane per line, alternating x y values.
// Returns nullopt when a token is not a number.
std::optional<std::vector<Polyline>> parse_culane_lines(std::string_view text, std::size_t* dropped_lanes);

std::string format_culane_lines(const std::vector<Polyline>& lanes);

// Reads a subset list (one relative image path per line) rooted at `root`.
// Each image x.png / x.jpg needs a sibling x.lines.txt. The scenario is
// taken from the list file name when it names one, else `fallback`.
CulaneLoadResult load_culane_annotation(const std::filesystem::path& list_path, const std::filesystem::path& root,
                                        Scenario fallback = Scenario::kNormal, bool load_images = true);

void write_culane_annotation(const std::vector<Polyline>& lanes, const std::filesystem::path& path);

// PNG / JPEG round-trip of [3,H,W] RGB images in [0,1].
void write_png(const Tensor<float>& image, const std::filesystem::path& path);
Tensor<float> read_image(const std::filesystem::path& path);

// --- generated datasets ---------------------------------------------------

struct DatasetSpec {
  GeneratorConfig generator;
  std::uint64_t seed = 0;
  std::size_t count = 0;
  // Fractions per scenario; whatever floor() leaves over goes to normal.
  std::vector<std::pair<Scenario, double>> proportions{
      {Scenario::kNormal, 0.4}, {Scenario::kShadow, 0.2}, {Scenario::kOccluded, 0.2}, {Scenario::kNight, 0.1},
      {Scenario::kCrowd, 0.1}};
};

// Scene count per scenario in kAllScenarios order.
std::vector<std::size_t> scenario_counts(const DatasetSpec& spec);

// Scenes in scenario order; scene i uses seed derive_seed(spec.seed, i).
std::vector<LaneScene> generate_dataset(const DatasetSpec& spec);

// Writes PNGs, sibling .lines.txt files, per-scenario list files under
// list/, and a `manifest` (JSON) recording the spec and config digest.
void write_dataset(const DatasetSpec& spec, const std::vector<LaneScene>& scenes, const std::filesystem::path& dir);

// Loads a directory written by write_dataset. Throws LoadError on a
// missing manifest or any entry error.
std::vector<LaneScene> load_dataset(const std::filesystem::path& dir);

}  // namespace clld
