#include "clld/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "clld/rng.hpp"

namespace clld {

std::string_view scenario_name(Scenario s) {
  switch (s) {
    case Scenario::kNormal: return "normal";
    case Scenario::kShadow: return "shadow";
    case Scenario::kOccluded: return "occluded";
    case Scenario::kNight: return "night";
    case Scenario::kCrowd: return "crowd";
  }
  return "normal";
}

std::optional<Scenario> parse_scenario(std::string_view name) {
  for (auto s : kAllScenarios) {
    if (scenario_name(s) == name) return s;
  }
  return std::nullopt;
}

void GeneratorConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("generator config: " + what); };
  if (image_h < 16 || image_w < 16) fail("image must be at least 16x16");
  if (lane_count_min < 1 || lane_count_min > lane_count_max) fail("lane count range is empty");
  if (curvature_min > curvature_max) fail("curvature range is empty");
  if (mark_width_px < 1.0) fail("mark_width_px must be >= 1");
  if (occluder_count_min < 1 || occluder_count_min > occluder_count_max) fail("occluder count range is empty");
  if (crowd_occluder_min > crowd_occluder_max) fail("crowd occluder range is empty");
  if (brightness_min > brightness_max || brightness_min <= 0.0) fail("brightness range is invalid");
  if (night_scale_min > night_scale_max || night_scale_min <= 0.0) fail("night scale range is invalid");
  if (texture_noise_std < 0.0) fail("texture_noise_std must be >= 0");
  if (dashed_probability < 0.0 || dashed_probability > 1.0) fail("dashed_probability must lie in [0,1]");
}

float luminance(const Tensor<float>& image, std::size_t row, std::size_t col) {
  return 0.299f * image.at(0, row, col) + 0.587f * image.at(1, row, col) + 0.114f * image.at(2, row, col);
}

namespace {

double segment_distance(const Point& p, const Point& a, const Point& b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0);
  const double ex = p.x - (a.x + t * dx), ey = p.y - (a.y + t * dy);
  return std::sqrt(ex * ex + ey * ey);
}

// Calls fn(index) for every pixel within radius of the polyline.
template <typename Fn>
void for_each_near(const Polyline& line, double radius, std::size_t h, std::size_t w, Fn fn) {
  if (line.empty()) return;
  std::vector<std::uint8_t> seen(h * w, 0);
  auto visit_segment = [&](const Point& a, const Point& b) {
    const long x0 = std::max(0L, static_cast<long>(std::floor(std::min(a.x, b.x) - radius)));
    const long x1 = std::min(static_cast<long>(w) - 1, static_cast<long>(std::ceil(std::max(a.x, b.x) + radius)));
    const long y0 = std::max(0L, static_cast<long>(std::floor(std::min(a.y, b.y) - radius)));
    const long y1 = std::min(static_cast<long>(h) - 1, static_cast<long>(std::ceil(std::max(a.y, b.y) + radius)));
    for (long y = y0; y <= y1; ++y) {
      for (long x = x0; x <= x1; ++x) {
        const std::size_t idx = static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x);
        if (seen[idx]) continue;
        if (segment_distance({static_cast<double>(x), static_cast<double>(y)}, a, b) <= radius) {
          seen[idx] = 1;
          fn(idx);
        }
      }
    }
  };
  if (line.size() == 1) {
    visit_segment(line[0], line[0]);
    return;
  }
  for (std::size_t i = 0; i + 1 < line.size(); ++i) visit_segment(line[i], line[i + 1]);
}

struct Rgb {
  double r, g, b;
};

class Canvas {
 public:
  Canvas(std::size_t h, std::size_t w) : h_(h), w_(w), px_(3 * h * w, 0.0) {}
  void set(std::size_t idx, const Rgb& c) {
    px_[idx] = c.r;
    px_[h_ * w_ + idx] = c.g;
    px_[2 * h_ * w_ + idx] = c.b;
  }
  void scale(std::size_t idx, double f) {
    for (std::size_t c = 0; c < 3; ++c) px_[c * h_ * w_ + idx] *= f;
  }
  void add_noise(Rng& rng, double stddev) {
    if (stddev <= 0.0) return;
    for (auto& v : px_) v += stddev * rng.normal();
  }
  void scale_all(double f) {
    for (auto& v : px_) v *= f;
  }
  Tensor<float> quantized() const {
    Tensor<float> out(Shape{3, h_, w_});
    for (std::size_t i = 0; i < px_.size(); ++i) {
      const double q = std::clamp(std::round(px_[i] * 255.0), 0.0, 255.0);
      out[i] = static_cast<float>(q / 255.0);
    }
    return out;
  }

 private:
  std::size_t h_, w_;
  std::vector<double> px_;
};

struct RoadGeometry {
  double horizon = 0;
  double vanish_x = 0;
  double bend = 0;
  std::size_t h = 0;

  double t_at(double y) const { return (static_cast<double>(h) - 1.0 - y) / (static_cast<double>(h) - 1.0 - horizon); }
  double x_at(double bottom_x, double y) const {
    const double t = t_at(y);
    return bottom_x + (vanish_x - bottom_x) * t + bend * t * t;
  }
};

bool inside_quad(const std::array<Point, 4>& q, double x, double y) {
  bool in = false;
  for (std::size_t i = 0, j = 3; i < 4; j = i++) {
    if ((q[i].y > y) != (q[j].y > y)) {
      const double xc = q[j].x + (y - q[j].y) * (q[i].x - q[j].x) / (q[i].y - q[j].y);
      if (x < xc) in = !in;
    }
  }
  return in;
}

struct Rect {
  long x0, y0, x1, y1;  // inclusive
};

}  // namespace

Tensor<float> render_lane_mask(const std::vector<Polyline>& lanes, double width_px, std::size_t h, std::size_t w) {
  if (width_px < 1.0) throw ConfigError("render_lane_mask: width must be >= 1 pixel");
  Tensor<float> mask(Shape{h, w});
  for (const auto& lane : lanes) {
    for_each_near(lane, width_px / 2.0, h, w, [&](std::size_t idx) { mask[idx] = 1.0f; });
  }
  return mask;
}

LaneScene generate_scene(std::uint64_t seed, Scenario scenario, const GeneratorConfig& config,
                         SceneDiagnostics* diagnostics) {
  config.validate();
  const std::size_t H = config.image_h, W = config.image_w;
  const double Hd = static_cast<double>(H), Wd = static_cast<double>(W);
  Rng rng(derive_seed(seed, 0xC11D, static_cast<std::uint64_t>(scenario)));

  RoadGeometry road;
  road.h = H;
  road.horizon = Hd * rng.uniform(0.30, 0.40);
  road.vanish_x = Wd * rng.uniform(0.42, 0.58);
  road.bend = Wd * rng.uniform(config.curvature_min, config.curvature_max);
  const double top_t = rng.uniform(0.62, 0.75);
  const double top_y = (Hd - 1.0) - top_t * (Hd - 1.0 - road.horizon);

  const int n_lanes = rng.range(static_cast<int>(config.lane_count_min), static_cast<int>(config.lane_count_max));
  const double spacing = Wd * rng.uniform(0.30, 0.42);
  const double centre = Wd / 2.0 + Wd * rng.uniform(-0.10, 0.10);
  std::vector<double> bottoms;
  for (int i = 0; i < n_lanes; ++i) bottoms.push_back(centre + (i - (n_lanes - 1) / 2.0) * spacing);

  // Ground-truth polylines, sampled every 4 rows from the bottom row up.
  std::vector<Polyline> lanes;
  std::vector<double> lane_bottoms;
  for (double xb : bottoms) {
    Polyline full;
    for (double y = Hd - 1.0; y > top_y; y -= 4.0) full.push_back({road.x_at(xb, y), y});
    full.push_back({road.x_at(xb, top_y), top_y});
    Polyline run, best;
    for (const auto& p : full) {
      if (p.x >= 0.0 && p.x <= Wd - 1.0) {
        run.push_back(p);
      } else {
        if (run.size() > best.size()) best = run;
        run.clear();
      }
    }
    if (run.size() > best.size()) best = run;
    if (best.size() >= 2) {
      lanes.push_back(std::move(best));
      lane_bottoms.push_back(xb);
    }
  }

  Canvas canvas(H, W);
  const double road_grey = rng.uniform(0.28, 0.40);
  const Rgb sky{0.55, 0.68, 0.85}, grass{0.28, 0.42, 0.22}, tarmac{road_grey, road_grey, road_grey + 0.01};
  const double edge = (n_lanes / 2.0 + 0.35) * spacing;
  for (std::size_t y = 0; y < H; ++y) {
    const double yd = static_cast<double>(y);
    for (std::size_t x = 0; x < W; ++x) {
      const std::size_t idx = y * W + x;
      if (yd < road.horizon) {
        const double k = 0.15 * yd / road.horizon;
        canvas.set(idx, {sky.r - k, sky.g - k, sky.b - k});
        continue;
      }
      const double left = road.x_at(centre - edge, yd), right = road.x_at(centre + edge, yd);
      const double xd = static_cast<double>(x);
      canvas.set(idx, (xd >= left && xd <= right) ? tarmac : grass);
    }
  }

  // Lane strokes, solid or dashed in road-parameter space.
  const Rgb white{0.92, 0.92, 0.90}, yellow{0.90, 0.78, 0.25};
  const bool yellow_left = rng.uniform() < 0.3;
  std::vector<std::vector<std::uint8_t>> strokes(lanes.size(), std::vector<std::uint8_t>(H * W, 0));
  for (std::size_t li = 0; li < lanes.size(); ++li) {
    const bool dashed = rng.uniform() < config.dashed_probability;
    const double dash_count = rng.uniform(4.0, 6.0);
    const double phase = rng.uniform();
    const Rgb colour = (li == 0 && yellow_left) ? yellow : white;
    for_each_near(lanes[li], config.mark_width_px / 2.0, H, W, [&](std::size_t idx) {
      const double yd = static_cast<double>(idx / W);
      if (dashed) {
        const double u = road.t_at(yd) * dash_count + phase;
        if (u - std::floor(u) >= 0.55) return;
      }
      strokes[li][idx] = 1;
      canvas.set(idx, colour);
    });
  }

  canvas.add_noise(rng, config.texture_noise_std);

  std::vector<std::uint8_t> occluded(H * W, 0);
  auto paint_rect = [&](const Rect& r, const Rgb& colour) {
    for (long y = std::max(0L, r.y0); y <= std::min(static_cast<long>(H) - 1, r.y1); ++y) {
      for (long x = std::max(0L, r.x0); x <= std::min(static_cast<long>(W) - 1, r.x1); ++x) {
        const std::size_t idx = static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x);
        canvas.set(idx, colour);
        occluded[idx] = 1;
      }
    }
  };
  auto vehicle_colour = [&]() { return Rgb{rng.uniform(0.05, 0.75), rng.uniform(0.05, 0.75), rng.uniform(0.05, 0.75)}; };
  auto random_vehicle = [&]() {
    const long rw = rng.range(6, 14), rh = rng.range(4, 10);
    const long y = rng.range(static_cast<int>(road.horizon) + 2, static_cast<int>(H) - 1);
    const double half = edge * (1.0 - road.t_at(static_cast<double>(y)));
    const double cx = road.x_at(centre, static_cast<double>(y)) + rng.uniform(-half, half);
    const long x = static_cast<long>(std::lround(cx));
    return Rect{x - rw / 2, y - rh / 2, x - rw / 2 + rw - 1, y - rh / 2 + rh - 1};
  };
  auto stroke_coverage = [&](std::size_t li, const Rect& r) {
    std::size_t total = 0, covered = 0;
    for (std::size_t idx = 0; idx < H * W; ++idx) {
      if (!strokes[li][idx]) continue;
      ++total;
      const long y = static_cast<long>(idx / W), x = static_cast<long>(idx % W);
      if (x >= r.x0 && x <= r.x1 && y >= r.y0 && y <= r.y1) ++covered;
    }
    return total ? static_cast<double>(covered) / static_cast<double>(total) : 0.0;
  };

  switch (scenario) {
    case Scenario::kShadow: {
      for (std::size_t s = 0; s < config.shadow_polygon_count && !lanes.empty(); ++s) {
        const auto& lane = lanes[rng.below(lanes.size())];
        const double y0 = rng.uniform(lane.back().y, lane.front().y);
        const double x0 = road.x_at(lane_bottoms[&lane - lanes.data()], y0);
        const double hw = rng.uniform(6.0, 14.0), hh = rng.uniform(4.0, 8.0);
        std::array<Point, 4> quad{Point{x0 - hw + rng.uniform(-2, 2), y0 - hh + rng.uniform(-2, 2)},
                                  Point{x0 + hw + rng.uniform(-2, 2), y0 - hh + rng.uniform(-2, 2)},
                                  Point{x0 + hw + rng.uniform(-2, 2), y0 + hh + rng.uniform(-2, 2)},
                                  Point{x0 - hw + rng.uniform(-2, 2), y0 + hh + rng.uniform(-2, 2)}};
        const double darkness = rng.uniform(0.45, 0.65);
        for (std::size_t idx = 0; idx < H * W; ++idx) {
          if (inside_quad(quad, static_cast<double>(idx % W), static_cast<double>(idx / W))) canvas.scale(idx, darkness);
        }
      }
      break;
    }
    case Scenario::kOccluded: {
      const std::size_t count = static_cast<std::size_t>(
          rng.range(static_cast<int>(config.occluder_count_min), static_cast<int>(config.occluder_count_max)));
      // The first occluder is grown over one lane until it hides a target
      // share (10-40%) of that lane's stroke pixels.
      std::vector<std::size_t> candidates;
      for (std::size_t li = 0; li < lanes.size(); ++li) {
        if (std::count(strokes[li].begin(), strokes[li].end(), 1) >= 10) candidates.push_back(li);
      }
      if (!candidates.empty()) {
        const std::size_t li = candidates[rng.below(candidates.size())];
        const double target = rng.uniform(0.12, 0.28);
        std::optional<Rect> chosen;
        for (int attempt = 0; attempt < 24 && !chosen; ++attempt) {
          const double y0 = rng.uniform(lanes[li].back().y, lanes[li].front().y);
          const double x0 = road.x_at(lane_bottoms[li], y0) + rng.uniform(-2.0, 2.0);
          const long rw = rng.range(8, 14);
          const long cx = std::lround(x0), cy = std::lround(y0);
          for (long half = 1; half < static_cast<long>(H) / 2; ++half) {
            Rect r{cx - rw / 2, cy - half, cx - rw / 2 + rw - 1, cy + half};
            const double cov = stroke_coverage(li, r);
            if (cov > 0.40) break;
            if (cov >= target) {
              chosen = r;
              break;
            }
          }
        }
        if (chosen) paint_rect(*chosen, vehicle_colour());
      }
      for (std::size_t k = 1; k < count; ++k) paint_rect(random_vehicle(), vehicle_colour());
      break;
    }
    case Scenario::kCrowd: {
      const int count = rng.range(static_cast<int>(config.crowd_occluder_min), static_cast<int>(config.crowd_occluder_max));
      for (int k = 0; k < count; ++k) paint_rect(random_vehicle(), vehicle_colour());
      break;
    }
    case Scenario::kNight:
    case Scenario::kNormal:
      break;
  }

  if (scenario == Scenario::kNight) {
    canvas.scale_all(rng.uniform(config.night_scale_min, config.night_scale_max));
  } else {
    canvas.scale_all(rng.uniform(config.brightness_min, config.brightness_max));
  }

  LaneScene scene;
  scene.image = canvas.quantized();
  scene.lanes = std::move(lanes);
  scene.scenario = scenario;
  scene.seed = seed;
  if (diagnostics) {
    diagnostics->lane_strokes = std::move(strokes);
    diagnostics->occluded = std::move(occluded);
  }
  return scene;
}

}  // namespace clld
