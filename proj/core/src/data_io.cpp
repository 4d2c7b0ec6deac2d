#include <algorithm>
#include <charconv>
#include <map>
#include <cmath>
#include <fstream>
#include <opencv2/imgcodecs.hpp>
#include <sstream>

#include "clld/config_io.hpp"
#include "clld/data.hpp"
#include "clld/rng.hpp"

namespace clld {
namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw LoadError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write " + p.string());
  out << text;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 3);
  std::string s(buf, end);
  // Drop trailing zeros so integral rows print as "590".
  if (s.find('.') != std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
  }
  if (s == "-0") s = "0";
  return s;
}

fs::path lines_path_for(const fs::path& image) {
  fs::path p = image;
  p.replace_extension(".lines.txt");
  return p;
}

}  // namespace

std::optional<std::vector<Polyline>> parse_culane_lines(std::string_view text, std::size_t* dropped_lanes) {
  std::vector<Polyline> lanes;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (line.empty()) continue;
    std::vector<double> values;
    while (!line.empty()) {
      const auto sp = line.find_first_of(" \t");
      std::string_view tok = line.substr(0, sp);
      line = sp == std::string_view::npos ? std::string_view{} : trim(line.substr(sp));
      double v = 0;
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) return std::nullopt;
      values.push_back(v);
    }
    Polyline lane;
    for (std::size_t i = 0; i + 1 < values.size(); i += 2) lane.push_back({values[i], values[i + 1]});
    if (lane.size() < 2) {
      if (dropped_lanes) ++*dropped_lanes;
      continue;
    }
    lanes.push_back(std::move(lane));
  }
  return lanes;
}

std::string format_culane_lines(const std::vector<Polyline>& lanes) {
  std::string out;
  for (const auto& lane : lanes) {
    for (std::size_t i = 0; i < lane.size(); ++i) {
      if (i) out += ' ';
      out += format_number(lane[i].x);
      out += ' ';
      out += format_number(lane[i].y);
    }
    out += '\n';
  }
  return out;
}

void write_culane_annotation(const std::vector<Polyline>& lanes, const fs::path& path) {
  write_text(path, format_culane_lines(lanes));
}

void write_png(const Tensor<float>& image, const fs::path& path) {
  require_rank(image.shape(), 3, "write_png image");
  if (image.dim(0) != 3) throw DimensionError("write_png: axis 0 must have 3 channels");
  const int h = static_cast<int>(image.dim(1)), w = static_cast<int>(image.dim(2));
  cv::Mat mat(h, w, CV_8UC3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      auto& px = mat.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(std::round(image.at(c, y, x) * 255.0), 0.0, 255.0);
        px[2 - c] = static_cast<unsigned char>(v);  // OpenCV stores BGR
      }
    }
  }
  if (!cv::imwrite(path.string(), mat)) throw LoadError("cannot write image " + path.string());
}

Tensor<float> read_image(const fs::path& path) {
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (mat.empty()) throw LoadError("cannot read image " + path.string());
  const std::size_t h = static_cast<std::size_t>(mat.rows), w = static_cast<std::size_t>(mat.cols);
  Tensor<float> out(Shape{3, h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const auto& px = mat.at<cv::Vec3b>(static_cast<int>(y), static_cast<int>(x));
      for (std::size_t c = 0; c < 3; ++c) out.at(c, y, x) = static_cast<float>(px[2 - c] / 255.0);
    }
  }
  return out;
}

CulaneLoadResult load_culane_annotation(const fs::path& list_path, const fs::path& root, Scenario fallback,
                                        bool load_images) {
  CulaneLoadResult result;
  Scenario scenario = fallback;
  const std::string stem = list_path.stem().string();
  for (auto s : kAllScenarios) {
    if (stem.find(scenario_name(s)) != std::string::npos) scenario = s;
  }
  const std::string list = read_text(list_path);
  std::istringstream lines(list);
  std::string line;
  while (std::getline(lines, line)) {
    std::string_view entry = trim(line);
    if (entry.empty()) continue;
    entry = entry.substr(0, entry.find_first_of(" \t"));
    while (!entry.empty() && entry.front() == '/') entry.remove_prefix(1);
    const fs::path image_path = root / fs::path(entry);
    const fs::path annotation = lines_path_for(image_path);
    if (!fs::exists(annotation)) {
      result.errors.push_back(std::string(entry) + ": missing annotation " + annotation.string());
      continue;
    }
    std::size_t dropped = 0;
    auto lanes = parse_culane_lines(read_text(annotation), &dropped);
    if (!lanes) {
      result.errors.push_back(std::string(entry) + ": malformed number in " + annotation.string());
      continue;
    }
    LaneScene scene;
    scene.lanes = std::move(*lanes);
    scene.scenario = scenario;
    scene.name = std::string(entry);
    if (load_images) {
      try {
        scene.image = read_image(image_path);
      } catch (const LoadError& e) {
        result.errors.push_back(std::string(entry) + ": " + e.what());
        continue;
      }
    }
    result.dropped_lanes += dropped;
    result.scenes.push_back(std::move(scene));
  }
  return result;
}

std::vector<std::size_t> scenario_counts(const DatasetSpec& spec) {
  std::vector<std::size_t> counts(std::size(kAllScenarios), 0);
  std::size_t assigned = 0;
  for (const auto& [scenario, fraction] : spec.proportions) {
    if (fraction < 0.0) throw ConfigError("dataset proportions must be non-negative");
    if (scenario == Scenario::kNormal) continue;
    const auto n = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(spec.count) + 1e-9));
    counts[static_cast<std::size_t>(scenario)] += n;
    assigned += n;
  }
  if (assigned > spec.count) throw ConfigError("dataset proportions exceed 1");
  counts[static_cast<std::size_t>(Scenario::kNormal)] = spec.count - assigned;
  return counts;
}

std::vector<LaneScene> generate_dataset(const DatasetSpec& spec) {
  const auto counts = scenario_counts(spec);
  std::vector<LaneScene> scenes;
  scenes.reserve(spec.count);
  std::size_t index = 0;
  for (std::size_t s = 0; s < counts.size(); ++s) {
    for (std::size_t k = 0; k < counts[s]; ++k, ++index) {
      LaneScene scene = generate_scene(derive_seed(spec.seed, index), kAllScenarios[s], spec.generator);
      scene.name = std::string(scenario_name(kAllScenarios[s])) + "/" + std::to_string(index) + ".png";
      scenes.push_back(std::move(scene));
    }
  }
  return scenes;
}

void write_dataset(const DatasetSpec& spec, const std::vector<LaneScene>& scenes, const fs::path& dir) {
  fs::create_directories(dir / "list");
  for (auto s : kAllScenarios) fs::create_directories(dir / scenario_name(s));
  std::vector<std::string> lists(std::size(kAllScenarios));
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto& scene = scenes[i];
    const std::string rel = std::string(scenario_name(scene.scenario)) + "/" + std::to_string(i) + ".png";
    write_png(scene.image, dir / rel);
    write_culane_annotation(scene.lanes, lines_path_for(dir / rel));
    lists[static_cast<std::size_t>(scene.scenario)] += rel + "\n";
    entries.push_back({{"file", rel}, {"scenario", scenario_name(scene.scenario)}, {"seed", scene.seed}});
  }
  for (auto s : kAllScenarios) {
    write_text(dir / "list" / (std::string(scenario_name(s)) + ".txt"), lists[static_cast<std::size_t>(s)]);
  }
  const auto counts = scenario_counts(spec);
  nlohmann::json per_scenario = nlohmann::json::object();
  for (auto s : kAllScenarios) per_scenario[std::string(scenario_name(s))] = counts[static_cast<std::size_t>(s)];
  const nlohmann::json spec_json = to_json_value(spec);
  nlohmann::json manifest = {{"format", "clld-lane-dataset"},
                             {"version", 1},
                             {"spec", spec_json},
                             {"config_digest", digest_hex(config_digest(spec_json.dump()))},
                             {"scenario_counts", per_scenario},
                             {"entries", entries}};
  write_text(dir / "manifest", manifest.dump(2) + "\n");
}

std::vector<LaneScene> load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest";
  if (!fs::exists(manifest_path)) throw LoadError("dataset manifest not found: " + manifest_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("malformed dataset manifest " + manifest_path.string() + ": " + e.what());
  }
  std::vector<LaneScene> scenes;
  for (auto s : kAllScenarios) {
    const fs::path list = dir / "list" / (std::string(scenario_name(s)) + ".txt");
    if (!fs::exists(list)) continue;
    auto loaded = load_culane_annotation(list, dir, s);
    if (!loaded.errors.empty()) throw LoadError("dataset " + dir.string() + ": " + loaded.errors.front());
    for (auto& scene : loaded.scenes) scenes.push_back(std::move(scene));
  }
  // Restore generation order (entries are numbered by index).
  std::map<std::string, std::uint64_t> seeds;
  for (const auto& e : manifest.at("entries")) seeds[e.at("file").get<std::string>()] = e.at("seed").get<std::uint64_t>();
  for (auto& scene : scenes) {
    auto it = seeds.find(scene.name);
    if (it != seeds.end()) scene.seed = it->second;
  }
  auto index_of = [](const LaneScene& sc) {
    const auto slash = sc.name.find('/');
    return std::stoull(sc.name.substr(slash + 1, sc.name.find('.') - slash - 1));
  };
  std::stable_sort(scenes.begin(), scenes.end(), [&](const auto& a, const auto& b) { return index_of(a) < index_of(b); });
  return scenes;
}

}  // namespace clld
