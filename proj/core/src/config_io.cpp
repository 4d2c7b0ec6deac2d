#include "clld/config_io.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "clld/errors.hpp"

namespace clld {

using nlohmann::json;

namespace {

// Reads known keys out of one JSON object and rejects the rest.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string context) : j_(j), context_(std::move(context)) {
    if (!j_.is_object()) throw ConfigError(context_ + ": expected a JSON object");
  }

  template <typename V>
  void field(const char* key, V& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_unsigned_v<V> && !std::is_same_v<V, bool>) {
        if (it->is_number_integer() && !it->is_number_unsigned() && it->template get<long long>() < 0) {
          throw ConfigError(context_ + "." + key + ": must be non-negative");
        }
        if (!it->is_number_integer()) throw ConfigError(context_ + "." + key + ": expected an integer");
      } else if constexpr (std::is_integral_v<V> && !std::is_same_v<V, bool>) {
        if (!it->is_number_integer()) throw ConfigError(context_ + "." + key + ": expected an integer");
      } else if constexpr (std::is_same_v<V, bool>) {
        if (!it->is_boolean()) throw ConfigError(context_ + "." + key + ": expected true or false");
      } else if constexpr (std::is_floating_point_v<V>) {
        if (!it->is_number()) throw ConfigError(context_ + "." + key + ": expected a number");
      }
      out = it->template get<V>();
    } catch (const json::exception& e) {
      throw ConfigError(context_ + "." + key + ": " + e.what());
    }
  }

  // Nested object handled by `fn(const json&)`.
  template <typename Fn>
  void object(const char* key, Fn&& fn) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it != j_.end()) fn(*it, context_ + "." + key);
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError(context_ + ": unknown key '" + item.key() + "'");
    }
  }

 private:
  const json& j_;
  std::string context_;
  std::set<std::string> seen_;
};

template <typename V>
std::pair<V, V> read_range(const json& j, const std::string& context, std::pair<V, V> base) {
  if (!j.is_array() || j.size() != 2) throw ConfigError(context + ": expected a [min, max] pair");
  try {
    return {j[0].get<V>(), j[1].get<V>()};
  } catch (const json::exception& e) {
    throw ConfigError(context + ": " + e.what());
  }
  return base;
}

}  // namespace

json to_json_value(const EncoderConfig& c) {
  return {{"input_h", c.input_h},
          {"input_w", c.input_w},
          {"in_channels", c.in_channels},
          {"stage_channels", c.stage_channels},
          {"stage_strides", c.stage_strides},
          {"kernel", c.kernel},
          {"group_size", c.group_size},
          {"projector_dim", c.projector_dim},
          {"precision", c.precision}};
}

EncoderConfig encoder_config_from_json(const json& j, const EncoderConfig& base) {
  EncoderConfig c = base;
  ObjectReader r(j, "encoder");
  r.field("input_h", c.input_h);
  r.field("input_w", c.input_w);
  r.field("in_channels", c.in_channels);
  r.field("stage_channels", c.stage_channels);
  r.field("stage_strides", c.stage_strides);
  r.field("kernel", c.kernel);
  r.field("group_size", c.group_size);
  r.field("projector_dim", c.projector_dim);
  r.field("precision", c.precision);
  r.finish();
  return c;
}

json to_json_value(const GeneratorConfig& c) {
  return {{"image_h", c.image_h},
          {"image_w", c.image_w},
          {"lane_count_range", {c.lane_count_min, c.lane_count_max}},
          {"curvature_range", {c.curvature_min, c.curvature_max}},
          {"mark_width_px", c.mark_width_px},
          {"occluder_count_range", {c.occluder_count_min, c.occluder_count_max}},
          {"crowd_occluder_range", {c.crowd_occluder_min, c.crowd_occluder_max}},
          {"shadow_polygon_count", c.shadow_polygon_count},
          {"brightness_range", {c.brightness_min, c.brightness_max}},
          {"night_scale_range", {c.night_scale_min, c.night_scale_max}},
          {"texture_noise_std", c.texture_noise_std},
          {"dashed_probability", c.dashed_probability}};
}

GeneratorConfig generator_config_from_json(const json& j, const GeneratorConfig& base) {
  GeneratorConfig c = base;
  ObjectReader r(j, "generator");
  r.field("image_h", c.image_h);
  r.field("image_w", c.image_w);
  auto range = [](std::size_t& lo, std::size_t& hi) {
    return [&lo, &hi](const json& v, const std::string& ctx) {
      std::tie(lo, hi) = read_range<std::size_t>(v, ctx, {lo, hi});
    };
  };
  auto real_range = [](double& lo, double& hi) {
    return [&lo, &hi](const json& v, const std::string& ctx) {
      std::tie(lo, hi) = read_range<double>(v, ctx, {lo, hi});
    };
  };
  r.object("lane_count_range", range(c.lane_count_min, c.lane_count_max));
  r.object("curvature_range", real_range(c.curvature_min, c.curvature_max));
  r.field("mark_width_px", c.mark_width_px);
  r.object("occluder_count_range", range(c.occluder_count_min, c.occluder_count_max));
  r.object("crowd_occluder_range", range(c.crowd_occluder_min, c.crowd_occluder_max));
  r.field("shadow_polygon_count", c.shadow_polygon_count);
  r.object("brightness_range", real_range(c.brightness_min, c.brightness_max));
  r.object("night_scale_range", real_range(c.night_scale_min, c.night_scale_max));
  r.field("texture_noise_std", c.texture_noise_std);
  r.field("dashed_probability", c.dashed_probability);
  r.finish();
  c.validate();
  return c;
}

json to_json_value(const DatasetSpec& c) {
  json props = json::object();
  for (const auto& [s, p] : c.proportions) props[std::string(scenario_name(s))] = p;
  return {{"generator", to_json_value(c.generator)}, {"seed", c.seed}, {"count", c.count}, {"proportions", props}};
}

DatasetSpec dataset_spec_from_json(const json& j, const DatasetSpec& base) {
  DatasetSpec c = base;
  ObjectReader r(j, "gen-data");
  r.object("generator", [&](const json& v, const std::string&) { c.generator = generator_config_from_json(v, c.generator); });
  r.field("seed", c.seed);
  r.field("count", c.count);
  r.object("proportions", [&](const json& v, const std::string& ctx) {
    if (!v.is_object()) throw ConfigError(ctx + ": expected an object of scenario fractions");
    c.proportions.clear();
    for (const auto& item : v.items()) {
      auto s = parse_scenario(item.key());
      if (!s) throw ConfigError(ctx + ": unknown scenario '" + item.key() + "'");
      if (!item.value().is_number() || item.value().get<double>() < 0.0) {
        throw ConfigError(ctx + "." + item.key() + ": expected a non-negative number");
      }
      c.proportions.emplace_back(*s, item.value().get<double>());
    }
    std::stable_sort(c.proportions.begin(), c.proportions.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
  });
  r.finish();
  return c;
}

json to_json_value(const LossSwitches& c) {
  return {{"use_cons", c.use_cons}, {"use_sim", c.use_sim}, {"use_inst", c.use_inst}};
}

LossSwitches loss_switches_from_json(const json& j, const LossSwitches& base) {
  LossSwitches c = base;
  ObjectReader r(j, "loss");
  r.field("use_cons", c.use_cons);
  r.field("use_sim", c.use_sim);
  r.field("use_inst", c.use_inst);
  r.finish();
  return c;
}

json to_json_value(const TrainConfig& c) {
  return {{"encoder", to_json_value(c.encoder)},
          {"batch_size", c.batch_size},
          {"total_steps", c.total_steps},
          {"base_lr", c.base_lr},
          {"warmup_steps", c.warmup_steps},
          {"weight_decay", c.weight_decay},
          {"lars_eta", c.lars_eta},
          {"rho", c.rho},
          {"mask_ratio", c.mask_ratio},
          {"alpha", c.alpha},
          {"m0", c.m0},
          {"jitter_strength", c.jitter_strength},
          {"loss", to_json_value(c.loss)},
          {"masking_enabled", c.masking_enabled},
          {"view_routing", routing_name(c.view_routing)},
          {"symmetric", c.symmetric},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j, const TrainConfig& base) {
  TrainConfig c = base;
  ObjectReader r(j, "pretrain");
  r.object("encoder", [&](const json& v, const std::string&) { c.encoder = encoder_config_from_json(v, c.encoder); });
  r.field("batch_size", c.batch_size);
  r.field("total_steps", c.total_steps);
  r.field("base_lr", c.base_lr);
  r.field("warmup_steps", c.warmup_steps);
  r.field("weight_decay", c.weight_decay);
  r.field("lars_eta", c.lars_eta);
  r.field("rho", c.rho);
  r.field("mask_ratio", c.mask_ratio);
  r.field("alpha", c.alpha);
  r.field("m0", c.m0);
  r.field("jitter_strength", c.jitter_strength);
  r.object("loss", [&](const json& v, const std::string&) { c.loss = loss_switches_from_json(v, c.loss); });
  r.field("masking_enabled", c.masking_enabled);
  r.object("view_routing", [&](const json& v, const std::string& ctx) {
    if (!v.is_string()) throw ConfigError(ctx + ": expected a string");
    auto routing = parse_routing(v.get<std::string>());
    if (!routing) throw ConfigError(ctx + ": unknown routing '" + v.get<std::string>() + "'");
    c.view_routing = *routing;
  });
  r.field("symmetric", c.symmetric);
  r.field("seed", c.seed);
  r.finish();
  return c;
}

json to_json_value(const HeadConfig& c) { return {{"hidden_channels", c.hidden_channels}, {"kernel", c.kernel}}; }

HeadConfig head_config_from_json(const json& j, const HeadConfig& base) {
  HeadConfig c = base;
  ObjectReader r(j, "head");
  r.field("hidden_channels", c.hidden_channels);
  r.field("kernel", c.kernel);
  r.finish();
  return c;
}

json to_json_value(const FinetuneConfig& c) {
  return {{"head", to_json_value(c.head)},     {"steps", c.steps},
          {"batch_size", c.batch_size},        {"lr", c.lr},
          {"pos_weight", c.pos_weight},        {"train_width_px", c.train_width_px},
          {"seed", c.seed}};
}

FinetuneConfig finetune_config_from_json(const json& j, const FinetuneConfig& base) {
  FinetuneConfig c = base;
  ObjectReader r(j, "finetune");
  r.object("head", [&](const json& v, const std::string&) { c.head = head_config_from_json(v, c.head); });
  r.field("steps", c.steps);
  r.field("batch_size", c.batch_size);
  r.field("lr", c.lr);
  r.field("pos_weight", c.pos_weight);
  r.field("train_width_px", c.train_width_px);
  r.field("seed", c.seed);
  r.finish();
  return c;
}

json to_json_value(const EvalConfig& c) {
  return {{"threshold", c.threshold},
          {"min_component_px", c.min_component_px},
          {"culane_width_px", c.culane_width_px},
          {"iou_threshold", c.iou_threshold},
          {"tusimple_tolerance_px", c.tusimple_tolerance_px}};
}

EvalConfig eval_config_from_json(const json& j, const EvalConfig& base) {
  EvalConfig c = base;
  ObjectReader r(j, "eval");
  r.field("threshold", c.threshold);
  r.field("min_component_px", c.min_component_px);
  r.field("culane_width_px", c.culane_width_px);
  r.field("iou_threshold", c.iou_threshold);
  r.field("tusimple_tolerance_px", c.tusimple_tolerance_px);
  r.finish();
  return c;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
}

std::uint64_t config_digest(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string digest_hex(std::uint64_t digest) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(digest));
  return buf;
}

}  // namespace clld
