#include "clld/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "clld/augment.hpp"
#include "clld/config_io.hpp"
#include "clld/errors.hpp"
#include "clld/optim.hpp"

namespace clld {

void FinetuneConfig::validate() const {
  if (batch_size == 0) throw ConfigError("finetune: batch_size must be >= 1");
  if (!(lr >= 0.0)) throw ConfigError("finetune: lr must be >= 0");
  if (!(pos_weight > 0.0)) throw ConfigError("finetune: pos_weight must be > 0");
  if (head.hidden_channels == 0 || head.kernel == 0 || head.kernel % 2 == 0) {
    throw ConfigError("finetune: head needs hidden_channels >= 1 and an odd kernel");
  }
}

void EvalConfig::validate() const {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("eval: threshold must lie in (0,1)");
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) throw ConfigError("eval: iou_threshold must lie in (0,1)");
  if (tusimple_tolerance_px < 0.0) throw ConfigError("eval: tusimple_tolerance_px must be >= 0");
}

std::size_t culane_width_for(std::size_t image_h) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(30.0 * static_cast<double>(image_h) / 590.0)));
}

double tusimple_tolerance_for(std::size_t image_h) {
  return std::max(1.0, std::round(20.0 * static_cast<double>(image_h) / 720.0));
}

std::vector<double> tusimple_sample_rows(std::size_t image_h) {
  std::vector<double> rows;
  const auto first = static_cast<std::size_t>(std::lround(160.0 * static_cast<double>(image_h) / 720.0));
  for (std::size_t y = first; y < image_h; ++y) rows.push_back(static_cast<double>(y));
  return rows;
}

namespace {

Tensor<float> normal_tensor(const Shape& shape, double stddev, Rng& rng) {
  Tensor<float> t(shape);
  for (auto& v : t.data()) v = static_cast<float>(stddev * rng.normal());
  return t;
}

template <typename Get>
Var<float> head_forward(Get&& get, Var<float> features, const EncoderConfig& enc,
                        const HeadConfig& head) {
  auto up = upsample_bilinear(features, enc.total_stride());
  auto h = conv2d(up, get("head.conv1.weight"), 1, head.kernel / 2);
  h = relu(add_channel_bias(h, get("head.conv1.bias")));
  auto logits = add_channel_bias(conv2d(h, get("head.conv2.weight"), 1, 0), get("head.conv2.bias"));
  return reshape(logits, Shape{enc.input_h, enc.input_w});
}

nlohmann::json encoder_identity(const EncoderConfig& c) {
  auto j = to_json_value(c);
  j.erase("precision");
  return j;
}

}  // namespace

ParamSet<float> init_head_params(const EncoderConfig& encoder, const HeadConfig& head, Rng& rng) {
  const std::size_t d = encoder.output_channels();
  const std::size_t k = head.kernel;
  ParamSet<float> p;
  p.add("head.conv1.weight", ParamKind::kWeight,
        normal_tensor(Shape{head.hidden_channels, d, k, k}, std::sqrt(2.0 / static_cast<double>(d * k * k)), rng));
  p.add("head.conv1.bias", ParamKind::kBias, Tensor<float>::zeros(Shape{head.hidden_channels}));
  p.add("head.conv2.weight", ParamKind::kWeight,
        normal_tensor(Shape{1, head.hidden_channels, 1, 1}, std::sqrt(1.0 / static_cast<double>(head.hidden_channels)), rng));
  p.add("head.conv2.bias", ParamKind::kBias, Tensor<float>::zeros(Shape{1}));
  return p;
}

LaneModel init_lane_model(const EncoderConfig& encoder, const HeadConfig& head, const ParamSet<float>* pretrained,
                          std::uint64_t seed) {
  encoder.validate();
  LaneModel m;
  m.encoder_config = encoder;
  m.head_config = head;
  Rng enc_rng(derive_seed(seed, 0xE4C0DE));
  m.encoder = init_encoder_params<float>(encoder, enc_rng);
  if (pretrained != nullptr) {
    require_matching_params(m.encoder, *pretrained);
    for (std::size_t i = 0; i < m.encoder.size(); ++i) {
      m.encoder[i].value = Tensor<float>(pretrained->operator[](i).value.shape(), pretrained->operator[](i).value.storage());
    }
  }
  Rng head_rng(derive_seed(seed, 0x4EAD));
  m.head = init_head_params(encoder, head, head_rng);
  return m;
}

ParamSet<float> load_pretrained_encoder(const std::filesystem::path& checkpoint, const EncoderConfig& expected) {
  const Archive a = read_archive(checkpoint);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(a.meta);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("checkpoint meta is not valid JSON: ") + e.what());
  }
  if (meta.value("kind", "") != "pretrain") throw LoadError(checkpoint.string() + " is not a pretraining checkpoint");
  const TrainConfig cfg = train_config_from_json(meta.at("config"));
  if (encoder_identity(cfg.encoder) != encoder_identity(expected)) {
    throw LoadError("checkpoint encoder " + encoder_identity(cfg.encoder).dump() + " does not match expected " +
                    encoder_identity(expected).dump());
  }
  Rng rng(0);
  ParamSet<float> params = init_encoder_params<float>(expected, rng);
  restore_params(a, "online.", params);
  return params;
}

Tensor<float> prepare_input(const Tensor<float>& image) { return normalize_per_channel(image); }

Var<float> lane_logits(Graph<float>& g, LaneModel& model, Var<float> input) {
  auto features = encoder_forward(g, model.encoder, input, model.encoder_config);
  return head_forward(
      [&](const std::string& name) { return g.leaf(model.head.get(name)); }, features, model.encoder_config,
      model.head_config);
}

FinetuneResult finetune(LaneModel model, const std::vector<LaneScene>& scenes, const FinetuneConfig& config,
                        double mark_width_px) {
  config.validate();
  const EncoderConfig& enc = model.encoder_config;
  if (config.steps > 0 && scenes.empty()) throw ConfigError("finetune: no labeled scenes");
  const double width = config.train_width_px > 0.0 ? config.train_width_px : mark_width_px;
  std::vector<Tensor<float>> inputs;
  std::vector<Tensor<float>> targets;
  inputs.reserve(scenes.size());
  targets.reserve(scenes.size());
  for (const auto& s : scenes) {
    if (s.image.rank() != 3 || s.image.dim(0) != enc.in_channels || s.image.dim(1) != enc.input_h ||
        s.image.dim(2) != enc.input_w) {
      throw ConfigError("finetune: scene " + s.name + " has shape " + s.image.shape().str() +
                        ", the encoder expects " + std::to_string(enc.input_h) + "x" + std::to_string(enc.input_w));
    }
    inputs.push_back(prepare_input(s.image));
    targets.push_back(render_lane_mask(s.lanes, width, enc.input_h, enc.input_w));
  }

  model.encoder.set_requires_grad(true);
  model.head.set_requires_grad(true);
  Adam<float> enc_opt(model.encoder, {config.lr});
  Adam<float> head_opt(model.head, {config.lr});
  FinetuneResult result;
  const float inv_batch = 1.0f / static_cast<float>(config.batch_size);
  for (std::size_t step = 0; step < config.steps; ++step) {
    Rng rng(derive_seed(config.seed, 0xF17E, step));
    model.encoder.zero_grad();
    model.head.zero_grad();
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      const auto idx = static_cast<std::size_t>(rng.below(scenes.size()));
      Graph<float> g;
      auto logits = lane_logits(g, model, g.bind(inputs[idx]));
      auto loss = bce_with_logits(logits, targets[idx], static_cast<float>(config.pos_weight));
      loss_sum += static_cast<double>(loss.value()[0]);
      g.backward(scale(loss, inv_batch));
    }
    const double mean_loss = loss_sum / static_cast<double>(config.batch_size);
    if (!std::isfinite(mean_loss)) {
      throw NumericError("finetune: non-finite loss at step " + std::to_string(step));
    }
    result.losses.push_back(mean_loss);
    enc_opt.step(model.encoder);
    head_opt.step(model.head);
  }
  model.encoder.zero_grad();
  model.head.zero_grad();
  model.encoder.set_requires_grad(false);
  model.head.set_requires_grad(false);
  result.model = std::move(model);
  return result;
}

Tensor<float> predict_probability(const LaneModel& model, const Tensor<float>& image) {
  const Tensor<float> features = encoder_forward(model.encoder, prepare_input(image), model.encoder_config);
  Graph<float> g;
  auto logits = head_forward(
      [&](const std::string& name) { return g.bind(model.head.get(name)); }, g.bind(features),
      model.encoder_config, model.head_config);
  return sigmoid(logits).value();
}

void save_lane_model(const LaneModel& model, const std::string& meta_json, std::uint64_t digest,
                     const std::filesystem::path& path) {
  Archive a;
  a.config_digest = digest;
  nlohmann::json extra = meta_json.empty() ? nlohmann::json::object() : nlohmann::json::parse(meta_json);
  const nlohmann::json meta = {{"kind", "lane_model"},
                               {"encoder", to_json_value(model.encoder_config)},
                               {"head", to_json_value(model.head_config)},
                               {"run", extra}};
  a.meta = meta.dump();
  store_params(a, "encoder.", model.encoder);
  store_params(a, "", model.head);
  write_archive(a, path);
}

LaneModel load_lane_model(const std::filesystem::path& path) {
  const Archive a = read_archive(path);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(a.meta);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("model meta is not valid JSON: ") + e.what());
  }
  if (meta.value("kind", "") != "lane_model") throw LoadError(path.string() + " is not a fine-tuned lane model");
  LaneModel m = init_lane_model(encoder_config_from_json(meta.at("encoder")), head_config_from_json(meta.at("head")),
                                nullptr, 0);
  restore_params(a, "encoder.", m.encoder);
  restore_params(a, "", m.head);
  return m;
}

// --- extraction -------------------------------------------------------------

std::vector<Polyline> extract_lanes(const Tensor<float>& prob, double threshold, std::size_t min_component_px) {
  require_rank(prob.shape(), 2, "extract_lanes");
  const std::size_t H = prob.dim(0), W = prob.dim(1);
  std::vector<int> label(H * W, -1);
  std::vector<std::pair<double, Polyline>> lanes;
  std::vector<std::size_t> stack, pixels;
  int next = 0;
  for (std::size_t start = 0; start < H * W; ++start) {
    if (label[start] >= 0 || !(prob[start] >= threshold)) continue;
    pixels.clear();
    stack.assign(1, start);
    label[start] = next;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      pixels.push_back(p);
      const long r = static_cast<long>(p / W), c = static_cast<long>(p % W);
      for (long dr = -1; dr <= 1; ++dr) {
        for (long dc = -1; dc <= 1; ++dc) {
          const long rr = r + dr, cc = c + dc;
          if ((dr == 0 && dc == 0) || rr < 0 || cc < 0 || rr >= static_cast<long>(H) || cc >= static_cast<long>(W)) continue;
          const std::size_t q = static_cast<std::size_t>(rr) * W + static_cast<std::size_t>(cc);
          if (label[q] < 0 && prob[q] >= threshold) {
            label[q] = next;
            stack.push_back(q);
          }
        }
      }
    }
    ++next;
    if (pixels.size() < min_component_px) continue;
    std::vector<double> sum_x(H, 0.0);
    std::vector<std::size_t> count(H, 0);
    for (auto p : pixels) {
      sum_x[p / W] += static_cast<double>(p % W);
      ++count[p / W];
    }
    Polyline line;
    for (std::size_t r = H; r-- > 0;) {
      if (count[r] > 0) line.push_back({sum_x[r] / static_cast<double>(count[r]), static_cast<double>(r)});
    }
    // A single-row blob carries no direction.
    if (line.size() < 2) continue;
    lanes.emplace_back(line.front().x, std::move(line));
  }
  std::stable_sort(lanes.begin(), lanes.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Polyline> out;
  for (auto& l : lanes) out.push_back(std::move(l.second));
  return out;
}

// --- assignment -------------------------------------------------------------

std::vector<int> max_weight_assignment(const std::vector<double>& weights, std::size_t rows, std::size_t cols) {
  if (weights.size() != rows * cols) throw DimensionError("max_weight_assignment: weight matrix size mismatch");
  std::vector<int> result(rows, -1);
  if (rows == 0 || cols == 0) return result;
  // Square min-cost problem on cost = max - w (padding cells cost max).
  const std::size_t n = std::max(rows, cols);
  double wmax = 0.0;
  for (double w : weights) wmax = std::max(wmax, w);
  auto cost = [&](std::size_t i, std::size_t j) {
    return (i < rows && j < cols) ? wmax - weights[i * cols + j] : wmax;
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t i = p[j] - 1;
    if (i < rows && j - 1 < cols) result[i] = static_cast<int>(j - 1);
  }
  return result;
}

// --- metrics ----------------------------------------------------------------

namespace {
double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }
}  // namespace

void LaneCounts::finalize() {
  precision = ratio(static_cast<double>(tp), static_cast<double>(tp + fp));
  recall = ratio(static_cast<double>(tp), static_cast<double>(tp + fn));
  f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

LaneCounts& LaneCounts::operator+=(const LaneCounts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  finalize();
  return *this;
}

double mask_iou(const Tensor<float>& a, const Tensor<float>& b) {
  require_same_shape(a.shape(), b.shape(), "mask_iou");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] > 0.5f, y = b[i] > 0.5f;
    inter += (x && y) ? 1 : 0;
    uni += (x || y) ? 1 : 0;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

LaneCounts culane_from_masks(const std::vector<Tensor<float>>& pred, const std::vector<Tensor<float>>& gt,
                             double iou_threshold) {
  std::vector<double> iou(pred.size() * gt.size(), 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t j = 0; j < gt.size(); ++j) iou[i * gt.size() + j] = mask_iou(pred[i], gt[j]);
  }
  const auto match = max_weight_assignment(iou, pred.size(), gt.size());
  LaneCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (match[i] >= 0 && iou[i * gt.size() + static_cast<std::size_t>(match[i])] > iou_threshold) ++c.tp;
  }
  c.fp = pred.size() - c.tp;
  c.fn = gt.size() - c.tp;
  c.finalize();
  return c;
}

std::vector<Tensor<float>> lane_masks(const std::vector<Polyline>& lanes, double width, std::size_t h, std::size_t w) {
  std::vector<Tensor<float>> masks;
  masks.reserve(lanes.size());
  for (const auto& l : lanes) masks.push_back(render_lane_mask({l}, width, h, w));
  return masks;
}

}  // namespace

LaneCounts culane_f1(const std::vector<Polyline>& pred, const std::vector<Polyline>& gt, double width_px,
                     double iou_threshold, std::size_t h, std::size_t w) {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) throw ContractError("culane_f1: iou_threshold must lie in (0,1)");
  if (!(width_px >= 1.0)) throw ContractError("culane_f1: width_px must be >= 1");
  return culane_from_masks(lane_masks(pred, width_px, h, w), lane_masks(gt, width_px, h, w), iou_threshold);
}

std::optional<double> lane_x_at(const Polyline& lane, double y) {
  if (lane.size() == 1) {
    if (lane[0].y == y) return lane[0].x;
    return std::nullopt;
  }
  for (std::size_t i = 0; i + 1 < lane.size(); ++i) {
    const Point& a = lane[i];
    const Point& b = lane[i + 1];
    if (y < std::min(a.y, b.y) || y > std::max(a.y, b.y)) continue;
    if (a.y == b.y) return a.x;
    return a.x + (b.x - a.x) * (y - a.y) / (b.y - a.y);
  }
  return std::nullopt;
}

void TusimpleCounts::finalize() {
  accuracy = ratio(static_cast<double>(correct), static_cast<double>(total));
  fp_rate = ratio(static_cast<double>(false_lanes), static_cast<double>(predicted_lanes));
  fn_rate = ratio(static_cast<double>(missed_lanes), static_cast<double>(gt_lanes));
}

TusimpleCounts& TusimpleCounts::operator+=(const TusimpleCounts& o) {
  correct += o.correct;
  total += o.total;
  false_lanes += o.false_lanes;
  predicted_lanes += o.predicted_lanes;
  missed_lanes += o.missed_lanes;
  gt_lanes += o.gt_lanes;
  finalize();
  return *this;
}

TusimpleCounts tusimple_accuracy(const std::vector<Polyline>& pred, const std::vector<Polyline>& gt,
                                 double x_tolerance_px, const std::vector<double>& sample_rows) {
  if (!(x_tolerance_px > 0.0)) throw ContractError("tusimple_accuracy: tolerance must be > 0");
  constexpr double kLaneThreshold = 0.85;
  // Ground-truth points per lane; lanes with none are not scored.
  std::vector<std::vector<std::pair<double, double>>> gt_points;
  for (const auto& lane : gt) {
    std::vector<std::pair<double, double>> pts;
    for (double y : sample_rows) {
      if (auto x = lane_x_at(lane, y)) pts.emplace_back(y, *x);
    }
    if (!pts.empty()) gt_points.push_back(std::move(pts));
  }
  TusimpleCounts c;
  c.gt_lanes = gt_points.size();
  c.predicted_lanes = pred.size();
  std::vector<std::size_t> correct(gt_points.size() * pred.size(), 0);
  struct Pair {
    double acc;
    std::size_t g, p;
  };
  std::vector<Pair> pairs;
  for (std::size_t g = 0; g < gt_points.size(); ++g) {
    c.total += gt_points[g].size();
    for (std::size_t p = 0; p < pred.size(); ++p) {
      std::size_t n = 0;
      for (const auto& [y, x] : gt_points[g]) {
        auto px = lane_x_at(pred[p], y);
        if (px && std::abs(*px - x) < x_tolerance_px) ++n;
      }
      correct[g * pred.size() + p] = n;
      if (n > 0) pairs.push_back({static_cast<double>(n) / static_cast<double>(gt_points[g].size()), g, p});
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.acc > b.acc; });
  std::vector<bool> gt_used(gt_points.size(), false), pred_used(pred.size(), false);
  std::size_t good = 0;
  for (const auto& pr : pairs) {
    if (gt_used[pr.g] || pred_used[pr.p]) continue;
    gt_used[pr.g] = pred_used[pr.p] = true;
    c.correct += correct[pr.g * pred.size() + pr.p];
    if (pr.acc >= kLaneThreshold) ++good;
  }
  c.false_lanes = pred.size() - good;
  c.missed_lanes = gt_points.size() - good;
  c.finalize();
  return c;
}

// --- report -----------------------------------------------------------------

const SubsetRow* EvalReport::find(const std::string& subset) const {
  for (const auto& r : rows) {
    if (r.subset == subset) return &r;
  }
  return nullptr;
}

const SubsetRow& EvalReport::row(const std::string& subset) const {
  if (const SubsetRow* r = find(subset)) return *r;
  throw EvaluationError("report has no subset '" + subset + "'");
}

namespace {
std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}
}  // namespace

std::string EvalReport::to_key_value() const {
  std::string out = "config_digest=" + config_digest + "\ncheckpoint_id=" + checkpoint_id + "\n";
  for (const auto& r : rows) {
    const std::string p = r.subset + ".";
    out += p + "images=" + std::to_string(r.images) + "\n";
    out += p + "tp=" + std::to_string(r.culane.tp) + "\n";
    out += p + "fp=" + std::to_string(r.culane.fp) + "\n";
    out += p + "fn=" + std::to_string(r.culane.fn) + "\n";
    out += p + "precision=" + fixed(r.culane.precision) + "\n";
    out += p + "recall=" + fixed(r.culane.recall) + "\n";
    out += p + "f1=" + fixed(r.culane.f1) + "\n";
    out += p + "tusimple_accuracy=" + fixed(r.tusimple.accuracy) + "\n";
    out += p + "fp_rate=" + fixed(r.tusimple.fp_rate) + "\n";
    out += p + "fn_rate=" + fixed(r.tusimple.fn_rate) + "\n";
  }
  return out;
}

std::string EvalReport::to_csv() const {
  std::string out = "subset,images,tp,fp,fn,precision,recall,f1,tusimple_accuracy,fp_rate,fn_rate\n";
  for (const auto& r : rows) {
    out += r.subset + "," + std::to_string(r.images) + "," + std::to_string(r.culane.tp) + "," +
           std::to_string(r.culane.fp) + "," + std::to_string(r.culane.fn) + "," + fixed(r.culane.precision) + "," +
           fixed(r.culane.recall) + "," + fixed(r.culane.f1) + "," + fixed(r.tusimple.accuracy) + "," +
           fixed(r.tusimple.fp_rate) + "," + fixed(r.tusimple.fn_rate) + "\n";
  }
  return out;
}

EvalReport evaluate_predictions(const std::vector<std::vector<Polyline>>& predictions,
                                const std::vector<LaneScene>& scenes, const EvalConfig& config) {
  config.validate();
  if (predictions.size() != scenes.size()) throw EvaluationError("evaluate: one prediction list per scene required");
  std::vector<SubsetRow> per(std::size(kAllScenarios));
  for (auto s : kAllScenarios) per[static_cast<std::size_t>(s)].subset = std::string(scenario_name(s));
  SubsetRow overall;
  overall.subset = "overall";
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto& scene = scenes[i];
    const std::size_t H = scene.image.dim(1), W = scene.image.dim(2);
    const double width =
        static_cast<double>(config.culane_width_px > 0 ? config.culane_width_px : culane_width_for(H));
    const double tol = config.tusimple_tolerance_px > 0.0 ? config.tusimple_tolerance_px : tusimple_tolerance_for(H);
    const LaneCounts lc = culane_f1(predictions[i], scene.lanes, width, config.iou_threshold, H, W);
    const TusimpleCounts tc = tusimple_accuracy(predictions[i], scene.lanes, tol, tusimple_sample_rows(H));
    SubsetRow& row = per[static_cast<std::size_t>(scene.scenario)];
    for (SubsetRow* r : {&row, &overall}) {
      ++r->images;
      r->culane += lc;
      r->tusimple += tc;
    }
  }
  EvalReport report;
  for (auto& r : per) {
    if (r.images > 0) report.rows.push_back(std::move(r));
  }
  overall.culane.finalize();
  overall.tusimple.finalize();
  report.rows.push_back(std::move(overall));
  return report;
}

EvalReport evaluate(const LaneModel& model, const std::vector<LaneScene>& scenes, const EvalConfig& config) {
  std::vector<std::vector<Polyline>> predictions;
  predictions.reserve(scenes.size());
  for (const auto& scene : scenes) {
    predictions.push_back(extract_lanes(predict_probability(model, scene.image), config.threshold,
                                        config.min_component_px));
  }
  return evaluate_predictions(predictions, scenes, config);
}

}  // namespace clld
