#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "clld/checkpoint.hpp"
#include "clld/data.hpp"
#include "clld/encoder.hpp"

namespace clld {

// Segmentation head on top of the encoder: bilinear upsample back to the
// input size, conv3x3 + bias, relu, conv1x1 + bias, per-pixel sigmoid.
struct HeadConfig {
  std::size_t hidden_channels = 16;
  std::size_t kernel = 3;
};

struct FinetuneConfig {
  HeadConfig head;
  std::size_t steps = 300;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  // Weight on lane pixels; lanes cover a small fraction of each image.
  double pos_weight = 4.0;
  // Width of the training targets; <= 0 uses the generator's mark width.
  double train_width_px = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EvalConfig {
  double threshold = 0.5;
  std::size_t min_component_px = 20;
  // 0 scales the public 30 px at 590 rows: round(30 * H / 590).
  std::size_t culane_width_px = 0;
  double iou_threshold = 0.5;
  // 0 scales the public 20 px at 720 rows: round(20 * H / 720).
  double tusimple_tolerance_px = 0.0;

  void validate() const;
};

std::size_t culane_width_for(std::size_t image_h);
double tusimple_tolerance_for(std::size_t image_h);
// Every row from round(160 * H / 720) to H - 1.
std::vector<double> tusimple_sample_rows(std::size_t image_h);

struct LaneModel {
  EncoderConfig encoder_config;
  HeadConfig head_config;
  ParamSet<float> encoder;
  ParamSet<float> head;
};

// Head parameters: "head.conv1.weight", "head.conv1.bias",
// "head.conv2.weight", "head.conv2.bias".
ParamSet<float> init_head_params(const EncoderConfig& encoder, const HeadConfig& head, Rng& rng);

// Encoder from `pretrained` (copied) or freshly initialized from `seed`.
LaneModel init_lane_model(const EncoderConfig& encoder, const HeadConfig& head, const ParamSet<float>* pretrained,
                          std::uint64_t seed);

// Online encoder of a pretraining checkpoint. Throws LoadError when its
// encoder configuration differs from `expected`.
ParamSet<float> load_pretrained_encoder(const std::filesystem::path& checkpoint, const EncoderConfig& expected);

// Network input for a scene: per-channel normalized image.
Tensor<float> prepare_input(const Tensor<float>& image);

// [H,W] lane logits.
Var<float> lane_logits(Graph<float>& g, LaneModel& model, Var<float> input);

struct FinetuneResult {
  LaneModel model;
  // Batch-mean loss per step.
  std::vector<double> losses;
};

// Adam on encoder and head together against render_lane_mask targets.
// Throws ConfigError when a scene does not match the encoder input and
// NumericError on a non-finite loss.
FinetuneResult finetune(LaneModel model, const std::vector<LaneScene>& scenes, const FinetuneConfig& config,
                        double mark_width_px);

// [H,W] probabilities in [0,1].
Tensor<float> predict_probability(const LaneModel& model, const Tensor<float>& image);

void save_lane_model(const LaneModel& model, const std::string& meta_json, std::uint64_t digest,
                     const std::filesystem::path& path);
LaneModel load_lane_model(const std::filesystem::path& path);

// --- lane extraction and metrics -------------------------------------------

// Binarize at `threshold`, split into 8-connected components, drop those
// below `min_component_px` pixels, and turn each into per-row centroids
// from the bottom row upwards. Lanes are sorted by their bottom x.
std::vector<Polyline> extract_lanes(const Tensor<float>& prob, double threshold = 0.5,
                                    std::size_t min_component_px = 20);

// Maximum-weight one-to-one assignment on a rows x cols matrix (row-major).
// result[r] is the column assigned to row r, or -1.
std::vector<int> max_weight_assignment(const std::vector<double>& weights, std::size_t rows, std::size_t cols);

struct LaneCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  // Recomputes precision, recall and f1 from the counts.
  void finalize();
  LaneCounts& operator+=(const LaneCounts& other);
};

// IoU of two binary masks of equal size; 0 when both are empty.
double mask_iou(const Tensor<float>& a, const Tensor<float>& b);

LaneCounts culane_f1(const std::vector<Polyline>& pred, const std::vector<Polyline>& gt, double width_px,
                     double iou_threshold, std::size_t h, std::size_t w);

// x of a polyline at row y by linear interpolation, if the polyline spans y.
std::optional<double> lane_x_at(const Polyline& lane, double y);

struct TusimpleCounts {
  std::size_t correct = 0;
  std::size_t total = 0;
  std::size_t false_lanes = 0;
  std::size_t predicted_lanes = 0;
  std::size_t missed_lanes = 0;
  std::size_t gt_lanes = 0;
  double accuracy = 0.0;
  double fp_rate = 0.0;
  double fn_rate = 0.0;

  void finalize();
  TusimpleCounts& operator+=(const TusimpleCounts& other);
};

// Lanes are matched greedily by accuracy; a matched pair needs 85% correct
// points, unmatched predictions are false, unmatched ground truths missed.
TusimpleCounts tusimple_accuracy(const std::vector<Polyline>& pred, const std::vector<Polyline>& gt,
                                 double x_tolerance_px, const std::vector<double>& sample_rows);

struct SubsetRow {
  std::string subset;
  std::size_t images = 0;
  LaneCounts culane;
  TusimpleCounts tusimple;
};

struct EvalReport {
  // One row per scenario present, in scenario order, then "overall".
  std::vector<SubsetRow> rows;
  std::string config_digest;
  std::string checkpoint_id;

  const SubsetRow& row(const std::string& subset) const;
  const SubsetRow* find(const std::string& subset) const;
  // "key=value" lines, e.g. "occluded.f1=0.5".
  std::string to_key_value() const;
  // Header plus one comma-separated line per row.
  std::string to_csv() const;
};

EvalReport evaluate(const LaneModel& model, const std::vector<LaneScene>& scenes, const EvalConfig& config);

// Metric aggregation over given predictions, one entry per scene.
EvalReport evaluate_predictions(const std::vector<std::vector<Polyline>>& predictions,
                                const std::vector<LaneScene>& scenes, const EvalConfig& config);

}  // namespace clld
