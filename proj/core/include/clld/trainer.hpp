#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "clld/checkpoint.hpp"
#include "clld/encoder.hpp"
#include "clld/losses.hpp"
#include "clld/optim.hpp"

namespace clld {

// Which encoder sees the masked view. The other view goes through the
// momentum encoder under stop-gradient.
enum class ViewRouting { kMaskedToOnline, kOriginalToOnline };

std::string_view routing_name(ViewRouting r);
std::optional<ViewRouting> parse_routing(std::string_view name);

struct TrainConfig {
  EncoderConfig encoder;
  std::size_t batch_size = 32;
  std::size_t total_steps = 2000;
  double base_lr = 1.0;
  // Negative selects 5% of total_steps.
  long warmup_steps = -1;
  double weight_decay = 1e-5;
  double lars_eta = 1e-3;
  std::size_t rho = 8;
  double mask_ratio = 0.3;
  std::size_t alpha = 1;
  double m0 = 0.99;
  double jitter_strength = 0.2;
  LossSwitches loss;
  bool masking_enabled = true;
  ViewRouting view_routing = ViewRouting::kMaskedToOnline;
  // Also run the swapped pass (each view through each encoder).
  bool symmetric = false;
  std::uint64_t seed = 0;

  std::size_t resolved_warmup() const;
  // Throws ConfigError on inconsistent settings.
  void validate() const;
};

// Input side so that alpha divides the feature map: the map side is the
// largest multiple of alpha not above preferred / total_stride (e.g. 64 -> 48
// for alpha 3 at stride 8).
std::size_t input_side_for_alpha(std::size_t alpha, std::size_t total_stride, std::size_t preferred);

struct StepMetrics {
  std::size_t step = 0;
  LossBreakdown loss;
  double lr = 0.0;
  double momentum = 0.0;
  double grad_norm = 0.0;

  // "step,l_cons,l_sim,l_inst,l_clld,lr,m,grad_norm"
  std::string csv_line() const;
};

// Normalized [C,H,W] training images shared read-only by a run.
using ImageCorpus = std::vector<Tensor<float>>;

template <typename T>
struct TrainerState {
  TrainConfig config;
  EncoderPair<T> pair;
  std::size_t step = 0;
  // Samples drawn so far; every per-sample stream is derived from
  // (seed, step, index), so this counter is the full rng state.
  std::uint64_t samples_drawn = 0;
};

template <typename T>
TrainerState<T> init_trainer(const TrainConfig& config);

// One optimization step on `batch` (normalized images): jitter, mask,
// online forward on the routed view, target forward without gradient,
// batch-mean L_clld, backward, LARS on the online set, EMA update.
// Throws NumericError when the loss is not finite.
template <typename T>
StepMetrics pretrain_step(TrainerState<T>& state, const std::vector<const Tensor<float>*>& batch);

// Draws the batch for the current step from `corpus` and runs pretrain_step.
template <typename T>
StepMetrics pretrain_step(TrainerState<T>& state, const ImageCorpus& corpus);

// Indices of the corpus images used by `step`.
std::vector<std::size_t> batch_indices(const TrainConfig& config, std::size_t step, std::size_t corpus_size);

template <typename T>
Archive make_checkpoint(const TrainerState<T>& state);
template <typename T>
TrainerState<T> restore_checkpoint(const Archive& archive);

template <typename T>
void save_checkpoint(const TrainerState<T>& state, const std::filesystem::path& path);
// Throws LoadError (no partial state) on version mismatch or truncation.
template <typename T>
TrainerState<T> load_checkpoint(const std::filesystem::path& path);

// Per-channel standard deviation of pooled features across `probe`.
template <typename T>
std::vector<double> pooled_feature_std(const ParamSet<T>& params, const EncoderConfig& config,
                                       const ImageCorpus& probe);

}  // namespace clld
