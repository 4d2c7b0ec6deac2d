#include "clld/trainer.hpp"

#include <cmath>
#include <cstdio>

#include "clld/augment.hpp"
#include "clld/config_io.hpp"
#include "clld/rng.hpp"

namespace clld {

std::string_view routing_name(ViewRouting r) {
  return r == ViewRouting::kMaskedToOnline ? "masked_to_online" : "original_to_online";
}

std::optional<ViewRouting> parse_routing(std::string_view name) {
  if (name == "masked_to_online") return ViewRouting::kMaskedToOnline;
  if (name == "original_to_online") return ViewRouting::kOriginalToOnline;
  return std::nullopt;
}

std::size_t TrainConfig::resolved_warmup() const {
  return warmup_steps < 0 ? default_warmup(total_steps) : static_cast<std::size_t>(warmup_steps);
}

void TrainConfig::validate() const {
  encoder.validate({alpha});
  if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
  if (base_lr < 0.0) throw ConfigError("train: base_lr must be >= 0");
  if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
  if (rho == 0 || encoder.input_h % rho != 0 || encoder.input_w % rho != 0) {
    throw ConfigError("train: rho " + std::to_string(rho) + " must divide the input size " +
                      std::to_string(encoder.input_h) + "x" + std::to_string(encoder.input_w));
  }
  if (!(mask_ratio >= 0.0 && mask_ratio <= 1.0)) throw ConfigError("train: mask_ratio must lie in [0,1]");
  if (!(m0 >= 0.0 && m0 <= 1.0)) throw ConfigError("train: m0 must lie in [0,1]");
  if (!(jitter_strength >= 0.0 && jitter_strength <= 1.0)) throw ConfigError("train: jitter_strength must lie in [0,1]");
  if (!loss.use_cons && !loss.use_sim && !loss.use_inst) throw ConfigError("train: every loss term is disabled");
  if (warmup_steps > static_cast<long>(total_steps)) throw ConfigError("train: warmup exceeds total_steps");
}

std::size_t input_side_for_alpha(std::size_t alpha, std::size_t total_stride, std::size_t preferred) {
  if (alpha == 0 || total_stride == 0) throw ConfigError("alpha and stride must be >= 1");
  const std::size_t map = preferred / total_stride;
  std::size_t side = (map / alpha) * alpha;
  if (side == 0) side = alpha;
  return side * total_stride;
}

std::string StepMetrics::csv_line() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", step, loss.l_cons, loss.l_sim, loss.l_inst,
                loss.l_clld, lr, momentum, grad_norm);
  return buf;
}

template <typename T>
TrainerState<T> init_trainer(const TrainConfig& config) {
  config.validate();
  TrainerState<T> state;
  state.config = config;
  Rng rng(derive_seed(config.seed, 0xE4C0DE));
  state.pair = make_encoder_pair<T>(config.encoder, rng);
  state.pair.momentum = config.m0;
  return state;
}

namespace {

template <typename T>
Tensor<T> convert(const Tensor<float>& x) {
  if constexpr (std::is_same_v<T, float>) {
    return Tensor<float>(x.shape(), x.storage());
  } else {
    return Tensor<T>(x.shape(), std::vector<T>(x.data().begin(), x.data().end()));
  }
}

template <typename T>
struct ViewPair {
  Tensor<T> original;
  Tensor<T> masked;
};

template <typename T>
ViewPair<T> make_views(const TrainConfig& cfg, const Tensor<float>& image, Rng& rng) {
  ViewPair<T> v;
  v.original = photometric_jitter(convert<T>(image), cfg.jitter_strength, rng);
  if (cfg.masking_enabled) {
    const MaskSpec spec = sample_mask(v.original.dim(1), v.original.dim(2), cfg.rho, cfg.mask_ratio, rng);
    v.masked = apply_mask(v.original, spec, rng);
  } else {
    v.masked = v.original;
  }
  return v;
}

// One online/target pass. Returns the loss node and its breakdown.
template <typename T>
ClldLoss<T> routed_loss(Graph<T>& g, TrainerState<T>& state, const Tensor<T>& online_view,
                        const Tensor<T>& target_view, bool online_is_masked) {
  const TrainConfig& cfg = state.config;
  auto online = encoder_forward(g, state.pair.online, g.bind(online_view), cfg.encoder);
  auto target = g.constant(encoder_forward(state.pair.target, target_view, cfg.encoder));
  // y is the original-view map, y' the masked-view map.
  auto y = online_is_masked ? target : online;
  auto y_prime = online_is_masked ? online : target;
  return clld_loss(y, y_prime, cfg.alpha, T(kCosineEps), cfg.loss);
}

}  // namespace

std::vector<std::size_t> batch_indices(const TrainConfig& config, std::size_t step, std::size_t corpus_size) {
  if (corpus_size == 0) throw ConfigError("pretrain: empty image corpus");
  Rng rng(derive_seed(config.seed, 0xBA7C4, step));
  std::vector<std::size_t> idx(config.batch_size);
  for (auto& i : idx) i = static_cast<std::size_t>(rng.below(corpus_size));
  return idx;
}

template <typename T>
StepMetrics pretrain_step(TrainerState<T>& state, const std::vector<const Tensor<float>*>& batch) {
  const TrainConfig& cfg = state.config;
  if (batch.empty()) throw ContractError("pretrain_step: empty batch");
  StepMetrics metrics;
  metrics.step = state.step;
  metrics.lr = cosine_lr(std::min(state.step, cfg.total_steps), cfg.total_steps, cfg.base_lr, cfg.resolved_warmup());
  metrics.momentum = momentum_schedule(std::min(state.step, cfg.total_steps), cfg.total_steps, cfg.m0);

  state.pair.online.set_requires_grad(true);
  state.pair.online.zero_grad();
  const T inv_batch = T(1) / static_cast<T>(batch.size());
  const bool masked_online = cfg.view_routing == ViewRouting::kMaskedToOnline;
  const double passes = cfg.symmetric ? 2.0 : 1.0;

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Tensor<float>& image = *batch[i];
    if (image.rank() != 3 || image.dim(0) != cfg.encoder.in_channels || image.dim(1) != cfg.encoder.input_h ||
        image.dim(2) != cfg.encoder.input_w) {
      throw ConfigError("pretrain_step: batch image " + image.shape().str() + " does not match the encoder input");
    }
    Rng rng(derive_seed(cfg.seed, state.step, i));
    const ViewPair<T> views = make_views<T>(cfg, image, rng);
    for (int pass = 0; pass < static_cast<int>(passes); ++pass) {
      const bool online_masked = (pass == 0) == masked_online;
      const Tensor<T>& online_view = online_masked ? views.masked : views.original;
      const Tensor<T>& target_view = online_masked ? views.original : views.masked;
      Graph<T> g;
      ClldLoss<T> loss = routed_loss(g, state, online_view, target_view, online_masked);
      g.backward(scale(loss.total, inv_batch / static_cast<T>(passes)));
      const double w = 1.0 / (static_cast<double>(batch.size()) * passes);
      metrics.loss.l_cons += w * loss.breakdown.l_cons;
      metrics.loss.l_sim += w * loss.breakdown.l_sim;
      metrics.loss.l_inst += w * loss.breakdown.l_inst;
    }
  }
  metrics.loss.l_clld = metrics.loss.l_cons + metrics.loss.l_sim + metrics.loss.l_inst;
  metrics.grad_norm = state.pair.online.grad_norm();
  if (!std::isfinite(metrics.loss.l_clld) || !std::isfinite(metrics.grad_norm)) {
    char buf[200];
    std::snprintf(buf, sizeof(buf), "non-finite loss at step %zu (lr=%.6g, grad_norm=%.6g, l_clld=%.6g)", state.step,
                  metrics.lr, metrics.grad_norm, metrics.loss.l_clld);
    throw NumericError(buf);
  }

  lars_step(state.pair.online, metrics.lr, LarsConfig{cfg.weight_decay, cfg.lars_eta, true});
  momentum_update(state.pair, metrics.momentum);
  state.pair.online.zero_grad();
  state.samples_drawn += batch.size();
  ++state.step;
  return metrics;
}

template <typename T>
StepMetrics pretrain_step(TrainerState<T>& state, const ImageCorpus& corpus) {
  std::vector<const Tensor<float>*> batch;
  for (auto i : batch_indices(state.config, state.step, corpus.size())) batch.push_back(&corpus[i]);
  return pretrain_step(state, batch);
}

template <typename T>
Archive make_checkpoint(const TrainerState<T>& state) {
  Archive a;
  const nlohmann::json config = to_json_value(state.config);
  a.config_digest = config_digest(config.dump());
  const nlohmann::json meta = {{"kind", "pretrain"},
                               {"config", config},
                               {"step", state.step},
                               {"samples_drawn", state.samples_drawn},
                               {"momentum", state.pair.momentum},
                               {"precision", static_cast<int>(sizeof(T) * 8)},
                               {"optimizer", {{"name", "lars"}, {"steps", state.step}}}};
  a.meta = meta.dump();
  store_params(a, "online.", state.pair.online);
  store_params(a, "target.", state.pair.target);
  return a;
}

template <typename T>
TrainerState<T> restore_checkpoint(const Archive& archive) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(archive.meta);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("checkpoint meta is not valid JSON: ") + e.what());
  }
  if (meta.value("kind", "") != "pretrain") throw LoadError("archive is not a pretraining checkpoint");
  TrainConfig config = train_config_from_json(meta.at("config"));
  if (config_digest(to_json_value(config).dump()) != archive.config_digest) {
    throw LoadError("checkpoint config digest does not match its config snapshot");
  }
  TrainerState<T> state = init_trainer<T>(config);
  restore_params(archive, "online.", state.pair.online);
  restore_params(archive, "target.", state.pair.target);
  state.step = meta.at("step").get<std::size_t>();
  state.samples_drawn = meta.at("samples_drawn").get<std::uint64_t>();
  state.pair.momentum = meta.at("momentum").get<double>();
  return state;
}

template <typename T>
void save_checkpoint(const TrainerState<T>& state, const std::filesystem::path& path) {
  write_archive(make_checkpoint(state), path);
}

template <typename T>
TrainerState<T> load_checkpoint(const std::filesystem::path& path) {
  return restore_checkpoint<T>(read_archive(path));
}

template <typename T>
std::vector<double> pooled_feature_std(const ParamSet<T>& params, const EncoderConfig& config,
                                       const ImageCorpus& probe) {
  std::vector<std::vector<double>> pooled;
  for (const auto& img : probe) {
    const Tensor<T> y = encoder_forward(params, convert<T>(img), config);
    const std::size_t C = y.dim(0), HW = y.dim(1) * y.dim(2);
    std::vector<double> v(C, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t i = 0; i < HW; ++i) v[c] += static_cast<double>(y[c * HW + i]);
      v[c] /= static_cast<double>(HW);
    }
    pooled.push_back(std::move(v));
  }
  if (pooled.empty()) return {};
  const std::size_t C = pooled.front().size();
  std::vector<double> out(C, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    double m = 0;
    for (const auto& v : pooled) m += v[c];
    m /= static_cast<double>(pooled.size());
    double var = 0;
    for (const auto& v : pooled) var += (v[c] - m) * (v[c] - m);
    out[c] = std::sqrt(var / static_cast<double>(pooled.size()));
  }
  return out;
}

#define CLLD_INSTANTIATE_TRAINER(T)                                                                       \
  template TrainerState<T> init_trainer(const TrainConfig&);                                              \
  template StepMetrics pretrain_step(TrainerState<T>&, const std::vector<const Tensor<float>*>&);         \
  template StepMetrics pretrain_step(TrainerState<T>&, const ImageCorpus&);                               \
  template Archive make_checkpoint(const TrainerState<T>&);                                               \
  template TrainerState<T> restore_checkpoint(const Archive&);                                            \
  template void save_checkpoint(const TrainerState<T>&, const std::filesystem::path&);                    \
  template TrainerState<T> load_checkpoint(const std::filesystem::path&);                                 \
  template std::vector<double> pooled_feature_std(const ParamSet<T>&, const EncoderConfig&, const ImageCorpus&);

CLLD_INSTANTIATE_TRAINER(float)
CLLD_INSTANTIATE_TRAINER(double)

}  // namespace clld
