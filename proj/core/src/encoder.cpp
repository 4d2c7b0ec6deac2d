#include "clld/encoder.hpp"

#include <cmath>
#include <numbers>

namespace clld {

std::size_t EncoderConfig::total_stride() const {
  std::size_t s = 1;
  for (auto v : stage_strides) s *= v;
  return s;
}

std::size_t EncoderConfig::output_channels() const {
  if (projector_dim != 0) return projector_dim;
  return stage_channels.empty() ? in_channels : stage_channels.back();
}

void EncoderConfig::validate(const std::vector<std::size_t>& alphas) const {
  if (stage_channels.size() != stage_strides.size()) {
    throw ConfigError("encoder: stage_channels and stage_strides differ in length");
  }
  if (kernel == 0 || kernel % 2 == 0) throw ConfigError("encoder: kernel size must be odd");
  if (input_h == 0 || input_w == 0 || in_channels == 0) throw ConfigError("encoder: empty input size");
  for (auto s : stage_strides) {
    if (s == 0) throw ConfigError("encoder: stride must be >= 1");
  }
  for (auto c : stage_channels) {
    if (c == 0) throw ConfigError("encoder: stage with zero channels");
    const std::size_t gs = std::min(group_size, c);
    if (gs == 0 || c % gs != 0) {
      throw ConfigError("encoder: group size " + std::to_string(group_size) + " does not divide " +
                        std::to_string(c) + " channels");
    }
  }
  const std::size_t total = total_stride();
  if (input_h % total != 0 || input_w % total != 0) {
    throw ConfigError("encoder: total stride " + std::to_string(total) + " does not divide input " +
                      std::to_string(input_h) + "x" + std::to_string(input_w));
  }
  for (auto a : alphas) {
    if (a == 0 || output_h() % a != 0 || output_w() % a != 0) {
      throw ConfigError("encoder: alpha " + std::to_string(a) + " does not divide the " +
                        std::to_string(output_h()) + "x" + std::to_string(output_w()) + " feature map");
    }
  }
}

template <typename T>
void ParamSet<T>::add(std::string name, ParamKind kind, Tensor<T> value) {
  params_.push_back({std::move(name), kind, std::move(value)});
}

template <typename T>
Tensor<T>& ParamSet<T>::get(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p.value;
  }
  throw ConfigError("parameter not found: " + name);
}

template <typename T>
const Tensor<T>& ParamSet<T>::get(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.value;
  }
  throw ConfigError("parameter not found: " + name);
}

template <typename T>
void ParamSet<T>::set_requires_grad(bool on) {
  for (auto& p : params_) p.value.set_requires_grad(on);
}

template <typename T>
void ParamSet<T>::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

template <typename T>
std::size_t ParamSet<T>::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
double ParamSet<T>::grad_norm() const {
  double s = 0;
  for (const auto& p : params_) {
    for (auto g : p.value.grad()) s += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(s);
}

template <typename T>
void require_matching_params(const ParamSet<T>& a, const ParamSet<T>& b) {
  if (a.size() != b.size()) throw ContractError("parameter sets differ in length");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name) throw ContractError("parameter name mismatch: " + a[i].name + " vs " + b[i].name);
    if (!(a[i].value.shape() == b[i].value.shape())) {
      throw ContractError("parameter " + a[i].name + " shape mismatch: " + a[i].value.shape().str() + " vs " +
                          b[i].value.shape().str());
    }
  }
}

namespace {

template <typename T>
Tensor<T> normal_tensor(Shape shape, double stddev, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(stddev * rng.normal());
  return t;
}

std::string stage_name(std::size_t i) { return "stage" + std::to_string(i); }

template <typename T, typename Bind>
Var<T> forward_impl(Graph<T>& g, Bind bind, Var<T> image, const EncoderConfig& config) {
  const Shape& s = image.shape();
  if (s.rank() != 3 || s[0] != config.in_channels || s[1] != config.input_h || s[2] != config.input_w) {
    throw ConfigError("encoder: input shape " + s.str() + " does not match config [" +
                      std::to_string(config.in_channels) + "," + std::to_string(config.input_h) + "," +
                      std::to_string(config.input_w) + "]");
  }
  Var<T> x = image;
  for (std::size_t i = 0; i < config.stage_channels.size(); ++i) {
    const std::string n = stage_name(i);
    x = conv2d(x, bind(n + ".conv.weight"), config.stage_strides[i], config.kernel / 2);
    x = group_norm(x, bind(n + ".norm.gamma"), bind(n + ".norm.beta"), config.group_size);
    x = relu(x);
  }
  if (config.projector_dim != 0) {
    x = add_channel_bias(conv2d(x, bind("projector.weight"), 1, 0), bind("projector.bias"));
  }
  return x;
}

}  // namespace

template <typename T>
ParamSet<T> init_encoder_params(const EncoderConfig& config, Rng& rng) {
  config.validate();
  ParamSet<T> p;
  std::size_t cin = config.in_channels;
  const std::size_t k = config.kernel;
  for (std::size_t i = 0; i < config.stage_channels.size(); ++i) {
    const std::size_t cout = config.stage_channels[i];
    const std::string n = stage_name(i);
    const double fan_in = static_cast<double>(cin * k * k);
    p.add(n + ".conv.weight", ParamKind::kWeight, normal_tensor<T>(Shape{cout, cin, k, k}, std::sqrt(2.0 / fan_in), rng));
    p.add(n + ".norm.gamma", ParamKind::kNorm, Tensor<T>::ones(Shape{cout}));
    p.add(n + ".norm.beta", ParamKind::kNorm, Tensor<T>::zeros(Shape{cout}));
    cin = cout;
  }
  if (config.projector_dim != 0) {
    const std::size_t d = config.projector_dim;
    p.add("projector.weight", ParamKind::kWeight,
          normal_tensor<T>(Shape{d, cin, 1, 1}, std::sqrt(1.0 / static_cast<double>(cin)), rng));
    p.add("projector.bias", ParamKind::kBias, Tensor<T>::zeros(Shape{d}));
  }
  return p;
}

template <typename T>
Var<T> encoder_forward(Graph<T>& g, ParamSet<T>& params, Var<T> image, const EncoderConfig& config) {
  return forward_impl<T>(g, [&](const std::string& name) { return g.leaf(params.get(name)); }, image, config);
}

template <typename T>
Tensor<T> encoder_forward(const ParamSet<T>& params, const Tensor<T>& image, const EncoderConfig& config) {
  Graph<T> g;
  auto out = forward_impl<T>(g, [&](const std::string& name) { return g.bind(params.get(name)); }, g.bind(image), config);
  return out.value();
}

template <typename T>
EncoderPair<T> make_encoder_pair(const EncoderConfig& config, Rng& rng) {
  EncoderPair<T> pair;
  pair.online = init_encoder_params<T>(config, rng);
  pair.target = pair.online;
  pair.online.set_requires_grad(true);
  pair.target.set_requires_grad(false);
  return pair;
}

template <typename T>
void momentum_update(EncoderPair<T>& pair, double m) {
  if (!(m >= 0.0 && m <= 1.0)) throw ContractError("momentum_update: m must lie in [0,1]");
  require_matching_params(pair.online, pair.target);
  pair.momentum = m;
  const T step = static_cast<T>(1.0 - m);
  for (std::size_t i = 0; i < pair.online.size(); ++i) {
    auto t = pair.target[i].value.data();
    auto o = pair.online[i].value.data();
    if (m == 0.0) {
      std::copy(o.begin(), o.end(), t.begin());
      continue;
    }
    for (std::size_t j = 0; j < t.size(); ++j) t[j] += step * (o[j] - t[j]);
  }
}

double momentum_schedule(std::size_t step, std::size_t total_steps, double m0) {
  if (total_steps == 0) return 1.0;
  if (step > total_steps) throw ContractError("momentum_schedule: step exceeds total_steps");
  const double phase = std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps);
  return 1.0 - (1.0 - m0) * (std::cos(phase) + 1.0) / 2.0;
}

#define CLLD_INSTANTIATE_ENCODER(T)                                                                    \
  template class ParamSet<T>;                                                                          \
  template void require_matching_params(const ParamSet<T>&, const ParamSet<T>&);                       \
  template ParamSet<T> init_encoder_params(const EncoderConfig&, Rng&);                                \
  template Var<T> encoder_forward(Graph<T>&, ParamSet<T>&, Var<T>, const EncoderConfig&);              \
  template Tensor<T> encoder_forward(const ParamSet<T>&, const Tensor<T>&, const EncoderConfig&);      \
  template EncoderPair<T> make_encoder_pair(const EncoderConfig&, Rng&);                               \
  template void momentum_update(EncoderPair<T>&, double);

CLLD_INSTANTIATE_ENCODER(float)
CLLD_INSTANTIATE_ENCODER(double)

}  // namespace clld
