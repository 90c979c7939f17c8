#include "gmml/encoder.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <string>

#include "binary_io.hpp"
#include "gmml/error.hpp"

namespace gmml {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

// Activations of one forward pass, kept for backpropagation. acts[0] holds the
// inputs and acts[l + 1] the output of layer l; pre[l] the pre-activation.
template <typename T>
struct Pass {
  std::size_t rows = 0;
  std::vector<std::vector<T>> acts;
  std::vector<std::vector<T>> pre;
};

std::size_t used_layers(const MlpParams& params, bool include_head) {
  return params.layers.size() - ((params.has_head && !include_head) ? 1 : 0);
}

void check_inputs(const MlpParams& params, std::span<const Vector> inputs) {
  if (params.layers.empty()) throw Error(ErrorCode::invalid_argument, "encoder has no layers");
  for (const auto& x : inputs) {
    if (x.size() != params.input_dim()) {
      throw Error(ErrorCode::dimension_mismatch, "encoder expects inputs of dimension " +
                                                     std::to_string(params.input_dim()) + ", got " +
                                                     std::to_string(x.size()));
    }
  }
}

template <typename T>
Pass<T> run_forward(const MlpParams& params, std::span<const Vector> inputs, bool include_head) {
  check_inputs(params, inputs);
  const std::size_t depth = used_layers(params, include_head);
  Pass<T> pass;
  pass.rows = inputs.size();
  pass.acts.resize(depth + 1);
  pass.pre.resize(depth);
  auto& first = pass.acts[0];
  first.reserve(inputs.size() * params.input_dim());
  for (const auto& x : inputs) {
    for (double v : x) first.push_back(static_cast<T>(v));
  }
  for (std::size_t l = 0; l < depth; ++l) {
    const Layer& layer = params.layers[l];
    const std::vector<T>& in = pass.acts[l];
    std::vector<T> w(layer.weights.begin(), layer.weights.end());
    std::vector<T> b(layer.bias.begin(), layer.bias.end());
    std::vector<T>& z = pass.pre[l];
    std::vector<T>& out = pass.acts[l + 1];
    z.assign(pass.rows * layer.out, T(0));
    out.assign(pass.rows * layer.out, T(0));
    for (std::size_t i = 0; i < pass.rows; ++i) {
      const T* x = in.data() + i * layer.in;
      for (std::size_t o = 0; o < layer.out; ++o) {
        const T* row = w.data() + o * layer.in;
        T acc = b[o];
        for (std::size_t k = 0; k < layer.in; ++k) acc += row[k] * x[k];
        z[i * layer.out + o] = acc;
        out[i * layer.out + o] = layer.activation == Activation::relu ? std::max(acc, T(0)) : acc;
      }
    }
  }
  return pass;
}

template <typename T>
MlpGrads run_backward(const MlpParams& params, const Pass<T>& pass, std::span<const Vector> upstream) {
  const std::size_t depth = pass.pre.size();
  const std::size_t out_dim = params.layers[depth - 1].out;
  if (upstream.size() != pass.rows) {
    throw Error(ErrorCode::dimension_mismatch, "upstream gradient count differs from input count");
  }
  std::vector<T> delta;
  delta.reserve(pass.rows * out_dim);
  for (const auto& g : upstream) {
    if (g.size() != out_dim) throw Error(ErrorCode::dimension_mismatch, "upstream gradient has wrong width");
    for (double v : g) delta.push_back(static_cast<T>(v));
  }

  MlpGrads grads = MlpGrads::zeros_like(params);
  for (std::size_t l = depth; l-- > 0;) {
    const Layer& layer = params.layers[l];
    const std::vector<T>& z = pass.pre[l];
    if (layer.activation == Activation::relu) {
      for (std::size_t idx = 0; idx < delta.size(); ++idx) {
        if (!(z[idx] > T(0))) delta[idx] = T(0);
      }
    }
    const std::vector<T>& in = pass.acts[l];
    std::vector<T> gw(layer.out * layer.in, T(0));
    std::vector<T> gb(layer.out, T(0));
    for (std::size_t i = 0; i < pass.rows; ++i) {
      const T* x = in.data() + i * layer.in;
      for (std::size_t o = 0; o < layer.out; ++o) {
        const T g = delta[i * layer.out + o];
        if (g == T(0)) continue;
        gb[o] += g;
        T* row = gw.data() + o * layer.in;
        for (std::size_t k = 0; k < layer.in; ++k) row[k] += g * x[k];
      }
    }
    std::copy(gw.begin(), gw.end(), grads.layers[l].weights.begin());
    std::copy(gb.begin(), gb.end(), grads.layers[l].bias.begin());
    if (l == 0) break;
    std::vector<T> next(pass.rows * layer.in, T(0));
    std::vector<T> w(layer.weights.begin(), layer.weights.end());
    for (std::size_t i = 0; i < pass.rows; ++i) {
      T* dst = next.data() + i * layer.in;
      for (std::size_t o = 0; o < layer.out; ++o) {
        const T g = delta[i * layer.out + o];
        if (g == T(0)) continue;
        const T* row = w.data() + o * layer.in;
        for (std::size_t k = 0; k < layer.in; ++k) dst[k] += g * row[k];
      }
    }
    delta = std::move(next);
  }
  return grads;
}

template <typename T>
std::vector<Vector> outputs_of(const Pass<T>& pass) {
  const std::vector<T>& last = pass.acts.back();
  const std::size_t width = pass.rows == 0 ? 0 : last.size() / pass.rows;
  std::vector<Vector> out(pass.rows, Vector(width));
  for (std::size_t i = 0; i < pass.rows; ++i) {
    for (std::size_t k = 0; k < width; ++k) out[i][k] = static_cast<double>(last[i * width + k]);
  }
  return out;
}

template <typename T>
TrainResult train_impl(std::span<const LabeledSample> data, MlpParams params, const TrainConfig& config) {
  TrainResult result;
  Rng batch_rng(config.seed, "batches");
  SgdState state{MlpGrads::zeros_like(params)};
  std::vector<ClassId> labels;
  labels.reserve(data.size());
  for (const auto& s : data) labels.push_back(s.label);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const double lr = lr_schedule(config, epoch);
    Rng epoch_rng = batch_rng.substream(epoch);
    const auto batches = make_epoch_batches(labels, config.batch_size, config.samples_per_class, epoch_rng);
    double loss_sum = 0.0;
    for (const auto& batch : batches) {
      std::vector<Vector> inputs;
      inputs.reserve(batch.size());
      for (std::size_t idx : batch) inputs.push_back(data[idx].features);
      const Pass<T> pass = run_forward<T>(params, inputs, true);
      std::vector<LabeledSample> embedded;
      embedded.reserve(batch.size());
      auto features = outputs_of(pass);
      for (std::size_t i = 0; i < batch.size(); ++i) {
        embedded.push_back({std::move(features[i]), data[batch[i]].label});
      }
      const BatchLoss loss = batch_loss(embedded, config.loss, config.p, config.asl, config.threads);
      if (!std::isfinite(loss.value)) {
        throw Error(ErrorCode::invalid_argument,
                    "training diverged at epoch " + std::to_string(epoch) + " (non-finite loss)");
      }
      loss_sum += loss.value;
      const MlpGrads grads = run_backward(params, pass, loss.grads);
      sgd_step(params, grads, state, lr, config.momentum, config.weight_decay, config.precision);
    }
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    result.history.epochs.push_back(
        {epoch, batches.empty() ? 0.0 : loss_sum / static_cast<double>(batches.size()), lr, elapsed.count()});
  }
  result.params = std::move(params);
  return result;
}

}  // namespace

std::size_t MlpParams::output_dim(bool include_head) const {
  return layers[used_layers(*this, include_head) - 1].out;
}

void MlpParams::validate() const {
  if (layers.empty()) throw Error(ErrorCode::invalid_argument, "encoder has no layers");
  if (has_head && layers.size() < 2) {
    throw Error(ErrorCode::invalid_argument, "a detachable head needs at least one body layer");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Layer& layer = layers[l];
    if (layer.in == 0 || layer.out == 0 || layer.weights.size() != layer.in * layer.out ||
        layer.bias.size() != layer.out) {
      throw Error(ErrorCode::dimension_mismatch, "layer " + std::to_string(l) + " has inconsistent shape");
    }
    if (l > 0 && layers[l - 1].out != layer.in) {
      throw Error(ErrorCode::dimension_mismatch, "layer " + std::to_string(l) + " does not chain");
    }
    const auto finite = [](double v) { return std::isfinite(v); };
    if (!std::all_of(layer.weights.begin(), layer.weights.end(), finite) ||
        !std::all_of(layer.bias.begin(), layer.bias.end(), finite)) {
      throw Error(ErrorCode::invalid_argument, "layer " + std::to_string(l) + " has non-finite entries");
    }
  }
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.weights.size() + layer.bias.size();
  return n;
}

MlpGrads MlpGrads::zeros_like(const MlpParams& params) {
  MlpGrads g;
  for (const auto& layer : params.layers) {
    g.layers.push_back({std::vector<double>(layer.weights.size(), 0.0), Vector(layer.bias.size(), 0.0)});
  }
  return g;
}

MlpParams init_mlp(const MlpShape& shape, Rng& rng) {
  if (shape.input_dim == 0) throw Error(ErrorCode::invalid_argument, "input dimension must be positive");
  MlpParams params;
  std::size_t in = shape.input_dim;
  const auto add = [&](std::size_t out, Activation act) {
    if (out == 0) throw Error(ErrorCode::invalid_argument, "layer width must be positive");
    Layer layer{in, out, std::vector<double>(in * out), Vector(out, 0.0), act};
    const double bound = std::sqrt((act == Activation::relu ? 6.0 : 3.0) / static_cast<double>(in));
    for (double& w : layer.weights) w = rng.uniform(-bound, bound);
    params.layers.push_back(std::move(layer));
    in = out;
  };
  for (std::size_t width : shape.hidden) add(width, Activation::relu);
  if (shape.head_dim > 0) {
    if (shape.hidden.empty()) throw Error(ErrorCode::invalid_argument, "a projection head needs a hidden layer");
    add(shape.head_dim, Activation::identity);
    params.has_head = true;
  }
  if (params.layers.empty()) throw Error(ErrorCode::invalid_argument, "encoder shape has no layers");
  return params;
}

MlpParams identity_mlp(std::size_t dim) {
  Layer layer{dim, dim, std::vector<double>(dim * dim, 0.0), Vector(dim, 0.0), Activation::identity};
  for (std::size_t k = 0; k < dim; ++k) layer.w(k, k) = 1.0;
  MlpParams params;
  params.layers.push_back(std::move(layer));
  return params;
}

std::vector<Vector> forward(const MlpParams& params, std::span<const Vector> inputs, bool include_head,
                            Precision precision) {
  if (precision == Precision::f32) return outputs_of(run_forward<float>(params, inputs, include_head));
  return outputs_of(run_forward<double>(params, inputs, include_head));
}

MlpGrads backward(const MlpParams& params, std::span<const Vector> inputs, std::span<const Vector> upstream,
                  bool include_head, Precision precision) {
  if (precision == Precision::f32) {
    return run_backward(params, run_forward<float>(params, inputs, include_head), upstream);
  }
  return run_backward(params, run_forward<double>(params, inputs, include_head), upstream);
}

void sgd_step(MlpParams& params, const MlpGrads& grads, SgdState& state, double lr, double momentum,
              double weight_decay, Precision precision) {
  if (grads.layers.size() != params.layers.size()) {
    throw Error(ErrorCode::dimension_mismatch, "gradient layer count differs from parameters");
  }
  if (state.velocity.layers.empty()) state.velocity = MlpGrads::zeros_like(params);
  if (state.velocity.layers.size() != params.layers.size()) {
    throw Error(ErrorCode::dimension_mismatch, "momentum state does not match parameters");
  }
  const auto update = [&](std::vector<double>& w, const std::vector<double>& g, std::vector<double>& v) {
    if (g.size() != w.size() || v.size() != w.size()) {
      throw Error(ErrorCode::dimension_mismatch, "gradient shape differs from parameters");
    }
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double d = g[k] + weight_decay * w[k];
      v[k] = momentum * v[k] + d;
      w[k] -= lr * (d + momentum * v[k]);
      if (precision == Precision::f32) {
        w[k] = static_cast<float>(w[k]);
        v[k] = static_cast<float>(v[k]);
      }
    }
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    update(params.layers[l].weights, grads.layers[l].weights, state.velocity.layers[l].weights);
    update(params.layers[l].bias, grads.layers[l].bias, state.velocity.layers[l].bias);
  }
}

void TrainConfig::validate() const {
  const auto fail = [](const std::string& what) { throw Error(ErrorCode::invalid_argument, what); };
  if (batch_size < 2) fail("batch_size must be at least 2");
  if (warmup_epochs > epochs) fail("warmup_epochs must not exceed epochs");
  if (decay_epoch > epochs) fail("decay_epoch must not exceed epochs");
  if (!(base_lr > 0.0)) fail("base_lr must be positive");
  if (!(decay_factor > 0.0)) fail("decay_factor must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be nonnegative");
  if (!(p > 0.0)) fail("p must be positive");
  if (samples_per_class < 2) fail("samples_per_class must be at least 2");
  if (asl.gamma_pos < 0.0 || asl.gamma_neg < 0.0 || !(asl.clip >= 0.0 && asl.clip < 1.0)) {
    fail("invalid ASL parameters");
  }
}

double lr_schedule(const TrainConfig& config, std::size_t epoch) {
  if (epoch >= config.epochs) {
    throw Error(ErrorCode::invalid_argument, "epoch " + std::to_string(epoch) + " outside [0, " +
                                                 std::to_string(config.epochs) + ")");
  }
  if (epoch < config.warmup_epochs) {
    return config.base_lr * static_cast<double>(epoch + 1) / static_cast<double>(config.warmup_epochs);
  }
  if (epoch >= config.decay_epoch) return config.base_lr / config.decay_factor;
  return config.base_lr;
}

bool TrainHistory::same_trajectory(const TrainHistory& other) const {
  return std::equal(epochs.begin(), epochs.end(), other.epochs.begin(), other.epochs.end(),
                    [](const EpochRecord& a, const EpochRecord& b) {
                      return a.epoch == b.epoch && a.mean_loss == b.mean_loss && a.lr == b.lr;
                    });
}

std::vector<std::vector<std::size_t>> make_epoch_batches(std::span<const ClassId> labels,
                                                         std::size_t batch_size,
                                                         std::size_t samples_per_class, Rng& rng) {
  std::map<ClassId, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  std::vector<std::vector<std::size_t>> groups;
  for (auto& [label, members] : by_class) {
    if (members.size() < 2) {
      throw Error(ErrorCode::singleton_class, "class " + std::to_string(label) + " has fewer than 2 samples");
    }
    rng.shuffle(std::span(members));
    for (std::size_t start = 0; start < members.size(); start += samples_per_class) {
      const std::size_t end = std::min(start + samples_per_class, members.size());
      if (end - start == 1) {
        groups.back().push_back(members[start]);
      } else {
        groups.emplace_back(members.begin() + static_cast<std::ptrdiff_t>(start),
                            members.begin() + static_cast<std::ptrdiff_t>(end));
      }
    }
  }
  rng.shuffle(std::span(groups));

  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> current;
  for (const auto& group : groups) {
    if (!current.empty() && current.size() + group.size() > batch_size) {
      batches.push_back(std::move(current));
      current.clear();
    }
    current.insert(current.end(), group.begin(), group.end());
  }
  if (!current.empty()) batches.push_back(std::move(current));
  return batches;
}

TrainResult train(std::span<const LabeledSample> data, MlpParams init, const TrainConfig& config) {
  config.validate();
  init.validate();
  if (data.empty()) throw Error(ErrorCode::insufficient_data, "training split is empty");
  {
    std::map<ClassId, std::size_t> counts;
    for (const auto& s : data) ++counts[s.label];
    for (const auto& [label, count] : counts) {
      if (count < 2) {
        throw Error(ErrorCode::singleton_class,
                    "class " + std::to_string(label) + " has a single training sample");
      }
    }
  }
  check_inputs(init, std::vector<Vector>{data.front().features});
  if (config.precision == Precision::f32) return train_impl<float>(data, std::move(init), config);
  return train_impl<double>(data, std::move(init), config);
}

void save_checkpoint(const MlpParams& params, const std::filesystem::path& path) {
  params.validate();
  io::ByteWriter w;
  w.magic("GMML");
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.layers.size()));
  w.put<std::uint8_t>(params.has_head ? 1 : 0);
  for (const auto& layer : params.layers) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(layer.in));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(layer.out));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(layer.activation));
  }
  for (const auto& layer : params.layers) {
    for (double v : layer.weights) w.put<double>(v);
    for (double v : layer.bias) w.put<double>(v);
  }
  w.seal();
  io::write_file(path, w.bytes());
}

MlpParams load_checkpoint(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = io::read_file(path);
  io::ByteReader r(bytes);
  if (r.magic(4) != "GMML") throw Error(ErrorCode::bad_magic, path.string() + " is not a GMML checkpoint");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::unsupported_version, "checkpoint version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  MlpParams params;
  params.has_head = r.get<std::uint8_t>() != 0;
  std::size_t payload = 0;
  for (std::uint32_t l = 0; l < count; ++l) {
    Layer layer;
    layer.in = r.get<std::uint32_t>();
    layer.out = r.get<std::uint32_t>();
    const auto act = r.get<std::uint8_t>();
    if (act > 1) throw Error(ErrorCode::parse_failure, "unknown activation tag");
    layer.activation = static_cast<Activation>(act);
    payload += (layer.in * layer.out + layer.out) * sizeof(double);
    params.layers.push_back(std::move(layer));
  }
  if (r.remaining() < payload + 4) throw Error(ErrorCode::truncated_payload, "checkpoint payload is short");
  if (r.remaining() > payload + 4) throw Error(ErrorCode::dimension_mismatch, "checkpoint payload is longer than its layer table");
  io::check_crc(bytes);
  for (auto& layer : params.layers) {
    layer.weights.resize(layer.in * layer.out);
    layer.bias.resize(layer.out);
    for (double& v : layer.weights) v = r.get<double>();
    for (double& v : layer.bias) v = r.get<double>();
  }
  params.validate();
  return params;
}

}  // namespace gmml
