#include "fedguard/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fedguard {

Dataset make_dataset(std::vector<double> samples, std::vector<int> labels,
                     int num_classes, int height, int width) {
  if (num_classes < 1) throw std::invalid_argument("Dataset: num_classes must be >= 1");
  if (height < 0 || width < 0) throw std::invalid_argument("Dataset: bad shape");
  const std::size_t d = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  if (labels.size() * d != samples.size()) {
    throw std::invalid_argument("Dataset: sample/label count mismatch");
  }
  for (double v : samples) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument("Dataset: pixel values must be in [0, 1]");
    }
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) {
      throw std::invalid_argument("Dataset: label out of range");
    }
  }
  return Dataset{std::move(samples), std::move(labels), num_classes, height, width};
}

namespace models {
namespace {

void require_params(const ModelSpec& spec, const ParamVector& params, const char* op) {
  if (params.dim() != spec.param_count()) {
    throw std::invalid_argument(std::string(op) + ": parameter dimension mismatch");
  }
}

// Numerically stable softmax in place; returns the log-partition shift term
// log(sum exp(l - max)) + max for the cross-entropy.
double softmax_inplace(std::vector<double>& logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double z = 0.0;
  for (double& v : logits) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : logits) v /= z;
  return std::log(z) + mx;
}

void logits_logistic(const ModelSpec& spec, const ParamVector& params,
                     std::span<const double> x, std::vector<double>& out) {
  const int d = spec.input_dim;
  const int c = spec.num_classes;
  const std::size_t bias_off = static_cast<std::size_t>(c) * static_cast<std::size_t>(d);
  for (int k = 0; k < c; ++k) {
    double acc = params[bias_off + static_cast<std::size_t>(k)];
    const std::size_t row = static_cast<std::size_t>(k) * static_cast<std::size_t>(d);
    for (int j = 0; j < d; ++j) acc += params[row + static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(k)] = acc;
  }
}

// Parameter layout for the MLP: W1 (hidden x in), b1, W2 (classes x hidden),
// b2, flattened in that order.
struct MlpOffsets {
  std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0;
  explicit MlpOffsets(const ModelSpec& spec) {
    const std::size_t d = static_cast<std::size_t>(spec.input_dim);
    const std::size_t h = static_cast<std::size_t>(spec.hidden);
    w1 = 0;
    b1 = h * d;
    w2 = b1 + h;
    b2 = w2 + static_cast<std::size_t>(spec.num_classes) * h;
  }
};

void forward_mlp(const ModelSpec& spec, const ParamVector& params,
                 std::span<const double> x, std::vector<double>& hidden,
                 std::vector<double>& out) {
  const MlpOffsets off(spec);
  const int d = spec.input_dim;
  const int h = spec.hidden;
  const int c = spec.num_classes;
  for (int k = 0; k < h; ++k) {
    double acc = params[off.b1 + static_cast<std::size_t>(k)];
    const std::size_t row = off.w1 + static_cast<std::size_t>(k) * static_cast<std::size_t>(d);
    for (int j = 0; j < d; ++j) acc += params[row + static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(j)];
    hidden[static_cast<std::size_t>(k)] = std::tanh(acc);
  }
  for (int k = 0; k < c; ++k) {
    double acc = params[off.b2 + static_cast<std::size_t>(k)];
    const std::size_t row = off.w2 + static_cast<std::size_t>(k) * static_cast<std::size_t>(h);
    for (int j = 0; j < h; ++j) acc += params[row + static_cast<std::size_t>(j)] * hidden[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(k)] = acc;
  }
}

void sample_logits(const ModelSpec& spec, const ParamVector& params,
                   std::span<const double> x, std::vector<double>& hidden,
                   std::vector<double>& out) {
  if (spec.kind == ModelKind::logistic) {
    logits_logistic(spec, params, x, out);
  } else {
    forward_mlp(spec, params, x, hidden, out);
  }
}

}  // namespace

ForwardResult forward_loss(const ModelSpec& spec, const ParamVector& params,
                           const Dataset& data, std::span<const int> batch) {
  require_params(spec, params, "forward_loss");
  if (batch.empty()) throw std::invalid_argument("forward_loss: empty batch");
  const int c = spec.num_classes;
  ForwardResult result;
  result.logits.resize(batch.size() * static_cast<std::size_t>(c));
  std::vector<double> hidden(static_cast<std::size_t>(std::max(spec.hidden, 1)));
  std::vector<double> row(static_cast<std::size_t>(c));
  double loss = 0.0;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const std::size_t i = static_cast<std::size_t>(batch[b]);
    sample_logits(spec, params, data.row(i), hidden, row);
    std::copy(row.begin(), row.end(), result.logits.begin() + b * static_cast<std::size_t>(c));
    const double target_logit = row[static_cast<std::size_t>(data.labels[i])];
    const double logz = softmax_inplace(row);
    loss += (logz - target_logit) * inv_b;
  }
  result.loss = loss;
  return result;
}

ParamVector backward(const ModelSpec& spec, const ParamVector& params,
                     const Dataset& data, std::span<const int> batch) {
  require_params(spec, params, "backward");
  if (batch.empty()) throw std::invalid_argument("backward: empty batch");
  const int d = spec.input_dim;
  const int c = spec.num_classes;
  std::vector<double> grad(spec.param_count(), 0.0);
  std::vector<double> probs(static_cast<std::size_t>(c));
  std::vector<double> hidden(static_cast<std::size_t>(std::max(spec.hidden, 1)));
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  if (spec.kind == ModelKind::logistic) {
    const std::size_t bias_off = static_cast<std::size_t>(c) * static_cast<std::size_t>(d);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const std::size_t i = static_cast<std::size_t>(batch[b]);
      const auto x = data.row(i);
      logits_logistic(spec, params, x, probs);
      softmax_inplace(probs);
      probs[static_cast<std::size_t>(data.labels[i])] -= 1.0;
      for (int k = 0; k < c; ++k) {
        const double g = probs[static_cast<std::size_t>(k)] * inv_b;
        const std::size_t row = static_cast<std::size_t>(k) * static_cast<std::size_t>(d);
        for (int j = 0; j < d; ++j) grad[row + static_cast<std::size_t>(j)] += g * x[static_cast<std::size_t>(j)];
        grad[bias_off + static_cast<std::size_t>(k)] += g;
      }
    }
  } else {
    const MlpOffsets off(spec);
    const int h = spec.hidden;
    std::vector<double> dhidden(static_cast<std::size_t>(h));
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const std::size_t i = static_cast<std::size_t>(batch[b]);
      const auto x = data.row(i);
      forward_mlp(spec, params, x, hidden, probs);
      softmax_inplace(probs);
      probs[static_cast<std::size_t>(data.labels[i])] -= 1.0;
      std::fill(dhidden.begin(), dhidden.end(), 0.0);
      for (int k = 0; k < c; ++k) {
        const double g = probs[static_cast<std::size_t>(k)] * inv_b;
        const std::size_t row = off.w2 + static_cast<std::size_t>(k) * static_cast<std::size_t>(h);
        for (int j = 0; j < h; ++j) {
          grad[row + static_cast<std::size_t>(j)] += g * hidden[static_cast<std::size_t>(j)];
          dhidden[static_cast<std::size_t>(j)] += params[row + static_cast<std::size_t>(j)] * g;
        }
        grad[off.b2 + static_cast<std::size_t>(k)] += g;
      }
      for (int k = 0; k < h; ++k) {
        const double hk = hidden[static_cast<std::size_t>(k)];
        const double g = dhidden[static_cast<std::size_t>(k)] * (1.0 - hk * hk);
        const std::size_t row = off.w1 + static_cast<std::size_t>(k) * static_cast<std::size_t>(d);
        for (int j = 0; j < d; ++j) grad[row + static_cast<std::size_t>(j)] += g * x[static_cast<std::size_t>(j)];
        grad[off.b1 + static_cast<std::size_t>(k)] += g;
      }
    }
  }
  return ParamVector(std::move(grad));
}

std::vector<double> input_gradient(const ModelSpec& spec, const ParamVector& params,
                                   std::span<const double> x, int target) {
  require_params(spec, params, "input_gradient");
  if (target < 0 || target >= spec.num_classes) {
    throw std::invalid_argument("input_gradient: target out of range");
  }
  const int d = spec.input_dim;
  const int c = spec.num_classes;
  std::vector<double> probs(static_cast<std::size_t>(c));
  std::vector<double> hidden(static_cast<std::size_t>(std::max(spec.hidden, 1)));
  std::vector<double> dx(static_cast<std::size_t>(d), 0.0);

  if (spec.kind == ModelKind::logistic) {
    logits_logistic(spec, params, x, probs);
    softmax_inplace(probs);
    probs[static_cast<std::size_t>(target)] -= 1.0;
    for (int k = 0; k < c; ++k) {
      const double g = probs[static_cast<std::size_t>(k)];
      const std::size_t row = static_cast<std::size_t>(k) * static_cast<std::size_t>(d);
      for (int j = 0; j < d; ++j) dx[static_cast<std::size_t>(j)] += g * params[row + static_cast<std::size_t>(j)];
    }
  } else {
    const MlpOffsets off(spec);
    const int h = spec.hidden;
    forward_mlp(spec, params, x, hidden, probs);
    softmax_inplace(probs);
    probs[static_cast<std::size_t>(target)] -= 1.0;
    std::vector<double> dhidden(static_cast<std::size_t>(h), 0.0);
    for (int k = 0; k < c; ++k) {
      const double g = probs[static_cast<std::size_t>(k)];
      const std::size_t row = off.w2 + static_cast<std::size_t>(k) * static_cast<std::size_t>(h);
      for (int j = 0; j < h; ++j) dhidden[static_cast<std::size_t>(j)] += params[row + static_cast<std::size_t>(j)] * g;
    }
    for (int k = 0; k < h; ++k) {
      const double hk = hidden[static_cast<std::size_t>(k)];
      const double g = dhidden[static_cast<std::size_t>(k)] * (1.0 - hk * hk);
      const std::size_t row = off.w1 + static_cast<std::size_t>(k) * static_cast<std::size_t>(d);
      for (int j = 0; j < d; ++j) dx[static_cast<std::size_t>(j)] += g * params[row + static_cast<std::size_t>(j)];
    }
  }
  return dx;
}

std::vector<double> predict_proba(const ModelSpec& spec, const ParamVector& params,
                                  std::span<const double> x) {
  require_params(spec, params, "predict_proba");
  std::vector<double> probs(static_cast<std::size_t>(spec.num_classes));
  std::vector<double> hidden(static_cast<std::size_t>(std::max(spec.hidden, 1)));
  sample_logits(spec, params, x, hidden, probs);
  softmax_inplace(probs);
  return probs;
}

LocalTrainResult local_train(const ModelSpec& spec, const ParamVector& start_params,
                             const Dataset& shard, const TrainConfig& cfg,
                             rng::Stream& rng) {
  require_params(spec, start_params, "local_train");
  if (cfg.batch < 1) throw std::invalid_argument("local_train: batch must be >= 1");
  if (cfg.local_epochs < 1) throw std::invalid_argument("local_train: local_epochs must be >= 1");
  if (shard.size() == 0) {
    return LocalTrainResult{ParamVector::zeros(spec.param_count()), true};
  }

  ParamVector params = start_params;
  std::vector<int> indices(shard.size());
  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    // Fresh identity permutation per epoch, so an E-epoch run and E chained
    // one-epoch runs visit batches in exactly the same order.
    std::iota(indices.begin(), indices.end(), 0);
    rng.shuffle(indices);
    for (std::size_t begin = 0; begin < indices.size(); begin += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(indices.size(), begin + static_cast<std::size_t>(cfg.batch));
      std::span<const int> batch(indices.data() + begin, end - begin);
      ParamVector grad = backward(spec, params, shard, batch);
      for (std::size_t i = 0; i < params.dim(); ++i) params[i] -= cfg.lr * grad[i];
    }
  }
  return LocalTrainResult{vecmath::sub(params, start_params), false};
}

double evaluate(const ModelSpec& spec, const ParamVector& params, const Dataset& test) {
  require_params(spec, params, "evaluate");
  if (test.size() == 0) throw std::invalid_argument("evaluate: empty test set");
  std::vector<double> logits(static_cast<std::size_t>(spec.num_classes));
  std::vector<double> hidden(static_cast<std::size_t>(std::max(spec.hidden, 1)));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    sample_logits(spec, params, test.row(i), hidden, logits);
    std::size_t best = 0;
    for (std::size_t k = 1; k < logits.size(); ++k) {
      if (logits[k] > logits[best]) best = k;  // strict > keeps the lowest id on ties
    }
    if (static_cast<int>(best) == test.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

ParamVector init_params(const ModelSpec& spec, rng::Stream rng) {
  std::vector<double> p(spec.param_count(), 0.0);
  const int d = spec.input_dim;
  const int c = spec.num_classes;
  if (spec.kind == ModelKind::logistic) {
    const double a = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t i = 0; i < static_cast<std::size_t>(c) * static_cast<std::size_t>(d); ++i) {
      p[i] = rng.uniform(-a, a);
    }
  } else {
    const MlpOffsets off(spec);
    const int h = spec.hidden;
    const double a1 = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t i = 0; i < static_cast<std::size_t>(h) * static_cast<std::size_t>(d); ++i) {
      p[off.w1 + i] = rng.uniform(-a1, a1);
    }
    const double a2 = 1.0 / std::sqrt(static_cast<double>(h));
    for (std::size_t i = 0; i < static_cast<std::size_t>(c) * static_cast<std::size_t>(h); ++i) {
      p[off.w2 + i] = rng.uniform(-a2, a2);
    }
  }
  return ParamVector(std::move(p));
}

Dataset synth_blobs(int num_classes, int per_class, int dim, double spread,
                    rng::Stream rng) {
  if (num_classes < 1) throw std::invalid_argument("synth_blobs: num_classes must be >= 1");
  if (per_class < 0) throw std::invalid_argument("synth_blobs: per_class must be >= 0");
  if (dim < 1) throw std::invalid_argument("synth_blobs: dim must be >= 1");
  if (spread < 0.0) throw std::invalid_argument("synth_blobs: spread must be >= 0");

  std::vector<double> centers(static_cast<std::size_t>(num_classes) * static_cast<std::size_t>(dim));
  for (double& v : centers) v = rng.uniform();

  std::vector<double> samples;
  std::vector<int> labels;
  samples.reserve(static_cast<std::size_t>(num_classes) * static_cast<std::size_t>(per_class) * static_cast<std::size_t>(dim));
  for (int c = 0; c < num_classes; ++c) {
    const std::size_t base = static_cast<std::size_t>(c) * static_cast<std::size_t>(dim);
    for (int s = 0; s < per_class; ++s) {
      for (int j = 0; j < dim; ++j) {
        const double v = centers[base + static_cast<std::size_t>(j)] + spread * rng.gaussian();
        samples.push_back(std::clamp(v, 0.0, 1.0));
      }
      labels.push_back(c);
    }
  }
  return make_dataset(std::move(samples), std::move(labels), num_classes, 1, dim);
}

Dataset with_shape(Dataset data, int height, int width) {
  if (static_cast<std::size_t>(height) * static_cast<std::size_t>(width) != data.dim()) {
    throw std::invalid_argument("with_shape: shape does not match sample dimension");
  }
  data.height = height;
  data.width = width;
  return data;
}

}  // namespace models
}  // namespace fedguard
