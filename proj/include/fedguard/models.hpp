#pragma once

#include <span>
#include <string>
#include <vector>

#include "fedguard/rng.hpp"
#include "fedguard/vecmath.hpp"

namespace fedguard {

// Flattened supervised dataset. Pixels live in [0, 1]; `height`/`width`
// record the image shape (height 1 for plain feature vectors).
struct Dataset {
  std::vector<double> samples;  // row-major, size() x dim()
  std::vector<int> labels;
  int num_classes = 0;
  int height = 0;
  int width = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(samples.data() + i * dim(), dim());
  }
};

// Validating constructor; empty datasets are allowed (they error downstream
// where data is actually required).
Dataset make_dataset(std::vector<double> samples, std::vector<int> labels,
                     int num_classes, int height, int width);

enum class ModelKind { logistic, mlp };

struct ModelSpec {
  ModelKind kind = ModelKind::logistic;
  int input_dim = 0;
  int hidden = 32;  // mlp only
  int num_classes = 0;

  std::size_t param_count() const noexcept {
    const std::size_t d = static_cast<std::size_t>(input_dim);
    const std::size_t h = static_cast<std::size_t>(hidden);
    const std::size_t c = static_cast<std::size_t>(num_classes);
    if (kind == ModelKind::logistic) return (d + 1) * c;
    return (d + 1) * h + (h + 1) * c;
  }
};

struct TrainConfig {
  double lr = 0.05;
  int batch = 32;
  int local_epochs = 1;
};

namespace models {

struct ForwardResult {
  double loss = 0.0;
  std::vector<double> logits;  // batch x num_classes, row-major
};

// Mean softmax cross-entropy over the given sample indices.
ForwardResult forward_loss(const ModelSpec& spec, const ParamVector& params,
                           const Dataset& data, std::span<const int> batch);

// Exact analytic gradient of forward_loss.
ParamVector backward(const ModelSpec& spec, const ParamVector& params,
                     const Dataset& data, std::span<const int> batch);

// Gradient of -log softmax(target | x) with respect to the input x, through
// frozen params.
std::vector<double> input_gradient(const ModelSpec& spec, const ParamVector& params,
                                   std::span<const double> x, int target);

std::vector<double> predict_proba(const ModelSpec& spec, const ParamVector& params,
                                  std::span<const double> x);

struct LocalTrainResult {
  ParamVector delta;
  bool empty_shard = false;
};

// Mini-batch SGD over a seeded shuffle; returns end params minus start
// params. The stream is advanced in place so chained calls continue it,
// making local_epochs = 2k equal two chained k-epoch calls bit for bit.
LocalTrainResult local_train(const ModelSpec& spec, const ParamVector& start_params,
                             const Dataset& shard, const TrainConfig& cfg,
                             rng::Stream& rng);

// Argmax-logit accuracy; prediction ties resolve to the lowest class id.
double evaluate(const ModelSpec& spec, const ParamVector& params, const Dataset& test);

// Per-layer uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
ParamVector init_params(const ModelSpec& spec, rng::Stream rng);

// Big-endian IDX image/label pair; pixels are scaled by 1/255.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Gaussian blobs around seeded uniform class centers, clamped to [0, 1].
// Samples are laid out class-major.
Dataset synth_blobs(int num_classes, int per_class, int dim, double spread,
                    rng::Stream rng);

// Reinterprets a dataset's rows as height x width images.
Dataset with_shape(Dataset data, int height, int width);

}  // namespace models
}  // namespace fedguard
