#pragma once

// The surrogate-face generator: x = G(y, z) with y an identity mixture over
// the M gallery identities and z a one-hot expression label.
//
// Layout (defaults):
//   y [M] -> linear(64) -> leaky         z [E] -> linear(16) -> leaky
//   concat(80) -> linear(32*8*8) -> batchnorm -> leaky -> reshape [32,8,8]
//   3 x { upsample x2 -> conv3x3 -> batchnorm -> leaky }  channels 16, 8, 8
//   conv3x3 -> 3 channels -> sigmoid                        => [3, 64, 64]

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deid/geom.hpp"
#include "deid/image.hpp"
#include "deid/nn.hpp"

namespace deid::gen {

class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Convex combination of gallery identities: non-negative weights summing to 1.
class IdentityVector {
 public:
  /// Throws InvalidArgument unless all weights >= 0 and |sum - 1| <= 1e-9.
  explicit IdentityVector(std::vector<double> weights);
  static IdentityVector one_hot(int size, int index);
  static IdentityVector uniform(int size, std::span<const int> indices);

  std::span<const double> weights() const noexcept { return w_; }
  int size() const noexcept { return static_cast<int>(w_.size()); }
  bool operator==(const IdentityVector&) const = default;

 private:
  std::vector<double> w_;
};

/// One-hot expression selector.
class AppearanceVector {
 public:
  AppearanceVector(int size, int label);
  int size() const noexcept { return size_; }
  int label() const noexcept { return label_; }
  std::vector<double> values() const;

 private:
  int size_;
  int label_;
};

struct GeneratorSpec {
  int identities = 16;
  int expressions = 4;
  int y_hidden = 64;
  int z_hidden = 16;
  int base_channels = 32;
  int base_size = 8;
  std::vector<int> block_channels{16, 8, 8};
  int out_channels = 3;
  double leaky_slope = 0.01;

  int out_size() const noexcept { return base_size << block_channels.size(); }
  /// Compact textual layer description stored in checkpoints.
  std::string describe() const;
  static GeneratorSpec parse(const std::string& description);
  bool operator==(const GeneratorSpec&) const = default;
};

/// Five canonical landmark positions in generated-image coordinates (left eye,
/// right eye, nose tip, left mouth corner, right mouth corner).
using LandmarkTemplate = std::array<geom::Point2, 5>;

class Generator {
 public:
  Generator(GeneratorSpec spec, std::uint64_t seed);
  Generator(Generator&&) = default;
  Generator& operator=(Generator&&) = default;

  const GeneratorSpec& spec() const noexcept { return spec_; }

  /// Training-mode forward. y: [N, M], z: [N, E]; returns [N, C, S, S].
  nn::Tensor forward(const nn::Tensor& y, const nn::Tensor& z);
  /// Backpropagates dL/doutput through the last forward(), accumulating grads.
  void backward(const nn::Tensor& grad_out);
  /// Inference-mode forward using running batch-norm statistics.
  nn::Tensor infer(const nn::Tensor& y, const nn::Tensor& z) const;

  std::vector<nn::Param*> params();
  std::vector<const nn::Param*> params() const;
  std::vector<std::vector<double>*> buffers();
  std::vector<const std::vector<double>*> buffers() const;
  std::size_t parameter_count() const;

  /// Batch-norm layers of the trunk, in forward order.
  std::vector<nn::BatchNorm*> batchnorms();

  const std::optional<LandmarkTemplate>& canonical_landmarks() const noexcept { return landmarks_; }
  void set_canonical_landmarks(const LandmarkTemplate& t) { landmarks_ = t; }

  /// Inference-mode MSE over the training set, recorded at the end of training.
  double final_loss() const noexcept { return final_loss_; }
  void set_final_loss(double v) noexcept { final_loss_ = v; }

 private:
  GeneratorSpec spec_;
  nn::Sequential y_branch_, z_branch_, trunk_;
  std::optional<LandmarkTemplate> landmarks_;
  double final_loss_ = 0.0;
};

/// Observer for the tensor that enters the identity branch.
using InputProbe = std::function<void(std::span<const double> identity_input)>;

/// Deterministic forward pass: returns an out_size x out_size RGB image.
/// Throws InvalidArgument when the vector lengths do not match the model.
img::Image generate(const Generator& model, const IdentityVector& y, const AppearanceVector& z,
                    const InputProbe& probe = {});

/// Mean over all samples of the squared difference.
double mse_loss(const img::Image& pred, const img::Image& target);

struct TrainingExample {
  int identity = 0;
  int expression = 0;
  img::Image target;  // out_size x out_size x 3
};

struct GradientSet {
  double loss = 0.0;
  std::vector<std::vector<double>> grads;  // aligned with Generator::params()
};

/// Exact gradients of the mean batch MSE with batch norm in training mode.
/// Leaves the model's parameter grads holding the same values.
GradientSet parameter_gradients(Generator& model, std::span<const TrainingExample> batch);

/// Packs examples into the generator's input/target tensors.
struct Batch {
  nn::Tensor y, z, target;
};
Batch make_batch(const GeneratorSpec& spec, std::span<const TrainingExample> examples);
nn::Tensor image_to_chw(const img::Image& img);
img::Image chw_to_image(const nn::Tensor& t, int index);

struct TrainConfig {
  int epochs = 300;
  int batch_size = 16;
  nn::AdamConfig adam{};
  std::uint64_t seed = 1;
};

struct TrainResult {
  Generator model;
  std::vector<double> loss_curve;  // mean training-mode loss per epoch
};

/// Adam training on shuffled minibatches. After the last epoch the batch-norm
/// running statistics are replaced by full-training-set statistics and the
/// inference-mode training MSE is stored as the model's final loss.
TrainResult train_generator(std::span<const TrainingExample> corpus, const GeneratorSpec& spec,
                            const TrainConfig& cfg);

/// Recomputes batch-norm statistics over the whole set and returns the
/// inference MSE on it.
double finalize_statistics(Generator& model, std::span<const TrainingExample> corpus);

/// Inference-mode mean MSE over a set of examples.
double evaluate_loss(const Generator& model, std::span<const TrainingExample> corpus);

void save_generator(const Generator& model, const std::filesystem::path& path);
Generator load_generator(const std::filesystem::path& path);
std::vector<unsigned char> serialize_generator(const Generator& model);
Generator deserialize_generator(std::vector<unsigned char> bytes);

}  // namespace deid::gen
