#pragma once

// Identity embeddings and the enrolled gallery used for k-closest matching.
//
// The encoder is a small convolutional identity classifier; the embedding is
// the output of its penultimate fully-connected stage:
//   [3,S,S] -> 3 x {conv3x3 -> leaky -> avgpool2} (8,16,32 ch) -> flatten
//             -> linear(D)  == embedding
//             -> leaky -> linear(classes) -> softmax (training only)

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "deid/gennet.hpp"
#include "deid/image.hpp"
#include "deid/nn.hpp"

namespace deid::embed {

class GalleryError : public Error {
 public:
  using Error::Error;
};

struct Embedding {
  std::vector<double> values;

  int dim() const noexcept { return static_cast<int>(values.size()); }
  double norm() const;
  bool operator==(const Embedding&) const = default;
};

/// dot(a,b) / (|a| |b|), clamped to [-1,1]. Throws InvalidArgument for a zero
/// vector or mismatched dimensions.
double cosine_similarity(const Embedding& a, const Embedding& b);

struct EncoderSpec {
  int input_size = 64;
  std::vector<int> channels{8, 16, 32};
  int embedding_dim = 64;
  int classes = 16;
  double leaky_slope = 0.01;

  std::string describe() const;
  static EncoderSpec parse(const std::string& description);
  bool operator==(const EncoderSpec&) const = default;
};

class Encoder {
 public:
  Encoder(EncoderSpec spec, std::uint64_t seed);
  Encoder(Encoder&&) = default;
  Encoder& operator=(Encoder&&) = default;

  const EncoderSpec& spec() const noexcept { return spec_; }

  /// Training-mode forward through the classifier head; x is [N,3,S,S].
  nn::Tensor forward_logits(const nn::Tensor& x);
  void backward(const nn::Tensor& grad_logits);
  /// Inference-mode embeddings, [N, D].
  nn::Tensor infer_embedding(const nn::Tensor& x) const;
  nn::Tensor infer_logits(const nn::Tensor& x) const;

  std::vector<nn::Param*> params();
  std::vector<const nn::Param*> params() const;
  std::size_t parameter_count() const;

  /// Class index -> identity label used during training.
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  void set_labels(std::vector<std::string> labels) { labels_ = std::move(labels); }

 private:
  EncoderSpec spec_;
  nn::Sequential features_, head_;
  std::vector<std::string> labels_;
};

struct LabeledImage {
  img::Image image;
  int label = 0;
};

struct EncoderTrainConfig {
  int epochs = 40;
  int batch_size = 16;
  nn::AdamConfig adam{};
  std::uint64_t seed = 7;
};

struct EncoderTrainResult {
  Encoder model;
  std::vector<double> loss_curve;      // per epoch
  std::vector<double> accuracy_curve;  // training-set accuracy after each epoch
  double final_accuracy = 0.0;
};

/// Resizes a crop to the encoder input and converts it to a [1,3,S,S] tensor
/// standardized to zero mean and unit variance.
nn::Tensor prepare_input(const EncoderSpec& spec, const img::Image& crop);

/// Softmax classification training. Requires >= 2 classes with >= 2 images
/// each; labels must be 0..classes-1.
EncoderTrainResult train_encoder(std::span<const LabeledImage> corpus, const EncoderSpec& spec,
                                 const EncoderTrainConfig& cfg);

/// Bilinear resize to the encoder input, then the inference path to the
/// embedding layer.
Embedding extract_embedding(const Encoder& model, const img::Image& image);

void save_encoder(const Encoder& model, const std::filesystem::path& path);
Encoder load_encoder(const std::filesystem::path& path);

// --- gallery ----------------------------------------------------------------

struct GalleryEntry {
  std::string id;
  Embedding tmpl;
};

/// Ordered (id, template) list. Ids are unique and all templates share one
/// dimension. Entry order defines the identity-vector index of each id.
class FeatDB {
 public:
  FeatDB() = default;
  explicit FeatDB(std::vector<GalleryEntry> entries);

  int size() const noexcept { return static_cast<int>(entries_.size()); }
  int dim() const noexcept { return entries_.empty() ? 0 : entries_.front().tmpl.dim(); }
  const std::vector<GalleryEntry>& entries() const noexcept { return entries_; }
  const GalleryEntry& at(int i) const { return entries_.at(i); }
  /// Position of `id`, or -1.
  int index_of(const std::string& id) const;

  void save(const std::filesystem::path& path) const;
  static FeatDB load(const std::filesystem::path& path);
  std::vector<unsigned char> serialize() const;
  static FeatDB deserialize(std::vector<unsigned char> bytes);

 private:
  std::vector<GalleryEntry> entries_;
};

struct IdentityImages {
  std::string id;
  std::vector<img::Image> images;
};

/// Template = arithmetic mean of the embeddings of each identity's images.
FeatDB build_gallery(const Encoder& model, std::span<const IdentityImages> groups);

struct Match {
  std::string id;
  int index = 0;  // position in the gallery
  double similarity = 0.0;
  bool operator==(const Match&) const = default;
};

/// Sorted by similarity descending, ties by ascending id.
using MatchResult = std::vector<Match>;

/// Top-k gallery entries by cosine similarity. Throws InvalidArgument unless
/// 1 <= k <= M.
MatchResult match_k_closest(const FeatDB& db, const Embedding& probe, int k);

enum class Weighting { uniform, similarity };

/// Uniform: 1/k on each selected identity. Similarity: weights proportional to
/// max(similarity, 0); falls back to uniform when every similarity is <= 0.
gen::IdentityVector identities_to_y(const MatchResult& match, int gallery_size, Weighting mode);

}  // namespace deid::embed
