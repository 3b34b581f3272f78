#include "deid/embednet.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "deid/binio.hpp"

namespace deid::embed {

namespace {

constexpr char kEncMagic[9] = "DEIDENC1";
constexpr char kDbMagic[9] = "DEIDFDB1";
constexpr std::uint32_t kVersion = 1;

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

double Embedding::norm() const { return std::sqrt(dot(values, values)); }

double cosine_similarity(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim())
    throw InvalidArgument("cosine_similarity: dimensions differ (" + std::to_string(a.dim()) + " vs " +
                          std::to_string(b.dim()) + ")");
  if (a.dim() == 0) throw InvalidArgument("cosine_similarity: empty embedding");
  const double na = a.norm(), nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw InvalidArgument("cosine_similarity: zero vector");
  return std::clamp(dot(a.values, b.values) / (na * nb), -1.0, 1.0);
}

// --- spec -------------------------------------------------------------------

std::string EncoderSpec::describe() const {
  std::ostringstream os;
  os << "in=" << input_size << ";blocks=";
  for (std::size_t i = 0; i < channels.size(); ++i) os << (i ? "," : "") << channels[i];
  os << ";D=" << embedding_dim << ";classes=" << classes << ";slope=" << leaky_slope;
  return os.str();
}

EncoderSpec EncoderSpec::parse(const std::string& description) {
  EncoderSpec s;
  s.channels.clear();
  std::istringstream in(description);
  std::string field;
  auto to_int = [](const std::string& v) {
    std::size_t used = 0;
    const int out = std::stoi(v, &used);
    if (used != v.size()) throw gen::CheckpointError("encoder spec: bad integer '" + v + "'");
    return out;
  };
  try {
    while (std::getline(in, field, ';')) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) throw gen::CheckpointError("encoder spec: malformed field '" + field + "'");
      const std::string key = field.substr(0, eq), val = field.substr(eq + 1);
      if (key == "in") {
        s.input_size = to_int(val);
      } else if (key == "blocks") {
        std::istringstream bs(val);
        std::string c;
        while (std::getline(bs, c, ',')) s.channels.push_back(to_int(c));
      } else if (key == "D") {
        s.embedding_dim = to_int(val);
      } else if (key == "classes") {
        s.classes = to_int(val);
      } else if (key == "slope") {
        s.leaky_slope = std::stod(val);
      } else {
        throw gen::CheckpointError("encoder spec: unknown key '" + key + "'");
      }
    }
  } catch (const std::logic_error& e) {
    throw gen::CheckpointError(std::string("encoder spec: ") + e.what());
  }
  return s;
}

// --- model ------------------------------------------------------------------

Encoder::Encoder(EncoderSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  const int blocks = static_cast<int>(spec_.channels.size());
  if (blocks < 1 || spec_.embedding_dim < 1 || spec_.classes < 2 || spec_.input_size < (1 << blocks) ||
      spec_.input_size % (1 << blocks) != 0)
    throw InvalidArgument("encoder: invalid spec " + spec_.describe());
  std::mt19937_64 rng(seed);
  int ch = 3, size = spec_.input_size;
  for (int out : spec_.channels) {
    features_.add<nn::Conv2d>(ch, out, rng);
    features_.add<nn::LeakyReLU>(spec_.leaky_slope);
    features_.add<nn::AvgPool2>();
    ch = out;
    size /= 2;
  }
  const int flat = ch * size * size;
  features_.add<nn::Reshape>(std::vector<int>{flat});
  features_.add<nn::Linear>(flat, spec_.embedding_dim, rng);
  head_.add<nn::LeakyReLU>(spec_.leaky_slope);
  head_.add<nn::Linear>(spec_.embedding_dim, spec_.classes, rng);
}

nn::Tensor Encoder::forward_logits(const nn::Tensor& x) { return head_.forward(features_.forward(x)); }

void Encoder::backward(const nn::Tensor& grad_logits) { features_.backward(head_.backward(grad_logits)); }

nn::Tensor Encoder::infer_embedding(const nn::Tensor& x) const { return features_.infer(x); }

nn::Tensor Encoder::infer_logits(const nn::Tensor& x) const { return head_.infer(features_.infer(x)); }

std::vector<nn::Param*> Encoder::params() {
  auto out = features_.params();
  for (auto* p : head_.params()) out.push_back(p);
  return out;
}

std::vector<const nn::Param*> Encoder::params() const {
  auto out = features_.params();
  for (auto* p : head_.params()) out.push_back(p);
  return out;
}

std::size_t Encoder::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : params()) n += p->value.size();
  return n;
}

nn::Tensor prepare_input(const EncoderSpec& spec, const img::Image& crop) {
  if (crop.channels() != 3) throw InvalidArgument("encoder input must be RGB");
  const int s = spec.input_size;
  nn::Tensor t = crop.width() == s && crop.height() == s ? gen::image_to_chw(crop)
                                                         : gen::image_to_chw(img::resize_bilinear(crop, s, s));
  // One mean and deviation over all channels: brightness and contrast are
  // removed, relative colour is kept.
  const double n = static_cast<double>(t.data.size());
  const double mean = std::accumulate(t.data.begin(), t.data.end(), 0.0) / n;
  double var = 0.0;
  for (double v : t.data) var += (v - mean) * (v - mean);
  const double inv = 1.0 / std::sqrt(var / n + 1e-6);
  for (double& v : t.data) v = (v - mean) * inv;
  return t;
}

namespace {

nn::Tensor stack_inputs(const EncoderSpec& spec, std::span<const nn::Tensor> items) {
  const int s = spec.input_size;
  nn::Tensor out({static_cast<int>(items.size()), 3, s, s});
  const std::size_t item = static_cast<std::size_t>(3) * s * s;
  for (std::size_t i = 0; i < items.size(); ++i)
    std::copy(items[i].data.begin(), items[i].data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(i * item));
  return out;
}

int argmax_row(const nn::Tensor& logits, int row) {
  const int c = logits.dim(1);
  const double* r = &logits.data[static_cast<std::size_t>(row) * c];
  return static_cast<int>(std::max_element(r, r + c) - r);
}

}  // namespace

EncoderTrainResult train_encoder(std::span<const LabeledImage> corpus, const EncoderSpec& spec,
                                 const EncoderTrainConfig& cfg) {
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw InvalidArgument("train_encoder: epochs and batch size must be >= 1");
  std::map<int, int> per_label;
  for (const auto& s : corpus) {
    if (s.label < 0 || s.label >= spec.classes)
      throw InvalidArgument("train_encoder: label " + std::to_string(s.label) + " outside [0, " +
                            std::to_string(spec.classes) + ")");
    ++per_label[s.label];
  }
  if (per_label.size() < 2) throw InvalidArgument("train_encoder: need at least 2 identities");
  for (const auto& [label, n] : per_label)
    if (n < 2) throw InvalidArgument("train_encoder: identity " + std::to_string(label) + " has fewer than 2 images");

  std::vector<nn::Tensor> inputs;
  inputs.reserve(corpus.size());
  for (const auto& s : corpus) inputs.push_back(prepare_input(spec, s.image));

  std::mt19937_64 rng(cfg.seed);
  EncoderTrainResult result{Encoder(spec, rng()), {}, {}, 0.0};
  Encoder& model = result.model;
  nn::Adam opt(model.params(), cfg.adam);

  const nn::Tensor all = stack_inputs(spec, inputs);
  auto accuracy = [&] {
    const nn::Tensor logits = model.infer_logits(all);
    int correct = 0;
    for (std::size_t i = 0; i < corpus.size(); ++i) correct += argmax_row(logits, static_cast<int>(i)) == corpus[i].label;
    return static_cast<double>(correct) / static_cast<double>(corpus.size());
  };

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<nn::Tensor> batch;
  std::vector<int> labels;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      labels.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(inputs[order[i]]);
        labels.push_back(corpus[order[i]].label);
      }
      opt.zero_grad();
      const nn::Tensor logits = model.forward_logits(stack_inputs(spec, batch));
      const auto lg = nn::softmax_cross_entropy(logits, labels);
      model.backward(lg.grad);
      opt.step();
      epoch_loss += lg.loss * static_cast<double>(end - start);
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(corpus.size()));
    result.accuracy_curve.push_back(accuracy());
  }
  result.final_accuracy = result.accuracy_curve.back();
  return result;
}

Embedding extract_embedding(const Encoder& model, const img::Image& image) {
  const nn::Tensor out = model.infer_embedding(prepare_input(model.spec(), image));
  return Embedding{out.data};
}

// --- encoder checkpoint -----------------------------------------------------

void save_encoder(const Encoder& model, const std::filesystem::path& path) {
  binio::Writer w;
  w.magic(kEncMagic);
  w.u32(kVersion);
  w.str(model.spec().describe());
  w.u32(static_cast<std::uint32_t>(model.labels().size()));
  for (const auto& l : model.labels()) w.str(l);
  w.u64(model.parameter_count());
  for (const auto* p : model.params()) w.f64s(p->value);
  w.save(path);
}

Encoder load_encoder(const std::filesystem::path& path) {
  try {
    auto r = binio::Reader::from_file(path);
    r.expect_magic(kEncMagic);
    const std::uint32_t version = r.u32();
    if (version != kVersion) throw gen::CheckpointError("encoder checkpoint: unsupported version " + std::to_string(version));
    Encoder model(EncoderSpec::parse(r.str(4096)), 0);
    const std::uint32_t nlabels = r.u32();
    if (nlabels > static_cast<std::uint32_t>(model.spec().classes))
      throw gen::CheckpointError("encoder checkpoint: more labels than classes");
    std::vector<std::string> labels;
    for (std::uint32_t i = 0; i < nlabels; ++i) labels.push_back(r.str(4096));
    model.set_labels(std::move(labels));
    if (r.u64() != model.parameter_count())
      throw gen::CheckpointError("encoder checkpoint: parameter count does not match layer spec");
    for (auto* p : model.params()) r.f64s(p->value);
    if (!r.at_end()) throw gen::CheckpointError("encoder checkpoint: trailing bytes after payload");
    return model;
  } catch (const DecodeError& err) {
    throw gen::CheckpointError(std::string("encoder checkpoint ") + path.string() + ": " + err.what());
  } catch (const InvalidArgument& err) {
    throw gen::CheckpointError(std::string("encoder checkpoint ") + path.string() + ": " + err.what());
  }
}

// --- gallery ----------------------------------------------------------------

FeatDB::FeatDB(std::vector<GalleryEntry> entries) : entries_(std::move(entries)) {
  if (entries_.empty()) throw GalleryError("gallery: no identities");
  std::set<std::string> seen;
  const int d = entries_.front().tmpl.dim();
  for (const auto& e : entries_) {
    if (!seen.insert(e.id).second) throw GalleryError("gallery: duplicate identity '" + e.id + "'");
    if (e.tmpl.dim() != d || d == 0) throw GalleryError("gallery: template dimensions differ for '" + e.id + "'");
    for (double v : e.tmpl.values)
      if (!std::isfinite(v)) throw GalleryError("gallery: non-finite template for '" + e.id + "'");
  }
}

int FeatDB::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].id == id) return static_cast<int>(i);
  return -1;
}

std::vector<unsigned char> FeatDB::serialize() const {
  binio::Writer w;
  w.magic(kDbMagic);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(size()));
  w.u32(static_cast<std::uint32_t>(dim()));
  for (const auto& e : entries_) {
    w.str(e.id);
    w.f64s(e.tmpl.values);
  }
  return w.buffer();
}

FeatDB FeatDB::deserialize(std::vector<unsigned char> bytes) {
  try {
    binio::Reader r(std::move(bytes));
    r.expect_magic(kDbMagic);
    const std::uint32_t version = r.u32();
    if (version != kVersion) throw GalleryError("gallery: unsupported version " + std::to_string(version));
    const std::uint32_t m = r.u32();
    const std::uint32_t d = r.u32();
    if (m == 0 || d == 0 || d > (1u << 20)) throw GalleryError("gallery: bad header (M=" + std::to_string(m) + ", D=" + std::to_string(d) + ")");
    std::vector<GalleryEntry> entries;
    for (std::uint32_t i = 0; i < m; ++i) {
      GalleryEntry e;
      e.id = r.str(4096);
      e.tmpl.values.resize(d);
      r.f64s(e.tmpl.values);
      entries.push_back(std::move(e));
    }
    if (!r.at_end()) throw GalleryError("gallery: trailing bytes after payload");
    return FeatDB(std::move(entries));
  } catch (const DecodeError& err) {
    throw GalleryError(std::string("gallery: ") + err.what());
  }
}

void FeatDB::save(const std::filesystem::path& path) const {
  binio::Writer w;
  w.bytes(serialize());
  w.save(path);
}

FeatDB FeatDB::load(const std::filesystem::path& path) { return deserialize(binio::read_file(path)); }

FeatDB build_gallery(const Encoder& model, std::span<const IdentityImages> groups) {
  std::vector<GalleryEntry> entries;
  for (const auto& g : groups) {
    if (g.images.empty()) throw GalleryError("build_gallery: identity '" + g.id + "' has no images");
    std::vector<double> sum(model.spec().embedding_dim, 0.0);
    for (const auto& im : g.images) {
      const Embedding e = extract_embedding(model, im);
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += e.values[i];
    }
    if (g.images.size() > 1)
      for (double& v : sum) v /= static_cast<double>(g.images.size());
    entries.push_back({g.id, Embedding{std::move(sum)}});
  }
  return FeatDB(std::move(entries));
}

MatchResult match_k_closest(const FeatDB& db, const Embedding& probe, int k) {
  if (k < 1 || k > db.size())
    throw InvalidArgument("match_k_closest: k=" + std::to_string(k) + " outside [1, " + std::to_string(db.size()) + "]");
  MatchResult all;
  all.reserve(db.size());
  for (int i = 0; i < db.size(); ++i) all.push_back({db.at(i).id, i, cosine_similarity(probe, db.at(i).tmpl)});
  std::sort(all.begin(), all.end(), [](const Match& a, const Match& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.id < b.id;
  });
  all.resize(k);
  return all;
}

gen::IdentityVector identities_to_y(const MatchResult& match, int gallery_size, Weighting mode) {
  if (match.empty()) throw InvalidArgument("identities_to_y: empty match");
  std::vector<int> idx;
  for (const auto& m : match) idx.push_back(m.index);
  if (mode == Weighting::similarity) {
    double total = 0.0;
    for (const auto& m : match) total += std::max(m.similarity, 0.0);
    if (total > 0.0) {
      std::vector<double> w(gallery_size, 0.0);
      for (const auto& m : match) {
        if (m.index < 0 || m.index >= gallery_size) throw InvalidArgument("identities_to_y: index out of range");
        w[m.index] += std::max(m.similarity, 0.0) / total;
      }
      // Renormalize so rounding never trips the sum check.
      const double s = std::accumulate(w.begin(), w.end(), 0.0);
      for (double& v : w) v /= s;
      return gen::IdentityVector(std::move(w));
    }
  }
  return gen::IdentityVector::uniform(gallery_size, idx);
}

}  // namespace deid::embed
