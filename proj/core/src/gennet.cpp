#include "deid/gennet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "deid/binio.hpp"

namespace deid::gen {

namespace {

constexpr char kMagic[9] = "DEIDGNET";
constexpr std::uint32_t kVersion = 1;

}  // namespace

// --- control vectors --------------------------------------------------------

IdentityVector::IdentityVector(std::vector<double> weights) : w_(std::move(weights)) {
  if (w_.empty()) throw InvalidArgument("identity vector: empty");
  double sum = 0.0;
  for (double v : w_) {
    if (!std::isfinite(v) || v < 0.0) throw InvalidArgument("identity vector: weights must be >= 0");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw InvalidArgument("identity vector: weights sum to " + std::to_string(sum) + ", not 1");
}

IdentityVector IdentityVector::one_hot(int size, int index) {
  if (index < 0 || index >= size) throw InvalidArgument("identity vector: index out of range");
  std::vector<double> w(size, 0.0);
  w[index] = 1.0;
  return IdentityVector(std::move(w));
}

IdentityVector IdentityVector::uniform(int size, std::span<const int> indices) {
  if (indices.empty()) throw InvalidArgument("identity vector: no identities selected");
  std::vector<double> w(size, 0.0);
  for (int i : indices) {
    if (i < 0 || i >= size) throw InvalidArgument("identity vector: index out of range");
    w[i] += 1.0 / static_cast<double>(indices.size());
  }
  return IdentityVector(std::move(w));
}

AppearanceVector::AppearanceVector(int size, int label) : size_(size), label_(label) {
  if (size < 1 || label < 0 || label >= size) throw InvalidArgument("appearance vector: label out of range");
}

std::vector<double> AppearanceVector::values() const {
  std::vector<double> v(size_, 0.0);
  v[label_] = 1.0;
  return v;
}

// --- spec -------------------------------------------------------------------

std::string GeneratorSpec::describe() const {
  std::ostringstream os;
  os << "M=" << identities << ";E=" << expressions << ";y=" << y_hidden << ";z=" << z_hidden
     << ";base=" << base_channels << "x" << base_size << ";blocks=";
  for (std::size_t i = 0; i < block_channels.size(); ++i) os << (i ? "," : "") << block_channels[i];
  os << ";out=" << out_channels << ";slope=" << leaky_slope;
  return os.str();
}

GeneratorSpec GeneratorSpec::parse(const std::string& description) {
  GeneratorSpec s;
  s.block_channels.clear();
  std::istringstream in(description);
  std::string field;
  auto to_int = [&](const std::string& v) {
    std::size_t used = 0;
    const int out = std::stoi(v, &used);
    if (used != v.size()) throw CheckpointError("generator spec: bad integer '" + v + "'");
    return out;
  };
  try {
    while (std::getline(in, field, ';')) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) throw CheckpointError("generator spec: malformed field '" + field + "'");
      const std::string key = field.substr(0, eq), val = field.substr(eq + 1);
      if (key == "M") {
        s.identities = to_int(val);
      } else if (key == "E") {
        s.expressions = to_int(val);
      } else if (key == "y") {
        s.y_hidden = to_int(val);
      } else if (key == "z") {
        s.z_hidden = to_int(val);
      } else if (key == "base") {
        const auto x = val.find('x');
        if (x == std::string::npos) throw CheckpointError("generator spec: bad base '" + val + "'");
        s.base_channels = to_int(val.substr(0, x));
        s.base_size = to_int(val.substr(x + 1));
      } else if (key == "blocks") {
        std::istringstream bs(val);
        std::string c;
        while (std::getline(bs, c, ',')) s.block_channels.push_back(to_int(c));
      } else if (key == "out") {
        s.out_channels = to_int(val);
      } else if (key == "slope") {
        s.leaky_slope = std::stod(val);
      } else {
        throw CheckpointError("generator spec: unknown key '" + key + "'");
      }
    }
  } catch (const std::logic_error& e) {
    throw CheckpointError(std::string("generator spec: ") + e.what());
  }
  return s;
}

// --- model ------------------------------------------------------------------

Generator::Generator(GeneratorSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  if (spec_.identities < 1 || spec_.expressions < 1 || spec_.block_channels.empty())
    throw InvalidArgument("generator: invalid spec " + spec_.describe());
  std::mt19937_64 rng(seed);
  const double slope = spec_.leaky_slope;

  y_branch_.add<nn::Linear>(spec_.identities, spec_.y_hidden, rng);
  y_branch_.add<nn::LeakyReLU>(slope);
  z_branch_.add<nn::Linear>(spec_.expressions, spec_.z_hidden, rng);
  z_branch_.add<nn::LeakyReLU>(slope);

  const int map = spec_.base_channels * spec_.base_size * spec_.base_size;
  trunk_.add<nn::Linear>(spec_.y_hidden + spec_.z_hidden, map, rng);
  trunk_.add<nn::BatchNorm>(map);
  trunk_.add<nn::LeakyReLU>(slope);
  trunk_.add<nn::Reshape>(std::vector<int>{spec_.base_channels, spec_.base_size, spec_.base_size});
  int channels = spec_.base_channels;
  for (int out : spec_.block_channels) {
    trunk_.add<nn::Upsample2x>();
    trunk_.add<nn::Conv2d>(channels, out, rng);
    trunk_.add<nn::BatchNorm>(out);
    trunk_.add<nn::LeakyReLU>(slope);
    channels = out;
  }
  trunk_.add<nn::Conv2d>(channels, spec_.out_channels, rng);
  trunk_.add<nn::Sigmoid>();
}

namespace {

nn::Tensor concat_features(const nn::Tensor& a, const nn::Tensor& b) {
  const int n = a.batch(), fa = a.dim(1), fb = b.dim(1);
  nn::Tensor out({n, fa + fb});
  for (int i = 0; i < n; ++i) {
    std::copy_n(&a.data[static_cast<std::size_t>(i) * fa], fa, &out.data[static_cast<std::size_t>(i) * (fa + fb)]);
    std::copy_n(&b.data[static_cast<std::size_t>(i) * fb], fb,
                &out.data[static_cast<std::size_t>(i) * (fa + fb) + fa]);
  }
  return out;
}

void check_inputs(const GeneratorSpec& spec, const nn::Tensor& y, const nn::Tensor& z) {
  if (y.shape.size() != 2 || y.dim(1) != spec.identities)
    throw InvalidArgument("generator: identity input must be [N, " + std::to_string(spec.identities) + "], got " +
                          nn::shape_string(y.shape));
  if (z.shape.size() != 2 || z.dim(1) != spec.expressions)
    throw InvalidArgument("generator: appearance input must be [N, " + std::to_string(spec.expressions) +
                          "], got " + nn::shape_string(z.shape));
  if (y.batch() != z.batch()) throw InvalidArgument("generator: batch sizes differ");
}

}  // namespace

nn::Tensor Generator::forward(const nn::Tensor& y, const nn::Tensor& z) {
  check_inputs(spec_, y, z);
  return trunk_.forward(concat_features(y_branch_.forward(y), z_branch_.forward(z)));
}

nn::Tensor Generator::infer(const nn::Tensor& y, const nn::Tensor& z) const {
  check_inputs(spec_, y, z);
  return trunk_.infer(concat_features(y_branch_.infer(y), z_branch_.infer(z)));
}

void Generator::backward(const nn::Tensor& grad_out) {
  const nn::Tensor g = trunk_.backward(grad_out);
  const int n = g.batch(), fy = spec_.y_hidden, fz = spec_.z_hidden;
  nn::Tensor gy({n, fy}), gz({n, fz});
  for (int i = 0; i < n; ++i) {
    const double* row = &g.data[static_cast<std::size_t>(i) * (fy + fz)];
    std::copy_n(row, fy, &gy.data[static_cast<std::size_t>(i) * fy]);
    std::copy_n(row + fy, fz, &gz.data[static_cast<std::size_t>(i) * fz]);
  }
  y_branch_.backward(gy);
  z_branch_.backward(gz);
}

std::vector<nn::Param*> Generator::params() {
  std::vector<nn::Param*> out = y_branch_.params();
  for (auto* p : z_branch_.params()) out.push_back(p);
  for (auto* p : trunk_.params()) out.push_back(p);
  return out;
}

std::vector<const nn::Param*> Generator::params() const {
  std::vector<const nn::Param*> out = y_branch_.params();
  for (auto* p : z_branch_.params()) out.push_back(p);
  for (auto* p : trunk_.params()) out.push_back(p);
  return out;
}

std::vector<std::vector<double>*> Generator::buffers() { return trunk_.buffers(); }

std::vector<const std::vector<double>*> Generator::buffers() const { return trunk_.buffers(); }

std::size_t Generator::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : params()) n += p->value.size();
  return n;
}

std::vector<nn::BatchNorm*> Generator::batchnorms() {
  std::vector<nn::BatchNorm*> out;
  for (std::size_t i = 0; i < trunk_.size(); ++i)
    if (auto* bn = dynamic_cast<nn::BatchNorm*>(&trunk_.layer(i))) out.push_back(bn);
  return out;
}

// --- image <-> tensor -------------------------------------------------------

nn::Tensor image_to_chw(const img::Image& im) {
  const int c = im.channels(), h = im.height(), w = im.width();
  nn::Tensor t({1, c, h, w});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) t.data[(static_cast<std::size_t>(ch) * h + y) * w + x] = im.at(x, y, ch);
  return t;
}

img::Image chw_to_image(const nn::Tensor& t, int index) {
  const int c = t.dim(1), h = t.dim(2), w = t.dim(3);
  img::Image im(w, h, c);
  const std::size_t base = static_cast<std::size_t>(index) * c * h * w;
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        im.at(x, y, ch) = std::clamp(t.data[base + (static_cast<std::size_t>(ch) * h + y) * w + x], 0.0, 1.0);
  return im;
}

img::Image generate(const Generator& model, const IdentityVector& y, const AppearanceVector& z,
                    const InputProbe& probe) {
  const auto& spec = model.spec();
  if (y.size() != spec.identities)
    throw InvalidArgument("generate: identity vector has length " + std::to_string(y.size()) + ", model expects " +
                          std::to_string(spec.identities));
  if (z.size() != spec.expressions)
    throw InvalidArgument("generate: appearance vector has length " + std::to_string(z.size()) +
                          ", model expects " + std::to_string(spec.expressions));
  nn::Tensor yt({1, spec.identities}, std::vector<double>(y.weights().begin(), y.weights().end()));
  nn::Tensor zt({1, spec.expressions}, z.values());
  if (probe) probe(yt.data);
  return chw_to_image(model.infer(yt, zt), 0);
}

double mse_loss(const img::Image& pred, const img::Image& target) {
  if (!pred.same_shape(target)) throw InvalidArgument("mse_loss: image shapes differ");
  const auto a = pred.data();
  const auto b = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

// --- training ---------------------------------------------------------------

Batch make_batch(const GeneratorSpec& spec, std::span<const TrainingExample> examples) {
  const int n = static_cast<int>(examples.size());
  const int s = spec.out_size(), c = spec.out_channels;
  Batch b{nn::Tensor({n, spec.identities}), nn::Tensor({n, spec.expressions}), nn::Tensor({n, c, s, s})};
  const std::size_t item = static_cast<std::size_t>(c) * s * s;
  for (int i = 0; i < n; ++i) {
    const auto& ex = examples[i];
    if (ex.identity < 0 || ex.identity >= spec.identities)
      throw InvalidArgument("training example: identity index out of range");
    if (ex.expression < 0 || ex.expression >= spec.expressions)
      throw InvalidArgument("training example: expression index out of range");
    if (ex.target.width() != s || ex.target.height() != s || ex.target.channels() != c)
      throw InvalidArgument("training example: target must be " + std::to_string(s) + "x" + std::to_string(s) +
                            "x" + std::to_string(c));
    b.y.data[static_cast<std::size_t>(i) * spec.identities + ex.identity] = 1.0;
    b.z.data[static_cast<std::size_t>(i) * spec.expressions + ex.expression] = 1.0;
    const nn::Tensor t = image_to_chw(ex.target);
    std::copy(t.data.begin(), t.data.end(), b.target.data.begin() + static_cast<std::ptrdiff_t>(i * item));
  }
  return b;
}

GradientSet parameter_gradients(Generator& model, std::span<const TrainingExample> batch) {
  if (batch.empty()) throw InvalidArgument("parameter_gradients: empty batch");
  const Batch b = make_batch(model.spec(), batch);
  auto params = model.params();
  for (auto* p : params) p->zero_grad();
  const nn::Tensor out = model.forward(b.y, b.z);
  const auto lg = nn::mse(out, b.target);
  model.backward(lg.grad);
  GradientSet gs;
  gs.loss = lg.loss;
  for (auto* p : params) gs.grads.push_back(p->grad);
  return gs;
}

double finalize_statistics(Generator& model, std::span<const TrainingExample> corpus) {
  const Batch all = make_batch(model.spec(), corpus);
  model.forward(all.y, all.z);
  for (auto* bn : model.batchnorms()) bn->adopt_batch_statistics();
  return nn::mse(model.infer(all.y, all.z), all.target).loss;
}

double evaluate_loss(const Generator& model, std::span<const TrainingExample> corpus) {
  if (corpus.empty()) throw InvalidArgument("evaluate_loss: empty corpus");
  const Batch all = make_batch(model.spec(), corpus);
  return nn::mse(model.infer(all.y, all.z), all.target).loss;
}

TrainResult train_generator(std::span<const TrainingExample> corpus, const GeneratorSpec& spec,
                            const TrainConfig& cfg) {
  if (corpus.empty()) throw InvalidArgument("train_generator: empty corpus");
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw InvalidArgument("train_generator: epochs and batch size must be >= 1");

  std::mt19937_64 rng(cfg.seed);
  TrainResult result{Generator(spec, rng()), {}};
  Generator& model = result.model;
  nn::Adam opt(model.params(), cfg.adam);

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<TrainingExample> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(corpus[order[i]]);
      const Batch b = make_batch(spec, batch);
      opt.zero_grad();
      const nn::Tensor out = model.forward(b.y, b.z);
      const auto lg = nn::mse(out, b.target);
      model.backward(lg.grad);
      opt.step();
      epoch_loss += lg.loss * static_cast<double>(end - start);
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(corpus.size()));
  }
  model.set_final_loss(finalize_statistics(model, corpus));
  return result;
}

// --- checkpoint -------------------------------------------------------------

std::vector<unsigned char> serialize_generator(const Generator& model) {
  binio::Writer w;
  w.magic(kMagic);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(model.spec().identities));
  w.u32(static_cast<std::uint32_t>(model.spec().expressions));
  w.str(model.spec().describe());
  const auto& lm = model.canonical_landmarks();
  w.u32(lm ? 1 : 0);
  for (int i = 0; i < 5; ++i) {
    w.f64(lm ? (*lm)[i].x : 0.0);
    w.f64(lm ? (*lm)[i].y : 0.0);
  }
  w.f64(model.final_loss());
  const auto params = model.params();
  w.u64(model.parameter_count());
  for (const auto* p : params) w.f64s(p->value);
  const auto buffers = model.buffers();
  std::uint64_t nbuf = 0;
  for (const auto* b : buffers) nbuf += b->size();
  w.u64(nbuf);
  for (const auto* b : buffers) w.f64s(*b);
  return w.buffer();
}

Generator deserialize_generator(std::vector<unsigned char> bytes) {
  try {
    binio::Reader r(std::move(bytes));
    r.expect_magic(kMagic);
    const std::uint32_t version = r.u32();
    if (version != kVersion)
      throw CheckpointError("generator checkpoint: unsupported version " + std::to_string(version));
    const std::uint32_t m = r.u32();
    const std::uint32_t e = r.u32();
    const GeneratorSpec spec = GeneratorSpec::parse(r.str(4096));
    if (static_cast<std::uint32_t>(spec.identities) != m || static_cast<std::uint32_t>(spec.expressions) != e)
      throw CheckpointError("generator checkpoint: header M/E disagree with layer spec");
    Generator model(spec, 0);
    const bool has_lm = r.u32() != 0;
    LandmarkTemplate lm{};
    for (auto& p : lm) {
      p.x = r.f64();
      p.y = r.f64();
    }
    if (has_lm) model.set_canonical_landmarks(lm);
    model.set_final_loss(r.f64());
    const std::uint64_t count = r.u64();
    if (count != model.parameter_count())
      throw CheckpointError("generator checkpoint: parameter count " + std::to_string(count) +
                            " does not match layer spec (" + std::to_string(model.parameter_count()) + ")");
    for (auto* p : model.params()) r.f64s(p->value);
    auto buffers = model.buffers();
    std::uint64_t nbuf = 0;
    for (const auto* b : buffers) nbuf += b->size();
    if (r.u64() != nbuf) throw CheckpointError("generator checkpoint: running-statistics size mismatch");
    for (auto* b : buffers) r.f64s(*b);
    if (!r.at_end()) throw CheckpointError("generator checkpoint: trailing bytes after payload");
    return model;
  } catch (const DecodeError& err) {
    throw CheckpointError(std::string("generator checkpoint: ") + err.what());
  } catch (const InvalidArgument& err) {
    throw CheckpointError(std::string("generator checkpoint: ") + err.what());
  }
}

void save_generator(const Generator& model, const std::filesystem::path& path) {
  binio::Writer w;
  w.bytes(serialize_generator(model));
  w.save(path);
}

Generator load_generator(const std::filesystem::path& path) {
  return deserialize_generator(binio::read_file(path));
}

}  // namespace deid::gen
