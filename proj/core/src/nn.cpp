#include "deid/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace deid::nn {

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw InvalidArgument("tensor: negative dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_string(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(std::vector<int> s, double fill) : shape(std::move(s)), data(shape_numel(shape), fill) {}

Tensor::Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (shape_numel(shape) != data.size())
    throw InvalidArgument("tensor: shape " + shape_string(shape) + " does not match data length " +
                          std::to_string(data.size()));
}

namespace {

void init_uniform(Param& p, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& v : p.value) v = u(rng);
}

void require_rank(const Tensor& x, std::size_t rank, const char* who) {
  if (x.shape.size() != rank)
    throw InvalidArgument(std::string(who) + ": expected rank " + std::to_string(rank) + " input, got " +
                          shape_string(x.shape));
}

}  // namespace

// --- Linear ---------------------------------------------------------------

Linear::Linear(int in, int out, std::mt19937_64& rng)
    : in_(in), out_(out), weight_("weight", static_cast<std::size_t>(in) * out), bias_("bias", out) {
  if (in < 1 || out < 1) throw InvalidArgument("linear: sizes must be >= 1");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  init_uniform(weight_, bound, rng);
  init_uniform(bias_, bound, rng);
}

Tensor Linear::infer(const Tensor& x) const {
  require_rank(x, 2, "linear");
  if (x.dim(1) != in_) throw InvalidArgument("linear: expected " + std::to_string(in_) + " features");
  const int n = x.batch();
  Tensor out({n, out_});
  for (int b = 0; b < n; ++b) {
    const double* xi = &x.data[static_cast<std::size_t>(b) * in_];
    double* yo = &out.data[static_cast<std::size_t>(b) * out_];
    for (int o = 0; o < out_; ++o) {
      const double* w = &weight_.value[static_cast<std::size_t>(o) * in_];
      double acc = bias_.value[o];
      for (int i = 0; i < in_; ++i) acc += w[i] * xi[i];
      yo[o] = acc;
    }
  }
  return out;
}

Tensor Linear::forward(const Tensor& x) {
  input_ = x;
  return infer(x);
}

Tensor Linear::backward(const Tensor& g) {
  const int n = input_.batch();
  Tensor gin({n, in_});
  for (int b = 0; b < n; ++b) {
    const double* xi = &input_.data[static_cast<std::size_t>(b) * in_];
    const double* go = &g.data[static_cast<std::size_t>(b) * out_];
    double* gi = &gin.data[static_cast<std::size_t>(b) * in_];
    for (int o = 0; o < out_; ++o) {
      const double gv = go[o];
      if (gv == 0.0) continue;
      bias_.grad[o] += gv;
      double* gw = &weight_.grad[static_cast<std::size_t>(o) * in_];
      const double* w = &weight_.value[static_cast<std::size_t>(o) * in_];
      for (int i = 0; i < in_; ++i) {
        gw[i] += gv * xi[i];
        gi[i] += gv * w[i];
      }
    }
  }
  return gin;
}

// --- Conv2d ---------------------------------------------------------------

Conv2d::Conv2d(int in_channels, int out_channels, std::mt19937_64& rng)
    : cin_(in_channels),
      cout_(out_channels),
      weight_("weight", static_cast<std::size_t>(in_channels) * out_channels * 9),
      bias_("bias", out_channels) {
  if (cin_ < 1 || cout_ < 1) throw InvalidArgument("conv: channel counts must be >= 1");
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin_) * 9.0);
  init_uniform(weight_, bound, rng);
  init_uniform(bias_, bound, rng);
}

Tensor Conv2d::infer(const Tensor& x) const {
  require_rank(x, 4, "conv");
  if (x.dim(1) != cin_) throw InvalidArgument("conv: expected " + std::to_string(cin_) + " channels");
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor out({n, cout_, h, w});
  for (int b = 0; b < n; ++b)
    for (int co = 0; co < cout_; ++co) {
      double* op = &out.data[(static_cast<std::size_t>(b) * cout_ + co) * plane];
      std::fill(op, op + plane, bias_.value[co]);
      for (int ci = 0; ci < cin_; ++ci) {
        const double* ip = &x.data[(static_cast<std::size_t>(b) * cin_ + ci) * plane];
        const double* wk = &weight_.value[(static_cast<std::size_t>(co) * cin_ + ci) * 9];
        for (int ky = 0; ky < 3; ++ky) {
          const int y0 = std::max(0, 1 - ky), y1 = std::min(h, h + 1 - ky);
          for (int kx = 0; kx < 3; ++kx) {
            const double wv = wk[ky * 3 + kx];
            const int x0 = std::max(0, 1 - kx), x1 = std::min(w, w + 1 - kx);
            for (int y = y0; y < y1; ++y) {
              double* orow = op + static_cast<std::size_t>(y) * w;
              const double* irow = ip + static_cast<std::size_t>(y + ky - 1) * w + (kx - 1);
              for (int xx = x0; xx < x1; ++xx) orow[xx] += wv * irow[xx];
            }
          }
        }
      }
    }
  return out;
}

Tensor Conv2d::forward(const Tensor& x) {
  input_ = x;
  return infer(x);
}

Tensor Conv2d::backward(const Tensor& g) {
  const int n = input_.dim(0), h = input_.dim(2), w = input_.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor gin(input_.shape);
  for (int b = 0; b < n; ++b)
    for (int co = 0; co < cout_; ++co) {
      const double* gp = &g.data[(static_cast<std::size_t>(b) * cout_ + co) * plane];
      double gb = 0.0;
      for (std::size_t i = 0; i < plane; ++i) gb += gp[i];
      bias_.grad[co] += gb;
      for (int ci = 0; ci < cin_; ++ci) {
        const double* ip = &input_.data[(static_cast<std::size_t>(b) * cin_ + ci) * plane];
        double* gip = &gin.data[(static_cast<std::size_t>(b) * cin_ + ci) * plane];
        const std::size_t widx = (static_cast<std::size_t>(co) * cin_ + ci) * 9;
        for (int ky = 0; ky < 3; ++ky) {
          const int y0 = std::max(0, 1 - ky), y1 = std::min(h, h + 1 - ky);
          for (int kx = 0; kx < 3; ++kx) {
            const double wv = weight_.value[widx + ky * 3 + kx];
            const int x0 = std::max(0, 1 - kx), x1 = std::min(w, w + 1 - kx);
            double gw = 0.0;
            for (int y = y0; y < y1; ++y) {
              const double* grow = gp + static_cast<std::size_t>(y) * w;
              const std::size_t off = static_cast<std::size_t>(y + ky - 1) * w + (kx - 1);
              const double* irow = ip + off;
              double* girow = gip + off;
              for (int xx = x0; xx < x1; ++xx) {
                gw += grow[xx] * irow[xx];
                girow[xx] += wv * grow[xx];
              }
            }
            weight_.grad[widx + ky * 3 + kx] += gw;
          }
        }
      }
    }
  return gin;
}

// --- Upsample2x -----------------------------------------------------------

Tensor Upsample2x::infer(const Tensor& x) const {
  require_rank(x, 4, "upsample");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out({n, c, 2 * h, 2 * w});
  const int ow = 2 * w;
  for (int p = 0; p < n * c; ++p) {
    const double* ip = &x.data[static_cast<std::size_t>(p) * h * w];
    double* op = &out.data[static_cast<std::size_t>(p) * 4 * h * w];
    for (int y = 0; y < 2 * h; ++y)
      for (int xx = 0; xx < ow; ++xx) op[static_cast<std::size_t>(y) * ow + xx] = ip[(y / 2) * w + xx / 2];
  }
  return out;
}

Tensor Upsample2x::forward(const Tensor& x) {
  in_shape_ = x.shape;
  return infer(x);
}

Tensor Upsample2x::backward(const Tensor& g) {
  Tensor gin(in_shape_);
  const int n = in_shape_[0], c = in_shape_[1], h = in_shape_[2], w = in_shape_[3];
  const int ow = 2 * w;
  for (int p = 0; p < n * c; ++p) {
    double* gi = &gin.data[static_cast<std::size_t>(p) * h * w];
    const double* go = &g.data[static_cast<std::size_t>(p) * 4 * h * w];
    for (int y = 0; y < 2 * h; ++y)
      for (int xx = 0; xx < ow; ++xx) gi[(y / 2) * w + xx / 2] += go[static_cast<std::size_t>(y) * ow + xx];
  }
  return gin;
}

// --- AvgPool2 -------------------------------------------------------------

Tensor AvgPool2::infer(const Tensor& x) const {
  require_rank(x, 4, "avgpool");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = h / 2, ow = w / 2;
  if (oh < 1 || ow < 1) throw InvalidArgument("avgpool: input too small");
  Tensor out({n, c, oh, ow});
  for (int p = 0; p < n * c; ++p) {
    const double* ip = &x.data[static_cast<std::size_t>(p) * h * w];
    double* op = &out.data[static_cast<std::size_t>(p) * oh * ow];
    for (int y = 0; y < oh; ++y)
      for (int xx = 0; xx < ow; ++xx) {
        const double* r0 = ip + (2 * y) * w + 2 * xx;
        const double* r1 = r0 + w;
        op[y * ow + xx] = 0.25 * (r0[0] + r0[1] + r1[0] + r1[1]);
      }
  }
  return out;
}

Tensor AvgPool2::forward(const Tensor& x) {
  in_shape_ = x.shape;
  return infer(x);
}

Tensor AvgPool2::backward(const Tensor& g) {
  Tensor gin(in_shape_);
  const int n = in_shape_[0], c = in_shape_[1], h = in_shape_[2], w = in_shape_[3];
  const int oh = h / 2, ow = w / 2;
  for (int p = 0; p < n * c; ++p) {
    double* gi = &gin.data[static_cast<std::size_t>(p) * h * w];
    const double* go = &g.data[static_cast<std::size_t>(p) * oh * ow];
    for (int y = 0; y < oh; ++y)
      for (int xx = 0; xx < ow; ++xx) {
        const double v = 0.25 * go[y * ow + xx];
        double* r0 = gi + (2 * y) * w + 2 * xx;
        r0[0] += v;
        r0[1] += v;
        r0[w] += v;
        r0[w + 1] += v;
      }
  }
  return gin;
}

// --- BatchNorm ------------------------------------------------------------

namespace {

struct ChannelLayout {
  int n, c;
  std::size_t spatial;
};

ChannelLayout channel_layout(const Tensor& x, int channels) {
  if (x.shape.size() != 2 && x.shape.size() != 4)
    throw InvalidArgument("batchnorm: expected rank 2 or 4 input, got " + shape_string(x.shape));
  if (x.dim(1) != channels) throw InvalidArgument("batchnorm: channel count mismatch");
  const std::size_t spatial = x.shape.size() == 4 ? static_cast<std::size_t>(x.dim(2)) * x.dim(3) : 1;
  return {x.dim(0), x.dim(1), spatial};
}

}  // namespace

BatchNorm::BatchNorm(int channels, double eps, double momentum)
    : channels_(channels),
      eps_(eps),
      momentum_(momentum),
      gamma_("gamma", channels),
      beta_("beta", channels),
      running_mean_(channels, 0.0),
      running_var_(channels, 1.0) {
  if (channels < 1) throw InvalidArgument("batchnorm: channels must be >= 1");
  std::fill(gamma_.value.begin(), gamma_.value.end(), 1.0);
}

Tensor BatchNorm::infer(const Tensor& x) const {
  const auto l = channel_layout(x, channels_);
  Tensor out(x.shape);
  for (int b = 0; b < l.n; ++b)
    for (int ch = 0; ch < l.c; ++ch) {
      const double scale = gamma_.value[ch] / std::sqrt(running_var_[ch] + eps_);
      const double shift = beta_.value[ch] - running_mean_[ch] * scale;
      const std::size_t base = (static_cast<std::size_t>(b) * l.c + ch) * l.spatial;
      for (std::size_t i = 0; i < l.spatial; ++i) out.data[base + i] = x.data[base + i] * scale + shift;
    }
  return out;
}

Tensor BatchNorm::forward(const Tensor& x) {
  const auto l = channel_layout(x, channels_);
  const double count = static_cast<double>(l.n) * l.spatial;
  batch_mean_.assign(l.c, 0.0);
  batch_var_.assign(l.c, 0.0);
  for (int b = 0; b < l.n; ++b)
    for (int ch = 0; ch < l.c; ++ch) {
      const std::size_t base = (static_cast<std::size_t>(b) * l.c + ch) * l.spatial;
      for (std::size_t i = 0; i < l.spatial; ++i) batch_mean_[ch] += x.data[base + i];
    }
  for (double& m : batch_mean_) m /= count;
  for (int b = 0; b < l.n; ++b)
    for (int ch = 0; ch < l.c; ++ch) {
      const std::size_t base = (static_cast<std::size_t>(b) * l.c + ch) * l.spatial;
      for (std::size_t i = 0; i < l.spatial; ++i) {
        const double d = x.data[base + i] - batch_mean_[ch];
        batch_var_[ch] += d * d;
      }
    }
  for (double& v : batch_var_) v /= count;

  xhat_ = Tensor(x.shape);
  Tensor out(x.shape);
  for (int b = 0; b < l.n; ++b)
    for (int ch = 0; ch < l.c; ++ch) {
      const double inv_std = 1.0 / std::sqrt(batch_var_[ch] + eps_);
      const std::size_t base = (static_cast<std::size_t>(b) * l.c + ch) * l.spatial;
      for (std::size_t i = 0; i < l.spatial; ++i) {
        const double xh = (x.data[base + i] - batch_mean_[ch]) * inv_std;
        xhat_.data[base + i] = xh;
        out.data[base + i] = gamma_.value[ch] * xh + beta_.value[ch];
      }
    }
  for (int ch = 0; ch < l.c; ++ch) {
    running_mean_[ch] = momentum_ * running_mean_[ch] + (1.0 - momentum_) * batch_mean_[ch];
    running_var_[ch] = momentum_ * running_var_[ch] + (1.0 - momentum_) * batch_var_[ch];
  }
  return out;
}

Tensor BatchNorm::backward(const Tensor& g) {
  const auto l = channel_layout(xhat_, channels_);
  const double count = static_cast<double>(l.n) * l.spatial;
  std::vector<double> sum_g(l.c, 0.0), sum_gx(l.c, 0.0);
  for (int b = 0; b < l.n; ++b)
    for (int ch = 0; ch < l.c; ++ch) {
      const std::size_t base = (static_cast<std::size_t>(b) * l.c + ch) * l.spatial;
      for (std::size_t i = 0; i < l.spatial; ++i) {
        sum_g[ch] += g.data[base + i];
        sum_gx[ch] += g.data[base + i] * xhat_.data[base + i];
      }
    }
  Tensor gin(xhat_.shape);
  for (int ch = 0; ch < l.c; ++ch) {
    beta_.grad[ch] += sum_g[ch];
    gamma_.grad[ch] += sum_gx[ch];
  }
  for (int b = 0; b < l.n; ++b)
    for (int ch = 0; ch < l.c; ++ch) {
      const double inv_std = 1.0 / std::sqrt(batch_var_[ch] + eps_);
      const double k = gamma_.value[ch] * inv_std / count;
      const double mg = sum_g[ch], mgx = sum_gx[ch];
      const std::size_t base = (static_cast<std::size_t>(b) * l.c + ch) * l.spatial;
      for (std::size_t i = 0; i < l.spatial; ++i)
        gin.data[base + i] = k * (count * g.data[base + i] - mg - xhat_.data[base + i] * mgx);
    }
  return gin;
}

void BatchNorm::adopt_batch_statistics() {
  if (batch_mean_.empty()) throw Error("batchnorm: no training forward to adopt statistics from");
  running_mean_ = batch_mean_;
  running_var_ = batch_var_;
}

// --- activations ----------------------------------------------------------

Tensor LeakyReLU::infer(const Tensor& x) const {
  Tensor out = x;
  for (double& v : out.data)
    if (v < 0.0) v *= slope_;
  return out;
}

Tensor LeakyReLU::forward(const Tensor& x) {
  input_ = x;
  return infer(x);
}

Tensor LeakyReLU::backward(const Tensor& g) {
  Tensor gin = g;
  for (std::size_t i = 0; i < gin.data.size(); ++i)
    if (input_.data[i] < 0.0) gin.data[i] *= slope_;
  return gin;
}

Tensor Sigmoid::infer(const Tensor& x) const {
  Tensor out = x;
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  return out;
}

Tensor Sigmoid::forward(const Tensor& x) {
  output_ = infer(x);
  return output_;
}

Tensor Sigmoid::backward(const Tensor& g) {
  Tensor gin = g;
  for (std::size_t i = 0; i < gin.data.size(); ++i) {
    const double s = output_.data[i];
    gin.data[i] *= s * (1.0 - s);
  }
  return gin;
}

Tensor Reshape::infer(const Tensor& x) const {
  std::vector<int> shape{x.batch()};
  shape.insert(shape.end(), item_shape_.begin(), item_shape_.end());
  if (shape_numel(shape) != x.numel())
    throw InvalidArgument("reshape: cannot view " + shape_string(x.shape) + " as " + shape_string(shape));
  return Tensor(std::move(shape), x.data);
}

Tensor Reshape::forward(const Tensor& x) {
  in_shape_ = x.shape;
  return infer(x);
}

Tensor Reshape::backward(const Tensor& g) { return Tensor(in_shape_, g.data); }

// --- Sequential -----------------------------------------------------------

Tensor Sequential::forward(const Tensor& x) {
  Tensor h = x;
  for (auto& l : layers_) h = l->forward(h);
  return h;
}

Tensor Sequential::infer(const Tensor& x) const {
  Tensor h = x;
  for (const auto& l : layers_) h = l->infer(h);
  return h;
}

Tensor Sequential::backward(const Tensor& g) {
  Tensor h = g;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) h = (*it)->backward(h);
  return h;
}

std::vector<Param*> Sequential::params() {
  std::vector<Param*> out;
  for (auto& l : layers_)
    for (Param* p : l->params()) out.push_back(p);
  return out;
}

std::vector<const Param*> Sequential::params() const {
  std::vector<const Param*> out;
  for (const auto& l : layers_)
    for (const Param* p : std::as_const(*l).params()) out.push_back(p);
  return out;
}

std::vector<std::vector<double>*> Sequential::buffers() {
  std::vector<std::vector<double>*> out;
  for (auto& l : layers_)
    for (auto* b : l->buffers()) out.push_back(b);
  return out;
}

std::vector<const std::vector<double>*> Sequential::buffers() const {
  std::vector<const std::vector<double>*> out;
  for (const auto& l : layers_)
    for (const auto* b : std::as_const(*l).buffers()) out.push_back(b);
  return out;
}

// --- losses ---------------------------------------------------------------

LossAndGrad mse(const Tensor& pred, const Tensor& target) {
  if (pred.shape != target.shape)
    throw InvalidArgument("mse: shape mismatch " + shape_string(pred.shape) + " vs " +
                          shape_string(target.shape));
  LossAndGrad out;
  out.grad = Tensor(pred.shape);
  const double n = static_cast<double>(pred.numel());
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double d = pred.data[i] - target.data[i];
    acc += d * d;
    out.grad.data[i] = 2.0 * d / n;
  }
  out.loss = acc / n;
  return out;
}

LossAndGrad softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy");
  const int n = logits.dim(0), c = logits.dim(1);
  if (static_cast<int>(labels.size()) != n) throw InvalidArgument("softmax_cross_entropy: label count");
  LossAndGrad out;
  out.grad = Tensor(logits.shape);
  double total = 0.0;
  for (int b = 0; b < n; ++b) {
    const double* z = &logits.data[static_cast<std::size_t>(b) * c];
    double* g = &out.grad.data[static_cast<std::size_t>(b) * c];
    const int label = labels[b];
    if (label < 0 || label >= c) throw InvalidArgument("softmax_cross_entropy: label out of range");
    const double zmax = *std::max_element(z, z + c);
    double sum = 0.0;
    for (int k = 0; k < c; ++k) sum += std::exp(z[k] - zmax);
    const double log_sum = std::log(sum) + zmax;
    total += log_sum - z[label];
    for (int k = 0; k < c; ++k) g[k] = std::exp(z[k] - log_sum) / n;
    g[label] -= 1.0 / n;
  }
  out.loss = total / n;
  return out;
}

// --- Adam -----------------------------------------------------------------

Adam::Adam(std::vector<Param*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg.learning_rate > 0.0)) throw InvalidArgument("adam: learning rate must be > 0");
  for (Param* p : params_) {
    m_.emplace_back(p->value.size(), 0.0);
    v_.emplace_back(p->value.size(), 0.0);
  }
}

void Adam::zero_grad() {
  for (Param* p : params_) p->zero_grad();
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Param& p = *params_[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p.value[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
  }
}

}  // namespace deid::nn
