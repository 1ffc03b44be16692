#include "bbadv/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace bbadv {

namespace {

std::string shape_str(ImageShape s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.width) + "x" +
         std::to_string(s.height);
}

float init_uniform(Rng& rng, double scale) {
  return static_cast<float>(rng.range(-scale, scale));
}

// --- little-endian binary primitives ---

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& os, float v) {
  put_u32(os, std::bit_cast<std::uint32_t>(v));
}

void put_f32_block(std::ostream& os, std::span<const float> vs) {
  for (float v : vs) put_f32(os, v);
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    if (pos_ + 4 > bytes_.size()) {
      throw LengthError("model file truncated at byte " +
                        std::to_string(pos_));
    }
    std::uint32_t v = bytes_[pos_] | (bytes_[pos_ + 1] << 8) |
                      (bytes_[pos_ + 2] << 16) |
                      (static_cast<std::uint32_t>(bytes_[pos_ + 3]) << 24);
    pos_ += 4;
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }

  std::vector<float> f32_block(std::size_t n) {
    std::vector<float> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = f32();
    return out;
  }

  bool exhausted() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

constexpr std::uint32_t kModelMagic = 0x4D414242u;  // "BBAM" little-endian
constexpr std::uint32_t kModelVersion = 1;

}  // namespace

Volume to_volume(const Image& img) {
  Volume v(img.channels(), img.width(), img.height());
  const auto d = img.data();
  for (std::size_t i = 0; i < d.size(); ++i) v.v[i] = d[i];
  return v;
}

// ---------------------------------------------------------------- Dense

DenseLayer::DenseLayer(int in_size, int units, Rng* init)
    : in_size_(in_size), units_(units) {
  if (in_size <= 0 || units <= 0) {
    throw ParameterError("dense layer sizes must be positive");
  }
  params_.assign(static_cast<std::size_t>(units) * in_size + units, 0.0f);
  if (init) {
    const double s = 1.0 / std::sqrt(static_cast<double>(in_size));
    for (std::size_t i = 0; i < static_cast<std::size_t>(units) * in_size; ++i)
      params_[i] = init_uniform(*init, s);
  }
}

DenseLayer::DenseLayer(int in_size, int units, std::vector<float> weights)
    : in_size_(in_size), units_(units), params_(std::move(weights)) {
  const auto want = static_cast<std::size_t>(units) * in_size + units;
  if (params_.size() != want) {
    throw ShapeError("dense weight blob has wrong length");
  }
}

ImageShape DenseLayer::out_shape(ImageShape in) const {
  const auto flat = static_cast<std::size_t>(in.channels) * in.width * in.height;
  if (flat != static_cast<std::size_t>(in_size_)) {
    throw ShapeError("dense expects flattened input of " +
                     std::to_string(in_size_) + ", got " + shape_str(in));
  }
  return {units_, 1, 1};
}

void DenseLayer::forward(const Volume& in, Volume& out) const {
  out = Volume(units_, 1, 1);
  const float* w = params_.data();
  const float* bias = params_.data() + static_cast<std::size_t>(units_) * in_size_;
  for (int u = 0; u < units_; ++u) {
    double acc = bias[u];
    const float* row = w + static_cast<std::size_t>(u) * in_size_;
    for (int i = 0; i < in_size_; ++i) acc += static_cast<double>(row[i]) * in.v[i];
    out.v[u] = acc;
  }
}

void DenseLayer::backward(const Volume& in, const Volume& /*out*/,
                          const Volume& dout, Volume& din,
                          std::vector<double>* param_grads) const {
  din = Volume(in.c, in.w, in.h);
  const float* w = params_.data();
  const std::size_t bias_off = static_cast<std::size_t>(units_) * in_size_;
  for (int u = 0; u < units_; ++u) {
    const double g = dout.v[u];
    const float* row = w + static_cast<std::size_t>(u) * in_size_;
    for (int i = 0; i < in_size_; ++i) din.v[i] += static_cast<double>(row[i]) * g;
    if (param_grads) {
      double* pg = param_grads->data() + static_cast<std::size_t>(u) * in_size_;
      for (int i = 0; i < in_size_; ++i) pg[i] += in.v[i] * g;
      (*param_grads)[bias_off + u] += g;
    }
  }
}

void DenseLayer::write_body(std::ostream& os) const {
  put_u32(os, static_cast<std::uint32_t>(in_size_));
  put_u32(os, static_cast<std::uint32_t>(units_));
  put_f32_block(os, params_);
}

std::string DenseLayer::summary(ImageShape in) const {
  return "dense    in=" + shape_str(in) + " out=" + shape_str(out_shape(in)) +
         " params=" + std::to_string(params_.size());
}

// ----------------------------------------------------------------- Conv

ConvLayer::ConvLayer(int in_channels, int out_channels, int kw, int kh,
                     int stride, Padding pad, Rng* init)
    : in_c_(in_channels), out_c_(out_channels), kw_(kw), kh_(kh),
      stride_(stride), pad_(pad) {
  if (in_c_ <= 0 || out_c_ <= 0 || kw_ <= 0 || kh_ <= 0 || stride_ < 1) {
    throw ParameterError("conv layer parameters must be positive");
  }
  const std::size_t nk =
      static_cast<std::size_t>(out_c_) * in_c_ * kw_ * kh_;
  params_.assign(nk + out_c_, 0.0f);
  if (init) {
    const double s = 1.0 / std::sqrt(static_cast<double>(in_c_) * kw_ * kh_);
    for (std::size_t i = 0; i < nk; ++i) params_[i] = init_uniform(*init, s);
  }
}

ConvLayer::ConvLayer(int in_channels, int out_channels, int kw, int kh,
                     int stride, Padding pad, std::vector<float> weights)
    : in_c_(in_channels), out_c_(out_channels), kw_(kw), kh_(kh),
      stride_(stride), pad_(pad), params_(std::move(weights)) {
  const std::size_t want =
      static_cast<std::size_t>(out_c_) * in_c_ * kw_ * kh_ + out_c_;
  if (params_.size() != want) {
    throw ShapeError("conv weight blob has wrong length");
  }
}

void ConvLayer::pad_amounts(ImageShape in, int& px, int& py) const {
  if (pad_ == Padding::Valid) {
    px = py = 0;
    return;
  }
  const int ow = (in.width + stride_ - 1) / stride_;
  const int oh = (in.height + stride_ - 1) / stride_;
  px = std::max(0, (ow - 1) * stride_ + kw_ - in.width) / 2;
  py = std::max(0, (oh - 1) * stride_ + kh_ - in.height) / 2;
}

ImageShape ConvLayer::out_shape(ImageShape in) const {
  if (in.channels != in_c_) {
    throw ShapeError("conv expects " + std::to_string(in_c_) +
                     " input channels, got " + shape_str(in));
  }
  if (pad_ == Padding::Same) {
    return {out_c_, (in.width + stride_ - 1) / stride_,
            (in.height + stride_ - 1) / stride_};
  }
  if (in.width < kw_ || in.height < kh_) {
    throw ShapeError("conv kernel " + std::to_string(kw_) + "x" +
                     std::to_string(kh_) + " larger than input " +
                     shape_str(in));
  }
  return {out_c_, (in.width - kw_) / stride_ + 1,
          (in.height - kh_) / stride_ + 1};
}

void ConvLayer::forward(const Volume& in, Volume& out) const {
  const ImageShape os = out_shape(in.shape());
  int px, py;
  pad_amounts(in.shape(), px, py);
  out = Volume(os.channels, os.width, os.height);
  const std::size_t ksz = static_cast<std::size_t>(kw_) * kh_;
  const float* bias =
      params_.data() + static_cast<std::size_t>(out_c_) * in_c_ * ksz;
  for (int oc = 0; oc < out_c_; ++oc) {
    for (int ox = 0; ox < os.width; ++ox) {
      for (int oy = 0; oy < os.height; ++oy) {
        double acc = bias[oc];
        for (int ic = 0; ic < in_c_; ++ic) {
          const float* k =
              params_.data() + (static_cast<std::size_t>(oc) * in_c_ + ic) * ksz;
          for (int kx = 0; kx < kw_; ++kx) {
            const int ix = ox * stride_ - px + kx;
            if (ix < 0 || ix >= in.w) continue;
            for (int ky = 0; ky < kh_; ++ky) {
              const int iy = oy * stride_ - py + ky;
              if (iy < 0 || iy >= in.h) continue;
              acc += static_cast<double>(k[kx * kh_ + ky]) * in.at(ic, ix, iy);
            }
          }
        }
        out.at(oc, ox, oy) = acc;
      }
    }
  }
}

void ConvLayer::backward(const Volume& in, const Volume& out,
                         const Volume& dout, Volume& din,
                         std::vector<double>* param_grads) const {
  int px, py;
  pad_amounts(in.shape(), px, py);
  din = Volume(in.c, in.w, in.h);
  const std::size_t ksz = static_cast<std::size_t>(kw_) * kh_;
  const std::size_t bias_off = static_cast<std::size_t>(out_c_) * in_c_ * ksz;
  for (int oc = 0; oc < out_c_; ++oc) {
    for (int ox = 0; ox < out.w; ++ox) {
      for (int oy = 0; oy < out.h; ++oy) {
        const double g = dout.at(oc, ox, oy);
        if (param_grads) (*param_grads)[bias_off + oc] += g;
        for (int ic = 0; ic < in_c_; ++ic) {
          const std::size_t koff =
              (static_cast<std::size_t>(oc) * in_c_ + ic) * ksz;
          const float* k = params_.data() + koff;
          for (int kx = 0; kx < kw_; ++kx) {
            const int ix = ox * stride_ - px + kx;
            if (ix < 0 || ix >= in.w) continue;
            for (int ky = 0; ky < kh_; ++ky) {
              const int iy = oy * stride_ - py + ky;
              if (iy < 0 || iy >= in.h) continue;
              din.at(ic, ix, iy) += static_cast<double>(k[kx * kh_ + ky]) * g;
              if (param_grads) {
                (*param_grads)[koff + kx * kh_ + ky] += in.at(ic, ix, iy) * g;
              }
            }
          }
        }
      }
    }
  }
}

void ConvLayer::write_body(std::ostream& os) const {
  put_u32(os, static_cast<std::uint32_t>(in_c_));
  put_u32(os, static_cast<std::uint32_t>(out_c_));
  put_u32(os, static_cast<std::uint32_t>(kw_));
  put_u32(os, static_cast<std::uint32_t>(kh_));
  put_u32(os, static_cast<std::uint32_t>(stride_));
  put_u32(os, static_cast<std::uint32_t>(pad_));
  put_f32_block(os, params_);
}

std::string ConvLayer::summary(ImageShape in) const {
  return "conv     in=" + shape_str(in) + " out=" + shape_str(out_shape(in)) +
         " kernel=" + std::to_string(kw_) + "x" + std::to_string(kh_) +
         " stride=" + std::to_string(stride_) +
         " pad=" + (pad_ == Padding::Valid ? "valid" : "same") +
         " params=" + std::to_string(params_.size());
}

// ----------------------------------------------------------------- Relu

void ReluLayer::forward(const Volume& in, Volume& out) const {
  out = Volume(in.c, in.w, in.h);
  for (std::size_t i = 0; i < in.size(); ++i)
    out.v[i] = in.v[i] > 0.0 ? in.v[i] : 0.0;
}

void ReluLayer::backward(const Volume& in, const Volume& /*out*/,
                         const Volume& dout, Volume& din,
                         std::vector<double>* /*param_grads*/) const {
  din = Volume(in.c, in.w, in.h);
  for (std::size_t i = 0; i < in.size(); ++i)
    din.v[i] = in.v[i] > 0.0 ? dout.v[i] : 0.0;
}

void ReluLayer::write_body(std::ostream&) const {}

std::string ReluLayer::summary(ImageShape in) const {
  return "relu     in=" + shape_str(in) + " out=" + shape_str(in);
}

// -------------------------------------------------------------- MaxPool

MaxPoolLayer::MaxPoolLayer(int pw, int ph, int stride)
    : pw_(pw), ph_(ph), stride_(stride) {
  if (pw_ < 1 || ph_ < 1 || stride_ < 1) {
    throw ParameterError("max-pool window and stride must be positive");
  }
}

ImageShape MaxPoolLayer::out_shape(ImageShape in) const {
  if (in.width < pw_ || in.height < ph_) {
    throw ShapeError("max-pool window larger than input " + shape_str(in));
  }
  return {in.channels, (in.width - pw_) / stride_ + 1,
          (in.height - ph_) / stride_ + 1};
}

void MaxPoolLayer::forward(const Volume& in, Volume& out) const {
  const ImageShape os = out_shape(in.shape());
  out = Volume(os.channels, os.width, os.height);
  for (int c = 0; c < os.channels; ++c) {
    for (int ox = 0; ox < os.width; ++ox) {
      for (int oy = 0; oy < os.height; ++oy) {
        double best = -std::numeric_limits<double>::infinity();
        for (int kx = 0; kx < pw_; ++kx) {
          for (int ky = 0; ky < ph_; ++ky) {
            best = std::max(best, in.at(c, ox * stride_ + kx, oy * stride_ + ky));
          }
        }
        out.at(c, ox, oy) = best;
      }
    }
  }
}

void MaxPoolLayer::backward(const Volume& in, const Volume& out,
                            const Volume& dout, Volume& din,
                            std::vector<double>* /*param_grads*/) const {
  din = Volume(in.c, in.w, in.h);
  for (int c = 0; c < out.c; ++c) {
    for (int ox = 0; ox < out.w; ++ox) {
      for (int oy = 0; oy < out.h; ++oy) {
        // gradient flows to the first maximal element in scan order
        int bx = -1, by = -1;
        double best = -std::numeric_limits<double>::infinity();
        for (int kx = 0; kx < pw_; ++kx) {
          for (int ky = 0; ky < ph_; ++ky) {
            const double v = in.at(c, ox * stride_ + kx, oy * stride_ + ky);
            if (v > best) {
              best = v;
              bx = ox * stride_ + kx;
              by = oy * stride_ + ky;
            }
          }
        }
        din.at(c, bx, by) += dout.at(c, ox, oy);
      }
    }
  }
}

void MaxPoolLayer::write_body(std::ostream& os) const {
  put_u32(os, static_cast<std::uint32_t>(pw_));
  put_u32(os, static_cast<std::uint32_t>(ph_));
  put_u32(os, static_cast<std::uint32_t>(stride_));
}

std::string MaxPoolLayer::summary(ImageShape in) const {
  return "maxpool  in=" + shape_str(in) + " out=" + shape_str(out_shape(in)) +
         " window=" + std::to_string(pw_) + "x" + std::to_string(ph_) +
         " stride=" + std::to_string(stride_);
}

// ------------------------------------------------- BatchNorm (inference)

BatchNormInferenceLayer::BatchNormInferenceLayer(std::vector<float> gamma,
                                                 std::vector<float> beta,
                                                 std::vector<float> mean,
                                                 std::vector<float> variance)
    : gamma_(std::move(gamma)), beta_(std::move(beta)), mean_(std::move(mean)),
      var_(std::move(variance)) {
  const std::size_t n = gamma_.size();
  if (n == 0 || beta_.size() != n || mean_.size() != n || var_.size() != n) {
    throw ShapeError("batch-norm parameter vectors must have equal length");
  }
  for (float v : var_) {
    if (v < 0.0f) throw ParameterError("batch-norm variance must be >= 0");
  }
}

ImageShape BatchNormInferenceLayer::out_shape(ImageShape in) const {
  if (in.channels != static_cast<int>(gamma_.size())) {
    throw ShapeError("batch-norm has " + std::to_string(gamma_.size()) +
                     " channels, input is " + shape_str(in));
  }
  return in;
}

void BatchNormInferenceLayer::forward(const Volume& in, Volume& out) const {
  out = Volume(in.c, in.w, in.h);
  for (int c = 0; c < in.c; ++c) {
    const double scale = gamma_[c] / std::sqrt(static_cast<double>(var_[c]) + kEps);
    const double shift = beta_[c] - scale * mean_[c];
    for (int x = 0; x < in.w; ++x)
      for (int y = 0; y < in.h; ++y)
        out.at(c, x, y) = scale * in.at(c, x, y) + shift;
  }
}

void BatchNormInferenceLayer::backward(const Volume& in, const Volume& /*out*/,
                                       const Volume& dout, Volume& din,
                                       std::vector<double>*) const {
  din = Volume(in.c, in.w, in.h);
  for (int c = 0; c < in.c; ++c) {
    const double scale = gamma_[c] / std::sqrt(static_cast<double>(var_[c]) + kEps);
    for (int x = 0; x < in.w; ++x)
      for (int y = 0; y < in.h; ++y)
        din.at(c, x, y) = scale * dout.at(c, x, y);
  }
}

void BatchNormInferenceLayer::write_body(std::ostream& os) const {
  put_u32(os, static_cast<std::uint32_t>(gamma_.size()));
  put_f32_block(os, gamma_);
  put_f32_block(os, beta_);
  put_f32_block(os, mean_);
  put_f32_block(os, var_);
}

std::string BatchNormInferenceLayer::summary(ImageShape in) const {
  return "batchnorm in=" + shape_str(in) + " out=" + shape_str(in) +
         " channels=" + std::to_string(gamma_.size());
}

// -------------------------------------------------------------- Softmax

ImageShape SoftmaxLayer::out_shape(ImageShape in) const {
  if (in.width != 1 || in.height != 1) {
    throw ShapeError("softmax expects a flat (C,1,1) input, got " +
                     shape_str(in));
  }
  return in;
}

void SoftmaxLayer::forward(const Volume& in, Volume& out) const {
  out = Volume(in.c, 1, 1);
  double mx = in.v[0];
  for (double v : in.v) mx = std::max(mx, v);
  double sum = 0.0;
  for (int i = 0; i < in.c; ++i) {
    out.v[i] = std::exp(in.v[i] - mx);
    sum += out.v[i];
  }
  for (int i = 0; i < in.c; ++i) out.v[i] /= sum;
}

void SoftmaxLayer::backward(const Volume& /*in*/, const Volume& out,
                            const Volume& dout, Volume& din,
                            std::vector<double>*) const {
  din = Volume(out.c, 1, 1);
  double dot = 0.0;
  for (int i = 0; i < out.c; ++i) dot += dout.v[i] * out.v[i];
  for (int i = 0; i < out.c; ++i) din.v[i] = out.v[i] * (dout.v[i] - dot);
}

void SoftmaxLayer::write_body(std::ostream&) const {}

std::string SoftmaxLayer::summary(ImageShape in) const {
  return "softmax  in=" + shape_str(in) + " out=" + shape_str(in);
}

// ---------------------------------------------------------------- Model

Model::Model(ImageShape input, int classes,
             std::vector<std::unique_ptr<Layer>> layers)
    : input_(input), classes_(classes), layers_(std::move(layers)) {
  if (classes_ < 2) throw ParameterError("model needs at least 2 classes");
  if (layers_.empty()) throw ShapeError("model needs at least one layer");
  int softmax_count = 0;
  ImageShape s = input_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    s = layers_[i]->out_shape(s);  // throws ShapeError on any mismatch
    if (layers_[i]->kind() == LayerKind::Softmax) ++softmax_count;
  }
  if (softmax_count != 1 || layers_.back()->kind() != LayerKind::Softmax) {
    throw ShapeError("model must end with exactly one softmax layer");
  }
  if (s.channels != classes_ || s.width != 1 || s.height != 1) {
    throw ShapeError("model output " + shape_str(s) + " does not match " +
                     std::to_string(classes_) + " classes");
  }
}

void Model::forward_cached(const Volume& in, std::vector<Volume>& acts) const {
  acts.resize(layers_.size() + 1);
  acts[0] = in;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i]->forward(acts[i], acts[i + 1]);
  }
}

ProbVector Model::forward(const Image& img) const {
  if (img.shape() != input_) {
    throw ShapeError("model input is " + shape_str(input_) + ", image is " +
                     shape_str(img.shape()));
  }
  Volume a = to_volume(img);
  Volume b;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i]->forward(a, b);
    std::swap(a, b);
  }
  ProbVector p;
  p.probs = std::move(a.v);
  for (double v : p.probs) {
    if (!std::isfinite(v)) throw NumericError("non-finite network output");
  }
  return p;
}

Volume Model::backward_chain(const std::vector<Volume>& acts, Volume grad,
                             int from_layer,
                             std::vector<std::vector<double>>* pgrads) const {
  Volume din;
  for (int i = from_layer; i >= 0; --i) {
    std::vector<double>* pg = nullptr;
    if (pgrads) pg = &(*pgrads)[i];
    layers_[i]->backward(acts[i], acts[i + 1], grad, din, pg);
    grad = std::move(din);
  }
  return grad;
}

Volume Model::input_gradient(const Image& img, int label) const {
  if (label < 1 || label > classes_) {
    throw ParameterError("gradient label " + std::to_string(label) +
                         " outside [1.." + std::to_string(classes_) + "]");
  }
  if (img.shape() != input_) {
    throw ShapeError("model input is " + shape_str(input_) + ", image is " +
                     shape_str(img.shape()));
  }
  std::vector<Volume> acts;
  forward_cached(to_volume(img), acts);
  Volume seed(classes_, 1, 1);
  seed.v[label - 1] = 1.0;
  return backward_chain(acts, std::move(seed),
                        static_cast<int>(layers_.size()) - 1, nullptr);
}

Volume Model::loss_input_gradient(const Image& img, int target) const {
  if (target < 1 || target > classes_) {
    throw ParameterError("loss target " + std::to_string(target) +
                         " outside [1.." + std::to_string(classes_) + "]");
  }
  if (img.shape() != input_) {
    throw ShapeError("model input is " + shape_str(input_) + ", image is " +
                     shape_str(img.shape()));
  }
  std::vector<Volume> acts;
  forward_cached(to_volume(img), acts);
  // d(cross-entropy)/d(logits) = probs - onehot(target); seed below softmax.
  Volume dlogits = acts.back();
  dlogits.v[target - 1] -= 1.0;
  return backward_from_logits(acts, dlogits, nullptr);
}

Volume Model::backward_from_logits(
    const std::vector<Volume>& acts, const Volume& dlogits,
    std::vector<std::vector<double>>* pgrads) const {
  return backward_chain(acts, dlogits, static_cast<int>(layers_.size()) - 2,
                        pgrads);
}

std::vector<std::uint8_t> Model::save_bytes() const {
  std::ostringstream os(std::ios::binary);
  put_u32(os, kModelMagic);
  put_u32(os, kModelVersion);
  put_u32(os, static_cast<std::uint32_t>(input_.channels));
  put_u32(os, static_cast<std::uint32_t>(input_.width));
  put_u32(os, static_cast<std::uint32_t>(input_.height));
  put_u32(os, static_cast<std::uint32_t>(classes_));
  put_u32(os, static_cast<std::uint32_t>(layers_.size()));
  for (const auto& l : layers_) {
    put_u32(os, static_cast<std::uint32_t>(l->kind()));
    l->write_body(os);
  }
  const std::string s = os.str();
  return {s.begin(), s.end()};
}

void Model::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  const auto bytes = save_bytes();
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for " + path);
}

Model Model::load_bytes(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.u32() != kModelMagic) throw FormatError("bad model magic");
  const std::uint32_t version = r.u32();
  if (version != kModelVersion) {
    throw FormatError("unsupported model version " + std::to_string(version));
  }
  ImageShape input{static_cast<int>(r.u32()), static_cast<int>(r.u32()),
                   static_cast<int>(r.u32())};
  const int classes = static_cast<int>(r.u32());
  const std::uint32_t n_layers = r.u32();
  if (n_layers == 0 || n_layers > 1024) {
    throw FormatError("implausible layer count " + std::to_string(n_layers));
  }
  std::vector<std::unique_ptr<Layer>> layers;
  layers.reserve(n_layers);
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    const auto kind = static_cast<LayerKind>(r.u32());
    switch (kind) {
      case LayerKind::Dense: {
        const int in_size = static_cast<int>(r.u32());
        const int units = static_cast<int>(r.u32());
        if (in_size <= 0 || units <= 0 || in_size > (1 << 24) ||
            units > (1 << 24)) {
          throw FormatError("implausible dense dimensions");
        }
        auto w = r.f32_block(static_cast<std::size_t>(units) * in_size + units);
        layers.push_back(
            std::make_unique<DenseLayer>(in_size, units, std::move(w)));
        break;
      }
      case LayerKind::Conv: {
        const int ic = static_cast<int>(r.u32());
        const int oc = static_cast<int>(r.u32());
        const int kw = static_cast<int>(r.u32());
        const int kh = static_cast<int>(r.u32());
        const int stride = static_cast<int>(r.u32());
        const auto pad = static_cast<Padding>(r.u32());
        if (ic <= 0 || oc <= 0 || kw <= 0 || kh <= 0 || stride < 1 ||
            ic > 4096 || oc > 4096 || kw > 1024 || kh > 1024 ||
            (pad != Padding::Valid && pad != Padding::Same)) {
          throw FormatError("implausible conv parameters");
        }
        auto w = r.f32_block(static_cast<std::size_t>(oc) * ic * kw * kh + oc);
        layers.push_back(std::make_unique<ConvLayer>(ic, oc, kw, kh, stride,
                                                     pad, std::move(w)));
        break;
      }
      case LayerKind::Relu:
        layers.push_back(std::make_unique<ReluLayer>());
        break;
      case LayerKind::MaxPool: {
        const int pw = static_cast<int>(r.u32());
        const int ph = static_cast<int>(r.u32());
        const int stride = static_cast<int>(r.u32());
        layers.push_back(std::make_unique<MaxPoolLayer>(pw, ph, stride));
        break;
      }
      case LayerKind::BatchNormInference: {
        const std::uint32_t ch = r.u32();
        if (ch == 0 || ch > 65536) {
          throw FormatError("implausible batch-norm channel count");
        }
        auto g = r.f32_block(ch);
        auto b = r.f32_block(ch);
        auto m = r.f32_block(ch);
        auto v = r.f32_block(ch);
        layers.push_back(std::make_unique<BatchNormInferenceLayer>(
            std::move(g), std::move(b), std::move(m), std::move(v)));
        break;
      }
      case LayerKind::Softmax:
        layers.push_back(std::make_unique<SoftmaxLayer>());
        break;
      default:
        throw FormatError("unknown layer kind tag");
    }
  }
  if (!r.exhausted()) throw LengthError("trailing bytes after model payload");
  return Model(input, classes, std::move(layers));
}

Model Model::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return load_bytes(bytes);
}

std::string Model::describe() const {
  std::ostringstream os;
  os << "model input=" << shape_str(input_) << " classes=" << classes_
     << " layers=" << layers_.size() << "\n";
  ImageShape s = input_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    os << "  " << (i + 1) << " " << layers_[i]->summary(s) << "\n";
    s = layers_[i]->out_shape(s);
  }
  return os.str();
}

// ------------------------------------------------------------- training

double evaluate_accuracy(const Model& model,
                         const std::vector<LabeledImage>& data) {
  if (data.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& li : data) {
    const ProbVector p = model.forward(li.image);
    if (top_k(p, 1)[0] == li.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

TrainReport train_sgd(Model& model, const std::vector<LabeledImage>& train,
                      const std::vector<LabeledImage>& test,
                      const TrainConfig& cfg) {
  if (train.empty()) throw TrainingError("empty training set");
  if (cfg.epochs < 0 || cfg.batch_size < 1 || cfg.learning_rate <= 0.0) {
    throw ParameterError("bad training hyperparameters");
  }
  for (const auto& li : train) {
    if (li.label < 1 || li.label > model.class_count()) {
      throw ParameterError("training label outside [1..C]");
    }
  }

  Rng rng(cfg.seed);
  std::vector<std::uint32_t> order(train.size());
  std::iota(order.begin(), order.end(), 0u);

  auto& layers = model.layers();
  std::vector<std::vector<double>> pgrads(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    pgrads[i].assign(layers[i]->params().size(), 0.0);
  }

  TrainReport report;
  std::vector<Volume> acts;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t batch_start = 0;
    int batch_index = 0;
    while (batch_start < order.size()) {
      const std::size_t batch_end =
          std::min(batch_start + cfg.batch_size, order.size());
      const auto n = static_cast<double>(batch_end - batch_start);
      for (auto& g : pgrads) std::fill(g.begin(), g.end(), 0.0);
      for (std::size_t s = batch_start; s < batch_end; ++s) {
        const LabeledImage& li = train[order[s]];
        model.forward_cached(to_volume(li.image), acts);
        const Volume& probs = acts.back();
        const double p_true = probs.v[li.label - 1];
        const double loss = -std::log(p_true);
        if (!std::isfinite(loss)) {
          throw TrainingError("training diverged: non-finite loss at epoch " +
                              std::to_string(epoch + 1) + " batch " +
                              std::to_string(batch_index + 1));
        }
        epoch_loss += loss;
        Volume dlogits = probs;
        dlogits.v[li.label - 1] -= 1.0;
        model.backward_from_logits(acts, dlogits, &pgrads);
      }
      const double step = cfg.learning_rate / n;
      for (std::size_t i = 0; i < layers.size(); ++i) {
        auto w = layers[i]->params();
        const auto& g = pgrads[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
          w[j] = static_cast<float>(w[j] - step * g[j]);
        }
      }
      batch_start = batch_end;
      ++batch_index;
    }
    report.epoch_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    if (cfg.verbose) {
      std::fprintf(stderr, "epoch %d/%d loss %.5f\n", epoch + 1, cfg.epochs,
                   report.epoch_loss.back());
    }
  }
  report.train_accuracy = evaluate_accuracy(model, train);
  if (!test.empty()) report.test_accuracy = evaluate_accuracy(model, test);
  return report;
}

// ------------------------------------------------------------ factories

Arch arch_from_string(const std::string& name) {
  if (name == "linear") return Arch::Linear;
  if (name == "conv") return Arch::Conv;
  if (name == "conv2") return Arch::Conv2;
  if (name == "convnp") return Arch::ConvNp;
  if (name == "convbn") return Arch::ConvBn;
  throw ParameterError("unknown architecture '" + name +
                       "' (linear|conv|convnp|conv2|convbn)");
}

std::string arch_to_string(Arch arch) {
  switch (arch) {
    case Arch::Linear: return "linear";
    case Arch::Conv: return "conv";
    case Arch::ConvNp: return "convnp";
    case Arch::Conv2: return "conv2";
    case Arch::ConvBn: return "convbn";
  }
  return "?";
}

Model make_model(Arch arch, ImageShape input, int classes,
                 std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::unique_ptr<Layer>> layers;
  const auto flat = [](ImageShape s) {
    return s.channels * s.width * s.height;
  };
  switch (arch) {
    case Arch::Linear: {
      layers.push_back(
          std::make_unique<DenseLayer>(flat(input), classes, &rng));
      layers.push_back(std::make_unique<SoftmaxLayer>());
      break;
    }
    case Arch::Conv: {
      layers.push_back(std::make_unique<ConvLayer>(input.channels, 8, 5, 5, 1,
                                                   Padding::Valid, &rng));
      layers.push_back(std::make_unique<ReluLayer>());
      layers.push_back(std::make_unique<MaxPoolLayer>(2, 2, 2));
      ImageShape s = input;
      for (std::size_t i = 0; i < layers.size(); ++i) s = layers[i]->out_shape(s);
      layers.push_back(std::make_unique<DenseLayer>(flat(s), classes, &rng));
      layers.push_back(std::make_unique<SoftmaxLayer>());
      break;
    }
    case Arch::ConvNp: {
      // pool-free variant: single valid conv straight into the classifier
      layers.push_back(std::make_unique<ConvLayer>(input.channels, 6, 5, 5, 1,
                                                   Padding::Valid, &rng));
      layers.push_back(std::make_unique<ReluLayer>());
      ImageShape s = input;
      for (std::size_t i = 0; i < layers.size(); ++i) s = layers[i]->out_shape(s);
      layers.push_back(std::make_unique<DenseLayer>(flat(s), classes, &rng));
      layers.push_back(std::make_unique<SoftmaxLayer>());
      break;
    }
    case Arch::Conv2: {
      layers.push_back(std::make_unique<ConvLayer>(input.channels, 8, 5, 5, 1,
                                                   Padding::Valid, &rng));
      layers.push_back(std::make_unique<ReluLayer>());
      layers.push_back(std::make_unique<MaxPoolLayer>(2, 2, 2));
      layers.push_back(
          std::make_unique<ConvLayer>(8, 16, 3, 3, 1, Padding::Valid, &rng));
      layers.push_back(std::make_unique<ReluLayer>());
      layers.push_back(std::make_unique<MaxPoolLayer>(2, 2, 2));
      ImageShape s = input;
      for (std::size_t i = 0; i < layers.size(); ++i) s = layers[i]->out_shape(s);
      layers.push_back(std::make_unique<DenseLayer>(flat(s), classes, &rng));
      layers.push_back(std::make_unique<SoftmaxLayer>());
      break;
    }
    case Arch::ConvBn: {
      layers.push_back(std::make_unique<ConvLayer>(input.channels, 8, 5, 5, 1,
                                                   Padding::Valid, &rng));
      // identity-initialized inference statistics; fixed thereafter
      std::vector<float> gamma(8, 1.0f), beta(8, 0.0f), mean(8, 0.0f),
          var(8, 1.0f);
      layers.push_back(std::make_unique<BatchNormInferenceLayer>(
          gamma, beta, mean, var));
      layers.push_back(std::make_unique<ReluLayer>());
      layers.push_back(std::make_unique<MaxPoolLayer>(2, 2, 2));
      ImageShape s = input;
      for (std::size_t i = 0; i < layers.size(); ++i) s = layers[i]->out_shape(s);
      layers.push_back(std::make_unique<DenseLayer>(flat(s), classes, &rng));
      layers.push_back(std::make_unique<SoftmaxLayer>());
      break;
    }
  }
  return Model(input, classes, std::move(layers));
}

}  // namespace bbadv
