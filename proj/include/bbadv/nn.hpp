#ifndef BBADV_NN_HPP
#define BBADV_NN_HPP

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bbadv/image.hpp"
#include "bbadv/oracle.hpp"
#include "bbadv/rng.hpp"

namespace bbadv {

/// Activation / gradient tensor. Weights are stored as 32-bit floats (and
/// serialize bit-exactly); all arithmetic runs in double so that analytic
/// and finite-difference gradients agree to tight tolerances.
struct Volume {
  int c = 0;
  int w = 0;
  int h = 0;
  std::vector<double> v;

  Volume() = default;
  Volume(int c_, int w_, int h_)
      : c(c_), w(w_), h(h_),
        v(static_cast<std::size_t>(c_) * w_ * h_, 0.0) {}

  // 0-based access; engine-internal hot paths skip range checks.
  double& at(int b, int x, int y) {
    return v[(static_cast<std::size_t>(b) * w + x) * h + y];
  }
  double at(int b, int x, int y) const {
    return v[(static_cast<std::size_t>(b) * w + x) * h + y];
  }
  std::size_t size() const { return v.size(); }
  ImageShape shape() const { return {c, w, h}; }
};

Volume to_volume(const Image& img);

enum class LayerKind : std::uint32_t {
  Dense = 1,
  Conv = 2,
  Relu = 3,
  MaxPool = 4,
  BatchNormInference = 5,
  Softmax = 6,
};

enum class Padding : std::uint32_t { Valid = 0, Same = 1 };

class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  virtual ImageShape out_shape(ImageShape in) const = 0;
  virtual void forward(const Volume& in, Volume& out) const = 0;

  /// Propagates dout (gradient w.r.t. this layer's output) to din. When
  /// param_grads is non-null it must match params().size() and receives
  /// accumulated parameter gradients.
  virtual void backward(const Volume& in, const Volume& out,
                        const Volume& dout, Volume& din,
                        std::vector<double>* param_grads) const = 0;

  /// Trainable parameters as one flat span; empty for parameterless layers
  /// and for batch-norm (fixed statistics, not trained).
  virtual std::span<float> params() { return {}; }
  virtual std::span<const float> params() const { return {}; }

  virtual void write_body(std::ostream& os) const = 0;
  virtual std::string summary(ImageShape in) const = 0;
};

class DenseLayer final : public Layer {
 public:
  DenseLayer(int in_size, int units, Rng* init);
  DenseLayer(int in_size, int units, std::vector<float> weights);

  LayerKind kind() const override { return LayerKind::Dense; }
  ImageShape out_shape(ImageShape in) const override;
  void forward(const Volume& in, Volume& out) const override;
  void backward(const Volume& in, const Volume& out, const Volume& dout,
                Volume& din, std::vector<double>* param_grads) const override;
  std::span<float> params() override { return params_; }
  std::span<const float> params() const override { return params_; }
  void write_body(std::ostream& os) const override;
  std::string summary(ImageShape in) const override;

  int in_size() const { return in_size_; }
  int units() const { return units_; }

 private:
  int in_size_;
  int units_;
  std::vector<float> params_;  // W row-major [units x in_size], then bias
};

class ConvLayer final : public Layer {
 public:
  ConvLayer(int in_channels, int out_channels, int kw, int kh, int stride,
            Padding pad, Rng* init);
  ConvLayer(int in_channels, int out_channels, int kw, int kh, int stride,
            Padding pad, std::vector<float> weights);

  LayerKind kind() const override { return LayerKind::Conv; }
  ImageShape out_shape(ImageShape in) const override;
  void forward(const Volume& in, Volume& out) const override;
  void backward(const Volume& in, const Volume& out, const Volume& dout,
                Volume& din, std::vector<double>* param_grads) const override;
  std::span<float> params() override { return params_; }
  std::span<const float> params() const override { return params_; }
  void write_body(std::ostream& os) const override;
  std::string summary(ImageShape in) const override;

 private:
  void pad_amounts(ImageShape in, int& px, int& py) const;

  int in_c_, out_c_, kw_, kh_, stride_;
  Padding pad_;
  std::vector<float> params_;  // kernels [oc][ic][kx][ky], then bias [oc]
};

class ReluLayer final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::Relu; }
  ImageShape out_shape(ImageShape in) const override { return in; }
  void forward(const Volume& in, Volume& out) const override;
  void backward(const Volume& in, const Volume& out, const Volume& dout,
                Volume& din, std::vector<double>* param_grads) const override;
  void write_body(std::ostream& os) const override;
  std::string summary(ImageShape in) const override;
};

class MaxPoolLayer final : public Layer {
 public:
  MaxPoolLayer(int pw, int ph, int stride);

  LayerKind kind() const override { return LayerKind::MaxPool; }
  ImageShape out_shape(ImageShape in) const override;
  void forward(const Volume& in, Volume& out) const override;
  void backward(const Volume& in, const Volume& out, const Volume& dout,
                Volume& din, std::vector<double>* param_grads) const override;
  void write_body(std::ostream& os) const override;
  std::string summary(ImageShape in) const override;

 private:
  int pw_, ph_, stride_;
};

/// Inference-mode batch normalization: a fixed per-channel affine built
/// from frozen scale/shift/mean/variance. Never trained.
class BatchNormInferenceLayer final : public Layer {
 public:
  BatchNormInferenceLayer(std::vector<float> gamma, std::vector<float> beta,
                          std::vector<float> mean, std::vector<float> variance);

  LayerKind kind() const override { return LayerKind::BatchNormInference; }
  ImageShape out_shape(ImageShape in) const override;
  void forward(const Volume& in, Volume& out) const override;
  void backward(const Volume& in, const Volume& out, const Volume& dout,
                Volume& din, std::vector<double>* param_grads) const override;
  void write_body(std::ostream& os) const override;
  std::string summary(ImageShape in) const override;

  static constexpr double kEps = 1e-5;

 private:
  std::vector<float> gamma_, beta_, mean_, var_;
};

class SoftmaxLayer final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::Softmax; }
  ImageShape out_shape(ImageShape in) const override;
  void forward(const Volume& in, Volume& out) const override;
  void backward(const Volume& in, const Volume& out, const Volume& dout,
                Volume& din, std::vector<double>* param_grads) const override;
  void write_body(std::ostream& os) const override;
  std::string summary(ImageShape in) const override;
};

/// A sequential network ending in exactly one softmax. The default oracle
/// for desk-scale runs, and the source of analytic input gradients.
class Model {
 public:
  Model(ImageShape input, int classes,
        std::vector<std::unique_ptr<Layer>> layers);

  ImageShape input_shape() const { return input_; }
  int class_count() const { return classes_; }
  std::size_t layer_count() const { return layers_.size(); }
  std::vector<std::unique_ptr<Layer>>& layers() { return layers_; }
  const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }

  /// Deterministic forward pass; throws ShapeError on input mismatch and
  /// NumericError if the output is non-finite.
  ProbVector forward(const Image& img) const;

  /// d(probability of label)/d(input coordinate), via backpropagation.
  Volume input_gradient(const Image& img, int label) const;

  /// d(cross-entropy loss against target)/d(input coordinate).
  Volume loss_input_gradient(const Image& img, int target) const;

  // Trainer plumbing: cached activations and a backward pass seeded at the
  // softmax input with d(loss)/d(logits).
  void forward_cached(const Volume& in, std::vector<Volume>& acts) const;
  Volume backward_from_logits(const std::vector<Volume>& acts,
                              const Volume& dlogits,
                              std::vector<std::vector<double>>* pgrads) const;

  void save(const std::string& path) const;
  std::vector<std::uint8_t> save_bytes() const;
  static Model load(const std::string& path);
  static Model load_bytes(std::span<const std::uint8_t> bytes);

  std::string describe() const;

 private:
  Volume backward_chain(const std::vector<Volume>& acts, Volume grad,
                        int from_layer,
                        std::vector<std::vector<double>>* pgrads) const;

  ImageShape input_;
  int classes_;
  std::vector<std::unique_ptr<Layer>> layers_;
};

/// Oracle over an in-process model. Non-owning: the model must outlive the
/// oracle and stay unmodified while sessions are live.
class ModelOracle final : public Oracle {
 public:
  explicit ModelOracle(const Model& model) : model_(&model) {}

  int class_count() const override { return model_->class_count(); }
  std::optional<ImageShape> input_shape() const override {
    return model_->input_shape();
  }
  ProbVector predict(const Image& img) const override {
    return model_->forward(img);
  }

 private:
  const Model* model_;
};

struct TrainConfig {
  double learning_rate = 0.1;
  int epochs = 10;
  int batch_size = 32;
  std::uint64_t seed = 1;
  bool verbose = false;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  double train_accuracy = 0.0;
  std::optional<double> test_accuracy;
};

/// Minibatch SGD with cross-entropy loss. Deterministic given the seed.
/// Throws TrainingError (with epoch/batch diagnostics) if the loss goes
/// non-finite.
TrainReport train_sgd(Model& model, const std::vector<LabeledImage>& train,
                      const std::vector<LabeledImage>& test,
                      const TrainConfig& cfg);

double evaluate_accuracy(const Model& model,
                         const std::vector<LabeledImage>& data);

enum class Arch { Linear, Conv, ConvNp, Conv2, ConvBn };

Arch arch_from_string(const std::string& name);
std::string arch_to_string(Arch arch);

/// Seeded builders for the stock toy architectures.
Model make_model(Arch arch, ImageShape input, int classes, std::uint64_t seed);

}  // namespace bbadv

#endif
