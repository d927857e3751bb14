#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "docnli/errors.hpp"

namespace docnli {

struct EncoderConfig {
  int vocab_size = 0;
  int hidden_dim = 64;
  int num_layers = 2;
  int num_heads = 4;
  int ffn_dim = 128;
  int max_positions = 512;
  double dropout = 0.1;
  int nli_classes = 3;  // 2 in the oracle-evidence binary mode

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

struct TensorSpec {
  std::string name;
  std::ptrdiff_t offset = 0;
  int rows = 0;
  int cols = 0;
  bool weight_decay = false;  // biases and LayerNorm params are exempt

  std::ptrdiff_t size() const { return static_cast<std::ptrdiff_t>(rows) * cols; }
};

// All trainable tensors in one flat double vector with named views. The flat
// layout makes the optimizer, checkpointing and finite differences uniform.
class ModelParams {
 public:
  explicit ModelParams(const EncoderConfig& config);  // zero-initialized

  // Truncated normal (sigma 0.02, cut at two sigma) for weights and
  // embeddings, ones for LayerNorm gains, zeros for biases.
  static ModelParams random_init(const EncoderConfig& config, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }
  Eigen::VectorXd& flat() { return values_; }
  const Eigen::VectorXd& flat() const { return values_; }
  std::ptrdiff_t size() const { return values_.size(); }

  Eigen::Map<Eigen::MatrixXd> tensor(const std::string& name);
  Eigen::Map<const Eigen::MatrixXd> tensor(const std::string& name) const;
  const std::vector<TensorSpec>& specs() const { return specs_; }

  void zero_heads();  // span + NLI head tensors to zero

  void save(const std::string& path) const;
  static ModelParams load(const std::string& path);

 private:
  EncoderConfig config_;
  std::vector<TensorSpec> specs_;
  Eigen::VectorXd values_;

  const TensorSpec& spec(const std::string& name) const;
};

// One training-step forward over a single sequence with every intermediate
// cached for the manual backward pass. Dropout applies only when a dropout rng
// is supplied; evaluation passes are exact and deterministic.
class EncoderPass {
 public:
  explicit EncoderPass(const ModelParams& params);
  ~EncoderPass();

  const Eigen::MatrixXd& run(const std::vector<int>& token_ids,
                             const std::vector<int>& segment_ids,
                             const std::vector<int>& attention_mask,
                             std::mt19937_64* dropout_rng);

  // d_hidden: dL/d(final hidden states); accumulates parameter gradients.
  void backward(const Eigen::MatrixXd& d_hidden, Eigen::VectorXd& grad);

 private:
  struct LayerCache;
  const ModelParams& params_;
  std::vector<int> token_ids_;
  std::vector<int> segment_ids_;
  Eigen::VectorXd mask_bias_;   // 0 for real tokens, large negative for padding
  Eigen::MatrixXd embedded_;    // pre-LayerNorm embedding sum
  Eigen::MatrixXd emb_normed_;  // cached normalized embedding (x-hat)
  Eigen::VectorXd emb_inv_std_;
  Eigen::MatrixXd emb_dropout_mask_;
  Eigen::MatrixXd h0_;  // encoder input after embedding LN + dropout
  std::vector<std::unique_ptr<LayerCache>> layers_;
  Eigen::MatrixXd final_;
  bool training_ = false;

  Eigen::Map<const Eigen::MatrixXd> t(const std::string& name) const {
    return params_.tensor(name);
  }
};

struct AdamWConfig {
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.1;
  int warmup_steps = 1000;
  double max_grad_norm = 1.0;
};

// Adaptive moments with decoupled weight decay, linear warmup and global-norm
// gradient clipping.
class AdamW {
 public:
  AdamW(std::ptrdiff_t size, const AdamWConfig& config);
  void step(ModelParams& params, Eigen::VectorXd& grad);
  int steps_taken() const { return step_; }

 private:
  AdamWConfig config_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  int step_ = 0;
};

}  // namespace docnli
