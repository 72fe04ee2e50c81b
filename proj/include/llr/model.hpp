#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "llr/corpus.hpp"
#include "llr/spectral.hpp"

namespace llr {

struct ModelConfig {
  std::size_t vocab = 64;
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  double ffn_mult = 4.0;
  std::size_t context = 64;
  std::uint64_t seed = 0;
  bool tie_output_head = false;
  double init_std = 0.02;

  void validate() const;
  std::size_t ffn_hidden() const;
  std::size_t head_dim() const { return d_model / n_heads; }
};

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S> struct Parameter {
  std::string name;
  Role role = Role::Other2D;
  Mat<S> value;
  bool decay = true;
};

/// Next-token batch: row r of `inputs` predicts row r of `targets`; rows are
/// grouped into `batch` sequences of `seq_len` positions.
struct Batch {
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  std::vector<Token> inputs;
  std::vector<Token> targets;
};

/// Builds a batch from sequences of identical length L+1.
Batch make_batch(const std::vector<std::vector<Token>> &sequences);

/// LLaMa-style decoder: token embedding, pre-RMSNorm blocks with rotary
/// causal attention and a SwiGLU feed-forward, final RMSNorm, output head.
/// Weight matrices are stored (out, in); a linear layer computes x Wᵀ.
template <typename S> class Transformer {
public:
  explicit Transformer(const ModelConfig &cfg);

  const ModelConfig &config() const { return cfg_; }
  std::vector<Parameter<S>> &params() { return params_; }
  const std::vector<Parameter<S>> &params() const { return params_; }

  /// Mean next-token cross-entropy in nats.
  S forward_loss(const Batch &batch) const;

  /// Returns the loss and fills `grads` (one per parameter, same shapes)
  /// with d(loss_scale * loss)/dθ.
  S loss_and_grad(const Batch &batch, std::vector<Mat<S>> &grads,
                  S loss_scale = S(1)) const;

  /// Matrix parameters widened to f64, in parameter order.
  std::vector<WeightMatrix> weight_matrices() const;

private:
  struct Block {
    std::size_t attn_norm, wq, wk, wv, wo, ffn_norm, wgate, wup, wdown;
  };

  S run(const Batch &batch, std::vector<Mat<S>> *grads, S loss_scale) const;

  ModelConfig cfg_;
  std::vector<Parameter<S>> params_;
  std::vector<Block> blocks_;
  std::size_t embed_ = 0;
  std::size_t final_norm_ = 0;
  std::size_t head_ = 0; // equals embed_ when tied
  Mat<S> rope_cos_;
  Mat<S> rope_sin_;
};

extern template class Transformer<float>;
extern template class Transformer<double>;

template <typename S>
inline S forward_loss(const Transformer<S> &model, const Batch &batch) {
  return model.forward_loss(batch);
}

template <typename S>
inline std::vector<Mat<S>> backward(const Transformer<S> &model,
                                    const Batch &batch, S loss_scale = S(1)) {
  std::vector<Mat<S>> grads;
  model.loss_and_grad(batch, grads, loss_scale);
  return grads;
}

} // namespace llr
