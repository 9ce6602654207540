#pragma once

// Shared neural building blocks used by both fusion models.

#include "mmfuse/autodiff.hpp"

#include <random>
#include <string>

namespace mmfuse::nn {

using Rng = std::mt19937_64;

// Uniform Xavier/Glorot initialisation for a fan_in x fan_out weight.
Mat xavier_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng);

// y = x W + b, with W stored as in x out so rows of x are tokens.
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng, bool bias = true);

  ad::Var forward(ad::Tape& tape, ad::Var x);
  void collect(ParamList& out);

  Eigen::Index in_features() const { return weight.value.rows(); }
  Eigen::Index out_features() const { return weight.value.cols(); }
  bool has_bias() const { return has_bias_; }

  Parameter weight;
  Parameter bias;

 private:
  bool has_bias_ = true;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, Eigen::Index dim);

  ad::Var forward(ad::Tape& tape, ad::Var x);
  void collect(ParamList& out);

  Parameter gain;
  Parameter shift;
};

// Multi-head scaled dot-product attention. Queries and keys/values may come
// from different sequences (cross-attention); key positions with a zero in
// key_mask receive no attention weight.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, Eigen::Index d_model, int n_heads, Rng& rng);

  ad::Var forward(ad::Tape& tape, ad::Var query, ad::Var key_value, const Mask& key_mask);
  void collect(ParamList& out);

  int heads() const { return n_heads_; }
  Eigen::Index model_dim() const { return q_proj.in_features(); }

  Linear q_proj;
  Linear k_proj;
  Linear v_proj;
  Linear out_proj;

 private:
  int n_heads_ = 1;
};

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(const std::string& name, Eigen::Index dim, Eigen::Index hidden, Rng& rng);

  ad::Var forward(ad::Tape& tape, ad::Var x);
  void collect(ParamList& out);

  Linear up;
  Linear down;
};

// Pre-norm encoder layer:
//   x = x + MHA(LN(x));  x = x + FFN(LN(x));  invalid rows re-zeroed.
class EncoderLayer {
 public:
  EncoderLayer() = default;
  EncoderLayer(const std::string& name, Eigen::Index dim, int n_heads, Eigen::Index ffn_hidden, Rng& rng);

  ad::Var forward(ad::Tape& tape, ad::Var x, const Mask& mask);
  void collect(ParamList& out);

  LayerNorm norm_attn;
  MultiHeadAttention attn;
  LayerNorm norm_ffn;
  FeedForward ffn;
};

// Fixed sinusoidal table, T x dim.
Mat sinusoidal_positions(Eigen::Index length, Eigen::Index dim);

// Inverted dropout: kept units scaled by 1/(1-p). Identity when !training
// or p == 0.
ad::Var dropout(ad::Tape& tape, ad::Var x, double p, bool training, Rng& rng);

}  // namespace mmfuse::nn
