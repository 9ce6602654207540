#include "mmfuse/layers.hpp"

#include <cmath>
#include <vector>

namespace mmfuse::nn {

Mat xavier_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Mat w(fan_in, fan_out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  return w;
}

Linear::Linear(const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng, bool bias)
    : weight(name + ".weight", xavier_uniform(in, out, rng)),
      bias(name + ".bias", Mat::Zero(1, out), false),
      has_bias_(bias) {
  if (in < 1 || out < 1) throw ConfigError("Linear " + name + ": dimensions must be >= 1");
}

ad::Var Linear::forward(ad::Tape& tape, ad::Var x) {
  if (x.cols() != weight.value.rows())
    throw ShapeError("Linear " + weight.name + ": expected " + std::to_string(weight.value.rows()) +
                     " input features, got " + std::to_string(x.cols()));
  ad::Var y = ad::matmul(x, tape.param(weight));
  if (has_bias_) y = ad::add_rowvec(y, tape.param(bias));
  return y;
}

void Linear::collect(ParamList& out) {
  out.push_back(&weight);
  if (has_bias_) out.push_back(&bias);
}

LayerNorm::LayerNorm(const std::string& name, Eigen::Index dim)
    : gain(name + ".gain", Mat::Ones(1, dim), false), shift(name + ".shift", Mat::Zero(1, dim), false) {}

ad::Var LayerNorm::forward(ad::Tape& tape, ad::Var x) {
  ad::Var y = ad::layer_norm_rows(x);
  y = ad::mul_rowvec(y, tape.param(gain));
  return ad::add_rowvec(y, tape.param(shift));
}

void LayerNorm::collect(ParamList& out) {
  out.push_back(&gain);
  out.push_back(&shift);
}

MultiHeadAttention::MultiHeadAttention(const std::string& name, Eigen::Index d_model, int n_heads, Rng& rng)
    : q_proj(name + ".q", d_model, d_model, rng),
      // A key bias only shifts every score of a query by the same amount,
      // which the softmax ignores.
      k_proj(name + ".k", d_model, d_model, rng, false),
      v_proj(name + ".v", d_model, d_model, rng),
      out_proj(name + ".out", d_model, d_model, rng),
      n_heads_(n_heads) {
  if (n_heads < 1 || d_model % n_heads != 0)
    throw ConfigError("MultiHeadAttention " + name + ": d_model must be divisible by n_heads");
}

ad::Var MultiHeadAttention::forward(ad::Tape& tape, ad::Var query, ad::Var key_value, const Mask& key_mask) {
  ad::Var q = q_proj.forward(tape, query);
  ad::Var k = k_proj.forward(tape, key_value);
  ad::Var v = v_proj.forward(tape, key_value);
  const Eigen::Index head_dim = q.cols() / n_heads_;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<ad::Var> heads;
  heads.reserve(static_cast<std::size_t>(n_heads_));
  for (int h = 0; h < n_heads_; ++h) {
    ad::Var qh = ad::slice_cols(q, h * head_dim, head_dim);
    ad::Var kh = ad::slice_cols(k, h * head_dim, head_dim);
    ad::Var vh = ad::slice_cols(v, h * head_dim, head_dim);
    ad::Var scores = ad::scale(ad::matmul_nt(qh, kh), inv_sqrt);
    ad::Var weights = ad::masked_softmax_rows(scores, key_mask);
    heads.push_back(ad::matmul(weights, vh));
  }
  ad::Var merged = n_heads_ == 1 ? heads.front() : ad::concat_cols(heads);
  return out_proj.forward(tape, merged);
}

void MultiHeadAttention::collect(ParamList& out) {
  q_proj.collect(out);
  k_proj.collect(out);
  v_proj.collect(out);
  out_proj.collect(out);
}

FeedForward::FeedForward(const std::string& name, Eigen::Index dim, Eigen::Index hidden, Rng& rng)
    : up(name + ".up", dim, hidden, rng), down(name + ".down", hidden, dim, rng) {}

ad::Var FeedForward::forward(ad::Tape& tape, ad::Var x) {
  return down.forward(tape, ad::gelu(up.forward(tape, x)));
}

void FeedForward::collect(ParamList& out) {
  up.collect(out);
  down.collect(out);
}

EncoderLayer::EncoderLayer(const std::string& name, Eigen::Index dim, int n_heads, Eigen::Index ffn_hidden,
                           Rng& rng)
    : norm_attn(name + ".norm_attn", dim),
      attn(name + ".attn", dim, n_heads, rng),
      norm_ffn(name + ".norm_ffn", dim),
      ffn(name + ".ffn", dim, ffn_hidden, rng) {}

ad::Var EncoderLayer::forward(ad::Tape& tape, ad::Var x, const Mask& mask) {
  ad::Var h = norm_attn.forward(tape, x);
  x = ad::add(x, attn.forward(tape, h, h, mask));
  x = ad::add(x, ffn.forward(tape, norm_ffn.forward(tape, x)));
  return ad::mask_rows(x, mask);
}

void EncoderLayer::collect(ParamList& out) {
  norm_attn.collect(out);
  attn.collect(out);
  norm_ffn.collect(out);
  ffn.collect(out);
}

Mat sinusoidal_positions(Eigen::Index length, Eigen::Index dim) {
  Mat pe(length, dim);
  for (Eigen::Index t = 0; t < length; ++t) {
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      const double angle = static_cast<double>(t) * freq;
      pe(t, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

ad::Var dropout(ad::Tape& tape, ad::Var x, double p, bool training, Rng& rng) {
  if (!training || p <= 0.0) return x;
  if (p >= 1.0) throw ConfigError("dropout rate must be < 1");
  std::bernoulli_distribution keep(1.0 - p);
  Mat m(x.rows(), x.cols());
  const double s = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = keep(rng) ? s : 0.0;
  return ad::mul(x, tape.constant(std::move(m)));
}

}  // namespace mmfuse::nn
