#pragma once

#include "chidek/encoder.hpp"
#include "chidek/tensor.hpp"

#include <Eigen/Dense>

#include <random>
#include <vector>

namespace chidek {

inline constexpr int kPairTypes = 2;  // 0: chiral-related key, 1: non-chiral key
inline constexpr double kSigmaFloor = 1e-6;

/// Gaussian kernel with pair type: x' = e1[type] * dist + e2[type] per
/// channel, a Gaussian density per channel, projected to one value per head.
struct GkptParams {
  Eigen::MatrixXd e1;     // N_e x G
  Eigen::MatrixXd e2;     // N_e x G
  Eigen::VectorXd mu;     // G
  Eigen::VectorXd sigma;  // G, clamped to kSigmaFloor when used
  Eigen::MatrixXd w_p;    // G x H

  Eigen::Index channels() const { return mu.size(); }
  Eigen::Index heads() const { return w_p.cols(); }
  void collect(const std::string& prefix, ParamList& out);
};

GkptParams init_gkpt(Eigen::Index channels, Eigen::Index heads, std::mt19937_64& rng);

Eigen::VectorXd gkpt_bias(const GkptParams& params, double dist, int pair_type);
void gkpt_backward(const GkptParams& params, double dist, int pair_type, const Eigen::VectorXd& d_out,
                   GkptParams& grad);

/// Per-head additive attention logits between queries (token row first,
/// then one row per chiral unit) and keys (related atoms, then non-chiral).
struct PairBias {
  std::vector<Eigen::MatrixXd> heads;  // each (1 + n_units) x n_keys

  Eigen::Index queries() const { return heads.empty() ? 0 : heads.front().rows(); }
  Eigen::Index keys() const { return heads.empty() ? 0 : heads.front().cols(); }
  static PairBias zeros(Eigen::Index heads, Eigen::Index queries, Eigen::Index keys);
};

/// Initial bias from query-key distances; the token row is zero.
PairBias init_pair_bias(const GkptParams& params, const EncodedMolecule& enc);
void init_pair_bias_backward(const GkptParams& params, const EncodedMolecule& enc, const PairBias& d_bias,
                             GkptParams& grad);

struct LayerParams {
  Eigen::MatrixXd wq, wk_r, wv_r, wk_n, wv_n, wo;  // h x h
  Mlp ff;                                           // h -> 4h -> h
  Eigen::VectorXd ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;

  void collect(const std::string& prefix, ParamList& out);
};

LayerParams init_layer(Eigen::Index hidden, std::mt19937_64& rng);

struct AttendResult {
  Eigen::MatrixXd h_c;                   // updated queries
  PairBias bias;                         // pre-softmax logits, fed to the next layer
  std::vector<Eigen::MatrixXd> weights;  // softmax rows per head; empty without keys
};

/// One cross-attention layer. Queries come from h_c, keys/values from h_r
/// and h_n with separate projections. Per head,
///   logits = Q K^T / sqrt(h / H) + bias_in,  bias_out = logits,
/// then softmax, value mixing, output projection, residual + layer norm and
/// a GELU feed-forward with residual + layer norm. With no keys, only
/// queries may be the token row and the attention term is skipped.
AttendResult attend(const LayerParams& layer, int heads, const Eigen::MatrixXd& h_c, const Eigen::MatrixXd& h_r,
                    const Eigen::MatrixXd& h_n, const PairBias& bias_in, int layer_index = 0);

struct AttendGrad {
  Eigen::MatrixXd d_h_c;
  Eigen::MatrixXd d_h_r;
  Eigen::MatrixXd d_h_n;
  PairBias d_bias_in;
};

AttendGrad attend_backward(const LayerParams& layer, int heads, const Eigen::MatrixXd& h_c,
                           const Eigen::MatrixXd& h_r, const Eigen::MatrixXd& h_n, const PairBias& bias_in,
                           const Eigen::MatrixXd& d_h_c_out, const PairBias& d_bias_out, LayerParams& grad);

/// Token row plus the mean of the chiral rows (token alone when there are
/// none).
Eigen::VectorXd pool(const Eigen::MatrixXd& h_c_final);
Eigen::MatrixXd pool_backward(Eigen::Index rows, const Eigen::VectorXd& d_pooled);

}  // namespace chidek
