#pragma once

#include "chidek/attention.hpp"
#include "chidek/encoder.hpp"
#include "chidek/geometry.hpp"
#include "chidek/tensor.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace chidek {

struct ModelConfig {
  int h = 64;    // hidden width, also the number of determinant kernels
  int d_p = 32;  // kernel projection dimension
  int L = 4;     // cross-attention layers
  int H = 2;     // heads
  int G = 64;    // GKPT channels
  int d_f = 52;  // atom feature width
  RankStrategy rank_strategy = RankStrategy::QrRetraction;
  int n_classes = 2;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;

  /// h=8, d_p=4, L=2, H=2, G=8 used by gradient audits.
  static ModelConfig tiny();
};

struct ModelParams {
  EncoderParams encoder;
  GkptParams gkpt;
  std::vector<LayerParams> layers;
  Mlp predictor;  // h -> h -> n_classes

  /// Every learnable tensor in a stable order with stable names.
  ParamList tensors();
  ModelParams zeros_like() const;
};

ModelParams init_params(const ModelConfig& config);

/// All intermediates of a forward pass.
struct ForwardTrace {
  AtomPartition partition;
  EncodedMolecule encoded;
  std::vector<Eigen::MatrixXd> h_c;  // L + 1 entries; h_c[0] from the encoder
  std::vector<PairBias> bias;        // L + 1 entries; bias[0] from GKPT
  std::vector<std::vector<Eigen::MatrixXd>> attention;  // per layer, per head
  Eigen::VectorXd pooled;
  Eigen::VectorXd logits;
};

ForwardTrace forward_trace(const ModelConfig& config, const ModelParams& params, const Molecule& mol,
                           const KernelOptions& opts = {});

/// Logits = W2 gelu(W1 pooled + b1) + b2.
Eigen::VectorXd forward(const ModelConfig& config, const ModelParams& params, const Molecule& mol);

/// Pooled representation before the predictor head.
Eigen::VectorXd embed(const ModelConfig& config, const ModelParams& params, const Molecule& mol);

/// Accumulates parameter gradients of a scalar loss with upstream d_logits.
void backward(const ModelConfig& config, const ModelParams& params, const Molecule& mol, const ForwardTrace& trace,
              const Eigen::VectorXd& d_logits, ModelParams& grad, const KernelOptions& opts = {});

/// Softmax cross-entropy; writes dL/dlogits when `d_logits` is non-null.
double loss_classify(const Eigen::VectorXd& logits, int label, Eigen::VectorXd* d_logits = nullptr);

/// max(0, margin - (score_hi - score_lo)); gradients w.r.t. both scores.
double loss_margin_rank(double score_hi, double score_lo, double margin, double* d_hi = nullptr,
                        double* d_lo = nullptr);

/// Mean squared error over the output vector.
double loss_mse(const Eigen::VectorXd& pred, const Eigen::VectorXd& target, Eigen::VectorXd* d_pred = nullptr);

/// Final-layer head-averaged attention, one row per chiral query (token
/// excluded), columns in key order (related atoms then non-chiral atoms).
struct AttentionExport {
  std::vector<int> key_atoms;
  Eigen::MatrixXd weights;
};

AttentionExport export_attention(const ForwardTrace& trace);

}  // namespace chidek
