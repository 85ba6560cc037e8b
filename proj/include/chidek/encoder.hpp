#pragma once

#include "chidek/geometry.hpp"
#include "chidek/tensor.hpp"

#include <Eigen/Dense>

#include <random>
#include <vector>

namespace chidek {

/// k projection slices (d_p x 3 each) plus the layer-norm gain shared
/// across kernels and columns. The normalization has no shift term: any
/// constant offset added to O would break rotation invariance.
struct KernelBank {
  std::vector<Eigen::MatrixXd> w;
  Eigen::VectorXd gamma;

  std::size_t kernels() const { return w.size(); }
  Eigen::Index projection_dim() const { return gamma.size(); }
  void collect(const std::string& prefix, ParamList& out);
};

enum class RankStrategy { QrRetraction, Regularize, None };

const char* to_string(RankStrategy s);
RankStrategy parse_rank_strategy(const std::string& s);

struct KernelOptions {
  // Test hook: false skips the column-wise layer normalization.
  bool layer_norm = true;
};

/// Chiral determinant kernels. For every chirality matrix b and slice k:
/// O = w_k M_b, layer-normalized along d_p (per-column mean, variance
/// pooled over the three columns, gain gamma), then
/// out(b, k) = det(R) of the oriented thin QR. Returns B x k.
Eigen::MatrixXd kernel_forward(const KernelBank& bank, const std::vector<Eigen::Matrix3d>& mcs,
                               const KernelOptions& opts = {});

/// Reverse pass of kernel_forward. Uses det(R) = s sqrt(det(O^T O)) with s
/// locally constant, so d det(R) / dO = det(R) O (O^T O)^{-1}; the
/// contribution is dropped when det(O^T O) < 1e-14. Parameter gradients are
/// accumulated into `grad`; gradients w.r.t. the chirality matrices are
/// written to `d_mcs` when it is non-null.
void kernel_backward(const KernelBank& bank, const std::vector<Eigen::Matrix3d>& mcs,
                     const Eigen::MatrixXd& d_out, KernelBank& grad,
                     std::vector<Eigen::Matrix3d>* d_mcs = nullptr, const KernelOptions& opts = {});

/// Sum over slices of ||w_k^T w_k - I_3||_F^2.
double regularization_loss(const KernelBank& bank);
/// Accumulates scale * dL_reg/dw into grad.w.
void regularization_backward(const KernelBank& bank, double scale, KernelBank& grad);

/// Replaces each slice by the orthonormal factor of its thin QR (positive
/// diagonal convention, so an orthonormal slice is a fixed point). Throws
/// DegeneracyError naming the first rank-deficient slice.
KernelBank retract_orthonormal(const KernelBank& bank);

struct EncoderParams {
  KernelBank kernels;
  Mlp proj_c;
  Mlp proj_r;
  Mlp proj_n;
  Eigen::VectorXd global_token;
  RankStrategy rank_strategy = RankStrategy::QrRetraction;

  void collect(const std::string& prefix, ParamList& out);
};

struct EncoderShape {
  Eigen::Index hidden = 64;
  Eigen::Index projection = 32;
  Eigen::Index features = 52;
};

/// Random initialization: Glorot-uniform projectors, orthonormal kernel
/// slices, unit gamma, small Gaussian global token.
EncoderParams init_encoder(const EncoderShape& shape, RankStrategy strategy, std::mt19937_64& rng);

/// Hidden states entering the cross-attention stack. h_c has the global
/// token as row 0 followed by one row per chiral unit (annotation order);
/// h_r and h_n follow ascending atom index.
struct EncodedMolecule {
  Eigen::MatrixXd h_c;
  Eigen::MatrixXd h_r;
  Eigen::MatrixXd h_n;
  std::vector<Eigen::Vector3d> chiral_positions;  // reference point per unit
  Coords related_positions;
  Coords nonchiral_positions;
};

/// Feature row fed to proj_c for a unit: the center atom's features, or the
/// mean over the two axis atoms.
Eigen::RowVectorXd chiral_features(const Molecule& mol, const ChiralUnit& unit);

EncodedMolecule encode(const EncoderParams& params, const Molecule& mol, const AtomPartition& partition,
                       const KernelOptions& opts = {});

/// Reverse pass of encode given gradients w.r.t. h_c, h_r, h_n. When
/// `d_coords` is non-null, receives the gradient through the chirality
/// matrices (distance paths are handled by the attention module).
void encode_backward(const EncoderParams& params, const Molecule& mol, const AtomPartition& partition,
                     const Eigen::MatrixXd& d_h_c, const Eigen::MatrixXd& d_h_r,
                     const Eigen::MatrixXd& d_h_n, EncoderParams& grad, Coords* d_coords = nullptr,
                     const KernelOptions& opts = {});

}  // namespace chidek
