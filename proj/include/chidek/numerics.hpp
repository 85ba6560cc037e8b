#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <string>

namespace chidek {

/// Thin QR of a d_p x 3 matrix. Q has orthonormal columns; R is upper
/// triangular with a signed diagonal.
struct QrResult {
  Eigen::MatrixXd q;  // d_p x 3
  Eigen::Matrix3d r;
};

enum class QrSign {
  // Householder factors with the third column of Q flipped, if needed, so
  // that the leading 3x3 block of Q has positive determinant. The orientation
  // then depends only on the column space, which makes sign(det R) track
  // sign(det M) for O = W M with W fixed.
  Oriented,
  // Diagonal of R made non-negative (the Gram-Schmidt convention).
  PositiveDiagonal,
};

QrResult qr_thin(const Eigen::MatrixXd& a, QrSign sign = QrSign::Oriented);

/// Cofactor-expansion determinant.
double det3(const Eigen::Matrix3d& a);

/// sqrt(det(W^T W)) for a d_p x 3 matrix; 0 when the Gram determinant is
/// below 1e-14.
double gram_sqrt_det(const Eigen::MatrixXd& w);

inline constexpr double kLayerNormEps = 1e-5;

// Layer normalization over a vector (population variance).
Eigen::VectorXd layer_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& gamma,
                           const Eigen::VectorXd& beta, double eps = kLayerNormEps);

struct LayerNormGrad {
  Eigen::VectorXd dx;
  Eigen::VectorXd dgamma;
  Eigen::VectorXd dbeta;
};

LayerNormGrad layer_norm_backward(const Eigen::VectorXd& x, const Eigen::VectorXd& gamma,
                                  const Eigen::VectorXd& dy, double eps = kLayerNormEps);

// Row-wise variants; gradients of gamma/beta are accumulated into the
// provided vectors.
Eigen::MatrixXd layer_norm_rows(const Eigen::MatrixXd& x, const Eigen::VectorXd& gamma,
                                const Eigen::VectorXd& beta, double eps = kLayerNormEps);
Eigen::MatrixXd layer_norm_rows_backward(const Eigen::MatrixXd& x, const Eigen::VectorXd& gamma,
                                         const Eigen::MatrixXd& dy, Eigen::VectorXd& dgamma,
                                         Eigen::VectorXd& dbeta, double eps = kLayerNormEps);

/// Normal density N(x; mu, sigma). Throws ArgumentError for sigma <= 0.
double gaussian(double x, double mu, double sigma);

// Exact (erf) GELU and its derivative.
double gelu(double x);
double gelu_grad(double x);

// Softmax over each row, max-shifted.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

using ScalarFn = std::function<double(const Eigen::VectorXd&)>;

/// Central differences (f(t + h e_i) - f(t - h e_i)) / 2h. Throws OracleError
/// on a non-finite evaluation.
Eigen::VectorXd finite_diff_grad(const ScalarFn& f, const Eigen::VectorXd& theta, double h = 1e-5);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  bool passed = true;
};

/// Per-entry |a - n| / max(|a|, |n|, floor).
GradCheckReport compare_gradients(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric,
                                  double tol, double floor = 1e-6);

}  // namespace chidek
