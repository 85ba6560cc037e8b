#include "chidek/numerics.hpp"

#include "chidek/errors.hpp"

#include <cmath>
#include <numbers>

namespace chidek {

QrResult qr_thin(const Eigen::MatrixXd& a, QrSign sign) {
  const Eigen::Index m = a.rows();
  if (a.cols() != 3) throw ShapeError("qr_thin expects 3 columns, got " + std::to_string(a.cols()));
  if (m < 3) throw ShapeError("qr_thin needs at least 3 rows, got " + std::to_string(m));

  Eigen::MatrixXd work = a;
  Eigen::MatrixXd vs = Eigen::MatrixXd::Zero(m, 3);
  for (Eigen::Index k = 0; k < 3; ++k) {
    const Eigen::Index len = m - k;
    Eigen::VectorXd v = work.col(k).tail(len);
    const double norm_x = v.norm();
    if (norm_x == 0.0) continue;  // no reflection needed
    const double alpha = v(0) >= 0 ? -norm_x : norm_x;
    v(0) -= alpha;
    const double norm_v = v.norm();
    if (norm_v == 0.0) continue;
    v /= norm_v;
    auto block = work.bottomRightCorner(len, 3 - k);
    block.noalias() -= 2.0 * v * (v.transpose() * block);
    vs.col(k).tail(len) = v;
  }

  QrResult out;
  out.r = work.topRows(3).triangularView<Eigen::Upper>();
  out.q = Eigen::MatrixXd::Identity(m, 3);
  for (Eigen::Index k = 2; k >= 0; --k) {
    const Eigen::Index len = m - k;
    const auto v = vs.col(k).tail(len);
    auto block = out.q.bottomRows(len);
    block.noalias() -= 2.0 * v * (v.transpose() * block);
  }

  if (sign == QrSign::Oriented) {
    if (det3(out.q.topRows(3)) < 0.0) {
      out.q.col(2) *= -1.0;
      out.r.row(2) *= -1.0;
    }
  } else {
    for (int k = 0; k < 3; ++k) {
      if (out.r(k, k) < 0.0) {
        out.q.col(k) *= -1.0;
        out.r.row(k) *= -1.0;
      }
    }
  }
  return out;
}

double det3(const Eigen::Matrix3d& a) {
  return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
         a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
         a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
}

double gram_sqrt_det(const Eigen::MatrixXd& w) {
  if (w.cols() != 3) throw ShapeError("gram_sqrt_det expects 3 columns");
  const Eigen::Matrix3d g = w.transpose() * w;
  const double d = det3(g);
  if (d < 1e-14) return 0.0;
  return std::sqrt(d);
}

Eigen::VectorXd layer_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& gamma,
                           const Eigen::VectorXd& beta, double eps) {
  const double mean = x.mean();
  const Eigen::VectorXd c = x.array() - mean;
  const double var = c.squaredNorm() / static_cast<double>(x.size());
  const double inv = 1.0 / std::sqrt(var + eps);
  return (c * inv).cwiseProduct(gamma) + beta;
}

LayerNormGrad layer_norm_backward(const Eigen::VectorXd& x, const Eigen::VectorXd& gamma,
                                  const Eigen::VectorXd& dy, double eps) {
  const double n = static_cast<double>(x.size());
  const double mean = x.mean();
  const Eigen::VectorXd c = x.array() - mean;
  const double inv = 1.0 / std::sqrt(c.squaredNorm() / n + eps);
  const Eigen::VectorXd xhat = c * inv;
  const Eigen::VectorXd dxhat = dy.cwiseProduct(gamma);
  LayerNormGrad g;
  g.dgamma = dy.cwiseProduct(xhat);
  g.dbeta = dy;
  g.dx = inv * (dxhat.array() - dxhat.mean() - xhat.array() * (dxhat.dot(xhat) / n)).matrix();
  return g;
}

Eigen::MatrixXd layer_norm_rows(const Eigen::MatrixXd& x, const Eigen::VectorXd& gamma,
                                const Eigen::VectorXd& beta, double eps) {
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out.row(i) = layer_norm(x.row(i).transpose(), gamma, beta, eps).transpose();
  }
  return out;
}

Eigen::MatrixXd layer_norm_rows_backward(const Eigen::MatrixXd& x, const Eigen::VectorXd& gamma,
                                         const Eigen::MatrixXd& dy, Eigen::VectorXd& dgamma,
                                         Eigen::VectorXd& dbeta, double eps) {
  Eigen::MatrixXd dx(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    auto g = layer_norm_backward(x.row(i).transpose(), gamma, dy.row(i).transpose(), eps);
    dx.row(i) = g.dx.transpose();
    dgamma += g.dgamma;
    dbeta += g.dbeta;
  }
  return dx;
}

double gaussian(double x, double mu, double sigma) {
  if (!(sigma > 0.0)) throw ArgumentError("gaussian: sigma must be positive");
  const double z = (x - mu) / sigma;
  return std::exp(-0.5 * z * z) / (std::sqrt(2.0 * std::numbers::pi) * sigma);
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - mx).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

Eigen::VectorXd finite_diff_grad(const ScalarFn& f, const Eigen::VectorXd& theta, double h) {
  if (!(h > 0.0)) throw ArgumentError("finite_diff_grad: step must be positive");
  Eigen::VectorXd grad(theta.size());
  Eigen::VectorXd probe = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    probe(i) = theta(i) + h;
    const double up = f(probe);
    probe(i) = theta(i) - h;
    const double down = f(probe);
    probe(i) = theta(i);
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw OracleError("finite_diff_grad: non-finite evaluation at coordinate " + std::to_string(i));
    }
    grad(i) = (up - down) / (2.0 * h);
  }
  return grad;
}

GradCheckReport compare_gradients(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric,
                                  double tol, double floor) {
  if (analytic.size() != numeric.size()) throw ShapeError("compare_gradients: size mismatch");
  GradCheckReport rep;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double a = analytic(i), n = numeric(i);
    const double denom = std::max({std::abs(a), std::abs(n), floor});
    const double err = std::abs(a - n) / denom;
    if (!(err <= rep.max_rel_error)) {  // also catches NaN
      rep.max_rel_error = std::isnan(err) ? INFINITY : err;
      rep.worst_index = static_cast<std::size_t>(i);
    }
  }
  rep.passed = rep.max_rel_error < tol;
  return rep;
}

}  // namespace chidek
