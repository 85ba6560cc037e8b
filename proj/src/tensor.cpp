#include "chidek/tensor.hpp"

#include "chidek/errors.hpp"
#include "chidek/numerics.hpp"

namespace chidek {

Eigen::VectorXd flatten(const ParamList& params) {
  Eigen::VectorXd flat(total_size(params));
  Eigen::Index off = 0;
  for (const auto& p : params) {
    flat.segment(off, p.size()) = Eigen::Map<const Eigen::VectorXd>(p.data, p.size());
    off += p.size();
  }
  return flat;
}

void unflatten(const Eigen::VectorXd& flat, const ParamList& params) {
  if (flat.size() != total_size(params)) throw ShapeError("unflatten: size mismatch");
  Eigen::Index off = 0;
  for (const auto& p : params) {
    Eigen::Map<Eigen::VectorXd>(p.data, p.size()) = flat.segment(off, p.size());
    off += p.size();
  }
}

Mlp Mlp::zeros(Eigen::Index in, Eigen::Index hidden, Eigen::Index out) {
  return {Eigen::MatrixXd::Zero(hidden, in), Eigen::VectorXd::Zero(hidden),
          Eigen::MatrixXd::Zero(out, hidden), Eigen::VectorXd::Zero(out)};
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd z = x * w1.transpose();
  z.rowwise() += b1.transpose();
  z = z.unaryExpr([](double v) { return gelu(v); });
  Eigen::MatrixXd y = z * w2.transpose();
  y.rowwise() += b2.transpose();
  return y;
}

Eigen::MatrixXd Mlp::backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& dy, Mlp& grad) const {
  Eigen::MatrixXd z = x * w1.transpose();
  z.rowwise() += b1.transpose();
  const Eigen::MatrixXd a = z.unaryExpr([](double v) { return gelu(v); });
  grad.w2.noalias() += dy.transpose() * a;
  grad.b2 += dy.colwise().sum().transpose();
  Eigen::MatrixXd dz = (dy * w2).cwiseProduct(z.unaryExpr([](double v) { return gelu_grad(v); }));
  grad.w1.noalias() += dz.transpose() * x;
  grad.b1 += dz.colwise().sum().transpose();
  return dz * w1;
}

void Mlp::collect(const std::string& prefix, ParamList& out) {
  add_param(out, prefix + ".w1", w1);
  add_param(out, prefix + ".b1", b1);
  add_param(out, prefix + ".w2", w2);
  add_param(out, prefix + ".b2", b2);
}

}  // namespace chidek
