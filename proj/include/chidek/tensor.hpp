#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace chidek {

/// Non-owning view of one named parameter tensor (column-major storage).
struct ParamRef {
  std::string name;
  double* data;
  Eigen::Index rows;
  Eigen::Index cols;

  Eigen::Index size() const { return rows * cols; }
  Eigen::Map<Eigen::MatrixXd> map() const { return {data, rows, cols}; }
};

using ParamList = std::vector<ParamRef>;

inline void add_param(ParamList& out, const std::string& name, Eigen::MatrixXd& m) {
  out.push_back({name, m.data(), m.rows(), m.cols()});
}

inline void add_param(ParamList& out, const std::string& name, Eigen::VectorXd& v) {
  out.push_back({name, v.data(), v.size(), 1});
}

inline Eigen::Index total_size(const ParamList& params) {
  Eigen::Index n = 0;
  for (const auto& p : params) n += p.size();
  return n;
}

Eigen::VectorXd flatten(const ParamList& params);
void unflatten(const Eigen::VectorXd& flat, const ParamList& params);

/// Two-layer perceptron y = W2 gelu(W1 x + b1) + b2, applied row-wise.
struct Mlp {
  Eigen::MatrixXd w1;  // hidden x in
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // out x hidden
  Eigen::VectorXd b2;

  static Mlp zeros(Eigen::Index in, Eigen::Index hidden, Eigen::Index out);

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  // Accumulates parameter gradients into `grad`; returns dL/dx.
  Eigen::MatrixXd backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& dy, Mlp& grad) const;
  void collect(const std::string& prefix, ParamList& out);
};

}  // namespace chidek
