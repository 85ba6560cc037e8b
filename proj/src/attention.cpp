#include "chidek/attention.hpp"

#include "chidek/errors.hpp"
#include "chidek/numerics.hpp"

#include <cmath>
#include <numbers>

namespace chidek {

namespace {

Eigen::MatrixXd glorot(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

double effective_sigma(double s) { return std::max(s, kSigmaFloor); }

Eigen::MatrixXd stack(const Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom) {
  Eigen::MatrixXd out(top.rows() + bottom.rows(), std::max(top.cols(), bottom.cols()));
  if (top.rows() > 0) out.topRows(top.rows()) = top;
  if (bottom.rows() > 0) out.bottomRows(bottom.rows()) = bottom;
  return out;
}

// Intermediates of one layer, recomputed by the backward pass.
struct LayerTrace {
  Eigen::MatrixXd q, k, v;
  std::vector<Eigen::MatrixXd> logits, weights;
  Eigen::MatrixXd mixed;  // concatenated head outputs
  Eigen::MatrixXd x1, y1, x2, out;
};

LayerTrace run_layer(const LayerParams& layer, int heads, const Eigen::MatrixXd& h_c, const Eigen::MatrixXd& h_r,
                     const Eigen::MatrixXd& h_n, const PairBias& bias_in, int layer_index) {
  const Eigen::Index hidden = h_c.cols();
  const Eigen::Index n_keys = h_r.rows() + h_n.rows();
  if (heads < 1 || hidden % heads != 0) throw ArgumentError("hidden width not divisible by head count");
  LayerTrace t;
  t.x1 = h_c;
  if (n_keys == 0) {
    if (h_c.rows() > 1) throw ArgumentError("attend: chiral queries without any key atoms");
  } else {
    if (static_cast<int>(bias_in.heads.size()) != heads || bias_in.queries() != h_c.rows() ||
        bias_in.keys() != n_keys) {
      throw ShapeError("attend: pair bias shape does not match queries/keys");
    }
    const Eigen::Index dh = hidden / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    t.q = h_c * layer.wq.transpose();
    t.k = stack(h_r * layer.wk_r.transpose(), h_n * layer.wk_n.transpose());
    t.v = stack(h_r * layer.wv_r.transpose(), h_n * layer.wv_n.transpose());
    t.mixed.resize(h_c.rows(), hidden);
    for (int a = 0; a < heads; ++a) {
      const auto qa = t.q.middleCols(a * dh, dh);
      const auto ka = t.k.middleCols(a * dh, dh);
      Eigen::MatrixXd s = scale * (qa * ka.transpose()) + bias_in.heads[a];
      if (!s.allFinite()) {
        throw NumericError("non-finite attention logits in layer " + std::to_string(layer_index));
      }
      Eigen::MatrixXd w = softmax_rows(s);
      t.mixed.middleCols(a * dh, dh) = w * t.v.middleCols(a * dh, dh);
      t.logits.push_back(std::move(s));
      t.weights.push_back(std::move(w));
    }
    t.x1 += t.mixed * layer.wo.transpose();
  }
  t.y1 = layer_norm_rows(t.x1, layer.ln1_gamma, layer.ln1_beta);
  t.x2 = t.y1 + layer.ff.forward(t.y1);
  t.out = layer_norm_rows(t.x2, layer.ln2_gamma, layer.ln2_beta);
  return t;
}

}  // namespace

void GkptParams::collect(const std::string& prefix, ParamList& out) {
  add_param(out, prefix + ".e1", e1);
  add_param(out, prefix + ".e2", e2);
  add_param(out, prefix + ".mu", mu);
  add_param(out, prefix + ".sigma", sigma);
  add_param(out, prefix + ".w_p", w_p);
}

GkptParams init_gkpt(Eigen::Index channels, Eigen::Index heads, std::mt19937_64& rng) {
  GkptParams p;
  p.e1 = Eigen::MatrixXd::Ones(kPairTypes, channels);
  p.e2 = Eigen::MatrixXd::Zero(kPairTypes, channels);
  std::uniform_real_distribution<double> mu_dist(0.0, 6.0), sigma_dist(0.5, 3.0);
  p.mu.resize(channels);
  p.sigma.resize(channels);
  for (Eigen::Index g = 0; g < channels; ++g) {
    p.mu(g) = mu_dist(rng);
    p.sigma(g) = sigma_dist(rng);
  }
  p.w_p = glorot(channels, heads, rng);
  return p;
}

Eigen::VectorXd gkpt_bias(const GkptParams& params, double dist, int pair_type) {
  if (pair_type < 0 || pair_type >= params.e1.rows()) {
    throw ArgumentError("gkpt_bias: pair type " + std::to_string(pair_type) + " out of range");
  }
  if (dist < 0) throw ArgumentError("gkpt_bias: negative distance");
  const Eigen::Index g = params.channels();
  Eigen::VectorXd dens(g);
  for (Eigen::Index c = 0; c < g; ++c) {
    const double x = params.e1(pair_type, c) * dist + params.e2(pair_type, c);
    dens(c) = gaussian(x, params.mu(c), effective_sigma(params.sigma(c)));
  }
  return params.w_p.transpose() * dens;
}

void gkpt_backward(const GkptParams& params, double dist, int pair_type, const Eigen::VectorXd& d_out,
                   GkptParams& grad) {
  const Eigen::Index g = params.channels();
  for (Eigen::Index c = 0; c < g; ++c) {
    const double sigma = effective_sigma(params.sigma(c));
    const double x = params.e1(pair_type, c) * dist + params.e2(pair_type, c);
    const double z = (x - params.mu(c)) / sigma;
    const double dens = gaussian(x, params.mu(c), sigma);
    grad.w_p.row(c) += dens * d_out.transpose();
    const double d_dens = params.w_p.row(c).dot(d_out);
    const double d_x = d_dens * dens * (-z / sigma);
    grad.mu(c) -= d_x;
    if (params.sigma(c) > kSigmaFloor) grad.sigma(c) += d_dens * dens * (z * z - 1.0) / sigma;
    grad.e1(pair_type, c) += d_x * dist;
    grad.e2(pair_type, c) += d_x;
  }
}

PairBias PairBias::zeros(Eigen::Index heads, Eigen::Index queries, Eigen::Index keys) {
  PairBias b;
  b.heads.assign(static_cast<std::size_t>(heads), Eigen::MatrixXd::Zero(queries, keys));
  return b;
}

namespace {

template <class Fn>
void for_each_pair(const EncodedMolecule& enc, Fn&& fn) {
  const Eigen::Index n_r = enc.related_positions.rows();
  const Eigen::Index n_n = enc.nonchiral_positions.rows();
  for (std::size_t u = 0; u < enc.chiral_positions.size(); ++u) {
    const auto row = static_cast<Eigen::Index>(u) + 1;
    for (Eigen::Index j = 0; j < n_r; ++j) {
      fn(row, j, (enc.related_positions.row(j).transpose() - enc.chiral_positions[u]).norm(), 0);
    }
    for (Eigen::Index j = 0; j < n_n; ++j) {
      fn(row, n_r + j, (enc.nonchiral_positions.row(j).transpose() - enc.chiral_positions[u]).norm(), 1);
    }
  }
}

}  // namespace

PairBias init_pair_bias(const GkptParams& params, const EncodedMolecule& enc) {
  const Eigen::Index queries = 1 + static_cast<Eigen::Index>(enc.chiral_positions.size());
  const Eigen::Index keys = enc.related_positions.rows() + enc.nonchiral_positions.rows();
  PairBias bias = PairBias::zeros(params.heads(), queries, keys);
  for_each_pair(enc, [&](Eigen::Index i, Eigen::Index j, double dist, int type) {
    const Eigen::VectorXd b = gkpt_bias(params, dist, type);
    for (Eigen::Index a = 0; a < params.heads(); ++a) bias.heads[a](i, j) = b(a);
  });
  return bias;
}

void init_pair_bias_backward(const GkptParams& params, const EncodedMolecule& enc, const PairBias& d_bias,
                             GkptParams& grad) {
  Eigen::VectorXd d(params.heads());
  for_each_pair(enc, [&](Eigen::Index i, Eigen::Index j, double dist, int type) {
    for (Eigen::Index a = 0; a < params.heads(); ++a) d(a) = d_bias.heads[a](i, j);
    gkpt_backward(params, dist, type, d, grad);
  });
}

void LayerParams::collect(const std::string& prefix, ParamList& out) {
  add_param(out, prefix + ".wq", wq);
  add_param(out, prefix + ".wk_r", wk_r);
  add_param(out, prefix + ".wv_r", wv_r);
  add_param(out, prefix + ".wk_n", wk_n);
  add_param(out, prefix + ".wv_n", wv_n);
  add_param(out, prefix + ".wo", wo);
  ff.collect(prefix + ".ff", out);
  add_param(out, prefix + ".ln1_gamma", ln1_gamma);
  add_param(out, prefix + ".ln1_beta", ln1_beta);
  add_param(out, prefix + ".ln2_gamma", ln2_gamma);
  add_param(out, prefix + ".ln2_beta", ln2_beta);
}

LayerParams init_layer(Eigen::Index hidden, std::mt19937_64& rng) {
  LayerParams p;
  p.wq = glorot(hidden, hidden, rng);
  p.wk_r = glorot(hidden, hidden, rng);
  p.wv_r = glorot(hidden, hidden, rng);
  p.wk_n = glorot(hidden, hidden, rng);
  p.wv_n = glorot(hidden, hidden, rng);
  p.wo = glorot(hidden, hidden, rng);
  p.ff = Mlp::zeros(hidden, 4 * hidden, hidden);
  p.ff.w1 = glorot(4 * hidden, hidden, rng);
  p.ff.w2 = glorot(hidden, 4 * hidden, rng);
  p.ln1_gamma = Eigen::VectorXd::Ones(hidden);
  p.ln1_beta = Eigen::VectorXd::Zero(hidden);
  p.ln2_gamma = Eigen::VectorXd::Ones(hidden);
  p.ln2_beta = Eigen::VectorXd::Zero(hidden);
  return p;
}

AttendResult attend(const LayerParams& layer, int heads, const Eigen::MatrixXd& h_c, const Eigen::MatrixXd& h_r,
                    const Eigen::MatrixXd& h_n, const PairBias& bias_in, int layer_index) {
  LayerTrace t = run_layer(layer, heads, h_c, h_r, h_n, bias_in, layer_index);
  AttendResult r;
  r.h_c = std::move(t.out);
  r.bias.heads = std::move(t.logits);
  r.weights = std::move(t.weights);
  return r;
}

AttendGrad attend_backward(const LayerParams& layer, int heads, const Eigen::MatrixXd& h_c,
                           const Eigen::MatrixXd& h_r, const Eigen::MatrixXd& h_n, const PairBias& bias_in,
                           const Eigen::MatrixXd& d_h_c_out, const PairBias& d_bias_out, LayerParams& grad) {
  const LayerTrace t = run_layer(layer, heads, h_c, h_r, h_n, bias_in, 0);
  const Eigen::Index hidden = h_c.cols();
  const Eigen::Index n_r = h_r.rows();
  const Eigen::Index n_n = h_n.rows();

  AttendGrad g;
  const Eigen::MatrixXd d_x2 = layer_norm_rows_backward(t.x2, layer.ln2_gamma, d_h_c_out, grad.ln2_gamma, grad.ln2_beta);
  const Eigen::MatrixXd d_y1 = d_x2 + layer.ff.backward(t.y1, d_x2, grad.ff);
  const Eigen::MatrixXd d_x1 = layer_norm_rows_backward(t.x1, layer.ln1_gamma, d_y1, grad.ln1_gamma, grad.ln1_beta);
  g.d_h_c = d_x1;
  g.d_h_r = Eigen::MatrixXd::Zero(n_r, h_r.cols());
  g.d_h_n = Eigen::MatrixXd::Zero(n_n, h_n.cols());
  if (n_r + n_n == 0) return g;

  const Eigen::Index dh = hidden / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  grad.wo.noalias() += d_x1.transpose() * t.mixed;
  const Eigen::MatrixXd d_mixed = d_x1 * layer.wo;
  Eigen::MatrixXd d_q = Eigen::MatrixXd::Zero(t.q.rows(), hidden);
  Eigen::MatrixXd d_k = Eigen::MatrixXd::Zero(t.k.rows(), hidden);
  Eigen::MatrixXd d_v = Eigen::MatrixXd::Zero(t.v.rows(), hidden);
  g.d_bias_in.heads.resize(static_cast<std::size_t>(heads));
  for (int a = 0; a < heads; ++a) {
    const auto& w = t.weights[a];
    const Eigen::MatrixXd d_out_a = d_mixed.middleCols(a * dh, dh);
    const Eigen::MatrixXd d_w = d_out_a * t.v.middleCols(a * dh, dh).transpose();
    d_v.middleCols(a * dh, dh) = w.transpose() * d_out_a;
    const Eigen::VectorXd row_dot = d_w.cwiseProduct(w).rowwise().sum();
    Eigen::MatrixXd d_s = w.cwiseProduct(d_w.colwise() - row_dot);
    if (!d_bias_out.heads.empty()) d_s += d_bias_out.heads[a];
    d_q.middleCols(a * dh, dh) = scale * d_s * t.k.middleCols(a * dh, dh);
    d_k.middleCols(a * dh, dh) = scale * d_s.transpose() * t.q.middleCols(a * dh, dh);
    g.d_bias_in.heads[a] = std::move(d_s);
  }
  grad.wq.noalias() += d_q.transpose() * h_c;
  g.d_h_c.noalias() += d_q * layer.wq;
  if (n_r > 0) {
    grad.wk_r.noalias() += d_k.topRows(n_r).transpose() * h_r;
    grad.wv_r.noalias() += d_v.topRows(n_r).transpose() * h_r;
    g.d_h_r.noalias() += d_k.topRows(n_r) * layer.wk_r + d_v.topRows(n_r) * layer.wv_r;
  }
  if (n_n > 0) {
    grad.wk_n.noalias() += d_k.bottomRows(n_n).transpose() * h_n;
    grad.wv_n.noalias() += d_v.bottomRows(n_n).transpose() * h_n;
    g.d_h_n.noalias() += d_k.bottomRows(n_n) * layer.wk_n + d_v.bottomRows(n_n) * layer.wv_n;
  }
  return g;
}

Eigen::VectorXd pool(const Eigen::MatrixXd& h_c_final) {
  if (h_c_final.rows() < 1) throw ShapeError("pool: missing token row");
  Eigen::VectorXd out = h_c_final.row(0).transpose();
  const Eigen::Index n = h_c_final.rows() - 1;
  if (n > 0) out += h_c_final.bottomRows(n).colwise().mean().transpose();
  return out;
}

Eigen::MatrixXd pool_backward(Eigen::Index rows, const Eigen::VectorXd& d_pooled) {
  Eigen::MatrixXd d(rows, d_pooled.size());
  d.row(0) = d_pooled.transpose();
  if (rows > 1) d.bottomRows(rows - 1).rowwise() = d_pooled.transpose() / static_cast<double>(rows - 1);
  return d;
}

}  // namespace chidek
