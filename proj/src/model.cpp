#include "chidek/model.hpp"

#include "chidek/errors.hpp"
#include "chidek/numerics.hpp"

#include <cmath>
#include <random>

namespace chidek {

void ModelConfig::validate() const {
  if (h < 1 || H < 1 || h % H != 0) throw ArgumentError("config: h must be a positive multiple of H");
  if (L < 1) throw ArgumentError("config: L must be >= 1");
  if (d_p < 3) throw ArgumentError("config: d_p must be >= 3");
  if (G < 1) throw ArgumentError("config: G must be >= 1");
  if (d_f < 1) throw ArgumentError("config: d_f must be >= 1");
  if (n_classes < 1) throw ArgumentError("config: n_classes must be >= 1");
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.h = 8;
  c.d_p = 4;
  c.L = 2;
  c.H = 2;
  c.G = 8;
  return c;
}

ParamList ModelParams::tensors() {
  ParamList out;
  encoder.collect("encoder", out);
  gkpt.collect("gkpt", out);
  for (std::size_t l = 0; l < layers.size(); ++l) layers[l].collect("layer." + std::to_string(l), out);
  predictor.collect("predictor", out);
  return out;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  for (auto& t : z.tensors()) t.map().setZero();
  return z;
}

ModelParams init_params(const ModelConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  ModelParams p;
  p.encoder = init_encoder({config.h, config.d_p, config.d_f}, config.rank_strategy, rng);
  p.gkpt = init_gkpt(config.G, config.H, rng);
  for (int l = 0; l < config.L; ++l) p.layers.push_back(init_layer(config.h, rng));
  p.predictor = Mlp::zeros(config.h, config.h, config.n_classes);
  const double l1 = std::sqrt(6.0 / (2.0 * config.h));
  const double l2 = std::sqrt(6.0 / (config.h + config.n_classes));
  std::uniform_real_distribution<double> d1(-l1, l1), d2(-l2, l2);
  for (Eigen::Index j = 0; j < p.predictor.w1.cols(); ++j)
    for (Eigen::Index i = 0; i < p.predictor.w1.rows(); ++i) p.predictor.w1(i, j) = d1(rng);
  for (Eigen::Index j = 0; j < p.predictor.w2.cols(); ++j)
    for (Eigen::Index i = 0; i < p.predictor.w2.rows(); ++i) p.predictor.w2(i, j) = d2(rng);
  return p;
}

ForwardTrace forward_trace(const ModelConfig& config, const ModelParams& params, const Molecule& mol,
                           const KernelOptions& opts) {
  ForwardTrace t;
  t.partition = partition_atoms(mol);
  t.encoded = encode(params.encoder, mol, t.partition, opts);
  t.h_c.push_back(t.encoded.h_c);
  t.bias.push_back(init_pair_bias(params.gkpt, t.encoded));
  for (int l = 0; l < config.L; ++l) {
    AttendResult r = attend(params.layers[l], config.H, t.h_c.back(), t.encoded.h_r, t.encoded.h_n, t.bias.back(), l);
    t.h_c.push_back(std::move(r.h_c));
    t.bias.push_back(std::move(r.bias));
    t.attention.push_back(std::move(r.weights));
  }
  t.pooled = pool(t.h_c.back());
  t.logits = params.predictor.forward(t.pooled.transpose()).row(0).transpose();
  if (!t.logits.allFinite()) throw NumericError("non-finite logits for " + mol.id);
  return t;
}

Eigen::VectorXd forward(const ModelConfig& config, const ModelParams& params, const Molecule& mol) {
  return forward_trace(config, params, mol).logits;
}

Eigen::VectorXd embed(const ModelConfig& config, const ModelParams& params, const Molecule& mol) {
  return forward_trace(config, params, mol).pooled;
}

void backward(const ModelConfig& config, const ModelParams& params, const Molecule& mol, const ForwardTrace& trace,
              const Eigen::VectorXd& d_logits, ModelParams& grad, const KernelOptions& opts) {
  const Eigen::VectorXd d_pooled =
      params.predictor.backward(trace.pooled.transpose(), d_logits.transpose(), grad.predictor).row(0).transpose();
  Eigen::MatrixXd d_h_c = pool_backward(trace.h_c.back().rows(), d_pooled);
  Eigen::MatrixXd d_h_r = Eigen::MatrixXd::Zero(trace.encoded.h_r.rows(), trace.encoded.h_r.cols());
  Eigen::MatrixXd d_h_n = Eigen::MatrixXd::Zero(trace.encoded.h_n.rows(), trace.encoded.h_n.cols());
  PairBias d_bias;  // gradient w.r.t. the bias leaving the current layer
  for (int l = config.L - 1; l >= 0; --l) {
    AttendGrad g = attend_backward(params.layers[l], config.H, trace.h_c[l], trace.encoded.h_r, trace.encoded.h_n,
                                   trace.bias[l], d_h_c, d_bias, grad.layers[l]);
    d_h_c = std::move(g.d_h_c);
    d_h_r += g.d_h_r;
    d_h_n += g.d_h_n;
    d_bias = std::move(g.d_bias_in);
  }
  if (!d_bias.heads.empty()) init_pair_bias_backward(params.gkpt, trace.encoded, d_bias, grad.gkpt);
  encode_backward(params.encoder, mol, trace.partition, d_h_c, d_h_r, d_h_n, grad.encoder, nullptr, opts);
}

double loss_classify(const Eigen::VectorXd& logits, int label, Eigen::VectorXd* d_logits) {
  if (label < 0 || label >= logits.size()) throw ArgumentError("loss_classify: label out of range");
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  if (d_logits) {
    *d_logits = (logits.array() - lse).exp();
    (*d_logits)(label) -= 1.0;
  }
  return lse - logits(label);
}

double loss_margin_rank(double score_hi, double score_lo, double margin, double* d_hi, double* d_lo) {
  if (margin < 0) throw ArgumentError("loss_margin_rank: negative margin");
  const double v = margin - (score_hi - score_lo);
  const bool active = v > 0;
  if (d_hi) *d_hi = active ? -1.0 : 0.0;
  if (d_lo) *d_lo = active ? 1.0 : 0.0;
  return active ? v : 0.0;
}

double loss_mse(const Eigen::VectorXd& pred, const Eigen::VectorXd& target, Eigen::VectorXd* d_pred) {
  if (pred.size() != target.size() || pred.size() == 0) throw ShapeError("loss_mse: size mismatch");
  const Eigen::VectorXd diff = pred - target;
  const double n = static_cast<double>(pred.size());
  if (d_pred) *d_pred = 2.0 * diff / n;
  return diff.squaredNorm() / n;
}

AttentionExport export_attention(const ForwardTrace& trace) {
  AttentionExport out;
  out.key_atoms = trace.partition.related;
  out.key_atoms.insert(out.key_atoms.end(), trace.partition.nonchiral.begin(), trace.partition.nonchiral.end());
  if (trace.attention.empty() || trace.attention.back().empty()) {
    out.weights.resize(0, static_cast<Eigen::Index>(out.key_atoms.size()));
    return out;
  }
  const auto& heads = trace.attention.back();
  Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(heads.front().rows(), heads.front().cols());
  for (const auto& w : heads) avg += w;
  avg /= static_cast<double>(heads.size());
  out.weights = avg.bottomRows(avg.rows() - 1);
  return out;
}

}  // namespace chidek
