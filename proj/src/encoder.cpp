#include "chidek/encoder.hpp"

#include "chidek/errors.hpp"
#include "chidek/numerics.hpp"

#include <cmath>

namespace chidek {

namespace {

constexpr double kGramGuard = 1e-14;

// Layer norm along d_p for a d_p x 3 slice. Each column is centered on its
// own mean, but the variance is pooled over all three columns and there is no
// additive shift. A rotation of the molecule acts as O -> O R^T; centering,
// the pooled scale and the row gains all commute with that, so det(R) of the
// normalized slice stays rotation invariant and flips under reflection.
struct FrameNorm {
  Eigen::MatrixXd centered;
  double inv_std = 1.0;
  Eigen::MatrixXd out;
};

FrameNorm frame_norm(const Eigen::MatrixXd& o, const Eigen::VectorXd& gamma) {
  FrameNorm f;
  f.centered = o.rowwise() - o.colwise().mean();
  const double var = f.centered.squaredNorm() / static_cast<double>(o.size());
  f.inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
  f.out = gamma.asDiagonal() * f.centered * f.inv_std;
  return f;
}

Eigen::MatrixXd frame_norm_backward(const FrameNorm& f, const Eigen::VectorXd& gamma, const Eigen::MatrixXd& d_out,
                                    Eigen::VectorXd& d_gamma) {
  d_gamma += (d_out.cwiseProduct(f.centered)).rowwise().sum() * f.inv_std;
  const Eigen::MatrixXd d_n = gamma.asDiagonal() * d_out;
  const double s = f.inv_std;
  const double n = static_cast<double>(f.centered.size());
  const Eigen::MatrixXd d_c = s * d_n - (s * s * s / n) * d_n.cwiseProduct(f.centered).sum() * f.centered;
  return d_c.rowwise() - d_c.colwise().mean();
}

Eigen::MatrixXd normalize(const Eigen::MatrixXd& o, const KernelBank& bank, const KernelOptions& opts) {
  return opts.layer_norm ? frame_norm(o, bank.gamma).out : o;
}

Eigen::MatrixXd glorot(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

Mlp init_mlp(Eigen::Index in, Eigen::Index hidden, Eigen::Index out, std::mt19937_64& rng) {
  Mlp m = Mlp::zeros(in, hidden, out);
  m.w1 = glorot(hidden, in, rng);
  m.w2 = glorot(out, hidden, rng);
  return m;
}

}  // namespace

void KernelBank::collect(const std::string& prefix, ParamList& out) {
  for (std::size_t k = 0; k < w.size(); ++k) add_param(out, prefix + ".w." + std::to_string(k), w[k]);
  add_param(out, prefix + ".gamma", gamma);
}

const char* to_string(RankStrategy s) {
  switch (s) {
    case RankStrategy::QrRetraction: return "qr";
    case RankStrategy::Regularize: return "reg";
    case RankStrategy::None: return "none";
  }
  return "?";
}

RankStrategy parse_rank_strategy(const std::string& s) {
  if (s == "qr") return RankStrategy::QrRetraction;
  if (s == "reg") return RankStrategy::Regularize;
  if (s == "none") return RankStrategy::None;
  throw ArgumentError("unknown rank strategy '" + s + "' (expected qr, reg or none)");
}

Eigen::MatrixXd kernel_forward(const KernelBank& bank, const std::vector<Eigen::Matrix3d>& mcs,
                               const KernelOptions& opts) {
  const auto k = static_cast<Eigen::Index>(bank.kernels());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(mcs.size()), k);
  for (std::size_t b = 0; b < mcs.size(); ++b) {
    if (!mcs[b].allFinite()) throw ArgumentError("kernel_forward: non-finite chirality matrix " + std::to_string(b));
    for (Eigen::Index kk = 0; kk < k; ++kk) {
      const Eigen::MatrixXd o = normalize(bank.w[kk] * mcs[b], bank, opts);
      out(static_cast<Eigen::Index>(b), kk) = det3(qr_thin(o).r);
    }
  }
  return out;
}

void kernel_backward(const KernelBank& bank, const std::vector<Eigen::Matrix3d>& mcs,
                     const Eigen::MatrixXd& d_out, KernelBank& grad, std::vector<Eigen::Matrix3d>* d_mcs,
                     const KernelOptions& opts) {
  const auto k = static_cast<Eigen::Index>(bank.kernels());
  if (d_mcs) d_mcs->assign(mcs.size(), Eigen::Matrix3d::Zero());
  for (std::size_t b = 0; b < mcs.size(); ++b) {
    const auto bi = static_cast<Eigen::Index>(b);
    for (Eigen::Index kk = 0; kk < k; ++kk) {
      const double upstream = d_out(bi, kk);
      if (upstream == 0.0) continue;
      const Eigen::MatrixXd o = bank.w[kk] * mcs[b];
      FrameNorm fn;
      if (opts.layer_norm) fn = frame_norm(o, bank.gamma);
      const Eigen::MatrixXd& on = opts.layer_norm ? fn.out : o;
      const Eigen::Matrix3d gram = on.transpose() * on;
      if (det3(gram) < kGramGuard) continue;
      const double det_r = det3(qr_thin(on).r);
      const Eigen::MatrixXd d_on = upstream * det_r * on * gram.inverse();

      const Eigen::MatrixXd d_o = opts.layer_norm ? frame_norm_backward(fn, bank.gamma, d_on, grad.gamma) : d_on;
      grad.w[kk].noalias() += d_o * mcs[b].transpose();
      if (d_mcs) (*d_mcs)[b].noalias() += bank.w[kk].transpose() * d_o;
    }
  }
}

double regularization_loss(const KernelBank& bank) {
  double total = 0.0;
  for (const auto& w : bank.w) {
    total += (w.transpose() * w - Eigen::Matrix3d::Identity()).squaredNorm();
  }
  return total;
}

void regularization_backward(const KernelBank& bank, double scale, KernelBank& grad) {
  for (std::size_t k = 0; k < bank.w.size(); ++k) {
    const auto& w = bank.w[k];
    grad.w[k].noalias() += (4.0 * scale) * w * (w.transpose() * w - Eigen::Matrix3d::Identity());
  }
}

KernelBank retract_orthonormal(const KernelBank& bank) {
  KernelBank out = bank;
  for (std::size_t k = 0; k < bank.w.size(); ++k) {
    if (gram_sqrt_det(bank.w[k]) == 0.0) {
      throw DegeneracyError("retract_orthonormal: kernel " + std::to_string(k) + " is rank deficient", k);
    }
    out.w[k] = qr_thin(bank.w[k], QrSign::PositiveDiagonal).q;
  }
  return out;
}

void EncoderParams::collect(const std::string& prefix, ParamList& out) {
  kernels.collect(prefix + ".kernels", out);
  proj_c.collect(prefix + ".proj_c", out);
  proj_r.collect(prefix + ".proj_r", out);
  proj_n.collect(prefix + ".proj_n", out);
  add_param(out, prefix + ".global_token", global_token);
}

EncoderParams init_encoder(const EncoderShape& shape, RankStrategy strategy, std::mt19937_64& rng) {
  EncoderParams p;
  p.rank_strategy = strategy;
  std::normal_distribution<double> normal(0.0, 1.0);
  p.kernels.gamma = Eigen::VectorXd::Ones(shape.projection);
  for (Eigen::Index k = 0; k < shape.hidden; ++k) {
    Eigen::MatrixXd noise(shape.projection, 3);
    for (Eigen::Index j = 0; j < 3; ++j)
      for (Eigen::Index i = 0; i < shape.projection; ++i) noise(i, j) = normal(rng);
    p.kernels.w.push_back(qr_thin(noise, QrSign::PositiveDiagonal).q);
  }
  p.proj_c = init_mlp(shape.features, shape.hidden, shape.hidden, rng);
  p.proj_r = init_mlp(shape.features, shape.hidden, shape.hidden, rng);
  p.proj_n = init_mlp(shape.features, shape.hidden, shape.hidden, rng);
  p.global_token.resize(shape.hidden);
  for (Eigen::Index i = 0; i < shape.hidden; ++i) p.global_token(i) = 0.02 * normal(rng);
  return p;
}

Eigen::RowVectorXd chiral_features(const Molecule& mol, const ChiralUnit& unit) {
  if (unit.kind == ChiralKind::Center) return mol.features.row(unit.center_atoms[0]);
  return 0.5 * (mol.features.row(unit.center_atoms[0]) + mol.features.row(unit.center_atoms[1]));
}

namespace {

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m, const std::vector<int>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
  return out;
}

Coords gather_coords(const Coords& m, const std::vector<int>& idx) {
  Coords out(static_cast<Eigen::Index>(idx.size()), 3);
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
  return out;
}

Eigen::MatrixXd unit_features(const Molecule& mol) {
  Eigen::MatrixXd f(static_cast<Eigen::Index>(mol.chiral_units.size()), mol.features.cols());
  for (std::size_t u = 0; u < mol.chiral_units.size(); ++u) {
    f.row(static_cast<Eigen::Index>(u)) = chiral_features(mol, mol.chiral_units[u]);
  }
  return f;
}

std::vector<Eigen::Matrix3d> unit_matrices(const Molecule& mol) {
  std::vector<Eigen::Matrix3d> mcs;
  mcs.reserve(mol.chiral_units.size());
  for (const auto& unit : mol.chiral_units) mcs.push_back(chirality_matrix(unit, mol.coords));
  return mcs;
}

}  // namespace

EncodedMolecule encode(const EncoderParams& params, const Molecule& mol, const AtomPartition& partition,
                       const KernelOptions& opts) {
  const Eigen::Index h = params.global_token.size();
  if (mol.features.rows() != mol.size()) throw ShapeError("encode: feature rows do not match atom count");
  if (mol.features.cols() != params.proj_c.w1.cols()) {
    throw ShapeError("encode: feature width " + std::to_string(mol.features.cols()) + " does not match model");
  }
  const auto n_units = static_cast<Eigen::Index>(mol.chiral_units.size());

  EncodedMolecule enc;
  enc.h_c.resize(1 + n_units, h);
  enc.h_c.row(0) = params.global_token.transpose();
  if (n_units > 0) {
    const auto mcs = unit_matrices(mol);
    enc.h_c.bottomRows(n_units) = kernel_forward(params.kernels, mcs, opts) + params.proj_c.forward(unit_features(mol));
  }
  enc.h_r = params.proj_r.forward(gather_rows(mol.features, partition.related));
  enc.h_n = params.proj_n.forward(gather_rows(mol.features, partition.nonchiral));
  for (const auto& unit : mol.chiral_units) enc.chiral_positions.push_back(reference_point(unit, mol.coords));
  enc.related_positions = gather_coords(mol.coords, partition.related);
  enc.nonchiral_positions = gather_coords(mol.coords, partition.nonchiral);
  return enc;
}

void encode_backward(const EncoderParams& params, const Molecule& mol, const AtomPartition& partition,
                     const Eigen::MatrixXd& d_h_c, const Eigen::MatrixXd& d_h_r, const Eigen::MatrixXd& d_h_n,
                     EncoderParams& grad, Coords* d_coords, const KernelOptions& opts) {
  const auto n_units = static_cast<Eigen::Index>(mol.chiral_units.size());
  grad.global_token += d_h_c.row(0).transpose();
  if (n_units > 0) {
    const Eigen::MatrixXd d_units = d_h_c.bottomRows(n_units);
    const auto mcs = unit_matrices(mol);
    std::vector<Eigen::Matrix3d> d_mcs;
    kernel_backward(params.kernels, mcs, d_units, grad.kernels, d_coords ? &d_mcs : nullptr, opts);
    params.proj_c.backward(unit_features(mol), d_units, grad.proj_c);
    if (d_coords) {
      for (std::size_t u = 0; u < mcs.size(); ++u) {
        chirality_matrix_backward(mol.chiral_units[u], d_mcs[u], *d_coords);
      }
    }
  }
  params.proj_r.backward(gather_rows(mol.features, partition.related), d_h_r, grad.proj_r);
  params.proj_n.backward(gather_rows(mol.features, partition.nonchiral), d_h_n, grad.proj_n);
}

}  // namespace chidek
