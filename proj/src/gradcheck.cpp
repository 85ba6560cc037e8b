#include "chidek/gradcheck.hpp"

#include "chidek/attention.hpp"
#include "chidek/encoder.hpp"
#include "chidek/errors.hpp"
#include "chidek/model.hpp"
#include "chidek/synth.hpp"
#include "chidek/train.hpp"

#include <algorithm>
#include <functional>
#include <random>

namespace chidek {

namespace {

class Audit {
 public:
  explicit Audit(const AuditOptions& opts) : opts_(opts), rng_(opts.seed) {}

  std::mt19937_64& rng() { return rng_; }

  Eigen::MatrixXd randn(Eigen::Index r, Eigen::Index c, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
      for (Eigen::Index i = 0; i < r; ++i) m(i, j) = n(rng_);
    return m;
  }

  // `live` and `grads` must list tensors of identical sizes in the same
  // order; `grads` holds the analytic gradient at the current point.
  void check(const std::string& name, const ParamList& live, const ParamList& grads,
             const std::function<double()>& loss) {
    const Eigen::VectorXd theta0 = flatten(live);
    Eigen::VectorXd analytic = flatten(grads);
    if (analytic.size() != theta0.size()) throw ShapeError("audit " + name + ": gradient layout mismatch");
    const ScalarFn f = [&](const Eigen::VectorXd& t) {
      unflatten(t, live);
      return loss();
    };
    Eigen::VectorXd numeric;
    try {
      numeric = finite_diff_grad(f, theta0, opts_.step);
    } catch (...) {
      unflatten(theta0, live);
      throw;
    }
    unflatten(theta0, live);
    if (opts_.sabotage == name) analytic = 1.1 * analytic + Eigen::VectorXd::Constant(analytic.size(), 1e-3);
    AuditBlock block{name, static_cast<std::size_t>(theta0.size()), compare_gradients(analytic, numeric, opts_.tol), {}};
    Eigen::Index offset = 0;
    for (const auto& t : live) {
      if (static_cast<Eigen::Index>(block.report.worst_index) < offset + t.size()) {
        block.worst_tensor = t.name;
        break;
      }
      offset += t.size();
    }
    blocks_.push_back(std::move(block));
  }

  std::vector<AuditBlock> take() { return std::move(blocks_); }

 private:
  AuditOptions opts_;
  std::mt19937_64 rng_;
  std::vector<AuditBlock> blocks_;
};

double dot(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return a.cwiseProduct(b).sum(); }

void add_coords(ParamList& out, const std::string& name, Coords& c) {
  out.push_back({name, c.data(), c.rows(), c.cols()});
}

void add_matrix(ParamList& out, const std::string& name, Eigen::MatrixXd& m) { add_param(out, name, m); }

// Small molecules that exercise every key class: a tetrahedral center with
// spectators and the axial toy. The toy is built with its axis on x, where
// some coordinate gradients vanish by symmetry and finite differences only
// see roundoff, so its atoms are jittered to a generic position.
std::vector<LabeledMolecule> audit_molecules(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.count = 1;
  spec.spectators_min = 2;
  spec.spectators_max = 3;
  spec.seed = seed;
  std::vector<LabeledMolecule> out = gen_rs(spec);
  Molecule toy = toy_biaryl(50.0);
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  std::normal_distribution<double> jitter(0.0, 0.05);
  for (Eigen::Index i = 0; i < toy.coords.size(); ++i) toy.coords.data()[i] += jitter(rng);
  out.push_back({std::move(toy), 1});
  return out;
}

void kernel_block(Audit& audit, const ModelConfig& cfg, std::vector<LabeledMolecule> mols) {
  KernelBank bank = init_params(cfg).encoder.kernels;
  for (auto& w : bank.w) w = audit.randn(w.rows(), w.cols());
  bank.gamma = Eigen::VectorXd::Ones(bank.gamma.size()) + audit.randn(bank.gamma.size(), 1, 0.3);

  std::size_t units = 0;
  for (const auto& m : mols) units += m.mol.chiral_units.size();
  const Eigen::MatrixXd c = audit.randn(static_cast<Eigen::Index>(units), static_cast<Eigen::Index>(bank.kernels()));

  const auto matrices = [&] {
    std::vector<Eigen::Matrix3d> mcs;
    for (const auto& m : mols)
      for (const auto& u : m.mol.chiral_units) mcs.push_back(chirality_matrix(u, m.mol.coords));
    return mcs;
  };
  const auto loss = [&] { return dot(kernel_forward(bank, matrices()), c); };

  KernelBank gbank = bank;
  for (auto& w : gbank.w) w.setZero();
  gbank.gamma.setZero();
  std::vector<Eigen::Matrix3d> d_mcs;
  kernel_backward(bank, matrices(), c, gbank, &d_mcs);
  std::vector<Coords> gcoords;
  std::size_t b = 0;
  for (const auto& m : mols) {
    gcoords.push_back(Coords::Zero(m.mol.size(), 3));
    for (const auto& u : m.mol.chiral_units) chirality_matrix_backward(u, d_mcs[b++], gcoords.back());
  }

  ParamList live, grads;
  bank.collect("kernels", live);
  gbank.collect("kernels", grads);
  for (std::size_t i = 0; i < mols.size(); ++i) {
    add_coords(live, "coords", mols[i].mol.coords);
    add_coords(grads, "coords", gcoords[i]);
  }
  audit.check("kernel", live, grads, loss);
}

void layer_norm_block(Audit& audit) {
  Eigen::MatrixXd x = audit.randn(5, 8, 2.0);
  Eigen::VectorXd gamma = Eigen::VectorXd::Ones(8) + audit.randn(8, 1, 0.3);
  Eigen::VectorXd beta = audit.randn(8, 1, 0.5);
  const Eigen::MatrixXd c = audit.randn(5, 8);
  Eigen::VectorXd dgamma = Eigen::VectorXd::Zero(8), dbeta = Eigen::VectorXd::Zero(8);
  Eigen::MatrixXd dx = layer_norm_rows_backward(x, gamma, c, dgamma, dbeta);
  ParamList live, grads;
  add_matrix(live, "x", x);
  add_param(live, "gamma", gamma);
  add_param(live, "beta", beta);
  add_matrix(grads, "x", dx);
  add_param(grads, "gamma", dgamma);
  add_param(grads, "beta", dbeta);
  audit.check("layer_norm", live, grads, [&] { return dot(layer_norm_rows(x, gamma, beta), c); });
}

void gkpt_block(Audit& audit, const ModelConfig& cfg) {
  GkptParams p = init_gkpt(cfg.G, cfg.H, audit.rng());
  p.e1 += audit.randn(p.e1.rows(), p.e1.cols(), 0.2);
  p.e2 += audit.randn(p.e2.rows(), p.e2.cols(), 0.5);
  const std::vector<std::pair<double, int>> pairs = {{1.3, 0}, {2.7, 1}, {4.1, 0}, {3.3, 1}, {0.9, 1}};
  std::vector<Eigen::VectorXd> cs;
  for (std::size_t i = 0; i < pairs.size(); ++i) cs.push_back(audit.randn(cfg.H, 1));
  GkptParams g = p;
  for (auto* m : {&g.e1, &g.e2, &g.w_p}) m->setZero();
  g.mu.setZero();
  g.sigma.setZero();
  for (std::size_t i = 0; i < pairs.size(); ++i) gkpt_backward(p, pairs[i].first, pairs[i].second, cs[i], g);
  ParamList live, grads;
  p.collect("gkpt", live);
  g.collect("gkpt", grads);
  audit.check("gkpt", live, grads, [&] {
    double s = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) s += gkpt_bias(p, pairs[i].first, pairs[i].second).dot(cs[i]);
    return s;
  });
}

void attention_block(Audit& audit, const ModelConfig& cfg) {
  const Eigen::Index h = cfg.h;
  LayerParams layer = init_layer(h, audit.rng());
  layer.ln1_gamma += audit.randn(h, 1, 0.2);
  layer.ln1_beta += audit.randn(h, 1, 0.2);
  layer.ln2_gamma += audit.randn(h, 1, 0.2);
  layer.ln2_beta += audit.randn(h, 1, 0.2);
  Eigen::MatrixXd h_c = audit.randn(3, h), h_r = audit.randn(4, h), h_n = audit.randn(3, h);
  PairBias bias = PairBias::zeros(cfg.H, 3, 7);
  for (auto& m : bias.heads) m = audit.randn(3, 7);
  const Eigen::MatrixXd c = audit.randn(3, h);
  PairBias cb = PairBias::zeros(cfg.H, 3, 7);
  for (auto& m : cb.heads) m = audit.randn(3, 7, 0.5);

  LayerParams g = layer;
  {
    ParamList gl;
    g.collect("layer", gl);
    for (auto& t : gl) t.map().setZero();
  }
  AttendGrad ag = attend_backward(layer, cfg.H, h_c, h_r, h_n, bias, c, cb, g);

  ParamList live, grads;
  layer.collect("layer", live);
  g.collect("layer", grads);
  add_matrix(live, "h_c", h_c);
  add_matrix(grads, "h_c", ag.d_h_c);
  add_matrix(live, "h_r", h_r);
  add_matrix(grads, "h_r", ag.d_h_r);
  add_matrix(live, "h_n", h_n);
  add_matrix(grads, "h_n", ag.d_h_n);
  for (int k = 0; k < cfg.H; ++k) {
    add_matrix(live, "bias", bias.heads[k]);
    add_matrix(grads, "bias", ag.d_bias_in.heads[k]);
  }
  audit.check("attention", live, grads, [&] {
    const AttendResult r = attend(layer, cfg.H, h_c, h_r, h_n, bias);
    double s = dot(r.h_c, c);
    for (int k = 0; k < cfg.H; ++k) s += dot(r.bias.heads[k], cb.heads[k]);
    return s;
  });
}

void predictor_block(Audit& audit, const ModelConfig& cfg) {
  Mlp mlp = init_params(cfg).predictor;
  mlp.b1 = audit.randn(mlp.b1.size(), 1, 0.3);
  mlp.b2 = audit.randn(mlp.b2.size(), 1, 0.3);
  Eigen::MatrixXd x = audit.randn(1, cfg.h);
  const Eigen::MatrixXd c = audit.randn(1, cfg.n_classes);
  Mlp g = Mlp::zeros(mlp.w1.cols(), mlp.w1.rows(), mlp.w2.rows());
  Eigen::MatrixXd dx = mlp.backward(x, c, g);
  ParamList live, grads;
  mlp.collect("predictor", live);
  g.collect("predictor", grads);
  add_matrix(live, "x", x);
  add_matrix(grads, "x", dx);
  audit.check("predictor", live, grads, [&] { return dot(mlp.forward(x), c); });
}

void l_reg_block(Audit& audit, const ModelConfig& cfg) {
  KernelBank bank = init_params(cfg).encoder.kernels;
  for (auto& w : bank.w) w = audit.randn(w.rows(), w.cols(), 0.7);
  KernelBank g = bank;
  for (auto& w : g.w) w.setZero();
  regularization_backward(bank, 1.0, g);
  ParamList live, grads;
  for (std::size_t k = 0; k < bank.w.size(); ++k) {
    add_matrix(live, "w", bank.w[k]);
    add_matrix(grads, "w", g.w[k]);
  }
  audit.check("l_reg", live, grads, [&] { return regularization_loss(bank); });
}

void encoder_block(Audit& audit, const ModelConfig& cfg, std::vector<LabeledMolecule> mols) {
  EncoderParams p = init_params(cfg).encoder;
  for (auto& w : p.kernels.w) w += audit.randn(w.rows(), w.cols(), 0.3);
  p.kernels.gamma += audit.randn(p.kernels.gamma.size(), 1, 0.2);
  p.proj_c.b1 = audit.randn(p.proj_c.b1.size(), 1, 0.2);
  p.proj_r.b1 = audit.randn(p.proj_r.b1.size(), 1, 0.2);
  p.proj_n.b1 = audit.randn(p.proj_n.b1.size(), 1, 0.2);

  struct Upstream {
    Eigen::MatrixXd c, r, n;
  };
  std::vector<AtomPartition> parts;
  std::vector<Upstream> ups;
  for (const auto& m : mols) {
    parts.push_back(partition_atoms(m.mol));
    const EncodedMolecule e = encode(p, m.mol, parts.back());
    ups.push_back({audit.randn(e.h_c.rows(), e.h_c.cols()), audit.randn(e.h_r.rows(), e.h_r.cols()),
                   audit.randn(e.h_n.rows(), e.h_n.cols())});
  }
  EncoderParams g = p;
  {
    ParamList gl;
    g.collect("encoder", gl);
    for (auto& t : gl) t.map().setZero();
  }
  std::vector<Coords> gcoords;
  for (std::size_t i = 0; i < mols.size(); ++i) {
    gcoords.push_back(Coords::Zero(mols[i].mol.size(), 3));
    encode_backward(p, mols[i].mol, parts[i], ups[i].c, ups[i].r, ups[i].n, g, &gcoords.back());
  }
  ParamList live, grads;
  p.collect("encoder", live);
  g.collect("encoder", grads);
  for (std::size_t i = 0; i < mols.size(); ++i) {
    add_coords(live, "coords", mols[i].mol.coords);
    add_coords(grads, "coords", gcoords[i]);
  }
  audit.check("encoder", live, grads, [&] {
    double s = 0;
    for (std::size_t i = 0; i < mols.size(); ++i) {
      const EncodedMolecule e = encode(p, mols[i].mol, parts[i]);
      s += dot(e.h_c, ups[i].c) + dot(e.h_r, ups[i].r) + dot(e.h_n, ups[i].n);
    }
    return s;
  });
}

void full_loss_block(Audit& audit, ModelConfig cfg, const std::vector<LabeledMolecule>& mols) {
  cfg.rank_strategy = RankStrategy::Regularize;
  Model model = Model::create(cfg);
  for (auto& w : model.params.encoder.kernels.w) w += audit.randn(w.rows(), w.cols(), 0.3);
  TrainConfig tc;
  tc.reg_weight = 0.1;
  std::vector<const LabeledMolecule*> batch;
  for (const auto& m : mols) batch.push_back(&m);
  ModelParams g = model.params.zeros_like();
  batch_loss(model, batch, tc, &g);
  audit.check("full_loss", model.params.tensors(), g.tensors(),
              [&] { return batch_loss(model, batch, tc, nullptr); });
}

}  // namespace

const std::vector<std::string>& audit_block_names() {
  static const std::vector<std::string> names = {"kernel",    "layer_norm", "gkpt",    "attention",
                                                 "predictor", "l_reg",      "encoder", "full_loss"};
  return names;
}

std::vector<AuditBlock> run_gradient_audit(const AuditOptions& opts) {
  if (!opts.sabotage.empty()) {
    const auto& names = audit_block_names();
    if (std::find(names.begin(), names.end(), opts.sabotage) == names.end()) {
      throw ArgumentError("unknown audit block '" + opts.sabotage + "'");
    }
  }
  ModelConfig cfg = ModelConfig::tiny();
  cfg.seed = opts.seed;
  Audit audit(opts);
  const std::vector<LabeledMolecule> mols = audit_molecules(opts.seed);
  kernel_block(audit, cfg, mols);
  layer_norm_block(audit);
  gkpt_block(audit, cfg);
  attention_block(audit, cfg);
  predictor_block(audit, cfg);
  l_reg_block(audit, cfg);
  encoder_block(audit, cfg, mols);
  full_loss_block(audit, cfg, mols);
  return audit.take();
}

}  // namespace chidek
