// End-to-end acceptance gate: one PASS/FAIL line per criterion, exit status
// 1 if any criterion fails.

#include "chidek/checkpoint.hpp"
#include "chidek/chimol.hpp"
#include "chidek/encoder.hpp"
#include "chidek/errors.hpp"
#include "chidek/geometry.hpp"
#include "chidek/gradcheck.hpp"
#include "chidek/model.hpp"
#include "chidek/numerics.hpp"
#include "chidek/synth.hpp"
#include "chidek/train.hpp"

#include "support.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace chidek;
using chidek::testing::randn;
using chidek::testing::random_center;
using chidek::testing::random_rotation;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Trained desk model shared by the classification and attention criteria.
std::optional<Model> g_desk_model;
std::vector<LabeledMolecule> g_rs_test;

Outcome rigid_motion_invariance() {
  std::mt19937_64 rng(101);
  std::vector<Molecule> units;
  for (int i = 0; i < 100; ++i) units.push_back(random_center(rng));
  double worst = 0;
  for (int t = 0; t < 1000; ++t) {
    const Eigen::Matrix3d rot = random_rotation(rng);
    const Eigen::Vector3d shift = randn(rng, 3, 1, 10.0);
    for (const auto& m : units) {
      const double p0 = chirality_product(chirality_matrix(m.chiral_units[0], m.coords));
      const Molecule moved = transform(m, rot, shift);
      const double p1 = chirality_product(chirality_matrix(moved.chiral_units[0], moved.coords));
      worst = std::max(worst, std::abs(p1 - p0) / std::abs(p0));
    }
  }
  return {worst < 1e-10, fmt("max relative drift %.3e over 100000 evaluations", worst)};
}

Outcome reflection_flip() {
  std::mt19937_64 rng(102);
  std::vector<Molecule> pool;
  for (int i = 0; i < 1000; ++i) pool.push_back(random_center(rng, i % 4));
  SyntheticSpec spec;
  spec.count = 200;
  spec.seed = 102;
  for (auto& s : gen_rs(spec)) pool.push_back(std::move(s.mol));
  for (auto& s : gen_axial(spec)) pool.push_back(std::move(s.mol));

  std::size_t checked = 0, flipped = 0, restored = 0;
  for (const auto& m : pool) {
    for (const auto& unit : m.chiral_units) {
      const Configuration c0 = assign_configuration(chirality_product(chirality_matrix(unit, m.coords)));
      if (c0 == Configuration::Degenerate) continue;
      ++checked;
      const Molecule once = mirror(m);
      const Molecule twice = mirror(once);
      const Configuration c1 = assign_configuration(chirality_product(chirality_matrix(unit, once.coords)));
      const Configuration c2 = assign_configuration(chirality_product(chirality_matrix(unit, twice.coords)));
      flipped += (c1 != c0 && c1 != Configuration::Degenerate) ? 1 : 0;
      restored += (c2 == c0 && twice.coords == m.coords) ? 1 : 0;
    }
  }
  const bool ok = checked > 0 && flipped == checked && restored == checked;
  return {ok, fmt("%zu/%zu flipped, %zu/%zu restored exactly by double mirror", flipped, checked, restored,
                  checked)};
}

Outcome volume_identity() {
  std::mt19937_64 rng(103);
  const KernelOptions raw{.layer_norm = false};
  double worst = 0, worst_rank2 = 0;
  for (int dp : {4, 8, 32}) {
    for (int t = 0; t < 1000; ++t) {
      KernelBank bank;
      bank.w = {randn(rng, dp, 3)};
      bank.gamma = Eigen::VectorXd::Ones(dp);
      const Eigen::Matrix3d mc = randn(rng, 3, 3);
      const double got = std::abs(kernel_forward(bank, {mc}, raw)(0, 0));
      const double want = std::abs(mc.determinant()) * gram_sqrt_det(bank.w[0]);
      worst = std::max(worst, std::abs(got - want) / want);

      Eigen::MatrixXd w2 = bank.w[0];
      w2.col(2) = 0.7 * w2.col(0) - 1.3 * w2.col(1);
      bank.w[0] = w2;
      worst_rank2 = std::max(worst_rank2, std::abs(kernel_forward(bank, {mc}, raw)(0, 0)));
    }
  }
  return {worst < 1e-8 && worst_rank2 < 1e-10,
          fmt("max relative error %.3e over 3000 pairs, rank-2 max |det R| %.3e", worst, worst_rank2)};
}

Outcome gradient_audit() {
  const auto blocks = run_gradient_audit({});
  bool ok = true;
  double worst = 0;
  std::string worst_name;
  for (const auto& b : blocks) {
    ok = ok && b.report.passed;
    if (b.report.max_rel_error >= worst) {
      worst = b.report.max_rel_error;
      worst_name = b.name;
    }
  }
  return {ok, fmt("%zu blocks, worst %s at %.3e", blocks.size(), worst_name.c_str(), worst)};
}

Outcome rs_classification() {
  SyntheticSpec spec;
  spec.count = 2000;
  spec.seed = 5;
  const auto all = gen_rs(spec);
  const SplitSizes sz = split_sizes(all.size());
  const std::vector<LabeledMolecule> train_set(all.begin(), all.begin() + sz.train);
  const std::vector<LabeledMolecule> val_set(all.begin() + sz.train, all.begin() + sz.train + sz.val);
  g_rs_test.assign(all.begin() + sz.train + sz.val, all.end());

  ModelConfig mc;  // desk defaults
  mc.seed = 5;
  TrainConfig tc;  // desk defaults, 10 epochs
  Model model = Model::create(mc);
  train(model, train_set, val_set, tc);

  const double acc = evaluate(model, g_rs_test);
  std::size_t correct = 0, opposite = 0;
  for (const auto& s : g_rs_test) {
    if (predict(model, s.mol) != s.label) continue;
    ++correct;
    opposite += predict(model, make_enantiomer(s.mol)) != s.label ? 1 : 0;
  }
  const double flip = correct ? static_cast<double>(opposite) / static_cast<double>(correct) : 0.0;
  g_desk_model = std::move(model);
  return {acc >= 0.99 && flip >= 0.99,
          fmt("split %zu/%zu/%zu, test accuracy %.4f, mirror flip %.4f (%zu/%zu)", sz.train, sz.val, sz.test, acc,
              flip, opposite, correct)};
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return a.dot(b) / (a.norm() * b.norm()); }

Outcome torsion_sweep() {
  const auto sweep = gen_axial_torsion(toy_biaryl(70.0), 20.0);
  std::vector<int> signs;
  for (const auto& m : sweep) {
    const double p = chirality_product(chirality_matrix(m.chiral_units[0], m.coords));
    signs.push_back(p > 0 ? 1 : (p < 0 ? -1 : 0));
  }
  int changes = 0;
  for (std::size_t i = 0; i < signs.size(); ++i) changes += signs[i] != signs[(i + 1) % signs.size()] ? 1 : 0;
  const auto pos = std::count(signs.begin(), signs.end(), 1);
  const bool arcs = sweep.size() == 18 && changes == 2 && pos == 9 &&
                    std::count(signs.begin(), signs.end(), -1) == 9;

  SyntheticSpec spec;
  spec.count = 400;
  spec.seed = 6;
  const auto data = gen_axial(spec);
  ModelConfig mc;
  mc.seed = 6;
  TrainConfig tc;
  tc.epochs = 5;
  Model model = Model::create(mc);
  train(model, data, {}, tc);

  const Eigen::VectorXd e0 = embed(model.config, model.params, sweep[0]);
  double within = 0, across = 0;
  int n_within = 0, n_across = 0;
  for (std::size_t i = 1; i < sweep.size(); ++i) {
    const double c = cosine(e0, embed(model.config, model.params, sweep[i]));
    if (signs[i] == signs[0]) {
      within += c;
      ++n_within;
    } else {
      across += c;
      ++n_across;
    }
  }
  within /= n_within;
  across /= n_across;
  return {arcs && within > across,
          fmt("%zu conformers, %d sign changes, %ld positive; mean cosine within %.4f vs across %.4f", sweep.size(),
              changes, static_cast<long>(pos), within, across)};
}

// Relabels atoms with `perm` (new index i holds old atom perm[i]).
Molecule permute_atoms(const Molecule& m, const std::vector<int>& perm) {
  std::vector<int> where(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) where[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
  Molecule out = m;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out.coords.row(static_cast<Eigen::Index>(i)) = m.coords.row(perm[i]);
    out.features.row(static_cast<Eigen::Index>(i)) = m.features.row(perm[i]);
    out.atomic_numbers[i] = m.atomic_numbers[static_cast<std::size_t>(perm[i])];
  }
  for (auto& u : out.chiral_units) {
    for (auto& a : u.center_atoms) a = where[static_cast<std::size_t>(a)];
    for (auto& a : u.related) a = where[static_cast<std::size_t>(a)];
  }
  for (auto& a : out.blade) a = where[static_cast<std::size_t>(a)];
  return out;
}

Outcome attention_sanity() {
  if (!g_desk_model) return {false, "no trained model available"};
  const Model& model = *g_desk_model;
  std::mt19937_64 rng(107);

  double row_err = 0, perm_err = 0, motion_err = 0;
  std::size_t key_sets = 0;
  const std::size_t n = std::min<std::size_t>(g_rs_test.size(), 100);
  for (std::size_t i = 0; i < n; ++i) {
    const Molecule& mol = g_rs_test[i].mol;
    const ForwardTrace tr = forward_trace(model.config, model.params, mol);
    for (const auto& layer : tr.attention) {
      for (const auto& a : layer) {
        row_err = std::max(row_err, (a.rowwise().sum().array() - 1.0).abs().maxCoeff());
        ++key_sets;
      }
    }

    std::vector<int> perm(static_cast<std::size_t>(mol.size()));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const Molecule shuffled = permute_atoms(mol, perm);
    const Eigen::VectorXd p0 = tr.pooled;
    const Eigen::VectorXd p1 = embed(model.config, model.params, shuffled);
    perm_err = std::max(perm_err, (p1 - p0).cwiseAbs().maxCoeff());

    const Molecule moved = transform(mol, random_rotation(rng), randn(rng, 3, 1, 10.0));
    motion_err = std::max(motion_err, (forward(model.config, model.params, moved) - tr.logits).cwiseAbs().maxCoeff());
  }
  return {key_sets > 0 && row_err < 1e-12 && perm_err < 1e-10 && motion_err < 1e-9,
          fmt("row-sum error %.2e, key permutation %.2e, rigid-motion logits %.2e over %zu molecules", row_err,
              perm_err, motion_err, n)};
}

Outcome rank_strategies() {
  SyntheticSpec spec;
  spec.count = 32;
  spec.seed = 8;
  const auto batch = gen_rs(spec);

  ModelConfig mc;
  mc.seed = 8;
  mc.rank_strategy = RankStrategy::Regularize;
  Model reg = Model::create(mc);
  std::mt19937_64 rng(8);
  for (auto& w : reg.params.encoder.kernels.w) w += randn(rng, w.rows(), 3, 0.3);
  TrainConfig tc;
  tc.epochs = 50;  // one full-batch step per epoch on a frozen batch
  double prev = regularization_loss(reg.params.encoder.kernels);
  const double start = prev;
  const TrainReport r = train(reg, batch, {}, tc);
  bool monotone = r.step_l_reg.size() == 50;
  for (double l : r.step_l_reg) {
    monotone = monotone && l < prev;
    prev = l;
  }

  mc.rank_strategy = RankStrategy::QrRetraction;
  Model qr = Model::create(mc);
  TrainConfig one;
  one.epochs = 1;
  double worst = 0;
  for (int step = 0; step < 50; ++step) {
    train(qr, batch, {}, one, nullptr, 1);
    for (const auto& w : qr.params.encoder.kernels.w)
      worst = std::max(worst, (w.transpose() * w - Eigen::Matrix3d::Identity()).norm());
  }
  return {monotone && worst < 1e-8,
          fmt("L_reg %.4f -> %.4f over %zu steps (%s); retraction max orthonormality error %.2e over 50 steps", start,
              prev, r.step_l_reg.size(), monotone ? "monotone" : "NOT monotone", worst)};
}

Outcome persistence() {
  if (!g_desk_model) return {false, "no trained model available"};
  const Model& model = *g_desk_model;
  const std::string bytes = serialize_checkpoint(model);
  const Model back = deserialize_checkpoint(bytes);
  bool bitwise = serialize_checkpoint(back) == bytes;
  for (std::size_t i = 0; i < std::min<std::size_t>(g_rs_test.size(), 50); ++i) {
    const Eigen::VectorXd a = forward(model.config, model.params, g_rs_test[i].mol);
    const Eigen::VectorXd b = forward(back.config, back.params, g_rs_test[i].mol);
    bitwise = bitwise && a.size() == b.size() && std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
  }

  std::mt19937_64 rng(109);
  std::uniform_int_distribution<std::size_t> pos(0, bytes.size() - 1);
  std::uniform_int_distribution<int> bit(0, 7);
  int detected = 0;
  const int trials = 500;
  for (int t = 0; t < trials; ++t) {
    std::string bad = bytes;
    bad[pos(rng)] ^= static_cast<char>(1 << bit(rng));
    try {
      deserialize_checkpoint(bad);
    } catch (const CheckpointError&) {
      ++detected;
    }
  }
  int truncated = 0;
  for (std::size_t cut : {std::size_t{0}, bytes.size() / 3, bytes.size() - 1}) {
    try {
      deserialize_checkpoint(bytes.substr(0, cut));
    } catch (const CheckpointError&) {
      ++truncated;
    }
  }
  return {bitwise && detected == trials && truncated == 3,
          fmt("%zu-byte checkpoint, logits bitwise %s, %d/%d bit flips and %d/3 truncations detected", bytes.size(),
              bitwise ? "equal" : "DIFFERENT", detected, trials, truncated)};
}

struct Criterion {
  const char* id;
  const char* name;
  std::function<Outcome()> run;
  double budget_s;  // 0: no runtime bound
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"A1", "rigid-motion invariance", rigid_motion_invariance, 5.0},
      {"A2", "reflection sign flip", reflection_flip, 0.0},
      {"A3", "volume identity", volume_identity, 10.0},
      {"A4", "gradient audit", gradient_audit, 60.0},
      {"A5", "R/S classification", rs_classification, 300.0},
      {"A6", "torsion sweep", torsion_sweep, 0.0},
      {"A7", "attention sanity", attention_sanity, 0.0},
      {"A8", "rank strategies", rank_strategies, 0.0},
      {"A9", "persistence", persistence, 0.0},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0 && secs >= c.budget_s) {
      o.pass = false;
      o.detail += fmt("; over the %.0f s budget", c.budget_s);
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s %s %s: %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
