#include "chidek/synth.hpp"

#include "chidek/chimol.hpp"
#include "chidek/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

namespace chidek {

namespace {

constexpr std::array<int, 8> kSubstituentPool = {1, 6, 7, 8, 9, 16, 17, 35};  // H C N O F S Cl Br
constexpr std::array<int, 4> kSpectatorPool = {1, 6, 7, 8};

Eigen::RowVector3d gaussian_offset(std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> n(0.0, sigma);
  return {n(rng), n(rng), n(rng)};
}

void add_spectators(Molecule& mol, const SyntheticSpec& spec, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> count_dist(spec.spectators_min, spec.spectators_max);
  std::uniform_int_distribution<std::size_t> elem(0, kSpectatorPool.size() - 1);
  std::uniform_real_distribution<double> radius(2.5, 4.5);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = count_dist(rng);
  for (int s = 0; s < n; ++s) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      Eigen::RowVector3d dir(normal(rng), normal(rng), normal(rng));
      if (dir.norm() < 1e-6) continue;
      const Eigen::RowVector3d pos = dir.normalized() * radius(rng);
      bool clear = true;
      for (int i = 0; i < mol.size() && clear; ++i) clear = (mol.coords.row(i) - pos).norm() >= 2.0;
      if (!clear) continue;
      mol.coords.conservativeResize(mol.size() + 1, 3);
      mol.coords.row(mol.size() - 1) = pos;
      mol.atomic_numbers.push_back(kSpectatorPool[elem(rng)]);
      break;
    }
  }
}

double unit_product(const Molecule& mol) { return chirality_product(chirality_matrix(mol.chiral_units.at(0), mol.coords)); }

// Draws until |P| >= threshold, then mirrors toward the wanted label.
template <class Draw>
std::vector<LabeledMolecule> generate_balanced(const SyntheticSpec& spec, const std::string& prefix, Draw&& draw) {
  spec.validate();
  std::vector<LabeledMolecule> out;
  out.reserve(static_cast<std::size_t>(spec.count));
  const long budget = 1000L * spec.count;
  long attempts = 0;
  for (int t = 0; t < spec.count; ++t) {
    std::mt19937_64 rng(spec.seed + static_cast<std::uint64_t>(t));
    Molecule mol;
    double p = 0.0;
    do {
      if (++attempts > budget) throw GenerationError("rejection sampling exceeded 1000 x count draws");
      mol = draw(rng);
      p = unit_product(mol);
    } while (std::abs(p) < spec.min_abs_product);
    const int want = t % 2;
    if (label_for(assign_configuration(p)) != want) mol = make_enantiomer(mol);
    mol.id = prefix + std::to_string(t);
    mol.features = FeatureScheme::molecule(mol.atomic_numbers);
    validate(mol);
    out.push_back({std::move(mol), want});
  }
  return out;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (count < 1) throw ArgumentError("synthetic count must be >= 1");
  if (!(min_abs_product > 0)) throw ArgumentError("min_abs_product must be positive");
  if (spectators_min < 0 || spectators_max < spectators_min) throw ArgumentError("bad spectator range");
  if (!(bond_min > 0) || bond_max < bond_min) throw ArgumentError("bad bond length range");
  if (noise < 0) throw ArgumentError("negative noise");
}

std::vector<LabeledMolecule> gen_rs(const SyntheticSpec& spec) {
  const std::array<Eigen::RowVector3d, 4> dirs = {
      Eigen::RowVector3d(1, 1, 1) / std::sqrt(3.0), Eigen::RowVector3d(1, -1, -1) / std::sqrt(3.0),
      Eigen::RowVector3d(-1, 1, -1) / std::sqrt(3.0), Eigen::RowVector3d(-1, -1, 1) / std::sqrt(3.0)};
  return generate_balanced(spec, "rs_", [&](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> bond(spec.bond_min, spec.bond_max);
    std::array<int, kSubstituentPool.size()> pool;
    std::copy(kSubstituentPool.begin(), kSubstituentPool.end(), pool.begin());
    std::shuffle(pool.begin(), pool.end(), rng);

    Molecule mol;
    mol.coords.resize(5, 3);
    mol.coords.row(0) = gaussian_offset(rng, spec.noise);
    mol.atomic_numbers = {6};
    for (int k = 0; k < 4; ++k) {
      mol.coords.row(1 + k) = dirs[k] * bond(rng) + gaussian_offset(rng, spec.noise);
      mol.atomic_numbers.push_back(pool[k]);
    }
    ChiralUnit unit;
    unit.kind = ChiralKind::Center;
    unit.center_atoms = {0};
    std::array<double, 4> prio;
    for (int k = 0; k < 4; ++k) prio[k] = mol.atomic_numbers[1 + k];
    unit.related = order_substituents({1, 2, 3, 4}, prio);
    mol.chiral_units.push_back(unit);
    add_spectators(mol, spec, rng);
    return mol;
  });
}

Molecule toy_biaryl(double torsion_deg) {
  const double th = torsion_deg * std::numbers::pi / 180.0;
  const double c = std::cos(th), s = std::sin(th);
  Molecule mol;
  mol.id = "biaryl";
  mol.coords.resize(10, 3);
  mol.coords << -0.74, 0.0, 0.0,     // 0 axis atom, ring A
      0.74, 0.0, 0.0,                // 1 axis atom, ring B
      -1.44, 1.21, 0.0,              // 2 ring A ortho carbon
      -1.44, -1.21, 0.0,             // 3 ring A ortho carbon
      1.44, 1.21 * c, 1.21 * s,      // 4 ring B ortho carbon
      1.44, -1.21 * c, -1.21 * s,    // 5 ring B ortho carbon
      -1.00, 2.30, 0.0,              // 6 Cl on 2
      -1.00, -2.15, 0.0,             // 7 H on 3
      1.00, 2.30 * c, 2.30 * s,      // 8 Br on 4
      1.00, -2.15 * c, -2.15 * s;    // 9 H on 5
  mol.atomic_numbers = {6, 6, 6, 6, 6, 6, 17, 1, 35, 1};
  ChiralUnit unit;
  unit.kind = ChiralKind::Axis;
  unit.center_atoms = {0, 1};
  unit.related = {2, 3, 4, 5};
  unit.priorities = std::array<double, 4>{1, 2, 3, 4};
  mol.chiral_units.push_back(unit);
  mol.blade = {1, 4, 5, 8, 9};
  mol.features = FeatureScheme::molecule(mol.atomic_numbers);
  return mol;
}

std::vector<LabeledMolecule> gen_axial(const SyntheticSpec& spec) {
  return generate_balanced(spec, "ax_", [&](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> torsion(0.0, 360.0);
    Molecule mol = toy_biaryl(torsion(rng));
    for (int i = 0; i < mol.size(); ++i) mol.coords.row(i) += gaussian_offset(rng, spec.noise);
    mol.blade.clear();
    add_spectators(mol, spec, rng);
    return mol;
  });
}

std::vector<Molecule> gen_axial_torsion(const Molecule& base, double step_deg) {
  validate(base);
  const ChiralUnit* axis = nullptr;
  for (const auto& u : base.chiral_units) {
    if (u.kind != ChiralKind::Axis) continue;
    if (axis) throw AnnotationError("torsion sweep needs exactly one axial unit");
    axis = &u;
  }
  if (!axis) throw AnnotationError("torsion sweep needs exactly one axial unit");
  if (!(step_deg > 0) || step_deg > 360) throw ArgumentError("torsion step must be in (0, 360]");
  const double n_real = 360.0 / step_deg;
  const long n = std::lround(n_real);
  if (std::abs(n_real - static_cast<double>(n)) > 1e-9) throw ArgumentError("torsion step must divide 360");
  if (base.blade.empty()) throw AnnotationError("torsion sweep needs a BLADE annotation");

  const std::set<int> blade(base.blade.begin(), base.blade.end());
  const std::array<int, 3> side_a = {axis->center_atoms[0], axis->related[0], axis->related[1]};
  const std::array<int, 3> side_b = {axis->center_atoms[1], axis->related[2], axis->related[3]};
  const auto touches = [&](const std::array<int, 3>& side) {
    return std::any_of(side.begin(), side.end(), [&](int i) { return blade.count(i) > 0; });
  };
  if (touches(side_a) && touches(side_b)) throw AnnotationError("blade set intersects both sides of the axis");

  const Eigen::Vector3d origin = base.coords.row(axis->center_atoms[0]).transpose();
  const Eigen::Vector3d dir = (base.coords.row(axis->center_atoms[1]).transpose() - origin).normalized();
  std::vector<Molecule> out;
  for (long t = 0; t < n; ++t) {
    Molecule conf = base;
    conf.id = base.id + "_t" + std::to_string(t);
    if (t > 0) {
      const Eigen::Matrix3d rot =
          Eigen::AngleAxisd(static_cast<double>(t) * step_deg * std::numbers::pi / 180.0, dir).toRotationMatrix();
      for (int i : blade) {
        const Eigen::Vector3d rel = base.coords.row(i).transpose() - origin;
        conf.coords.row(i) = (origin + rot * rel).transpose();
      }
    }
    out.push_back(std::move(conf));
  }
  return out;
}

SplitSizes split_sizes(std::size_t n) {
  const std::size_t train = n * 8 / 10;
  const std::size_t val = n / 10;
  return {train, val, n - train - val};
}

}  // namespace chidek
