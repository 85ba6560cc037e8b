#include "chidek/geometry.hpp"

#include "chidek/errors.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace chidek {

namespace {

void check_index(int idx, int m, const char* what) {
  if (idx < 0 || idx >= m) {
    throw AnnotationError(std::string(what) + " index " + std::to_string(idx) +
                          " out of range [0, " + std::to_string(m) + ")");
  }
}

}  // namespace

void validate(const Molecule& mol) {
  const int m = mol.size();
  if (m < 1) throw ArgumentError("molecule has no atoms");
  if (!mol.coords.allFinite()) throw ArgumentError("non-finite coordinates in " + mol.id);
  if (static_cast<int>(mol.atomic_numbers.size()) != m) {
    throw ShapeError("atomic_numbers length does not match atom count");
  }
  std::set<int> centers;
  for (std::size_t u = 0; u < mol.chiral_units.size(); ++u) {
    const auto& unit = mol.chiral_units[u];
    const std::size_t want = unit.kind == ChiralKind::Center ? 1 : 2;
    if (unit.center_atoms.size() != want) {
      throw AnnotationError("unit " + std::to_string(u) + " has wrong center count");
    }
    std::set<int> seen;
    for (int c : unit.center_atoms) {
      check_index(c, m, "center");
      seen.insert(c);
      if (!centers.insert(c).second) {
        throw AnnotationError("atom " + std::to_string(c) + " is a center of two units");
      }
    }
    for (int r : unit.related) {
      check_index(r, m, "related");
      seen.insert(r);
    }
    if (seen.size() != want + 4) {
      throw AnnotationError("unit " + std::to_string(u) + " repeats an atom index");
    }
  }
  for (int b : mol.blade) check_index(b, m, "blade");
}

AtomPartition partition_atoms(const Molecule& mol) {
  validate(mol);
  const int m = mol.size();
  std::vector<char> chiral(m, 0), related(m, 0);
  for (const auto& unit : mol.chiral_units) {
    for (int c : unit.center_atoms) chiral[c] = 1;
    for (int r : unit.related) related[r] = 1;
  }
  AtomPartition p;
  for (int i = 0; i < m; ++i) {
    if (chiral[i]) {
      p.chiral.push_back(i);
    } else if (related[i]) {
      p.related.push_back(i);
    } else {
      p.nonchiral.push_back(i);
    }
  }
  return p;
}

Eigen::Vector3d reference_point(const ChiralUnit& unit, const Coords& coords) {
  const int m = static_cast<int>(coords.rows());
  for (int c : unit.center_atoms) check_index(c, m, "center");
  if (unit.kind == ChiralKind::Center) return coords.row(unit.center_atoms.at(0)).transpose();
  return 0.5 * (coords.row(unit.center_atoms.at(0)) + coords.row(unit.center_atoms.at(1))).transpose();
}

Eigen::Matrix3d chirality_matrix(const ChiralUnit& unit, const Coords& coords) {
  const int m = static_cast<int>(coords.rows());
  for (int r : unit.related) check_index(r, m, "related");
  const Eigen::RowVector3d xi = reference_point(unit, coords).transpose();
  Eigen::Matrix3d mc;
  mc.row(0) = coords.row(unit.related[0]) - xi;
  mc.row(1) = coords.row(unit.related[1]) - xi;
  mc.row(2) = coords.row(unit.related[3]) - coords.row(unit.related[2]);
  return mc;
}

void chirality_matrix_backward(const ChiralUnit& unit, const Eigen::Matrix3d& grad_mc,
                               Coords& grad_coords) {
  const Eigen::RowVector3d g_ref = -(grad_mc.row(0) + grad_mc.row(1));
  grad_coords.row(unit.related[0]) += grad_mc.row(0);
  grad_coords.row(unit.related[1]) += grad_mc.row(1);
  grad_coords.row(unit.related[3]) += grad_mc.row(2);
  grad_coords.row(unit.related[2]) -= grad_mc.row(2);
  if (unit.kind == ChiralKind::Center) {
    grad_coords.row(unit.center_atoms[0]) += g_ref;
  } else {
    grad_coords.row(unit.center_atoms[0]) += 0.5 * g_ref;
    grad_coords.row(unit.center_atoms[1]) += 0.5 * g_ref;
  }
}

double chirality_product(const Eigen::Matrix3d& mc) {
  const Eigen::Vector3d a = mc.row(0), b = mc.row(1), c = mc.row(2);
  return a.cross(b).dot(c);
}

Configuration assign_configuration(double product, double tol) {
  if (tol < 0) throw ArgumentError("negative degeneracy tolerance");
  if (product > tol) return Configuration::R;
  if (product < -tol) return Configuration::S;
  return Configuration::Degenerate;
}

const char* to_string(Configuration c) {
  switch (c) {
    case Configuration::R: return "R";
    case Configuration::S: return "S";
    case Configuration::Degenerate: return "Degenerate";
  }
  return "?";
}

Molecule transform(const Molecule& mol, const Eigen::Matrix3d& rotation,
                   const Eigen::Vector3d& translation) {
  if (!rotation.allFinite() ||
      (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-10) {
    throw ArgumentError("transform: rotation is not orthogonal");
  }
  Molecule out = mol;
  out.coords = (mol.coords * rotation.transpose()).rowwise() + translation.transpose();
  return out;
}

Molecule mirror(const Molecule& mol) {
  Molecule out = mol;
  out.coords.col(2) = -mol.coords.col(2);
  return out;
}

std::array<int, 4> order_substituents(const std::array<int, 4>& indices,
                                      const std::array<double, 4>& priorities) {
  std::array<std::pair<double, int>, 4> keyed;
  for (int k = 0; k < 4; ++k) keyed[k] = {priorities[k], indices[k]};
  std::sort(keyed.begin(), keyed.end());
  for (int k = 1; k < 4; ++k) {
    if (keyed[k] == keyed[k - 1]) {
      throw AnnotationError("substituent priority tie on atom " + std::to_string(keyed[k].second));
    }
  }
  std::array<int, 4> out;
  for (int k = 0; k < 4; ++k) out[k] = keyed[k].second;
  return out;
}

}  // namespace chidek
