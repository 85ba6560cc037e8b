#pragma once

#include "chidek/geometry.hpp"

#include <Eigen/Dense>

#include <random>

namespace chidek::testing {

inline Eigen::MatrixXd randn(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

inline Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  return q.normalized().toRotationMatrix();
}

// Center at the origin, substituents along the coordinate axes so the
// chirality matrix is the identity: rows (1,0,0), (0,1,0), (0,0,1) - (0,0,0).
inline Molecule canonical_center() {
  Molecule m;
  m.id = "canonical";
  m.coords.resize(5, 3);
  m.coords << 0, 0, 0,  //
      1, 0, 0,          //
      0, 1, 0,          //
      0, 0, 0.0,        //
      0, 0, 1;
  // Atom 3 coincides with the center on purpose: r3 = x_i gives row 3 = r4.
  m.atomic_numbers = {6, 1, 7, 8, 9};
  ChiralUnit u;
  u.center_atoms = {0};
  u.related = {1, 2, 3, 4};
  m.chiral_units.push_back(u);
  return m;
}

// A random non-degenerate tetrahedral unit plus `extra` free atoms.
inline Molecule random_center(std::mt19937_64& rng, int extra = 0) {
  Molecule m;
  m.coords = randn(rng, 5 + extra, 3, 1.5);
  m.atomic_numbers.assign(static_cast<std::size_t>(5 + extra), 6);
  ChiralUnit u;
  u.center_atoms = {0};
  u.related = {1, 2, 3, 4};
  m.chiral_units.push_back(u);
  return m;
}

}  // namespace chidek::testing
