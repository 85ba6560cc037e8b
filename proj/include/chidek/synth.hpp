#pragma once

#include "chidek/geometry.hpp"

#include <cstdint>
#include <vector>

namespace chidek {

struct SyntheticSpec {
  int count = 2000;
  int spectators_min = 0;
  int spectators_max = 4;
  double bond_min = 1.4;  // Angstrom
  double bond_max = 1.8;
  double noise = 0.1;            // positional Gaussian noise, Angstrom
  double min_abs_product = 0.5;  // Angstrom^3
  std::uint64_t seed = 0;

  void validate() const;
};

struct LabeledMolecule {
  Molecule mol;
  int label = 0;  // 0: positive chirality product (R), 1: negative (S)
};

inline int label_for(Configuration c) { return c == Configuration::R ? 0 : 1; }

/// Tetrahedral centers with four distinct substituent elements. Sample t is
/// drawn from seed + t; odd samples are mirrored as needed so labels
/// alternate R, S, R, ... Throws GenerationError if rejections exceed
/// 1000 * count.
std::vector<LabeledMolecule> gen_rs(const SyntheticSpec& spec);

/// Biaryl-like axial toy: axis atoms 0-1 along x, substituents 2,3 on the
/// first ring and 4,5 on the second, one ortho marker per substituent. The
/// second ring (atoms 1,4,5,8,9) is annotated as the rotatable blade.
Molecule toy_biaryl(double torsion_deg);

/// Random-torsion biaryl toys labeled by the sign of the axial chirality
/// product, balanced the same way as gen_rs.
std::vector<LabeledMolecule> gen_axial(const SyntheticSpec& spec);

/// Rotates the annotated blade about the chiral axis in `step_deg`
/// increments; returns 360 / step_deg conformers, the first equal to `base`.
std::vector<Molecule> gen_axial_torsion(const Molecule& base, double step_deg);

/// Indices split 80/10/10 in order: train, validation, test.
struct SplitSizes {
  std::size_t train, val, test;
};
SplitSizes split_sizes(std::size_t n);

}  // namespace chidek
