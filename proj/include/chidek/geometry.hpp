#pragma once

#include <Eigen/Dense>

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace chidek {

using Coords = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

enum class ChiralKind { Center, Axis };

/// A stereogenic unit: one center atom or a two-atom axis, plus the
/// priority-ordered substituent quadruple (r1, r2, r3, r4).
struct ChiralUnit {
  ChiralKind kind = ChiralKind::Center;
  std::vector<int> center_atoms;  // 1 (Center) or 2 (Axis) indices
  std::array<int, 4> related{};
  // Ascending priorities matching `related`, when supplied explicitly.
  std::optional<std::array<double, 4>> priorities;

  bool operator==(const ChiralUnit&) const = default;
};

struct Molecule {
  std::string id;
  Coords coords;                    // M x 3, Angstrom
  std::vector<int> atomic_numbers;  // length M
  Eigen::MatrixXd features;         // M x d_f
  std::vector<ChiralUnit> chiral_units;
  std::vector<int> blade;           // optional rigid rotor for torsion sweeps

  int size() const { return static_cast<int>(coords.rows()); }
};

struct AtomPartition {
  std::vector<int> chiral;     // I_c
  std::vector<int> related;    // I_r
  std::vector<int> nonchiral;  // I_n
};

enum class Configuration { R, S, Degenerate };

inline constexpr double kDefaultDegeneracyTol = 1e-9;

/// Checks index bounds, distinctness inside each unit, finite coordinates and
/// pairwise-disjoint centers. Throws AnnotationError / ArgumentError.
void validate(const Molecule& mol);

/// Splits atoms into chiral, chiral-related and non-chiral sets. An atom that
/// is related to one unit and the center of another is counted as chiral.
AtomPartition partition_atoms(const Molecule& mol);

/// Center atom position, or the axis midpoint for axial units.
Eigen::Vector3d reference_point(const ChiralUnit& unit, const Coords& coords);

/// Rows: x_r1 - x_i, x_r2 - x_i, x_r4 - x_r3.
Eigen::Matrix3d chirality_matrix(const ChiralUnit& unit, const Coords& coords);

/// Scatters a gradient with respect to the chirality matrix back onto the
/// coordinates (accumulates into `grad_coords`).
void chirality_matrix_backward(const ChiralUnit& unit, const Eigen::Matrix3d& grad_mc,
                               Coords& grad_coords);

/// Signed volume (r1 - x_i) x (r2 - x_i) . (r4 - r3). Computed with the
/// cross/dot route; equals det of the chirality matrix.
double chirality_product(const Eigen::Matrix3d& mc);

Configuration assign_configuration(double product, double tol = kDefaultDegeneracyTol);
const char* to_string(Configuration c);

/// coords' = coords * R^T + t. `rotation` must be orthogonal to 1e-10;
/// reflections (det = -1) are accepted.
Molecule transform(const Molecule& mol, const Eigen::Matrix3d& rotation,
                   const Eigen::Vector3d& translation);

/// Negates every z coordinate.
Molecule mirror(const Molecule& mol);

/// Sorts the quadruple by ascending priority, ties broken by ascending atom
/// index. Identical (priority, index) pairs are rejected.
std::array<int, 4> order_substituents(const std::array<int, 4>& indices,
                                      const std::array<double, 4>& priorities);

}  // namespace chidek
