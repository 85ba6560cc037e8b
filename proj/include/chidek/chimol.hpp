#pragma once

#include "chidek/geometry.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <istream>
#include <string>
#include <vector>

namespace chidek {

/// 52-wide one-hot atom features: element (32 slots, last one "other"),
/// degree (6), formal charge -2..+2 (5), hydrogen count (5), hybridization
/// (4). Without a bond graph the non-element blocks sit in their zero class.
struct FeatureScheme {
  static constexpr int kElementSlots = 32;
  static constexpr int kDegreeSlots = 6;
  static constexpr int kChargeSlots = 5;
  static constexpr int kHydrogenSlots = 5;
  static constexpr int kHybridSlots = 4;
  static constexpr int kWidth = kElementSlots + kDegreeSlots + kChargeSlots + kHydrogenSlots + kHybridSlots;

  static int element_slot(int atomic_number);
  static Eigen::RowVectorXd atom(int atomic_number, int degree = 0, int charge = 0, int hydrogens = 0,
                                 int hybridization = 0);
  static Eigen::MatrixXd molecule(const std::vector<int>& atomic_numbers);
};

int atomic_number(const std::string& symbol);
const std::string& element_symbol(int atomic_number);

/// Parses the annotated XYZ variant:
///   line 1: atom count M
///   line 2: comment (used as the molecule id when non-empty)
///   M lines: symbol x y z
///   CHIRAL center <i> r1 r2 r3 r4 [p1 p2 p3 p4]
///   CHIRAL axis <a>-<b> r1 r2 r3 r4 [p1 p2 p3 p4]
///   BLADE i1 i2 ...
/// Substituents are sorted by priority; omitted priorities default to atomic
/// number. Errors are ParseError carrying the 1-based line number.
Molecule parse_chimol(std::istream& in, const std::string& fallback_id = "mol");
Molecule parse_chimol_file(const std::filesystem::path& path);

std::string write_chimol(const Molecule& mol);
void write_chimol_file(const Molecule& mol, const std::filesystem::path& path);

/// One line of a dataset manifest: "id<TAB>label<TAB>path".
struct ManifestEntry {
  std::string id;
  int label = 0;
  std::filesystem::path path;  // resolved against the manifest directory
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path);

/// Enantiomer: coordinates mirrored through the xy-plane, annotations kept.
Molecule make_enantiomer(const Molecule& mol);

}  // namespace chidek
