#include "chidek/chimol.hpp"

#include "chidek/errors.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace chidek {

namespace {

const std::array<std::string, 87> kSymbols = {
    "",   "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si",
    "P",  "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu",
    "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru",
    "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr",
    "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W",
    "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn"};

// Elements with a dedicated one-hot slot; everything else maps to the last.
constexpr std::array<int, FeatureScheme::kElementSlots - 1> kSlotElements = {
    1, 3, 5, 6, 7, 8, 9, 11, 12, 13, 14, 15, 16, 17, 19, 20,
    22, 24, 25, 26, 27, 28, 29, 30, 32, 33, 34, 35, 50, 53, 78};

std::vector<std::string> tokenize(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

double to_double(const std::string& s, std::size_t line) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ParseError("expected a finite number, got '" + s + "'", line);
  }
  return v;
}

int to_index(const std::string& s, int m, std::size_t line) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError("expected an atom index, got '" + s + "'", line);
  if (v < 0 || v >= m) {
    throw ParseError("atom index " + std::to_string(v) + " out of range [0, " + std::to_string(m) + ")", line);
  }
  return v;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

int FeatureScheme::element_slot(int z) {
  for (std::size_t i = 0; i < kSlotElements.size(); ++i) {
    if (kSlotElements[i] == z) return static_cast<int>(i);
  }
  return kElementSlots - 1;
}

Eigen::RowVectorXd FeatureScheme::atom(int z, int degree, int charge, int hydrogens, int hybridization) {
  if (degree < 0 || degree >= kDegreeSlots || charge < -2 || charge > 2 || hydrogens < 0 ||
      hydrogens >= kHydrogenSlots || hybridization < 0 || hybridization >= kHybridSlots) {
    throw ArgumentError("FeatureScheme::atom: category out of range");
  }
  Eigen::RowVectorXd f = Eigen::RowVectorXd::Zero(kWidth);
  int off = 0;
  f(off + element_slot(z)) = 1.0;
  off += kElementSlots;
  f(off + degree) = 1.0;
  off += kDegreeSlots;
  f(off + charge + 2) = 1.0;
  off += kChargeSlots;
  f(off + hydrogens) = 1.0;
  off += kHydrogenSlots;
  f(off + hybridization) = 1.0;
  return f;
}

Eigen::MatrixXd FeatureScheme::molecule(const std::vector<int>& atomic_numbers) {
  Eigen::MatrixXd f(static_cast<Eigen::Index>(atomic_numbers.size()), kWidth);
  for (std::size_t i = 0; i < atomic_numbers.size(); ++i) f.row(static_cast<Eigen::Index>(i)) = atom(atomic_numbers[i]);
  return f;
}

int atomic_number(const std::string& symbol) {
  for (std::size_t z = 1; z < kSymbols.size(); ++z) {
    if (kSymbols[z] == symbol) return static_cast<int>(z);
  }
  throw ArgumentError("unknown element symbol '" + symbol + "'");
}

const std::string& element_symbol(int z) {
  if (z < 1 || z >= static_cast<int>(kSymbols.size())) throw ArgumentError("atomic number out of range");
  return kSymbols[static_cast<std::size_t>(z)];
}

Molecule parse_chimol(std::istream& in, const std::string& fallback_id) {
  std::string line;
  std::size_t lineno = 0;
  auto next = [&](const char* what) {
    if (!std::getline(in, line)) throw ParseError(std::string("unexpected end of file, expected ") + what, lineno + 1);
    ++lineno;
  };

  next("atom count");
  const auto head = tokenize(line);
  int m = 0;
  if (head.size() != 1) throw ParseError("first line must hold the atom count", lineno);
  {
    auto [ptr, ec] = std::from_chars(head[0].data(), head[0].data() + head[0].size(), m);
    if (ec != std::errc() || ptr != head[0].data() + head[0].size() || m < 1) {
      throw ParseError("invalid atom count '" + head[0] + "'", lineno);
    }
  }
  next("comment");
  Molecule mol;
  mol.id = trim(line).empty() ? fallback_id : trim(line);
  mol.coords.resize(m, 3);
  mol.atomic_numbers.resize(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    next("atom line");
    const auto tok = tokenize(line);
    if (tok.size() != 4) throw ParseError("atom line needs 'symbol x y z'", lineno);
    try {
      mol.atomic_numbers[static_cast<std::size_t>(i)] = atomic_number(tok[0]);
    } catch (const ArgumentError& e) {
      throw ParseError(e.what(), lineno);
    }
    for (int c = 0; c < 3; ++c) mol.coords(i, c) = to_double(tok[1 + c], lineno);
  }

  std::set<int> centers;
  bool have_blade = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tok = tokenize(line);
    if (tok.empty() || tok[0][0] == '#') continue;
    if (tok[0] == "BLADE") {
      if (have_blade) throw ParseError("duplicate BLADE line", lineno);
      have_blade = true;
      for (std::size_t k = 1; k < tok.size(); ++k) mol.blade.push_back(to_index(tok[k], m, lineno));
      continue;
    }
    if (tok[0] != "CHIRAL") throw ParseError("unrecognized line '" + trim(line) + "'", lineno);
    if (tok.size() != 7 && tok.size() != 11) {
      throw ParseError("CHIRAL needs kind, center, 4 substituents and optionally 4 priorities", lineno);
    }
    ChiralUnit unit;
    if (tok[1] == "center") {
      unit.kind = ChiralKind::Center;
      unit.center_atoms = {to_index(tok[2], m, lineno)};
    } else if (tok[1] == "axis") {
      unit.kind = ChiralKind::Axis;
      const auto dash = tok[2].find('-');
      if (dash == std::string::npos) throw ParseError("axis center must be written as a-b", lineno);
      unit.center_atoms = {to_index(tok[2].substr(0, dash), m, lineno), to_index(tok[2].substr(dash + 1), m, lineno)};
    } else {
      throw ParseError("CHIRAL kind must be 'center' or 'axis'", lineno);
    }
    std::array<int, 4> related;
    for (int k = 0; k < 4; ++k) related[k] = to_index(tok[3 + k], m, lineno);
    std::array<double, 4> prio;
    const bool explicit_prio = tok.size() == 11;
    for (int k = 0; k < 4; ++k) {
      prio[k] = explicit_prio ? to_double(tok[7 + k], lineno)
                              : static_cast<double>(mol.atomic_numbers[static_cast<std::size_t>(related[k])]);
    }
    for (int a = 0; a < 4; ++a)
      for (int b = a + 1; b < 4; ++b)
        if (prio[a] == prio[b]) throw ParseError("tie in substituent priorities", lineno);
    for (int c : unit.center_atoms) {
      if (!centers.insert(c).second) throw ParseError("duplicate CHIRAL center " + std::to_string(c), lineno);
    }
    std::set<int> distinct(related.begin(), related.end());
    distinct.insert(unit.center_atoms.begin(), unit.center_atoms.end());
    if (distinct.size() != unit.center_atoms.size() + 4) throw ParseError("CHIRAL line repeats an atom", lineno);
    unit.related = order_substituents(related, prio);
    if (explicit_prio) {
      std::sort(prio.begin(), prio.end());
      unit.priorities = prio;
    }
    mol.chiral_units.push_back(std::move(unit));
  }
  mol.features = FeatureScheme::molecule(mol.atomic_numbers);
  validate(mol);
  return mol;
}

Molecule parse_chimol_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open " + path.string());
  return parse_chimol(in, path.stem().string());
}

std::string write_chimol(const Molecule& mol) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << mol.size() << "\n" << mol.id << "\n";
  for (int i = 0; i < mol.size(); ++i) {
    out << element_symbol(mol.atomic_numbers[static_cast<std::size_t>(i)]) << ' ' << mol.coords(i, 0) << ' '
        << mol.coords(i, 1) << ' ' << mol.coords(i, 2) << "\n";
  }
  for (const auto& unit : mol.chiral_units) {
    out << "CHIRAL ";
    if (unit.kind == ChiralKind::Center) {
      out << "center " << unit.center_atoms[0];
    } else {
      out << "axis " << unit.center_atoms[0] << '-' << unit.center_atoms[1];
    }
    for (int r : unit.related) out << ' ' << r;
    if (unit.priorities) {
      for (double p : *unit.priorities) out << ' ' << p;
    }
    out << "\n";
  }
  if (!mol.blade.empty()) {
    out << "BLADE";
    for (int b : mol.blade) out << ' ' << b;
    out << "\n";
  }
  return out.str();
}

void write_chimol_file(const Molecule& mol, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write " + path.string());
  out << write_chimol(mol);
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open manifest " + path.string());
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::istringstream ss(line);
    ManifestEntry e;
    std::string label, rel;
    if (!std::getline(ss, e.id, '\t') || !std::getline(ss, label, '\t') || !std::getline(ss, rel)) {
      throw ParseError("manifest line needs id<TAB>label<TAB>path", lineno);
    }
    auto [ptr, ec] = std::from_chars(label.data(), label.data() + label.size(), e.label);
    if (ec != std::errc() || ptr != label.data() + label.size()) throw ParseError("bad label '" + label + "'", lineno);
    e.path = std::filesystem::path(rel).is_absolute() ? std::filesystem::path(rel) : path.parent_path() / trim(rel);
    out.push_back(std::move(e));
  }
  return out;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write manifest " + path.string());
  for (const auto& e : entries) {
    const auto rel = e.path.is_absolute() ? e.path.lexically_relative(path.parent_path()) : e.path;
    out << e.id << '\t' << e.label << '\t' << rel.generic_string() << "\n";
  }
}

Molecule make_enantiomer(const Molecule& mol) { return mirror(mol); }

}  // namespace chidek
