#include "commands.hpp"

#include "chidek/checkpoint.hpp"
#include "chidek/chimol.hpp"
#include "chidek/config_io.hpp"
#include "chidek/errors.hpp"
#include "chidek/gradcheck.hpp"
#include "chidek/model.hpp"
#include "chidek/synth.hpp"
#include "chidek/train.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <random>
#include <sstream>

namespace fs = std::filesystem;

namespace chidek::cli {

namespace {

// Carries an explicit exit code out of a subcommand.
struct Failure {
  int code;
  std::string message;
};

struct Globals {
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool verbose = false;
  std::string out;
  std::string config;
};

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

RunConfig load_run_config(const Globals& g) {
  RunConfig rc;
  if (!g.config.empty()) rc = read_config_file(g.config);
  if (g.seed_given) rc.model.seed = g.seed;
  return rc;
}

// Either a dataset directory (reads <dir>/<split>.tsv) or a manifest file.
fs::path manifest_path(const std::string& data, const std::string& split) {
  const fs::path p(data);
  if (fs::is_directory(p)) return p / (split + ".tsv");
  return p;
}

std::vector<LabeledMolecule> load_dataset(const fs::path& manifest) {
  if (!fs::exists(manifest)) throw Failure{kInputError, "manifest not found: " + manifest.string()};
  const auto entries = read_manifest(manifest);
  if (entries.empty()) throw Failure{kEmptyManifest, "manifest is empty: " + manifest.string()};
  std::vector<LabeledMolecule> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    Molecule mol = parse_chimol_file(e.path);
    mol.id = e.id;
    out.push_back({std::move(mol), e.label});
  }
  return out;
}

// Loads --checkpoint, or builds an untrained model from --config / --seed
// when no checkpoint is given.
Model resolve_model(const Globals& g, const std::string& checkpoint) {
  if (checkpoint.empty()) return Model::create(load_run_config(g).model);
  if (!fs::exists(checkpoint)) throw Failure{kMissingCheckpoint, "checkpoint not found: " + checkpoint};
  if (g.config.empty()) return load_checkpoint(checkpoint);
  ModelConfig expected = load_run_config(g).model;
  Model model;
  try {
    model = load_checkpoint(checkpoint, expected);
  } catch (const CheckpointError& e) {
    if (e.kind() == CheckpointError::Kind::Shape) throw Failure{kConfigMismatch, e.what()};
    throw;
  }
  expected.seed = model.config.seed;
  if (!(expected == model.config)) {
    throw Failure{kConfigMismatch, "config " + g.config + " does not match checkpoint " + checkpoint};
  }
  return model;
}

Molecule load_molecule(const std::string& path) {
  if (!fs::exists(path)) throw Failure{kInputError, "file not found: " + path};
  return parse_chimol_file(path);
}

// Writes to --out when given, otherwise to the report stream.
template <class Fn>
void emit(const Globals& g, Streams& s, Fn&& write) {
  if (g.out.empty()) {
    write(s.out);
    return;
  }
  std::ofstream f(g.out);
  if (!f) throw Failure{kInputError, "cannot write " + g.out};
  write(f);
}

Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

// --- subcommands -----------------------------------------------------------

int cmd_chirality(const Globals&, Streams& s, const std::string& file, double tol) {
  const Molecule mol = load_molecule(file);
  if (mol.chiral_units.empty()) s.err << "warning: " << file << " has no CHIRAL annotations\n";
  for (std::size_t i = 0; i < mol.chiral_units.size(); ++i) {
    const double p = chirality_product(chirality_matrix(mol.chiral_units[i], mol.coords));
    s.out << "unit " << i << ": P=" << fmt("%+.6f", p) << " " << to_string(assign_configuration(p, tol)) << "\n";
  }
  return kOk;
}

int cmd_invariance(const Globals& g, Streams& s, const std::string& file, long trials, double tol) {
  if (trials < 1) throw CLI::ValidationError("--trials", "must be at least 1");
  const Molecule mol = load_molecule(file);
  std::vector<double> base;
  for (const auto& u : mol.chiral_units) base.push_back(chirality_product(chirality_matrix(u, mol.coords)));
  std::vector<bool> chiral(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    chiral[i] = assign_configuration(base[i], tol) != Configuration::Degenerate;
    if (!chiral[i]) s.err << "warning: unit " << i << " is Degenerate; sign check skipped\n";
  }

  double max_drift = 0.0;
  std::uint64_t worst_seed = g.seed;
  long flips_ok = 0, flips_total = 0;
  std::optional<std::uint64_t> bad_flip;
  std::uniform_real_distribution<double> shift(-10.0, 10.0);
  for (long t = 0; t < trials; ++t) {
    const std::uint64_t seed = g.seed + static_cast<std::uint64_t>(t);
    std::mt19937_64 rng(seed);
    const Eigen::Matrix3d rot = random_rotation(rng);
    const Eigen::Vector3d trans(shift(rng), shift(rng), shift(rng));
    const Molecule moved = transform(mol, rot, trans);
    Eigen::Matrix3d refl = rot;
    refl.col(2) *= -1.0;
    const Molecule reflected = transform(mol, refl, trans);
    for (std::size_t i = 0; i < base.size(); ++i) {
      const auto& u = mol.chiral_units[i];
      const double p = chirality_product(chirality_matrix(u, moved.coords));
      const double drift = std::abs(p - base[i]) / std::max(std::abs(base[i]), 1e-300);
      if (chiral[i] && drift > max_drift) {
        max_drift = drift;
        worst_seed = seed;
      }
      if (!chiral[i]) continue;
      const double q = chirality_product(chirality_matrix(u, reflected.coords));
      ++flips_total;
      const Configuration before = assign_configuration(base[i], tol);
      const Configuration after = assign_configuration(q, tol);
      const bool flipped = after != Configuration::Degenerate && after != before;
      flips_ok += flipped ? 1 : 0;
      if (!flipped && !bad_flip) bad_flip = seed;
    }
  }
  const double rate = flips_total ? static_cast<double>(flips_ok) / static_cast<double>(flips_total) : 1.0;
  const bool pass = max_drift < 1e-9 && flips_ok == flips_total;
  s.out << "trials=" << trials << " units=" << base.size() << " max_drift=" << fmt("%.3e", max_drift)
        << " flip_rate=" << fmt("%.6f", rate) << (flips_total ? "" : " (no non-degenerate units)") << "\n";
  if (!pass) {
    if (max_drift >= 1e-9) s.out << "drift violation: transform seed " << worst_seed << "\n";
    if (bad_flip) s.out << "sign-flip violation: transform seed " << *bad_flip << "\n";
  }
  s.out << (pass ? "PASS" : "FAIL") << "\n";
  return pass ? kOk : kCheckFailed;
}

int cmd_gradcheck(const Globals& g, Streams& s, const std::string& sabotage) {
  if (!g.config.empty() && g.config != "tiny") {
    throw CLI::ValidationError("--config", "gradcheck only supports the 'tiny' preset");
  }
  AuditOptions opts;
  opts.seed = g.seed_given ? g.seed : 1;
  opts.sabotage = sabotage;
  const auto blocks = run_gradient_audit(opts);
  std::vector<std::string> failing;
  for (const auto& b : blocks) {
    s.out << std::left << std::setw(12) << b.name << " params=" << std::setw(6) << b.parameters
          << " max_rel_error=" << fmt("%.3e", b.report.max_rel_error) << " " << (b.report.passed ? "PASS" : "FAIL");
    if (!b.report.passed) s.out << " (worst entry in " << b.worst_tensor << ")";
    s.out << "\n";
    if (!b.report.passed) failing.push_back(b.name);
  }
  if (failing.empty()) {
    s.out << "PASS\n";
    return kOk;
  }
  s.out << "FAIL:";
  for (const auto& f : failing) s.out << " " << f;
  s.out << "\n";
  return kCheckFailed;
}

int cmd_gen(const Globals& g, Streams& s, const std::string& task, int count) {
  if (g.out.empty()) throw CLI::ValidationError("--out", "gen needs an output directory");
  SyntheticSpec spec;
  spec.count = count;
  spec.seed = g.seed;
  std::vector<LabeledMolecule> data;
  if (task == "rs") data = gen_rs(spec);
  else if (task == "axial") data = gen_axial(spec);
  else throw CLI::ValidationError("--task", "expected rs or axial");

  const fs::path dir(g.out);
  fs::create_directories(dir / "mols");
  std::vector<ManifestEntry> all;
  for (const auto& d : data) {
    const fs::path rel = fs::path("mols") / (d.mol.id + ".chimol");
    write_chimol_file(d.mol, dir / rel);
    all.push_back({d.mol.id, d.label, rel});
  }
  const SplitSizes sz = split_sizes(all.size());
  const auto slice = [&](std::size_t from, std::size_t n) {
    return std::vector<ManifestEntry>(all.begin() + static_cast<long>(from), all.begin() + static_cast<long>(from + n));
  };
  write_manifest(all, dir / "manifest.tsv");
  write_manifest(slice(0, sz.train), dir / "train.tsv");
  write_manifest(slice(sz.train, sz.val), dir / "val.tsv");
  write_manifest(slice(sz.train + sz.val, sz.test), dir / "test.tsv");
  s.out << "wrote " << all.size() << " molecules to " << dir.string() << " (train " << sz.train << ", val " << sz.val
        << ", test " << sz.test << ")\n";
  return kOk;
}

int cmd_train(const Globals& g, Streams& s, const std::string& data, int epochs, long max_steps) {
  if (g.out.empty()) throw CLI::ValidationError("--out", "train needs an output directory");
  RunConfig rc = load_run_config(g);
  if (epochs > 0) rc.train.epochs = epochs;
  rc.model.validate();
  rc.train.validate();
  const auto train_set = load_dataset(manifest_path(data, "train"));
  std::vector<LabeledMolecule> val_set;
  if (fs::is_directory(data) && fs::exists(manifest_path(data, "val"))) val_set = load_dataset(manifest_path(data, "val"));

  const fs::path dir(g.out);
  fs::create_directories(dir);
  std::ofstream metrics(dir / "metrics.log", std::ios::app);
  if (!metrics) throw Failure{kInputError, "cannot write " + (dir / "metrics.log").string()};
  {
    std::ofstream cfg(dir / "config.txt");
    write_model_config(cfg, rc.model);
    write_train_config(cfg, rc.train);
  }
  Model model = Model::create(rc.model);
  const auto report = train(model, train_set, val_set, rc.train, &metrics, max_steps,
                            [&](const Model& m, const EpochRecord& rec) {
                              save_checkpoint(m, dir / "model.ckpt");
                              if (g.verbose) write_metrics(s.err, rec);
                            });
  const EpochRecord& last = report.epochs.back();
  s.out << "epochs=" << report.epochs.size() << " steps=" << report.step_loss.size()
        << " train_loss=" << fmt("%.6f", last.train_loss) << " train_acc=" << fmt("%.4f", last.train_acc);
  if (!val_set.empty()) s.out << " val_acc=" << fmt("%.4f", last.val_acc);
  s.out << "\ncheckpoint=" << (dir / "model.ckpt").string() << "\n";
  return kOk;
}

int cmd_eval(const Globals& g, Streams& s, const std::string& checkpoint, const std::string& data,
             const std::string& split, double min_accuracy) {
  if (checkpoint.empty()) throw CLI::ValidationError("--checkpoint", "eval needs a checkpoint");
  const Model model = resolve_model(g, checkpoint);
  const auto set = load_dataset(manifest_path(data, split));
  const Task task = model.config.n_classes == 1 ? Task::Rank : Task::Classify;
  const double acc = evaluate(model, set, task);
  s.out << "accuracy=" << fmt("%.4f", acc) << " n=" << set.size();
  if (task == Task::Classify) {
    // Of the correctly classified molecules, how many flip class when mirrored.
    std::size_t correct = 0, flipped = 0;
    for (const auto& d : set) {
      const int p = predict(model, d.mol);
      if (p != d.label) continue;
      ++correct;
      flipped += predict(model, make_enantiomer(d.mol)) != p ? 1 : 0;
    }
    if (correct) s.out << " mirror_flip=" << fmt("%.4f", static_cast<double>(flipped) / static_cast<double>(correct));
  }
  s.out << "\n";
  return acc >= min_accuracy ? kOk : kCheckFailed;
}

std::vector<Molecule> gather_molecules(const std::vector<std::string>& files, const std::string& data) {
  std::vector<Molecule> mols;
  if (!data.empty()) {
    for (auto& d : load_dataset(fs::path(data))) mols.push_back(std::move(d.mol));
  }
  for (const auto& f : files) mols.push_back(load_molecule(f));
  if (mols.empty()) throw CLI::ValidationError("embed", "no input molecules (give files or --data)");
  return mols;
}

int cmd_embed(const Globals& g, Streams& s, const std::string& checkpoint, const std::vector<std::string>& files,
              const std::string& data) {
  const Model model = resolve_model(g, checkpoint);
  const auto mols = gather_molecules(files, data);
  std::vector<Eigen::VectorXd> rows;
  for (const auto& m : mols) rows.push_back(embed(model.config, model.params, m));
  emit(g, s, [&](std::ostream& o) {
    o << "id";
    for (int k = 0; k < model.config.h; ++k) o << ",e" << k;
    o << "\n";
    for (std::size_t i = 0; i < mols.size(); ++i) {
      o << mols[i].id;
      for (Eigen::Index k = 0; k < rows[i].size(); ++k) o << "," << fmt("%.10g", rows[i](k));
      o << "\n";
    }
  });
  return kOk;
}

int cmd_rotate_axis(const Globals& g, Streams& s, const std::string& checkpoint, const std::string& file,
                    double step) {
  const Model model = resolve_model(g, checkpoint);
  const Molecule base = file.empty() ? toy_biaryl(70.0) : load_molecule(file);
  const auto confs = gen_axial_torsion(base, step);
  const ChiralUnit* axis = nullptr;
  for (const auto& u : base.chiral_units)
    if (u.kind == ChiralKind::Axis) axis = &u;
  const Eigen::VectorXd e0 = embed(model.config, model.params, confs.front());
  emit(g, s, [&](std::ostream& o) {
    o << "angle_deg,cosine,sign\n";
    for (std::size_t t = 0; t < confs.size(); ++t) {
      const Eigen::VectorXd e = embed(model.config, model.params, confs[t]);
      const double cos = e.dot(e0) / std::max(e.norm() * e0.norm(), 1e-300);
      const double p = chirality_product(chirality_matrix(*axis, confs[t].coords));
      const int sign = assign_configuration(p) == Configuration::R ? 1 : assign_configuration(p) == Configuration::S ? -1 : 0;
      o << fmt("%g", static_cast<double>(t) * step) << "," << fmt("%.10f", cos) << "," << (sign > 0 ? "+1" : sign < 0 ? "-1" : "0")
        << "\n";
    }
  });
  return kOk;
}

int cmd_attn(const Globals& g, Streams& s, const std::string& checkpoint, const std::string& file) {
  const Model model = resolve_model(g, checkpoint);
  const Molecule mol = load_molecule(file);
  const ForwardTrace trace = forward_trace(model.config, model.params, mol);
  const AttentionExport ex = export_attention(trace);
  emit(g, s, [&](std::ostream& o) {
    o << "id,query";
    for (int a : ex.key_atoms) o << ",atom_" << a;
    o << "\n";
    for (Eigen::Index r = 0; r < ex.weights.rows(); ++r) {
      o << mol.id << "," << r;
      for (Eigen::Index c = 0; c < ex.weights.cols(); ++c) o << "," << fmt("%.10f", ex.weights(r, c));
      o << "\n";
    }
  });
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Chiral determinant kernels: chirality oracles, audits and model training"};
  app.name("chidek");
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random choice (default 0; gradcheck uses 1)")
      ->each([&](const std::string&) { g.seed_given = true; });
  app.add_flag("--verbose,-v", g.verbose, "Echo progress diagnostics to stderr");
  app.add_option("--out", g.out, "Output path (file or directory, per subcommand)");
  app.add_option("--config", g.config, "key=value file with model and training settings");

  Streams st{out, err};
  std::function<int()> action;

  std::string file;
  double tol = 1e-9;
  auto* chir = app.add_subcommand("chirality", "Print the chirality product and R/S label of every chiral unit");
  chir->add_option("file", file, "ChiMol file")->required();
  chir->add_option("--tol", tol, "Degeneracy tolerance on |P|")->capture_default_str();
  chir->callback([&] { action = [&] { return cmd_chirality(g, st, file, tol); }; });

  long trials = 1000;
  auto* inv = app.add_subcommand("invariance", "Audit rigid-motion invariance and mirror sign flips");
  inv->add_option("file", file, "ChiMol file")->required();
  inv->add_option("--trials", trials, "Number of random rigid motions and reflections")->capture_default_str();
  inv->add_option("--tol", tol, "Degeneracy tolerance on |P|")->capture_default_str();
  inv->callback([&] { action = [&] { return cmd_invariance(g, st, file, trials, tol); }; });

  std::string sabotage;
  auto* gc = app.add_subcommand("gradcheck", "Compare every reverse pass with central finite differences");
  gc->add_option("--sabotage", sabotage, "Corrupt one block's analytic gradient (negative control)")
      ->check(CLI::IsMember(audit_block_names()));
  gc->callback([&] { action = [&] { return cmd_gradcheck(g, st, sabotage); }; });

  std::string task = "rs";
  int count = 2000;
  auto* gen = app.add_subcommand("gen", "Generate a labeled synthetic dataset with train/val/test manifests");
  gen->add_option("--task", task, "rs (tetrahedral centers) or axial (biaryl torsions)")
      ->check(CLI::IsMember({"rs", "axial"}))
      ->capture_default_str();
  gen->add_option("--count", count, "Number of molecules")->check(CLI::PositiveNumber)->capture_default_str();
  gen->callback([&] { action = [&] { return cmd_gen(g, st, task, count); }; });

  std::string data;
  int epochs = 0;
  long max_steps = 0;
  auto* tr = app.add_subcommand("train", "Train a model; writes model.ckpt and metrics.log into --out");
  tr->add_option("--data", data, "Dataset directory or training manifest")->required();
  tr->add_option("--epochs", epochs, "Override the configured epoch count")->check(CLI::PositiveNumber);
  tr->add_option("--max-steps", max_steps, "Stop after this many optimizer steps")->check(CLI::PositiveNumber);
  tr->callback([&] { action = [&] { return cmd_train(g, st, data, epochs, max_steps); }; });

  std::string checkpoint, split = "test";
  double min_accuracy = 0.0;
  auto* ev = app.add_subcommand("eval", "Print accuracy of a checkpoint on a manifest split");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  ev->add_option("--data", data, "Dataset directory or manifest")->required();
  ev->add_option("--split", split, "Split to read from a dataset directory")->capture_default_str();
  ev->add_option("--min-accuracy", min_accuracy, "Exit 1 when accuracy falls below this value");
  ev->callback([&] { action = [&] { return cmd_eval(g, st, checkpoint, data, split, min_accuracy); }; });

  std::vector<std::string> files;
  auto* em = app.add_subcommand("embed", "Write one pooled embedding per molecule as CSV");
  em->add_option("files", files, "ChiMol files");
  em->add_option("--checkpoint", checkpoint, "Checkpoint file (untrained model from --seed when omitted)");
  em->add_option("--data", data, "Manifest of molecules to embed");
  em->callback([&] { action = [&] { return cmd_embed(g, st, checkpoint, files, data); }; });

  double step = 20.0;
  auto* rot = app.add_subcommand("rotate-axis", "Torsion sweep about a chiral axis: similarity and product sign");
  rot->add_option("file", file, "ChiMol file with one axial unit and a BLADE line (built-in biaryl toy if omitted)");
  rot->add_option("--step", step, "Torsion increment in degrees; must divide 360")->capture_default_str();
  rot->add_option("--checkpoint", checkpoint, "Checkpoint file (untrained model from --seed when omitted)");
  rot->callback([&] { action = [&] { return cmd_rotate_axis(g, st, checkpoint, file, step); }; });

  auto* at = app.add_subcommand("attn", "Write final-layer head-averaged attention of each chiral unit as CSV");
  at->add_option("file", file, "ChiMol file")->required();
  at->add_option("--checkpoint", checkpoint, "Checkpoint file (untrained model from --seed when omitted)");
  at->callback([&] { action = [&] { return cmd_attn(g, st, checkpoint, file); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }

  try {
    return action();
  } catch (const Failure& f) {
    err << "error: " << f.message << "\n";
    return f.code;
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumericError;
  } catch (const DegeneracyError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumericError;
  } catch (const OracleError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumericError;
  } catch (const ShapeError& e) {
    err << "internal error: " << e.what() << "\n";
    return kNumericError;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }
}

}  // namespace chidek::cli
