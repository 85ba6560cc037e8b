#pragma once

#include "chidek/model.hpp"
#include "chidek/synth.hpp"

#include <Eigen/Dense>

#include <functional>
#include <ostream>
#include <vector>

namespace chidek {

enum class Task {
  Classify,  // softmax cross-entropy over n_classes
  Rank,      // margin ranking over consecutive enantiomer pairs, n_classes = 1
};

struct TrainConfig {
  double lr = 5e-4;
  int epochs = 10;
  int batch_size = 32;
  double reg_weight = 0.1;     // coefficient on L_reg (Regularize strategy only)
  double margin_weight = 1.0;  // ranking loss weight
  double margin = 0.5;
  double min_lr_factor = 0.1;
  Task task = Task::Classify;

  void validate() const;
};

struct AdamState {
  std::vector<Eigen::VectorXd> m;
  std::vector<Eigen::VectorXd> v;
  long step = 0;
};

/// Parameters plus optimizer state: everything a checkpoint carries.
struct Model {
  ModelConfig config;
  ModelParams params;
  AdamState adam;

  static Model create(const ModelConfig& config);
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// One bias-corrected Adam update.
void adam_step(ParamList& params, const ParamList& grads, AdamState& state, double lr);

/// min_lr + 0.5 (lr - min_lr)(1 + cos(pi * step / (total - 1))) for a
/// 0-based step; the last step runs at min_lr = min_lr_factor * lr.
double cosine_lr(double lr, double min_lr_factor, long step, long total_steps);

/// Post-step projections: kernel retraction under QrRetraction and the
/// GKPT sigma floor.
void project_parameters(Model& model);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double train_acc = 0;
  double val_acc = 0;
  double lr = 0;
  double l_reg = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::vector<double> step_loss;
  std::vector<double> step_lr;
  std::vector<double> step_l_reg;  // after each step
};

/// Writes "epoch=.. train_loss=.. train_acc=.. val_acc=.. lr=.. l_reg=..".
void write_metrics(std::ostream& out, const EpochRecord& rec);

/// Loss of one batch (mean over molecules or pairs, plus the weighted L_reg
/// under Regularize); accumulates gradients into `grad` when non-null.
double batch_loss(const Model& model, const std::vector<const LabeledMolecule*>& batch, const TrainConfig& cfg,
                  ModelParams* grad);

using EpochHook = std::function<void(const Model&, const EpochRecord&)>;

/// Runs the full schedule. Deterministic for a fixed config seed. Throws
/// NumericError naming the step on a non-finite loss. When `max_steps` is
/// positive, stops after that many optimizer steps.
TrainReport train(Model& model, const std::vector<LabeledMolecule>& train_set,
                  const std::vector<LabeledMolecule>& val_set, const TrainConfig& cfg,
                  std::ostream* metrics = nullptr, long max_steps = 0, const EpochHook& on_epoch = {});

int predict(const Model& model, const Molecule& mol);

/// Classification accuracy, or pair-ordering accuracy for Task::Rank.
double evaluate(const Model& model, const std::vector<LabeledMolecule>& data, Task task = Task::Classify);

}  // namespace chidek
