#include "chidek/train.hpp"

#include "chidek/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace chidek {

void TrainConfig::validate() const {
  if (!(lr > 0)) throw ArgumentError("train: lr must be positive");
  if (epochs < 1) throw ArgumentError("train: epochs must be >= 1");
  if (batch_size < 1) throw ArgumentError("train: batch_size must be >= 1");
  if (reg_weight < 0 || margin_weight < 0 || margin < 0) throw ArgumentError("train: weights must be >= 0");
  if (min_lr_factor < 0 || min_lr_factor > 1) throw ArgumentError("train: min_lr_factor must be in [0, 1]");
}

Model Model::create(const ModelConfig& config) {
  Model m;
  m.config = config;
  m.params = init_params(config);
  for (const auto& t : m.params.tensors()) {
    m.adam.m.push_back(Eigen::VectorXd::Zero(t.size()));
    m.adam.v.push_back(Eigen::VectorXd::Zero(t.size()));
  }
  return m;
}

void adam_step(ParamList& params, const ParamList& grads, AdamState& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size()) throw ShapeError("adam_step: size mismatch");
  ++state.step;
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Eigen::Map<Eigen::VectorXd> p(params[i].data, params[i].size());
    Eigen::Map<const Eigen::VectorXd> g(grads[i].data, grads[i].size());
    auto& m = state.m[i];
    auto& v = state.v[i];
    m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * g;
    v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * g.cwiseAbs2();
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + kAdamEps);
  }
}

double cosine_lr(double lr, double min_lr_factor, long step, long total_steps) {
  const double min_lr = min_lr_factor * lr;
  const double progress = total_steps > 1 ? static_cast<double>(step) / static_cast<double>(total_steps - 1) : 1.0;
  return min_lr + 0.5 * (lr - min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

void project_parameters(Model& model) {
  if (model.config.rank_strategy == RankStrategy::QrRetraction) {
    model.params.encoder.kernels = retract_orthonormal(model.params.encoder.kernels);
  }
  auto& sigma = model.params.gkpt.sigma;
  sigma = sigma.cwiseMax(kSigmaFloor);
}

void write_metrics(std::ostream& out, const EpochRecord& rec) {
  out << "epoch=" << rec.epoch << " train_loss=" << rec.train_loss << " train_acc=" << rec.train_acc
      << " val_acc=" << rec.val_acc << " lr=" << rec.lr << " l_reg=" << rec.l_reg << "\n";
}

double batch_loss(const Model& model, const std::vector<const LabeledMolecule*>& batch, const TrainConfig& cfg,
                  ModelParams* grad) {
  const auto& config = model.config;
  const auto& params = model.params;
  double total = 0.0;
  if (cfg.task == Task::Classify) {
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (const auto* s : batch) {
      const ForwardTrace t = forward_trace(config, params, s->mol);
      Eigen::VectorXd d;
      total += scale * loss_classify(t.logits, s->label, grad ? &d : nullptr);
      if (grad) backward(config, params, s->mol, t, scale * d, *grad);
    }
  } else {
    if (batch.size() % 2 != 0) throw ArgumentError("rank batches must hold whole pairs");
    const double scale = cfg.margin_weight * 2.0 / static_cast<double>(batch.size());
    for (std::size_t i = 0; i < batch.size(); i += 2) {
      const auto* a = batch[i];
      const auto* b = batch[i + 1];
      const auto* hi = a->label == 0 ? a : b;
      const auto* lo = a->label == 0 ? b : a;
      const ForwardTrace th = forward_trace(config, params, hi->mol);
      const ForwardTrace tl = forward_trace(config, params, lo->mol);
      double d_hi = 0, d_lo = 0;
      total += scale * loss_margin_rank(th.logits(0), tl.logits(0), cfg.margin, &d_hi, &d_lo);
      if (grad && (d_hi != 0 || d_lo != 0)) {
        Eigen::VectorXd dh = Eigen::VectorXd::Zero(th.logits.size());
        Eigen::VectorXd dl = Eigen::VectorXd::Zero(tl.logits.size());
        dh(0) = scale * d_hi;
        dl(0) = scale * d_lo;
        backward(config, params, hi->mol, th, dh, *grad);
        backward(config, params, lo->mol, tl, dl, *grad);
      }
    }
  }
  if (config.rank_strategy == RankStrategy::Regularize && cfg.reg_weight > 0) {
    total += cfg.reg_weight * regularization_loss(params.encoder.kernels);
    if (grad) regularization_backward(params.encoder.kernels, cfg.reg_weight, grad->encoder.kernels);
  }
  return total;
}

int predict(const Model& model, const Molecule& mol) {
  const Eigen::VectorXd logits = forward(model.config, model.params, mol);
  Eigen::Index best = 0;
  logits.maxCoeff(&best);
  return static_cast<int>(best);
}

double evaluate(const Model& model, const std::vector<LabeledMolecule>& data, Task task) {
  if (data.empty()) throw ArgumentError("evaluate: empty dataset");
  std::size_t correct = 0, total = 0;
  if (task == Task::Classify) {
    for (const auto& s : data) correct += predict(model, s.mol) == s.label ? 1 : 0;
    total = data.size();
  } else {
    for (std::size_t i = 0; i + 1 < data.size(); i += 2) {
      const double sa = forward(model.config, model.params, data[i].mol)(0);
      const double sb = forward(model.config, model.params, data[i + 1].mol)(0);
      const bool a_high = data[i].label == 0;
      correct += (a_high ? sa > sb : sb > sa) ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

TrainReport train(Model& model, const std::vector<LabeledMolecule>& train_set,
                  const std::vector<LabeledMolecule>& val_set, const TrainConfig& cfg, std::ostream* metrics,
                  long max_steps, const EpochHook& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw ArgumentError("train: empty training set");
  if (cfg.task == Task::Rank && (model.config.n_classes != 1 || train_set.size() % 2 != 0)) {
    throw ArgumentError("rank training needs n_classes = 1 and whole enantiomer pairs");
  }
  const bool pairs = cfg.task == Task::Rank;
  const std::size_t units = pairs ? train_set.size() / 2 : train_set.size();
  const std::size_t per_batch = pairs ? std::max<std::size_t>(1, static_cast<std::size_t>(cfg.batch_size) / 2)
                                      : static_cast<std::size_t>(cfg.batch_size);
  const long steps_per_epoch = static_cast<long>((units + per_batch - 1) / per_batch);
  const long total_steps = steps_per_epoch * cfg.epochs;

  project_parameters(model);
  std::mt19937_64 rng(model.config.seed + 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(units);
  std::iota(order.begin(), order.end(), 0);

  TrainReport report;
  long step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    double lr = cfg.lr;
    long epoch_steps = 0;
    for (std::size_t start = 0; start < units; start += per_batch) {
      std::vector<const LabeledMolecule*> batch;
      for (std::size_t k = start; k < std::min(units, start + per_batch); ++k) {
        if (pairs) {
          batch.push_back(&train_set[2 * order[k]]);
          batch.push_back(&train_set[2 * order[k] + 1]);
        } else {
          batch.push_back(&train_set[order[k]]);
        }
      }
      ModelParams grad = model.params.zeros_like();
      double loss = 0.0;
      try {
        loss = batch_loss(model, batch, cfg, &grad);
      } catch (const NumericError& e) {
        throw NumericError("training diverged at step " + std::to_string(step) + ": " + e.what());
      }
      if (!std::isfinite(loss)) throw NumericError("training diverged at step " + std::to_string(step));
      lr = cosine_lr(cfg.lr, cfg.min_lr_factor, step, total_steps);
      ParamList p = model.params.tensors();
      adam_step(p, grad.tensors(), model.adam, lr);
      project_parameters(model);
      report.step_loss.push_back(loss);
      report.step_lr.push_back(lr);
      report.step_l_reg.push_back(regularization_loss(model.params.encoder.kernels));
      epoch_loss += loss;
      ++epoch_steps;
      ++step;
      if (max_steps > 0 && step >= max_steps) break;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(std::max<long>(1, epoch_steps));
    rec.train_acc = evaluate(model, train_set, cfg.task);
    rec.val_acc = val_set.empty() ? 0.0 : evaluate(model, val_set, cfg.task);
    rec.lr = lr;
    rec.l_reg = regularization_loss(model.params.encoder.kernels);
    report.epochs.push_back(rec);
    if (metrics) {
      write_metrics(*metrics, rec);
      metrics->flush();
    }
    if (on_epoch) on_epoch(model, rec);
    if (max_steps > 0 && step >= max_steps) break;
  }
  return report;
}

}  // namespace chidek
