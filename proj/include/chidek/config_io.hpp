#pragma once

#include "chidek/model.hpp"
#include "chidek/train.hpp"

#include <filesystem>
#include <istream>
#include <ostream>
#include <string>

namespace chidek {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

// Field names match the struct members: h, d_p, L, H, G, d_f,
// rank_strategy, n_classes, seed, lr, epochs, batch_size, reg_weight,
// margin_weight, margin, min_lr_factor, task. Blank lines and '#' comments
// are skipped; unknown keys and malformed values raise ParseError.
void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value);
RunConfig parse_config(std::istream& in, RunConfig base = {});
RunConfig read_config_file(const std::filesystem::path& path, RunConfig base = {});

void write_model_config(std::ostream& out, const ModelConfig& cfg);
void write_train_config(std::ostream& out, const TrainConfig& cfg);

const char* to_string(Task t);
Task parse_task(const std::string& s);

}  // namespace chidek
