#include "chidek/config_io.hpp"

#include "chidek/errors.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace chidek {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) throw ArgumentError("bad value for " + key + ": '" + value + "'");
  return out;
}

}  // namespace

const char* to_string(Task t) { return t == Task::Rank ? "rank" : "classify"; }

Task parse_task(const std::string& s) {
  if (s == "classify") return Task::Classify;
  if (s == "rank") return Task::Rank;
  throw ArgumentError("unknown task '" + s + "' (expected classify or rank)");
}

void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
  auto& m = cfg.model;
  auto& t = cfg.train;
  if (key == "h") m.h = parse_number<int>(key, value);
  else if (key == "d_p") m.d_p = parse_number<int>(key, value);
  else if (key == "L") m.L = parse_number<int>(key, value);
  else if (key == "H") m.H = parse_number<int>(key, value);
  else if (key == "G") m.G = parse_number<int>(key, value);
  else if (key == "d_f") m.d_f = parse_number<int>(key, value);
  else if (key == "rank_strategy") m.rank_strategy = parse_rank_strategy(value);
  else if (key == "n_classes") m.n_classes = parse_number<int>(key, value);
  else if (key == "seed") m.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "lr") t.lr = parse_number<double>(key, value);
  else if (key == "epochs") t.epochs = parse_number<int>(key, value);
  else if (key == "batch_size") t.batch_size = parse_number<int>(key, value);
  else if (key == "reg_weight") t.reg_weight = parse_number<double>(key, value);
  else if (key == "margin_weight") t.margin_weight = parse_number<double>(key, value);
  else if (key == "margin") t.margin = parse_number<double>(key, value);
  else if (key == "min_lr_factor") t.min_lr_factor = parse_number<double>(key, value);
  else if (key == "task") t.task = parse_task(value);
  else throw ArgumentError("unknown config key '" + key + "'");
}

RunConfig parse_config(std::istream& in, RunConfig base) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key=value", lineno);
    try {
      apply_config_entry(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ArgumentError& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return base;
}

RunConfig read_config_file(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open config file " + path.string());
  return parse_config(in, std::move(base));
}

void write_model_config(std::ostream& out, const ModelConfig& cfg) {
  out << "h=" << cfg.h << "\nd_p=" << cfg.d_p << "\nL=" << cfg.L << "\nH=" << cfg.H << "\nG=" << cfg.G
      << "\nd_f=" << cfg.d_f << "\nrank_strategy=" << to_string(cfg.rank_strategy) << "\nn_classes=" << cfg.n_classes
      << "\nseed=" << cfg.seed << "\n";
}

void write_train_config(std::ostream& out, const TrainConfig& cfg) {
  std::ostringstream s;
  s << std::setprecision(std::numeric_limits<double>::max_digits10);
  s << "lr=" << cfg.lr << "\nepochs=" << cfg.epochs << "\nbatch_size=" << cfg.batch_size
    << "\nreg_weight=" << cfg.reg_weight << "\nmargin_weight=" << cfg.margin_weight << "\nmargin=" << cfg.margin
    << "\nmin_lr_factor=" << cfg.min_lr_factor << "\ntask=" << to_string(cfg.task) << "\n";
  out << s.str();
}

}  // namespace chidek
