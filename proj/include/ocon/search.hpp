#pragma once

// Staged grid search. A stage fixes some hyperparameters, grids others, and
// trains every (combination, class) cell with k-fold evaluation. The winner's
// grid values are inherited by the next stage.
//
// Stage file grammar (key = value, # comments):
//   name = stage2
//   k_folds = 6
//   epochs = 3000
//   seed = 2
//   classes = ae, iy            # optional subset, default all
//   fixed.<hp> = value
//   grid.<hp> = v1, v2, ...      # file order = combination order
//
// <hp> is any key accepted by apply_setting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "ocon/config.hpp"
#include "ocon/error.hpp"
#include "ocon/features.hpp"
#include "ocon/mlp.hpp"
#include "ocon/parallel.hpp"
#include "ocon/rng.hpp"
#include "ocon/train.hpp"

namespace ocon {

using Setting = std::pair<std::string, std::string>;

inline std::string hidden_text(const std::vector<std::size_t>& widths) {
  std::string out;
  for (auto w : widths) out += (out.empty() ? "" : ":") + std::to_string(w);
  return out;
}

/// Applies one hyperparameter / training setting. Unknown keys and
/// unparsable values are InvalidConfig.
inline void apply_setting(const std::string& key, const std::string& value, MlpConfig& mlp, TrainConfig& train) {
  auto bad = [&] { return Error(Errc::InvalidConfig, "bad value '" + value + "' for '" + key + "'"); };
  auto real = [&] {
    const auto v = parse_double(value);
    if (!v) throw bad();
    return *v;
  };
  auto count = [&] {
    const auto v = parse_int(value);
    if (!v || *v < 0) throw bad();
    return static_cast<std::size_t>(*v);
  };
  auto flag = [&] {
    const auto v = parse_bool(value);
    if (!v) throw bad();
    return *v;
  };

  if (key == "hidden") {
    mlp.hidden.clear();
    for (const auto& w : split_list(value, ':')) {
      const auto v = parse_int(w);
      if (!v || *v < 1) throw bad();
      mlp.hidden.push_back(static_cast<std::size_t>(*v));
    }
    if (mlp.hidden.empty()) throw bad();
  } else if (key == "optimizer") {
    if (value == "adam") mlp.optimizer = OptimizerKind::Adam;
    else if (value == "rmsprop") mlp.optimizer = OptimizerKind::RMSProp;
    else throw bad();
  } else if (key == "loss") {
    if (value == "bce") mlp.loss = LossKind::CrossEntropy;
    else if (value == "squared") mlp.loss = LossKind::SquaredError;
    else throw bad();
  } else if (key == "lr") {
    mlp.learning_rate = real();
  } else if (key == "keep_input") {
    mlp.keep_input = real();
  } else if (key == "keep_hidden") {
    mlp.keep_hidden = real();
  } else if (key == "batch_norm") {
    mlp.batch_norm = flag();
  } else if (key == "l2") {
    mlp.l2_lambda = real();
  } else if (key == "batch_size") {
    mlp.batch_size = count();
  } else if (key == "epochs") {
    train.epochs_per_batch_set = count();
  } else if (key == "max_batch_sets") {
    train.max_batch_sets = count();
  } else if (key == "loss_threshold") {
    train.early_stop.loss_threshold = real();
  } else if (key == "loss_window") {
    train.early_stop.loss_window = count();
  } else if (key == "accuracy_threshold") {
    train.early_stop.accuracy_threshold = real();
  } else if (key == "accuracy_split") {
    if (value == "dev") train.accuracy_split = AccuracySplit::Dev;
    else if (value == "test") train.accuracy_split = AccuracySplit::Test;
    else throw bad();
  } else if (key == "k_folds") {
    train.k_folds = count();
  } else if (key == "seed") {
    const auto v = parse_int(value);
    if (!v || *v < 0) throw bad();
    train.seed = static_cast<std::uint64_t>(*v);
  } else if (key == "reencode") {
    train.reencode_each_batch_set = flag();
  } else if (key == "balancing_tolerance") {
    train.balancing_tolerance = real();
  } else if (key == "split") {
    const auto parts = split_list(value);
    if (parts.size() != 3) throw bad();
    double f[3];
    for (int i = 0; i < 3; ++i) {
      const auto v = parse_double(parts[static_cast<std::size_t>(i)]);
      if (!v) throw bad();
      f[i] = *v;
    }
    train.split = {f[0], f[1], f[2]};
  } else {
    throw Error(Errc::InvalidConfig, "unknown setting '" + key + "'");
  }
}

inline void apply_settings(const std::vector<Setting>& settings, MlpConfig& mlp, TrainConfig& train) {
  for (const auto& [k, v] : settings) apply_setting(k, v, mlp, train);
}

/// All settings from a key = value config (e.g. a training config file).
inline void apply_config(const KeyValueConfig& cfg, MlpConfig& mlp, TrainConfig& train) {
  for (const auto& [k, v] : cfg.entries()) apply_setting(k, v, mlp, train);
}

/// Inverse of apply_config for the settings a run depends on.
inline KeyValueConfig settings_config(const MlpConfig& mlp, const TrainConfig& train) {
  KeyValueConfig c;
  c.assign("hidden", hidden_text(mlp.hidden));
  c.assign("optimizer", std::string(optimizer_name(mlp.optimizer)));
  c.assign("loss", mlp.loss == LossKind::CrossEntropy ? "bce" : "squared");
  c.assign("lr", format_double(mlp.learning_rate));
  c.assign("keep_input", format_double(mlp.keep_input));
  c.assign("keep_hidden", format_double(mlp.keep_hidden));
  c.assign("batch_norm", mlp.batch_norm ? "true" : "false");
  c.assign("l2", format_double(mlp.l2_lambda));
  c.assign("batch_size", std::to_string(mlp.batch_size));
  c.assign("epochs", std::to_string(train.epochs_per_batch_set));
  c.assign("max_batch_sets", std::to_string(train.max_batch_sets));
  c.assign("loss_threshold", format_double(train.early_stop.loss_threshold));
  c.assign("loss_window", std::to_string(train.early_stop.loss_window));
  c.assign("accuracy_threshold", format_double(train.early_stop.accuracy_threshold));
  c.assign("accuracy_split", train.accuracy_split == AccuracySplit::Dev ? "dev" : "test");
  c.assign("k_folds", std::to_string(train.k_folds));
  c.assign("seed", std::to_string(train.seed));
  c.assign("reencode", train.reencode_each_batch_set ? "true" : "false");
  c.assign("balancing_tolerance", format_double(train.balancing_tolerance));
  c.assign("split", format_double(train.split.train) + ", " + format_double(train.split.dev) + ", " + format_double(train.split.test));
  return c;
}

struct SearchStage {
  std::string name;
  std::vector<Setting> fixed;
  std::vector<std::pair<std::string, std::vector<std::string>>> grid;  // ordered
  std::size_t k_folds = 3;
  std::size_t epochs = 1000;
  std::uint64_t seed = 0;
  std::vector<std::string> classes;  // empty = all

  std::size_t combinations() const {
    std::size_t n = 1;
    for (const auto& [k, values] : grid) n *= values.size();
    return n;
  }

  /// Values of combination `index`; the last grid key varies fastest.
  std::vector<std::string> combination(std::size_t index) const {
    std::vector<std::string> out(grid.size());
    for (std::size_t g = grid.size(); g-- > 0;) {
      const auto& values = grid[g].second;
      out[g] = values[index % values.size()];
      index /= values.size();
    }
    return out;
  }

  void validate() const {
    if (grid.empty()) throw Error(Errc::InvalidConfig, "stage '" + name + "' has an empty grid");
    for (const auto& [k, values] : grid)
      if (values.empty()) throw Error(Errc::InvalidConfig, "grid '" + k + "' has no values");
    if (k_folds < 2) throw Error(Errc::InvalidConfig, "k_folds must be >= 2");
    if (epochs < 1) throw Error(Errc::InvalidConfig, "epochs must be >= 1");
  }
};

/// (grid combinations) x classes x folds.
inline std::size_t cycle_count(const SearchStage& s, std::size_t classes) { return s.combinations() * classes * s.k_folds; }

inline SearchStage parse_stage(const KeyValueConfig& cfg) {
  SearchStage s;
  for (const auto& [k, v] : cfg.entries()) {
    if (k == "name") s.name = v;
    else if (k == "k_folds" || k == "epochs" || k == "seed") {
      const auto n = parse_int(v);
      if (!n || *n < 0) throw Error(Errc::InvalidConfig, "bad value '" + v + "' for '" + k + "'");
      (k == "k_folds" ? s.k_folds : k == "epochs" ? s.epochs : s.seed) = static_cast<std::size_t>(*n);
    } else if (k == "classes") s.classes = split_list(v);
    else if (k.starts_with("fixed.")) s.fixed.emplace_back(k.substr(6), v);
    else if (k.starts_with("grid.")) s.grid.emplace_back(k.substr(5), split_list(v));
    else throw Error(Errc::InvalidConfig, "unknown stage key '" + k + "'");
  }
  s.validate();
  // Catch unknown hp names and bad values before any training starts.
  MlpConfig mlp;
  TrainConfig train;
  apply_settings(s.fixed, mlp, train);
  for (const auto& [k, values] : s.grid)
    for (const auto& v : values) apply_setting(k, v, mlp, train);
  return s;
}

inline SearchStage load_stage(const std::filesystem::path& path) { return parse_stage(KeyValueConfig::load(path)); }

inline std::string format_stage(const SearchStage& s) {
  KeyValueConfig c;
  c.assign("name", s.name);
  c.assign("k_folds", std::to_string(s.k_folds));
  c.assign("epochs", std::to_string(s.epochs));
  c.assign("seed", std::to_string(s.seed));
  if (!s.classes.empty()) {
    std::string list;
    for (const auto& n : s.classes) list += (list.empty() ? "" : ", ") + n;
    c.assign("classes", list);
  }
  for (const auto& [k, v] : s.fixed) c.assign("fixed." + k, v);
  for (const auto& [k, values] : s.grid) {
    std::string list;
    for (const auto& v : values) list += (list.empty() ? "" : ", ") + v;
    c.assign("grid." + k, list);
  }
  return c.to_string();
}

/// The four published stages. Every cycle is one batch set of `epochs`
/// epochs without early stopping, so cycles have a fixed cost.
inline std::vector<SearchStage> stage_presets() {
  const std::vector<Setting> cycle = {{"max_batch_sets", "1"}, {"loss_threshold", "0"}, {"batch_size", "32"}};
  auto with = [&](std::vector<Setting> extra) {
    auto out = cycle;
    out.insert(out.end(), extra.begin(), extra.end());
    return out;
  };
  std::vector<SearchStage> stages(4);
  stages[0].name = "stage1";
  stages[0].fixed = with({{"keep_input", "1"}, {"keep_hidden", "1"}, {"batch_norm", "false"}, {"l2", "0"}});
  stages[0].grid = {{"hidden", {"10", "50", "100"}}, {"optimizer", {"adam", "rmsprop"}}, {"lr", {"1e-3", "1e-4", "1e-5"}}};
  stages[0].k_folds = 3;
  stages[0].epochs = 1000;
  stages[0].seed = 1;

  const std::vector<Setting> stage1_best = {{"hidden", "100"}, {"optimizer", "adam"}, {"lr", "1e-4"}};
  stages[1].name = "stage2";
  stages[1].fixed = with({{"batch_norm", "false"}, {"l2", "0"}});
  stages[1].fixed.insert(stages[1].fixed.end(), stage1_best.begin(), stage1_best.end());
  stages[1].grid = {{"keep_input", {"0.8", "0.9"}}, {"keep_hidden", {"0.5", "0.6", "0.7", "0.8", "0.9", "1"}}};
  stages[1].k_folds = 6;
  stages[1].epochs = 3000;
  stages[1].seed = 2;

  stages[2].name = "stage3";
  stages[2].fixed = with({{"batch_norm", "true"}, {"l2", "0"}, {"keep_input", "0.8"}, {"keep_hidden", "0.5"}});
  stages[2].fixed.insert(stages[2].fixed.end(), stage1_best.begin(), stage1_best.end());
  stages[2].grid = {{"lr", {"1e-3", "1e-4", "1e-5"}}};
  stages[2].k_folds = 10;
  stages[2].epochs = 1000;
  stages[2].seed = 3;

  stages[3].name = "stage4";
  stages[3].fixed = with({{"batch_norm", "true"}, {"keep_input", "0.8"}, {"keep_hidden", "0.5"}});
  stages[3].fixed.insert(stages[3].fixed.end(), stage1_best.begin(), stage1_best.end());
  stages[3].grid = {{"l2", {"1e-2", "1e-3", "1e-4"}}};
  stages[3].k_folds = 10;
  stages[3].epochs = 1000;
  stages[3].seed = 4;
  return stages;
}

/// Looks up a preset by name ("stage1".."stage4" or "1".."4").
inline SearchStage stage_preset(std::string_view name) {
  for (auto& s : stage_presets())
    if (s.name == name || s.name == "stage" + std::string(name)) return s;
  throw Error(Errc::InvalidConfig, "unknown stage preset '" + std::string(name) + "'");
}

/// Shrinks a stage for quick runs: epochs / factor (rounded up) and folds
/// / factor (rounded up, at least 2).
inline SearchStage desk_scale(SearchStage s, std::size_t factor = 10) {
  factor = std::max<std::size_t>(factor, 1);
  s.epochs = std::max<std::size_t>(1, (s.epochs + factor - 1) / factor);
  s.k_folds = std::max<std::size_t>(2, (s.k_folds + factor - 1) / factor);
  return s;
}

struct ComboResult {
  std::size_t index = 0;
  std::vector<std::string> values;  // aligned with the stage grid
  double mean_accuracy = 0.0;  // percent over classes; -inf if any cell diverged
  double mean_work = 0.0;
  double mean_seconds = 0.0;
  std::vector<double> class_accuracy;
  std::size_t diverged_cells = 0;
  std::string diagnostics;
};

struct SearchResult {
  SearchStage stage;
  std::vector<std::string> class_labels;
  std::vector<ComboResult> combos;  // by combination index
  std::vector<std::size_t> ranking;  // combination indices, best first
  std::vector<Setting> selected;  // inherited settings plus the winner's grid values

  const ComboResult& best() const { return combos[ranking.front()]; }
};

/// Accuracy (desc), then work (asc), then combination index (asc).
inline std::vector<std::size_t> rank_combos(const std::vector<ComboResult>& combos) {
  std::vector<std::size_t> order(combos.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = combos[a];
    const auto& y = combos[b];
    if (x.mean_accuracy != y.mean_accuracy) return x.mean_accuracy > y.mean_accuracy;
    if (x.mean_work != y.mean_work) return x.mean_work < y.mean_work;
    return x.index < y.index;
  });
  return order;
}

inline std::vector<int> stage_class_ids(const SearchStage& stage, const FeatureMatrix& m) {
  const auto names = class_names(m.label_system);
  std::vector<int> ids;
  if (stage.classes.empty()) {
    for (int c = 0; c < m.num_classes(); ++c) ids.push_back(c);
    return ids;
  }
  for (const auto& n : stage.classes) {
    const auto it = std::find(names.begin(), names.end(), n);
    if (it == names.end()) throw Error(Errc::UnknownClass, n);
    ids.push_back(static_cast<int>(it - names.begin()));
  }
  return ids;
}

/// Configuration of one combination: defaults, then stage fixed values, then
/// inherited settings, then the combination's grid values.
inline std::pair<MlpConfig, TrainConfig> combo_config(const SearchStage& stage, const std::vector<Setting>& inherited,
                                                      std::size_t combo) {
  MlpConfig mlp;
  TrainConfig train;
  apply_settings(stage.fixed, mlp, train);
  apply_settings(inherited, mlp, train);
  const auto values = stage.combination(combo);
  for (std::size_t g = 0; g < values.size(); ++g) apply_setting(stage.grid[g].first, values[g], mlp, train);
  train.epochs_per_batch_set = stage.epochs;
  train.k_folds = stage.k_folds;
  return {mlp, train};
}

inline std::uint64_t cell_seed(const SearchStage& stage, std::size_t cell) { return derive_seed(stage.seed, Stream::Cell, cell); }

/// Trains every (combination, class) cell with k-fold evaluation. Cell
/// seeds depend only on the stage seed and the cell index, so results do
/// not depend on `workers`.
inline SearchResult run_stage(const FeatureMatrix& m, const SearchStage& stage, const std::vector<Setting>& inherited = {},
                              std::size_t workers = 1) {
  stage.validate();
  const auto class_ids = stage_class_ids(stage, m);
  const auto all_names = class_names(m.label_system);
  const std::size_t nc = class_ids.size();
  const std::size_t combos = stage.combinations();

  struct Cell {
    double accuracy = 0.0;
    double work = 0.0;
    double seconds = 0.0;
    bool diverged = false;
    std::string diagnostics;
  };
  std::vector<Cell> cells(combos * nc);
  parallel_for(cells.size(), workers, [&](std::size_t idx) {
    auto& cell = cells[idx];
    try {
      auto [mlp, train] = combo_config(stage, inherited, idx / nc);
      train.seed = cell_seed(stage, idx);
      const auto r = k_fold_evaluate(m, class_ids[idx % nc], mlp, train, train.k_folds);
      cell.accuracy = r.mean_accuracy;
      cell.work = r.mean_work;
      cell.seconds = r.mean_seconds;
      cell.diverged = !std::isfinite(r.mean_accuracy);
      for (const auto& rep : r.reports)
        if (!rep.diagnostics.empty()) cell.diagnostics = rep.diagnostics;
    } catch (const Error& e) {
      cell.accuracy = -std::numeric_limits<double>::infinity();
      cell.diverged = true;
      cell.diagnostics = e.what();
    }
  });

  SearchResult result;
  result.stage = stage;
  for (auto id : class_ids) result.class_labels.push_back(all_names[static_cast<std::size_t>(id)]);
  for (std::size_t c = 0; c < combos; ++c) {
    ComboResult cr;
    cr.index = c;
    cr.values = stage.combination(c);
    for (std::size_t k = 0; k < nc; ++k) {
      const auto& cell = cells[c * nc + k];
      cr.class_accuracy.push_back(cell.accuracy);
      cr.mean_accuracy += cell.accuracy / static_cast<double>(nc);
      cr.mean_work += cell.work / static_cast<double>(nc);
      cr.mean_seconds += cell.seconds / static_cast<double>(nc);
      if (cell.diverged) {
        ++cr.diverged_cells;
        if (cr.diagnostics.empty()) cr.diagnostics = result.class_labels[k] + ": " + cell.diagnostics;
      }
    }
    if (cr.diverged_cells) cr.mean_accuracy = -std::numeric_limits<double>::infinity();
    result.combos.push_back(std::move(cr));
  }
  result.ranking = rank_combos(result.combos);
  result.selected = inherited;
  const auto& best = result.best();
  for (std::size_t g = 0; g < stage.grid.size(); ++g) {
    const auto& key = stage.grid[g].first;
    auto it = std::find_if(result.selected.begin(), result.selected.end(), [&](const Setting& s) { return s.first == key; });
    if (it != result.selected.end()) it->second = best.values[g];
    else result.selected.emplace_back(key, best.values[g]);
  }
  return result;
}

namespace detail {

inline std::string accuracy_cell(double v) { return std::isfinite(v) ? format_double(v) : std::string("-inf"); }

}  // namespace detail

/// Ranked results; contains no wall-clock values, so it is identical for
/// every worker count.
inline std::string ranked_csv(const SearchResult& r) {
  std::string out = "rank,combination";
  for (const auto& [k, v] : r.stage.grid) out += "," + k;
  out += ",mean_accuracy,mean_work,diverged_cells";
  for (const auto& n : r.class_labels) out += ",acc_" + n;
  out += "\n";
  for (std::size_t rank = 0; rank < r.ranking.size(); ++rank) {
    const auto& c = r.combos[r.ranking[rank]];
    out += std::to_string(rank + 1) + "," + std::to_string(c.index);
    for (const auto& v : c.values) out += "," + v;
    out += "," + detail::accuracy_cell(c.mean_accuracy) + "," + format_double(c.mean_work) + "," + std::to_string(c.diverged_cells);
    for (double a : c.class_accuracy) out += "," + detail::accuracy_cell(a);
    out += "\n";
  }
  return out;
}

/// Mean wall-clock seconds per combination (cell-averaged), by index.
inline std::string timing_csv(const SearchResult& r) {
  std::string out = "combination,mean_seconds\n";
  for (const auto& c : r.combos) out += std::to_string(c.index) + "," + format_double(c.mean_seconds) + "\n";
  return out;
}

namespace detail {

/// Rounds to 12 significant digits so arithmetic steps print cleanly.
inline double tidy(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return *parse_double(buf);
}

}  // namespace detail

/// Three-point refinement around the selected value of `hp`: geometric
/// {v/f, v, v*f} for lr and l2, arithmetic {v-f, v, v+f} for keep rates,
/// widths and batch size. Values outside the valid domain are dropped.
inline std::vector<std::string> narrow_grid(const SearchResult& r, const std::string& hp, double factor) {
  const auto it = std::find_if(r.selected.begin(), r.selected.end(), [&](const Setting& s) { return s.first == hp; });
  std::string current;
  if (it != r.selected.end()) {
    current = it->second;
  } else {
    auto [mlp, train] = combo_config(r.stage, r.selected, r.ranking.front());
    current = *settings_config(mlp, train).get(hp);
  }
  const bool geometric = hp == "lr" || hp == "l2";
  const bool rate = hp == "keep_input" || hp == "keep_hidden";
  const bool integer = hp == "hidden" || hp == "batch_size";
  const auto v = parse_double(current);
  if (!(geometric || rate || integer) || !v) throw Error(Errc::NonNumericHp, hp + " = " + current);
  if (!(factor > 0.0) || (geometric && factor <= 1.0)) throw Error(Errc::InvalidConfig, "narrowing factor " + format_double(factor));

  std::vector<double> points;
  if (geometric) points = {*v / factor, *v, *v * factor};
  else if (integer) {
    const double step = std::max(1.0, std::round(factor));
    points = {*v - step, *v, *v + step};
  } else points = {detail::tidy(*v - factor), *v, detail::tidy(*v + factor)};

  std::vector<std::string> out;
  for (double p : points) {
    if (rate && !(p > 0.0 && p <= 1.0)) continue;
    if (integer && p < 1.0) continue;
    if (geometric && !(p > 0.0)) continue;
    out.push_back(integer ? std::to_string(static_cast<long long>(p)) : format_double(p));
  }
  return out;
}

}  // namespace ocon
