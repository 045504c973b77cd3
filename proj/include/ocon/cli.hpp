#pragma once

// Command-line front end: ocon <ingest|preprocess|search|train|eval|infer|report>.
//
// Every command appends one run manifest (<runs>/<NNNN>-<command>.manifest)
// recording argv, the effective config and its hash, the seed, timestamps
// and content hashes of every input and output file. Manifests are never
// rewritten.
//
// Errors print "error: <ErrorName>: <detail>" on stderr and exit with
// 10 + the error's ordinal (see error.hpp).

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ocon/binary_io.hpp"
#include "ocon/config.hpp"
#include "ocon/dataset.hpp"
#include "ocon/ensemble.hpp"
#include "ocon/error.hpp"
#include "ocon/features.hpp"
#include "ocon/parallel.hpp"
#include "ocon/report.hpp"
#include "ocon/search.hpp"
#include "ocon/train.hpp"

namespace ocon::cli {

namespace fs = std::filesystem;

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << text;
}

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Hash of a file or, for a directory, of its sorted (relative name, file
/// hash) listing.
inline std::string content_hash(const fs::path& path) {
  if (!fs::exists(path)) throw Error(Errc::IoError, "missing " + path.string());
  if (!fs::is_directory(path)) return file_hash(path);
  std::vector<std::string> lines;
  for (const auto& e : fs::recursive_directory_iterator(path))
    if (e.is_regular_file()) lines.push_back(fs::relative(e.path(), path).generic_string() + " " + file_hash(e.path()));
  std::sort(lines.begin(), lines.end());
  std::string listing;
  for (const auto& l : lines) listing += l + "\n";
  return hex64(fnv1a64(listing));
}

class RunManifest {
 public:
  RunManifest(std::string command, std::vector<std::string> argv) : command_(std::move(command)), argv_(std::move(argv)), started_(utc_now()) {}

  void input(const fs::path& p) { inputs_.push_back(p); }
  void output(const fs::path& p) { outputs_.push_back(p); }
  void config(const std::string& effective) { config_ = effective; }
  void seed(std::uint64_t s) { seed_ = s; }
  void note(const std::string& key, const std::string& value) { notes_.emplace_back(key, value); }

  /// Writes the manifest as a new file in `dir`; returns its path.
  fs::path commit(const fs::path& dir) const {
    fs::create_directories(dir);
    fs::path path;
    for (int n = 1;; ++n) {
      char name[64];
      std::snprintf(name, sizeof name, "%04d-%s.manifest", n, command_.c_str());
      path = dir / name;
      if (!fs::exists(path)) break;
    }
    std::string argv;
    for (const auto& a : argv_) argv += (argv.empty() ? "" : " ") + quote(a);
    KeyValueConfig m;
    m.assign("command", command_);
    m.assign("argv", argv);
    m.assign("started", started_);
    m.assign("finished", utc_now());
    if (seed_) m.assign("seed", std::to_string(*seed_));
    m.assign("config_hash", hex64(fnv1a64(config_)));
    for (std::size_t i = 0; i < inputs_.size(); ++i) m.assign("input." + std::to_string(i), inputs_[i].string() + " " + content_hash(inputs_[i]));
    for (std::size_t i = 0; i < outputs_.size(); ++i)
      m.assign("output." + std::to_string(i), outputs_[i].string() + " " + content_hash(outputs_[i]));
    for (const auto& [k, v] : notes_) m.assign("note." + k, v);
    std::istringstream lines(config_);
    std::string line;
    std::size_t n = 0;
    while (std::getline(lines, line))
      if (!trim(line).empty()) m.assign("config." + std::to_string(n++), std::string(trim(line)));
    write_text(path, m.to_string());
    return path;
  }

 private:
  static std::string quote(const std::string& s) {
    if (!s.empty() && s.find_first_of(" \t\"#") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
      if (c == '"' || c == '\\') out += '\\';
      out += c;
    }
    return out + "\"";
  }

  std::string command_;
  std::vector<std::string> argv_;
  std::string started_;
  std::string config_;
  std::optional<std::uint64_t> seed_;
  std::vector<fs::path> inputs_;
  std::vector<fs::path> outputs_;
  std::vector<std::pair<std::string, std::string>> notes_;
};

inline std::vector<double> parse_vector(std::string_view line) {
  std::vector<double> out;
  for (auto cell : detail::tokenize_row(line)) {
    const auto v = parse_double(cell);
    if (!v) throw Error(Errc::MalformedRow, "not a number: '" + std::string(cell) + "'");
    out.push_back(*v);
  }
  return out;
}

inline ColumnLayout layout_from(const std::string& path) {
  return path.empty() ? ColumnLayout::hgcw_default() : ColumnLayout::from_config(KeyValueConfig::load(path));
}

/// Loads a records file (written by ingest) or a raw measurement table.
inline std::vector<FeatureRecord> read_records(const fs::path& path, const std::string& layout_path) {
  const auto text = read_text(path);
  if (layout_path.empty() && text.starts_with("# name\tf0")) return parse_dataset(text, records_layout());
  return parse_dataset(text, layout_from(layout_path));
}

struct Options {
  std::string runs = "runs";
  bool no_manifest = false;
  // ingest
  std::string data, layout, out, feature_set = "tt12";
  // preprocess
  std::string records, labels = "phoneme", projection;
  bool exclude_children = false, zscore = false;
  // search / train / eval / infer
  std::string matrix, stage, inherit, config, model, input, input_file, format = "csv";
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 0;
  std::optional<std::size_t> desk;
  bool scaled = false, verify = false;
};

inline std::size_t workers_of(const Options& o) { return o.workers ? o.workers : default_workers(); }

inline void cmd_ingest(const Options& o, RunManifest& run, std::ostream& out) {
  const auto kind = feature_set_from_name(o.feature_set);
  const auto records = load_dataset(o.data, layout_from(o.layout));
  const auto filtered = filter_usable(records, kind);
  const fs::path records_path = o.out;
  const fs::path stats_path = records_path.string() + ".stats.tsv";
  write_text(records_path, write_records(records));
  std::string stats = "# records = " + std::to_string(records.size()) + "\n# usable (" + std::string(feature_set_name(kind)) +
                      ") = " + std::to_string(filtered.kept.size()) + "\n# dropped = " + std::to_string(filtered.dropped.size()) + "\n";
  stats += format_class_statistics(class_statistics(filtered.kept));
  write_text(stats_path, stats);
  run.input(o.data);
  if (!o.layout.empty()) run.input(o.layout);
  run.output(records_path);
  run.output(stats_path);
  run.config("feature_set = " + o.feature_set + "\nlayout = " + (o.layout.empty() ? "hgcw_default" : o.layout) + "\n");
  out << "records " << records.size() << ", usable " << filtered.kept.size() << ", dropped " << filtered.dropped.size() << "\n";
}

inline void cmd_preprocess(const Options& o, RunManifest& run, std::ostream& out) {
  const auto kind = feature_set_from_name(o.feature_set);
  auto records = read_records(o.records, o.layout);
  if (o.exclude_children)
    std::erase_if(records, [](const FeatureRecord& r) { return r.group == SpeakerGroup::Boy || r.group == SpeakerGroup::Girl; });
  const auto filtered = filter_usable(records, kind);
  const auto system = label_system_from_name(o.labels);
  const auto m = build_feature_matrix(filtered.kept, kind, system, o.zscore ? ScalingKind::ZScore : ScalingKind::MinMax);
  save_matrix(m, o.out);
  const fs::path summary = o.out + ".txt";
  write_text(summary, matrix_summary(m) + "dropped = " + std::to_string(filtered.dropped.size()) + "\n");
  run.input(o.records);
  run.output(o.out);
  run.output(summary);
  if (!o.projection.empty()) {
    write_text(o.projection, projection_csv(filter_usable(records, FeatureSetKind::SteadyState3).kept));
    run.output(o.projection);
  }
  run.config("feature_set = " + o.feature_set + "\nlabels = " + o.labels + "\nexclude_children = " + (o.exclude_children ? "true" : "false") +
             "\nscaling = " + (o.zscore ? "zscore" : "minmax") + "\n");
  out << "rows " << m.rows() << ", dim " << m.dim() << ", dropped " << filtered.dropped.size() << "\n";
}

inline std::vector<Setting> parse_sets(const std::vector<std::string>& sets) {
  std::vector<Setting> out;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Error(Errc::InvalidConfig, "--set expects key=value, got '" + s + "'");
    out.emplace_back(std::string(trim(std::string_view(s).substr(0, eq))), std::string(trim(std::string_view(s).substr(eq + 1))));
  }
  return out;
}

inline void cmd_search(const Options& o, RunManifest& run, std::ostream& out) {
  const auto m = load_matrix(o.matrix);
  SearchStage stage;
  if (fs::exists(o.stage)) {
    stage = load_stage(o.stage);
    run.input(o.stage);
  } else {
    stage = stage_preset(o.stage);
  }
  if (o.desk) stage = desk_scale(stage, *o.desk);
  if (o.seed) stage.seed = *o.seed;
  std::vector<Setting> inherited;
  if (!o.inherit.empty()) {
    for (const auto& [k, v] : KeyValueConfig::load(o.inherit).entries()) inherited.emplace_back(k, v);
    run.input(o.inherit);
  }
  for (const auto& s : parse_sets(o.sets)) inherited.push_back(s);
  const auto result = run_stage(m, stage, inherited, workers_of(o));
  const fs::path dir = o.out;
  fs::create_directories(dir);
  write_text(dir / "ranked.csv", ranked_csv(result));
  write_text(dir / "timing.csv", timing_csv(result));
  KeyValueConfig selected;
  for (const auto& [k, v] : result.selected) selected.assign(k, v);
  write_text(dir / "selected.txt", selected.to_string());
  write_text(dir / "stage.txt", format_stage(stage));
  run.input(o.matrix);
  for (const char* f : {"ranked.csv", "timing.csv", "selected.txt", "stage.txt"}) run.output(dir / f);
  run.seed(stage.seed);
  run.config(format_stage(stage) + selected.to_string());
  run.note("cycles", std::to_string(cycle_count(stage, result.class_labels.size())));
  const auto& best = result.best();
  out << stage.name << ": " << result.combos.size() << " combinations, " << cycle_count(stage, result.class_labels.size())
      << " cycles; best #" << best.index;
  for (std::size_t g = 0; g < stage.grid.size(); ++g) out << " " << stage.grid[g].first << "=" << best.values[g];
  out << " mean accuracy " << format_double(best.mean_accuracy) << "%\n";
}

inline std::pair<MlpConfig, TrainConfig> train_configs(const Options& o, const FeatureMatrix& m, RunManifest& run) {
  MlpConfig mlp = MlpConfig::tuned(m.dim());
  TrainConfig train;
  if (!o.config.empty()) {
    apply_config(KeyValueConfig::load(o.config), mlp, train);
    run.input(o.config);
  }
  apply_settings(parse_sets(o.sets), mlp, train);
  if (o.seed) train.seed = *o.seed;
  mlp.input_dim = m.dim();
  mlp.validate();
  train.validate();
  return {mlp, train};
}

inline std::string loss_curve_csv(const TrainReport& r) {
  std::string out = "epoch,loss\n";
  for (std::size_t e = 0; e < r.loss_curve.size(); ++e) out += std::to_string(e + 1) + "," + format_double(r.loss_curve[e]) + "\n";
  return out;
}

inline void cmd_train(const Options& o, RunManifest& run, std::ostream& out) {
  const auto m = load_matrix(o.matrix);
  const auto [mlp, train] = train_configs(o, m, run);
  run.input(o.matrix);
  run.seed(train.seed);
  run.config(settings_config(mlp, train).to_string());
  const auto result = train_ensemble(m, mlp, train, workers_of(o));
  const fs::path dir = o.out;
  const fs::path reports = dir / "reports";
  fs::create_directories(reports);
  for (std::size_t c = 0; c < result.reports.size(); ++c) {
    const auto& name = result.model.classes[c];
    write_text(reports / (name + ".txt"), format_train_report(result.reports[c], name));
    write_text(reports / (name + "_loss.csv"), loss_curve_csv(result.reports[c]));
    out << name << ": " << stop_reason_name(result.reports[c].stop) << " after " << result.reports[c].epochs << " epochs, test accuracy "
        << format_double(result.reports[c].test_accuracy) << "%\n";
  }
  run.output(reports);
  const auto& model = require_complete(result);
  save_ensemble(model, dir / "model");
  write_text(dir / "model" / "train_config.txt", settings_config(mlp, train).to_string());
  run.output(dir / "model");
}

inline void cmd_eval(const Options& o, RunManifest& run, std::ostream& out) {
  const auto model = load_ensemble(o.model);
  const auto m = load_matrix(o.matrix);
  const auto written = write_report(build_report(model, m), o.out);
  run.input(o.model);
  run.input(o.matrix);
  for (const auto& p : written) run.output(p);
  out << read_text(fs::path(o.out) / "report.txt");
}

inline void cmd_infer(const Options& o, RunManifest& run, std::ostream& out) {
  const auto model = load_ensemble(o.model);
  run.input(o.model);
  std::vector<std::vector<double>> inputs;
  if (!o.input.empty()) inputs.push_back(parse_vector(o.input));
  if (!o.input_file.empty()) {
    std::istringstream lines(read_text(o.input_file));
    std::string line;
    while (std::getline(lines, line)) {
      const auto t = trim(line);
      if (t.empty() || t.front() == '#') continue;
      inputs.push_back(parse_vector(t));
    }
    run.input(o.input_file);
  }
  if (inputs.empty()) throw Error(Errc::InvalidConfig, "infer needs --input or --file");
  if (o.format != "csv" && o.format != "jsonl") throw Error(Errc::InvalidConfig, "unknown format '" + o.format + "'");
  if (o.format == "csv") {
    out << "row";
    for (const auto& c : model.classes) out << ",p_" << c;
    out << ",predicted\n";
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto r = infer(model, inputs[i], o.scaled);
    if (o.format == "csv") {
      out << i;
      for (double p : r.probabilities) out << "," << format_double(p);
      out << "," << model.classes[r.predicted] << "\n";
    } else {
      nlohmann::ordered_json j;
      j["row"] = i;
      j["classes"] = model.classes;
      j["probabilities"] = r.probabilities;
      j["predicted"] = model.classes[r.predicted];
      j["index"] = r.predicted;
      out << j.dump() << "\n";
    }
  }
  run.config(std::string("format = ") + o.format + "\nscaled = " + (o.scaled ? "true" : "false") + "\n");
}

/// Summary of every manifest in the runs directory, with each recorded
/// artifact re-hashed. --verify turns any mismatch into HashMismatch.
inline void cmd_report(const Options& o, std::ostream& out) {
  const fs::path dir = o.runs;
  if (!fs::is_directory(dir)) throw Error(Errc::IoError, "no runs directory " + dir.string());
  std::vector<fs::path> manifests;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".manifest") manifests.push_back(e.path());
  std::sort(manifests.begin(), manifests.end());
  std::size_t bad = 0;
  out << "manifest\tcommand\tseed\tinputs\toutputs\tstatus\n";
  for (const auto& path : manifests) {
    const auto m = KeyValueConfig::load(path);
    std::size_t inputs = 0, outputs = 0;
    std::string status = "ok";
    for (const auto& [k, v] : m.entries()) {
      const bool is_in = k.starts_with("input."), is_out = k.starts_with("output.");
      if (!is_in && !is_out) continue;
      (is_in ? inputs : outputs) += 1;
      const auto space = v.rfind(' ');
      const fs::path artifact = v.substr(0, space);
      const auto recorded = v.substr(space + 1);
      if (!fs::exists(artifact)) status = "missing " + artifact.string();
      else if (content_hash(artifact) != recorded && status == "ok") status = "changed " + artifact.string();
    }
    if (status != "ok") ++bad;
    out << path.filename().string() << "\t" << m.get("command").value_or("?") << "\t" << m.get("seed").value_or("-") << "\t" << inputs
        << "\t" << outputs << "\t" << status << "\n";
  }
  out << manifests.size() << " runs, " << bad << " with changed or missing artifacts\n";
  if (o.verify && bad) throw Error(Errc::HashMismatch, std::to_string(bad) + " runs no longer match their manifests");
}

/// Entry point; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Options o;
  CLI::App app{"OCON one-class-one-network workbench"};
  app.require_subcommand(1);
  app.add_option("--runs", o.runs, "Directory for run manifests")->capture_default_str();
  app.add_flag("--no-manifest", o.no_manifest, "Do not write a run manifest");

  auto* ingest = app.add_subcommand("ingest", "Parse a measurement table into a records file and class statistics");
  ingest->add_option("--data", o.data, "Measurement table")->required();
  ingest->add_option("--layout", o.layout, "Column layout file (default: HGCW layout)");
  ingest->add_option("--feature-set", o.feature_set, "Feature set used for the usable filter: ss3, ss4, tt12")->capture_default_str();
  ingest->add_option("--out", o.out, "Records file to write")->required();

  auto* pre = app.add_subcommand("preprocess", "Build a scaled feature matrix");
  pre->add_option("--records", o.records, "Records file (or raw table with --layout)")->required();
  pre->add_option("--layout", o.layout, "Column layout for a raw table");
  pre->add_option("--feature-set", o.feature_set, "ss3, ss4 or tt12")->capture_default_str();
  pre->add_option("--labels", o.labels, "phoneme or speaker")->capture_default_str();
  pre->add_flag("--exclude-children", o.exclude_children, "Keep only men and women");
  pre->add_flag("--zscore", o.zscore, "Z-score instead of min-max scaling");
  pre->add_option("--projection", o.projection, "Also write the F1/F0-F2/F0 projection CSV");
  pre->add_option("--out", o.out, "Matrix file to write")->required();

  auto* search = app.add_subcommand("search", "Run one grid-search stage");
  search->add_option("--matrix", o.matrix, "Feature matrix")->required();
  search->add_option("--stage", o.stage, "Stage file or preset (stage1..stage4)")->required();
  search->add_option("--inherit", o.inherit, "Settings inherited from a previous stage (selected.txt)");
  search->add_option("--set", o.sets, "Extra inherited setting key=value");
  search->add_option("--desk-scale", o.desk, "Divide epochs and folds by this factor");
  search->add_option("--seed", o.seed, "Stage seed");
  search->add_option("--workers", o.workers, "Worker threads (default: OCON_WORKERS or 1)");
  search->add_option("--out", o.out, "Output directory")->required();

  auto* trn = app.add_subcommand("train", "Train a full ensemble");
  trn->add_option("--matrix", o.matrix, "Feature matrix")->required();
  trn->add_option("--config", o.config, "Training config file (key = value)");
  trn->add_option("--set", o.sets, "Override one setting, key=value");
  trn->add_option("--seed", o.seed, "Master seed");
  trn->add_option("--workers", o.workers, "Worker threads (default: OCON_WORKERS or 1)");
  trn->add_option("--out", o.out, "Output directory")->required();

  auto* ev = app.add_subcommand("eval", "Evaluate an ensemble and write report tables");
  ev->add_option("--model", o.model, "Ensemble directory")->required();
  ev->add_option("--matrix", o.matrix, "Feature matrix")->required();
  ev->add_option("--out", o.out, "Report directory")->required();

  auto* inf = app.add_subcommand("infer", "Run the ensemble on feature vectors");
  inf->add_option("--model", o.model, "Ensemble directory")->required();
  inf->add_option("--input", o.input, "One vector, comma or space separated");
  inf->add_option("--file", o.input_file, "File with one vector per line");
  inf->add_option("--format", o.format, "csv or jsonl")->capture_default_str();
  inf->add_flag("--scaled", o.scaled, "Inputs are already scaled");

  auto* rep = app.add_subcommand("report", "Summarize run manifests");
  rep->add_flag("--verify", o.verify, "Fail if any recorded artifact changed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << errc_name(Errc::InvalidConfig) << ": " << e.what() << "\n";
    return exit_code(Errc::InvalidConfig);
  }

  const auto* sub = app.get_subcommands().front();
  std::vector<std::string> args(argv, argv + argc);
  try {
    if (sub == rep) {
      cmd_report(o, out);
      return 0;
    }
    RunManifest manifest(sub->get_name(), args);
    if (sub == ingest) cmd_ingest(o, manifest, out);
    else if (sub == pre) cmd_preprocess(o, manifest, out);
    else if (sub == search) cmd_search(o, manifest, out);
    else if (sub == trn) cmd_train(o, manifest, out);
    else if (sub == ev) cmd_eval(o, manifest, out);
    else if (sub == inf) cmd_infer(o, manifest, out);
    if (!o.no_manifest) manifest.commit(o.runs);
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    err << "error: " << errc_name(Errc::IoError) << ": " << e.what() << "\n";
    return exit_code(Errc::IoError);
  }
}

}  // namespace ocon::cli
