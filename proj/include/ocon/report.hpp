#pragma once

// Evaluation tables for a trained ensemble: per-class accuracy (with AVG and
// ArgMax rows), DET rates with AUC, the K x K confusion matrix and one ROC
// point file per class.
//
// CSV schemas:
//   accuracy.csv   class,accuracy_pct            rows: classes, AVG, OCON
//   det.csv        class,tp,fp,tn,fn,er,fdr,for,npv,auc   (empty cell = undefined)
//   confusion.csv  truth,<predicted classes...>
//   roc_<class>.csv fpr,tpr,threshold

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "ocon/ensemble.hpp"
#include "ocon/error.hpp"
#include "ocon/features.hpp"
#include "ocon/metrics.hpp"

namespace ocon {

struct ClassReport {
  std::string name;
  double accuracy = 0.0;  // percent
  ConfusionCounts counts;
  DetMetrics det;
  RocCurve roc;
};

struct EnsembleReport {
  std::vector<ClassReport> classes;
  double average_accuracy = 0.0;
  double argmax_accuracy = 0.0;
  std::vector<std::vector<std::uint64_t>> confusion;
  std::size_t rows = 0;
};

/// Rows `rows` of `m` as a new matrix (same scaling and label system).
inline FeatureMatrix select_rows(const FeatureMatrix& m, std::span<const std::size_t> rows) {
  FeatureMatrix out;
  out.values.resize(static_cast<Eigen::Index>(rows.size()), m.values.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= m.rows()) throw Error(Errc::DimensionMismatch, "row " + std::to_string(rows[i]) + " out of range");
    out.values.row(static_cast<Eigen::Index>(i)) = m.values.row(static_cast<Eigen::Index>(rows[i]));
    out.labels.push_back(m.labels[rows[i]]);
    out.groups.push_back(m.groups[rows[i]]);
  }
  out.scaling = m.scaling;
  out.feature_set = m.feature_set;
  out.label_system = m.label_system;
  return out;
}

inline EnsembleReport build_report(const OconModel& model, const FeatureMatrix& m) {
  if (m.rows() == 0) throw Error(Errc::EmptyEvaluationSet, "matrix has no rows");
  const auto ev = evaluate_ensemble(model, m);
  EnsembleReport rep;
  rep.rows = m.rows();
  rep.average_accuracy = ev.mean_member_accuracy;
  rep.argmax_accuracy = ev.argmax_accuracy;
  rep.confusion = ev.confusion;
  for (std::size_t c = 0; c < model.size(); ++c) {
    ClassReport cr;
    cr.name = model.classes[c];
    cr.accuracy = ev.member_accuracy[c];
    std::vector<double> scores(m.rows());
    std::vector<int> binary(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
      scores[i] = ev.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
      binary[i] = m.labels[i] == static_cast<int>(c);
    }
    cr.counts = confusion_at(scores, binary, kDecisionThreshold);
    cr.det = det_metrics(cr.counts);
    // Single-class evaluation sets leave the curve empty and AUC undefined.
    const auto positives = cr.counts.tp + cr.counts.fn;
    if (positives > 0 && positives < m.rows()) cr.roc = roc_auc(scores, binary);
    else cr.roc.auc = std::nan("");
    rep.classes.push_back(std::move(cr));
  }
  return rep;
}

namespace detail {

inline std::string opt_cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

inline std::string opt_fixed(const std::optional<double>& v, int decimals) { return v ? fixed(*v, decimals) : std::string("n/a"); }

}  // namespace detail

inline std::string accuracy_csv(const EnsembleReport& r) {
  std::string out = "class,accuracy_pct\n";
  for (const auto& c : r.classes) out += c.name + "," + format_double(c.accuracy) + "\n";
  out += "AVG," + format_double(r.average_accuracy) + "\n";
  out += "OCON," + format_double(r.argmax_accuracy) + "\n";
  return out;
}

inline std::string det_csv(const EnsembleReport& r) {
  std::string out = "class,tp,fp,tn,fn,er,fdr,for,npv,auc\n";
  for (const auto& c : r.classes) {
    out += c.name + "," + std::to_string(c.counts.tp) + "," + std::to_string(c.counts.fp) + "," + std::to_string(c.counts.tn) +
           "," + std::to_string(c.counts.fn) + "," + detail::opt_cell(c.det.er) + "," + detail::opt_cell(c.det.fdr) + "," +
           detail::opt_cell(c.det.for_) + "," + detail::opt_cell(c.det.npv) + "," +
           (std::isnan(c.roc.auc) ? std::string() : format_double(c.roc.auc)) + "\n";
  }
  return out;
}

inline std::string confusion_csv(const EnsembleReport& r) {
  std::string out = "truth";
  for (const auto& c : r.classes) out += "," + c.name;
  out += "\n";
  for (std::size_t t = 0; t < r.classes.size(); ++t) {
    out += r.classes[t].name;
    for (auto n : r.confusion[t]) out += "," + std::to_string(n);
    out += "\n";
  }
  return out;
}

inline std::string roc_csv(const RocCurve& curve) {
  std::string out = "fpr,tpr,threshold\n";
  for (const auto& p : curve.points) out += format_double(p.fpr) + "," + format_double(p.tpr) + "," + format_double(p.threshold) + "\n";
  return out;
}

/// Fixed-width text of both tables, rounded like the published ones
/// (accuracy 2 decimals, DET rates 2, AUC 4).
inline std::string format_report(const EnsembleReport& r) {
  char line[160];
  std::string out = "rows evaluated: " + std::to_string(r.rows) + "\n\n";
  std::snprintf(line, sizeof line, "%-6s %9s\n", "class", "acc %");
  out += line;
  for (const auto& c : r.classes) {
    std::snprintf(line, sizeof line, "%-6s %9.2f\n", c.name.c_str(), c.accuracy);
    out += line;
  }
  std::snprintf(line, sizeof line, "%-6s %9.2f\n%-6s %9.2f\n\n", "AVG", r.average_accuracy, "OCON", r.argmax_accuracy);
  out += line;
  std::snprintf(line, sizeof line, "%-6s %6s %6s %6s %6s %8s\n", "class", "ER", "FDR", "FOR", "NPV", "AUC");
  out += line;
  for (const auto& c : r.classes) {
    std::snprintf(line, sizeof line, "%-6s %6s %6s %6s %6s %8s\n", c.name.c_str(), detail::opt_fixed(c.det.er, 2).c_str(),
                  detail::opt_fixed(c.det.fdr, 2).c_str(), detail::opt_fixed(c.det.for_, 2).c_str(),
                  detail::opt_fixed(c.det.npv, 2).c_str(), std::isnan(c.roc.auc) ? "n/a" : detail::fixed(c.roc.auc, 4).c_str());
    out += line;
  }
  return out;
}

namespace detail {

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << text;
}

}  // namespace detail

/// Writes every table into `dir`; returns the paths written, in order.
inline std::vector<std::filesystem::path> write_report(const EnsembleReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::string& name, const std::string& text) {
    detail::write_text_file(dir / name, text);
    written.push_back(dir / name);
  };
  emit("accuracy.csv", accuracy_csv(r));
  emit("det.csv", det_csv(r));
  emit("confusion.csv", confusion_csv(r));
  emit("report.txt", format_report(r));
  for (const auto& c : r.classes)
    if (!c.roc.points.empty()) emit("roc_" + c.name + ".csv", roc_csv(c.roc));
  return written;
}

inline EnsembleReport report_tables(const OconModel& model, const FeatureMatrix& m, const std::filesystem::path& dir) {
  auto r = build_report(model, m);
  write_report(r, dir);
  return r;
}

}  // namespace ocon
