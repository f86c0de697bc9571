#pragma once

// Repeated generate/train/evaluate cycles and their aggregate report.

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "classifier.hpp"
#include "dataset.hpp"
#include "errors.hpp"
#include "hash.hpp"
#include "text_io.hpp"
#include "units.hpp"

namespace chainsight {

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {"accuracy", "precision", "recall", "fpr", "fnr"};
  return names;
}

inline std::optional<double> metric_value(const Metrics& m, const std::string& name) {
  if (name == "accuracy") return m.accuracy;
  if (name == "precision") return m.precision;
  if (name == "recall") return m.recall;
  if (name == "fpr") return m.fpr;
  if (name == "fnr") return m.fnr;
  throw domain_error("unknown metric " + name);
}

inline std::string config_hash(const ExperimentConfig& cfg) { return sha256_hex(to_json(cfg).dump()); }

struct RunResult {
  std::uint32_t run = 0;
  std::uint64_t seed = 0;
  std::vector<Metrics> per_size; // aligned with cfg.hidden_sizes
};

struct MetricSummary {
  std::optional<double> mean;     // empty when no run defined the metric
  std::optional<double> half_width;
  std::uint32_t defined_runs = 0;
};

struct SizeSummary {
  std::uint64_t hidden_bytes = 0;
  std::map<std::string, MetricSummary> metrics;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<std::string> corpus_entries;
  std::vector<RunResult> runs;
  std::vector<SizeSummary> sizes;
  bool complete = true;
  std::string error;
};

/// Mean and 1.96 s / sqrt(r) over the values that are defined.
inline MetricSummary summarize(const std::vector<std::optional<double>>& values) {
  MetricSummary s;
  double sum = 0;
  for (const auto& v : values)
    if (v) {
      sum += *v;
      ++s.defined_runs;
    }
  if (s.defined_runs == 0) return s;
  const double r = s.defined_runs;
  const double mean = sum / r;
  double ss = 0;
  for (const auto& v : values)
    if (v) ss += (*v - mean) * (*v - mean);
  s.mean = mean;
  s.half_width = s.defined_runs > 1 ? 1.96 * std::sqrt(ss / (r - 1)) / std::sqrt(r) : 0.0;
  return s;
}

inline std::vector<SizeSummary> aggregate(const ExperimentConfig& cfg, const std::vector<RunResult>& runs) {
  std::vector<SizeSummary> out;
  for (std::size_t s = 0; s < cfg.hidden_sizes.size(); ++s) {
    SizeSummary sz;
    sz.hidden_bytes = cfg.hidden_sizes[s];
    for (const auto& name : metric_names()) {
      std::vector<std::optional<double>> vals;
      for (const auto& r : runs) vals.push_back(metric_value(r.per_size.at(s), name));
      sz.metrics[name] = summarize(vals);
    }
    out.push_back(std::move(sz));
  }
  return out;
}

struct ExperimentHooks {
  /// Called after each run with its metrics.
  std::function<void(const RunResult&)> on_run;
  /// Called with every trained model; `size_index` is -1 for a mixed-size model.
  std::function<void(std::uint32_t run, int size_index, const LogisticModel&)> on_model;
  /// Where to flush the partial report if a run fails.
  std::optional<std::filesystem::path> partial_path;
};

inline void save_report(const std::filesystem::path& path, const ExperimentReport& report);

/// Runs cfg.repetitions cycles. A failing run flushes the finished runs to
/// hooks.partial_path (if set) and rethrows.
inline ExperimentReport run_experiment(const Corpus& corpus, const ExperimentConfig& cfg,
                                       const ExperimentHooks& hooks = {}) {
  cfg.validate();
  ExperimentReport report;
  report.config = cfg;
  for (const auto& e : corpus.entries) report.corpus_entries.push_back(e.name);
  const std::string hash = config_hash(cfg);

  std::uint32_t run = 0;
  try {
    for (; run < cfg.repetitions; ++run) {
      RunResult rr;
      rr.run = run;
      rr.seed = derive_seed(cfg.master_seed, {run});
      if (cfg.size_mode == SizeMode::per_size) {
        const auto pairs = generate_datasets(corpus, cfg, run, cfg.hidden_sizes);
        for (std::size_t s = 0; s < pairs.size(); ++s) {
          LogisticModel model = train(pairs[s].train.features, cfg.training);
          model.config_hash = hash;
          if (hooks.on_model) hooks.on_model(run, static_cast<int>(s), model);
          rr.per_size.push_back(evaluate(model, pairs[s].test.features));
        }
      } else {
        const auto mixed = generate_datasets(corpus, cfg, run, {}, Splits::train_only);
        LogisticModel model = train(mixed[0].train.features, cfg.training);
        model.config_hash = hash;
        if (hooks.on_model) hooks.on_model(run, -1, model);
        ExperimentConfig per = cfg;
        per.size_mode = SizeMode::per_size;
        const auto tests = generate_datasets(corpus, per, run, cfg.hidden_sizes, Splits::test_only);
        for (const auto& t : tests) rr.per_size.push_back(evaluate(model, t.test.features));
      }
      if (hooks.on_run) hooks.on_run(rr);
      report.runs.push_back(std::move(rr));
    }
  } catch (const std::exception& e) {
    report.complete = false;
    report.error = "run " + std::to_string(run) + ": " + e.what();
    if (!report.runs.empty()) report.sizes = aggregate(cfg, report.runs);
    if (hooks.partial_path) save_report(*hooks.partial_path, report);
    throw;
  }
  report.sizes = aggregate(cfg, report.runs);
  return report;
}

// ---- serialization -------------------------------------------------------------

namespace detail {

inline nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

inline std::optional<double> json_opt(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

} // namespace detail

inline nlohmann::json to_json(const Metrics& m) {
  return {{"tp", m.tp},
          {"fp", m.fp},
          {"tn", m.tn},
          {"fn", m.fn},
          {"accuracy", m.accuracy},
          {"precision", detail::opt_json(m.precision)},
          {"recall", detail::opt_json(m.recall)},
          {"fpr", detail::opt_json(m.fpr)},
          {"fnr", detail::opt_json(m.fnr)}};
}

inline nlohmann::json to_json(const ExperimentReport& r) {
  nlohmann::json j;
  j["status"] = r.complete ? "complete" : "partial";
  if (!r.complete) j["error"] = r.error;
  j["config"] = to_json(r.config);
  j["config_hash"] = config_hash(r.config);
  j["corpus"] = r.corpus_entries;
  j["sizes"] = nlohmann::json::array();
  for (const auto& s : r.sizes) {
    nlohmann::json js;
    js["hidden_bytes"] = s.hidden_bytes;
    js["hidden_gib"] = to_gib(s.hidden_bytes);
    nlohmann::json mean, hw, defined;
    for (const auto& name : metric_names()) {
      const auto& m = s.metrics.at(name);
      mean[name] = detail::opt_json(m.mean);
      hw[name] = detail::opt_json(m.half_width);
      defined[name] = m.defined_runs;
    }
    js["mean"] = mean;
    js["ci95_half_width"] = hw;
    js["defined_runs"] = defined;
    j["sizes"].push_back(js);
  }
  j["runs"] = nlohmann::json::array();
  for (const auto& run : r.runs) {
    nlohmann::json jr;
    jr["run"] = run.run;
    jr["seed"] = run.seed;
    jr["metrics"] = nlohmann::json::array();
    for (std::size_t s = 0; s < run.per_size.size(); ++s) {
      auto m = to_json(run.per_size[s]);
      m["hidden_bytes"] = r.config.hidden_sizes.at(s);
      jr["metrics"].push_back(m);
    }
    j["runs"].push_back(jr);
  }
  return j;
}

inline Metrics metrics_from_json(const nlohmann::json& j) {
  Metrics m;
  m.tp = j.at("tp").get<std::uint64_t>();
  m.fp = j.at("fp").get<std::uint64_t>();
  m.tn = j.at("tn").get<std::uint64_t>();
  m.fn = j.at("fn").get<std::uint64_t>();
  m.accuracy = j.at("accuracy").get<double>();
  m.precision = detail::json_opt(j.at("precision"));
  m.recall = detail::json_opt(j.at("recall"));
  m.fpr = detail::json_opt(j.at("fpr"));
  m.fnr = detail::json_opt(j.at("fnr"));
  return m;
}

inline ExperimentReport report_from_json(const nlohmann::json& j) {
  ExperimentReport r;
  try {
    r.complete = j.at("status").get<std::string>() == "complete";
    r.error = j.value("error", std::string{});
    r.config = experiment_config_from_json(j.at("config"));
    r.corpus_entries = j.at("corpus").get<std::vector<std::string>>();
    for (const auto& js : j.at("sizes")) {
      SizeSummary s;
      s.hidden_bytes = js.at("hidden_bytes").get<std::uint64_t>();
      for (const auto& name : metric_names()) {
        MetricSummary m;
        m.mean = detail::json_opt(js.at("mean").at(name));
        m.half_width = detail::json_opt(js.at("ci95_half_width").at(name));
        m.defined_runs = js.at("defined_runs").at(name).get<std::uint32_t>();
        s.metrics[name] = m;
      }
      r.sizes.push_back(std::move(s));
    }
    for (const auto& jr : j.at("runs")) {
      RunResult run;
      run.run = jr.at("run").get<std::uint32_t>();
      run.seed = jr.at("seed").get<std::uint64_t>();
      for (const auto& m : jr.at("metrics")) run.per_size.push_back(metrics_from_json(m));
      r.runs.push_back(std::move(run));
    }
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("report: ") + e.what());
  }
  return r;
}

inline void save_report(const std::filesystem::path& path, const ExperimentReport& report) {
  auto out = text_io::open_out(path);
  out << to_json(report).dump(2) << '\n';
}

inline ExperimentReport load_report(const std::filesystem::path& path) {
  auto in = text_io::open_in(path);
  try {
    return report_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw format_error(path.string() + ": " + e.what());
  } catch (const format_error& e) {
    throw format_error(path.string() + ": " + e.what());
  }
}

// ---- tables ----------------------------------------------------------------------

enum class TableFormat { csv, md };
enum class TableKind { table, plot };

/// `table`: size, five means, five half-widths. `plot`: size, fnr, fpr.
inline void write_report_table(std::ostream& out, const ExperimentReport& r, TableFormat fmt, TableKind kind) {
  std::vector<std::string> header = {"size_gib"};
  if (kind == TableKind::table) {
    for (const auto& n : metric_names()) header.push_back(n);
    for (const auto& n : metric_names()) header.push_back("ci_" + n);
  } else {
    header.push_back("fnr");
    header.push_back("fpr");
  }
  auto cell = [](const std::optional<double>& v) { return v ? text_io::format_double(*v) : std::string("NA"); };
  std::vector<std::vector<std::string>> rows;
  for (const auto& s : r.sizes) {
    std::vector<std::string> row = {text_io::format_double(to_gib(s.hidden_bytes))};
    if (kind == TableKind::table) {
      for (const auto& n : metric_names()) row.push_back(cell(s.metrics.at(n).mean));
      for (const auto& n : metric_names()) row.push_back(cell(s.metrics.at(n).half_width));
    } else {
      row.push_back(cell(s.metrics.at("fnr").mean));
      row.push_back(cell(s.metrics.at("fpr").mean));
    }
    rows.push_back(std::move(row));
  }
  auto emit = [&](const std::vector<std::string>& cells) {
    if (fmt == TableFormat::csv) {
      for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    } else {
      out << '|';
      for (const auto& c : cells) out << ' ' << c << " |";
    }
    out << '\n';
  };
  emit(header);
  if (fmt == TableFormat::md) emit(std::vector<std::string>(header.size(), "---"));
  for (const auto& row : rows) emit(row);
}

} // namespace chainsight
