#pragma once

// The `chainsight` command line. Each subcommand is a file-to-file stage:
//
//   snapshot -> diff -> chains -> dist -> {theory, simulate, features}
//   corpus + config -> synth | experiment -> report
//
// Exit status: 0 success, 1 usage error, 2 data error.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "chains.hpp"
#include "change_record.hpp"
#include "classifier.hpp"
#include "dataset.hpp"
#include "errors.hpp"
#include "experiment.hpp"
#include "features.hpp"
#include "simulate.hpp"
#include "snapshot.hpp"
#include "text_io.hpp"
#include "theory.hpp"
#include "units.hpp"

namespace chainsight::cli {

inline constexpr const char* out_dir_env = "CHAINSIGHT_OUT_DIR";

struct GlobalOptions {
  std::optional<std::uint64_t> seed; // unset means 0, and configs keep their own seed
  int verbosity = 0;
  std::string out_dir; // relative output paths are placed here
};

class Context {
 public:
  Context(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  GlobalOptions global;

  std::ostream& out() { return out_; }
  std::ostream& err() { return err_; }

  void log(int level, const std::string& msg) {
    if (global.verbosity >= level) err_ << msg << '\n';
  }

  std::filesystem::path output_path(const std::string& p) const {
    std::filesystem::path path(p);
    if (path.is_relative() && !global.out_dir.empty()) return std::filesystem::path(global.out_dir) / path;
    return path;
  }

  /// Writes text through `fn` to a file, or to the output stream for "-" or "".
  template <class Fn>
  void emit_text(const std::string& target, Fn&& fn) {
    if (target.empty() || target == "-") {
      fn(out_);
      return;
    }
    auto f = text_io::open_out(output_path(target));
    fn(f);
    if (!f) throw format_error("write failed: " + target);
  }

 private:
  std::ostream& out_;
  std::ostream& err_;
};

namespace detail {

inline std::uint64_t size_arg(const std::string& s, const char* flag) {
  try {
    return parse_size(s);
  } catch (const domain_error& e) {
    throw CLI::ValidationError(flag, e.what());
  }
}

inline std::uint64_t default_timestamp() {
  if (const char* sde = std::getenv("SOURCE_DATE_EPOCH"); sde && *sde) {
    try {
      return std::stoull(sde);
    } catch (const std::exception&) {
      throw domain_error("SOURCE_DATE_EPOCH is not an integer");
    }
  }
  return unix_now();
}

} // namespace detail

// ---- subcommands ---------------------------------------------------------------

inline void add_snapshot(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("snapshot", "Hash a disk image into a Merkle snapshot");
  struct Opts {
    std::string image, out, hash = "sha256", source_id;
    std::uint32_t block_size = 4096;
    std::optional<std::uint64_t> timestamp;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("image", o->image, "Disk image file")->required()->check(CLI::ExistingFile);
  sub->add_option("-o,--output", o->out, "Snapshot file to write")->required();
  sub->add_option("--block-size", o->block_size, "Block size in bytes")->capture_default_str();
  sub->add_option("--hash", o->hash, "Hash algorithm (sha256 or sha512)")->capture_default_str();
  sub->add_option("--source-id", o->source_id, "Source identifier stored in the header (default: image file name)");
  sub->add_option("--timestamp", o->timestamp,
                  "Capture time in UNIX seconds (default: $SOURCE_DATE_EPOCH, else the current time)");
  sub->callback([o, &ctx] {
    SnapshotConfig cfg{o->block_size, hash_algorithm_from_name(o->hash)};
    std::ifstream in(o->image, std::ios::binary);
    if (!in) throw format_error("cannot open image " + o->image);
    const std::string id = o->source_id.empty() ? std::filesystem::path(o->image).filename().string() : o->source_id;
    const auto snap = take_snapshot(in, cfg, id, o->timestamp.value_or(detail::default_timestamp()));
    save_snapshot(ctx.output_path(o->out), snap);
    ctx.log(1, "snapshot: " + std::to_string(snap.num_blocks) + " blocks, root " + to_hex(snap.root));
  });
}

inline void add_diff(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("diff", "Compare two snapshots into a change record");
  struct Opts {
    std::string a, b, out;
    bool exhaustive = false;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("before", o->a, "Earlier snapshot")->required()->check(CLI::ExistingFile);
  sub->add_option("after", o->b, "Later snapshot")->required()->check(CLI::ExistingFile);
  sub->add_option("-o,--output", o->out, "Change record file to write")->required();
  sub->add_flag("--exhaustive", o->exhaustive, "Compare every leaf instead of descending the tree");
  sub->callback([o, &ctx] {
    const auto a = load_snapshot(o->a);
    const auto b = load_snapshot(o->b);
    const auto rec = o->exhaustive ? diff_snapshots_exhaustive(a, b) : diff_snapshots(a, b);
    save_change_record(ctx.output_path(o->out), rec);
    ctx.log(1, "diff: " + std::to_string(rec.popcount()) + " of " + std::to_string(rec.length()) + " blocks changed");
  });
}

inline void add_chains(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("chains", "Extract chain lengths from change records");
  struct Opts {
    std::vector<std::string> records;
    std::string out;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("records", o->records, "Change record files (one output line each)")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("-o,--output", o->out, "Chain list CSV (default: standard output)");
  sub->callback([o, &ctx] {
    std::vector<ChainList> lists;
    for (const auto& r : o->records) lists.push_back(extract_chains(load_change_record(r)));
    ctx.emit_text(o->out, [&](std::ostream& s) { write_chain_lists(s, lists); });
  });
}

inline void add_dist(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("dist", "Pool chain lists into an empirical distribution");
  struct Opts {
    std::vector<std::string> inputs;
    std::string out;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("chains", o->inputs, "Chain list CSV files")->required()->check(CLI::ExistingFile);
  sub->add_option("-o,--output", o->out, "Distribution CSV (default: standard output)");
  sub->callback([o, &ctx] {
    std::vector<ChainList> lists;
    for (const auto& f : o->inputs) {
      auto l = load_chain_lists(f);
      lists.insert(lists.end(), std::make_move_iterator(l.begin()), std::make_move_iterator(l.end()));
    }
    const auto d = empirical_distribution(lists);
    ctx.emit_text(o->out, [&](std::ostream& s) { write_distribution(s, d); });
  });
}

inline void add_theory(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("theory", "Chain-length distribution of k uniform changes among n blocks");
  struct Opts {
    std::uint64_t n = 0, k = 0, c_max = 0, trials = 1'000'000;
    std::string method = "auto", out;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--n", o->n, "Number of blocks")->required();
  sub->add_option("--k", o->k, "Number of changed blocks")->required();
  sub->add_option("--c-max", o->c_max, "Largest chain length to report (default: k)");
  sub->add_option("--method", o->method, "auto, exact, brute or mc")
      ->capture_default_str()
      ->check(CLI::IsMember({"auto", "exact", "brute", "mc"}));
  sub->add_option("--trials", o->trials, "Monte Carlo trials")->capture_default_str();
  sub->add_option("-o,--output", o->out, "CSV of c,probability (default: standard output)");
  sub->callback([o, &ctx] {
    TheoryOptions opt;
    opt.method = theory_method_from_name(o->method);
    opt.trials = o->trials;
    opt.seed = ctx.global.seed.value_or(0);
    const UniformChangeModel model{o->n, o->k};
    const auto d = theoretical_distribution(model, o->c_max ? o->c_max : std::max<std::uint64_t>(o->k, 1), opt);
    ctx.emit_text(o->out, [&](std::ostream& s) { write_theory_csv(s, d); });
  });
}

inline void add_simulate(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("simulate", "Simulate public changes plus an optional hidden volume");
  struct Opts {
    std::uint64_t disk_blocks = 0, free_blocks = 0;
    std::string hidden = "0", cover = "0", dist, out;
    std::uint32_t copies = 6, threshold = 1, group = 1, block_size = 4096;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--disk-blocks", o->disk_blocks, "Blocks on the disk")->required();
  sub->add_option("--free-blocks", o->free_blocks, "Free blocks, taken from the end of the disk")->required();
  sub->add_option("--hidden-bytes", o->hidden, "Hidden volume size (bytes or e.g. 0.25GiB; 0 for none)")
      ->capture_default_str();
  sub->add_option("--copies", o->copies, "Carrier copies per hidden block")->capture_default_str();
  sub->add_option("--threshold", o->threshold, "Copies needed to reconstruct a block")->capture_default_str();
  sub->add_option("--chain-group", o->group, "Hidden writes are placed in runs of this many blocks")
      ->capture_default_str();
  sub->add_option("--cover-bytes", o->cover, "Public changes to simulate (bytes or e.g. 25GiB)")->capture_default_str();
  sub->add_option("--block-size", o->block_size, "Block size in bytes")->capture_default_str();
  sub->add_option("--dist", o->dist, "Chain distribution CSV for the public changes")->check(CLI::ExistingFile);
  sub->add_option("-o,--output", o->out, "Change record file to write")->required();
  sub->callback([o, &ctx] {
    DiskModel disk;
    disk.total_blocks = o->disk_blocks;
    disk.free_blocks = o->free_blocks;
    disk.block_size = o->block_size;
    disk.validate();
    const std::uint64_t cover = detail::size_arg(o->cover, "--cover-bytes");
    const std::uint64_t hidden = detail::size_arg(o->hidden, "--hidden-bytes");
    RunSet runs;
    runs.record_length = disk.total_blocks;
    if (cover > 0) {
      if (o->dist.empty()) throw CLI::ValidationError("--dist", "required when --cover-bytes is positive");
      Rng rng(derive_seed(ctx.global.seed.value_or(0), {seed_tag::public_changes}));
      runs = sample_public_runs(disk, PublicChangeConfig{cover, load_distribution(o->dist)}, rng);
    }
    std::vector<std::uint64_t> carriers;
    if (hidden > 0) {
      HiddenVolumeConfig h{hidden, o->copies, o->threshold, o->group};
      carriers = simulate_hidden_writes(disk, h, derive_seed(ctx.global.seed.value_or(0), {seed_tag::hidden_writes}));
    }
    const auto rec = merge_change_records(materialize(runs), carriers);
    save_change_record(ctx.output_path(o->out), rec);
    ctx.log(1, "simulate: " + std::to_string(rec.popcount()) + " changed blocks (" + std::to_string(carriers.size()) +
                   " hidden carriers)");
  });
}

inline void add_features(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("features", "Build a feature matrix from chain lists");
  struct Opts {
    std::string mode = "tail", ref, out, trials = "chains";
    std::size_t n = 1;
    int label = unlabeled;
    std::optional<std::uint64_t> record_length;
    std::vector<std::string> inputs;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--mode", o->mode, "tail (binomial tail) or raw (chain probabilities)")
      ->capture_default_str()
      ->check(CLI::IsMember({"tail", "raw"}));
  sub->add_option("--n", o->n, "Number of features (chain lengths 1..n)")->capture_default_str();
  sub->add_option("--ref", o->ref, "Clean reference distribution CSV (tail mode)")->check(CLI::ExistingFile);
  sub->add_option("--trials", o->trials, "Binomial trials in tail mode: chains or record_length")
      ->capture_default_str()
      ->check(CLI::IsMember({"chains", "record_length"}));
  sub->add_option("--record-length", o->record_length, "Record length used with --trials record_length");
  sub->add_option("--label", o->label, "Label written for every row (0, 1 or -1)")->capture_default_str();
  sub->add_option("chains", o->inputs, "Chain list CSV files, one disk per line")->required()->check(CLI::ExistingFile);
  sub->add_option("-o,--output", o->out, "Feature CSV (default: standard output)");
  sub->callback([o, &ctx] {
    if (o->label < -1 || o->label > 1) throw CLI::ValidationError("--label", "must be -1, 0 or 1");
    std::vector<ChainList> disks;
    for (const auto& f : o->inputs) {
      auto l = load_chain_lists(f);
      disks.insert(disks.end(), std::make_move_iterator(l.begin()), std::make_move_iterator(l.end()));
    }
    FeatureMatrix fm;
    if (feature_mode_from_name(o->mode) == FeatureMode::raw) {
      fm = build_features_raw(disks, o->n);
    } else {
      if (o->ref.empty()) throw CLI::ValidationError("--ref", "required in tail mode");
      const auto ref = reference_from_distribution(load_distribution(o->ref), o->n);
      if (o->trials == "chains") {
        fm = build_features_tail(disks, ref);
      } else if (o->trials == "record_length") {
        if (!o->record_length) throw CLI::ValidationError("--record-length", "required with --trials record_length");
        const std::vector<std::uint64_t> lengths(disks.size(), *o->record_length);
        fm = build_features_tail(disks, ref, TailTrials::record_length, lengths);
      } else {
        throw CLI::ValidationError("--trials", "must be chains or record_length");
      }
    }
    if (o->label != unlabeled) fm.labels.assign(fm.size(), o->label);
    ctx.emit_text(o->out, [&](std::ostream& s) { write_feature_matrix(s, fm); });
  });
}

namespace detail {

inline ExperimentConfig load_config_or_default(const std::string& path, const GlobalOptions& g) {
  ExperimentConfig cfg = path.empty() ? ExperimentConfig{} : load_experiment_config(path);
  if (g.seed) cfg.master_seed = *g.seed;
  cfg.validate();
  return cfg;
}

} // namespace detail

inline void add_synth(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("synth", "Generate a labeled train/test pair from a corpus");
  struct Opts {
    std::string corpus, config, hidden;
    std::uint32_t run = 0;
    std::vector<std::string> outs;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--corpus", o->corpus, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  sub->add_option("--config", o->config, "Experiment config JSON (default: built-in defaults)")
      ->check(CLI::ExistingFile);
  sub->add_option("--run", o->run, "Run index")->capture_default_str();
  sub->add_option("--hidden-size", o->hidden,
                  "Fix the hidden volume size (e.g. 0.75GiB); default mixes the configured sizes");
  sub->add_option("-o,--output", o->outs, "Train and test feature CSVs")->required()->expected(2);
  sub->callback([o, &ctx] {
    const auto cfg = detail::load_config_or_default(o->config, ctx.global);
    const auto corpus = load_corpus(o->corpus);
    std::optional<std::uint64_t> size;
    if (!o->hidden.empty()) size = detail::size_arg(o->hidden, "--hidden-size");
    const auto pair = generate_dataset(corpus, cfg, o->run, size);
    save_feature_matrix(ctx.output_path(o->outs[0]), pair.train.features);
    save_feature_matrix(ctx.output_path(o->outs[1]), pair.test.features);
    ctx.log(1, "synth: " + std::to_string(pair.train.size()) + " train rows, " + std::to_string(pair.test.size()) +
                   " test rows");
  });
}

inline void add_experiment(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("experiment", "Repeat generate/train/evaluate and write a report");
  struct Opts {
    std::string corpus, config, out, models_dir;
    bool print_config = false;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--corpus", o->corpus, "Corpus directory")->check(CLI::ExistingDirectory);
  sub->add_option("--config", o->config, "Experiment config JSON (default: built-in defaults)")
      ->check(CLI::ExistingFile);
  sub->add_option("-o,--output", o->out, "Report JSON to write");
  sub->add_option("--models-dir", o->models_dir, "Also save every trained model here");
  sub->add_flag("--print-config", o->print_config, "Print the effective config as JSON and exit");
  sub->callback([o, &ctx] {
    const auto cfg = detail::load_config_or_default(o->config, ctx.global);
    if (o->print_config) {
      ctx.out() << to_json(cfg).dump(2) << '\n';
      return;
    }
    if (o->corpus.empty()) throw CLI::RequiredError("--corpus");
    if (o->out.empty()) throw CLI::RequiredError("--output");
    const auto corpus = load_corpus(o->corpus);
    const auto out_path = ctx.output_path(o->out);
    ExperimentHooks hooks;
    hooks.partial_path = std::filesystem::path(out_path.string() + ".partial");
    hooks.on_run = [&](const RunResult& r) {
      ctx.log(1, "run " + std::to_string(r.run + 1) + "/" + std::to_string(cfg.repetitions) + " done");
    };
    if (!o->models_dir.empty()) {
      const auto dir = ctx.output_path(o->models_dir);
      hooks.on_model = [dir](std::uint32_t run, int size, const LogisticModel& m) {
        const std::string tag = size < 0 ? "mixed" : "size" + std::to_string(size);
        save_model(dir / ("model_run" + std::to_string(run) + "_" + tag + ".json"), m);
      };
    }
    const auto report = run_experiment(corpus, cfg, hooks);
    save_report(out_path, report);
  });
}

inline void add_report(CLI::App& app, Context& ctx) {
  auto* sub = app.add_subcommand("report", "Render an experiment report as a table or plot data");
  struct Opts {
    std::string report, format = "csv", kind = "table", out;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("report", o->report, "Report JSON")->required()->check(CLI::ExistingFile);
  sub->add_option("--format", o->format, "csv or md")
      ->capture_default_str()
      ->check(CLI::IsMember({"csv", "md"}));
  sub->add_option("--kind", o->kind, "table (all metrics with CI half-widths) or plot (size,fnr,fpr)")
      ->capture_default_str()
      ->check(CLI::IsMember({"table", "plot"}));
  sub->add_option("-o,--output", o->out, "Output file (default: standard output)");
  sub->callback([o, &ctx] {
    const auto r = load_report(o->report);
    const auto fmt = o->format == "md" ? TableFormat::md : TableFormat::csv;
    const auto kind = o->kind == "plot" ? TableKind::plot : TableKind::table;
    ctx.emit_text(o->out, [&](std::ostream& s) { write_report_table(s, r, fmt, kind); });
  });
}

/// Parses argv and runs one subcommand.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Context ctx(out, err);
  CLI::App app{"Detect hidden volumes from multiple disk snapshots", "chainsight"};
  app.require_subcommand(1);
  app.fallthrough();
  if (const char* env = std::getenv(out_dir_env)) ctx.global.out_dir = env;
  app.add_option("--seed", ctx.global.seed, "Master seed for every random choice (default: 0, or the config's)");
  app.add_flag("-v,--verbose", ctx.global.verbosity, "More progress output on standard error (repeatable)");
  app.add_option("--out-dir", ctx.global.out_dir,
                 std::string("Directory for relative output paths (default: $") + out_dir_env + ")");

  add_snapshot(app, ctx);
  add_diff(app, ctx);
  add_chains(app, ctx);
  add_dist(app, ctx);
  add_theory(app, ctx);
  add_simulate(app, ctx);
  add_features(app, ctx);
  add_synth(app, ctx);
  add_experiment(app, ctx);
  add_report(app, ctx);

  if (argc <= 1) {
    err << app.help();
    return 1;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    if (e.get_name() == "ExtrasError" || e.get_name() == "RequiredError") err << '\n' << app.help();
    return 1;
  } catch (const error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

} // namespace chainsight::cli
