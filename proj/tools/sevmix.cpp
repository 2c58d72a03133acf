// sevmix: config-driven pipeline for injury-severity choice models.
// Subcommands: describe | fit | tests | synth.
//
// Exit codes: 0 success, 2 config/schema error, 3 missing prerequisites,
// 4 I/O failure, 5 estimation failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sevmix/config.hpp"
#include "sevmix/report.hpp"

namespace fs = std::filesystem;
using namespace sevmix;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;
constexpr int kExitIo = 4;
constexpr int kExitEstimation = 5;

struct CliOptions {
  std::string config_path;
  std::string out_override;
  int draws_override = -1;
  int discard_override = -1;
  int workers_override = -1;
  bool strict = false;
};

int default_workers() {
  if (const char* env = std::getenv("SEVMIX_WORKERS")) {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return 1;
}

void apply_overrides(RunConfig& cfg, const CliOptions& opt) {
  if (!opt.out_override.empty()) cfg.output_dir = opt.out_override;
  if (opt.draws_override >= 1) cfg.estimation.n_draws = opt.draws_override;
  if (opt.discard_override >= 0) cfg.estimation.discard = opt.discard_override;
  if (opt.workers_override >= 1) cfg.estimation.workers = opt.workers_override;
  else if (cfg.estimation.workers < 1) cfg.estimation.workers = default_workers();
  if (opt.strict) cfg.strict = true;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

const ModelSpec& spec_for_segment(const RunConfig& cfg, const std::string& name) {
  auto it = cfg.segment_models.find(name);
  return it != cfg.segment_models.end() ? it->second : cfg.model;
}

int cmd_describe(const CliOptions& opt) {
  RunConfig cfg = run_config_from_json(load_json_file(opt.config_path));
  apply_overrides(cfg, opt);
  ParsedDataset parsed = parse_dataset(cfg.input, cfg.schema, cfg.strict);
  PartitionResult part = partition_dataset(parsed.data);
  fs::create_directories(cfg.output_dir);

  std::ostringstream md, csv;
  md << "# Descriptive statistics\n\n";
  md << "Total records parsed: " << parsed.data.records.size() << " (skipped "
     << parsed.rows_skipped << ", excluded dawn/dusk " << part.excluded << ")\n\n";
  md << "| Segment | Count |\n|---|---|\n";
  csv << "segment,count\n";
  for (const SegmentKey& key : all_segment_keys()) {
    auto it = part.segments.find(key);
    std::size_t count = it != part.segments.end() ? it->second.records.size() : 0;
    md << "| " << key.name() << " | " << count << " |\n";
    csv << key.name() << "," << count << "\n";
  }
  csv << "excluded," << part.excluded << "\n";
  md << "| excluded (dawn/dusk) | " << part.excluded << " |\n\n";

  for (const SegmentKey& key : all_segment_keys()) {
    auto it = part.segments.find(key);
    if (it == part.segments.end() || it->second.records.empty()) {
      md << "## Segment: " << key.name() << "\n\nEmpty segment; table omitted.\n\n";
      continue;
    }
    DescriptiveStats stats = descriptive_stats(it->second);
    md << describe_markdown(key.name(), stats);
    write_file(fs::path(cfg.output_dir) / ("describe_" + key.name() + ".csv"),
               describe_csv(key.name(), stats));
  }
  write_file(fs::path(cfg.output_dir) / "describe.md", md.str());
  write_file(fs::path(cfg.output_dir) / "describe_counts.csv", csv.str());
  std::cout << "describe: " << part.segments.size() << " segments, " << part.excluded
            << " excluded records\n";
  return 0;
}

int cmd_fit(const CliOptions& opt) {
  RunConfig cfg = run_config_from_json(load_json_file(opt.config_path));
  apply_overrides(cfg, opt);
  LikelihoodEvaluator::worker_count() = cfg.estimation.workers;
  ParsedDataset parsed = parse_dataset(cfg.input, cfg.schema, cfg.strict);
  PartitionResult part = partition_dataset(parsed.data);
  fs::create_directories(cfg.output_dir);
  if (part.segments.empty()) {
    std::cerr << "fit: no segments after partitioning\n";
    return kExitMissing;
  }

  bool any_failed = false;
  for (const auto& [key, seg] : part.segments) {
    std::string name = key.name();
    try {
      const ModelSpec& spec = spec_for_segment(cfg, name);
      FitResult fit = fit_dispatch(seg, spec, cfg.estimation.n_draws,
                                   cfg.estimation.discard);
      MarginalEffectsTable effects = marginal_effects_average(seg, fit);
      std::vector<RetentionFlag> flags =
          refine_specification(fit, cfg.estimation.retention_confidence);
      write_file(fs::path(cfg.output_dir) / ("fit_" + name + ".md"),
                 fit_markdown(name, fit, effects, flags));
      write_file(fs::path(cfg.output_dir) / ("fit_" + name + ".csv"),
                 fit_csv(name, fit, effects));
      write_file(fs::path(cfg.output_dir) / ("fit_" + name + ".json"),
                 fit_to_json(name, fit, effects, flags).dump(2) + "\n");
      std::cout << "fit " << name << ": LL " << fit.ll_converged << ", rho2 "
                << fit.rho2 << "\n";
    } catch (const std::exception& e) {
      std::cerr << "fit failed for segment " << name << ": " << e.what() << "\n";
      any_failed = true;  // keep attempting the other segments
    }
  }
  return any_failed ? kExitEstimation : 0;
}

int cmd_tests(const CliOptions& opt) {
  RunConfig cfg = run_config_from_json(load_json_file(opt.config_path));
  apply_overrides(cfg, opt);
  LikelihoodEvaluator::worker_count() = cfg.estimation.workers;
  ParsedDataset parsed = parse_dataset(cfg.input, cfg.schema, cfg.strict);
  PartitionResult part = partition_dataset(parsed.data);
  if (part.segments.size() < 2) {
    std::cerr << "tests: fewer than two segments; nothing to compare\n";
    return kExitMissing;
  }
  // Per-segment fit files are the prerequisite evidence from `fit`.
  std::vector<std::string> missing;
  for (const auto& [key, seg] : part.segments) {
    fs::path p = fs::path(cfg.output_dir) / ("fit_" + key.name() + ".json");
    if (!fs::exists(p)) missing.push_back(p.string());
  }
  if (!missing.empty()) {
    std::cerr << "tests: missing fit files (run `sevmix fit` first):\n";
    for (const std::string& m : missing) std::cerr << "  " << m << "\n";
    return kExitMissing;
  }

  std::map<std::string, ModelSpec> seg_specs;
  for (const auto& [name, spec] : cfg.segment_models) seg_specs.emplace(name, spec);
  BatterySettings settings;
  settings.confidence = cfg.estimation.test_confidence;
  settings.n_draws = cfg.estimation.n_draws;
  settings.discard = cfg.estimation.discard;
  BatteryReport report = run_battery(parsed.data, seg_specs, cfg.model, settings);

  fs::create_directories(cfg.output_dir);
  write_file(fs::path(cfg.output_dir) / "tests.md", battery_markdown(report));
  write_file(fs::path(cfg.output_dir) / "tests.csv", battery_csv(report));
  std::cout << "tests: " << report.partition_tests.size() << " partition tests, "
            << report.transfer_blocks.size() << " transfer blocks\n";
  return 0;
}

int cmd_synth(const CliOptions& opt) {
  SynthConfig cfg = synth_config_from_json(load_json_file(opt.config_path));
  std::string out_path = opt.out_override.empty() ? cfg.output : opt.out_override;
  Dataset data = simulate_dataset(cfg.dgp, cfg.n);
  write_csv(data, out_path);
  json truth;
  truth["parameters"] = parameters_to_json(cfg.dgp.params);
  truth["n"] = cfg.n;
  truth["seed"] = cfg.dgp.seed;
  std::cout << "synth: wrote " << data.records.size() << " records to " << out_path
            << "\ntrue parameters: " << truth.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"injury-severity choice modeling pipeline"};
  app.require_subcommand(1);

  CliOptions opt;
  std::string command;
  for (const std::string& name : {"describe", "fit", "tests", "synth"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", opt.config_path, "configuration JSON")->required();
    sub->add_option("--out", opt.out_override, "output directory (file path for synth)");
    sub->add_option("--draws", opt.draws_override, "Halton draw count override");
    sub->add_option("--discard", opt.discard_override, "Halton discard override");
    sub->add_option("--workers", opt.workers_override, "worker thread count");
    sub->add_flag("--strict", opt.strict, "treat row-level warnings as errors");
    sub->callback([&command, name] { command = name; });
  }

  CLI11_PARSE(app, argc, argv);

  try {
    if (command == "describe") return cmd_describe(opt);
    if (command == "fit") return cmd_fit(opt);
    if (command == "tests") return cmd_tests(opt);
    if (command == "synth") return cmd_synth(opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const EstimationError& e) {
    std::cerr << "estimation error: " << e.what() << "\n";
    return kExitEstimation;
  } catch (const std::ios_base::failure& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::runtime_error& e) {
    std::string msg = e.what();
    std::cerr << "error: " << msg << "\n";
    if (msg.find("cannot open") != std::string::npos ||
        msg.find("cannot write") != std::string::npos)
      return kExitIo;
    return 1;
  }
  return 1;
}
