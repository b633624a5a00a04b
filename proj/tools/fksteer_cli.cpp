// fksteer: run, compare and aggregate steered diffusion sampling experiments.

#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "fksteer/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Feynman-Kac steered diffusion sampling experiments"};
  app.set_version_flag("--version", fksteer::kVersion);
  app.require_subcommand(1);

  std::string config;
  fksteer::CliOptions opts;
  std::string out;
  std::vector<std::uint64_t> seeds;
  int threads = 0;
  bool deterministic = true;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config,-c", config, "JSON config file (comments allowed)");
    if (needs_config) c->required()->check(CLI::ExistingFile);
    sub->add_option("--out,-o", out, "output directory");
    sub->add_option("--seeds", seeds, "comma-separated seeds, overrides engine.seeds")->delimiter(',');
    sub->add_option("--threads", threads, "worker threads (0: runtime default)")->check(CLI::NonNegativeNumber);
    sub->add_flag("--deterministic,!--fast", deterministic, "ordered reductions (default on)");
  };

  auto* run = app.add_subcommand("run", "run one method over the configured seeds");
  add_common(run, true);
  auto* compare = app.add_subcommand("compare", "run every method in compare.methods on shared seeds");
  add_common(compare, true);
  auto* reference = app.add_subcommand("reference", "materialise and cache reference samples");
  add_common(reference, true);
  auto* aggregate = app.add_subcommand("aggregate", "mean/std table over metrics_<seed>.json files");
  std::string agg_dir;
  aggregate->add_option("dir", agg_dir, "directory holding per-seed metrics")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (!out.empty()) opts.out = out;
  if (!seeds.empty()) opts.seeds = seeds;
  if (threads > 0) opts.threads = threads;
  for (auto* sub : {run, compare, reference})
    if (sub->parsed() && sub->count("--deterministic") + sub->count("--fast") > 0)
      opts.deterministic = deterministic;

  try {
    if (run->parsed()) return fksteer::cmd_run(config, opts);
    if (compare->parsed()) return fksteer::cmd_compare(config, opts);
    if (reference->parsed()) return fksteer::cmd_reference(config, opts);
    if (aggregate->parsed()) return fksteer::cmd_aggregate(agg_dir);
  } catch (const fksteer::Error& e) {
    std::cerr << "fksteer: " << fksteer::to_string(e.kind()) << ": " << e.what() << "\n";
    return fksteer::exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "fksteer: error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
