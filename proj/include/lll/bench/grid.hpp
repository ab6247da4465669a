#pragma once

#include <map>
#include <string>
#include <vector>

#include "lll/bench/tasks.hpp"
#include "lll/cli/runconfig.hpp"

namespace lll::bench {

// The six Table-style variant labels: plain replay baseline, baseline plus
// the identity task, and the adapter variants with/without the identity task.
const std::vector<std::string>& known_variants();
void apply_variant(cli::RunConfig& cfg, const std::string& variant);

struct GridSpec {
  std::vector<std::vector<int>> orders;
  std::vector<double> gammas;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> variants;

  static GridSpec from_config(const cli::RunConfig& cfg, const std::vector<ToyTask>& suite);
};

struct CellOutcome {
  std::string name;
  std::string order;
  double gamma = 0;
  std::uint64_t seed = 0;
  std::string variant;
  double final_avg = 0;
  std::map<std::string, double> final_scores;     // by task name
  std::map<std::string, double> parse_rate;       // final-model generation diagnostic
  std::map<std::string, double> correspondence;   // -1 when nothing parsed
  nlohmann::json record;                          // full per-run record (config inlined)
};

struct GridTable {
  std::vector<CellOutcome> cells;
  nlohmann::json summary;

  const CellOutcome* find(const std::string& variant, double gamma, const std::string& order,
                          std::uint64_t seed) const;
  // Mean of final averages over every (order, seed) cell of the group.
  double group_mean(const std::string& variant, double gamma) const;
};

// Runs every (order, gamma, seed, variant) cell into out_dir/cells/<name>,
// `jobs` worker processes at a time; cells whose runresult.json already
// matches the cell config digest are kept as-is, so an interrupted grid
// continues where it stopped. Emits table.tsv and records.jsonl.
GridTable run_grid(const cli::RunConfig& base, const GridSpec& spec, const std::string& out_dir,
                   int jobs);

struct SweepSpec {
  std::string axis;  // adapter_position | latent_dim | alt_mode
  std::vector<std::string> values;
  int repeats = 3;

  static SweepSpec from_config(const cli::RunConfig& cfg);
};

struct SweepPoint {
  std::string value;
  std::vector<double> scores;  // one per repeat (distinct seeds)
  double mean = 0;
  double stddev = 0;
};

struct SweepTable {
  std::vector<SweepPoint> points;
};

// Axis sweep on the fixed cls,span,slot order, `repeats` seeds per value.
// Emits sweep.tsv and records.jsonl into out_dir.
SweepTable run_sweep(const cli::RunConfig& base, const SweepSpec& spec, const std::string& out_dir,
                     int jobs);

double mean_of(const std::vector<double>& xs);
double stddev_of(const std::vector<double>& xs);  // population

}  // namespace lll::bench
