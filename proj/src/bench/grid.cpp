#include "lll/bench/grid.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "lll/cli/runner.hpp"

namespace lll::bench {

namespace fs = std::filesystem;
using cli::RunConfig;
using nlohmann::json;

namespace {

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::string format_gamma(double g) {
  std::ostringstream os;
  os << g;
  return os.str();
}

std::string cell_dir_name(const std::string& variant, const std::string& order, double gamma,
                          std::uint64_t seed) {
  std::string o = order;
  std::replace(o.begin(), o.end(), ',', '-');
  std::string v = variant;
  std::replace(v.begin(), v.end(), '+', 'p');  // "+id" -> "pid" for path friendliness
  return v + "_" + o + "_g" + format_gamma(gamma) + "_s" + std::to_string(seed);
}

struct PendingJob {
  RunConfig cfg;
  std::string dir;
};

void run_job(const PendingJob& job) { cli::run_one(job.cfg, job.dir); }

bool cell_complete(const PendingJob& job) {
  std::ifstream f(job.dir + "/runresult.json");
  if (!f) return false;
  try {
    json j = json::parse(f);
    return j.at("config_digest").get<std::string>() == job.cfg.digest();
  } catch (const std::exception&) {
    return false;
  }
}

// Simple forked worker pool; each child runs one cell and exits. Results are
// collected from the files the children wrote.
void run_jobs(const std::vector<PendingJob>& jobs, int parallel) {
  if (parallel <= 1) {
    for (const PendingJob& job : jobs)
      if (!cell_complete(job)) run_job(job);
    return;
  }
  std::vector<const PendingJob*> queue;
  for (const PendingJob& job : jobs)
    if (!cell_complete(job)) queue.push_back(&job);

  std::size_t next = 0;
  int running = 0;
  std::vector<std::pair<pid_t, const PendingJob*>> active;
  std::vector<std::string> failures;
  auto reap = [&](bool block) {
    int status = 0;
    const pid_t pid = waitpid(-1, &status, block ? 0 : WNOHANG);
    if (pid <= 0) return false;
    auto it = std::find_if(active.begin(), active.end(), [&](const auto& p) { return p.first == pid; });
    if (it != active.end()) {
      const bool ok = WIFEXITED(status) && WEXITSTATUS(status) == 0;
      if (!ok) failures.push_back(it->second->dir);
      active.erase(it);
      --running;
    }
    return true;
  };
  while (next < queue.size() || running > 0) {
    while (next < queue.size() && running < parallel) {
      const PendingJob* job = queue[next++];
      const pid_t pid = fork();
      if (pid < 0) throw std::runtime_error("grid: fork failed");
      if (pid == 0) {
        try {
          run_job(*job);
          _exit(0);
        } catch (const std::exception& e) {
          std::fprintf(stderr, "[cell %s] %s\n", job->dir.c_str(), e.what());
          _exit(2);
        }
      }
      active.emplace_back(pid, job);
      ++running;
    }
    if (running > 0) reap(true);
  }
  if (!failures.empty()) {
    std::string msg = "grid: " + std::to_string(failures.size()) + " cell(s) failed:";
    for (const std::string& d : failures) msg += " " + d;
    throw std::runtime_error(msg);
  }
}

int effective_jobs(int jobs) {
  if (jobs > 0) return jobs;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

CellOutcome load_cell(const PendingJob& job, const std::string& variant, const std::string& order,
                      double gamma, std::uint64_t seed) {
  std::ifstream f(job.dir + "/runresult.json");
  if (!f) throw std::runtime_error("grid: missing result " + job.dir + "/runresult.json");
  const json result = json::parse(f);

  CellOutcome cell;
  cell.name = fs::path(job.dir).filename().string();
  cell.order = order;
  cell.gamma = gamma;
  cell.seed = seed;
  cell.variant = variant;
  cell.final_avg = result.at("final_avg").get<double>();
  for (auto& [task, score] : result.at("final_scores").items())
    cell.final_scores[task] = score.get<double>();
  for (const json& d : result.at("final_diag")) {
    const std::string task = d.at("task").get<std::string>();
    cell.parse_rate[task] = d.at("parse_rate").get<double>();
    cell.correspondence[task] = d.at("correspondence").is_null() ? -1.0 : d.at("correspondence").get<double>();
  }

  json config_j = json::object();
  for (const std::string& key : RunConfig::keys()) config_j[key] = job.cfg.get(key);
  cell.record = json{{"cell", cell.name},     {"variant", variant}, {"order", order},
                     {"gamma", gamma},        {"seed", seed},       {"config", config_j},
                     {"result", result}};
  return cell;
}

}  // namespace

double mean_of(const std::vector<double>& xs) {
  double s = 0;
  for (double x : xs) s += x;
  return xs.empty() ? 0 : s / static_cast<double>(xs.size());
}

double stddev_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0;
  const double m = mean_of(xs);
  double acc = 0;
  for (double x : xs) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(xs.size()));
}

const std::vector<std::string>& known_variants() {
  static const std::vector<std::string> v{"baseline", "+id", "rvae", "rvae-id", "rcvae", "rcvae-id"};
  return v;
}

void apply_variant(RunConfig& cfg, const std::string& variant) {
  if (variant == "baseline") {
    cfg.adapter = "none";
    cfg.use_id_task = false;
    cfg.mode = "naive";
  } else if (variant == "+id") {
    cfg.adapter = "none";
    cfg.use_id_task = true;
    cfg.mode = "naive";
  } else if (variant == "rvae" || variant == "rvae-id" || variant == "rcvae" || variant == "rcvae-id") {
    cfg.adapter = variant.rfind("rcvae", 0) == 0 ? "rcvae" : "rvae";
    cfg.use_id_task = variant.find("-id") == std::string::npos;
    cfg.mode = "alt";
  } else {
    throw cli::ConfigError("grid: unknown variant '" + variant + "'");
  }
}

GridSpec GridSpec::from_config(const RunConfig& cfg, const std::vector<ToyTask>& suite) {
  GridSpec spec;
  if (cfg.grid_orders == "all") {
    spec.orders = all_task_orders();
  } else {
    std::stringstream ss(cfg.grid_orders);
    std::string one;
    while (std::getline(ss, one, ';'))
      if (!one.empty()) spec.orders.push_back(parse_order(one, suite));
  }
  for (const std::string& g : split_csv(cfg.grid_gammas)) spec.gammas.push_back(std::stod(g));
  for (const std::string& s : split_csv(cfg.grid_seeds)) spec.seeds.push_back(std::stoull(s));
  spec.variants = split_csv(cfg.grid_variants);
  for (const std::string& v : spec.variants)
    if (std::find(known_variants().begin(), known_variants().end(), v) == known_variants().end())
      throw cli::ConfigError("grid: unknown variant '" + v + "'");
  if (spec.orders.empty() || spec.gammas.empty() || spec.seeds.empty() || spec.variants.empty())
    throw cli::ConfigError("grid: orders, gammas, seeds, and variants must all be non-empty");
  return spec;
}

const CellOutcome* GridTable::find(const std::string& variant, double gamma, const std::string& order,
                                   std::uint64_t seed) const {
  for (const CellOutcome& c : cells)
    if (c.variant == variant && c.gamma == gamma && c.order == order && c.seed == seed) return &c;
  return nullptr;
}

double GridTable::group_mean(const std::string& variant, double gamma) const {
  std::vector<double> xs;
  for (const CellOutcome& c : cells)
    if (c.variant == variant && c.gamma == gamma) xs.push_back(c.final_avg);
  return mean_of(xs);
}

GridTable run_grid(const RunConfig& base, const GridSpec& spec, const std::string& out_dir, int jobs) {
  const auto suite = toy_suite(base.cls_seed, base.span_seed, base.slot_seed);
  fs::create_directories(out_dir + "/cells");

  struct CellKey {
    std::string variant, order;
    double gamma;
    std::uint64_t seed;
  };
  std::vector<PendingJob> pending;
  std::vector<CellKey> keys;
  for (const std::string& variant : spec.variants) {
    for (const auto& order : spec.orders) {
      for (double gamma : spec.gammas) {
        for (std::uint64_t seed : spec.seeds) {
          RunConfig cfg = base;
          apply_variant(cfg, variant);
          cfg.order = order_string(order, suite);
          cfg.gamma = gamma;
          cfg.seed = seed;
          cfg.validate();
          PendingJob job;
          job.cfg = cfg;
          job.dir = out_dir + "/cells/" + cell_dir_name(variant, cfg.order, gamma, seed);
          pending.push_back(std::move(job));
          keys.push_back(CellKey{variant, cfg.order, gamma, seed});
        }
      }
    }
  }

  run_jobs(pending, effective_jobs(jobs));

  GridTable table;
  for (std::size_t i = 0; i < pending.size(); ++i)
    table.cells.push_back(
        load_cell(pending[i], keys[i].variant, keys[i].order, keys[i].gamma, keys[i].seed));

  // records.jsonl: one full record per cell.
  {
    std::ofstream rec(out_dir + "/records.jsonl");
    for (const CellOutcome& c : table.cells) rec << c.record.dump() << '\n';
  }

  // table.tsv: per-cell rows, then per-seed pooled rows, then per-(variant,
  // gamma) aggregate rows whose std is across task orders.
  const auto task_names = [&] {
    std::vector<std::string> names;
    for (const ToyTask& t : suite) names.push_back(t.name);
    return names;
  }();
  std::ofstream tsv(out_dir + "/table.tsv");
  tsv << "# rows: cell = one run; seed-pool = mean over orders for one seed; "
         "aggregate = mean of per-order means, std across task orders (population)\n";
  tsv << "kind\tvariant\tgamma\torder\tseed\tavg\tstd";
  for (const auto& n : task_names) tsv << "\t" << n;
  for (const auto& n : task_names) tsv << "\tparse_" << n << "\tcorr_" << n;
  tsv << "\n";
  tsv.precision(4);
  tsv << std::fixed;

  auto cell_row = [&](const CellOutcome& c) {
    tsv << "cell\t" << c.variant << "\t" << format_gamma(c.gamma) << "\t" << c.order << "\t" << c.seed
        << "\t" << c.final_avg << "\t-";
    for (const auto& n : task_names) {
      auto it = c.final_scores.find(n);
      if (it != c.final_scores.end())
        tsv << "\t" << it->second;
      else
        tsv << "\t-";
    }
    for (const auto& n : task_names) {
      auto pr = c.parse_rate.find(n);
      auto co = c.correspondence.find(n);
      tsv << "\t" << (pr == c.parse_rate.end() ? -1.0 : pr->second);
      tsv << "\t" << (co == c.correspondence.end() ? -1.0 : co->second);
    }
    tsv << "\n";
  };
  for (const CellOutcome& c : table.cells) cell_row(c);

  json summary = json::array();
  for (const std::string& variant : spec.variants) {
    for (double gamma : spec.gammas) {
      for (std::uint64_t seed : spec.seeds) {
        std::vector<double> byorder;
        for (const auto& order : spec.orders) {
          const CellOutcome* c = table.find(variant, gamma, order_string(order, suite), seed);
          if (c) byorder.push_back(c->final_avg);
        }
        if (!byorder.empty())
          tsv << "seed-pool\t" << variant << "\t" << format_gamma(gamma) << "\tall\t" << seed << "\t"
              << mean_of(byorder) << "\t" << stddev_of(byorder) << "\n";
      }
      // per-order means pooled over seeds, aggregated across orders
      std::vector<double> order_means;
      std::map<std::string, std::vector<double>> corr_by_task;
      for (const auto& order : spec.orders) {
        std::vector<double> vals;
        for (std::uint64_t seed : spec.seeds) {
          const CellOutcome* c = table.find(variant, gamma, order_string(order, suite), seed);
          if (!c) continue;
          vals.push_back(c->final_avg);
          for (const auto& [task, rate] : c->correspondence)
            if (rate >= 0) corr_by_task[task].push_back(rate);
        }
        if (!vals.empty()) order_means.push_back(mean_of(vals));
      }
      if (order_means.empty()) continue;
      const double avg = mean_of(order_means);
      const double std = stddev_of(order_means);
      tsv << "aggregate\t" << variant << "\t" << format_gamma(gamma) << "\tall\tall\t" << avg << "\t"
          << std;
      for (const auto& n : task_names) {
        std::vector<double> vals;
        for (const CellOutcome& c : table.cells)
          if (c.variant == variant && c.gamma == gamma && c.final_scores.count(n))
            vals.push_back(c.final_scores.at(n));
        tsv << "\t" << mean_of(vals);
      }
      for (const auto& n : task_names) {
        std::vector<double> prs;
        for (const CellOutcome& c : table.cells)
          if (c.variant == variant && c.gamma == gamma && c.parse_rate.count(n))
            prs.push_back(c.parse_rate.at(n));
        tsv << "\t" << mean_of(prs);
        const auto it = corr_by_task.find(n);
        tsv << "\t" << (it == corr_by_task.end() ? -1.0 : mean_of(it->second));
      }
      tsv << "\n";
      json corr_j = json::object();
      for (const auto& [task, rates] : corr_by_task) corr_j[task] = mean_of(rates);
      summary.push_back(json{{"variant", variant},
                             {"gamma", gamma},
                             {"avg", avg},
                             {"std_across_orders", std},
                             {"correspondence", corr_j}});
    }
  }
  table.summary = summary;
  {
    std::ofstream sf(out_dir + "/summary.json");
    sf << summary.dump(2) << '\n';
  }
  return table;
}

SweepSpec SweepSpec::from_config(const RunConfig& cfg) {
  SweepSpec spec;
  spec.axis = cfg.sweep_axis;
  spec.repeats = cfg.sweep_repeats;
  std::string values = cfg.sweep_values;
  if (values.empty()) {
    if (spec.axis == "adapter_position") {
      for (int p = 0; p <= cfg.n_layers; ++p)
        values += (p ? "," : "") + std::to_string(p);
    } else if (spec.axis == "latent_dim") {
      values = "10,50,100,200";
    } else if (spec.axis == "alt_mode") {
      values = "naive,alt_m1,alt_m1_rev,alt_m1_star,alt2,alt3,alt4,alt6";
    }
  }
  spec.values = split_csv(values);
  if (spec.axis != "adapter_position" && spec.axis != "latent_dim" && spec.axis != "alt_mode")
    throw cli::ConfigError("sweep: unknown axis '" + spec.axis + "'");
  if (spec.values.empty()) throw cli::ConfigError("sweep: no values for axis " + spec.axis);
  return spec;
}

namespace {

void apply_axis_value(RunConfig& cfg, const std::string& axis, const std::string& value) {
  if (axis == "adapter_position") {
    cfg.adapter_position = std::stoi(value);
    if (cfg.adapter_position < 0 || cfg.adapter_position > cfg.n_layers)
      throw cli::ConfigError("sweep: adapter position " + value + " outside [0," +
                             std::to_string(cfg.n_layers) + "]");
  } else if (axis == "latent_dim") {
    cfg.latent_dim = std::stoi(value);
    if (cfg.latent_dim < 1) throw cli::ConfigError("sweep: latent_dim must be at least 1");
  } else if (axis == "alt_mode") {
    if (value == "naive" || value == "alt_m1" || value == "alt_m1_rev" || value == "alt_m1_star") {
      cfg.mode = value;
    } else if (value.rfind("alt", 0) == 0) {
      cfg.mode = "alt";
      cfg.alt_turns = std::stoi(value.substr(3));
    } else {
      throw cli::ConfigError("sweep: unknown alt mode '" + value + "'");
    }
  }
}

}  // namespace

SweepTable run_sweep(const RunConfig& base, const SweepSpec& spec, const std::string& out_dir,
                     int jobs) {
  fs::create_directories(out_dir + "/cells");
  RunConfig fixed = base;
  fixed.order = "cls,span,slot";  // the sweep protocol's fixed order
  if (!fixed.has_adapter() && spec.axis != "alt_mode") apply_variant(fixed, "rvae");
  if (spec.axis == "alt_mode" && !fixed.has_adapter()) apply_variant(fixed, "rvae");

  std::vector<PendingJob> pending;
  for (const std::string& value : spec.values) {
    for (int r = 0; r < spec.repeats; ++r) {
      RunConfig cfg = fixed;
      apply_axis_value(cfg, spec.axis, value);
      cfg.seed = base.seed + static_cast<std::uint64_t>(r);
      cfg.validate();
      PendingJob job;
      job.cfg = cfg;
      job.dir = out_dir + "/cells/" + spec.axis + "_" + value + "_r" + std::to_string(r);
      pending.push_back(std::move(job));
    }
  }
  run_jobs(pending, effective_jobs(jobs));

  SweepTable table;
  std::ofstream rec(out_dir + "/records.jsonl");
  std::size_t idx = 0;
  for (const std::string& value : spec.values) {
    SweepPoint point;
    point.value = value;
    for (int r = 0; r < spec.repeats; ++r, ++idx) {
      std::ifstream f(pending[idx].dir + "/runresult.json");
      if (!f) throw std::runtime_error("sweep: missing result in " + pending[idx].dir);
      json result = json::parse(f);
      point.scores.push_back(result.at("final_avg").get<double>());
      json config_j = json::object();
      for (const std::string& key : RunConfig::keys()) config_j[key] = pending[idx].cfg.get(key);
      rec << json{{"axis", spec.axis}, {"value", value},     {"repeat", r},
                  {"config", config_j}, {"result", result}}
                 .dump()
          << '\n';
    }
    point.mean = mean_of(point.scores);
    point.stddev = stddev_of(point.scores);
    table.points.push_back(std::move(point));
  }

  std::ofstream tsv(out_dir + "/sweep.tsv");
  tsv << "# axis sweep on order cls,span,slot; mean and std across " << spec.repeats
      << " repeat seeds\n";
  tsv << "axis\tvalue\tmean\tstd\truns\n";
  tsv.precision(4);
  tsv << std::fixed;
  for (const SweepPoint& p : table.points)
    tsv << spec.axis << "\t" << p.value << "\t" << p.mean << "\t" << p.stddev << "\t" << p.scores.size()
        << "\n";
  return table;
}

}  // namespace lll::bench
