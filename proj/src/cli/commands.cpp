#include "lll/cli/commands.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "lll/bench/grid.hpp"
#include "lll/cli/runner.hpp"

namespace lll::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& opts, const std::string& default_out) {
  cmd->add_option("-c,--config", opts.config_path, "config file (key = value lines)");
  cmd->add_option("-s,--set", opts.overrides, "override a config key, e.g. --set gamma=0.2")
      ->take_all();
  opts.out_dir = default_out;
  cmd->add_option("-o,--out", opts.out_dir, "output directory");
}

RunConfig build_config(const CommonOpts& opts) {
  RunConfig cfg = opts.config_path.empty() ? RunConfig{} : RunConfig::from_file(opts.config_path);
  for (const std::string& kv : opts.overrides) cfg.apply_override(kv);
  return cfg;
}

int cmd_train(const CommonOpts& opts, const std::string& resume, bool quiet) {
  RunConfig cfg = build_config(opts);
  cfg.validate();
  RunArtifacts art = run_one(cfg, opts.out_dir, resume, !quiet);
  if (quiet) std::cout << art.result.final_avg << std::endl;
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& tasks_csv) {
  Checkpoint ck = load_checkpoint(ckpt_path);
  RunConfig cfg = ck.config();
  RunSetup setup = build_setup(cfg);
  llltrain::Model model =
      model_from_checkpoint(ck, cfg, setup.vocab.size(), setup.vocab.n_tasks());

  std::vector<int> wanted;
  if (tasks_csv.empty()) {
    wanted = setup.order;
  } else {
    wanted = bench::parse_order(tasks_csv, setup.suite);
  }
  json scores = json::object();
  double sum = 0;
  for (int id : wanted) {
    const auto it = std::find(setup.order.begin(), setup.order.end(), id);
    if (it == setup.order.end()) throw ConfigError("eval: task not part of this run's order");
    const llltrain::TaskData& task = setup.tasks[it - setup.order.begin()];
    const double s = llltrain::evaluate_task(model, task, setup.vocab, cfg.eval_max_new);
    scores[task.name] = s;
    sum += s;
  }
  json out{{"checkpoint", ckpt_path},
           {"stage_label", ck.stage_label},
           {"scores", scores},
           {"avg", sum / static_cast<double>(wanted.size())}};
  std::cout << out.dump(2) << std::endl;
  return 0;
}

int cmd_generate(const std::string& ckpt_path, const std::string& task_name, int count,
                 std::string out_path) {
  Checkpoint ck = load_checkpoint(ckpt_path);
  RunConfig cfg = ck.config();
  RunSetup setup = build_setup(cfg);
  llltrain::Model model =
      model_from_checkpoint(ck, cfg, setup.vocab.size(), setup.vocab.n_tasks());
  const int task_id = setup.vocab.task_id_by_name(task_name);

  if (out_path.empty())
    out_path = (fs::path(ckpt_path).parent_path() / ("pseudo-" + task_name + ".jsonl")).string();

  numcore::Rng gen = numcore::Rng::stream(cfg.seed, "cmd-generate");
  const tinylm::AdapterHook hook =
      model.hook(rvae::Mode::Eval, nullptr, model.condition_for(task_id));
  const bool sample = cfg.replay_decode == "sample";

  std::ofstream out_file(out_path);
  int kept = 0, corresponding = 0;
  for (int i = 0; i < count; ++i) {
    std::vector<int> prompt{setup.vocab.task_token(task_id)};
    std::vector<int> tokens =
        sample ? tinylm::sample_decode(model.lm, model.mcfg, std::move(prompt), setup.vocab.eos(),
                                       model.mcfg.max_seq_len - 1, gen, hook)
               : tinylm::greedy_decode(model.lm, model.mcfg, std::move(prompt), setup.vocab.eos(),
                                       model.mcfg.max_seq_len - 1, hook);
    const auto parsed = taskfmt::parse_pseudo(tokens, setup.vocab);
    std::string status = "malformed";
    if (parsed) {
      ++kept;
      if (parsed->corresponding) {
        ++corresponding;
        status = "corresponding";
      } else {
        status = "not-corresponding";
      }
    }
    json rec{{"index", i}, {"status", status}, {"text", setup.vocab.decode_joined(tokens)}};
    std::cout << rec.dump() << std::endl;
    out_file << rec.dump() << '\n';
  }
  json tail{{"task", task_name},
            {"requested", count},
            {"parsed", kept},
            {"corresponding", corresponding}};
  if (count == 0 || kept == 0) {
    tail["correspondence_rate"] = nullptr;
    std::cout << "correspondence rate: n/a" << std::endl;
  } else {
    const double rate = static_cast<double>(corresponding) / kept;
    tail["correspondence_rate"] = rate;
    std::cout << "correspondence rate: " << corresponding << "/" << kept << " = " << rate * 100 << "%"
              << std::endl;
  }
  out_file << tail.dump() << '\n';
  return 0;
}

int cmd_grid(const CommonOpts& opts, int jobs_override) {
  RunConfig cfg = build_config(opts);
  if (jobs_override >= 0) cfg.jobs = jobs_override;
  cfg.validate();
  const auto suite = bench::toy_suite(cfg.cls_seed, cfg.span_seed, cfg.slot_seed);
  bench::GridSpec spec = bench::GridSpec::from_config(cfg, suite);
  bench::GridTable table = bench::run_grid(cfg, spec, opts.out_dir, cfg.jobs);
  std::cout << table.summary.dump(2) << std::endl;
  std::cout << "table: " << opts.out_dir << "/table.tsv (" << table.cells.size() << " cells)"
            << std::endl;
  return 0;
}

int cmd_sweep(const CommonOpts& opts, int jobs_override) {
  RunConfig cfg = build_config(opts);
  if (jobs_override >= 0) cfg.jobs = jobs_override;
  cfg.validate();
  bench::SweepSpec spec = bench::SweepSpec::from_config(cfg);
  bench::SweepTable table = bench::run_sweep(cfg, spec, opts.out_dir, cfg.jobs);
  for (const bench::SweepPoint& p : table.points)
    std::cout << spec.axis << "=" << p.value << "  " << p.mean << " +- " << p.stddev << std::endl;
  std::cout << "table: " << opts.out_dir << "/sweep.tsv" << std::endl;
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"lifelong language learning testbed: replay training with a residual VAE adapter"};
  app.require_subcommand(1);

  CommonOpts train_opts, grid_opts, sweep_opts;
  std::string resume, ckpt, tasks_csv, gen_task, gen_out;
  int gen_count = 0;
  int jobs_override = -1;
  bool quiet = false;

  CLI::App* train = app.add_subcommand("train", "train one run over the task stream");
  add_common(train, train_opts, "out/train");
  train->add_option("--resume", resume, "continue from a checkpoint file");
  train->add_flag("--quiet", quiet, "print only the final average");

  CLI::App* eval = app.add_subcommand("eval", "score a checkpoint on task test splits");
  eval->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  eval->add_option("--tasks", tasks_csv, "comma-separated task names (default: all)");

  CLI::App* gen = app.add_subcommand("generate", "decode pseudo samples from a checkpoint");
  gen->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  gen->add_option("--task", gen_task, "task name")->required();
  gen->add_option("--count", gen_count, "number of samples")->required();
  gen->add_option("-o,--out", gen_out, "output jsonl (default: next to the checkpoint)");

  CLI::App* grid = app.add_subcommand("grid", "run the order x gamma x seed x variant grid");
  add_common(grid, grid_opts, "out/grid");
  grid->add_option("-j,--jobs", jobs_override, "worker processes (0 = all cores)");

  CLI::App* sweep = app.add_subcommand("sweep", "sweep one axis with repeats");
  add_common(sweep, sweep_opts, "out/sweep");
  sweep->add_option("-j,--jobs", jobs_override, "worker processes (0 = all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (train->parsed()) return cmd_train(train_opts, resume, quiet);
    if (eval->parsed()) return cmd_eval(ckpt, tasks_csv);
    if (gen->parsed()) return cmd_generate(ckpt, gen_task, gen_count, gen_out);
    if (grid->parsed()) return cmd_grid(grid_opts, jobs_override);
    if (sweep->parsed()) return cmd_sweep(sweep_opts, jobs_override);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 1;
}

}  // namespace lll::cli
