#include "lll/cli/runner.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

namespace lll::cli {

namespace fs = std::filesystem;
using nlohmann::json;

RunSetup build_setup(const RunConfig& cfg) {
  RunSetup s;
  s.vocab = bench::toy_vocab();
  s.suite = bench::toy_suite(cfg.cls_seed, cfg.span_seed, cfg.slot_seed);
  s.order = bench::parse_order(cfg.order, s.suite);
  for (int id : s.order) {
    if (!cfg.data_dir.empty()) {
      const bench::ToyTask& task = s.suite[id];
      llltrain::TaskData t;
      t.task_id = id;
      t.name = task.name;
      t.train = taskfmt::read_samples_jsonl(cfg.data_dir + "/" + task.name + ".train.jsonl", s.vocab);
      t.test = taskfmt::read_samples_jsonl(cfg.data_dir + "/" + task.name + ".test.jsonl", s.vocab);
      t.scorer = bench::scorer_for(task, s.vocab);
      s.tasks.push_back(std::move(t));
    } else {
      s.tasks.push_back(bench::make_task_data(s.vocab, s.suite[id], cfg.train_size, cfg.test_size));
    }
  }
  return s;
}

json generation_diagnostic(const llltrain::Model& model, const taskfmt::Vocab& vocab,
                           const RunSetup& setup, int count, std::uint64_t seed, bool sample_decode) {
  json out = json::array();
  if (count <= 0) return out;
  numcore::Rng gen = numcore::Rng::stream(seed, "diag-gen");
  std::vector<int> ids, counts;
  for (int id : setup.order) {
    ids.push_back(id);
    counts.push_back(count);
  }
  llltrain::ReplayPlan plan = llltrain::generate_replay(model, vocab, ids, counts, gen, sample_decode);
  for (const llltrain::ReplayTaskPlan& tp : plan.tasks) {
    json j{{"task", setup.suite[tp.task_id].name}, {"task_id", tp.task_id},
           {"requested", tp.requested},           {"kept", static_cast<int>(tp.samples.size())},
           {"rejected", tp.rejected},             {"attempts", tp.attempts}};
    const auto rate = tp.correspondence_rate();
    j["correspondence"] = rate ? json(*rate) : json(nullptr);
    const double parse_rate =
        tp.attempts == 0 ? 0.0 : static_cast<double>(tp.samples.size()) / tp.attempts;
    j["parse_rate"] = parse_rate;
    out.push_back(std::move(j));
  }
  return out;
}

llltrain::Model model_from_checkpoint(Checkpoint& ck, const RunConfig& cfg, int vocab_size,
                                      int n_tasks) {
  return llltrain::Model::bind(cfg.model_config(vocab_size), cfg.adapter_config(n_tasks),
                               std::move(ck.store));
}

namespace {

void export_datasets(const RunConfig& cfg, const RunSetup& setup, const std::string& out_dir) {
  setup.vocab.save(out_dir + "/vocab.txt");
  for (std::size_t i = 0; i < setup.tasks.size(); ++i) {
    const llltrain::TaskData& t = setup.tasks[i];
    taskfmt::write_samples_jsonl(out_dir + "/" + t.name + ".train.jsonl", t.train, setup.vocab);
    taskfmt::write_samples_jsonl(out_dir + "/" + t.name + ".test.jsonl", t.test, setup.vocab);
  }
  (void)cfg;
}

Checkpoint snapshot(const RunConfig& cfg, const llltrain::Model& model, const numcore::AdamW& opt,
                    const llltrain::RngSet& rngs, const llltrain::StreamState& st,
                    const std::string& label, bool finished) {
  Checkpoint ck;
  ck.config_text = cfg.canonical();
  ck.digest = cfg.digest();
  ck.stage_label = label;
  ck.stage = st.stage;
  ck.next_epoch = st.epoch + 1;
  ck.finished = finished;
  for (const numcore::Param& p : model.store.params()) {
    numcore::Param& q = ck.store.add(p.name, numcore::Tensor(p.tensor.shape, p.tensor.data));
    q.m = p.m;
    q.v = p.v;
  }
  ck.opt_step = opt.step_count();
  ck.rng_init = rngs.init.state();
  ck.rng_shuffle = rngs.shuffle.state();
  ck.rng_noise = rngs.noise.state();
  ck.rng_gen = rngs.gen.state();
  if (st.stage_data) ck.stage_data = *st.stage_data;
  if (st.stage_replay) ck.stage_replay = *st.stage_replay;
  if (st.partial) ck.partial_result = st.partial->to_json();
  return ck;
}

}  // namespace

RunArtifacts run_one(const RunConfig& cfg, const std::string& out_dir, const std::string& resume_from,
                     bool verbose) {
  cfg.validate();
  fs::create_directories(out_dir);

  RunSetup setup = build_setup(cfg);
  const int vocab_size = setup.vocab.size();
  const int n_tasks = setup.vocab.n_tasks();

  // The effective config lands in the run directory before training starts.
  {
    std::ofstream f(out_dir + "/config.txt");
    f << cfg.canonical();
  }
  if (cfg.export_data) export_datasets(cfg, setup, out_dir);

  std::optional<Checkpoint> loaded;
  if (!resume_from.empty()) {
    loaded = load_checkpoint(resume_from);
    if (loaded->digest != cfg.digest())
      throw ConfigError("resume: checkpoint digest " + loaded->digest +
                        " does not match config digest " + cfg.digest());
    if (loaded->finished) throw ConfigError("resume: checkpoint " + resume_from + " is already finished");
  }

  llltrain::Model model = [&] {
    if (!loaded) {
      numcore::Rng init = numcore::Rng::stream(cfg.seed, "init");
      return llltrain::Model::create(cfg.model_config(vocab_size), cfg.adapter_config(n_tasks), init);
    }
    return model_from_checkpoint(*loaded, cfg, vocab_size, n_tasks);
  }();

  numcore::AdamW opt(cfg.optim_config());
  llltrain::RngSet rngs = llltrain::RngSet::from_seed(cfg.seed);
  std::optional<llltrain::ResumePoint> resume;
  if (loaded) {
    opt.set_step_count(loaded->opt_step);
    rngs.init.set_state(loaded->rng_init);
    rngs.shuffle.set_state(loaded->rng_shuffle);
    rngs.noise.set_state(loaded->rng_noise);
    rngs.gen.set_state(loaded->rng_gen);
    llltrain::ResumePoint rp;
    rp.stage = loaded->stage;
    rp.next_epoch = loaded->next_epoch;
    if (!loaded->stage_data.empty()) rp.stage_data = std::move(loaded->stage_data);
    rp.stage_replay = std::move(loaded->stage_replay);
    rp.partial = llltrain::RunResult::from_json(loaded->partial_result);
    resume = std::move(rp);
  }

  std::ofstream log_file(out_dir + "/runlog.jsonl",
                         resume_from.empty() ? std::ios::trunc : std::ios::app);
  const llltrain::LllConfig lll_cfg = cfg.lll_config();

  llltrain::StreamHooks hooks;
  hooks.log = [&](const json& j) {
    log_file << j.dump() << '\n';
    if (verbose && j.at("type") == "eval") std::cout << j.dump() << std::endl;
  };
  hooks.on_epoch_end = [&](const llltrain::StreamState& st) {
    save_checkpoint(snapshot(cfg, model, opt, rngs, st,
                             "stage" + std::to_string(st.stage) + "-epoch" + std::to_string(st.epoch),
                             false),
                    out_dir + "/last.ckpt");
  };
  hooks.on_stage_end = [&](const llltrain::StreamState& st) {
    llltrain::StreamState next = st;
    next.stage = st.stage + 1;
    next.epoch = -1;
    const bool last = st.stage == static_cast<int>(setup.tasks.size());
    if (last) next.stage = st.stage;
    Checkpoint ck = snapshot(cfg, model, opt, rngs, next,
                             "stage" + std::to_string(st.stage) + "-end", last);
    ck.stage_data.clear();  // the next stage mixes its own data
    ck.stage_replay.clear();
    save_checkpoint(ck, out_dir + "/stage" + std::to_string(st.stage) + ".ckpt");
    if (last) save_checkpoint(ck, out_dir + "/final.ckpt");
  };

  RunArtifacts art;
  art.out_dir = out_dir;
  art.result = llltrain::train_stream(model, opt, rngs, setup.tasks, lll_cfg, setup.vocab, hooks,
                                      std::move(resume));

  art.result_json = art.result.to_json();
  art.result_json["config_digest"] = cfg.digest();
  art.result_json["final_diag"] = generation_diagnostic(model, setup.vocab, setup, cfg.diag_pseudo_count,
                                                        cfg.seed, cfg.replay_decode == "sample");
  if (hooks.log) hooks.log(json{{"type", "final_diag"}, {"tasks", art.result_json["final_diag"]}});
  {
    std::ofstream f(out_dir + "/runresult.json");
    f << art.result_json.dump(2) << '\n';
  }
  if (verbose)
    std::cout << "final average " << art.result.final_avg << " over " << setup.tasks.size()
              << " tasks; outputs in " << out_dir << std::endl;
  return art;
}

}  // namespace lll::cli
