#include "lll/llltrain/stream.hpp"

#include <algorithm>
#include <stdexcept>

namespace lll::llltrain {

using numcore::Graph;
using numcore::Param;
using numcore::Real;
using nlohmann::json;

namespace {

// task_names is parallel to the order; this maps a task id back to its name.
std::string name_for_id(int task_id, const std::vector<int>& order,
                        const std::vector<std::string>& names) {
  for (std::size_t i = 0; i < order.size(); ++i)
    if (order[i] == task_id) return names[i];
  return "task" + std::to_string(task_id);
}

json replay_stats_json(const ReplayStats& r, const std::vector<int>& order,
                       const std::vector<std::string>& names) {
  json j{{"task", name_for_id(r.task_id, order, names)},
         {"task_id", r.task_id},
         {"requested", r.requested},
         {"kept", r.kept},
         {"rejected", r.rejected},
         {"attempts", r.attempts}};
  if (r.correspondence)
    j["correspondence"] = *r.correspondence;
  else
    j["correspondence"] = nullptr;
  return j;
}

ReplayStats replay_stats_from_json(const json& j) {
  ReplayStats r;
  r.task_id = j.at("task_id").get<int>();
  r.requested = j.at("requested").get<int>();
  r.kept = j.at("kept").get<int>();
  r.rejected = j.at("rejected").get<int>();
  r.attempts = j.at("attempts").get<int>();
  if (!j.at("correspondence").is_null()) r.correspondence = j.at("correspondence").get<double>();
  return r;
}

std::function<bool(const Param&)> phase_filter(Phase phase, bool has_adapter) {
  if (!has_adapter || phase == Phase::Joint) return {};
  if (phase == Phase::BackboneOnly) return [](const Param& p) { return !Model::is_adapter_param(p); };
  return [](const Param& p) { return Model::is_adapter_param(p); };
}

}  // namespace

json RunResult::to_json() const {
  json stages_j = json::array();
  for (const StageResult& s : stages) {
    json replay_j = json::array();
    for (const ReplayStats& r : s.replay) replay_j.push_back(replay_stats_json(r, order, task_names));
    json scores_j = json::object();
    for (std::size_t i = 0; i < s.scores.size(); ++i) scores_j[task_names[i]] = s.scores[i];
    stages_j.push_back(json{{"stage", s.stage},
                            {"task", task_names[s.stage - 1]},
                            {"task_id", s.task_id},
                            {"replay", replay_j},
                            {"scores", scores_j},
                            {"avg", s.avg_score}});
  }
  json curves_j = json::array();
  for (const EpochRecord& e : curves) {
    curves_j.push_back(json{{"stage", e.stage},
                            {"epoch", e.epoch},
                            {"phase", phase_name(e.phase)},
                            {"loss_total", e.loss.total},
                            {"loss_qa", e.loss.qa},
                            {"loss_lm", e.loss.lm},
                            {"loss_id", e.loss.id},
                            {"loss_kl", e.loss.kl},
                            {"loss_recon", e.loss.recon}});
  }
  json final_j = json::object();
  for (std::size_t i = 0; i < final_scores.size(); ++i) final_j[task_names[i]] = final_scores[i];
  return json{{"order", task_names},  {"order_ids", order},  {"gamma", gamma},
              {"seed", seed},         {"stages", stages_j},  {"curves", curves_j},
              {"final_scores", final_j}, {"final_avg", final_avg}};
}

RunResult RunResult::from_json(const json& j) {
  RunResult r;
  r.order = j.at("order_ids").get<std::vector<int>>();
  r.task_names = j.at("order").get<std::vector<std::string>>();
  r.gamma = j.at("gamma").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  for (const json& e : j.at("curves")) {
    EpochRecord rec;
    rec.stage = e.at("stage").get<int>();
    rec.epoch = e.at("epoch").get<int>();
    rec.phase = phase_from_string(e.at("phase").get<std::string>());
    rec.loss.total = e.at("loss_total").get<double>();
    rec.loss.qa = e.at("loss_qa").get<double>();
    rec.loss.lm = e.at("loss_lm").get<double>();
    rec.loss.id = e.at("loss_id").get<double>();
    rec.loss.kl = e.at("loss_kl").get<double>();
    rec.loss.recon = e.at("loss_recon").get<double>();
    r.curves.push_back(rec);
  }
  for (const json& s : j.at("stages")) {
    StageResult st;
    st.stage = s.at("stage").get<int>();
    st.task_id = s.at("task_id").get<int>();
    for (const json& rp : s.at("replay")) st.replay.push_back(replay_stats_from_json(rp));
    st.scores.resize(s.at("scores").size());
    for (std::size_t i = 0; i < st.scores.size(); ++i)
      st.scores[i] = s.at("scores").at(r.task_names[i]).get<double>();
    st.avg_score = s.at("avg").get<double>();
    r.stages.push_back(std::move(st));
  }
  if (!r.stages.empty()) {
    r.final_scores = r.stages.back().scores;
    r.final_avg = r.stages.back().avg_score;
  }
  return r;
}

double evaluate_task(const Model& model, const TaskData& task, const taskfmt::Vocab& vocab,
                     int eval_max_new) {
  if (task.test.empty()) throw std::invalid_argument("evaluate_task: empty test split");
  if (!task.scorer) throw std::invalid_argument("evaluate_task: task has no scorer");
  const tinylm::AdapterHook hook =
      model.hook(rvae::Mode::Eval, nullptr, model.condition_for(task.task_id));
  double total = 0;
  for (const taskfmt::Sample& s : task.test) {
    std::vector<int> prompt = s.context;
    prompt.insert(prompt.end(), s.question.begin(), s.question.end());
    prompt.push_back(vocab.ans());
    std::vector<int> out =
        tinylm::greedy_decode(model.lm, model.mcfg, prompt, vocab.eos(), eval_max_new, hook);
    std::vector<int> pred(out.begin() + static_cast<long>(prompt.size()), out.end());
    if (!pred.empty() && pred.back() == vocab.eos()) pred.pop_back();
    total += task.scorer(pred, s.answer);
  }
  return 100.0 * total / static_cast<double>(task.test.size());
}

RunResult train_stream(Model& model, numcore::AdamW& opt, RngSet& rngs,
                       const std::vector<TaskData>& tasks_in_order, const LllConfig& cfg,
                       const taskfmt::Vocab& vocab, const StreamHooks& hooks,
                       std::optional<ResumePoint> resume) {
  cfg.validate(model.has_adapter());
  if (tasks_in_order.empty()) throw std::invalid_argument("train_stream: no tasks");
  for (const TaskData& t : tasks_in_order)
    if (t.train.empty()) throw std::invalid_argument("train_stream: task " + t.name + " has no training data");

  RunResult result;
  if (resume) {
    result = std::move(resume->partial);
  } else {
    for (const TaskData& t : tasks_in_order) result.order.push_back(t.task_id);
    result.task_names.reserve(tasks_in_order.size());
    for (const TaskData& t : tasks_in_order) result.task_names.push_back(t.name);
    result.gamma = static_cast<double>(cfg.gamma);
    result.seed = cfg.seed;
  }

  const int n_stages = static_cast<int>(tasks_in_order.size());
  const int start_stage = resume ? resume->stage : 1;
  for (int stage = start_stage; stage <= n_stages; ++stage) {
    const TaskData& current = tasks_in_order[stage - 1];
    StageResult stage_result;
    stage_result.stage = stage;
    stage_result.task_id = current.task_id;

    // Mix replay into the new task's data (a mid-stage resume restores the
    // mix verbatim instead).
    std::vector<taskfmt::Sample> stage_data;
    int start_epoch = 0;
    bool have_data = false;
    if (resume && stage == resume->stage) {
      start_epoch = resume->next_epoch;
      if (resume->stage_data) {
        stage_data = std::move(*resume->stage_data);
        stage_result.replay = std::move(resume->stage_replay);
        have_data = true;
      }
      resume.reset();
    }
    if (!have_data) {
      stage_data = current.train;
      if (stage >= 2 && cfg.gamma > 0) {
        const int per_task = pseudo_count(cfg.gamma, stage, static_cast<int>(current.train.size()));
        std::vector<int> prev_ids, counts;
        for (int s = 0; s < stage - 1; ++s) {
          prev_ids.push_back(tasks_in_order[s].task_id);
          counts.push_back(per_task);
        }
        ReplayPlan plan =
            generate_replay(model, vocab, prev_ids, counts, rngs.gen, cfg.replay_sample_decode);
        for (const ReplayTaskPlan& tp : plan.tasks) {
          ReplayStats rs;
          rs.task_id = tp.task_id;
          rs.requested = tp.requested;
          rs.kept = static_cast<int>(tp.samples.size());
          rs.rejected = tp.rejected;
          rs.attempts = tp.attempts;
          rs.correspondence = tp.correspondence_rate();
          stage_result.replay.push_back(rs);
          stage_data.insert(stage_data.end(), tp.samples.begin(), tp.samples.end());
        }
        if (hooks.log) {
          json replay_j = json::array();
          for (const ReplayStats& r : stage_result.replay)
            replay_j.push_back(replay_stats_json(r, result.order, result.task_names));
          hooks.log(json{{"type", "replay"}, {"stage", stage}, {"tasks", replay_j}});
        }
      }
    }

    // Encode once per stage; the epoch loop shuffles indices only.
    std::vector<EncodedItem> encoded;
    encoded.reserve(stage_data.size());
    for (const taskfmt::Sample& s : stage_data)
      encoded.push_back(encode_item(s, vocab, model.mcfg.max_seq_len, cfg.use_id_task));

    std::vector<int> order_index(encoded.size());
    for (std::size_t i = 0; i < order_index.size(); ++i) order_index[i] = static_cast<int>(i);

    for (int epoch = start_epoch; epoch < cfg.epochs_per_task; ++epoch) {
      const Phase phase = phase_for_epoch(epoch, cfg);
      const auto active = phase_filter(phase, model.has_adapter());
      rngs.shuffle.shuffle(order_index);

      LossBreakdown epoch_mean;
      std::size_t seen = 0;
      for (std::size_t begin = 0; begin < order_index.size(); begin += cfg.batch_size) {
        const std::size_t end = std::min(order_index.size(), begin + cfg.batch_size);
        std::vector<EncodedItem> batch;
        batch.reserve(end - begin);
        for (std::size_t i = begin; i < end; ++i) batch.push_back(encoded[order_index[i]]);

        model.store.zero_grads();
        Graph g;
        LossBreakdown bd;
        numcore::ValueRef total = composite_loss(g, model, batch, cfg, phase, &rngs.noise, &bd);
        g.backward(total);
        if (cfg.lr_warmup_steps > 0 && opt.step_count() < cfg.lr_warmup_steps) {
          const Real base_lr = opt.config().lr;
          opt.config().lr = base_lr * static_cast<Real>(opt.step_count() + 1) /
                            static_cast<Real>(cfg.lr_warmup_steps);
          opt.step(model.store, active);
          opt.config().lr = base_lr;
        } else {
          opt.step(model.store, active);
        }

        const double w = static_cast<double>(batch.size());
        epoch_mean.total += bd.total * w;
        epoch_mean.qa += bd.qa * w;
        epoch_mean.lm += bd.lm * w;
        epoch_mean.id += bd.id * w;
        epoch_mean.kl += bd.kl * w;
        epoch_mean.recon += bd.recon * w;
        seen += batch.size();
      }
      for (double* v : {&epoch_mean.total, &epoch_mean.qa, &epoch_mean.lm, &epoch_mean.id,
                        &epoch_mean.kl, &epoch_mean.recon})
        *v /= static_cast<double>(seen);

      result.curves.push_back(EpochRecord{stage, epoch, phase, epoch_mean});
      if (hooks.log)
        hooks.log(json{{"type", "epoch"},
                       {"stage", stage},
                       {"epoch", epoch},
                       {"phase", phase_name(phase)},
                       {"loss_total", epoch_mean.total},
                       {"loss_qa", epoch_mean.qa},
                       {"loss_lm", epoch_mean.lm},
                       {"loss_id", epoch_mean.id},
                       {"loss_kl", epoch_mean.kl},
                       {"loss_recon", epoch_mean.recon}});
      if (hooks.on_epoch_end)
        hooks.on_epoch_end(StreamState{stage, epoch, &stage_data, &stage_result.replay, &result});
    }

    // Evaluate every task seen so far.
    for (int s = 1; s <= stage; ++s) {
      const TaskData& seen_task = tasks_in_order[s - 1];
      stage_result.scores.push_back(evaluate_task(model, seen_task, vocab, cfg.eval_max_new));
    }
    double sum = 0;
    for (double v : stage_result.scores) sum += v;
    stage_result.avg_score = sum / static_cast<double>(stage_result.scores.size());

    if (hooks.log) {
      json scores_j = json::object();
      for (std::size_t i = 0; i < stage_result.scores.size(); ++i)
        scores_j[result.task_names[i]] = stage_result.scores[i];
      hooks.log(json{
          {"type", "eval"}, {"stage", stage}, {"scores", scores_j}, {"avg", stage_result.avg_score}});
    }

    result.stages.push_back(std::move(stage_result));
    // final_* always mirror the last completed stage, so checkpoints taken at
    // any point serialize consistently.
    result.final_scores = result.stages.back().scores;
    result.final_avg = result.stages.back().avg_score;
    if (hooks.on_stage_end)
      hooks.on_stage_end(StreamState{stage, cfg.epochs_per_task - 1, &stage_data,
                                     &result.stages.back().replay, &result});
  }
  return result;
}

}  // namespace lll::llltrain
