#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lll/llltrain/stream.hpp"

using namespace lll;
using namespace lll::llltrain;
using numcore::AdamW;
using numcore::Graph;
using numcore::Real;
using numcore::Rng;
using taskfmt::Sample;
using taskfmt::Vocab;

namespace {

// Tiny two-task family of keyword-association tasks with disjoint answer
// spaces: "polar" maps sun/ice to hot/cold, "mood" maps leaf/wind to
// calm/wild. Disjoint answers make cross-task interference immediate.
Vocab mini_vocab() {
  return Vocab::build(
      {"polar", "mood"}, {{"is", "it", "hot", "or", "cold"}, {"is", "it", "calm", "or", "wild"}},
      {"which", "task", "is", "this"},
      {"is", "it", "hot", "or", "cold", "calm", "wild", "which", "task", "this",
       "sun", "ice", "river", "stone", "bird", "cloud", "leaf2", "sand", "wave", "wind2",
       "leaf", "wind"});
}

const std::vector<std::string> kFillers{"river", "stone", "bird", "cloud", "leaf2", "sand", "wave", "wind2"};

Sample gen_keyword(const Vocab& v, int task, std::uint64_t seed, int index) {
  Rng rng(seed * 1000003 + static_cast<std::uint64_t>(task) * 77 + index);
  Sample s;
  s.task_id = task;
  const bool first = index % 2 == 0;
  const char* keyword = task == 0 ? (first ? "sun" : "ice") : (first ? "leaf" : "wind");
  const char* answer = task == 0 ? (first ? "hot" : "cold") : (first ? "calm" : "wild");
  for (int i = 0; i < 3; ++i) s.context.push_back(v.id(kFillers[rng.below(kFillers.size())]));
  s.context.insert(s.context.begin() + rng.below(4), v.id(keyword));
  s.question = v.task_question(task);
  s.answer = {v.id(answer)};
  return s;
}

double em_scorer(const std::vector<int>& pred, const std::vector<int>& gold) {
  return pred == gold ? 1.0 : 0.0;
}

TaskData make_task(const Vocab& v, int id, std::uint64_t seed, int n_train, int n_test) {
  TaskData t;
  t.task_id = id;
  t.name = v.task_name(id);
  for (int i = 0; i < n_train; ++i) t.train.push_back(gen_keyword(v, id, seed, i));
  for (int i = 0; i < n_test; ++i) t.test.push_back(gen_keyword(v, id, seed, 1000000 + i));
  t.scorer = em_scorer;
  return t;
}

tinylm::ModelConfig mini_mcfg(const Vocab& v, bool with_adapter) {
  tinylm::ModelConfig m;
  m.vocab_size = v.size();
  m.d_model = 16;
  m.n_layers = 2;
  m.n_heads = 2;
  m.max_seq_len = 24;
  m.adapter_position = with_adapter ? 1 : -1;
  return m;
}

rvae::RvaeConfig mini_acfg(const Vocab& v, bool conditional = false) {
  rvae::RvaeConfig a;
  a.d_model = 16;
  a.latent_dim = 8;
  a.conditional = conditional;
  a.n_conditions = conditional ? v.n_tasks() : 0;
  a.cond_dim = 4;
  return a;
}

}  // namespace

TEST_CASE("pseudo_count") {
  CHECK(pseudo_count(0.2, 3, 1000) == 100);
  CHECK(pseudo_count(0.0, 5, 1000) == 0);
  CHECK(pseudo_count(0.01, 2, 500) == 5);
  CHECK(pseudo_count(0.3, 4, 10) == 1);  // floor(3/3) = 1
  CHECK_THROWS_AS(pseudo_count(0.2, 1, 100), std::invalid_argument);
}

TEST_CASE("phase_for_epoch") {
  LllConfig cfg;
  cfg.epochs_per_task = 24;

  SUBCASE("naive is joint everywhere") {
    cfg.mode = TrainMode::Naive;
    for (int e = 0; e < 24; ++e) CHECK(phase_for_epoch(e, cfg) == Phase::Joint);
  }
  SUBCASE("alt with M=3 over 24 epochs: 4+4 pattern three times") {
    cfg.mode = TrainMode::Alt;
    cfg.alt_turns = 3;
    for (int turn = 0; turn < 3; ++turn) {
      for (int i = 0; i < 4; ++i) CHECK(phase_for_epoch(turn * 8 + i, cfg) == Phase::BackboneOnly);
      for (int i = 4; i < 8; ++i) CHECK(phase_for_epoch(turn * 8 + i, cfg) == Phase::AdapterOnly);
    }
  }
  SUBCASE("alt with M=1 splits the 24 epochs in half") {
    cfg.mode = TrainMode::Alt;
    cfg.alt_turns = 1;
    for (int e = 0; e < 12; ++e) CHECK(phase_for_epoch(e, cfg) == Phase::BackboneOnly);
    for (int e = 12; e < 24; ++e) CHECK(phase_for_epoch(e, cfg) == Phase::AdapterOnly);
  }
  SUBCASE("single-turn variants") {
    cfg.mode = TrainMode::AltM1;
    CHECK(phase_for_epoch(0, cfg) == Phase::BackboneOnly);
    CHECK(phase_for_epoch(12, cfg) == Phase::Joint);
    cfg.mode = TrainMode::AltM1Rev;
    CHECK(phase_for_epoch(0, cfg) == Phase::Joint);
    CHECK(phase_for_epoch(12, cfg) == Phase::BackboneOnly);
    cfg.mode = TrainMode::AltM1Star;
    CHECK(phase_for_epoch(0, cfg) == Phase::BackboneOnly);
    CHECK(phase_for_epoch(12, cfg) == Phase::AdapterOnly);
  }
  SUBCASE("joint second half switch") {
    cfg.mode = TrainMode::Alt;
    cfg.alt_turns = 3;
    cfg.alt_joint_second_half = true;
    CHECK(phase_for_epoch(6, cfg) == Phase::Joint);
    CHECK(phase_for_epoch(1, cfg) == Phase::BackboneOnly);
  }
  SUBCASE("every alt mode spends exactly half its epochs backbone-only") {
    for (TrainMode m : {TrainMode::AltM1, TrainMode::AltM1Rev, TrainMode::AltM1Star, TrainMode::Alt}) {
      cfg.mode = m;
      cfg.alt_turns = 3;
      cfg.alt_joint_second_half = false;
      int backbone = 0;
      for (int e = 0; e < 24; ++e) backbone += phase_for_epoch(e, cfg) == Phase::BackboneOnly ? 1 : 0;
      CHECK(backbone == 12);
    }
  }
  SUBCASE("epoch out of range") {
    CHECK_THROWS_AS(phase_for_epoch(24, cfg), std::out_of_range);
    CHECK_THROWS_AS(phase_for_epoch(-1, cfg), std::out_of_range);
  }
  SUBCASE("validation") {
    cfg.mode = TrainMode::Alt;
    cfg.alt_turns = 5;  // 24 % 10 != 0
    CHECK_THROWS_AS(cfg.validate(true), std::invalid_argument);
    cfg.alt_turns = 3;
    CHECK_THROWS_AS(cfg.validate(false), std::invalid_argument);  // adapter required
    cfg.mode = TrainMode::Naive;
    CHECK_NOTHROW(cfg.validate(false));
    cfg.gamma = 1.5;
    CHECK_THROWS_AS(cfg.validate(false), std::invalid_argument);
  }
}

TEST_CASE("composite_loss") {
  Vocab v = mini_vocab();
  LllConfig cfg;
  cfg.use_id_task = true;

  std::vector<Sample> samples;
  for (int i = 0; i < 4; ++i) samples.push_back(gen_keyword(v, 0, 3, i));
  for (int i = 0; i < 4; ++i) samples.push_back(gen_keyword(v, 1, 3, i));

  SUBCASE("zero weights without adapter reduce to the QA nll") {
    Rng init(1);
    Model m = Model::create(mini_mcfg(v, false), std::nullopt, init);
    cfg.lambda_lm = 0;
    cfg.beta_id = 0;
    cfg.use_id_task = false;
    std::vector<EncodedItem> batch;
    for (const Sample& s : samples) batch.push_back(encode_item(s, v, m.mcfg.max_seq_len, false));
    Graph g;
    LossBreakdown bd;
    const Real total = g.scalar_value(composite_loss(g, m, batch, cfg, Phase::Joint, nullptr, &bd));

    Graph g2;
    std::vector<numcore::ValueRef> nlls;
    for (const EncodedItem& item : batch)
      nlls.push_back(tinylm::lm_nll(g2, tinylm::lm_forward(g2, m.lm, m.mcfg, item.qa.input_ids),
                                    item.qa.target_ids, item.qa.loss_mask));
    const Real qa_only = g2.scalar_value(g2.scale(g2.add_many(nlls), Real(1) / nlls.size()));
    CHECK(total == doctest::Approx(qa_only).epsilon(1e-12));
    CHECK(bd.kl == 0);
    CHECK(bd.recon == 0);
  }

  SUBCASE("alpha=1 passthrough with task-nll reconstruction adds only the KL hinge") {
    Rng init_a(2);
    Model plain = Model::create(mini_mcfg(v, false), std::nullopt, init_a);
    Rng init_b(2);  // same draws for the backbone, extra draws for the adapter
    rvae::RvaeConfig acfg = mini_acfg(v);
    acfg.alpha = 1.0;
    Model mixed = Model::create(mini_mcfg(v, true), acfg, init_b);

    cfg.recon_mode = rvae::ReconMode::TaskNll;
    std::vector<EncodedItem> batch;
    for (const Sample& s : samples) batch.push_back(encode_item(s, v, 24, true));

    Graph g1;
    LossBreakdown plain_bd;
    const Real plain_total =
        g1.scalar_value(composite_loss(g1, plain, batch, cfg, Phase::Joint, nullptr, &plain_bd));
    Graph g2;
    Rng noise(7);
    LossBreakdown mixed_bd;
    const Real mixed_total =
        g2.scalar_value(composite_loss(g2, mixed, batch, cfg, Phase::Joint, &noise, &mixed_bd));

    CHECK(mixed_bd.qa == doctest::Approx(plain_bd.qa).epsilon(1e-12));
    CHECK(mixed_bd.lm == doctest::Approx(plain_bd.lm).epsilon(1e-12));
    CHECK(mixed_bd.id == doctest::Approx(plain_bd.id).epsilon(1e-12));
    CHECK(mixed_bd.recon == 0);
    CHECK(mixed_total == doctest::Approx(plain_total + mixed_bd.kl).epsilon(1e-10));
  }

  SUBCASE("breakdown recombines to the total") {
    Rng init(3);
    Model m = Model::create(mini_mcfg(v, true), mini_acfg(v), init);
    std::vector<EncodedItem> batch;
    for (const Sample& s : samples) batch.push_back(encode_item(s, v, 24, true));
    Graph g;
    Rng noise(11);
    LossBreakdown bd;
    const Real total = g.scalar_value(composite_loss(g, m, batch, cfg, Phase::Joint, &noise, &bd));
    CHECK(std::abs(total - (bd.qa + cfg.lambda_lm * bd.lm + cfg.beta_id * bd.id + bd.kl + bd.recon)) <
          1e-12);
  }

  SUBCASE("loss is linear in lambda and beta") {
    Rng init(4);
    Model m = Model::create(mini_mcfg(v, false), std::nullopt, init);
    std::vector<EncodedItem> batch;
    for (const Sample& s : samples) batch.push_back(encode_item(s, v, 24, true));
    auto loss_at = [&](Real lambda, Real beta) {
      LllConfig c = cfg;
      c.lambda_lm = lambda;
      c.beta_id = beta;
      Graph g;
      return g.scalar_value(composite_loss(g, m, batch, c, Phase::Joint, nullptr));
    };
    const Real base = loss_at(0, 0);
    const Real dl = loss_at(1, 0) - base;
    const Real db = loss_at(0, 1) - base;
    CHECK(loss_at(2, 0) - base == doctest::Approx(2 * dl).epsilon(1e-10));
    CHECK(loss_at(0, 3) - base == doctest::Approx(3 * db).epsilon(1e-10));
    CHECK(loss_at(2, 3) - base == doctest::Approx(2 * dl + 3 * db).epsilon(1e-10));
  }

  SUBCASE("backbone-only phase drops the adapter loss terms") {
    Rng init(5);
    Model m = Model::create(mini_mcfg(v, true), mini_acfg(v), init);
    std::vector<EncodedItem> batch{encode_item(samples[0], v, 24, true)};
    Graph g;
    Rng noise(13);
    LossBreakdown bd;
    composite_loss(g, m, batch, cfg, Phase::BackboneOnly, &noise, &bd);
    CHECK(bd.kl == 0);
    CHECK(bd.recon == 0);
  }

  SUBCASE("empty batch rejected") {
    Rng init(6);
    Model m = Model::create(mini_mcfg(v, false), std::nullopt, init);
    Graph g;
    CHECK_THROWS_AS(composite_loss(g, m, {}, cfg, Phase::Joint, nullptr), std::invalid_argument);
  }
}

TEST_CASE("generate_replay on an untrained model records rejections without failing") {
  Vocab v = mini_vocab();
  Rng init(8);
  Model m = Model::create(mini_mcfg(v, false), std::nullopt, init);
  Rng gen(21);
  ReplayPlan plan = generate_replay(m, v, {0, 1}, {3, 3}, gen, true);
  REQUIRE(plan.tasks.size() == 2);
  for (const auto& tp : plan.tasks) {
    CHECK(tp.requested == 3);
    CHECK(tp.attempts <= 9);
    CHECK(static_cast<int>(tp.samples.size()) + tp.rejected == tp.attempts);
    CHECK(static_cast<int>(tp.samples.size()) <= tp.requested);
    if (tp.samples.empty()) CHECK_FALSE(tp.correspondence_rate().has_value());
  }

  SUBCASE("zero counts give an empty plan") {
    Rng gen2(22);
    ReplayPlan empty = generate_replay(m, v, {0}, {0}, gen2, true);
    CHECK(empty.total_samples() == 0);
    CHECK(empty.tasks[0].attempts == 0);
  }
}

TEST_CASE("train_stream: single task behaves like plain supervised training") {
  Vocab v = mini_vocab();
  Rng init(31);
  Model m = Model::create(mini_mcfg(v, false), std::nullopt, init);
  AdamW opt({.lr = 5e-3});
  RngSet rngs = RngSet::from_seed(77);
  LllConfig cfg;
  cfg.epochs_per_task = 20;
  cfg.batch_size = 4;
  cfg.gamma = 0.5;  // irrelevant with one task
  cfg.seed = 77;

  std::vector<TaskData> tasks{make_task(v, 0, 5, 48, 16)};
  RunResult r = train_stream(m, opt, rngs, tasks, cfg, v);
  REQUIRE(r.stages.size() == 1);
  CHECK(r.stages[0].replay.empty());
  CHECK(r.curves.size() == 20);
  CHECK(r.curves.front().loss.total > r.curves.back().loss.total);
  CHECK(r.final_scores.size() == 1);
  CHECK(r.final_avg == r.final_scores[0]);
  CHECK(r.final_avg > 90.0);  // echo-the-first-word is learnable in a few epochs
}

TEST_CASE("train_stream: phase freezing is bitwise") {
  Vocab v = mini_vocab();
  Rng init(41);
  Model m = Model::create(mini_mcfg(v, true), mini_acfg(v), init);
  AdamW opt({.lr = 1e-3});
  RngSet rngs = RngSet::from_seed(13);
  LllConfig cfg;
  cfg.epochs_per_task = 2;
  cfg.batch_size = 8;
  cfg.mode = TrainMode::AltM1Star;  // epoch 0 backbone-only, epoch 1 adapter-only
  cfg.seed = 13;

  auto snapshot = [&](bool adapter_side) {
    std::vector<std::vector<Real>> snap;
    for (const auto& p : m.store.params())
      if (Model::is_adapter_param(p) == adapter_side) snap.push_back(p.tensor.data);
    return snap;
  };

  const auto adapter_initial = snapshot(true);
  std::vector<std::vector<Real>> backbone_after_0;
  StreamHooks hooks;
  hooks.on_epoch_end = [&](const StreamState& st) {
    if (st.epoch == 0) {
      CHECK(snapshot(true) == adapter_initial);  // untouched during backbone-only
      backbone_after_0 = snapshot(false);
    }
    if (st.epoch == 1) {
      CHECK(snapshot(false) == backbone_after_0);  // untouched during adapter-only
      CHECK(snapshot(true) != adapter_initial);
    }
  };

  std::vector<TaskData> tasks{make_task(v, 0, 5, 24, 8)};
  train_stream(m, opt, rngs, tasks, cfg, v, hooks);
}

TEST_CASE("train_stream: replay mixing preserves counts") {
  Vocab v = mini_vocab();
  Rng init(51);
  Model m = Model::create(mini_mcfg(v, false), std::nullopt, init);
  AdamW opt({.lr = 3e-3});
  RngSet rngs = RngSet::from_seed(5);
  LllConfig cfg;
  cfg.epochs_per_task = 4;
  cfg.batch_size = 8;
  cfg.gamma = 0.5;
  cfg.seed = 5;

  std::vector<TaskData> tasks{make_task(v, 0, 5, 24, 8), make_task(v, 1, 6, 24, 8)};
  std::size_t stage2_size = 0;
  StreamHooks hooks;
  hooks.on_stage_end = [&](const StreamState& st) {
    if (st.stage == 2) stage2_size = st.stage_data->size();
  };
  RunResult r = train_stream(m, opt, rngs, tasks, cfg, v, hooks);
  REQUIRE(r.stages.size() == 2);
  REQUIRE(r.stages[1].replay.size() == 1);
  const ReplayStats& rs = r.stages[1].replay[0];
  CHECK(rs.requested == pseudo_count(0.5, 2, 24));
  CHECK(stage2_size == 24 + static_cast<std::size_t>(rs.kept));
}

TEST_CASE("train_stream: fixed seed reproduces the result byte for byte") {
  Vocab v = mini_vocab();
  auto run = [&]() {
    Rng init(61);
    Model m = Model::create(mini_mcfg(v, true), mini_acfg(v, true), init);
    AdamW opt({.lr = 2e-3});
    RngSet rngs = RngSet::from_seed(99);
    LllConfig cfg;
    cfg.epochs_per_task = 4;
    cfg.batch_size = 8;
    cfg.gamma = 0.25;
    cfg.mode = TrainMode::Alt;
    cfg.alt_turns = 1;
    cfg.seed = 99;
    std::vector<TaskData> tasks{make_task(v, 0, 5, 16, 8), make_task(v, 1, 6, 16, 8)};
    return train_stream(m, opt, rngs, tasks, cfg, v).to_json().dump();
  };
  const std::string a = run();
  CHECK(a == run());
  CHECK(a.find("\"final_avg\"") != std::string::npos);
}

TEST_CASE("train_stream: forgetting without replay, retention with it") {
  Vocab v = mini_vocab();
  double drop_no_replay = 0, retained_gap = 0;
  for (std::uint64_t seed : {101, 202}) {
    auto run_pair = [&](Real gamma) {
      Rng init(seed);
      Model m = Model::create(mini_mcfg(v, false), std::nullopt, init);
      AdamW opt({.lr = 5e-3});
      RngSet rngs = RngSet::from_seed(seed);
      LllConfig cfg;
      cfg.epochs_per_task = 10;
      cfg.batch_size = 4;
      cfg.gamma = gamma;
      cfg.seed = seed;
      std::vector<TaskData> tasks{make_task(v, 0, seed + 5, 48, 24), make_task(v, 1, seed + 6, 48, 24)};
      return train_stream(m, opt, rngs, tasks, cfg, v);
    };
    RunResult bare = run_pair(0);
    RunResult replayed = run_pair(0.5);
    // catastrophic forgetting: task-1 score after stage 2 drops vs after stage 1
    drop_no_replay += bare.stages[0].scores[0] - bare.stages[1].scores[0];
    // replay retains more of task 1 than the bare run
    retained_gap += replayed.stages[1].scores[0] - bare.stages[1].scores[0];
  }
  CHECK(drop_no_replay / 2 > 10.0);
  CHECK(retained_gap / 2 > 0.0);
}

TEST_CASE("train_stream: resume point continues cleanly") {
  Vocab v = mini_vocab();
  Rng init(71);
  Model m = Model::create(mini_mcfg(v, false), std::nullopt, init);
  AdamW opt({.lr = 3e-3});
  RngSet rngs = RngSet::from_seed(7);
  LllConfig cfg;
  cfg.epochs_per_task = 4;
  cfg.batch_size = 8;
  cfg.seed = 7;
  std::vector<TaskData> tasks{make_task(v, 0, 5, 16, 8)};

  ResumePoint rp;
  rp.stage = 1;
  rp.next_epoch = 2;
  rp.stage_data = tasks[0].train;
  rp.partial.order = {0};
  rp.partial.task_names = {v.task_name(0)};
  rp.partial.gamma = 0;
  rp.partial.seed = 7;
  RunResult r = train_stream(m, opt, rngs, tasks, cfg, v, {}, rp);
  CHECK(r.curves.size() == 2);  // epochs 2 and 3 only
  CHECK(r.curves.front().epoch == 2);
  CHECK(r.stages.size() == 1);
}
