#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "lll/cli/commands.hpp"
#include "lll/cli/runner.hpp"

using namespace lll;
using namespace lll::cli;

namespace {

namespace fs = std::filesystem;

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

RunConfig tiny_config() {
  RunConfig cfg;
  cfg.d_model = 16;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.max_seq_len = 32;
  cfg.adapter = "rvae";
  cfg.adapter_position = 1;
  cfg.latent_dim = 8;
  cfg.mode = "alt";
  cfg.alt_turns = 1;
  cfg.epochs_per_task = 4;
  cfg.batch_size = 8;
  cfg.train_size = 10;
  cfg.test_size = 5;
  cfg.gamma = 0.3;
  cfg.diag_pseudo_count = 3;
  cfg.lr = 3e-3;
  cfg.order = "cls,span";  // two stages keep the smoke runs quick
  return cfg;
}

std::string temp_dir(const std::string& name) {
  const std::string d = (fs::temp_directory_path() / name).string();
  fs::remove_all(d);
  return d;
}

int run_args(std::vector<std::string> args) {
  std::vector<char*> argv;
  args.insert(args.begin(), "lll");
  for (auto& a : args) argv.push_back(a.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST_CASE("runconfig get/set round trip and digest") {
  RunConfig cfg;
  CHECK_NOTHROW(cfg.validate());  // fully defaulted config is runnable
  const std::string d0 = cfg.digest();
  cfg.set("gamma", "0.05");
  CHECK(cfg.gamma == 0.05);
  CHECK(cfg.digest() != d0);
  CHECK(cfg.get("gamma") == RunConfig{[] { RunConfig c; c.gamma = 0.05; return c; }()}.get("gamma"));

  for (const std::string& key : RunConfig::keys()) {
    RunConfig probe;
    CHECK_NOTHROW(probe.set(key, probe.get(key)));  // every field round-trips
  }

  CHECK_THROWS_WITH_AS(cfg.set("granma", "1"), "config: unknown field 'granma'", ConfigError);
  CHECK_THROWS_WITH_AS(cfg.set("gamma", "abc"),
                       "config: field 'gamma' expects a number, got 'abc'", ConfigError);
  cfg.set("adapter", "magic");
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("runconfig file parsing and overrides") {
  const std::string path = (fs::temp_directory_path() / "lll_cfg_test.txt").string();
  {
    std::ofstream f(path);
    f << "# comment line\n\ngamma = 0.03\nmode = alt\nalt_turns = 2\nepochs_per_task = 8\n"
      << "adapter = rvae\n";
  }
  RunConfig cfg = RunConfig::from_file(path);
  CHECK(cfg.gamma == 0.03);
  CHECK(cfg.mode == "alt");
  cfg.apply_override("gamma=0.2");
  CHECK(cfg.gamma == 0.2);
  CHECK_THROWS_AS(cfg.apply_override("no_equals_sign"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_file("/definitely/not/there.cfg"), ConfigError);
  fs::remove(path);

  // canonical text parses back to an identical config
  RunConfig back;
  std::istringstream is(cfg.canonical());
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find(" = ");
    REQUIRE(eq != std::string::npos);
    back.set(line.substr(0, eq), line.substr(eq + 3));
  }
  CHECK(back.canonical() == cfg.canonical());
  CHECK(back.digest() == cfg.digest());
}

TEST_CASE("checkpoint round trip is bitwise") {
  Checkpoint ck;
  RunConfig cfg = tiny_config();
  ck.config_text = cfg.canonical();
  ck.digest = cfg.digest();
  ck.stage_label = "stage1-epoch2";
  ck.stage = 1;
  ck.next_epoch = 3;
  numcore::Rng rng(3);
  numcore::Param& a = ck.store.add("lm.w", numcore::Tensor::randn({4, 3}, rng, 1.0));
  a.m = numcore::Tensor::randn({4, 3}, rng, 0.1).data;
  a.v = numcore::Tensor::randn({4, 3}, rng, 0.1).data;
  ck.store.add("rvae.b", numcore::Tensor::randn({7}, rng, 1.0));
  ck.opt_step = 42;
  ck.rng_gen = {1, 2, 3, 4};
  taskfmt::Sample s;
  s.task_id = 1;
  s.context = {9, 8};
  s.question = {7};
  s.answer = {6};
  ck.stage_data.push_back(s);
  llltrain::ReplayStats rs;
  rs.task_id = 0;
  rs.requested = 5;
  rs.kept = 4;
  rs.correspondence = 0.75;
  ck.stage_replay.push_back(rs);
  ck.partial_result = nlohmann::json{{"hello", 1}};

  const std::string path = (fs::temp_directory_path() / "lll_ckpt_test.bin").string();
  save_checkpoint(ck, path);
  Checkpoint back = load_checkpoint(path);
  CHECK(back.digest == ck.digest);
  CHECK(back.stage_label == ck.stage_label);
  CHECK(back.next_epoch == 3);
  REQUIRE(back.store.size() == 2);
  CHECK(back.store.at("lm.w").tensor.data == a.tensor.data);
  CHECK(back.store.at("lm.w").m == a.m);
  CHECK(back.store.at("lm.w").v == a.v);
  CHECK(back.opt_step == 42);
  CHECK(back.rng_gen == std::array<std::uint64_t, 4>{1, 2, 3, 4});
  REQUIRE(back.stage_data.size() == 1);
  CHECK(back.stage_data[0] == s);
  REQUIRE(back.stage_replay.size() == 1);
  CHECK(back.stage_replay[0].correspondence == 0.75);
  CHECK(back.config().digest() == cfg.digest());
  fs::remove(path);

  CHECK_THROWS_AS(load_checkpoint("/not/a/real.ckpt"), std::runtime_error);
}

TEST_CASE("run_one: fixed seed gives byte-identical outputs") {
  RunConfig cfg = tiny_config();
  const std::string a = temp_dir("lll_run_a");
  const std::string b = temp_dir("lll_run_b");
  run_one(cfg, a);
  run_one(cfg, b);
  CHECK(slurp(a + "/runresult.json") == slurp(b + "/runresult.json"));
  CHECK(slurp(a + "/runlog.jsonl") == slurp(b + "/runlog.jsonl"));
  CHECK(slurp(a + "/config.txt") == cfg.canonical());
  CHECK(fs::exists(a + "/final.ckpt"));
  CHECK(fs::exists(a + "/stage1.ckpt"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("run_one: resume from the last epoch checkpoint reproduces the run") {
  RunConfig cfg = tiny_config();
  const std::string full = temp_dir("lll_resume_full");
  RunArtifacts art = run_one(cfg, full);

  // last.ckpt captures the state after the final epoch, before the final
  // stage bookkeeping; resuming from it must land on the identical result.
  const std::string resumed = temp_dir("lll_resume_again");
  fs::create_directories(resumed);
  RunArtifacts art2 = run_one(cfg, resumed, full + "/last.ckpt");
  CHECK(art2.result_json.dump() == art.result_json.dump());

  SUBCASE("digest mismatch refuses to resume") {
    RunConfig other = cfg;
    other.gamma = 0.05;
    CHECK_THROWS_AS(run_one(other, temp_dir("lll_resume_bad"), full + "/last.ckpt"), ConfigError);
  }
  SUBCASE("finished checkpoints refuse to resume") {
    CHECK_THROWS_AS(run_one(cfg, temp_dir("lll_resume_fin"), full + "/final.ckpt"), ConfigError);
  }
  fs::remove_all(full);
  fs::remove_all(resumed);
}

TEST_CASE("run_one: mid-run checkpoint continues bit for bit") {
  RunConfig cfg = tiny_config();
  cfg.epochs_per_task = 2;  // stage boundary checkpoints make handy cut points
  const std::string full = temp_dir("lll_cut_full");
  RunArtifacts art = run_one(cfg, full);

  // stage1.ckpt is exactly the state entering stage 2
  const std::string cont = temp_dir("lll_cut_cont");
  RunArtifacts art2 = run_one(cfg, cont, full + "/stage1.ckpt");
  CHECK(art2.result.final_avg == art.result.final_avg);
  CHECK(art2.result_json.dump() == art.result_json.dump());
  const std::string f1 = slurp(full + "/final.ckpt");
  const std::string f2 = slurp(cont + "/final.ckpt");
  CHECK(f1 == f2);  // parameters, moments, and rng states all agree
  fs::remove_all(full);
  fs::remove_all(cont);
}

TEST_CASE("run_one: dataset export and reload") {
  RunConfig cfg = tiny_config();
  cfg.export_data = true;
  const std::string dir = temp_dir("lll_export");
  run_one(cfg, dir);
  CHECK(fs::exists(dir + "/vocab.txt"));
  CHECK(fs::exists(dir + "/cls.train.jsonl"));
  CHECK(fs::exists(dir + "/span.test.jsonl"));

  RunConfig loaded_cfg = cfg;
  loaded_cfg.export_data = false;
  loaded_cfg.data_dir = dir;
  RunSetup from_files = build_setup(loaded_cfg);
  RunSetup generated = build_setup(cfg);
  REQUIRE(from_files.tasks.size() == generated.tasks.size());
  for (std::size_t i = 0; i < from_files.tasks.size(); ++i) {
    CHECK(from_files.tasks[i].train == generated.tasks[i].train);
    CHECK(from_files.tasks[i].test == generated.tasks[i].test);
  }
  fs::remove_all(dir);
}

TEST_CASE("command line surface") {
  const std::string dir = temp_dir("lll_cli_train");

  SUBCASE("train with overrides, then eval and generate from the checkpoint") {
    CHECK(run_args({"train", "--quiet", "-o", dir, "--set", "d_model=16", "--set", "n_layers=2",
               "--set", "n_heads=2", "--set", "max_seq_len=32", "--set", "epochs_per_task=2",
               "--set", "train_size=8", "--set", "test_size=4", "--set", "batch_size=8", "--set",
               "order=cls,span", "--set", "adapter=none", "--set", "mode=naive", "--set",
               "diag_pseudo_count=2", "--set", "gamma=0.25"}) == 0);
    CHECK(fs::exists(dir + "/runresult.json"));
    CHECK(fs::exists(dir + "/final.ckpt"));
    CHECK(run_args({"eval", "--checkpoint", dir + "/final.ckpt"}) == 0);
    CHECK(run_args({"eval", "--checkpoint", dir + "/final.ckpt", "--tasks", "cls"}) == 0);
    CHECK(run_args({"generate", "--checkpoint", dir + "/final.ckpt", "--task", "cls", "--count", "3"}) == 0);
    CHECK(run_args({"generate", "--checkpoint", dir + "/final.ckpt", "--task", "cls", "--count", "0"}) == 0);
    CHECK(fs::exists(dir + "/pseudo-cls.jsonl"));
    CHECK(run_args({"generate", "--checkpoint", dir + "/final.ckpt", "--task", "nosuch", "--count", "1"}) == 2);
  }
  SUBCASE("config errors exit with status 1") {
    CHECK(run_args({"train", "--set", "granma=1"}) == 1);
    CHECK(run_args({"train", "--set", "adapter=magic"}) == 1);
    CHECK(run_args({"train", "--set", "gamma=oops"}) == 1);
    CHECK(run_args({"nonsense"}) == 1);
  }
  SUBCASE("runtime failures exit with status 2") {
    CHECK(run_args({"eval", "--checkpoint", "/missing.ckpt"}) == 2);
  }
  fs::remove_all(dir);
}
