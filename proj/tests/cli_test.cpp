// End-to-end checks of the command-line binary: exit codes, artifact
// layout, and byte-level reproducibility. Everything runs in a scratch
// directory under the system temp root; the slow fixtures (dataset,
// short trainings) are built once and shared across cases.

#include <doctest.h>
#include <json.hpp>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "occgen/schema.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = (env.empty() ? "" : env + " ") +
                          std::string(OCCGEN_CLI_PATH) + " " + args +
                          " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

long count_lines(const fs::path& p) {
  const std::string text = slurp(p);
  long n = 0;
  for (char ch : text) n += ch == '\n';
  return n;
}

// Dataset plus a stage-1 and a stage-2 checkpoint, built lazily on
// first use and torn down when the process exits.
struct CliWorld {
  fs::path root;
  fs::path cfg;
  fs::path data;
  fs::path ckpt1;
  fs::path ckpt2;

  CliWorld() {
    root = fs::temp_directory_path() /
           ("occgen_cli_" + std::to_string(::getpid()));
    fs::create_directories(root);
    cfg = root / "config.json";
    std::ofstream out(cfg);
    out << R"({
  "dataset": {"image_size": 8, "num_views": 8, "count_min": 1,
              "count_max": 2, "max_objects": 2, "seed": 11},
  "model": {"image_size": 8, "K": 2, "z_obj_dim": 8, "z_bck_dim": 4,
            "view_dim": 2, "lambda_dim": 3, "token_ch": 16,
            "attr_dim": 16, "view_feat_dim": 4, "slot_iters": 2,
            "param_seed": 7},
  "train_stage1": {"total_steps": 6, "batch": 2, "lr": 3e-4,
                   "checkpoint_every": 3, "seed": 5},
  "train_stage2": {"total_steps": 4, "batch": 2, "lr": 2e-4,
                   "s_size_start": 4, "checkpoint_every": 2, "seed": 9},
  "eval": {"observed": "4", "query": "2", "mode": 1, "seeds": 2,
           "seed": 1}
})";
    out.close();

    data = root / "ds";
    REQUIRE(run_cli("make-dataset --config " + cfg.string() + " --out " +
                    data.string() + " --num-scenes 3") == 0);
    REQUIRE(run_cli("train --stage 1 --config " + cfg.string() +
                    " --data " + data.string() + " --out " +
                    (root / "s1").string()) == 0);
    ckpt1 = root / "s1" / "ckpt_latest.bin";
    REQUIRE(run_cli("train --stage 2 --config " + cfg.string() +
                    " --data " + data.string() + " --out " +
                    (root / "s2").string() + " --init-ckpt " +
                    ckpt1.string()) == 0);
    ckpt2 = root / "s2" / "ckpt_latest.bin";
  }
  ~CliWorld() {
    std::error_code ec;
    fs::remove_all(root, ec);
  }

  static CliWorld& get() {
    static CliWorld w;
    return w;
  }
};

}  // namespace

TEST_CASE("dataset synthesis is reproducible and refuses to clobber") {
  CliWorld& w = CliWorld::get();
  CHECK(fs::exists(w.data / "manifest.json"));
  CHECK(fs::exists(w.data / "scene_00002.bin"));
  CHECK(fs::exists(w.data / "config.json"));

  const std::string before = slurp(w.data / "scene_00000.bin");
  CHECK(run_cli("make-dataset --config " + w.cfg.string() + " --out " +
                w.data.string() + " --num-scenes 3") == 3);
  CHECK(run_cli("make-dataset --config " + w.cfg.string() + " --out " +
                w.data.string() + " --num-scenes 3 --force") == 0);
  CHECK(slurp(w.data / "scene_00000.bin") == before);
}

TEST_CASE("malformed configuration exits with code two") {
  CliWorld& w = CliWorld::get();
  const fs::path bad = w.root / "bad.json";
  std::ofstream(bad) << R"({"bogus": 1})";
  CHECK(run_cli("make-dataset --config " + bad.string() + " --out " +
                (w.root / "unused").string()) == 2);
  CHECK(run_cli("make-dataset --config " + (w.root / "missing.json").string() +
                " --out " + (w.root / "unused").string()) == 2);
  CHECK(run_cli("make-dataset --config " + w.cfg.string() + " --out " +
                (w.root / "unused").string(),
                "OCCGEN_SEED=nope") == 2);
  CHECK(!fs::exists(w.root / "unused"));
}

TEST_CASE("training writes the loss log and periodic checkpoints") {
  CliWorld& w = CliWorld::get();
  CHECK(count_lines(w.root / "s1" / "loss.csv") == 7);
  CHECK(fs::exists(w.root / "s1" / "ckpt_000003.bin"));
  CHECK(fs::exists(w.root / "s1" / "ckpt_000006.bin"));
  CHECK(fs::exists(w.ckpt1));
  CHECK(count_lines(w.root / "s2" / "loss.csv") == 5);
  CHECK(fs::exists(w.ckpt2));
}

TEST_CASE("the second stage demands an initial checkpoint") {
  CliWorld& w = CliWorld::get();
  CHECK(run_cli("train --stage 2 --config " + w.cfg.string() + " --data " +
                w.data.string() + " --out " + (w.root / "s2b").string()) ==
        4);
}

TEST_CASE("an interrupted run resumes onto the same trajectory") {
  CliWorld& w = CliWorld::get();
  const fs::path r1 = w.root / "r1";
  fs::create_directories(r1);
  fs::copy_file(w.root / "s1" / "ckpt_000003.bin", r1 / "ckpt_latest.bin",
                fs::copy_options::overwrite_existing);
  {
    std::ifstream in(w.root / "s1" / "loss.csv");
    std::ofstream out(r1 / "loss.csv");
    std::string line;
    for (int i = 0; i < 4 && std::getline(in, line); ++i) out << line << "\n";
  }
  CHECK(run_cli("train --stage 1 --config " + w.cfg.string() + " --data " +
                w.data.string() + " --out " + r1.string() + " --resume") ==
        0);
  CHECK(slurp(r1 / "loss.csv") == slurp(w.root / "s1" / "loss.csv"));
  CHECK(slurp(r1 / "ckpt_latest.bin") == slurp(w.ckpt1));

  // Resuming a stage-1 run as stage 2 is a configuration mistake.
  CHECK(run_cli("train --stage 2 --config " + w.cfg.string() + " --data " +
                w.data.string() + " --out " + r1.string() + " --resume") ==
        2);
}

TEST_CASE("evaluation writes a schema conforming metrics report") {
  CliWorld& w = CliWorld::get();
  const fs::path ev = w.root / "ev";
  CHECK(run_cli("eval --config " + w.cfg.string() + " --ckpt " +
                w.ckpt2.string() + " --data " + w.data.string() + " --out " +
                ev.string()) == 0);

  const json doc = json::parse(slurp(ev / "metrics.json"));
  const json schema =
      json::parse(slurp(fs::path(OCCGEN_SHARE_DIR) / "metrics.schema.json"));
  CHECK(occgen::schema_violations(doc, schema).empty());
  CHECK(doc.at("scenes").size() == 6);  // 3 scenes x 2 seeds
  CHECK(doc.at("summary").contains("obs_mse"));
  CHECK(doc.at("summary").at("obs_mse").at("n") == 2);

  // Rerunning under --force reproduces the report byte for byte.
  const std::string before = slurp(ev / "metrics.json");
  CHECK(run_cli("eval --config " + w.cfg.string() + " --ckpt " +
                w.ckpt2.string() + " --data " + w.data.string() + " --out " +
                ev.string() + " --force") == 0);
  CHECK(slurp(ev / "metrics.json") == before);
}

TEST_CASE("impossible frame requests exit with code six") {
  CliWorld& w = CliWorld::get();
  CHECK(run_cli("eval --config " + w.cfg.string() + " --ckpt " +
                w.ckpt2.string() + " --data " + w.data.string() + " --out " +
                (w.root / "ev6").string() + " --query 9 --mode 2") == 6);
  CHECK(run_cli("eval --config " + w.cfg.string() + " --ckpt " +
                w.ckpt2.string() + " --data " + w.data.string() + " --out " +
                (w.root / "ev6").string() + " --force --observed 0,1 " +
                "--query 1,2") == 6);
}

TEST_CASE("prediction and rollout grids land on disk as binary ppm") {
  CliWorld& w = CliWorld::get();
  const fs::path pr = w.root / "pr";
  CHECK(run_cli("predict --config " + w.cfg.string() + " --ckpt " +
                w.ckpt2.string() + " --data " + w.data.string() + " --out " +
                pr.string() + " --num 2") == 0);
  CHECK(fs::exists(pr / "scene_000.ppm"));
  CHECK(fs::exists(pr / "scene_001.ppm"));
  CHECK(slurp(pr / "scene_000.ppm").substr(0, 2) == "P6");

  const fs::path gen = w.root / "gen";
  CHECK(run_cli("generate --ckpt " + w.ckpt2.string() + " --out " +
                gen.string() + " --num 1 --seed 3") == 0);
  CHECK(slurp(gen / "rollout_00.ppm").substr(0, 2) == "P6");
}

TEST_CASE("the seed environment variable beats the seed flag") {
  CliWorld& w = CliWorld::get();
  const fs::path a = w.root / "ga", b = w.root / "gb", c = w.root / "gc";
  CHECK(run_cli("generate --ckpt " + w.ckpt2.string() + " --out " +
                a.string() + " --num 1 --seed 3") == 0);
  CHECK(run_cli("generate --ckpt " + w.ckpt2.string() + " --out " +
                b.string() + " --num 1 --seed 999",
                "OCCGEN_SEED=3") == 0);
  CHECK(run_cli("generate --ckpt " + w.ckpt2.string() + " --out " +
                c.string() + " --num 1 --seed 3",
                "OCCGEN_SEED=7") == 0);
  CHECK(slurp(a / "rollout_00.ppm") == slurp(b / "rollout_00.ppm"));
  CHECK(slurp(a / "rollout_00.ppm") != slurp(c / "rollout_00.ppm"));
}

TEST_CASE("the observed views sweep emits one csv row per set size") {
  CliWorld& w = CliWorld::get();
  const fs::path uc = w.root / "uc";
  CHECK(run_cli("uncertainty-curve --config " + w.cfg.string() + " --ckpt " +
                w.ckpt2.string() + " --data " + w.data.string() + " --out " +
                uc.string() + " --max-observed 5") == 0);
  CHECK(count_lines(uc / "curve.csv") == 5);  // header plus sizes 2..5
  CHECK(slurp(uc / "curve.csv").substr(0, 22) == "observed,mean_var,mse\n");
  CHECK(fs::exists(uc / "curve.svg"));

  std::istringstream csv(slurp(uc / "curve.csv"));
  std::string line;
  std::getline(csv, line);
  double prev_var = 1e300;
  while (std::getline(csv, line)) {
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    const double var = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
    CHECK(var <= prev_var + 1e-9);
    prev_var = var;
  }
}
