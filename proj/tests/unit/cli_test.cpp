#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mmtod/cli.hpp"

using namespace mmtod;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mmtod");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const std::filesystem::path kDir = std::filesystem::temp_directory_path() / "mmtod_cli_test";

std::string path(const std::string& name) { return (kDir / name).string(); }

}  // namespace

TEST_CASE("usage errors and help") {
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"--help"}).code == kExitOk);
  CHECK(cli({"dance"}).code == kExitUsage);
  CHECK(cli({"synth", "--n", "0", "--domain", "fashion", "--out", "/tmp/x.jsonl"}).code == kExitUsage);
  CHECK(cli({"synth", "--n", "2", "--domain", "shoes", "--out", "/tmp/x.jsonl"}).code == kExitUsage);
}

TEST_CASE("synth, train, eval and generate") {
  std::filesystem::remove_all(kDir);
  std::filesystem::create_directories(kDir);
  auto s = cli({"synth", "--seed", "7", "--n", "3", "--domain", "furniture", "--out", path("f.jsonl")});
  REQUIRE(s.code == kExitOk);
  CHECK(s.out.find("mean turns") != std::string::npos);
  const std::string first = slurp(path("f.jsonl"));
  cli({"synth", "--seed", "7", "--n", "3", "--domain", "furniture", "--out", path("f.jsonl")});
  CHECK(slurp(path("f.jsonl")) == first);
  REQUIRE(cli({"synth", "--seed", "8", "--n", "3", "--domain", "fashion", "--out", path("s.jsonl")}).code == kExitOk);

  std::ofstream(path("config.json")) << R"({"model": {"model_dim": 16, "n_layers": 1},
    "train": {"lr": 0.001, "lm_epochs": 1, "mt_epochs": 1, "seed": 3}})";
  std::ofstream(path("bad.json")) << R"({"train": {"learning_rate": 1}})";

  auto bad = cli({"train", "--config", path("bad.json"), "--furniture", path("f.jsonl"), "--fashion",
                  path("s.jsonl"), "--out-dir", path("run")});
  CHECK(bad.code == kExitUsage);
  CHECK(bad.err.find("train.learning_rate") != std::string::npos);
  auto one = cli({"train", "--config", path("config.json"), "--furniture", path("f.jsonl"), "--out-dir", path("run")});
  CHECK(one.code == kExitUsage);
  CHECK(one.err.find("MD") != std::string::npos);
  CHECK(cli({"train", "--furniture", path("missing.jsonl"), "--fashion", path("s.jsonl"), "--out-dir",
             path("run")}).code == kExitData);

  auto t = cli({"train", "--config", path("config.json"), "--furniture", path("f.jsonl"), "--fashion",
                path("s.jsonl"), "--out-dir", path("run")});
  REQUIRE(t.code == kExitOk);
  CHECK(t.out.find("epoch 2 [multi_task]") != std::string::npos);
  const std::string ckpt = path("run/ckpt-2.bin");
  CHECK(std::filesystem::exists(ckpt));
  CHECK(std::filesystem::exists(path("run/config.json")));

  auto e1 = cli({"eval", "--ckpt", ckpt, "--corpus", path("s.jsonl"), "--candidates", path("pools.jsonl"),
                 "--report", path("r1.json"), "--predictions", path("p.jsonl")});
  REQUIRE(e1.code == kExitOk);
  CHECK(e1.out.find("Joint") != std::string::npos);
  CHECK(std::filesystem::exists(path("pools.jsonl")));
  cli({"eval", "--ckpt", ckpt, "--corpus", path("s.jsonl"), "--candidates", path("pools.jsonl"), "--report",
       path("r2.json")});
  CHECK(slurp(path("r1.json")) == slurp(path("r2.json")));
  CHECK(cli({"eval", "--ckpt", ckpt, "--corpus", path("s.jsonl"), "--gt-action", "maybe"}).code == kExitUsage);
  CHECK(cli({"eval", "--ckpt", path("nope.bin"), "--corpus", path("s.jsonl")}).code == kExitData);

  auto g = cli({"generate", "--ckpt", ckpt, "--corpus", path("f.jsonl"), "--turn", "1", "--gt-action", "off"});
  REQUIRE(g.code == kExitOk);
  CHECK(g.out.find("belief:") != std::string::npos);
  CHECK(g.out.find("api:") != std::string::npos);
  if (g.out.find("response action:") != std::string::npos) CHECK(g.out.find("(predicted)") != std::string::npos);
  CHECK(cli({"generate", "--ckpt", ckpt, "--corpus", path("f.jsonl"), "--turn", "99"}).code == kExitUsage);
  CHECK(cli({"generate", "--ckpt", ckpt, "--corpus", path("f.jsonl"), "--dialogue", "nobody", "--turn", "0"})
            .code == kExitUsage);
}

TEST_CASE("eval on a domain without heads") {
  std::filesystem::create_directories(kDir);
  REQUIRE(cli({"synth", "--seed", "1", "--n", "2", "--domain", "fashion", "--out", path("only.jsonl")}).code == 0);
  REQUIRE(cli({"synth", "--seed", "2", "--n", "2", "--domain", "furniture", "--out", path("other.jsonl")}).code == 0);
  std::ofstream(path("single.json")) << R"({"serializer": {"multi_domain": false},
    "model": {"model_dim": 16, "n_layers": 1}, "train": {"lm_epochs": 1, "mt_epochs": 0}})";
  REQUIRE(cli({"train", "--config", path("single.json"), "--fashion", path("only.jsonl"), "--out-dir",
               path("single")}).code == kExitOk);
  const auto e = cli({"eval", "--ckpt", path("single/ckpt-1.bin"), "--corpus", path("other.jsonl")});
  CHECK(e.code == kExitData);
  CHECK(e.err.find("furniture") != std::string::npos);
}
