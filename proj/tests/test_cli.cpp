// Copyright (c) 2026, The trisim Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <string>

#include <sys/wait.h>

#include <doctest.h>
#include <json.hpp>

#include "scratch.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string output;
};

// Runs the CLI inside dir with stdout and stderr merged.
Run trisim(const ScratchDir& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.path().string() + "' && '" TRISIM_CLI "' " + args + " 2>&1";
  Run r{-1, {}};
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  while (const std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) r.output.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

json report(const ScratchDir& dir, const std::string& name) { return json::parse(slurp(dir / name)); }

void train(const ScratchDir& dir, const std::string& out, const std::string& arch, int seed) {
  const Run r = trisim(dir, "toy-train --arch " + arch + " --seed " + std::to_string(seed) +
                                " --blobs 30,0.4 --epochs 10 --out " + out);
  REQUIRE_MESSAGE(r.code == 0, r.output);
}

}  // namespace

TEST_CASE("help and usage errors") {
  ScratchDir dir("cli");
  CHECK(trisim(dir, "--help").code == 0);
  CHECK(trisim(dir, "--version").output.find("0.1.0") != std::string::npos);
  CHECK(trisim(dir, "").code == 2);
  CHECK(trisim(dir, "frobnicate").code == 2);
  CHECK(trisim(dir, "toy-train --arch 2:3 --blobs 10,0.4 --out a --bogus").code == 2);

  const Run bad = trisim(dir, "toy-train --arch 2::3 --blobs 10,0.4 --out a");
  CHECK(bad.code == 2);
  CHECK(bad.output.find("--arch") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "a"));

  CHECK(trisim(dir, "toy-train --arch 2:3 --out a").code == 2);  // no dataset
  CHECK(trisim(dir, "toy-train --arch 2:3 --blobs 10 --out a").code == 2);
  CHECK(trisim(dir, "toy-train --arch 2:3 --blobs 10,0.4 --momentum 1 --out a").code == 2);
}

TEST_CASE("training is reproducible") {
  ScratchDir dir("cli");
  train(dir, "a", "2:16:3", 1);
  train(dir, "b", "2:16:3", 1);
  for (const char* f : {"manifest.json", "fc1.weight.npy", "fc1.bias.npy", "fc2.weight.npy", "fc2.bias.npy"}) {
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }
  const json log = report(dir, "a/training_log.json");
  CHECK(log["kind"] == "training_log");
  CHECK(log["report"]["epochs"].size() == 10);
  CHECK(log["config"]["arch"] == "2:16:3");
}

TEST_CASE("pair commands") {
  ScratchDir dir("cli");
  train(dir, "a", "3:8:3", 1);
  train(dir, "b", "3:8:3", 2);
  train(dir, "c", "3:5:4:3", 3);

  Run r = trisim(dir, "lmc --a a --b a --blobs 20,0.4 --out lmc.json --csv lmc.csv --svg lmc.svg");
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const json lmc = report(dir, "lmc.json");
  CHECK(lmc["report"]["barrier"] == 0.0);
  CHECK(lmc["format_version"] == 1);
  CHECK(lmc["tool"]["name"] == "trisim");
  CHECK(lmc["inputs"]["a"]["sha256"].get<std::string>().size() == 64);
  CHECK(lmc["config"]["alphas"] == 11);
  CHECK(slurp(dir / "lmc.svg").rfind("<svg", 0) == 0);
  CHECK(slurp(dir / "lmc.svg").find("generated") == std::string::npos);
  CHECK(trisim(dir, "lmc --a a --b c --blobs 20,0.4").code == 3);

  REQUIRE(trisim(dir, "extract-toy --checkpoint a --blobs 10,0.4 --activations xa --predictions pa").code == 0);
  REQUIRE(trisim(dir, "extract-toy --checkpoint c --blobs 10,0.4 --activations xc --predictions pc").code == 0);
  REQUIRE(trisim(dir, "extract-toy --checkpoint c --blobs 10,0.4 --data-seed 9 --activations xd").code == 0);

  r = trisim(dir, "static --a xa --b xa --out s.json --csv s.csv");
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const json s = report(dir, "s.json")["report"];
  const auto scores = s["cka"]["scores"].get<std::vector<double>>();
  CHECK(scores[0] == 1.0);
  CHECK(scores[3] == 1.0);
  CHECK(slurp(dir / "s.csv").rfind("metric,layer_a,layer_b,score\n", 0) == 0);

  r = trisim(dir, "static --a xa --b xd --out refused.json");
  CHECK(r.code == 3);
  CHECK(r.output.find("different datasets") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "refused.json"));

  r = trisim(dir, "jsd --a pa --b pc --out j.json");
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(report(dir, "j.json")["report"]["score"].get<double>() >= 0.0);

  CHECK(trisim(dir, "sweep --a a --b b --blobs 20,0.4").code == 2);  // probe required
  r = trisim(dir, "sweep --a a --b b --blobs 20,0.4 --probe-blobs 8,0.4 --levels 0:0.6:0.2 --self-lmc --out sw.json");
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const json sw = report(dir, "sw.json")["report"];
  CHECK(sw["levels"] == json::array({0.0, 0.2, 0.4, 0.6}));
  CHECK(sw["self_lmc"]["a"][0]["barrier"] == 0.0);
  CHECK(trisim(dir, "sweep --a a --b b --blobs 20,0.4 --probe-blobs 8,0.4 --levels 0.2:0.6:0.2").code == 2);

  r = trisim(dir, "triangle --a a --b c --blobs 20,0.4 --probe-blobs 8,0.4 --levels 0:0.4:0.2 --out t.json --svg t.svg");
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(report(dir, "t.json")["report"]["panel2"]["kind"] == "jsd");
}

TEST_CASE("config files") {
  ScratchDir dir("cli");
  train(dir, "a", "3:6:3", 1);
  spit(dir / "c.toml", "blobs = \"20,0.4\"\nprobe-blobs = \"8,0.4\"\nlevels = \"0:0.4:0.2\"\nalphas = 5\n");
  Run r = trisim(dir, "triangle --a a --b a --config c.toml --alphas 3 --out t.json");
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const json t = report(dir, "t.json");
  CHECK(t["config"]["alphas"] == 3);  // flag beats file
  CHECK(t["config"]["levels"] == "0:0.4:0.2");
  CHECK(t["report"]["panel2"]["curve"]["alphas"].size() == 3);

  spit(dir / "c.json", R"({"blobs": "20,0.4", "probe_blobs": "8,0.4", "levels": "0:0.4:0.2"})");
  r = trisim(dir, "triangle --a a --b a --config c.json --out u.json");
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(report(dir, "u.json")["config"]["alphas"] == 11);

  spit(dir / "bad.toml", "nonsense = 1\n");
  r = trisim(dir, "triangle --a a --b a --config bad.toml");
  CHECK(r.code == 2);
  CHECK(r.output.find("nonsense") != std::string::npos);
  CHECK(trisim(dir, "triangle --a a --b a --config missing.toml").code == 2);
}

TEST_CASE("crossview exit codes and reruns") {
  ScratchDir dir("cli");
  train(dir, "a", "3:6:3", 1);
  fs::create_directories(dir / "r");
  const std::string tri = "triangle --a a --b a --blobs 20,0.4 --probe-blobs 8,0.4 --levels 0:0.4:0.2 --alphas 3";
  REQUIRE(trisim(dir, tri + " --out r/1.json").code == 0);
  const std::string first = slurp(dir / "r/1.json");
  REQUIRE(trisim(dir, tri + " --out r/1.json").code == 0);
  CHECK(slurp(dir / "r/1.json") == first);
  REQUIRE(trisim(dir, tri + " --out r/2.json").code == 0);

  const Run two = trisim(dir, "crossview --reports r");
  CHECK(two.code == 3);
  CHECK(two.output.find("at least 3") != std::string::npos);

  // Three (M, M) reports: every score is 1, so the correlation is undefined.
  REQUIRE(trisim(dir, tri + " --out r/3.json").code == 0);
  CHECK(trisim(dir, "crossview --reports r").code == 4);
  CHECK(trisim(dir, "crossview --reports nowhere").code == 3);

  spit(dir / "broken.json", "{");
  CHECK(trisim(dir, "plot --report broken.json --out x.svg").code == 3);
  CHECK(trisim(dir, "plot --report r/1.json --out p.svg --timestamp").code == 0);
  CHECK(slurp(dir / "p.svg").find("<!-- generated") != std::string::npos);
}
