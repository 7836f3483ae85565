#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <nlohmann/json.hpp>

#include "support.hpp"
#include "tnd/container.hpp"
#include "tnd/nn.hpp"

#ifndef TND_CLI_PATH
#error "TND_CLI_PATH must name the tnd executable"
#endif

using namespace tnd;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(TND_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

const char* kTinyConfig = R"({
  "seed": 3,
  "threads": 1,
  "zoo": {"num_clean": 1, "num_trojan": 1, "num_classes": 3, "image_shape": [3, 12, 12],
          "train_per_class": 60, "test_per_class": 20, "conv1_channels": 4, "conv2_channels": 4,
          "hidden_width": 8, "epochs": 2, "min_asr": 0.0, "max_accuracy_gap": 1.0},
  "dl": {"solver": {"iterations": 5}},
  "df": {"num_seeds": 2, "solver": {"iterations": 10}},
  "experiment": {"per_class": 2, "quantiles": [50]}
})";

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(run("") == 1);
  CHECK(run("--help") == 0);
  CHECK(run("frobnicate") == 1);
  CHECK(run("detect dl /nonexistent/model.tscp") == 1);
  CHECK(run("eval roc /tmp --detector xx") == 1);
}

TEST_CASE("format errors exit with 2") {
  test::TempDir dir("cli-fmt");
  write_text_atomic(dir / "junk.tscp", "not a container at all");
  CHECK(run("detect df " + q(dir / "junk.tscp")) == 2);
  write_text_atomic(dir / "broken.json", "{ not json");
  CHECK(run("zoo build " + q(dir / "z") + " --config " + q(dir / "broken.json")) == 2);
  write_text_atomic(dir / "unknown.json", R"({"colour": 1})");
  CHECK(run("zoo build " + q(dir / "z") + " --config " + q(dir / "unknown.json")) == 1);
}

TEST_CASE("numerical failures exit with 3") {
  test::TempDir dir("cli-num");
  ModelBundle b;
  b.model_id = "overflow";
  b.network = test::toy_cnn(1);
  // 1e200-scaled weights overflow the logits to inf
  for (std::size_t i : {0UL, 3UL, 7UL, 9UL}) {
    const Layer& l = b.network.layers()[i];
    Tensor w = l.weight;
    for (double& v : w.values()) v = 1e200;
    b.network.set_parameters(i, w, l.bias);
  }
  save_model(dir / "m.tscp", b);
  CHECK(run("detect df " + q(dir / "m.tscp") + " --num-seeds 1 --iterations 2") == 3);
}

TEST_CASE("end-to-end pipeline on a two-model zoo") {
  test::TempDir dir("cli");
  write_text_atomic(dir / "cfg.json", kTinyConfig);
  const std::string cfg = " --config " + q(dir / "cfg.json");
  REQUIRE(run("zoo build " + q(dir / "zoo") + cfg) == 0);
  CHECK(run("zoo validate " + q(dir / "zoo")) == 0);

  const auto manifest = nlohmann::json::parse(read_text(dir / "zoo" / "manifest.json"));
  const std::filesystem::path model = dir / "zoo" / manifest.at("entries").at(0).at("path").get<std::string>();
  const std::filesystem::path other = dir / "zoo" / manifest.at("entries").at(1).at("path").get<std::string>();
  const std::string zoo = " --zoo " + q(dir / "zoo");

  CHECK(run("detect df " + q(model) + cfg + " --out " + q(dir / "df1.json")) == 0);
  CHECK(run("detect df " + q(model) + cfg + " --out " + q(dir / "df2.json")) == 0);
  CHECK(read_text(dir / "df1.json") == read_text(dir / "df2.json"));
  CHECK(run("detect df " + q(model) + cfg + " --seed 9 --out " + q(dir / "df3.json")) == 0);
  CHECK(read_text(dir / "df1.json") != read_text(dir / "df3.json"));

  CHECK(run("detect dl " + q(model) + cfg + zoo + " --out " + q(dir / "dl.json")) == 0);
  CHECK(run("detect dl " + q(model) + cfg) == 1);

  REQUIRE(run("invert " + q(model) + cfg + " --num-seeds 1 --out-dir " + q(dir / "inv")) == 0);
  for (const char* f : {"seed_0.png", "recovered_0.png", "perturbation_0.png", "mask_0.png", "mask_0.f64",
                        "trace_0.csv", "inversion.json"}) {
    CHECK_MESSAGE(std::filesystem::exists(dir / "inv" / f), f);
  }

  CHECK(run("eval roc " + q(dir / "zoo") + cfg + " --detector df --csv-prefix " + q(dir / "roc") + " --out " +
            q(dir / "roc.json")) == 0);
  CHECK(std::filesystem::exists(dir / "roc-noise.csv"));
  CHECK(run("eval pr " + q(dir / "zoo") + cfg + " --detector dl --positives 1") == 0);
  CHECK(run("detect df " + q(other) + cfg + " --out " + q(dir / "df4.json")) == 0);
  CHECK(run("report " + q(dir / "df1.json") + " " + q(dir / "df4.json") + " " + q(dir / "dl.json") + zoo +
            " --out " + q(dir / "report.json")) == 0);
  const auto rep = nlohmann::json::parse(read_text(dir / "report.json"));
  CHECK(rep.at("models").size() == 3);
  CHECK(rep.at("metrics").size() == 1);
  CHECK(run("report " + q(dir / "cfg.json")) == 2);
}
