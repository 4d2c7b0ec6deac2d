#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "clld_unit_cli";

int run(const std::string& args) {
  const std::string cmd = std::string(CLLD_BINARY) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::vector<std::string> data_lines(const fs::path& p) {
  std::vector<std::string> out;
  std::istringstream in(read(p));
  for (std::string line; std::getline(in, line);)
    if (!line.empty() && line[0] != '#') out.push_back(line);
  return out;
}

bool same_tree(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> fa, fb;
  for (const auto& e : fs::recursive_directory_iterator(a)) fa.push_back(fs::relative(e.path(), a));
  for (const auto& e : fs::recursive_directory_iterator(b)) fb.push_back(fs::relative(e.path(), b));
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  if (fa != fb) return false;
  for (const auto& rel : fa) {
    if (fs::is_regular_file(a / rel) && read(a / rel) != read(b / rel)) return false;
  }
  return true;
}

// Small enough that each command finishes in seconds.
fs::path tiny_config() {
  fs::create_directories(kRoot);
  const json cfg = {
      {"pretrain", {{"batch_size", 2}, {"total_steps", 6}, {"corpus", {{"count", 8}}}, {"checkpoint_every", 3}}},
      {"finetune", {{"steps", 3}, {"batch_size", 2}, {"data", {{"count", 6}}}}},
      {"eval", {{"data", {{"count", 10}}}}},
      {"ablate",
       {{"seeds", {0}},
        {"cells", {{{"name", "both"}}, {{"name", "sim"}, {"use_cons", false}}}}}}};
  const fs::path p = kRoot / "tiny.json";
  std::ofstream(p) << cfg.dump(2);
  return p;
}

}  // namespace

TEST_CASE("gen-data") {
  fs::remove_all(kRoot / "gen");
  const fs::path cfg = kRoot / "gen.json";
  fs::create_directories(kRoot);
  std::ofstream(cfg) << json{{"gen-data", {{"proportions", {{"normal", 0.5}, {"shadow", 0.2}, {"occluded", 0.2}, {"night", 0.1}}}}}}.dump();
  CHECK(run("gen-data --config " + cfg.string() + " --count 100 --seed 3 --out " + (kRoot / "gen/a").string()) == 0);
  const json manifest = json::parse(read(kRoot / "gen/a/manifest"));
  CHECK(manifest["scenario_counts"] == json{{"normal", 50}, {"shadow", 20}, {"occluded", 20}, {"night", 10}, {"crowd", 0}});
  CHECK(manifest["entries"].size() == 100);
  CHECK(run("gen-data --config " + cfg.string() + " --count 100 --seed 3 --out " + (kRoot / "gen/b").string()) == 0);
  CHECK(same_tree(kRoot / "gen/a", kRoot / "gen/b"));
  CHECK(run("gen-data --count 100 --seed 3 --out " + (kRoot / "gen/a").string()) == 3);
  CHECK(run("gen-data --count 0 --out " + (kRoot / "gen/empty").string()) == 0);
  CHECK(json::parse(read(kRoot / "gen/empty/manifest"))["entries"].empty());
  CHECK(run("gen-data --count 4 --force --out " + (kRoot / "gen/a").string()) == 0);
  CHECK(json::parse(read(kRoot / "gen/a/manifest"))["entries"].size() == 4);
}

TEST_CASE("pretrain, resume and alpha header") {
  const auto cfg = tiny_config().string();
  const auto out = kRoot / "pre";
  fs::remove_all(out);
  CHECK(run("pretrain --config " + cfg + " --steps 10 --out " + out.string()) == 0);
  CHECK(data_lines(out / "metrics.log").size() == 10);
  CHECK(fs::exists(out / "checkpoints/final.ckpt"));
  CHECK(fs::exists(out / "checkpoints/step_000003.ckpt"));

  const auto resumed = kRoot / "pre_resume";
  fs::remove_all(resumed);
  CHECK(run("pretrain --config " + cfg + " --steps 6 --out " + resumed.string()) == 0);
  CHECK(run("pretrain --config " + cfg + " --steps 10 --resume " + (resumed / "checkpoints/final.ckpt").string() +
            " --out " + resumed.string()) == 0);
  const auto lines = data_lines(resumed / "metrics.log");
  REQUIRE(lines.size() == 10);
  CHECK(lines[6].rfind("6,", 0) == 0);
  // Resuming a periodic checkpoint reproduces the uninterrupted run.
  const auto mid = kRoot / "pre_mid";
  fs::remove_all(mid);
  CHECK(run("pretrain --config " + cfg + " --steps 10 --resume " + (out / "checkpoints/step_000006.ckpt").string() +
            " --out " + mid.string()) == 0);
  const auto full = data_lines(out / "metrics.log");
  CHECK(data_lines(mid / "metrics.log") == std::vector<std::string>(full.begin() + 6, full.end()));

  const auto a3 = kRoot / "pre_a3";
  fs::remove_all(a3);
  CHECK(run("pretrain --config " + cfg + " --steps 1 --alpha 3 --out " + a3.string()) == 0);
  CHECK(read(a3 / "metrics.log").find("input=48x48 alpha=3 feature_map=6x6") != std::string::npos);
}

TEST_CASE("finetune and eval") {
  const auto cfg = tiny_config().string();
  const auto a = kRoot / "ft_a", b = kRoot / "ft_b", e = kRoot / "ev";
  for (const auto& d : {a, b, e}) fs::remove_all(d);
  CHECK(run("finetune --config " + cfg + " --random-init --out " + a.string()) == 0);
  CHECK(run("finetune --config " + cfg + " --random-init --out " + b.string()) == 0);
  CHECK(read(a / "report.csv") == read(b / "report.csv"));
  const auto rows = data_lines(a / "report.csv");
  // header, one row per scenario present, overall
  REQUIRE(rows.size() >= 3);
  CHECK(rows.back().rfind("overall,10,", 0) == 0);
  CHECK(read(a / "report.txt").find("overall.f1=") != std::string::npos);

  CHECK(run("eval --config " + cfg + " --model " + (a / "model.bin").string() + " --out " + e.string()) == 0);
  CHECK(data_lines(e / "report.csv") == data_lines(a / "report.csv"));

  const auto pre = kRoot / "ft_pre";
  fs::remove_all(pre);
  CHECK(run("pretrain --config " + cfg + " --steps 2 --out " + pre.string()) == 0);
  CHECK(run("finetune --config " + cfg + " --checkpoint " + (pre / "checkpoints/final.ckpt").string() + " --out " +
            (kRoot / "ft_c").string() + " --force") == 0);
}

TEST_CASE("exit codes") {
  const auto cfg = tiny_config().string();
  CHECK(run("finetune --config " + cfg + " --out " + (kRoot / "x1").string()) == 2);
  CHECK(run("finetune --config " + cfg + " --checkpoint /nonexistent.ckpt --out " + (kRoot / "x2").string()) == 3);
  CHECK(run("finetune --config " + cfg + " --checkpoint " + cfg + " --out " + (kRoot / "x3").string()) == 3);
  CHECK(run("eval --model /nonexistent.bin --out " + (kRoot / "x4").string()) == 3);
  const fs::path bad = kRoot / "bad.json";
  std::ofstream(bad) << R"({"pretrain": {"batchsize": 3}})";
  CHECK(run("pretrain --config " + bad.string() + " --out " + (kRoot / "x5").string()) == 2);
  CHECK(run("pretrain --bogus-flag --out " + (kRoot / "x6").string()) == 2);
  CHECK(run("pretrain --precision 16 --out " + (kRoot / "x7").string()) == 2);
}

TEST_CASE("ablate with a two-cell grid") {
  const auto cfg = tiny_config().string();
  const auto out = kRoot / "abl";
  fs::remove_all(out);
  CHECK(run("ablate --config " + cfg + " --steps 2 --out " + out.string()) == 0);
  const auto lines = data_lines(out / "ablation.csv");
  REQUIRE(lines.size() == 3);
  CHECK(lines[1].rfind("both,", 0) == 0);
  CHECK(lines[2].rfind("sim,", 0) == 0);
  const auto again = kRoot / "abl2";
  fs::remove_all(again);
  CHECK(run("ablate --config " + cfg + " --steps 2 --out " + again.string()) == 0);
  CHECK(read(out / "ablation.csv") == read(again / "ablation.csv"));
}
