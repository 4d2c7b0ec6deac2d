#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "clld/augment.hpp"
#include "clld/data.hpp"
#include "clld/trainer.hpp"
#include "helpers.hpp"

using namespace clld;

namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.encoder.input_h = c.encoder.input_w = 16;
  c.encoder.stage_channels = {8, 16};
  c.encoder.stage_strides = {2, 2};
  c.encoder.projector_dim = 8;
  c.batch_size = 4;
  c.total_steps = 20;
  c.rho = 4;
  c.seed = 5;
  return c;
}

ImageCorpus random_corpus(std::size_t n, std::size_t side, std::uint64_t seed) {
  Rng rng(seed);
  ImageCorpus corpus;
  for (std::size_t i = 0; i < n; ++i) {
    corpus.push_back(normalize_per_channel(test::random_tensor<float>(Shape{3, side, side}, rng, 0, 1)));
  }
  return corpus;
}

ImageCorpus scene_corpus(std::size_t n, std::uint64_t seed) {
  DatasetSpec spec;
  spec.count = n;
  spec.seed = seed;
  ImageCorpus corpus;
  for (const auto& s : generate_dataset(spec)) corpus.push_back(normalize_per_channel(s.image));
  return corpus;
}

template <typename T>
std::vector<std::vector<T>> snapshot(const ParamSet<T>& p) {
  std::vector<std::vector<T>> out;
  for (const auto& np : p) out.push_back(np.value.storage());
  return out;
}

bool same_metrics(const StepMetrics& a, const StepMetrics& b) { return a.csv_line() == b.csv_line(); }

}  // namespace

TEST_CASE("identical views give -2 before any update") {
  TrainConfig c = small_config();
  c.masking_enabled = false;
  auto state = init_trainer<double>(c);
  const auto corpus = random_corpus(8, 16, 1);
  const auto m = pretrain_step(state, corpus);
  CHECK(std::abs(m.loss.l_clld + 2.0) < 1e-9);
  CHECK(std::abs(m.loss.l_cons + 1.0) < 1e-9);
  CHECK(std::abs(m.loss.l_sim + 1.0) < 1e-9);
  CHECK(std::abs(m.loss.l_inst) < 1e-9);

  auto fstate = init_trainer<float>(c);
  CHECK(std::abs(pretrain_step(fstate, corpus).loss.l_clld + 2.0) < 1e-6);
}

TEST_CASE("identical seeds give bit-identical metrics") {
  const auto corpus = random_corpus(12, 16, 2);
  auto a = init_trainer<float>(small_config());
  auto b = init_trainer<float>(small_config());
  for (int i = 0; i < 8; ++i) CHECK(same_metrics(pretrain_step(a, corpus), pretrain_step(b, corpus)));
  CHECK(snapshot(a.pair.target) == snapshot(b.pair.target));
}

TEST_CASE("metrics carry the schedules") {
  TrainConfig c = small_config();
  c.warmup_steps = 0;
  auto s = init_trainer<float>(c);
  const auto corpus = random_corpus(4, 16, 3);
  const auto m0 = pretrain_step(s, corpus);
  CHECK(m0.step == 0);
  CHECK(m0.lr == 1.0);
  CHECK(m0.momentum == 0.99);
  CHECK(m0.grad_norm > 0.0);
  CHECK(m0.loss.l_clld == m0.loss.l_cons + m0.loss.l_sim + m0.loss.l_inst);
  CHECK(s.step == 1);
  CHECK(s.samples_drawn == 4);
  CHECK(m0.csv_line().find("0,") == 0);
}

TEST_CASE("target parameters only move by the moving average") {
  auto s = init_trainer<float>(small_config());
  const auto corpus = random_corpus(4, 16, 4);
  pretrain_step(s, corpus);
  const auto target_before = snapshot(s.pair.target);
  for (auto& p : s.pair.online) {
    for (auto& g : p.value.grad()) g = 1.0f;
  }
  lars_step(s.pair.online, 1.0, LarsConfig{});
  CHECK(snapshot(s.pair.target) == target_before);
  for (const auto& p : s.pair.target) {
    bool clean = !p.value.has_grad();
    if (!clean) {
      clean = true;
      for (float g : p.value.grad()) clean = clean && g == 0.0f;
    }
    CHECK(clean);
  }
}

TEST_CASE("disabled similarity term cuts the cross-similarity path") {
  const auto corpus = random_corpus(8, 16, 5);
  auto deltas = [&](bool use_sim, std::size_t alpha) {
    TrainConfig c = small_config();
    c.loss.use_sim = use_sim;
    c.alpha = alpha;
    c.warmup_steps = 0;  // step 0 of a warmup has lr 0
    auto s = init_trainer<double>(c);
    const auto before = snapshot(s.pair.online);
    const auto m = pretrain_step(s, corpus);
    if (!use_sim) CHECK(m.loss.l_sim == 0.0);
    auto after = snapshot(s.pair.online);
    for (std::size_t i = 0; i < after.size(); ++i)
      for (std::size_t j = 0; j < after[i].size(); ++j) after[i][j] -= before[i][j];
    return after;
  };
  // Without L_sim the patch side cannot matter; with it, it must.
  const auto off = deltas(false, 1);
  CHECK(std::any_of(off.back().begin(), off.back().end(), [](double v) { return v != 0.0; }));
  CHECK(off == deltas(false, 2));
  CHECK(deltas(true, 1) != deltas(true, 2));
}

TEST_CASE("routing and symmetric variants run and differ") {
  const auto corpus = random_corpus(8, 16, 6);
  TrainConfig a = small_config(), b = small_config(), c = small_config();
  b.view_routing = ViewRouting::kOriginalToOnline;
  c.symmetric = true;
  auto sa = init_trainer<float>(a), sb = init_trainer<float>(b), sc = init_trainer<float>(c);
  const auto ma = pretrain_step(sa, corpus), mb = pretrain_step(sb, corpus), mc = pretrain_step(sc, corpus);
  CHECK(ma.grad_norm != mb.grad_norm);
  CHECK(mc.grad_norm != ma.grad_norm);
  // At step 0 both encoders agree, so swapping which one is online leaves the loss value alone.
  CHECK(ma.loss.l_clld == doctest::Approx(mb.loss.l_clld).epsilon(1e-5));
  CHECK(std::isfinite(mc.loss.l_clld));
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
  auto s = init_trainer<float>(small_config());
  ImageCorpus bad = random_corpus(2, 16, 7);
  for (auto& img : bad) img[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    pretrain_step(s, bad);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("step 0") != std::string::npos);
    CHECK(msg.find("lr=") != std::string::npos);
    CHECK(msg.find("grad_norm=") != std::string::npos);
  }
}

TEST_CASE("batch and config checks") {
  auto s = init_trainer<float>(small_config());
  CHECK_THROWS_AS(pretrain_step(s, random_corpus(2, 32, 8)), ConfigError);
  TrainConfig c = small_config();
  c.rho = 5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.loss = {false, false, false};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.alpha = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(input_side_for_alpha(3, 8, 64) == 48);
  CHECK(input_side_for_alpha(2, 8, 64) == 64);
  CHECK(input_side_for_alpha(1, 8, 64) == 64);
  CHECK(batch_indices(small_config(), 3, 10) == batch_indices(small_config(), 3, 10));
}

TEST_CASE("resume from a checkpoint matches an uninterrupted run") {
  const auto dir = std::filesystem::temp_directory_path() / "clld_unit_trainer";
  std::filesystem::create_directories(dir);
  const auto corpus = random_corpus(12, 16, 9);
  auto full = init_trainer<float>(small_config());
  std::vector<StepMetrics> reference;
  for (int i = 0; i < 20; ++i) reference.push_back(pretrain_step(full, corpus));

  auto first = init_trainer<float>(small_config());
  for (int i = 0; i < 10; ++i) pretrain_step(first, corpus);
  save_checkpoint(first, dir / "mid.ckpt");
  auto resumed = load_checkpoint<float>(dir / "mid.ckpt");
  CHECK(resumed.step == 10);
  CHECK(resumed.samples_drawn == 40);
  for (int i = 10; i < 20; ++i) CHECK(same_metrics(pretrain_step(resumed, corpus), reference[i]));
  CHECK(snapshot(resumed.pair.online) == snapshot(full.pair.online));

  // save -> load -> save is byte-identical
  save_checkpoint(load_checkpoint<float>(dir / "mid.ckpt"), dir / "again.ckpt");
  auto read = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  CHECK(read(dir / "mid.ckpt") == read(dir / "again.ckpt"));

  const std::string bytes = read(dir / "mid.ckpt");
  {
    std::ofstream out(dir / "cut.ckpt", std::ios::binary);
    out << bytes.substr(0, bytes.size() / 2);
  }
  CHECK_THROWS_AS(load_checkpoint<float>(dir / "cut.ckpt"), LoadError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("500 desk-config steps lower the loss without collapse") {
  TrainConfig c;
  c.total_steps = 500;
  c.seed = 1;
  const auto corpus = scene_corpus(256, 11);
  auto s = init_trainer<float>(c);
  std::vector<double> losses;
  for (std::size_t i = 0; i < c.total_steps; ++i) losses.push_back(pretrain_step(s, corpus).loss.l_clld);
  auto avg = [&](std::size_t end, std::size_t n) {
    double a = 0;
    for (std::size_t i = end - n; i < end; ++i) a += losses[i];
    return a / static_cast<double>(n);
  };
  CHECK(avg(500, 10) < avg(10, 10));
  const ImageCorpus probe(corpus.begin(), corpus.begin() + 64);
  for (double sd : pooled_feature_std(s.pair.online, c.encoder, probe)) CHECK(sd > 0.01);
}
