#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>

#include "helpers.hpp"
#include "skullstrip/unet.hpp"

using namespace skullstrip;
namespace fs = std::filesystem;

namespace {
std::vector<SamplePair> phantom_dataset(int n, int size, uint32_t seed) {
  std::vector<SamplePair> out;
  for (int i = 0; i < n; ++i) {
    auto ph = testutil::make_phantom(size, size, seed + i);
    out.emplace_back(normalize(ph.image), ph.truth);
  }
  return out;
}
}  // namespace

TEST_CASE("depth-4 U-Net on 80x80 keeps spatial extents and channel doubling") {
  UNetModel m = build_unet(4, 16, 80, 80, 1);
  CHECK(m.channels_at(0) == 16);
  CHECK(m.channels_at(1) == 32);
  CHECK(m.channels_at(2) == 64);
  CHECK(m.channels_at(3) == 128);
  // bottleneck block operates at 10x10: 80 -> 40 -> 20 -> 10
  CHECK(m.param("enc3_w1").shape() == std::vector<int>{128, 64, 3, 3});

  ImageSlice img(80, 80, 0.5f);
  const SoftMask out = predict(m, img);
  CHECK(out.width == 80);
  CHECK(out.height == 80);
  for (float p : out.probs) {
    REQUIRE(p > 0.0f);
    REQUIRE(p < 1.0f);
  }
}

TEST_CASE("depth-2 parameter count matches the hand enumeration") {
  UNetModel m = build_unet(2, 4, 16, 16, 1);
  size_t total = 0;
  for (auto& [name, t] : m.parameters) total += t.numel();
  // enc0: 1->4 (36+4), 4->4 (144+4); enc1: 4->8 (288+8), 8->8 (576+8);
  // dec0: 12->4 (432+4), 4->4 (144+4); final 1x1: 4->1 (4+1)
  CHECK(total == 36u + 4 + 144 + 4 + 288 + 8 + 576 + 8 + 432 + 4 + 144 + 4 + 4 + 1);
}

TEST_CASE("indivisible input sizes are rejected") {
  CHECK_THROWS_AS(build_unet(4, 16, 81, 81, 1), IndivisibleInput);
}

TEST_CASE("zeroed final conv gives exactly half probabilities") {
  UNetModel m = build_unet(2, 4, 16, 16, 2);
  std::fill(m.param("final_w").value().begin(), m.param("final_w").value().end(), 0.0f);
  std::fill(m.param("final_b").value().begin(), m.param("final_b").value().end(), 0.0f);
  const SoftMask out = predict(m, ImageSlice(16, 16, 0.3f));
  for (float p : out.probs) REQUIRE(p == 0.5f);
}

TEST_CASE("predict rejects mismatched extents") {
  UNetModel m = build_unet(2, 4, 16, 16, 3);
  CHECK_THROWS_AS(predict(m, ImageSlice(8, 8)), ShapeMismatch);
}

TEST_CASE("apply_soft_mask is an elementwise product") {
  ImageSlice img(2, 1);
  img.pixels = {0.2f, 0.8f};
  SoftMask ones(2, 1, 1.0f), zeros(2, 1, 0.0f), half(2, 1, 0.5f);
  CHECK(apply_soft_mask(img, ones).pixels == img.pixels);
  CHECK(apply_soft_mask(img, zeros).pixels == std::vector<float>{0.0f, 0.0f});
  CHECK(apply_soft_mask(img, half).pixels == std::vector<float>{0.1f, 0.4f});
}

TEST_CASE("binarize uses an inclusive threshold") {
  SoftMask m(2, 1);
  m.probs = {0.4f, 0.6f};
  CHECK(binarize(m, 0.5f).bits == std::vector<uint8_t>{0, 1});
  SoftMask half(3, 1, 0.5f);
  CHECK(binarize(half, 0.5f).bits == std::vector<uint8_t>{1, 1, 1});
  CHECK_THROWS_AS(binarize(m, 1.5f), ShapeMismatch);
}

TEST_CASE("checkpoints round-trip bitwise") {
  auto dir = testutil::scratch_dir("ckpt");
  UNetModel m = build_unet(3, 4, 32, 32, 99);
  save_checkpoint(m, (dir / "m.ckpt").string());
  UNetModel back = load_checkpoint((dir / "m.ckpt").string());
  CHECK(back.depth == m.depth);
  CHECK(back.base_channels == m.base_channels);
  CHECK(back.input_h == m.input_h);
  REQUIRE(back.parameters.size() == m.parameters.size());
  for (size_t i = 0; i < m.parameters.size(); ++i) {
    CHECK(back.parameters[i].first == m.parameters[i].first);
    REQUIRE(back.parameters[i].second.value() == m.parameters[i].second.value());
  }

  // a reloaded model predicts identically
  ImageSlice img(32, 32, 0.0f);
  std::mt19937 rng(5);
  std::uniform_real_distribution<float> uni(0.0f, 1.0f);
  for (auto& p : img.pixels) p = uni(rng);
  CHECK(predict(back, img).probs == predict(m, img).probs);
  fs::remove_all(dir);
}

TEST_CASE("corrupt checkpoints are rejected") {
  auto dir = testutil::scratch_dir("ckpt_bad");
  std::ofstream((dir / "bad.ckpt"), std::ios::binary) << "XXXXgarbage";
  CHECK_THROWS_AS(load_checkpoint((dir / "bad.ckpt").string()), CorruptCheckpoint);

  UNetModel m = build_unet(2, 2, 16, 16, 1);
  save_checkpoint(m, (dir / "t.ckpt").string());
  // truncate the payload
  fs::resize_file(dir / "t.ckpt", fs::file_size(dir / "t.ckpt") / 2);
  CHECK_THROWS_AS(load_checkpoint((dir / "t.ckpt").string()), CorruptCheckpoint);

  // bump the version field
  std::fstream f(dir / "v.ckpt", std::ios::binary | std::ios::out);
  uint32_t v = 999;
  f.write("SKST", 4);
  f.write(reinterpret_cast<char*>(&v), 4);
  f.close();
  CHECK_THROWS_AS(load_checkpoint((dir / "v.ckpt").string()), VersionMismatch);
  fs::remove_all(dir);
}

TEST_CASE("training with zero learning rate keeps initial parameters") {
  auto dataset = phantom_dataset(8, 16, 100);
  UNetModel m = build_unet(2, 2, 16, 16, 7);
  const auto before = m.param("enc0_w1").value();
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 1;
  cfg.batch_size = 4;
  cfg.val_fraction = 0.25;
  cfg.augment_fraction = 0.0f;
  train(m, dataset, cfg);
  CHECK(m.param("enc0_w1").value() == before);
}

TEST_CASE("training runs are seed-deterministic") {
  auto dataset = phantom_dataset(10, 16, 200);
  TrainConfig cfg;
  cfg.learning_rate = 0.001;
  cfg.epochs = 2;
  cfg.batch_size = 5;
  cfg.val_fraction = 0.2;
  cfg.seed = 42;
  auto run = [&]() {
    UNetModel m = build_unet(2, 2, 16, 16, cfg.seed);
    return train(m, dataset, cfg);
  };
  const TrainLog a = run();
  const TrainLog b = run();
  REQUIRE(a.epochs.size() == b.epochs.size());
  for (size_t i = 0; i < a.epochs.size(); ++i) {
    CHECK(a.epochs[i].train_bce == b.epochs[i].train_bce);
    CHECK(a.epochs[i].val.bce == b.epochs[i].val.bce);
    CHECK(a.epochs[i].val.f1 == b.epochs[i].val.f1);
  }
}

TEST_CASE("best checkpoint BCE is non-increasing over saved checkpoints") {
  auto dataset = phantom_dataset(12, 16, 300);
  UNetModel m = build_unet(2, 4, 16, 16, 9);
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 6;
  cfg.val_fraction = 0.2;
  cfg.augment_fraction = 0.0f;
  const TrainLog log = train(m, dataset, cfg);
  double last = std::numeric_limits<double>::infinity();
  for (const auto& rec : log.epochs)
    if (rec.checkpointed) {
      REQUIRE(rec.val.bce < last);
      last = rec.val.bce;
    }
}

TEST_CASE("training rejects undersized datasets") {
  UNetModel m = build_unet(2, 2, 16, 16, 1);
  TrainConfig cfg;
  CHECK_THROWS_AS(train(m, phantom_dataset(1, 16, 1), cfg), DatasetTooSmall);
}

TEST_CASE("a tiny model can memorize a single phantom") {
  auto ph = testutil::make_phantom(32, 32, 555);
  std::vector<SamplePair> dataset(2, {normalize(ph.image), ph.truth});
  UNetModel m = build_unet(2, 8, 32, 32, 4);
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.batch_size = 1;
  cfg.val_fraction = 0.5;
  cfg.augment_fraction = 0.0f;
  train(m, dataset, cfg);
  const BinaryMask pred = binarize(predict(m, dataset[0].first), 0.5f);
  CHECK(testutil::dice(pred, ph.truth) >= 0.99);
}
