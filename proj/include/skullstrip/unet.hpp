#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "skullstrip/augment.hpp"
#include "skullstrip/errors.hpp"
#include "skullstrip/image.hpp"
#include "skullstrip/metrics.hpp"
#include "skullstrip/tensor.hpp"

namespace skullstrip {

/// Compact same-padding U-Net with sigmoid head. Channel counts double per
/// encoder level and halve per decoder level; skips are channel concats.
struct UNetModel {
  int depth = 0;
  int base_channels = 0;
  int input_h = 0;
  int input_w = 0;
  std::vector<std::pair<std::string, DiffTensor>> parameters;

  DiffTensor& param(const std::string& name) {
    for (auto& [n, t] : parameters)
      if (n == name) return t;
    throw ShapeMismatch("unknown parameter " + name);
  }
  const DiffTensor& param(const std::string& name) const {
    return const_cast<UNetModel*>(this)->param(name);
  }

  std::vector<DiffTensor> param_list() {
    std::vector<DiffTensor> out;
    out.reserve(parameters.size());
    for (auto& [n, t] : parameters) out.push_back(t);
    return out;
  }

  void zero_grads() {
    for (auto& [n, t] : parameters) t.zero_grad();
  }

  int channels_at(int level) const { return base_channels << level; }
};

namespace detail {

inline DiffTensor he_conv(std::mt19937& rng, int out_ch, int in_ch, int k) {
  const int fan_in = in_ch * k * k;
  std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / fan_in));
  std::vector<float> w(static_cast<size_t>(out_ch) * in_ch * k * k);
  for (auto& v : w) v = dist(rng);
  return DiffTensor::from({out_ch, in_ch, k, k}, std::move(w), true);
}

}  // namespace detail

/// Two 3x3 conv+relu blocks per level, 2x2 max-pool between encoder levels,
/// nearest-neighbor upsample + skip concat in the decoder, 1x1 conv +
/// sigmoid head. Seeded He initialization, zero biases.
inline UNetModel build_unet(int depth, int base_channels, int input_h, int input_w,
                            uint32_t seed) {
  if (depth < 2) throw IndivisibleInput("depth must be >= 2");
  const int div = 1 << (depth - 1);
  if (input_h % div != 0 || input_w % div != 0)
    throw IndivisibleInput(std::to_string(input_h) + "x" + std::to_string(input_w) +
                           " not divisible by " + std::to_string(div));
  UNetModel m;
  m.depth = depth;
  m.base_channels = base_channels;
  m.input_h = input_h;
  m.input_w = input_w;
  std::mt19937 rng(seed);

  auto add_block = [&](const std::string& prefix, int in_ch, int out_ch) {
    m.parameters.emplace_back(prefix + "_w1", detail::he_conv(rng, out_ch, in_ch, 3));
    m.parameters.emplace_back(prefix + "_b1", DiffTensor::zeros({out_ch}, true));
    m.parameters.emplace_back(prefix + "_w2", detail::he_conv(rng, out_ch, out_ch, 3));
    m.parameters.emplace_back(prefix + "_b2", DiffTensor::zeros({out_ch}, true));
  };

  for (int level = 0; level < depth; ++level) {
    const int in_ch = level == 0 ? 1 : m.channels_at(level - 1);
    add_block("enc" + std::to_string(level), in_ch, m.channels_at(level));
  }
  for (int level = depth - 2; level >= 0; --level) {
    const int in_ch = m.channels_at(level + 1) + m.channels_at(level);
    add_block("dec" + std::to_string(level), in_ch, m.channels_at(level));
  }
  m.parameters.emplace_back("final_w",
                            detail::he_conv(rng, 1, m.channels_at(0), 1));
  m.parameters.emplace_back("final_b", DiffTensor::zeros({1}, true));
  return m;
}

inline DiffTensor unet_forward(const UNetModel& m, const DiffTensor& input) {
  const auto& s = input.shape();
  if (s.size() != 4 || s[1] != 1 || s[2] != m.input_h || s[3] != m.input_w)
    throw ShapeMismatch("unet_forward: input must be [N,1," +
                        std::to_string(m.input_h) + "," + std::to_string(m.input_w) +
                        "]");
  auto block = [&](const std::string& prefix, const DiffTensor& x) {
    DiffTensor h = relu(conv2d(x, m.param(prefix + "_w1"), m.param(prefix + "_b1"), 1));
    return relu(conv2d(h, m.param(prefix + "_w2"), m.param(prefix + "_b2"), 1));
  };

  std::vector<DiffTensor> skips;
  DiffTensor x = input;
  for (int level = 0; level < m.depth; ++level) {
    if (level > 0) x = max_pool2d(x);
    x = block("enc" + std::to_string(level), x);
    if (level < m.depth - 1) skips.push_back(x);
  }
  for (int level = m.depth - 2; level >= 0; --level) {
    x = concat_channels(upsample2x(x), skips[level]);
    x = block("dec" + std::to_string(level), x);
  }
  x = conv2d(x, m.param("final_w"), m.param("final_b"), 0);
  return sigmoid(x);
}

/// Forward pass without tape recording; input extents must equal the model's.
inline SoftMask predict(const UNetModel& m, const ImageSlice& img) {
  require_same_extents(img.width, img.height, m.input_w, m.input_h, "predict");
  NoGradGuard guard;
  DiffTensor input = DiffTensor::from({1, 1, m.input_h, m.input_w}, img.pixels);
  DiffTensor out = unet_forward(m, input);
  SoftMask mask(img.width, img.height);
  mask.probs = out.value();
  return mask;
}

/// Elementwise image * soft mask, yielding the stripped image.
inline ImageSlice apply_soft_mask(const ImageSlice& img, const SoftMask& mask) {
  require_same_extents(img.width, img.height, mask.width, mask.height,
                       "apply_soft_mask");
  ImageSlice out(img.width, img.height);
  for (size_t i = 0; i < img.size(); ++i) out.pixels[i] = img.pixels[i] * mask.probs[i];
  return out;
}

// ---------------------------------------------------------------------------
// checkpointing
//
// Binary layout: magic "SKST", u32 version, u32 depth, base_channels,
// input_h, input_w, u32 parameter count, then per parameter: u32 name
// length, name bytes, u32 rank, u32 extents, f32 little-endian payload.

namespace checkpoint {
constexpr uint32_t kVersion = 1;
constexpr char kMagic[4] = {'S', 'K', 'S', 'T'};
}  // namespace checkpoint

inline void save_checkpoint(const UNetModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open " + path + " for writing");
  auto put_u32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  out.write(checkpoint::kMagic, 4);
  put_u32(checkpoint::kVersion);
  put_u32(static_cast<uint32_t>(m.depth));
  put_u32(static_cast<uint32_t>(m.base_channels));
  put_u32(static_cast<uint32_t>(m.input_h));
  put_u32(static_cast<uint32_t>(m.input_w));
  put_u32(static_cast<uint32_t>(m.parameters.size()));
  for (const auto& [name, t] : m.parameters) {
    put_u32(static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(static_cast<uint32_t>(t.shape().size()));
    for (int d : t.shape()) put_u32(static_cast<uint32_t>(d));
    out.write(reinterpret_cast<const char*>(t.value().data()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
  }
  if (!out) throw IoFailure("write failed: " + path);
}

inline UNetModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, checkpoint::kMagic, 4) != 0)
    throw CorruptCheckpoint("bad magic in " + path);
  auto get_u32 = [&]() {
    uint32_t v;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (in.gcount() != 4) throw CorruptCheckpoint("truncated header in " + path);
    return v;
  };
  if (get_u32() != checkpoint::kVersion)
    throw VersionMismatch("unsupported checkpoint version in " + path);
  const auto depth = static_cast<int>(get_u32());
  const auto base = static_cast<int>(get_u32());
  const auto input_h = static_cast<int>(get_u32());
  const auto input_w = static_cast<int>(get_u32());
  const uint32_t count = get_u32();

  UNetModel m = build_unet(depth, base, input_h, input_w, 0);
  if (count != m.parameters.size())
    throw CorruptCheckpoint("parameter count mismatch in " + path);
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = get_u32();
    if (name_len > 256) throw CorruptCheckpoint("implausible name length in " + path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (static_cast<uint32_t>(in.gcount()) != name_len)
      throw CorruptCheckpoint("truncated name in " + path);
    const uint32_t rank = get_u32();
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(get_u32());
    DiffTensor& target = m.param(name);
    if (shape != target.shape())
      throw CorruptCheckpoint("shape mismatch for " + name + " in " + path);
    in.read(reinterpret_cast<char*>(target.value().data()),
            static_cast<std::streamsize>(target.numel() * sizeof(float)));
    if (static_cast<size_t>(in.gcount()) != target.numel() * sizeof(float))
      throw CorruptCheckpoint("truncated payload for " + name + " in " + path);
  }
  return m;
}

// ---------------------------------------------------------------------------
// training

struct TrainConfig {
  double learning_rate = 0.001;
  int batch_size = 25;
  int epochs = 1000;
  double val_fraction = 0.05;
  uint32_t seed = 0;
  float augment_fraction = 0.5f;
  std::string checkpoint_path;
  // optional early exit once validation clears both bars (0 disables)
  double early_stop_f1 = 0.0;
  double early_stop_max_bce = 0.0;

  void validate() const {
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
      throw DatasetTooSmall("val_fraction must be in (0,1)");
    if (batch_size < 1) throw DatasetTooSmall("batch_size must be >= 1");
    if (epochs < 1) throw DatasetTooSmall("epochs must be >= 1");
  }
};

struct EpochRecord {
  int epoch = 0;
  double train_bce = 0.0;
  MetricsReport val;
  bool checkpointed = false;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_val_bce = 0.0;
};

inline MetricsReport evaluate_on(const UNetModel& m,
                                 const std::vector<SamplePair>& samples) {
  std::vector<std::pair<SoftMask, BinaryMask>> pairs;
  pairs.reserve(samples.size());
  for (const auto& [img, mask] : samples) pairs.emplace_back(predict(m, img), mask);
  return compute_report(pairs);
}

/// Seeded shuffle, validation split before augmentation, Adam on mean BCE
/// per mini-batch, checkpoint on strict validation-BCE improvement.
inline TrainLog train(UNetModel& model, const std::vector<SamplePair>& dataset,
                      const TrainConfig& config) {
  config.validate();
  if (dataset.size() < 2) throw DatasetTooSmall("need at least 2 samples");
  for (const auto& [img, mask] : dataset) {
    require_same_extents(img.width, img.height, model.input_w, model.input_h, "train");
    require_same_extents(mask.width, mask.height, model.input_w, model.input_h,
                         "train");
  }

  std::mt19937 rng(config.seed);
  std::vector<size_t> order(dataset.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);

  size_t n_val = static_cast<size_t>(config.val_fraction * dataset.size());
  n_val = std::max<size_t>(n_val, 1);
  if (n_val >= dataset.size())
    throw DatasetTooSmall("validation split leaves no training samples");

  std::vector<SamplePair> val_set, train_set;
  for (size_t i = 0; i < n_val; ++i) val_set.push_back(dataset[order[i]]);
  for (size_t i = n_val; i < dataset.size(); ++i) train_set.push_back(dataset[order[i]]);
  if (config.augment_fraction > 0.0f)
    train_set = expand_dataset(train_set, config.augment_fraction, rng());

  const int H = model.input_h, W = model.input_w;
  const size_t plane = static_cast<size_t>(H) * W;
  auto params = model.param_list();
  AdamState adam;
  int step = 0;

  TrainLog log;
  std::vector<size_t> batch_order(train_set.size());
  for (size_t i = 0; i < batch_order.size(); ++i) batch_order[i] = i;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(batch_order.begin(), batch_order.end(), rng);
    double bce_sum = 0.0;
    size_t sample_count = 0;
    for (size_t start = 0; start < batch_order.size(); start += config.batch_size) {
      const size_t bsz = std::min<size_t>(config.batch_size, batch_order.size() - start);
      std::vector<float> in(bsz * plane), tgt(bsz * plane);
      for (size_t b = 0; b < bsz; ++b) {
        const auto& [img, mask] = train_set[batch_order[start + b]];
        std::copy(img.pixels.begin(), img.pixels.end(), in.begin() + b * plane);
        for (size_t i = 0; i < plane; ++i)
          tgt[b * plane + i] = static_cast<float>(mask.bits[i]);
      }
      const int n = static_cast<int>(bsz);
      DiffTensor input = DiffTensor::from({n, 1, H, W}, std::move(in));
      DiffTensor target = DiffTensor::from({n, 1, H, W}, std::move(tgt));
      DiffTensor loss = bce_loss(unet_forward(model, input), target);
      model.zero_grads();
      backward(loss);
      adam_step(params, adam, config.learning_rate, 0.9, 0.999, 1e-8, ++step);
      bce_sum += static_cast<double>(loss.value()[0]) * bsz;
      sample_count += bsz;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_bce = bce_sum / static_cast<double>(sample_count);
    rec.val = evaluate_on(model, val_set);
    if (log.best_epoch < 0 || rec.val.bce < log.best_val_bce) {
      log.best_epoch = epoch;
      log.best_val_bce = rec.val.bce;
      rec.checkpointed = true;
      if (!config.checkpoint_path.empty())
        save_checkpoint(model, config.checkpoint_path);
    }
    log.epochs.push_back(rec);
    if (config.early_stop_f1 > 0.0 && rec.val.f1 >= config.early_stop_f1 &&
        rec.val.bce <= config.early_stop_max_bce)
      break;
  }
  return log;
}

}  // namespace skullstrip
