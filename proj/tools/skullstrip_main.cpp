// Command-line front end for the skull-stripping pipeline:
//   skullstrip watershed | train | predict | evaluate | overlay
// Exit codes: 0 ok, 1 internal error, 2 usage, 3 dataset too small,
// 4 unpaired files, 5 bad checkpoint, 6 geometry mismatch.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "skullstrip/config.hpp"
#include "skullstrip/metrics.hpp"
#include "skullstrip/nifti.hpp"
#include "skullstrip/overlay.hpp"
#include "skullstrip/unet.hpp"
#include "skullstrip/volume.hpp"
#include "skullstrip/watershed.hpp"

namespace fs = std::filesystem;
using namespace skullstrip;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitDataTooSmall = 3;
constexpr int kExitPairing = 4;
constexpr int kExitCheckpoint = 5;
constexpr int kExitGeometry = 6;

struct ExitWith {
  int code;
  std::string message;
};

std::string slice_stem(const std::string& out_path) {
  fs::path p(out_path);
  return (p.parent_path() / p.stem()).string();
}

BinaryMask mask_from_slice(const ImageSlice& s) {
  BinaryMask m(s.width, s.height);
  for (size_t i = 0; i < s.size(); ++i) m.bits[i] = s.pixels[i] >= 0.5f ? 1 : 0;
  return m;
}

BinaryMask resize_mask(const BinaryMask& m, int w, int h) {
  if (m.width == w && m.height == h) return m;
  ImageSlice tmp(m.width, m.height);
  for (size_t i = 0; i < tmp.size(); ++i) tmp.pixels[i] = m.bits[i];
  return mask_from_slice(resize_bilinear(tmp, w, h));
}

void run_watershed(const std::string& in_path, const std::string& out_path,
                   const std::string& params_path, std::optional<int> time_index,
                   bool overlay) {
  WatershedParams params;
  if (!params_path.empty()) {
    if (!fs::exists(params_path))
      throw ExitWith{kExitUsage, "params file not found: " + params_path};
    params = watershed_params_from(read_keyvalue_file(params_path));
  }
  const Volume vol = read_volume(in_path);
  if (vol.is_4d() && !time_index) time_index = 0;
  const auto slices = extract_slices(vol, time_index);

  std::vector<std::string> written;
  try {
    std::vector<BinaryMask> masks;
    masks.reserve(slices.size());
    for (const auto& slice : slices) masks.push_back(segment_slice(slice, params));

    Volume tmpl = vol;
    if (vol.is_4d()) {
      tmpl.dims[3] = 1;
      tmpl.data.assign(tmpl.voxel_count(), 0.0f);
    }
    write_volume(assemble_mask_volume(masks, tmpl), out_path);
    written.push_back(out_path);

    if (overlay) {
      const std::string stem = slice_stem(out_path);
      for (size_t z = 0; z < slices.size(); ++z) {
        const std::string p = stem + "_z" + std::to_string(z) + ".ppm";
        write_ppm(render_overlay(slices[z], masks[z]), p);
        written.push_back(p);
      }
    }
  } catch (...) {
    for (const auto& p : written) fs::remove(p);
    throw;
  }
}

std::vector<SamplePair> load_training_pairs(const std::string& data_dir, int input_h,
                                            int input_w) {
  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(data_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".nii") continue;
    const std::string stem = entry.path().stem().string();
    if (stem.size() >= 5 && stem.ends_with("_mask")) continue;
    stems.push_back((entry.path().parent_path() / stem).string());
  }
  std::sort(stems.begin(), stems.end());

  std::vector<SamplePair> pairs;
  for (const auto& stem : stems) {
    const std::string mask_path = stem + "_mask.nii";
    if (!fs::exists(mask_path))
      throw ExitWith{kExitPairing, "no mask volume for stem " + stem};
    const Volume img_vol = read_volume(stem + ".nii");
    const Volume mask_vol = read_volume(mask_path);
    if (img_vol.dims[0] != mask_vol.dims[0] || img_vol.dims[1] != mask_vol.dims[1] ||
        img_vol.dims[2] != mask_vol.dims[2])
      throw ExitWith{kExitGeometry, "image/mask geometry differs for stem " + stem};
    const auto img_slices = extract_slices(img_vol, img_vol.is_4d() ? std::optional<int>(0)
                                                                    : std::nullopt);
    const auto mask_slices = extract_slices(mask_vol);
    for (size_t z = 0; z < mask_slices.size(); ++z) {
      ImageSlice img = normalize(img_slices[z]);
      BinaryMask mask = mask_from_slice(mask_slices[z]);
      if (img.width != input_w || img.height != input_h) {
        img = resize_bilinear(img, input_w, input_h);
        mask = resize_mask(mask, input_w, input_h);
      }
      pairs.emplace_back(std::move(img), std::move(mask));
    }
  }
  return pairs;
}

void write_train_log(const TrainLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot open " + path + " for writing");
  out << "epoch,train_bce,val_bce,val_accuracy,val_precision,val_recall,val_f1,"
         "checkpointed\n";
  out.precision(10);
  for (const auto& rec : log.epochs)
    out << rec.epoch << "," << rec.train_bce << "," << rec.val.bce << ","
        << rec.val.accuracy << "," << rec.val.precision << "," << rec.val.recall << ","
        << rec.val.f1 << "," << (rec.checkpointed ? 1 : 0) << "\n";
}

void run_train(const std::string& data_dir, const std::string& config_path,
               const std::string& out_checkpoint, std::string log_path,
               std::optional<uint32_t> seed_override) {
  KeyValueMap kv;
  if (!config_path.empty()) {
    if (!fs::exists(config_path))
      throw ExitWith{kExitUsage, "config file not found: " + config_path};
    kv = read_keyvalue_file(config_path);
  }
  TrainConfig config = train_config_from(kv);
  if (seed_override) config.seed = *seed_override;
  config.checkpoint_path = out_checkpoint;

  const int depth = kv_get(kv, "depth", 4);
  const int base = kv_get(kv, "base_channels", 16);
  int input_h = kv_get(kv, "input_h", 0);
  int input_w = kv_get(kv, "input_w", 0);

  if (!fs::is_directory(data_dir))
    throw ExitWith{kExitUsage, "data dir not found: " + data_dir};
  if (input_h == 0 || input_w == 0) {
    // infer from the first paired volume
    for (const auto& entry : fs::directory_iterator(data_dir)) {
      if (!entry.is_regular_file() || entry.path().extension() != ".nii") continue;
      if (entry.path().stem().string().ends_with("_mask")) continue;
      const Volume v = read_volume(entry.path().string());
      input_w = v.dims[0];
      input_h = v.dims[1];
      break;
    }
    if (input_h == 0) throw ExitWith{kExitDataTooSmall, "no volumes in " + data_dir};
  }

  auto pairs = load_training_pairs(data_dir, input_h, input_w);
  try {
    UNetModel model = build_unet(depth, base, input_h, input_w, config.seed);
    const TrainLog log = train(model, pairs, config);
    if (log_path.empty()) log_path = out_checkpoint + ".log.csv";
    write_train_log(log, log_path);
    std::cout << "best epoch " << log.best_epoch << " val_bce " << log.best_val_bce
              << "\n";
  } catch (const DatasetTooSmall& e) {
    throw ExitWith{kExitDataTooSmall, e.what()};
  }
}

void run_predict(const std::string& checkpoint_path, const std::string& in_path,
                 const std::string& out_mask_path, const std::string& out_stripped_path,
                 float threshold, std::optional<int> time_index) {
  UNetModel model = [&] {
    try {
      return load_checkpoint(checkpoint_path);
    } catch (const CorruptCheckpoint& e) {
      throw ExitWith{kExitCheckpoint, e.what()};
    } catch (const VersionMismatch& e) {
      throw ExitWith{kExitCheckpoint, e.what()};
    }
  }();

  const Volume vol = read_volume(in_path);
  if (vol.is_4d() && !time_index) time_index = 0;
  const auto slices = extract_slices(vol, time_index);

  std::vector<BinaryMask> masks;
  Volume stripped;
  stripped.dims = {vol.dims[0], vol.dims[1], static_cast<int>(slices.size()), 1};
  stripped.voxel_size = vol.voxel_size;
  stripped.header_bytes = vol.header_bytes;
  stripped.data.resize(stripped.voxel_count());

  for (size_t z = 0; z < slices.size(); ++z) {
    const ImageSlice norm = normalize(slices[z]);
    const ImageSlice resized = resize_bilinear(norm, model.input_w, model.input_h);
    const SoftMask soft_small = predict(model, resized);
    ImageSlice soft_img(soft_small.width, soft_small.height);
    soft_img.pixels = soft_small.probs;
    const ImageSlice soft_back = resize_bilinear(soft_img, vol.dims[0], vol.dims[1]);
    SoftMask soft(vol.dims[0], vol.dims[1]);
    soft.probs = soft_back.pixels;
    masks.push_back(binarize(soft, threshold));
    const ImageSlice strip = apply_soft_mask(norm, soft);
    std::copy(strip.pixels.begin(), strip.pixels.end(),
              stripped.data.begin() + z * strip.size());
  }

  Volume tmpl = stripped;  // same geometry/header, values unused by assemble
  write_volume(assemble_mask_volume(masks, tmpl), out_mask_path);
  if (!out_stripped_path.empty()) write_volume(stripped, out_stripped_path);
}

void run_evaluate(const std::string& pred_path, const std::string& truth_path,
                  const std::string& out_report) {
  const Volume pred = read_volume(pred_path);
  const Volume truth = read_volume(truth_path);
  if (pred.dims != truth.dims)
    throw ExitWith{kExitGeometry, "mask volume geometry differs"};

  const auto pred_slices = extract_slices(pred);
  const auto truth_slices = extract_slices(truth);
  std::vector<std::pair<SoftMask, BinaryMask>> pairs;
  for (size_t z = 0; z < pred_slices.size(); ++z) {
    SoftMask soft(pred.dims[0], pred.dims[1]);
    for (size_t i = 0; i < soft.probs.size(); ++i)
      soft.probs[i] = pred_slices[z].pixels[i] >= 0.5f ? 1.0f : 0.0f;
    pairs.emplace_back(std::move(soft), mask_from_slice(truth_slices[z]));
  }
  const MetricsReport report = compute_report(pairs);
  std::cout << report.to_keyvalue();
  if (!out_report.empty()) {
    std::ofstream out(out_report);
    out << report.to_keyvalue();
    std::ofstream csv(out_report + ".csv");
    csv << MetricsReport::csv_header() << "\n" << report.to_csv_row() << "\n";
  }
}

void run_overlay(const std::string& in_path, const std::string& pred_path,
                 const std::string& truth_path, const std::string& out_prefix,
                 std::optional<int> time_index) {
  const Volume vol = read_volume(in_path);
  const Volume pred = read_volume(pred_path);
  if (vol.dims[0] != pred.dims[0] || vol.dims[1] != pred.dims[1] ||
      vol.dims[2] != pred.dims[2])
    throw ExitWith{kExitGeometry, "image/mask geometry differs"};
  std::optional<Volume> truth;
  if (!truth_path.empty()) {
    truth = read_volume(truth_path);
    if (truth->dims != pred.dims)
      throw ExitWith{kExitGeometry, "truth mask geometry differs"};
  }
  if (vol.is_4d() && !time_index) time_index = 0;
  const auto slices = extract_slices(vol, time_index);
  const auto pred_slices = extract_slices(pred);
  for (size_t z = 0; z < slices.size(); ++z) {
    std::optional<BinaryMask> truth_mask;
    if (truth) truth_mask = mask_from_slice(extract_slices(*truth)[z]);
    const OverlayImage img =
        render_overlay(slices[z], mask_from_slice(pred_slices[z]), truth_mask);
    write_ppm(img, out_prefix + "_z" + std::to_string(z) + ".ppm");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rodent fMRI skull stripping: watershed mask generation, U-Net "
               "training, inference, evaluation, overlays"};
  app.require_subcommand(1);

  std::string in_path, out_path, params_path, config_path, checkpoint_path;
  std::string truth_path, stripped_path, log_path, data_dir, report_path, out_prefix;
  float threshold = 0.5f;
  bool overlay_flag = false;
  int time_index = -1;
  uint32_t seed = 0;
  bool seed_set = false;

  auto* ws = app.add_subcommand("watershed", "Segment a volume per slice");
  ws->add_option("--in", in_path, "input volume")->required();
  ws->add_option("--out", out_path, "output mask volume")->required();
  ws->add_option("--params", params_path, "key=value watershed parameters");
  ws->add_option("--time-index", time_index, "time frame of a 4D volume");
  ws->add_flag("--overlay", overlay_flag, "write per-slice contour PPMs");

  auto* tr = app.add_subcommand("train", "Train a U-Net on paired volumes");
  tr->add_option("--data", data_dir, "directory of <stem>.nii + <stem>_mask.nii")
      ->required();
  tr->add_option("--config", config_path, "key=value training configuration");
  tr->add_option("--out", checkpoint_path, "best checkpoint path")->required();
  tr->add_option("--log", log_path, "training log CSV (default <out>.log.csv)");
  tr->add_option("--seed", seed, "override the config seed")
      ->each([&](const std::string&) { seed_set = true; });

  auto* pr = app.add_subcommand("predict", "Predict brain masks with a checkpoint");
  pr->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  pr->add_option("--in", in_path, "input volume")->required();
  pr->add_option("--out", out_path, "output mask volume")->required();
  pr->add_option("--stripped", stripped_path, "optional skull-stripped volume");
  pr->add_option("--threshold", threshold, "binarization threshold");
  pr->add_option("--time-index", time_index, "time frame of a 4D volume");

  auto* ev = app.add_subcommand("evaluate", "Compare predicted and truth masks");
  ev->add_option("--pred", in_path, "predicted mask volume")->required();
  ev->add_option("--truth", truth_path, "ground-truth mask volume")->required();
  ev->add_option("--out", report_path, "report output path");

  auto* ov = app.add_subcommand("overlay", "Render contour overlays");
  ov->add_option("--in", in_path, "input volume")->required();
  ov->add_option("--pred", out_path, "predicted mask volume")->required();
  ov->add_option("--truth", truth_path, "optional ground-truth mask volume");
  ov->add_option("--out", out_prefix, "output file prefix")->required();
  ov->add_option("--time-index", time_index, "time frame of a 4D volume");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::cerr << (e.get_exit_code() == 0 ? "" : "usage error: ") << e.what() << "\n";
    if (e.get_exit_code() == 0) {
      app.exit(e);
      return 0;
    }
    std::cerr << app.help();
    return kExitUsage;
  }

  std::optional<int> t_index;
  if (time_index >= 0) t_index = time_index;

  try {
    if (ws->parsed())
      run_watershed(in_path, out_path, params_path, t_index, overlay_flag);
    else if (tr->parsed())
      run_train(data_dir, config_path, checkpoint_path, log_path,
                seed_set ? std::optional<uint32_t>(seed) : std::nullopt);
    else if (pr->parsed())
      run_predict(checkpoint_path, in_path, out_path, stripped_path, threshold,
                  t_index);
    else if (ev->parsed())
      run_evaluate(in_path, truth_path, report_path);
    else if (ov->parsed())
      run_overlay(in_path, out_path, truth_path, out_prefix, t_index);
  } catch (const ExitWith& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.code;
  } catch (const DatasetTooSmall& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDataTooSmall;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
