#pragma once

#include <string>

#include "skullstrip/augment.hpp"
#include "skullstrip/keyval.hpp"
#include "skullstrip/unet.hpp"
#include "skullstrip/watershed.hpp"

namespace skullstrip {

// key=value bindings for the records the CLI reads and writes

inline WatershedParams watershed_params_from(const KeyValueMap& kv) {
  WatershedParams p;
  p.threshold_level = static_cast<float>(kv_get(kv, "threshold", (double)p.threshold_level));
  p.spatial_radius = kv_get(kv, "spatial_radius", p.spatial_radius);
  p.range_radius = static_cast<float>(kv_get(kv, "range_radius", (double)p.range_radius));
  p.mean_shift_max_iter = kv_get(kv, "mean_shift_max_iter", p.mean_shift_max_iter);
  p.fg_erosions = kv_get(kv, "fg_erosions", p.fg_erosions);
  p.bg_dilations = kv_get(kv, "bg_dilations", p.bg_dilations);
  p.min_area_fraction =
      static_cast<float>(kv_get(kv, "min_area_fraction", (double)p.min_area_fraction));
  p.smooth_gradient = kv_get(kv, "smooth_gradient", p.smooth_gradient);
  return p;
}

inline KeyValueMap to_keyvalue(const WatershedParams& p) {
  KeyValueMap kv;
  kv["threshold"] = std::to_string(p.threshold_level);
  kv["spatial_radius"] = std::to_string(p.spatial_radius);
  kv["range_radius"] = std::to_string(p.range_radius);
  kv["mean_shift_max_iter"] = std::to_string(p.mean_shift_max_iter);
  kv["fg_erosions"] = std::to_string(p.fg_erosions);
  kv["bg_dilations"] = std::to_string(p.bg_dilations);
  kv["min_area_fraction"] = std::to_string(p.min_area_fraction);
  kv["smooth_gradient"] = p.smooth_gradient ? "1" : "0";
  return kv;
}

inline AugmentSpec augment_spec_from(const KeyValueMap& kv) {
  AugmentSpec s;
  s.flip_h = kv_get(kv, "flip_h", s.flip_h);
  s.flip_v = kv_get(kv, "flip_v", s.flip_v);
  s.rotation_deg = static_cast<float>(kv_get(kv, "rotation", (double)s.rotation_deg));
  s.translate_x = static_cast<float>(kv_get(kv, "translate_x", (double)s.translate_x));
  s.translate_y = static_cast<float>(kv_get(kv, "translate_y", (double)s.translate_y));
  s.scale = static_cast<float>(kv_get(kv, "scale", (double)s.scale));
  s.elastic_alpha =
      static_cast<float>(kv_get(kv, "elastic_alpha", (double)s.elastic_alpha));
  s.elastic_sigma =
      static_cast<float>(kv_get(kv, "elastic_sigma", (double)s.elastic_sigma));
  s.seed = static_cast<uint32_t>(kv_get(kv, "seed", 0));
  return s;
}

inline KeyValueMap to_keyvalue(const AugmentSpec& s) {
  KeyValueMap kv;
  kv["flip_h"] = s.flip_h ? "1" : "0";
  kv["flip_v"] = s.flip_v ? "1" : "0";
  kv["rotation"] = std::to_string(s.rotation_deg);
  kv["translate_x"] = std::to_string(s.translate_x);
  kv["translate_y"] = std::to_string(s.translate_y);
  kv["scale"] = std::to_string(s.scale);
  kv["elastic_alpha"] = std::to_string(s.elastic_alpha);
  kv["elastic_sigma"] = std::to_string(s.elastic_sigma);
  kv["seed"] = std::to_string(s.seed);
  return kv;
}

inline TrainConfig train_config_from(const KeyValueMap& kv) {
  TrainConfig c;
  c.learning_rate = kv_get(kv, "learning_rate", c.learning_rate);
  c.batch_size = kv_get(kv, "batch_size", c.batch_size);
  c.epochs = kv_get(kv, "epochs", c.epochs);
  c.val_fraction = kv_get(kv, "val_fraction", c.val_fraction);
  c.seed = static_cast<uint32_t>(kv_get(kv, "seed", 0));
  c.augment_fraction =
      static_cast<float>(kv_get(kv, "augment_fraction", (double)c.augment_fraction));
  c.early_stop_f1 = kv_get(kv, "early_stop_f1", c.early_stop_f1);
  c.early_stop_max_bce = kv_get(kv, "early_stop_max_bce", c.early_stop_max_bce);
  return c;
}

}  // namespace skullstrip
