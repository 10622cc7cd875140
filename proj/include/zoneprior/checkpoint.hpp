#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "zoneprior/autoenc.hpp"
#include "zoneprior/nn/tensor.hpp"
#include "zoneprior/segnet.hpp"

namespace zoneprior {

inline constexpr const char* kAutoencoderKind = "autoencoder";
inline constexpr const char* kUnetKind = "unet";

/// Named float32 tensors plus the configuration needed to rebuild the model.
///
/// On disk: `<stem>.json` holds {format, kind, epoch, config, blob, tensors:
/// [{name, shape, dtype, offset}]} and `<stem>.bin` the little-endian float32
/// data. Each tensor is stored in C order of its logical shape.
struct Checkpoint {
  std::string kind;
  nlohmann::json config;
  int epoch = 0;
  nn::ParamStore<float> params;
};

/// Writes blob then manifest, each via temp-file + rename.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& json_path);
Checkpoint load_checkpoint(const std::filesystem::path& json_path);

/// Copies tensors into `dst` by name; every name and shape must match.
void assign_params(const nn::ParamStore<float>& src, nn::ParamStore<float>& dst);

Checkpoint make_checkpoint(const Autoencoder<float>& ae, int epoch, nlohmann::json extra = {});
Checkpoint make_checkpoint(const UNet<float>& net, int epoch, nlohmann::json extra = {});

Autoencoder<float> load_autoencoder(const std::filesystem::path& json_path);
UNet<float> load_unet(const std::filesystem::path& json_path);

}  // namespace zoneprior
