#include "zoneprior/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "zoneprior/manifest.hpp"

namespace zoneprior {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFormat = "zoneprior-checkpoint";

fs::path blob_path(const fs::path& json_path) {
  fs::path p = json_path;
  p.replace_extension(".bin");
  return p;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const fs::path& json_path) {
  std::string blob;
  json tensors = json::array();
  for (int i = 0; i < ckpt.params.size(); ++i) {
    const auto& info = ckpt.params.info(i);
    const auto& m = ckpt.params[i];
    tensors.push_back({{"name", info.name},
                       {"shape", info.shape},
                       {"dtype", "float32"},
                       {"offset", blob.size()},
                       {"kernel", info.is_kernel}});
    // Column-major storage of each matrix already matches the logical C order.
    blob.append(reinterpret_cast<const char*>(m.data()), std::size_t(m.size()) * sizeof(float));
  }
  const fs::path bin = blob_path(json_path);
  write_file_atomic(bin, blob);
  const json doc = {{"format", kFormat},
                    {"version", 1},
                    {"kind", ckpt.kind},
                    {"epoch", ckpt.epoch},
                    {"config", ckpt.config},
                    {"blob", bin.filename().string()},
                    {"tensors", tensors}};
  write_file_atomic(json_path, doc.dump(2) + "\n");
}

Checkpoint load_checkpoint(const fs::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw IoError("cannot open checkpoint " + json_path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw FormatError("checkpoint " + json_path.string() + ": " + e.what());
  }
  if (doc.value("format", "") != kFormat) throw FormatError(json_path.string() + " is not a zoneprior checkpoint");

  const fs::path bin = json_path.parent_path() / doc.at("blob").get<std::string>();
  std::ifstream bin_in(bin, std::ios::binary);
  if (!bin_in) throw IoError("cannot open checkpoint blob " + bin.string());
  std::stringstream ss;
  ss << bin_in.rdbuf();
  const std::string blob = ss.str();

  Checkpoint ckpt;
  ckpt.kind = doc.at("kind").get<std::string>();
  ckpt.epoch = doc.value("epoch", 0);
  ckpt.config = doc.value("config", json::object());
  for (const auto& t : doc.at("tensors")) {
    if (t.at("dtype").get<std::string>() != "float32") throw FormatError("checkpoint tensors must be float32");
    nn::ParamInfo info{t.at("name").get<std::string>(), t.at("shape").get<std::vector<int>>(),
                       t.value("kernel", false)};
    const auto offset = t.at("offset").get<std::size_t>();
    Index count = 1;
    for (int d : info.shape) count *= d;
    if (offset + std::size_t(count) * sizeof(float) > blob.size())
      throw FormatError("checkpoint blob too short for tensor " + info.name);
    // Matrix dimensions are recovered in assign_params; keep a flat column here.
    MatX<float> m(count, 1);
    std::memcpy(m.data(), blob.data() + offset, std::size_t(count) * sizeof(float));
    ckpt.params.add(std::move(info), std::move(m));
  }
  return ckpt;
}

void assign_params(const nn::ParamStore<float>& src, nn::ParamStore<float>& dst) {
  if (src.size() != dst.size()) throw FormatError("checkpoint tensor count does not match the model");
  for (int i = 0; i < dst.size(); ++i) {
    const int j = src.find(dst.info(i).name);
    if (j < 0) throw FormatError("checkpoint lacks tensor " + dst.info(i).name);
    if (src.info(j).shape != dst.info(i).shape || src[j].size() != dst[i].size())
      throw FormatError("checkpoint tensor " + dst.info(i).name + " has the wrong shape");
    std::memcpy(dst[i].data(), src[j].data(), std::size_t(dst[i].size()) * sizeof(float));
  }
}

Checkpoint make_checkpoint(const Autoencoder<float>& ae, int epoch, json extra) {
  json cfg = {{"model", ae.config()}};
  if (!extra.is_null()) cfg.update(extra);
  return {kAutoencoderKind, cfg, epoch, ae.params()};
}

Checkpoint make_checkpoint(const UNet<float>& net, int epoch, json extra) {
  json cfg = {{"model", net.config()}};
  if (!extra.is_null()) cfg.update(extra);
  return {kUnetKind, cfg, epoch, net.params()};
}

Autoencoder<float> load_autoencoder(const fs::path& json_path) {
  const auto ckpt = load_checkpoint(json_path);
  if (ckpt.kind != kAutoencoderKind) throw FormatError(json_path.string() + " is not an autoencoder checkpoint");
  Autoencoder<float> ae(ckpt.config.at("model").get<AeConfig>());
  assign_params(ckpt.params, ae.params());
  return ae;
}

UNet<float> load_unet(const fs::path& json_path) {
  const auto ckpt = load_checkpoint(json_path);
  if (ckpt.kind != kUnetKind) throw FormatError(json_path.string() + " is not a U-Net checkpoint");
  UNet<float> net(ckpt.config.at("model").get<UnetConfig>());
  assign_params(ckpt.params, net.params());
  return net;
}

}  // namespace zoneprior
