#include "zoneprior/autoenc.hpp"

namespace zoneprior {

void AeConfig::validate() const {
  if (latent_channels < 1) throw ValidationError("autoencoder needs >= 1 latent channel");
  if (filters[0] < 1 || filters[1] < 1) throw ValidationError("autoencoder filter counts must be >= 1");
  if (input.nx < 1 || input.ny < 1 || input.nz < 1) throw ValidationError("autoencoder input shape must be positive");
}

Shape3 AeConfig::mid_grid() const { return nn::conv_output_shape(input, nn::ConvSpec::halve()); }

Shape3 AeConfig::latent_grid() const { return nn::conv_output_shape(mid_grid(), nn::ConvSpec::halve()); }

void to_json(nlohmann::json& j, const AeConfig& c) {
  j = {{"latent_channels", c.latent_channels},
       {"filters", c.filters},
       {"input", {c.input.nx, c.input.ny, c.input.nz}},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, AeConfig& c) {
  c = AeConfig{};
  c.latent_channels = j.value("latent_channels", c.latent_channels);
  c.filters = j.value("filters", c.filters);
  if (j.contains("input")) {
    const auto v = j.at("input").get<std::array<int, 3>>();
    c.input = {v[0], v[1], v[2]};
  }
  c.seed = j.value("seed", c.seed);
  c.validate();
}

}  // namespace zoneprior
