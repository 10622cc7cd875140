#include "zoneprior/segnet.hpp"

namespace zoneprior {

void UnetConfig::validate() const {
  for (int f : filters)
    if (f < 1) throw ValidationError("U-Net filter counts must be >= 1");
  if (input.nx < 1 || input.ny < 1 || input.nz < 1) throw ValidationError("U-Net input shape must be positive");
  if (!(l2 >= 0.0)) throw ValidationError("L2 coefficient must be >= 0");
}

std::array<Shape3, 3> UnetConfig::level_grids() const {
  const Shape3 g1 = nn::MaxPool2::output_shape(input);
  return {input, g1, nn::MaxPool2::output_shape(g1)};
}

void to_json(nlohmann::json& j, const UnetConfig& c) {
  j = {{"filters", c.filters}, {"input", {c.input.nx, c.input.ny, c.input.nz}}, {"l2", c.l2}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, UnetConfig& c) {
  c = UnetConfig{};
  c.filters = j.value("filters", c.filters);
  if (j.contains("input")) {
    const auto v = j.at("input").get<std::array<int, 3>>();
    c.input = {v[0], v[1], v[2]};
  }
  c.l2 = j.value("l2", c.l2);
  c.seed = j.value("seed", c.seed);
  c.validate();
}

}  // namespace zoneprior
