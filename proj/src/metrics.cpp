#include "zoneprior/metrics.hpp"

#include <cstdio>

namespace zoneprior {

ZoneDice per_class_dice(const LabelVolume& pred, const LabelVolume& gt) {
  if (!(pred.geom.shape == gt.geom.shape)) throw ValidationError("per_class_dice: grids differ");
  return {dice(pred.labels == std::uint8_t(kTz), gt.labels == std::uint8_t(kTz)),
          dice(pred.labels == std::uint8_t(kPz), gt.labels == std::uint8_t(kPz))};
}

DiceReport aggregate_report(const std::vector<CaseDice>& cases, std::string label, std::string split) {
  if (cases.empty()) throw ValidationError("aggregate_report needs at least one case");
  DiceReport r;
  r.per_case = cases;
  for (const auto& c : cases) {
    r.mean_tz += c.dice.tz;
    r.mean_pz += c.dice.pz;
  }
  r.mean_tz /= double(cases.size());
  r.mean_pz /= double(cases.size());
  r.label = std::move(label);
  r.split = std::move(split);
  return r;
}

nlohmann::json DiceReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& c : per_case) rows.push_back({{"id", c.id}, {"tz", c.dice.tz}, {"pz", c.dice.pz}});
  return {{"per_case", rows}, {"mean_tz", mean_tz}, {"mean_pz", mean_pz}, {"label", label}, {"split", split}};
}

DiceReport DiceReport::from_json(const nlohmann::json& j) {
  DiceReport r;
  for (const auto& row : j.at("per_case"))
    r.per_case.push_back({row.at("id").get<std::string>(), {row.at("tz").get<double>(), row.at("pz").get<double>()}});
  r.mean_tz = j.at("mean_tz").get<double>();
  r.mean_pz = j.at("mean_pz").get<double>();
  r.label = j.value("label", "");
  r.split = j.value("split", "");
  return r;
}

std::string format_dice_table(const std::vector<DiceReport>& reports) {
  std::string out = "Segmentation DICE scores\n\n|  | TZ | PZ |\n|---|---|---|\n";
  char line[256];
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "| %s | %.2f | %.2f |\n", r.label.empty() ? "model" : r.label.c_str(),
                  r.mean_tz, r.mean_pz);
    out += line;
  }
  return out;
}

}  // namespace zoneprior
