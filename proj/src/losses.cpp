#include "zoneprior/losses.hpp"

namespace zoneprior {

WeightSchedule parse_schedule(const std::string& name) {
  if (name == "constant") return WeightSchedule::kConstant;
  if (name == "linear" || name == "linear-decay") return WeightSchedule::kLinearDecay;
  throw ValidationError("unknown global-weight schedule '" + name + "' (expected constant|linear)");
}

std::string to_string(WeightSchedule s) { return s == WeightSchedule::kConstant ? "constant" : "linear"; }

void LossConfig::validate() const {
  for (double w : class_weights)
    if (!(w > 0.0)) throw ValidationError("class weights must be > 0");
  if (!(global_weight >= 0.0)) throw ValidationError("global-loss weight must be >= 0");
  if (!(epsilon > 0.0 && epsilon < 1e-3)) throw ValidationError("probability clamp must lie in (0, 1e-3)");
}

double global_weight_schedule(const LossConfig& cfg, int epoch, int total) {
  if (total < 1) throw ValidationError("schedule needs total epochs >= 1");
  if (epoch < 0 || epoch >= total) throw ValidationError("schedule epoch out of range");
  if (cfg.schedule == WeightSchedule::kConstant || total == 1) return cfg.global_weight;
  const double w = cfg.global_weight * (1.0 - double(epoch) / double(total - 1));
  return std::max(w, 0.0);
}

}  // namespace zoneprior
