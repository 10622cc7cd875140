#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "zoneprior/volgrid.hpp"

namespace zoneprior {

/// DICE = 2|P∩G| / (|P|+|G|) over nonzero entries; 1.0 when both are empty.
template <typename DerivedP, typename DerivedG>
double dice(const Eigen::DenseBase<DerivedP>& p, const Eigen::DenseBase<DerivedG>& g) {
  if (p.rows() != g.rows() || p.cols() != g.cols()) throw ValidationError("dice: mask shapes differ");
  const auto pb = (p.derived().array() != 0);
  const auto gb = (g.derived().array() != 0);
  const Index np = pb.count(), ng = gb.count();
  if (np + ng == 0) return 1.0;
  const Index both = (pb && gb).count();
  return 2.0 * double(both) / double(np + ng);
}

struct ZoneDice {
  double tz = 0.0;
  double pz = 0.0;
};

ZoneDice per_class_dice(const LabelVolume& pred, const LabelVolume& gt);

/// Masks are binarized at 0.5 before scoring.
template <typename Scalar>
ZoneDice per_class_dice(const MaskStackT<Scalar>& pred, const MaskStackT<Scalar>& gt) {
  const auto pb = (pred.masks.array() > Scalar(0.5)).eval();
  const auto gb = (gt.masks.array() > Scalar(0.5)).eval();
  return {dice(pb.col(0), gb.col(0)), dice(pb.col(1), gb.col(1))};
}

struct CaseDice {
  std::string id;
  ZoneDice dice;
};

/// Row labels used by the two-run comparison table.
inline constexpr const char* kBaselineLabel = "3D-UNet";
inline constexpr const char* kEncoderLabel = "3D-UNet trained with encoder";

struct DiceReport {
  std::vector<CaseDice> per_case;
  double mean_tz = 0.0;
  double mean_pz = 0.0;
  std::string label;  // model row label
  std::string split;  // which cases were scored

  std::size_t case_count() const { return per_case.size(); }
  nlohmann::json to_json() const;
  static DiceReport from_json(const nlohmann::json& j);
};

/// Unweighted per-case means. Throws on an empty list.
DiceReport aggregate_report(const std::vector<CaseDice>& cases, std::string label = "", std::string split = "");

/// Markdown table with one row per report and TZ / PZ columns.
std::string format_dice_table(const std::vector<DiceReport>& reports);

}  // namespace zoneprior
