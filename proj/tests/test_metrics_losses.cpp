#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "helpers.hpp"
#include "zoneprior/errors.hpp"
#include "zoneprior/losses.hpp"
#include "zoneprior/metrics.hpp"
#include "zoneprior/segnet.hpp"

using namespace zptest;

namespace {

Eigen::ArrayXi mask_from(std::initializer_list<int> on, int n) {
  Eigen::ArrayXi m = Eigen::ArrayXi::Zero(n);
  for (int i : on) m(i) = 1;
  return m;
}

/// Central differences of f at x, one coordinate at a time.
template <typename F>
MatX<double> numeric_grad(F f, MatX<double> x, double h = 1e-6) {
  MatX<double> g(x.rows(), x.cols());
  for (Index i = 0; i < x.size(); ++i) {
    const double x0 = x.data()[i];
    x.data()[i] = x0 + h;
    const double fp = f(x);
    x.data()[i] = x0 - h;
    const double fm = f(x);
    x.data()[i] = x0;
    g.data()[i] = (fp - fm) / (2 * h);
  }
  return g;
}

double rel_err(const MatX<double>& a, const MatX<double>& b) {
  return (a - b).norm() / std::max(1e-12, std::max(a.norm(), b.norm()));
}

MatX<double> random_probs(Index rows, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  MatX<double> p(rows, kNumClasses);
  for (Index i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
  p.array().colwise() /= p.rowwise().sum().array();
  return p;
}

MatX<double> random_one_hot(Index rows, std::mt19937_64& rng) {
  MatX<double> t = MatX<double>::Zero(rows, kNumClasses);
  for (Index i = 0; i < rows; ++i) t(i, Index(rng() % 3)) = 1.0;
  return t;
}

}  // namespace

TEST_CASE("dice cardinality cases") {
  CHECK(dice(mask_from({1, 2}, 8), mask_from({1, 2}, 8)) == 1.0);
  CHECK(dice(mask_from({1, 2}, 8), mask_from({3, 4}, 8)) == 0.0);
  CHECK(dice(mask_from({0, 1, 2}, 8), mask_from({1, 2, 4, 5, 6}, 8)) == 0.5);
  CHECK(dice(mask_from({}, 8), mask_from({}, 8)) == 1.0);
  CHECK_THROWS_AS(dice(mask_from({}, 8), mask_from({}, 9)), ValidationError);
}

TEST_CASE("dice against a set-counting oracle") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 8 * 8 * 4;
    Eigen::Array<bool, Eigen::Dynamic, 1> p(n), g(n);
    std::set<Index> ps, gs;
    const auto density = rng() % 5;
    for (Index i = 0; i < n; ++i) {
      p(i) = rng() % 5 < density;
      g(i) = rng() % 5 < density;
      if (p(i)) ps.insert(i);
      if (g(i)) gs.insert(i);
    }
    std::size_t both = 0;
    for (Index i : ps) both += gs.count(i);
    const double expected = ps.empty() && gs.empty() ? 1.0 : 2.0 * double(both) / double(ps.size() + gs.size());
    CHECK(dice(p, g) == expected);
  }
}

TEST_CASE("per_class_dice") {
  LabelVolume gt;
  gt.geom = geometry({4, 4, 2});
  gt.labels.setZero(32);
  LabelVolume pred = gt;
  for (int i : {0, 1, 2, 3}) gt.labels(i) = kTz;
  for (int i : {10, 11}) gt.labels(i) = kPz;
  for (int i : {2, 3, 4}) pred.labels(i) = kTz;
  for (int i : {11, 12, 13, 14}) pred.labels(i) = kPz;

  const ZoneDice d = per_class_dice(pred, gt);
  CHECK(d.tz == doctest::Approx(4.0 / 7.0));  // |P|=3, |G|=4, overlap 2
  CHECK(d.pz == doctest::Approx(1.0 / 3.0));  // |P|=4, |G|=2, overlap 1

  const ZoneDice self = per_class_dice(gt, gt);
  CHECK(self.tz == 1.0);
  CHECK(self.pz == 1.0);

  LabelVolume bg = gt;
  bg.labels.setZero();
  const ZoneDice none = per_class_dice(bg, gt);
  CHECK(none.tz == 0.0);
  CHECK(none.pz == 0.0);

  const ZoneDice m = per_class_dice(to_mask_stack<float>(pred), to_mask_stack<float>(gt));
  CHECK(m.tz == d.tz);
  CHECK(m.pz == d.pz);
}

TEST_CASE("aggregate_report, JSON and table") {
  const DiceReport r = aggregate_report({{"a", {0.8, 0.6}}, {"b", {0.9, 0.7}}}, kEncoderLabel, "val");
  CHECK(r.mean_tz == doctest::Approx(0.85));
  CHECK(r.mean_pz == doctest::Approx(0.65));
  const DiceReport one = aggregate_report({{"a", {0.3, 0.4}}});
  CHECK(one.mean_tz == 0.3);
  CHECK(one.mean_pz == 0.4);
  CHECK_THROWS(aggregate_report({}));

  const DiceReport back = DiceReport::from_json(nlohmann::json::parse(r.to_json().dump()));
  CHECK(back.per_case.size() == 2);
  CHECK(back.mean_tz == r.mean_tz);
  CHECK(back.label == r.label);

  DiceReport base = aggregate_report({{"a", {0.85, 0.6}}}, kBaselineLabel);
  DiceReport enc = aggregate_report({{"a", {0.85, 0.67}}}, kEncoderLabel);
  const std::string table = format_dice_table({base, enc});
  CHECK(table.find("Segmentation DICE scores") != std::string::npos);
  CHECK(table.find("| 3D-UNet | 0.85 | 0.60 |") != std::string::npos);
  CHECK(table.find("| 3D-UNet trained with encoder | 0.85 | 0.67 |") != std::string::npos);
  CHECK(table.find("| TZ | PZ |") != std::string::npos);
}

TEST_CASE("loss values") {
  const double eps = 1e-7;
  MatX<double> t = MatX<double>::Zero(10, 2), p = MatX<double>::Constant(10, 2, 0.5);
  CHECK(bce(p, t, eps) == doctest::Approx(std::log(2.0)));
  t(3, 1) = 1.0;
  CHECK(bce(t, t, eps) <= -std::log(1.0 - eps) + 1e-15);

  LossConfig cfg;
  MatX<double> one(1, 3), pred(1, 3);
  one << 0, 0, 1;
  pred << 0.25, 0.25, 0.5;
  CHECK(weighted_cce(pred, one, cfg) == doctest::Approx(6.0 * std::log(2.0)));
  CHECK(weighted_cce(one, one, cfg) == doctest::Approx(0.0).epsilon(1e-6));
  MatX<double> not_one_hot(1, 3);
  not_one_hot << 0.5, 0.5, 0;
  CHECK_THROWS_AS(weighted_cce(pred, not_one_hot, cfg), ValidationError);

  MatX<double> e = MatX<double>::Random(9, 1);
  CHECK(latent_loss(e, e) == 0.0);
  CHECK(latent_loss(MatX<double>((e.array() + 1.0).matrix()), e) == doctest::Approx(1.0));

  CHECK(combined_loss(1.0, 0.5, 0.2) == doctest::Approx(1.1));
  CHECK(combined_loss(1.0, 0.5, 0.0) == 1.0);
  CHECK(combined_loss(1.0, 0.0, 0.2) == 1.0);
  CHECK_THROWS(combined_loss(1.0, 0.5, -0.1));
}

TEST_CASE("global weight schedule") {
  LossConfig cfg;
  for (int e : {0, 7, 49}) CHECK(global_weight_schedule(cfg, e, 50) == 0.2);
  cfg.schedule = WeightSchedule::kLinearDecay;
  CHECK(global_weight_schedule(cfg, 0, 50) == 0.2);
  CHECK(global_weight_schedule(cfg, 49, 50) == 0.0);
  CHECK(global_weight_schedule(cfg, 0, 1) == 0.2);
  CHECK_THROWS(global_weight_schedule(cfg, 50, 50));
  CHECK(parse_schedule("linear") == WeightSchedule::kLinearDecay);
  CHECK_THROWS(parse_schedule("cosine"));
}

TEST_CASE("loss gradients match central differences") {
  std::mt19937_64 rng(4);
  const double eps = 1e-7;
  SUBCASE("bce") {
    MatX<double> p = (MatX<double>::Random(20, 2).array() * 0.45 + 0.5).matrix();
    MatX<double> t = (MatX<double>::Random(20, 2).array() > 0).cast<double>().matrix();
    const auto num = numeric_grad([&](const MatX<double>& x) { return bce(x, t, eps); }, p);
    CHECK(rel_err(bce_grad(p, t, eps), num) < 1e-4);
  }
  SUBCASE("bce through the logistic") {
    MatX<double> z = MatX<double>::Random(20, 2) * 3.0;
    MatX<double> t = (MatX<double>::Random(20, 2).array() > 0).cast<double>().matrix();
    const auto num = numeric_grad([&](const MatX<double>& x) { return bce(nn::sigmoid(x), t, eps); }, z);
    CHECK(rel_err(bce_logit_grad(nn::sigmoid(z), t), num) < 1e-4);
  }
  SUBCASE("weighted cce") {
    const LossConfig cfg;
    const MatX<double> p = random_probs(15, rng), t = random_one_hot(15, rng);
    const auto num = numeric_grad([&](const MatX<double>& x) { return weighted_cce(x, t, cfg); }, p);
    CHECK(rel_err(weighted_cce_grad(p, t, cfg), num) < 1e-4);
  }
  SUBCASE("weighted cce through the softmax") {
    const LossConfig cfg;
    const MatX<double> z = MatX<double>::Random(15, 3) * 2.0, t = random_one_hot(15, rng);
    const auto num =
        numeric_grad([&](const MatX<double>& x) { return weighted_cce(nn::softmax_rows(x), t, cfg); }, z);
    CHECK(rel_err(weighted_cce_logit_grad(nn::softmax_rows(z), t, cfg), num) < 1e-4);
    const MatX<double> p = nn::softmax_rows(z);
    CHECK(rel_err(nn::softmax_rows_backward(p, weighted_cce_grad(p, t, cfg)), num) < 1e-4);
  }
  SUBCASE("latent loss") {
    const MatX<double> a = MatX<double>::Random(12, 2), b = MatX<double>::Random(12, 2);
    const auto num = numeric_grad([&](const MatX<double>& x) { return latent_loss(x, b); }, a);
    CHECK(rel_err(latent_loss_grad(a, b), num) < 1e-4);
  }
}

TEST_CASE("l2 penalty") {
  nn::ParamStore<double> ps;
  ps.add({"k", {2}, true}, (MatX<double>(2, 1) << 1.0, 2.0).finished());
  ps.add({"b", {1}, false}, MatX<double>::Constant(1, 1, 5.0));
  CHECK(l2_penalty(ps, 0.5) == 2.5);
  CHECK(l2_penalty(ps, 0.0) == 0.0);
  ps[0].setZero();
  CHECK(l2_penalty(ps, 0.5) == 0.0);
  CHECK_THROWS(l2_penalty(ps, -1.0));
}
