#include <catch2/catch_amalgamated.hpp>

#include "edgenav/distill.hpp"
#include "edgenav/gradcheck.hpp"
#include "oracles.hpp"

using namespace edgenav;

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

Tensor random_tensor(Shape shape, Rng& rng, bool rg = true, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape), rg);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("det_loss values", "[distill][loss]") {
  SECTION("perfect predictions give near-zero loss") {
    std::vector<ImageGts> gts(1, ImageGts(3));
    gts[0][0] = {true, 0.2, 0.3, 0.6, 0.8};
    Tensor pred = Tensor::zeros({1, 3, 5});
    auto p = pred.data();
    p[0] = 20.0;  // class 0 present, confident
    p[1] = logit(0.2);
    p[2] = logit(0.3);
    p[3] = logit(0.6);
    p[4] = logit(0.8);
    p[5] = -20.0;  // absent classes, confident
    p[10] = -20.0;
    REQUIRE(det_loss(pred, gts).item() < 1e-3);
  }
  SECTION("absent class at logit zero contributes ln 2") {
    std::vector<ImageGts> gts(1, ImageGts(3));
    Tensor pred = Tensor::zeros({1, 3, 5});
    REQUIRE(det_loss(pred, gts).item() == Catch::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SECTION("crafted single-class case matches hand arithmetic") {
    std::vector<ImageGts> gts(1, ImageGts(1));
    gts[0][0] = {true, 0.2, 0.2, 0.6, 0.6};
    Tensor pred = Tensor::zeros({1, 1, 5});
    auto p = pred.data();
    p[0] = 0.4;
    const double bx1 = 0.3, by1 = 0.25, bx2 = 0.7, by2 = 0.65;
    p[1] = logit(bx1);
    p[2] = logit(by1);
    p[3] = logit(bx2);
    p[4] = logit(by2);
    // scalar oracle, mirroring the documented composition
    const double bce = std::log1p(std::exp(0.4)) - 0.4;
    const double iw = std::min(bx2, 0.6) - std::max(bx1, 0.2);
    const double ih = std::min(by2, 0.6) - std::max(by1, 0.2);
    const double inter = iw * ih;
    const double uni = (bx2 - bx1) * (by2 - by1) + 0.4 * 0.4 - inter;
    const double iou = inter / (uni + 1e-9);
    const double l1 = (std::abs(bx1 - 0.2) + std::abs(by1 - 0.2) +
                       std::abs(bx2 - 0.6) + std::abs(by2 - 0.6)) / 4.0;
    const double want = bce + 2.0 * (1.0 - iou) + l1;
    REQUIRE(det_loss(pred, gts).item() == Catch::Approx(want).epsilon(1e-10));
  }
  SECTION("gradients flow and match finite differences") {
    Rng rng(3);
    std::vector<ImageGts> gts(2, ImageGts(3));
    gts[0][1] = {true, 0.1, 0.2, 0.5, 0.7};
    gts[1][0] = {true, 0.4, 0.1, 0.9, 0.6};
    gts[1][2] = {true, 0.05, 0.55, 0.45, 0.95};
    Tensor pred = random_tensor({2, 3, 5}, rng);
    backward(det_loss(pred, gts));
    Tensor fd = finite_diff_grad(
        [&](const Tensor&) { return det_loss(pred, gts).item(); }, pred);
    REQUIRE(grad_max_rel_err(pred.grad(), fd.data()) < 1e-4);
  }
}

TEST_CASE("kd_kl_loss", "[distill][kd]") {
  SECTION("identical logits give exactly zero") {
    Rng rng(4);
    Tensor s = random_tensor({3, 3}, rng, false);
    REQUIRE(kd_kl_loss(s, s.clone(), 2.0).item() == Catch::Approx(0.0).margin(1e-14));
  }
  SECTION("teacher [1,0,0] vs student [0,0,0] at T=1 matches direct arithmetic") {
    Tensor t = Tensor::from_data({1, 3}, {1.0, 0.0, 0.0});
    Tensor s = Tensor::zeros({1, 3});
    const double z = std::exp(1.0) + 2.0;
    double want = 0.0;
    const double probs[3] = {std::exp(1.0) / z, 1.0 / z, 1.0 / z};
    for (int i = 0; i < 3; ++i) want += probs[i] * (std::log(probs[i]) - std::log(1.0 / 3));
    REQUIRE(kd_kl_loss(s, t, 1.0).item() == Catch::Approx(want).epsilon(1e-12));
  }
  SECTION("scaling both logit sets by T recovers T^2 times the T=1 loss") {
    Rng rng(5);
    Tensor t = random_tensor({4, 3}, rng, false);
    Tensor s = random_tensor({4, 3}, rng, false);
    const double T = 2.0;
    Tensor tT = Tensor::zeros({4, 3}), sT = Tensor::zeros({4, 3});
    for (size_t i = 0; i < t.data().size(); ++i) {
      tT.data()[i] = t.data()[i] * T;
      sT.data()[i] = s.data()[i] * T;
    }
    const double scaled = kd_kl_loss(sT, tT, T).item();
    const double base = kd_kl_loss(s, t, 1.0).item();
    REQUIRE(scaled == Catch::Approx(T * T * base).epsilon(1e-10));
  }
  SECTION("non-negative over random logits") {
    Rng rng(6);
    for (int rep = 0; rep < 50; ++rep) {
      Tensor t = random_tensor({2, 3}, rng, false, -4.0, 4.0);
      Tensor s = random_tensor({2, 3}, rng, false, -4.0, 4.0);
      REQUIRE(kd_kl_loss(s, t, 2.0).item() >= -1e-12);
    }
  }
}

TEST_CASE("feat_mse_loss", "[distill][feat]") {
  Rng rng(7);
  Conv2dLayer<double> identity(2, 2, 1, 1, 0, 1, true, rng);
  std::fill(identity.weight.data().begin(), identity.weight.data().end(), 0.0);
  identity.weight.data()[0] = 1.0;  // [out0,in0]
  identity.weight.data()[3] = 1.0;  // [out1,in1]
  std::fill(identity.bias.data().begin(), identity.bias.data().end(), 0.0);

  Tensor feat = random_tensor({1, 2, 3, 3}, rng, false);
  SECTION("identical features with identity adapter give zero") {
    REQUIRE(feat_mse_loss(feat, feat.clone(), identity).item() ==
            Catch::Approx(0.0).margin(1e-15));
  }
  SECTION("constant offset of one gives exactly one") {
    Tensor shifted = feat.clone();
    for (auto& v : shifted.data()) v += 1.0;
    REQUIRE(feat_mse_loss(feat, shifted, identity).item() ==
            Catch::Approx(1.0).epsilon(1e-12));
  }
  SECTION("random pair matches the loop-mean oracle") {
    Tensor other = random_tensor({1, 2, 3, 3}, rng, false);
    double acc = 0;
    for (size_t i = 0; i < feat.data().size(); ++i) {
      const double d = feat.data()[i] - other.data()[i];
      acc += d * d;
    }
    REQUIRE(feat_mse_loss(feat, other, identity).item() ==
            Catch::Approx(acc / feat.numel()).epsilon(1e-12));
  }
  SECTION("spatial mismatch raises a dimension error") {
    Tensor other = random_tensor({1, 2, 4, 4}, rng, false);
    REQUIRE_THROWS_AS(feat_mse_loss(feat, other, identity), DimensionError);
  }
}

TEST_CASE("total_loss composition", "[distill][loss]") {
  KdConfig cfg;
  SECTION("zero weights degenerate to det_loss") {
    cfg.lambda_kd = 0;
    cfg.lambda_feat = 0;
    Tensor det = Tensor::scalar(0.7), kd = Tensor::scalar(5.0), feat = Tensor::scalar(9.0);
    REQUIRE(total_loss(det, kd, feat, cfg).item() == 0.7);
  }
  SECTION("unit components under paper weights sum to 2.25") {
    Tensor one = Tensor::scalar(1.0);
    REQUIRE(total_loss(one, one, one, cfg).item() == Catch::Approx(2.25).margin(1e-15));
  }
  SECTION("exactly linear in each lambda") {
    Rng rng(8);
    Tensor det = Tensor::scalar(rng.uniform(0, 1));
    Tensor kd = Tensor::scalar(rng.uniform(0, 1));
    Tensor feat = Tensor::scalar(rng.uniform(0, 1));
    for (bool vary_kd : {true, false}) {
      double vals[3];
      for (int k = 0; k < 3; ++k) {
        KdConfig c;
        (vary_kd ? c.lambda_kd : c.lambda_feat) = double(k);
        vals[k] = total_loss(det, kd, feat, c).item();
      }
      REQUIRE(vals[2] - vals[1] == Catch::Approx(vals[1] - vals[0]).margin(1e-12));
    }
  }
}

TEST_CASE("decode thresholds", "[distill][decode]") {
  Tensor pred = Tensor::zeros({1, 3, 5});
  SECTION("all confidences at -10 decode to nothing at 0.25") {
    for (int c = 0; c < 3; ++c) pred.data()[c * 5] = -10.0;
    REQUIRE(decode(pred, 0.25)[0].empty());
  }
  SECTION("logit 0 (conf 0.5) passes 0.25 and 0.45, fails 0.6") {
    REQUIRE(decode(pred, 0.25)[0].size() == 3);
    REQUIRE(decode(pred, 0.45)[0].size() == 3);
    REQUIRE(decode(pred, 0.6)[0].empty());
  }
  SECTION("crafted batch matches a brute-force filter; corners are ordered") {
    Rng rng(9);
    Tensor batch = random_tensor({4, 3, 5}, rng, false, -3.0, 3.0);
    for (double thr : {0.25, 0.45}) {
      auto dets = decode(batch, thr);
      for (int64_t i = 0; i < 4; ++i) {
        size_t k = 0;
        for (int64_t c = 0; c < 3; ++c) {
          const double conf =
              1.0 / (1.0 + std::exp(-batch.data()[(i * 3 + c) * 5]));
          if (conf < thr) continue;
          REQUIRE(k < dets[i].size());
          const Detection& d = dets[i][k++];
          REQUIRE(d.class_id == c);
          REQUIRE(d.confidence == Catch::Approx(conf).epsilon(1e-12));
          REQUIRE(d.x1 < d.x2);
          REQUIRE(d.y1 < d.y2);
        }
        REQUIRE(k == dets[i].size());
      }
    }
  }
}

TEST_CASE("compute_map", "[distill][map]") {
  SECTION("exact predictions at confidence 1 give mAP 1") {
    std::vector<ImageGts> gts(3, ImageGts(3));
    std::vector<std::vector<Detection>> dets(3);
    Rng rng(10);
    for (int64_t i = 0; i < 3; ++i)
      for (int64_t c = 0; c < 3; ++c) {
        if (rng.uniform(0.0, 1.0) < 0.3) continue;
        const double x1 = rng.uniform(0.0, 0.5), y1 = rng.uniform(0.0, 0.5);
        gts[i][c] = {true, x1, y1, x1 + 0.3, y1 + 0.3};
        dets[i].push_back({int(c), 1.0, x1, y1, x1 + 0.3, y1 + 0.3});
      }
    REQUIRE(compute_map(dets, gts) == Catch::Approx(1.0).margin(1e-12));
  }
  SECTION("IoU of the spec's box pair is 1/7, so the match is an FP at 0.5") {
    REQUIRE(box_iou(0, 0, 0.2, 0.2, 0.1, 0.1, 0.3, 0.3) ==
            Catch::Approx(1.0 / 7.0).epsilon(1e-12));
    std::vector<ImageGts> gts(1, ImageGts(1));
    gts[0][0] = {true, 0.1, 0.1, 0.3, 0.3};
    std::vector<std::vector<Detection>> dets(1);
    dets[0].push_back({0, 0.9, 0.0, 0.0, 0.2, 0.2});
    REQUIRE(compute_map(dets, gts) == 0.0);
  }
  SECTION("permutation-invariant to image order") {
    Rng rng(11);
    std::vector<ImageGts> gts(5, ImageGts(3));
    std::vector<std::vector<Detection>> dets(5);
    for (int64_t i = 0; i < 5; ++i)
      for (int64_t c = 0; c < 3; ++c) {
        if (rng.uniform(0.0, 1.0) < 0.4) continue;
        const double x1 = rng.uniform(0.0, 0.4), y1 = rng.uniform(0.0, 0.4);
        gts[i][c] = {true, x1, y1, x1 + 0.4, y1 + 0.4};
        const double jx = rng.uniform(-0.15, 0.15), jy = rng.uniform(-0.15, 0.15);
        dets[i].push_back({int(c), rng.uniform(0.1, 1.0), x1 + jx, y1 + jy,
                           x1 + 0.4 + jx, y1 + 0.4 + jy});
      }
    const double base = compute_map(dets, gts);
    std::vector<int64_t> perm = {3, 0, 4, 2, 1};
    std::vector<ImageGts> gts2;
    std::vector<std::vector<Detection>> dets2;
    for (int64_t p : perm) {
      gts2.push_back(gts[p]);
      dets2.push_back(dets[p]);
    }
    REQUIRE(compute_map(dets2, gts2) == Catch::Approx(base).margin(1e-15));
  }
  SECTION("demoting a correct detection below an incorrect one cannot raise mAP") {
    std::vector<ImageGts> gts(2, ImageGts(1));
    gts[0][0] = {true, 0.1, 0.1, 0.5, 0.5};
    gts[1][0] = {true, 0.2, 0.2, 0.6, 0.6};
    std::vector<std::vector<Detection>> dets(2);
    dets[0].push_back({0, 0.9, 0.1, 0.1, 0.5, 0.5});   // TP
    dets[1].push_back({0, 0.5, 0.7, 0.7, 0.95, 0.95}); // FP
    const double before = compute_map(dets, gts);
    dets[0][0].confidence = 0.3;  // now ranked below the FP
    const double after = compute_map(dets, gts);
    REQUIRE(after <= before + 1e-15);
  }
}

TEST_CASE("smoke training run improves validation mAP", "[distill][train]") {
  DatasetOptions dopts;
  dopts.count = 60;
  dopts.image_size = 32;
  dopts.seed = 404;
  Dataset ds = gen_dataset(dopts);

  ModelConfig cfg;
  cfg.depths = {1, 1, 1, 1};
  cfg.channels = {4, 8, 16, 32};
  cfg.d_state = 4;
  cfg.head_width = 16;

  KdConfig kd;
  kd.batch_size = 8;
  kd.lr = 3e-3;

  TrainOptions opts;
  opts.epochs = 2;
  opts.seed = 5;
  opts.augment = false;

  TrainResult res = train_teacher(ds, cfg, kd, opts);
  REQUIRE(res.history.size() == 2);
  REQUIRE(std::isfinite(res.history.back().train_loss));
  REQUIRE(res.history.back().train_loss < res.history.front().train_loss * 1.5);
  REQUIRE(res.best_val_map >= 0.0);

  SECTION("teacher params are bit-identical across distillation") {
    auto before = res.model.parameters().snapshot();
    TrainOptions sopts = opts;
    sopts.epochs = 1;
    KdConfig skd = kd;
    skd.batch_size = 8;
    TrainResult student = distill_student(res.model, ds, cfg, skd, sopts);
    auto after = res.model.parameters().snapshot();
    REQUIRE(before.size() == after.size());
    for (size_t i = 0; i < before.size(); ++i) REQUIRE(before[i] == after[i]);
    REQUIRE(std::isfinite(student.history.back().l_kd));
    REQUIRE(student.history.back().l_feat >= 0.0);
  }
}
