// Detection loss stack, knowledge-distillation losses, decoding, mAP, and the
// teacher-then-student training procedure.
#pragma once

#include <map>

#include "edgenav/detector.hpp"
#include "edgenav/scenegen.hpp"

namespace edgenav {

struct KdConfig {
  double temperature = 2.0;
  double lambda_kd = 1.0;
  double lambda_feat = 0.25;
  double lr = 1e-4;
  int64_t batch_size = 32;
  double conf_threshold_low = 0.25;
  double conf_threshold_high = 0.45;
  // reduce-on-plateau keyed to validation mAP
  int64_t plateau_patience = 5;
  double lr_factor = 0.5;
  double lr_floor = 1e-6;

  void validate() const {
    if (temperature <= 0) throw ConfigError("KdConfig: temperature must be positive");
    if (lambda_kd < 0 || lambda_feat < 0)
      throw ConfigError("KdConfig: loss weights must be non-negative");
    if (batch_size < 1 || lr <= 0) throw ConfigError("KdConfig: bad lr/batch size");
  }
};

struct GroundTruthBox {
  bool present = false;
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

// one entry per class
using ImageGts = std::vector<GroundTruthBox>;

inline ImageGts image_gts_from_labels(const std::vector<LabelBox>& labels, int64_t n) {
  ImageGts gts(n);
  for (const auto& lb : labels) {
    if (lb.class_id < 0 || lb.class_id >= n)
      throw ContractError("ground truth class out of range");
    auto& g = gts[lb.class_id];
    if (g.present) throw ContractError("more than one instance of class " +
                                       std::to_string(lb.class_id));
    g = {true, lb.x1, lb.y1, lb.x2, lb.y2};
  }
  return gts;
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

namespace detail_loss {

template <typename T>
TensorT<T> relu0(const TensorT<T>& x) {
  return maximum(x, TensorT<T>::zeros(x.shape()));
}

}  // namespace detail_loss

// BCE on per-class confidence vs presence, plus (present classes only) an IoU
// term 2*(1-IoU) and an L1 term on the sigmoid corners (mean over the four).
// BCE averages over all (image, class) slots; box terms over present slots.
template <typename T>
TensorT<T> det_loss(const TensorT<T>& pred, const std::vector<ImageGts>& gts) {
  const int64_t n = pred.dim(0), cls = pred.dim(1);
  if (pred.ndim() != 3 || pred.dim(2) != 5 ||
      static_cast<int64_t>(gts.size()) != n)
    throw DimensionError("det_loss: pred must be [N,n,5] with matching ground truth");
  TensorT<T> present = TensorT<T>::zeros({n, cls, 1});
  TensorT<T> gx1 = TensorT<T>::zeros({n, cls, 1}), gy1 = gx1.clone(),
             gx2 = TensorT<T>::full({n, cls, 1}, T(1)), gy2 = gx2.clone();
  int64_t num_present = 0;
  for (int64_t i = 0; i < n; ++i) {
    if (static_cast<int64_t>(gts[i].size()) != cls)
      throw DimensionError("det_loss: ground truth class count mismatch");
    for (int64_t c = 0; c < cls; ++c) {
      const auto& g = gts[i][c];
      if (!g.present) continue;
      ++num_present;
      present.data()[i * cls + c] = T(1);
      gx1.data()[i * cls + c] = static_cast<T>(g.x1);
      gy1.data()[i * cls + c] = static_cast<T>(g.y1);
      gx2.data()[i * cls + c] = static_cast<T>(g.x2);
      gy2.data()[i * cls + c] = static_cast<T>(g.y2);
    }
  }

  TensorT<T> conf = slice_lastdim(pred, 0, 1);
  TensorT<T> bce = mean(sub(softplus(conf), mul(conf, present)));

  TensorT<T> raw = sigmoid(slice_lastdim(pred, 1, 4));
  TensorT<T> px1 = slice_lastdim(raw, 0, 1), py1 = slice_lastdim(raw, 1, 1),
             px2 = slice_lastdim(raw, 2, 1), py2 = slice_lastdim(raw, 3, 1);
  TensorT<T> x1 = minimum(px1, px2), x2 = maximum(px1, px2);
  TensorT<T> y1 = minimum(py1, py2), y2 = maximum(py1, py2);

  TensorT<T> iw = detail_loss::relu0(sub(minimum(x2, gx2), maximum(x1, gx1)));
  TensorT<T> ih = detail_loss::relu0(sub(minimum(y2, gy2), maximum(y1, gy1)));
  TensorT<T> inter = mul(iw, ih);
  TensorT<T> area_p = mul(sub(x2, x1), sub(y2, y1));
  TensorT<T> area_g = mul(sub(gx2, gx1), sub(gy2, gy1));
  TensorT<T> iou = div(inter, add_scalar(sub(add(area_p, area_g), inter), T(1e-9)));
  TensorT<T> l1 = scale(add(add(abs(sub(x1, gx1)), abs(sub(y1, gy1))),
                            add(abs(sub(x2, gx2)), abs(sub(y2, gy2)))),
                        T(0.25));
  TensorT<T> box_elem = add(scale(sub(TensorT<T>::full(iou.shape(), T(1)), iou), T(2)), l1);
  TensorT<T> box = scale(sum(mul(box_elem, present)),
                         T(1) / static_cast<T>(std::max<int64_t>(1, num_present)));
  return add(bce, box);
}

// T^2 * KL(softmax(teacher/T) || softmax(student/T)), batch-averaged. Teacher
// logits are treated as constants.
template <typename T>
TensorT<T> kd_kl_loss(const TensorT<T>& student_logits, const TensorT<T>& teacher_logits,
                      double temperature) {
  if (student_logits.shape() != teacher_logits.shape() || student_logits.ndim() != 2)
    throw DimensionError("kd_kl_loss: logit shapes must match, got " +
                         shape_str(student_logits.shape()) + " vs " +
                         shape_str(teacher_logits.shape()));
  if (temperature <= 0) throw ContractError("kd_kl_loss: temperature must be positive");
  const int64_t n = student_logits.dim(0), k = student_logits.dim(1);
  // teacher side: plain stable softmax and its entropy sum
  TensorT<T> p = TensorT<T>::zeros({n, k});
  double p_logp = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double mx = -1e300;
    for (int64_t j = 0; j < k; ++j)
      mx = std::max(mx, double(teacher_logits.data()[i * k + j]) / temperature);
    double z = 0;
    for (int64_t j = 0; j < k; ++j)
      z += std::exp(double(teacher_logits.data()[i * k + j]) / temperature - mx);
    for (int64_t j = 0; j < k; ++j) {
      const double lp = double(teacher_logits.data()[i * k + j]) / temperature - mx -
                        std::log(z);
      p.data()[i * k + j] = static_cast<T>(std::exp(lp));
      p_logp += std::exp(lp) * lp;
    }
  }
  TensorT<T> log_q = log_softmax_lastdim(scale(student_logits, T(1.0 / temperature)));
  TensorT<T> cross = neg(sum(mul(p, log_q)));
  return scale(add_scalar(cross, static_cast<T>(p_logp)),
               static_cast<T>(temperature * temperature / double(n)));
}

// MSE between teacher features and adapter-projected student features.
template <typename T>
TensorT<T> feat_mse_loss(const TensorT<T>& student_feat, const TensorT<T>& teacher_feat,
                         const Conv2dLayer<T>& adapter) {
  if (student_feat.ndim() != 4 || teacher_feat.ndim() != 4 ||
      student_feat.dim(2) != teacher_feat.dim(2) ||
      student_feat.dim(3) != teacher_feat.dim(3))
    throw DimensionError("feat_mse_loss: spatial dims must match, got " +
                         shape_str(student_feat.shape()) + " vs " +
                         shape_str(teacher_feat.shape()));
  TensorT<T> diff = sub(adapter.forward(student_feat), teacher_feat);
  return mean(mul(diff, diff));
}

// L = L_det + lambda_kd * L_KD + lambda_feat * L_feat
template <typename T>
TensorT<T> total_loss(const TensorT<T>& det, const TensorT<T>& kd, const TensorT<T>& feat,
                      const KdConfig& cfg) {
  return add(det, add(scale(kd, static_cast<T>(cfg.lambda_kd)),
                      scale(feat, static_cast<T>(cfg.lambda_feat))));
}

// ---------------------------------------------------------------------------
// decoding and mAP
// ---------------------------------------------------------------------------

// Per class: emit a Detection when sigmoid(conf) clears the threshold, with
// corners sigmoided and ordered (exact ties widened by an epsilon so emitted
// boxes always satisfy x1<x2, y1<y2).
template <typename T>
std::vector<std::vector<Detection>> decode(const TensorT<T>& pred, double conf_threshold) {
  if (pred.ndim() != 3 || pred.dim(2) != 5)
    throw DimensionError("decode: pred must be [N,n,5]");
  const int64_t n = pred.dim(0), cls = pred.dim(1);
  std::vector<std::vector<Detection>> out(n);
  auto sig = [](double v) { return detail::stable_sigmoid(v); };
  for (int64_t i = 0; i < n; ++i)
    for (int64_t c = 0; c < cls; ++c) {
      const T* row = &pred.data()[(i * cls + c) * 5];
      const double conf = sig(double(row[0]));
      if (conf < conf_threshold) continue;
      Detection det;
      det.class_id = static_cast<int>(c);
      det.confidence = conf;
      double x1 = sig(double(row[1])), y1 = sig(double(row[2]));
      double x2 = sig(double(row[3])), y2 = sig(double(row[4]));
      if (x1 > x2) std::swap(x1, x2);
      if (y1 > y2) std::swap(y1, y2);
      if (x2 <= x1) x2 = std::min(1.0, x1 + 1e-9), x1 = x2 - 1e-9;
      if (y2 <= y1) y2 = std::min(1.0, y1 + 1e-9), y1 = y2 - 1e-9;
      det.x1 = x1;
      det.y1 = y1;
      det.x2 = x2;
      det.y2 = y2;
      out[i].push_back(det);
    }
  return out;
}

inline double box_iou(double ax1, double ay1, double ax2, double ay2, double bx1,
                      double by1, double bx2, double by2) {
  const double iw = std::min(ax2, bx2) - std::max(ax1, bx1);
  const double ih = std::min(ay2, by2) - std::max(ay1, by1);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni =
      (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

// Ranked-sweep average precision with all-point interpolation: detections are
// sorted by confidence over the whole set, greedily matched against each
// image's single ground-truth box per class, and AP is the area under the
// interpolated precision-recall curve. mAP averages classes with >=1 GT.
inline double compute_map(const std::vector<std::vector<Detection>>& dets_per_image,
                          const std::vector<ImageGts>& gts_per_image,
                          double iou_thresh = 0.5) {
  if (dets_per_image.size() != gts_per_image.size())
    throw DimensionError("compute_map: image counts differ");
  const int64_t images = static_cast<int64_t>(gts_per_image.size());
  if (images == 0) return 0.0;
  const int64_t n_cls = static_cast<int64_t>(gts_per_image[0].size());
  double ap_sum = 0.0;
  int64_t classes_with_gt = 0;
  for (int64_t c = 0; c < n_cls; ++c) {
    int64_t total_gt = 0;
    for (const auto& gts : gts_per_image) total_gt += gts[c].present ? 1 : 0;
    if (total_gt == 0) continue;
    ++classes_with_gt;
    struct Entry {
      double conf;
      int64_t image;
      int64_t rank_in_image;
    };
    std::vector<Entry> entries;
    for (int64_t i = 0; i < images; ++i) {
      int64_t r = 0;
      for (const auto& det : dets_per_image[i])
        if (det.class_id == c) entries.push_back({det.confidence, i, r++});
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
      if (a.conf != b.conf) return a.conf > b.conf;
      if (a.image != b.image) return a.image < b.image;
      return a.rank_in_image < b.rank_in_image;
    });
    std::vector<char> matched(images, 0);
    std::vector<double> precision, recall;
    int64_t tp = 0, fp = 0;
    for (const auto& e : entries) {
      // find this detection again (entries store only identity)
      int64_t seen = 0;
      const Detection* det = nullptr;
      for (const auto& d : dets_per_image[e.image])
        if (d.class_id == c && seen++ == e.rank_in_image) {
          det = &d;
          break;
        }
      const auto& g = gts_per_image[e.image][c];
      bool is_tp = false;
      if (g.present && !matched[e.image]) {
        const double iou =
            box_iou(det->x1, det->y1, det->x2, det->y2, g.x1, g.y1, g.x2, g.y2);
        if (iou >= iou_thresh) {
          is_tp = true;
          matched[e.image] = 1;
        }
      }
      is_tp ? ++tp : ++fp;
      precision.push_back(double(tp) / double(tp + fp));
      recall.push_back(double(tp) / double(total_gt));
    }
    double ap = 0.0;
    double prev_recall = 0.0;
    for (size_t k = 0; k < recall.size(); ++k) {
      double p_interp = 0.0;
      for (size_t j = k; j < precision.size(); ++j)
        p_interp = std::max(p_interp, precision[j]);
      ap += (recall[k] - prev_recall) * p_interp;
      prev_recall = recall[k];
    }
    ap_sum += ap;
  }
  return classes_with_gt > 0 ? ap_sum / double(classes_with_gt) : 0.0;
}


// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

struct TrainOptions {
  int64_t epochs = 30;
  uint64_t seed = 0;
  bool augment = true;
  std::string csv_path;    // per-epoch log; empty disables
  std::string dump_dir;    // periodic decoded-detection dumps; empty disables
  int64_t dump_every = 0;  // in epochs; 0 disables
  double early_stop_map = 2.0;  // stop once val mAP clears this (2.0 = never)
  int64_t max_batches_per_epoch = 0;  // 0 = full epoch
  bool verbose = false;
};

struct EpochStats {
  int64_t epoch = 0;
  double train_loss = 0, l_det = 0, l_kd = 0, l_feat = 0, val_map = 0, lr = 0;
};

struct TrainResult {
  DetectorModel<double> model;
  double best_val_map = 0.0;
  std::vector<EpochStats> history;
};

namespace detail_train {

// Converts a batch of images to a normalized [B,3,S,S] tensor plus ground
// truth, with optional horizontal flip and per-channel color jitter.
inline std::pair<Tensor, std::vector<ImageGts>> make_batch(
    const std::vector<const LabeledImage*>& items, const Dataset& ds, int64_t n_cls,
    bool augment, Rng& rng) {
  const int64_t b = static_cast<int64_t>(items.size());
  const int64_t s = ds.image_size;
  Tensor batch = Tensor::zeros({b, 3, s, s});
  std::vector<ImageGts> gts(b);
  for (int64_t i = 0; i < b; ++i) {
    const LabeledImage& li = *items[i];
    const bool flip = augment && rng.uniform(0.0, 1.0) < 0.5;
    double jitter[3] = {1.0, 1.0, 1.0};
    if (augment)
      for (double& j : jitter) j = rng.uniform(0.92, 1.08);
    for (int64_t y = 0; y < s; ++y)
      for (int64_t x = 0; x < s; ++x) {
        const uint8_t* px = li.image.px(flip ? s - 1 - x : x, y);
        for (int c = 0; c < 3; ++c) {
          const double v = px[c] / 255.0 * jitter[c];
          batch.data()[((i * 3 + c) * s + y) * s + x] =
              (v - ds.norm_mean[c]) / ds.norm_std[c];
        }
      }
    std::vector<LabelBox> labels = li.labels;
    if (flip)
      for (auto& lb : labels) {
        const double x1 = 1.0 - lb.x2, x2 = 1.0 - lb.x1;
        lb.x1 = x1;
        lb.x2 = x2;
      }
    gts[i] = image_gts_from_labels(labels, n_cls);
  }
  return {std::move(batch), std::move(gts)};
}

}  // namespace detail_train

// Validation mAP@0.5 for a model over one split.
inline double eval_map(const DetectorModel<double>& model,
                       const std::vector<LabeledImage>& split, const Dataset& ds,
                       int64_t batch_size = 32) {
  if (split.empty()) return 0.0;
  NoGradGuard ng;
  Rng null_rng(0);
  std::vector<std::vector<Detection>> dets;
  std::vector<ImageGts> gts;
  for (size_t off = 0; off < split.size(); off += batch_size) {
    std::vector<const LabeledImage*> items;
    for (size_t i = off; i < std::min(split.size(), off + batch_size); ++i)
      items.push_back(&split[i]);
    auto [batch, batch_gts] = detail_train::make_batch(items, ds, model.cfg.num_classes,
                                                       false, null_rng);
    auto out = model.forward(batch);
    auto batch_dets = decode(out.pred, 0.0);
    dets.insert(dets.end(), batch_dets.begin(), batch_dets.end());
    gts.insert(gts.end(), batch_gts.begin(), batch_gts.end());
  }
  return compute_map(dets, gts, 0.5);
}

namespace detail_train {

inline void dump_detections(const std::string& dir, int64_t epoch,
                            const DetectorModel<double>& model, const Dataset& ds,
                            const KdConfig& kd) {
  namespace fs = std::filesystem;
  NoGradGuard ng;
  Rng null_rng(0);
  for (double thr : {kd.conf_threshold_low, kd.conf_threshold_high}) {
    char sub[32];
    std::snprintf(sub, sizeof(sub), "epoch_%03lld/t%03d", static_cast<long long>(epoch),
                  static_cast<int>(thr * 100 + 0.5));
    const fs::path out_dir = fs::path(dir) / sub;
    fs::create_directories(out_dir);
    const int64_t limit = std::min<int64_t>(16, ds.val.size());
    for (int64_t i = 0; i < limit; ++i) {
      std::vector<const LabeledImage*> items = {&ds.val[i]};
      auto [batch, gts] = make_batch(items, ds, model.cfg.num_classes, false, null_rng);
      auto decoded = decode(model.forward(batch).pred, thr);
      std::ofstream f(out_dir / (scene_id(i) + ".txt"));
      for (const auto& det : decoded[0])
        f << det.class_id << ' ' << fmt_g17(det.confidence) << ' ' << fmt_g17(det.x1)
          << ' ' << fmt_g17(det.y1) << ' ' << fmt_g17(det.x2) << ' ' << fmt_g17(det.y2)
          << '\n';
    }
  }
}

// Shared teacher/student loop. `teacher` null trains with the detection loss
// alone; otherwise Eq-style distillation with a learned 1x1 feature adapter.
inline TrainResult run_detection_training(DetectorModel<double> model,
                                          const DetectorModel<double>* teacher,
                                          const Dataset& ds, const KdConfig& kd,
                                          const TrainOptions& opts) {
  kd.validate();
  if (ds.train.empty()) throw ContractError("training requires a non-empty dataset");
  const int64_t n_cls = model.cfg.num_classes;
  const bool use_kd = teacher != nullptr && (kd.lambda_kd > 0 || kd.lambda_feat > 0);

  Rng adapter_rng(derive_seed(opts.seed, 91));
  Conv2dLayer<double> adapter;
  if (use_kd)
    adapter = Conv2dLayer<double>(model.cfg.channels[2], teacher->cfg.channels[2], 1, 1,
                                  0, 1, true, adapter_rng);

  ParamMap<double> params = model.parameters();
  if (use_kd) adapter.collect("feat_adapter", params);
  Adam<double> opt(params, kd.lr);

  ParamMap<double> teacher_params;
  if (teacher) {
    teacher_params = teacher->parameters();
    teacher_params.set_requires_grad(false);
    teacher_params.clear_grad();  // any buffer materializing again is a freeze break
  }

  CsvWriter csv;
  if (!opts.csv_path.empty())
    csv.open(opts.csv_path,
             {"epoch", "train_loss", "L_det", "L_KD", "L_feat", "val_mAP", "lr"});

  TrainResult result;
  result.model = model;
  std::vector<std::vector<double>> best_snapshot = model.parameters().snapshot();
  double best_map = -1.0;
  int64_t epochs_since_improve = 0;
  double lr = kd.lr;

  std::vector<int64_t> order(ds.train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int64_t epoch = 0; epoch < opts.epochs; ++epoch) {
    Rng epoch_rng(derive_seed(opts.seed, 1000 + epoch));
    std::shuffle(order.begin(), order.end(), epoch_rng.engine());
    double sum_loss = 0, sum_det = 0, sum_kd = 0, sum_feat = 0;
    int64_t batches = 0;
    for (size_t off = 0; off < order.size(); off += kd.batch_size) {
      if (opts.max_batches_per_epoch > 0 && batches >= opts.max_batches_per_epoch) break;
      std::vector<const LabeledImage*> items;
      for (size_t i = off; i < std::min(order.size(), off + kd.batch_size); ++i)
        items.push_back(&ds.train[order[i]]);
      auto [batch, gts] = make_batch(items, ds, n_cls, opts.augment, epoch_rng);

      auto out = model.forward(batch);
      Tensor l_det = det_loss(out.pred, gts);
      Tensor l_kd = Tensor::scalar(0.0), l_feat = Tensor::scalar(0.0);
      if (use_kd) {
        Tensor t_pred, t_feat;
        {
          NoGradGuard ng;
          auto t_out = teacher->forward(batch);
          t_pred = t_out.pred;
          t_feat = t_out.stage3_feat;
        }
        const int64_t b = batch.dim(0);
        Tensor s_logits = reshape(slice_lastdim(out.pred, 0, 1), {b, n_cls});
        Tensor t_logits = reshape(slice_lastdim(t_pred, 0, 1), {b, n_cls});
        l_kd = kd_kl_loss(s_logits, t_logits, kd.temperature);
        l_feat = feat_mse_loss(out.stage3_feat, t_feat, adapter);
      }
      Tensor loss = total_loss(l_det, l_kd, l_feat, kd);
      if (!std::isfinite(loss.item()))
        throw ContractError("non-finite loss at epoch " + std::to_string(epoch) +
                            " batch " + std::to_string(batches));
      opt.zero_grad();
      backward(loss);
      opt.step();
      if (teacher)
        for (auto& [name, p] : teacher_params.items)
          if (p.has_grad())
            throw ContractError("gradient written to frozen teacher parameter " + name);
      sum_loss += loss.item();
      sum_det += l_det.item();
      sum_kd += l_kd.item();
      sum_feat += l_feat.item();
      ++batches;
    }

    const double val_map = eval_map(model, ds.val, ds);
    EpochStats st;
    st.epoch = epoch;
    st.train_loss = sum_loss / std::max<int64_t>(1, batches);
    st.l_det = sum_det / std::max<int64_t>(1, batches);
    st.l_kd = sum_kd / std::max<int64_t>(1, batches);
    st.l_feat = sum_feat / std::max<int64_t>(1, batches);
    st.val_map = val_map;
    st.lr = lr;
    result.history.push_back(st);
    if (csv.is_open())
      csv.write_row({std::to_string(epoch), fmt_g17(st.train_loss), fmt_g17(st.l_det),
                     fmt_g17(st.l_kd), fmt_g17(st.l_feat), fmt_g17(val_map),
                     fmt_g17(lr)});
    if (opts.verbose)
      std::fprintf(stderr, "epoch %lld loss %.4f det %.4f kd %.4f feat %.4f mAP %.4f lr %.2g\n",
                   static_cast<long long>(epoch), st.train_loss, st.l_det, st.l_kd,
                   st.l_feat, val_map, lr);
    if (!opts.dump_dir.empty() && opts.dump_every > 0 && epoch % opts.dump_every == 0)
      dump_detections(opts.dump_dir, epoch, model, ds, kd);

    if (val_map > best_map) {
      best_map = val_map;
      best_snapshot = model.parameters().snapshot();
      epochs_since_improve = 0;
    } else if (++epochs_since_improve >= kd.plateau_patience) {
      lr = std::max(kd.lr_floor, lr * kd.lr_factor);
      opt.set_lr(lr);
      epochs_since_improve = 0;
    }
    if (val_map >= opts.early_stop_map) break;
  }

  ParamMap<double> final_params = result.model.parameters();
  final_params.restore(best_snapshot);
  result.best_val_map = std::max(best_map, 0.0);
  return result;
}

}  // namespace detail_train

// Algorithm step 1: teacher on the detection loss alone.
inline TrainResult train_teacher(const Dataset& ds, ModelConfig cfg, const KdConfig& kd,
                                 const TrainOptions& opts) {
  cfg.input_size = ds.image_size;
  DetectorModel<double> model(cfg, derive_seed(opts.seed, 11));
  return detail_train::run_detection_training(std::move(model), nullptr, ds, kd, opts);
}

// Algorithm step 2: freeze the teacher, train the student on the combined loss.
inline TrainResult distill_student(const DetectorModel<double>& teacher, const Dataset& ds,
                                   ModelConfig cfg, const KdConfig& kd,
                                   const TrainOptions& opts) {
  cfg.input_size = ds.image_size;
  if (teacher.cfg.input_size != ds.image_size)
    throw ConfigError("distill_student: teacher input size " +
                      std::to_string(teacher.cfg.input_size) +
                      " does not match dataset " + std::to_string(ds.image_size));
  DetectorModel<double> model(cfg, derive_seed(opts.seed, 13));
  return detail_train::run_detection_training(std::move(model), &teacher, ds, kd, opts);
}

}  // namespace edgenav
