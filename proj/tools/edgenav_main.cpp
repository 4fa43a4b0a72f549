// Command-line front end: dataset generation, teacher/student training,
// detection evaluation, policy training/evaluation, latency benchmarking, and
// checkpoint inspection. Exit codes: 0 ok, 1 runtime error, 2 usage error.
#include <CLI11.hpp>

#include <iostream>

#include "edgenav/bench.hpp"
#include "edgenav/checkpoint.hpp"
#include "edgenav/distill.hpp"
#include "edgenav/ppo.hpp"

using namespace edgenav;

namespace {

struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

void require_file(const std::string& path, const std::string& what) {
  if (!std::filesystem::exists(path))
    throw UsageError(what + " not found: " + path);
}

Dataset load_dataset_checked(const std::string& dir) {
  require_file(dir, "dataset directory");
  Dataset ds = load_dataset(dir);
  if (ds.train.empty() && ds.val.empty())
    throw UsageError("dataset at " + dir + " is empty (missing manifest.json?)");
  return ds;
}

template <typename T>
TensorT<T> image_to_tensor(const RgbImage& img, const NormStats& stats) {
  TensorT<T> out = TensorT<T>::zeros({1, 3, img.height, img.width});
  auto od = out.data();
  for (int64_t y = 0; y < img.height; ++y)
    for (int64_t x = 0; x < img.width; ++x) {
      const uint8_t* px = img.px(x, y);
      for (int c = 0; c < 3; ++c)
        od[(c * img.height + y) * img.width + x] = static_cast<T>(
            (px[c] / 255.0 - stats.mean[c]) / stats.stddev[c]);
    }
  return out;
}

// Wires a float-precision detector checkpoint into the environment's
// observation path at the spec's 0.25 confidence threshold.
DetectorFn make_detector_fn(const std::string& ckpt_path,
                            std::shared_ptr<DetectorModel<float>>& keepalive,
                            int64_t& input_size) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  keepalive = std::make_shared<DetectorModel<float>>(detector_from_checkpoint<float>(ckpt));
  const NormStats stats = stats_from_checkpoint(ckpt);
  input_size = keepalive->cfg.input_size;
  auto model = keepalive;
  return [model, stats](const RgbImage& view) {
    NoGradGuard ng;
    TensorT<float> input = image_to_tensor<float>(view, stats);
    auto out = model->forward(input);
    return decode(out.pred, 0.25)[0];
  };
}

int cmd_gen_data(const std::string& out_dir, int64_t count, int64_t image_size,
                 uint64_t seed) {
  DatasetOptions opts;
  opts.count = count;
  opts.image_size = image_size;
  opts.seed = seed;
  Dataset ds = gen_dataset(opts);
  save_dataset(ds, out_dir);
  // summary statistics, also the reproducibility artifact of this command
  std::array<int64_t, kNumClasses> train_counts{}, val_counts{};
  for (const auto& li : ds.train)
    for (const auto& lb : li.labels) train_counts[lb.class_id]++;
  for (const auto& li : ds.val)
    for (const auto& lb : li.labels) val_counts[lb.class_id]++;
  CsvWriter csv((std::filesystem::path(out_dir) / "stats.csv").string(),
                {"metric", "value"});
  csv.write_row({"train_images", std::to_string(ds.train.size())});
  csv.write_row({"val_images", std::to_string(ds.val.size())});
  for (int c = 0; c < kNumClasses; ++c) {
    csv.write_row({"train_class_" + std::to_string(c), std::to_string(train_counts[c])});
    csv.write_row({"val_class_" + std::to_string(c), std::to_string(val_counts[c])});
  }
  for (int c = 0; c < 3; ++c) {
    csv.write_row({"norm_mean_" + std::to_string(c), fmt_g17(ds.norm_mean[c])});
    csv.write_row({"norm_std_" + std::to_string(c), fmt_g17(ds.norm_std[c])});
  }
  std::cout << "wrote " << ds.train.size() << " train / " << ds.val.size()
            << " val images to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EdgeNavMamba: distilled state-space detection and goal navigation"};
  app.require_subcommand(1);
  app.set_config("--config", "", "declarative config file; command-line flags override");

  uint64_t seed = 0;
  app.add_option("--seed", seed, "global RNG seed")->capture_default_str();
  int threads = 2;
  app.add_option("--threads", threads, "math thread count")->capture_default_str();

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "render a synthetic labeled dataset");
  std::string gen_out = "dataset";
  int64_t gen_count = 5500, gen_size = 224;
  gen->add_option("--out", gen_out, "output directory")->capture_default_str();
  gen->add_option("--count", gen_count, "total scenes (90/10 split)")->capture_default_str();
  gen->add_option("--image-size", gen_size, "rendered resolution")->capture_default_str();

  // shared training options
  std::string data_dir, out_ckpt = "model.ckpt", csv_path, dump_dir;
  int64_t epochs = 30, max_batches = 0, dump_every = 0;
  double early_stop_map = 2.0;
  bool no_augment = false, verbose = false;
  KdConfig kd;

  auto add_train_common = [&](CLI::App* cmd, int64_t default_epochs) {
    epochs = default_epochs;
    cmd->add_option("--data", data_dir, "dataset directory")->required();
    cmd->add_option("--out", out_ckpt, "output checkpoint")->capture_default_str();
    cmd->add_option("--epochs", epochs, "training epochs")->capture_default_str();
    cmd->add_option("--lr", kd.lr, "Adam learning rate")->capture_default_str();
    cmd->add_option("--batch-size", kd.batch_size, "minibatch size")->capture_default_str();
    cmd->add_option("--csv", csv_path, "per-epoch metrics CSV");
    cmd->add_option("--early-stop-map", early_stop_map,
                    "stop once val mAP reaches this")->capture_default_str();
    cmd->add_option("--max-batches", max_batches,
                    "cap batches per epoch (0 = full epoch)")->capture_default_str();
    cmd->add_flag("--no-augment", no_augment, "disable flip/jitter augmentation");
    cmd->add_flag("--verbose", verbose, "per-epoch progress on stderr");
  };

  auto* teach = app.add_subcommand("train-teacher", "train a detector on the detection loss");
  std::string teach_arch = "teacher";
  add_train_common(teach, 30);
  teach->add_option("--arch", teach_arch, "teacher|student (student = no-KD baseline)")
      ->check(CLI::IsMember({"teacher", "student"}))
      ->capture_default_str();

  auto* dist = app.add_subcommand("distill", "distill the student from a frozen teacher");
  std::string teacher_ckpt;
  add_train_common(dist, 50);
  dist->add_option("--teacher", teacher_ckpt, "teacher checkpoint")->required();
  dist->add_option("--lambda-kd", kd.lambda_kd, "KL weight")->capture_default_str();
  dist->add_option("--lambda-feat", kd.lambda_feat, "feature MSE weight")->capture_default_str();
  dist->add_option("--temperature", kd.temperature, "KD temperature")->capture_default_str();
  dist->add_option("--dump-dir", dump_dir, "periodic decoded-detection dumps");
  dist->add_option("--dump-every", dump_every, "dump cadence in epochs")->capture_default_str();

  auto* emap = app.add_subcommand("eval-map", "mAP@0.5 of a checkpoint on a dataset split");
  std::string emap_ckpt, emap_split = "val";
  emap->add_option("--ckpt", emap_ckpt, "detector checkpoint")->required();
  emap->add_option("--data", data_dir, "dataset directory")->required();
  emap->add_option("--split", emap_split, "val|train")
      ->check(CLI::IsMember({"val", "train"}))->capture_default_str();

  auto* tpol = app.add_subcommand("train-policy", "PPO on the bbox state vector");
  int objects = 3;
  int64_t total_steps = 500'000;
  std::string policy_out = "policy.ckpt", detector_ckpt;
  PpoConfig ppo_cfg;
  tpol->add_option("--objects", objects, "boxes in the room (1-3)")->capture_default_str();
  tpol->add_option("--steps", total_steps, "total environment steps")->capture_default_str();
  tpol->add_option("--out", policy_out, "output policy checkpoint")->capture_default_str();
  tpol->add_option("--csv", csv_path, "per-iteration metrics CSV");
  tpol->add_option("--detector", detector_ckpt,
                   "observe through this detector instead of the oracle");
  tpol->add_option("--lr", ppo_cfg.lr, "Adam learning rate")->capture_default_str();
  tpol->add_option("--horizon", ppo_cfg.horizon, "rollout length")->capture_default_str();
  tpol->add_option("--batch-size", ppo_cfg.batch_size, "PPO minibatch")->capture_default_str();
  tpol->add_option("--hidden", ppo_cfg.hidden, "policy trunk width")->capture_default_str();
  tpol->add_flag("--verbose", verbose, "progress on stderr");

  auto* enav = app.add_subcommand("eval-nav", "success rate of a trained policy");
  std::string policy_ckpt, trace_path;
  int64_t episodes = 100;
  enav->add_option("--policy", policy_ckpt, "policy checkpoint")->required();
  enav->add_option("--objects", objects, "boxes in the room (1-3)")->capture_default_str();
  enav->add_option("--episodes", episodes, "evaluation episodes")->capture_default_str();
  enav->add_option("--detector", detector_ckpt,
                   "observe through this detector instead of the oracle");
  enav->add_option("--trace", trace_path, "JSON-lines episode trace output");

  auto* bench_cmd = app.add_subcommand("bench", "single-image latency benchmark (f32)");
  std::string bench_ckpt, bench_csv, bench_name = "model";
  int64_t bench_runs = 100, bench_warmup = 10;
  int bench_threads = 1;
  bench_cmd->add_option("--ckpt", bench_ckpt, "detector checkpoint")->required();
  bench_cmd->add_option("--runs", bench_runs, "timed runs")->capture_default_str();
  bench_cmd->add_option("--warmup", bench_warmup, "discarded warmup runs (>=5)")
      ->capture_default_str();
  bench_cmd->add_option("--threads", bench_threads, "math threads for the bench")
      ->capture_default_str();
  bench_cmd->add_option("--csv", bench_csv, "append the report row to this CSV");
  bench_cmd->add_option("--name", bench_name, "model label in the report")
      ->capture_default_str();

  auto* inspect = app.add_subcommand("inspect-ckpt", "print checkpoint contents");
  std::string inspect_path;
  inspect->add_option("--ckpt", inspect_path, "checkpoint path")->required();

  auto* plot = app.add_subcommand("plot-data", "convert a metrics CSV to gnuplot data");
  std::string plot_in, plot_out;
  plot->add_option("--csv", plot_in, "input CSV")->required();
  plot->add_option("--out", plot_out, "output .dat")->required();

  for (auto* sub : {gen, teach, dist, emap, tpol, enav, bench_cmd, inspect, plot})
    sub->fallthrough();  // --seed/--threads may appear after the subcommand

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    set_math_threads(threads);

    if (*gen) return cmd_gen_data(gen_out, gen_count, gen_size, seed);

    if (*teach) {
      Dataset ds = load_dataset_checked(data_dir);
      ModelConfig cfg =
          teach_arch == "teacher" ? ModelConfig::teacher() : ModelConfig::student();
      TrainOptions opts;
      opts.epochs = epochs;
      opts.seed = seed;
      opts.augment = !no_augment;
      opts.csv_path = csv_path;
      opts.early_stop_map = early_stop_map;
      opts.max_batches_per_epoch = max_batches;
      opts.verbose = verbose;
      TrainResult res = train_teacher(ds, cfg, kd, opts);
      NormStats stats;
      stats.mean = ds.norm_mean;
      stats.stddev = ds.norm_std;
      save_detector_checkpoint(out_ckpt, res.model, stats);
      std::cout << "best val mAP@0.5 " << fmt_g17(res.best_val_map) << ", saved "
                << out_ckpt << "\n";
      return 0;
    }

    if (*dist) {
      require_file(teacher_ckpt, "teacher checkpoint");
      Dataset ds = load_dataset_checked(data_dir);
      DetectorModel<double> teacher =
          detector_from_checkpoint<double>(load_checkpoint(teacher_ckpt));
      TrainOptions opts;
      opts.epochs = epochs;
      opts.seed = seed;
      opts.augment = !no_augment;
      opts.csv_path = csv_path;
      opts.dump_dir = dump_dir;
      opts.dump_every = dump_every;
      opts.early_stop_map = early_stop_map;
      opts.max_batches_per_epoch = max_batches;
      opts.verbose = verbose;
      TrainResult res = distill_student(teacher, ds, ModelConfig::student(), kd, opts);
      NormStats stats;
      stats.mean = ds.norm_mean;
      stats.stddev = ds.norm_std;
      save_detector_checkpoint(out_ckpt, res.model, stats);
      std::cout << "best val mAP@0.5 " << fmt_g17(res.best_val_map) << ", saved "
                << out_ckpt << "\n";
      return 0;
    }

    if (*emap) {
      require_file(emap_ckpt, "detector checkpoint");
      Dataset ds = load_dataset_checked(data_dir);
      DetectorModel<double> model =
          detector_from_checkpoint<double>(load_checkpoint(emap_ckpt));
      if (model.cfg.input_size != ds.image_size)
        throw UsageError("checkpoint expects " + std::to_string(model.cfg.input_size) +
                         "px images but dataset is " + std::to_string(ds.image_size) +
                         "px");
      const double result =
          eval_map(model, emap_split == "val" ? ds.val : ds.train, ds);
      std::cout << "mAP@0.5 " << fmt_g17(result) << "\n";
      return 0;
    }

    if (*tpol) {
      NavConfig ncfg;
      ncfg.num_boxes = objects;
      std::shared_ptr<DetectorModel<float>> keepalive;
      NavEnv env(ncfg);
      if (!detector_ckpt.empty()) {
        require_file(detector_ckpt, "detector checkpoint");
        int64_t input_size = 0;
        DetectorFn fn = make_detector_fn(detector_ckpt, keepalive, input_size);
        ncfg.render_size = input_size;
        env = NavEnv(ncfg);
        env.set_detector(std::move(fn));
      }
      PolicyTrainOptions opts;
      opts.total_steps = total_steps;
      opts.seed = seed;
      opts.csv_path = csv_path;
      opts.verbose = verbose;
      PolicyTrainResult res = train_policy(env, ppo_cfg, opts);
      save_policy_checkpoint(policy_out, res.policy);
      std::cout << "rolling success over last 100 episodes "
                << fmt_g17(res.final_success_rate_100) << " (" << res.episodes
                << " episodes), saved " << policy_out << "\n";
      return 0;
    }

    if (*enav) {
      require_file(policy_ckpt, "policy checkpoint");
      PolicyNet policy = policy_from_checkpoint(load_checkpoint(policy_ckpt));
      NavConfig ncfg;
      ncfg.num_boxes = objects;
      std::shared_ptr<DetectorModel<float>> keepalive;
      NavEnv env(ncfg);
      if (!detector_ckpt.empty()) {
        require_file(detector_ckpt, "detector checkpoint");
        int64_t input_size = 0;
        DetectorFn fn = make_detector_fn(detector_ckpt, keepalive, input_size);
        ncfg.render_size = input_size;
        env = NavEnv(ncfg);
        env.set_detector(std::move(fn));
      }
      std::ofstream trace;
      if (!trace_path.empty()) {
        trace.open(trace_path);
        if (!trace) throw IoError("cannot write trace: " + trace_path);
      }
      const double rate = eval_success_rate(env, policy, episodes, seed,
                                            trace.is_open() ? &trace : nullptr);
      std::cout << "success rate " << fmt_g17(rate) << " over " << episodes
                << " episodes\n";
      return 0;
    }

    if (*bench_cmd) {
      require_file(bench_ckpt, "detector checkpoint");
      set_math_threads(bench_threads);
      DetectorModel<float> model =
          detector_from_checkpoint<float>(load_checkpoint(bench_ckpt));
      BenchReport report = bench_latency(model, bench_name, bench_runs, bench_warmup, seed);
      std::cout << bench_report_text(report);
      if (!bench_csv.empty()) {
        const bool fresh = !std::filesystem::exists(bench_csv);
        std::ofstream out(bench_csv, std::ios::app);
        if (fresh) out << bench_report_csv_header() << "\n";
        out << bench_report_csv_row(report) << "\n";
      }
      return 0;
    }

    if (*inspect) {
      require_file(inspect_path, "checkpoint");
      Checkpoint ckpt = load_checkpoint(inspect_path);
      std::cout << "kind: " << ckpt.kind << "\nversion: " << kCkptVersion
                << "\nchecksum: OK\nmeta:\n";
      for (const auto& [k, v] : ckpt.meta)
        std::cout << "  " << k << " = " << fmt_g17(v) << "\n";
      int64_t total = 0;
      std::cout << "tensors:\n";
      for (const auto& t : ckpt.tensors) {
        std::cout << "  " << t.name << " " << shape_str(t.shape)
                  << (t.dtype == CkptDtype::kF64 ? " f64" : " f32") << "\n";
        total += shape_numel(t.shape);
      }
      std::cout << "total parameters: " << total << "\n";
      return 0;
    }

    if (*plot) {
      require_file(plot_in, "CSV file");
      std::ifstream in(plot_in);
      std::ofstream out(plot_out);
      if (!out) throw IoError("cannot write " + plot_out);
      std::string line;
      bool first = true;
      while (std::getline(in, line)) {
        std::replace(line.begin(), line.end(), ',', ' ');
        out << (first ? "# " : "") << line << "\n";
        first = false;
      }
      std::cout << "wrote " << plot_out << "\n";
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
