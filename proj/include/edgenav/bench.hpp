// Wall-clock latency benchmark for single-image inference, the desk-scale
// stand-in for on-device profiling. FLOPs come from static analysis, timing
// from repeated forward passes at 32-bit.
#pragma once

#include <chrono>

#include "edgenav/detector.hpp"

namespace edgenav {

struct BenchReport {
  std::string model_name;
  int64_t params = 0;
  int64_t flops = 0;
  std::vector<double> latencies_ms;
  double mean_ms = 0, p50_ms = 0, p95_ms = 0;
  double throughput = 0;  // inferences per second, 1000/mean_ms
  int threads = 1;
  std::string precision = "f32";
};

namespace detail_bench {

inline double percentile(std::vector<double> sorted, double q) {
  if (sorted.empty()) return 0.0;
  const size_t idx = static_cast<size_t>(
      std::ceil(q * static_cast<double>(sorted.size()))) - 1;
  return sorted[std::min(idx, sorted.size() - 1)];
}

}  // namespace detail_bench

template <typename T>
BenchReport bench_latency(const DetectorModel<T>& model, const std::string& name,
                          int64_t runs, int64_t warmup, uint64_t seed) {
  if (warmup < 5) throw ContractError("bench_latency: warmup must be at least 5 runs");
  if (runs < 1) throw ContractError("bench_latency: need at least one timed run");
  BenchReport report;
  report.model_name = name;
  const CostReport cost = count_params_flops(model.cfg);
  report.params = cost.params;
  report.flops = cost.flops;
  report.threads = num_threads();
  report.precision = sizeof(T) == 4 ? "f32" : "f64";

  Rng rng(seed);
  const int64_t s = model.cfg.input_size;
  TensorT<T> img = TensorT<T>::zeros({1, 3, s, s});
  for (auto& v : img.data()) v = static_cast<T>(rng.uniform(-1.0, 1.0));

  NoGradGuard ng;
  for (int64_t i = 0; i < warmup; ++i) (void)model.forward(img);
  report.latencies_ms.reserve(runs);
  for (int64_t i = 0; i < runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    (void)model.forward(img);
    const auto t1 = std::chrono::steady_clock::now();
    report.latencies_ms.push_back(
        std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  double sum = 0;
  for (double v : report.latencies_ms) sum += v;
  report.mean_ms = sum / static_cast<double>(runs);
  std::vector<double> sorted = report.latencies_ms;
  std::sort(sorted.begin(), sorted.end());
  report.p50_ms = detail_bench::percentile(sorted, 0.50);
  report.p95_ms = detail_bench::percentile(sorted, 0.95);
  report.throughput = 1000.0 / report.mean_ms;
  return report;
}

inline std::string bench_report_csv_header() {
  return "model,params,flops,runs,mean_ms,p50_ms,p95_ms,throughput_per_s,threads,precision";
}

inline std::string bench_report_csv_row(const BenchReport& r) {
  std::ostringstream os;
  os << r.model_name << ',' << r.params << ',' << r.flops << ','
     << r.latencies_ms.size() << ',' << fmt_g17(r.mean_ms) << ',' << fmt_g17(r.p50_ms)
     << ',' << fmt_g17(r.p95_ms) << ',' << fmt_g17(r.throughput) << ',' << r.threads
     << ',' << r.precision;
  return os.str();
}

inline std::string bench_report_text(const BenchReport& r) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof(line), "%-12s %10s %10s %10s %10s %10s %12s\n", "model",
                "params", "GFLOPs", "mean ms", "p50 ms", "p95 ms", "inf/s");
  os << line;
  std::snprintf(line, sizeof(line), "%-12s %10lld %10.4f %10.3f %10.3f %10.3f %12.2f\n",
                r.model_name.c_str(), static_cast<long long>(r.params),
                r.flops / 1e9, r.mean_ms, r.p50_ms, r.p95_ms, r.throughput);
  os << line;
  return os.str();
}

}  // namespace edgenav
