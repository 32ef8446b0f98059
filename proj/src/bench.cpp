#include "streamformer/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

namespace sf::bench {

namespace {

using Clock = std::chrono::steady_clock;

Tensor<float> random_clip(int64_t t, int64_t image, uint64_t seed) {
  Rng rng(splitmix64(seed ^ 0xc11bull));
  return Tensor<float>::uniform({t, image, image, 3}, rng, 0.0f, 1.0f);
}

// Median latency of fn() in nanoseconds. If the timer cannot resolve a
// single call (median below ~10 ticks of a nanosecond clock), the number of
// iterations per repetition is raised until it can.
template <typename F>
std::pair<double, double> measure_ns(F&& fn, int reps, int warmups) {
  constexpr double kMinMedianNs = 10.0;
  int64_t iters = 1;
  for (;;) {
    for (int w = 0; w < warmups; ++w)
      for (int64_t i = 0; i < iters; ++i) fn();
    std::vector<double> samples;
    samples.reserve(static_cast<size_t>(reps));
    for (int r = 0; r < reps; ++r) {
      const auto t0 = Clock::now();
      for (int64_t i = 0; i < iters; ++i) fn();
      const auto t1 = Clock::now();
      samples.push_back(
          double(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()) /
          double(iters));
    }
    std::sort(samples.begin(), samples.end());
    const double med = samples[samples.size() / 2];
    if (med >= kMinMedianNs || iters >= (int64_t{1} << 20)) {
      const size_t p90 = std::min(samples.size() - 1, static_cast<size_t>(
                                      std::ceil(0.9 * double(samples.size())) - 1));
      return {med, samples[p90]};
    }
    iters *= 10;
  }
}

}  // namespace

BenchSummary run_bench(const ModelConfig& cfg_in, const BenchOptions& opt) {
  if (opt.t_list.empty()) throw InputError("bench: empty t list");
  const int64_t t_max = *std::max_element(opt.t_list.begin(), opt.t_list.end());
  const int64_t t_min = *std::min_element(opt.t_list.begin(), opt.t_list.end());
  if (t_min < 1) throw InputError("bench: t must be >= 1");

  ModelConfig cfg = cfg_in;
  cfg.max_frames = std::max(cfg.max_frames, t_max);
  cfg.temporal_mode = TemporalMode::causal;
  StreamFormer<float> model(cfg, opt.seed);

  if (opt.verify_parity) {
    // cached-causal and recompute-causal must agree before anything is timed
    const int64_t t_chk = std::min<int64_t>(t_max, 16);
    Tensor<float> clip = random_clip(t_chk, cfg.image_size, opt.seed);
    auto [hidden, feats] = model.forward_clip(clip);
    StreamSession<float> sess = model.stream_open();
    double worst = 0;
    for (int64_t i = 0; i < t_chk; ++i) {
      Tensor<float> frame = ops::slice(clip, 0, i, 1);
      FrameFeatures<float> ff =
          model.stream_step(sess, frame.view_as({cfg.image_size, cfg.image_size, 3}));
      Tensor<float> want = ops::slice(feats.f, 0, i, 1);
      worst = std::max(worst, max_abs_diff(ff.f, want));
    }
    if (worst > 1e-5)
      throw NumericError("bench: cached vs recompute feature parity violated, max |delta| = " +
                         std::to_string(worst));
  }

  BenchSummary out;
  Rng frame_rng(splitmix64(opt.seed ^ 0xf7a3e5ull));

  for (BenchMode mode : {BenchMode::cached_causal, BenchMode::recompute_causal,
                         BenchMode::bidirectional_full}) {
    for (int64_t t : opt.t_list) {
      BenchRecord rec;
      rec.mode = mode;
      rec.t = t;
      rec.flops = flop_model(cfg, mode, t);
      double med_ns = 0, p90_ns = 0;

      if (mode == BenchMode::cached_causal) {
        StreamSession<float> sess = model.stream_open();
        Tensor<float> clip = random_clip(t, cfg.image_size, opt.seed ^ static_cast<uint64_t>(t));
        for (int64_t i = 0; i < t - 1; ++i) {
          Tensor<float> frame = ops::slice(clip, 0, i, 1);
          model.stream_step(sess, frame.view_as({cfg.image_size, cfg.image_size, 3}));
        }
        Tensor<float> last =
            ops::slice(clip, 0, t - 1, 1).view_as({cfg.image_size, cfg.image_size, 3});
        auto [m, p] = measure_ns(
            [&] {
              model.stream_step(sess, last);
              sess.rollback_last_frame();
            },
            opt.reps, opt.warmups);
        med_ns = m;
        p90_ns = p;
        model.stream_step(sess, last);  // leave the session at t frames
        rec.cache_floats = sess.cache_floats();
      } else {
        const TemporalMode tm = (mode == BenchMode::bidirectional_full)
                                    ? TemporalMode::bidirectional
                                    : TemporalMode::causal;
        Tensor<float> clip = random_clip(t, cfg.image_size, opt.seed ^ (0x9eull * static_cast<uint64_t>(t)));
        auto [m, p] = measure_ns(
            [&] {
              Tensor<float> hidden = model.encode(clip, 0, tm);
              FrameFeatures<float> f = model.features(hidden);
              (void)f;
            },
            opt.reps, opt.warmups);
        med_ns = m;
        p90_ns = p;
        rec.cache_floats = 0;
      }
      rec.latency_us_median = med_ns / 1e3;
      rec.latency_us_p90 = p90_ns / 1e3;
      out.records.push_back(rec);
    }
  }

  auto find = [&](BenchMode m, int64_t t) -> const BenchRecord& {
    for (const auto& r : out.records)
      if (r.mode == m && r.t == t) return r;
    throw Error("bench: record lookup failed");
  };
  out.cached_ratio = find(BenchMode::cached_causal, t_max).latency_us_median /
                     find(BenchMode::cached_causal, t_min).latency_us_median;
  out.recompute_vs_cached = find(BenchMode::recompute_causal, t_max).latency_us_median /
                            find(BenchMode::cached_causal, t_max).latency_us_median;
  return out;
}

void write_csv(std::ostream& os, const std::vector<BenchRecord>& records) {
  os << "mode,t,latency_us_median,latency_us_p90,cache_floats,flops\n";
  char buf[64];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%.3f", r.latency_us_median);
    std::string med = buf;
    std::snprintf(buf, sizeof(buf), "%.3f", r.latency_us_p90);
    std::string p90 = buf;
    os << bench_mode_name(r.mode) << "," << r.t << "," << med << "," << p90 << ","
       << r.cache_floats << "," << r.flops << "\n";
  }
}

}  // namespace sf::bench
