#include "aco/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace aco::synth {

namespace {

// Fixed camera/scene geometry. kappa_max and speed stay in the config so
// the flow search radius coupling has a single source of truth; the
// constants below are checked against it in generate_episode.
constexpr double kFocalScale = 1.5;   // focal = kFocalScale * width
constexpr double kCamHeight = 0.5;
constexpr double kHorizonFrac = 0.3125;  // horizon row = frac * height
constexpr double kRoadHalfWidth = 0.6;
constexpr double kHillGain = 12.0;    // horizon scroll px per unit curvature
constexpr int kHillBand = 4;

double tex_hash(uint64_t seed, int64_t a, int64_t b) {
  uint64_t h = splitmix64(seed ^ splitmix64(uint64_t(a) * 0x9e3779b97f4a7c15ULL ^
                                            uint64_t(b) + 0x632be59bd9b4e019ULL));
  return double(h >> 11) * 0x1.0p-53;
}

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

double fract(double v) { return v - std::floor(v); }

}  // namespace

double steering_from_curvature(double curvature, double kappa_max) {
  double s = 0.5 + 0.5 * curvature / kappa_max;
  return clamp01(s);
}

EpisodeSpec random_spec(uint64_t seed, int length, const Config& cfg) {
  if (length < 2) fail("bad_arg", "episode length must be >= 2");
  EpisodeSpec spec;
  spec.seed = seed;
  spec.length = length;
  Rng rng = Rng::fork(seed, 0x5eedULL);
  spec.curvature_profile.reserve(size_t(length));
  while (int(spec.curvature_profile.size()) < length) {
    int seg = cfg.data_min_segment +
              int(rng.uniform_int(uint64_t(cfg.data_max_segment - cfg.data_min_segment + 1)));
    double c = rng.uniform(-cfg.data_kappa_max, cfg.data_kappa_max);
    for (int i = 0; i < seg && int(spec.curvature_profile.size()) < length; ++i)
      spec.curvature_profile.push_back(c);
  }
  Rng nrng = Rng::fork(seed, 0x0115ULL);
  for (double& t : spec.nuisance.tint) t = nrng.uniform(-0.2, 0.2);
  spec.nuisance.brightness = nrng.uniform(0.6, 1.4);
  spec.nuisance.texture_seed = nrng.next_u64();
  spec.nuisance.sky_gradient = nrng.uniform();
  return spec;
}

Episode generate_episode(const EpisodeSpec& spec, uint32_t episode_id,
                         const Config& cfg) {
  if (spec.length < 2) fail("bad_arg", "episode length must be >= 2");
  if (int(spec.curvature_profile.size()) != spec.length)
    fail("bad_arg", "curvature profile length mismatch");
  const int H = cfg.data_height, W = cfg.data_width;
  const double focal = kFocalScale * W;
  const double v = cfg.data_speed;
  // per-frame texture shift at max curvature must stay inside the block
  // matcher's search window
  double max_shift = std::max(0.5 * focal * v * cfg.data_kappa_max,
                              kHillGain * cfg.data_kappa_max);
  if (max_shift > double(cfg.flow_search_radius))
    fail("config_invalid",
         "kappa_max/speed produce texture shifts beyond flow.search_radius");

  const int y_h = int(kHorizonFrac * H);
  const uint64_t ts = spec.nuisance.texture_seed;
  Episode ep;
  ep.frames.reserve(size_t(spec.length));
  ep.labels.reserve(size_t(spec.length));

  double hill_scroll = 0.0;
  for (int t = 0; t < spec.length; ++t) {
    double c = spec.curvature_profile[size_t(t)];
    double s_t = double(t) * v;
    Frame fr;
    fr.height = uint16_t(H);
    fr.width = uint16_t(W);
    fr.episode_id = episode_id;
    fr.time_index = uint32_t(t);
    fr.pixels.assign(size_t(H) * W * 3, 0.0f);

    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double col[3];
        if (y < y_h - kHillBand) {
          // sky: vertical gradient, slope set by the episode's sky nuisance
          double frac = y_h > kHillBand ? double(y) / double(y_h - kHillBand) : 0.0;
          double g = 1.0 - (0.25 + 0.35 * spec.nuisance.sky_gradient) * (1.0 - frac);
          col[0] = 0.55 * g;
          col[1] = 0.65 * g;
          col[2] = 0.85 * g;
        } else if (y < y_h) {
          // distant treeline; scrolls with yaw rate, i.e. with curvature
          double u = (double(x) + hill_scroll) * 0.5;
          int64_t cell = int64_t(std::floor(u));
          cell = ((cell % 32) + 32) % 32;  // periodic so the scroll wraps
          double n = tex_hash(ts + 7, cell, y - y_h);
          col[0] = 0.18 + 0.10 * n;
          col[1] = 0.28 + 0.14 * n;
          col[2] = 0.20 + 0.08 * n;
        } else {
          double d = focal * kCamHeight / (double(y - y_h) + 0.5);
          double x_w = (double(x) - 0.5 * W + 0.5) * d / focal;
          double r = x_w - 0.5 * c * d * d;  // lateral offset in the road frame
          double s = s_t + d;                // longitudinal road coordinate
          double fade = std::min(1.0, 8.0 / d);
          if (std::fabs(r) <= kRoadHalfWidth) {
            double n = tex_hash(ts + 1, int64_t(std::floor(s * 2.0)),
                                int64_t(std::floor(r * 5.0)));
            double base = 0.30 + (n - 0.5) * 0.12 * fade;
            col[0] = col[1] = col[2] = base;
            if (std::fabs(std::fabs(r) - kRoadHalfWidth) < 0.10 &&
                fract(s / 1.2) < 0.7) {
              col[0] = col[1] = col[2] = 0.88;  // dashed edge lines
            } else if (std::fabs(r) < 0.06 && fract(s / 1.6) < 0.5) {
              col[0] = 0.85;
              col[1] = 0.80;
              col[2] = 0.30;  // center dash
            }
          } else {
            double n = tex_hash(ts + 2, int64_t(std::floor(s)),
                                int64_t(std::floor(r)));
            col[0] = 0.16 + 0.18 * n * fade;
            col[1] = 0.38 + 0.22 * n * fade;
            col[2] = 0.16 + 0.12 * n * fade;
          }
        }
        for (int ch = 0; ch < 3; ++ch)
          fr.at(y, x, ch) = float(clamp01(spec.nuisance.brightness * col[ch] +
                                          spec.nuisance.tint[ch]));
      }

    ep.frames.push_back(std::move(fr));
    ActionLabel lbl;
    lbl.episode_id = episode_id;
    lbl.time_index = uint32_t(t);
    lbl.steering = float(steering_from_curvature(c, cfg.data_kappa_max));
    lbl.source = LabelSource::ground_truth;
    ep.labels.push_back(lbl);

    hill_scroll += kHillGain * c;
    hill_scroll = std::fmod(hill_scroll, 64.0);
  }
  return ep;
}

void dataset_split(int n_episodes, double train_fraction, uint64_t seed,
                   std::vector<uint32_t>* train_ids,
                   std::vector<uint32_t>* test_ids) {
  if (n_episodes < 2) fail("bad_arg", "need >= 2 episodes to split");
  std::vector<uint32_t> ids(size_t(n_episodes));
  std::iota(ids.begin(), ids.end(), 0u);
  Rng rng = Rng::fork(seed, 0x5b117ULL);
  for (size_t i = ids.size() - 1; i > 0; --i)
    std::swap(ids[i], ids[rng.uniform_int(i + 1)]);
  int n_train = int(std::floor(train_fraction * n_episodes));
  n_train = std::clamp(n_train, 1, n_episodes - 1);
  train_ids->assign(ids.begin(), ids.begin() + n_train);
  test_ids->assign(ids.begin() + n_train, ids.end());
  std::sort(train_ids->begin(), train_ids->end());
  std::sort(test_ids->begin(), test_ids->end());
}

std::vector<std::pair<size_t, int>> demo_subset(
    const std::vector<int>& episode_lengths, double fraction, uint64_t seed) {
  if (fraction <= 0.0 || fraction > 1.0)
    fail("bad_arg", "demo fraction must be in (0,1]");
  if (episode_lengths.empty()) fail("bad_arg", "empty train set");
  int64_t total = 0;
  for (int l : episode_lengths) total += l;
  int64_t quota = int64_t(std::ceil(fraction * double(total)));

  std::vector<size_t> order(episode_lengths.size());
  std::iota(order.begin(), order.end(), size_t(0));
  Rng rng = Rng::fork(seed, 0xde30ULL);
  for (size_t i = order.size() - 1; i > 0; --i)
    std::swap(order[i], order[rng.uniform_int(i + 1)]);

  std::vector<std::pair<size_t, int>> out;
  int64_t taken = 0;
  for (size_t idx : order) {
    if (taken >= quota) break;
    int take = int(std::min<int64_t>(episode_lengths[idx], quota - taken));
    out.push_back({idx, take});
    taken += take;
  }
  return out;
}

}  // namespace aco::synth
