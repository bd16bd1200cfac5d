#pragma once

// Procedural first-view driving episodes: a curved two-edge road under
// perspective, streaming surface texture (the optical-flow cue), and
// per-episode visual nuisances that are constant within an episode and
// therefore correlate with instance identity but never with the action.

#include <cstdint>
#include <vector>

#include "aco/common.hpp"
#include "aco/config.hpp"
#include "aco/data.hpp"

namespace aco::synth {

struct NuisanceParams {
  double tint[3] = {0, 0, 0};    // [-0.2, 0.2] per channel
  double brightness = 1.0;       // [0.6, 1.4]
  uint64_t texture_seed = 0;
  double sky_gradient = 0.5;     // [0, 1]
};

struct EpisodeSpec {
  uint64_t seed = 0;
  int length = 2;
  std::vector<double> curvature_profile;  // per frame, in [-kappa_max, kappa_max]
  NuisanceParams nuisance;
};

struct Episode {
  std::vector<Frame> frames;
  std::vector<ActionLabel> labels;  // ground truth, aligned to frames
};

// affine map 0.5 + 0.5*curvature/kappa_max, clamped to [0,1]
double steering_from_curvature(double curvature, double kappa_max);

// Piecewise-constant curvature (segment lengths in [min_segment, max_segment])
// plus random nuisances, all derived from seed.
EpisodeSpec random_spec(uint64_t seed, int length, const Config& cfg);

Episode generate_episode(const EpisodeSpec& spec, uint32_t episode_id,
                         const Config& cfg);

// Episode-granularity split; both sides are guaranteed non-empty.
void dataset_split(int n_episodes, double train_fraction, uint64_t seed,
                   std::vector<uint32_t>* train_ids, std::vector<uint32_t>* test_ids);

// Whole episodes in a seed-fixed random order until ceil(fraction * total)
// frames are covered; the final episode is truncated to meet the quota
// exactly. Returns (episode index, frame count taken) pairs.
std::vector<std::pair<size_t, int>> demo_subset(
    const std::vector<int>& episode_lengths, double fraction, uint64_t seed);

}  // namespace aco::synth
