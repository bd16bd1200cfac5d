#pragma once

// Block-matching optical flow (SAD, exhaustive search) and the inverse
// dynamics predictor that turns frame pairs into steering pseudo-labels.

#include <vector>

#include "aco/common.hpp"
#include "aco/config.hpp"
#include "aco/data.hpp"
#include "aco/numcore.hpp"

namespace aco::flow {

struct FlowField {
  int grid_h = 0, grid_w = 0;
  int block = 4;
  std::vector<double> data;  // grid_h * grid_w * 2, (dx, dy) per block

  double dx(int by, int bx) const { return data[(size_t(by) * grid_w + bx) * 2]; }
  double dy(int by, int bx) const { return data[(size_t(by) * grid_w + bx) * 2 + 1]; }
};

// Per block, the integer displacement minimizing SAD over the search
// window; candidates whose target window leaves the image are skipped.
// Ties break by smallest |dx|+|dy|, then smallest dy, then smallest dx.
FlowField block_match_flow(const Frame& frame_t, const Frame& frame_t1,
                           int block = 4, int search_radius = 4);

enum class InverseInput { flow, frames };

// flatten -> relu MLP (hidden x2) -> scalar -> 0.5*(1+tanh)
struct InverseModel {
  InverseInput input_mode = InverseInput::flow;
  int input_dim = 0;
  num::ParamSet params;

  static InverseModel init(InverseInput mode, int input_dim, int hidden,
                           uint64_t seed);
  double predict(const std::vector<double>& input) const;
};

// One training sample: flattened input + ground-truth action.
struct InversePair {
  std::vector<double> input;
  double action = 0.5;
};

std::vector<double> flatten_flow(const FlowField& f);
std::vector<double> flatten_frame_pair(const Frame& a, const Frame& b);
std::vector<InversePair> make_pairs(const std::vector<std::vector<Frame>>& episodes,
                                    const std::vector<std::vector<double>>& actions,
                                    InverseInput mode, const Config& cfg);

struct InverseTrainResult {
  InverseModel model;
  std::vector<double> loss_history;  // mean train L1 per epoch
};

InverseTrainResult train_inverse(const std::vector<InversePair>& dataset,
                                 InverseInput mode, const Config& cfg,
                                 uint64_t seed);

double eval_inverse(const InverseModel& model, const std::vector<InversePair>& test);

// Frame t gets the action predicted between (t, t+1); the final frame
// duplicates the penultimate label.
std::vector<ActionLabel> pseudo_label(const std::vector<Frame>& episode,
                                      const InverseModel& model, const Config& cfg);

}  // namespace aco::flow
