#pragma once

// Dual-space momentum contrastive trainer: augmentations, encoder with
// instance/action projectors and their momentum twins, the FIFO key
// dictionary, and the instance-pair / action-pair losses.

#include <deque>
#include <string>
#include <vector>

#include "aco/common.hpp"
#include "aco/config.hpp"
#include "aco/data.hpp"
#include "aco/io.hpp"
#include "aco/numcore.hpp"

namespace aco::core {

// gray(p) -> per-channel jitter -> gaussian blur(p); photometric only,
// no geometric warp unless crop/flip is explicitly enabled.
Frame augment(const Frame& frame, Rng& rng, const Config& cfg);

struct DualProjectorNet {
  int d_e = 64, d_p = 32;
  int height = 32, width = 32;
  num::ParamSet encoder, g_ins, g_act;
  num::ParamSet encoder_m, g_ins_m, g_act_m;  // momentum twins, exact copies at init

  static DualProjectorNet init(const Config& cfg, uint64_t seed);

  io::Checkpoint to_checkpoint() const;
  static DualProjectorNet from_checkpoint(const io::Checkpoint& ck, const Config& cfg);
};

// Batch of frames -> f64 tensor [B,3,H,W]
num::Tensor frames_to_tensor(const std::vector<Frame>& frames);

// Encoder forward on a tape; leaves must be registered by the caller so
// gradients can be harvested (or with requires_grad=false for key paths).
struct ParamLeaves {
  std::vector<int> ids;  // aligned to ParamSet order
};
ParamLeaves register_params(num::Tape& tape, const num::ParamSet& ps, bool requires_grad);
int encode(num::Tape& tape, int x, const num::ParamSet& ps, const ParamLeaves& lv);
int project(num::Tape& tape, int v, const num::ParamSet& ps, const ParamLeaves& lv);

// Feature extraction without a tape (frozen encoder paths).
std::vector<double> encode_one(const Frame& frame, const num::ParamSet& encoder);

struct KeyEntry {
  std::vector<double> z_ins;  // unit vector, d_p
  std::vector<double> z_act;  // unit vector, d_p
  double action = 0.5;
  uint64_t image_id = 0;
};

class KeyDictionary {
 public:
  explicit KeyDictionary(size_t capacity) : capacity_(capacity) {
    if (capacity == 0) fail("bad_arg", "dictionary capacity must be >= 1");
  }
  void push(const KeyEntry& e);
  // min(n, size) entries uniformly without replacement; deterministic in rng.
  std::vector<KeyEntry> sample(size_t n, Rng& rng) const;
  size_t size() const { return entries_.size(); }
  size_t capacity() const { return capacity_; }
  const KeyEntry& at(size_t i) const { return entries_[i]; }

 private:
  size_t capacity_;
  std::deque<KeyEntry> entries_;
};

// Strict partition |a - a_q| < eps over key actions; returns P flags.
std::vector<char> acp_positive_set(double a_q, const std::vector<double>& key_actions,
                                   double eps);

struct LossValue {
  int node = -1;          // tape node (scalar)
  int contributing = 0;   // queries included in the mean
  int skipped = 0;        // degenerate queries (empty P or N)
};

// Instance loss. keys: [K,dP] rows; pos_index[i] is the position of query
// i's own key in K (its single positive). Negatives are all other keys.
LossValue icp_loss(num::Tape& tape, int zq, const num::Tensor& keys,
                   const std::vector<int>& pos_index, double tau, LossForm form);

// Action loss over the same key set; positives by |a - a_q| < eps.
// Degenerate queries are skipped and counted.
LossValue acp_loss(num::Tape& tape, int zq, const num::Tensor& keys,
                   const std::vector<double>& key_actions,
                   const std::vector<double>& query_actions, double eps,
                   double tau, LossForm form);

double total_loss(double l_ins, double l_act, double lambda_ins, double lambda_act);

enum class PretrainMode { aco, icp_only, acp_only, autoencoder, none };
PretrainMode parse_mode(const std::string& s);
std::string mode_name(PretrainMode m);

struct PretrainResult {
  DualProjectorNet net;
  num::ParamSet decoder;  // autoencoder mode only
};

// Full pretraining loop; metrics lines go through the writer when given.
PretrainResult pretrain_run(const std::vector<Frame>& frames,
                            const std::vector<float>& actions, const Config& cfg,
                            PretrainMode mode, uint64_t seed,
                            io::MetricsWriter* metrics);

}  // namespace aco::core
