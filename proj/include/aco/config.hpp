#pragma once

// Plain-text `key = value` configuration. Unknown keys are errors: a typo'd
// hyper-parameter would silently invalidate an ablation ordering.

#include <cstdint>
#include <string>

namespace aco {

enum class LossForm { as_written, infonce };

struct Config {
  // data / renderer
  int data_height = 32;
  int data_width = 32;
  int data_episodes = 120;
  int data_episode_length = 50;
  double data_kappa_max = 0.3;
  int data_min_segment = 5;
  int data_max_segment = 10;
  double data_train_fraction = 0.7;
  double data_speed = 0.4;

  // optical flow
  int flow_block = 4;
  int flow_search_radius = 4;

  // inverse predictor
  double inv_lr = 0.0003;
  double inv_wd = 0.0001;
  int inv_epochs = 50;
  int inv_batch = 64;
  int inv_hidden = 64;

  // contrastive pretraining
  double aco_tau = 0.2;
  double aco_epsilon = 0.05;
  double aco_alpha = 0.999;
  double aco_lambda_ins = 1.0;
  double aco_lambda_act = 1.0;
  int aco_d_e = 64;
  int aco_d_p = 32;
  int aco_proj_hidden = 128;
  int aco_capacity = 4096;
  int aco_sample_n = 1024;
  int aco_batch = 64;
  double aco_lr = 0.03;
  double aco_wd = 0.0001;
  int aco_epochs = 30;
  LossForm aco_loss_form = LossForm::as_written;
  bool aco_use_ground_truth_actions = false;
  bool aco_enable_crop_flip = false;
  double aug_gray_prob = 0.2;
  double aug_jitter_scale = 0.4;   // per-channel scale in [1-s, 1+s]
  double aug_jitter_shift = 0.1;   // per-channel shift in [-v, v]
  double aug_blur_prob = 0.5;
  double aug_blur_sigma_min = 0.1;
  double aug_blur_sigma_max = 1.0;

  // behavior cloning / probe
  double bc_lr = 0.0001;
  double bc_wd = 0.0001;
  int bc_epochs = 40;
  int bc_batch = 64;
  bool bc_freeze_encoder = true;
  int bc_use_standardizer = -1;  // -1 auto (on for contrastive ckpts), 0 off, 1 on
  double bc_success_budget = 0.08;
  double probe_lr = 0.001;
  int probe_epochs = 60;
  int probe_batch = 64;
  int embed_knn = 5;

  void set(const std::string& key, const std::string& value);
  std::string render() const;          // canonical text, round-trips via parse
  uint64_t pipeline_digest() const;    // over data/flow/inv/aco keys only
  void validate() const;               // throws config_invalid on bad ranges

  // appendix-scale profile: batch 256, queue 40960, 100 epochs, lr 0.03
  void apply_paper_scale();

  static Config parse_text(const std::string& text);
  static Config load(const std::string& path);
};

}  // namespace aco
