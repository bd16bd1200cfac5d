#include "aco/flowlab.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace aco::flow {

FlowField block_match_flow(const Frame& frame_t, const Frame& frame_t1,
                           int block, int search_radius) {
  if (frame_t.height != frame_t1.height || frame_t.width != frame_t1.width)
    fail("shape_mismatch", "block_match_flow: frame sizes differ");
  const int H = frame_t.height, W = frame_t.width;
  if (H % block != 0 || W % block != 0)
    fail("bad_arg", "block_match_flow: frame dims not divisible by block");

  FlowField out;
  out.block = block;
  out.grid_h = H / block;
  out.grid_w = W / block;
  out.data.assign(size_t(out.grid_h) * out.grid_w * 2, 0.0);

  for (int by = 0; by < out.grid_h; ++by)
    for (int bx = 0; bx < out.grid_w; ++bx) {
      int y0 = by * block, x0 = bx * block;
      double best_sad = 1e300;
      int best_dx = 0, best_dy = 0, best_cost = 0;
      for (int dy = -search_radius; dy <= search_radius; ++dy)
        for (int dx = -search_radius; dx <= search_radius; ++dx) {
          if (y0 + dy < 0 || y0 + dy + block > H) continue;
          if (x0 + dx < 0 || x0 + dx + block > W) continue;
          double sad = 0.0;
          for (int y = 0; y < block; ++y)
            for (int x = 0; x < block; ++x)
              for (int c = 0; c < 3; ++c)
                sad += std::fabs(double(frame_t.at(y0 + y, x0 + x, c)) -
                                 double(frame_t1.at(y0 + dy + y, x0 + dx + x, c)));
          int cost = std::abs(dx) + std::abs(dy);
          bool better =
              sad < best_sad ||
              (sad == best_sad &&
               (cost < best_cost ||
                (cost == best_cost &&
                 (dy < best_dy || (dy == best_dy && dx < best_dx)))));
          if (better) {
            best_sad = sad;
            best_dx = dx;
            best_dy = dy;
            best_cost = cost;
          }
        }
      out.data[(size_t(by) * out.grid_w + bx) * 2] = double(best_dx);
      out.data[(size_t(by) * out.grid_w + bx) * 2 + 1] = double(best_dy);
    }
  return out;
}

InverseModel InverseModel::init(InverseInput mode, int input_dim, int hidden,
                                uint64_t seed) {
  InverseModel m;
  m.input_mode = mode;
  m.input_dim = input_dim;
  Rng r2 = Rng::fork(seed, 0x1472ULL);
  m.params.add("fc1.w", num::kaiming_normal_init({input_dim, hidden}, input_dim, r2));
  m.params.add("fc1.b", num::Tensor::zeros({hidden}));
  m.params.add("fc2.w", num::kaiming_normal_init({hidden, hidden}, hidden, r2));
  m.params.add("fc2.b", num::Tensor::zeros({hidden}));
  m.params.add("fc3.w", num::kaiming_normal_init({hidden, 1}, hidden, r2));
  m.params.add("fc3.b", num::Tensor::zeros({1}));
  return m;
}

double InverseModel::predict(const std::vector<double>& input) const {
  if (int(input.size()) != input_dim)
    fail("shape_mismatch", "inverse predict: bad input size");
  const num::Tensor& w1 = params.get("fc1.w");
  const num::Tensor& b1 = params.get("fc1.b");
  const num::Tensor& w2 = params.get("fc2.w");
  const num::Tensor& b2 = params.get("fc2.b");
  const num::Tensor& w3 = params.get("fc3.w");
  const num::Tensor& b3 = params.get("fc3.b");
  int h = w1.shape[1];
  std::vector<double> a(size_t(h)), b(size_t(h));
  for (int j = 0; j < h; ++j) {
    double acc = b1.data[size_t(j)];
    for (int i = 0; i < input_dim; ++i) acc += input[size_t(i)] * w1.data[size_t(i) * h + j];
    a[size_t(j)] = acc > 0 ? acc : 0;
  }
  for (int j = 0; j < h; ++j) {
    double acc = b2.data[size_t(j)];
    for (int i = 0; i < h; ++i) acc += a[size_t(i)] * w2.data[size_t(i) * h + j];
    b[size_t(j)] = acc > 0 ? acc : 0;
  }
  double out = b3.data[0];
  for (int i = 0; i < h; ++i) out += b[size_t(i)] * w3.data[size_t(i)];
  return 0.5 * (1.0 + std::tanh(out));
}

std::vector<double> flatten_flow(const FlowField& f) { return f.data; }

std::vector<double> flatten_frame_pair(const Frame& a, const Frame& b) {
  std::vector<double> out;
  out.reserve(a.pixels.size() + b.pixels.size());
  for (float v : a.pixels) out.push_back(double(v));
  for (float v : b.pixels) out.push_back(double(v));
  return out;
}

std::vector<InversePair> make_pairs(const std::vector<std::vector<Frame>>& episodes,
                                    const std::vector<std::vector<double>>& actions,
                                    InverseInput mode, const Config& cfg) {
  std::vector<InversePair> out;
  for (size_t e = 0; e < episodes.size(); ++e) {
    const auto& fr = episodes[e];
    for (size_t t = 0; t + 1 < fr.size(); ++t) {
      InversePair p;
      if (mode == InverseInput::flow) {
        p.input = flatten_flow(block_match_flow(fr[t], fr[t + 1], cfg.flow_block,
                                                cfg.flow_search_radius));
      } else {
        p.input = flatten_frame_pair(fr[t], fr[t + 1]);
      }
      p.action = actions[e][t];
      out.push_back(std::move(p));
    }
  }
  return out;
}

namespace {

// batch forward on tape; returns prediction node id [B,1]
int mlp_forward(num::Tape& tape, int x, const std::vector<int>& leaves) {
  int h1 = tape.relu(tape.add_bias(tape.matmul(x, leaves[0]), leaves[1]));
  int h2 = tape.relu(tape.add_bias(tape.matmul(h1, leaves[2]), leaves[3]));
  int o = tape.add_bias(tape.matmul(h2, leaves[4]), leaves[5]);
  // 0.5*(1+tanh) keeps the output in [0,1] structurally
  int t = tape.tanh_(o);
  return tape.add(tape.scale(t, 0.5), tape.constant(num::Tensor::full(tape.value(t).shape, 0.5)));
}

}  // namespace

InverseTrainResult train_inverse(const std::vector<InversePair>& dataset,
                                 InverseInput mode, const Config& cfg,
                                 uint64_t seed) {
  if (dataset.empty()) fail("bad_arg", "train_inverse: empty dataset");
  for (const auto& p : dataset)
    if (p.action < 0.0 || p.action > 1.0)
      fail("bad_arg", "train_inverse: action outside [0,1]");
  const int in_dim = int(dataset[0].input.size());
  InverseTrainResult res;
  res.model = InverseModel::init(mode, in_dim, cfg.inv_hidden, seed);
  num::SgdState sgd;
  Rng shuffle_rng = Rng::fork(seed, 0x51u);

  std::vector<size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), size_t(0));
  const int B = std::min<int>(cfg.inv_batch, int(dataset.size()));

  for (int epoch = 0; epoch < cfg.inv_epochs; ++epoch) {
    for (size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[shuffle_rng.uniform_int(i + 1)]);
    double epoch_loss = 0.0;
    int n_batches = 0;
    for (size_t start = 0; start + size_t(B) <= order.size() || start == 0;
         start += size_t(B)) {
      size_t end = std::min(start + size_t(B), order.size());
      if (start >= order.size()) break;
      int bs = int(end - start);
      num::Tensor x = num::Tensor::zeros({bs, in_dim});
      num::Tensor y = num::Tensor::zeros({bs, 1});
      for (int b = 0; b < bs; ++b) {
        const InversePair& p = dataset[order[start + size_t(b)]];
        std::copy(p.input.begin(), p.input.end(),
                  x.data.begin() + int64_t(b) * in_dim);
        y.data[size_t(b)] = p.action;
      }
      num::Tape tape;
      std::vector<int> leaves;
      for (auto& t : res.model.params.values) leaves.push_back(tape.leaf(t, true));
      int xs = tape.constant(std::move(x));
      int pred = mlp_forward(tape, xs, leaves);
      int loss = tape.mean(tape.abs_(tape.sub(pred, tape.constant(std::move(y)))));
      tape.backward(loss);
      epoch_loss += tape.value(loss).item();
      ++n_batches;
      std::vector<num::Tensor> grads;
      for (int l : leaves) grads.push_back(tape.grad(l));
      num::sgd_step(res.model.params, grads, cfg.inv_lr, cfg.inv_wd, 0.9, sgd);
      if (end == order.size()) break;
    }
    res.loss_history.push_back(epoch_loss / std::max(1, n_batches));
  }
  return res;
}

double eval_inverse(const InverseModel& model, const std::vector<InversePair>& test) {
  if (test.empty()) fail("bad_arg", "eval_inverse: empty test set");
  double total = 0.0;
  for (const auto& p : test) total += std::fabs(p.action - model.predict(p.input));
  return total / double(test.size());
}

std::vector<ActionLabel> pseudo_label(const std::vector<Frame>& episode,
                                      const InverseModel& model, const Config& cfg) {
  if (episode.size() < 2) fail("bad_arg", "pseudo_label: need >= 2 frames");
  std::vector<ActionLabel> out;
  out.reserve(episode.size());
  double last = 0.5;
  for (size_t t = 0; t + 1 < episode.size(); ++t) {
    std::vector<double> input;
    if (model.input_mode == InverseInput::flow) {
      input = flatten_flow(block_match_flow(episode[t], episode[t + 1],
                                            cfg.flow_block, cfg.flow_search_radius));
    } else {
      input = flatten_frame_pair(episode[t], episode[t + 1]);
    }
    last = model.predict(input);
    ActionLabel l;
    l.episode_id = episode[t].episode_id;
    l.time_index = episode[t].time_index;
    l.steering = float(last);
    l.source = LabelSource::pseudo;
    out.push_back(l);
  }
  ActionLabel l;
  l.episode_id = episode.back().episode_id;
  l.time_index = episode.back().time_index;
  l.steering = float(last);  // final frame duplicates the penultimate label
  l.source = LabelSource::pseudo;
  out.push_back(l);
  return out;
}

}  // namespace aco::flow
