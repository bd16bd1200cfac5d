#pragma once

// Binary persistence: frame packs ("ACOF"), label files ("ACOL"),
// checkpoints ("ACOW"), plus the line-delimited metrics stream. All
// integers and floats little-endian; round-trips are bit-exact.

#include <cstdint>
#include <string>
#include <vector>

#include "aco/data.hpp"
#include "aco/numcore.hpp"

namespace aco::io {

inline constexpr uint32_t kFormatVersion = 1;

void write_frame_pack(const std::string& path, const std::vector<Frame>& frames);
std::vector<Frame> read_frame_pack(const std::string& path);

void write_label_file(const std::string& path, const std::vector<ActionLabel>& labels);
std::vector<ActionLabel> read_label_file(const std::string& path);

struct CheckpointTensor {
  std::string name;
  std::vector<int> dims;
  std::vector<float> data;
};

struct Checkpoint {
  std::vector<CheckpointTensor> tensors;  // names unique, order preserved

  void add(const std::string& name, const num::Tensor& t);  // f64 -> f32 cast
  void add_param_set(const std::string& prefix, const num::ParamSet& ps);
  // Provenance is stored as a tensor of byte values named "__meta__".
  void set_provenance(const std::string& mode, uint64_t config_digest, uint64_t seed);

  const CheckpointTensor* find(const std::string& name) const;
  const CheckpointTensor& require(const std::string& name) const;
  num::Tensor tensor(const std::string& name) const;  // f32 -> f64
  // ParamSet with the given prefix stripped; shape comes from the file.
  num::ParamSet param_set(const std::string& prefix) const;
  std::string provenance() const;  // "" when absent
  std::string provenance_field(const std::string& key) const;
};

void write_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint read_checkpoint(const std::string& path);

// Appends "step=<n> key=<name> value=<float>" lines; %.17g floats so two
// identical runs diff clean.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path);
  void record(int64_t step, const std::string& key, double value);

 private:
  std::string path_;
};

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

// Per-run-directory digest marker used for cross-stage config drift checks.
void write_digest(const std::string& dir, uint64_t digest);
void check_digest(const std::string& dir, uint64_t digest);  // config_mismatch

}  // namespace aco::io
