#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "iplforge/features.hpp"
#include "iplforge/mat.hpp"

namespace iplforge {

struct ArchConfig {
  int feature_dim = 16;
  int encoder_dim = 32;
  int label_dim = 16;
  int joiner_dim = 32;
  int vocab_size = 1;  // label count, excluding blank
  int downsample_factor = 2;
  bool use_attention = true;

  void validate() const;
  bool operator==(const ArchConfig&) const = default;
};

// One named parameter tensor. Biases use cols = 1. The embedding block is
// stored one row per token; its fan-in for initialization is the token count
// (one-hot input width), so blocks carry fan_in explicitly.
struct ParamBlock {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t fan_in = 0;
  std::vector<double> values;

  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::size_t count() const { return rows * cols; }
};

// Parameters in a fixed block order (encoder, label encoder, joiner). The
// attention blocks exist even when use_attention is false so that gradient
// layouts do not depend on the flag; they simply stay untouched.
struct Model {
  ArchConfig arch;
  std::vector<ParamBlock> blocks;

  ParamBlock& block(const std::string& name);
  const ParamBlock& block(const std::string& name) const;
  std::size_t param_count() const;
  bool finite() const;
};

// Same shapes as `model`, all values zero. Used for gradients and optimizer
// moments.
Model zeros_like(const Model& model);

// sqrt of the sum of squares over every block.
double global_norm(const Model& grads);

Model init_model(const ArchConfig& arch, std::uint64_t seed);

// Joint network outputs for every (frame, label-prefix) pair. v = 0 is blank.
struct LogitLattice {
  int t_len = 0;  // T', downsampled frame count
  int u_len = 0;  // U + 1
  int v_len = 0;  // V + 1
  std::vector<double> z;

  double& at(int t, int u, int v) {
    return z[(static_cast<std::size_t>(t) * u_len + u) * v_len + v];
  }
  double at(int t, int u, int v) const {
    return z[(static_cast<std::size_t>(t) * u_len + u) * v_len + v];
  }
};

// Intermediate activations retained for the backward pass.
struct ForwardTrace {
  Mat downsampled;  // T' x F
  Mat conv1_out;    // T' x F, residual applied
  Mat conv2_out;    // T' x F
  Mat attn_weights; // T' x T' softmax rows (attention only)
  Mat attn_q, attn_k, attn_v;  // T' x F (attention only)
  Mat attn_out;     // T' x F, residual applied (= conv2_out when disabled)
  Mat encoded;      // T' x E
  Mat emb_rows;     // (U+1) x H, embedding inputs (blank row first)
  std::vector<int> emb_ids;
  Mat rec_state;    // (U+1) x H, label-encoder states g_u
  Mat joiner_enc;   // T' x J, W_e h_t
  Mat joiner_lab;   // (U+1) x J, W_l g_u
  LogitLattice lattice;
};

ForwardTrace forward_trace(const Model& model, const Features& features,
                           const std::vector<int>& labels);
LogitLattice forward(const Model& model, const Features& features,
                     const std::vector<int>& labels);

// Encoder half only: T' x E frame representations.
Mat encode_features(const Model& model, const Features& features);

// Incremental label-encoder interface for decoding: start() consumes the
// blank start symbol, step() one more token.
struct LabelState {
  std::vector<double> state;
};

LabelState label_start(const Model& model);
LabelState label_step(const Model& model, const LabelState& prev,
                      int token_id);

// Joint logits (length V+1) for one frame vector and one label state.
std::vector<double> joiner_logits(const Model& model,
                                  std::span<const double> frame,
                                  const LabelState& state);

// Exact negative log-likelihood of the label sequence under the lattice and
// its gradient w.r.t. the raw logits, both computed in log space.
struct LossResult {
  double nll = 0.0;
  LogitLattice grad;
};

LossResult transducer_loss(const LogitLattice& lattice,
                           const std::vector<int>& labels);

// Gradient of the scalar backed by lattice_grad w.r.t. every parameter.
Model backward(const Model& model, const ForwardTrace& trace,
               const std::vector<int>& labels,
               const LogitLattice& lattice_grad);
Model backward(const Model& model, const Features& features,
               const std::vector<int>& labels,
               const LogitLattice& lattice_grad);

enum class WarmStartMode { kFull, kEncoderOnly };

// kFull: deep copy (vocab must match). kEncoderOnly: encoder blocks copied
// bitwise, label encoder and joiner freshly initialized for the new vocab
// size using reinit_seed.
Model warm_start(const Model& prior, int new_vocab_size, WarmStartMode mode,
                 std::uint64_t reinit_seed);

void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path);

}  // namespace iplforge
