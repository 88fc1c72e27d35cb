#ifndef SENET_MODEL_HPP
#define SENET_MODEL_HPP

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "senet/autodiff.hpp"
#include "senet/record.hpp"

namespace senet::model {

struct ModelConfig {
  int stem_filters = 64;
  int stem_kernel = 15;
  int block_kernel = 7;
  int num_blocks = 8;
  std::vector<int> channel_plan{64, 64, 128, 128, 256, 256, 512, 512};
  std::vector<int> downsample_blocks{4, 6, 8};  // 1-based, stride 2 inside these
  int se_reduction = 16;
  double dropout_rate = 0.2;
  int demographic_dim = 10;
  int num_classes = 24;
  double width_scale = 1.0;  // desk-scale tests shrink the channel counts

  int scaled_stem() const;
  int scaled_channels(int block_index) const;  // 0-based
  int feature_dim() const;                     // channels after the last block
  int fused_dim() const { return feature_dim() + demographic_dim; }
  bool downsamples(int block_index) const;     // 0-based
  void validate() const;                       // throws InvalidConfig

  // Small two-block variant used by gradient-check style tests.
  static ModelConfig tiny(double width_scale = 0.125, int se_reduction = 4);
};

struct BlockParams {
  ad::TensorPtr conv1_w, conv1_b, bn1_gamma, bn1_beta, bn1_mean, bn1_var;
  ad::TensorPtr conv2_w, conv2_b, bn2_gamma, bn2_beta, bn2_mean, bn2_var;
  ad::TensorPtr se_w1, se_w2;  // (C/r x C) and (C x C/r), no biases
  // 1x1 conv + BN shortcut, only when shape or stride changes
  ad::TensorPtr proj_w, proj_b, proj_gamma, proj_beta, proj_mean, proj_var;

  bool has_projection() const { return proj_w != nullptr; }
};

struct ModelParams {
  ModelConfig config;
  ad::TensorPtr stem_w, stem_b, stem_gamma, stem_beta, stem_mean, stem_var;
  std::vector<BlockParams> blocks;
  ad::TensorPtr fc_w, fc_b;

  std::vector<std::pair<std::string, ad::TensorPtr>> named_learnable() const;
  std::vector<std::pair<std::string, ad::TensorPtr>> named_buffers() const;
  std::vector<ad::TensorPtr> learnable() const;
  std::size_t parameter_count() const;  // learnable values only
  void set_requires_grad(bool value);
  void zero_grad();
};

// He-normal conv/dense weights (std = sqrt(2/fan_in)), unit BN gamma, zero
// biases/beta, running stats (0,1). Bit-deterministic under the seed.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

// Collects per-block gate vectors when passed to a forward call.
struct ForwardProbe {
  std::vector<ad::TensorPtr> se_gates;  // one (B,C) tensor per block
};

// x: (B,C,T) -> same shape, channels rescaled by the learned gate
// s = sigmoid(w2 * relu(w1 * avgpool(x))).
ad::TensorPtr se_block(ad::Tape* tape, const ad::TensorPtr& x,
                       const ad::TensorPtr& w1, const ad::TensorPtr& w2,
                       ad::TensorPtr* gate_out = nullptr);

// conv(K,stride)-BN-ReLU-dropout-conv(K,1)-BN-SE plus identity or projected
// shortcut, joined by the final ReLU.
ad::TensorPtr res_block(ad::Tape* tape, const ad::TensorPtr& x, const BlockParams& bp,
                        int stride, ad::Mode mode, double dropout_rate,
                        std::mt19937_64* rng, bool se_bypass = false,
                        ForwardProbe* probe = nullptr);

// (B,12,4096) -> (B,feature_dim) through stem, max-pool, block stack and
// global average pooling.
ad::TensorPtr feature_extractor(ad::Tape* tape, const ModelParams& params,
                                const ad::TensorPtr& signal, ad::Mode mode,
                                std::mt19937_64* rng, bool se_bypass = false,
                                ForwardProbe* probe = nullptr);

struct ForwardResult {
  ad::TensorPtr logits;         // (B,24), on the tape
  ad::TensorPtr probabilities;  // (B,24), detached sigmoid of the logits
};

ForwardResult forward(ad::Tape* tape, const ModelParams& params,
                      const ad::TensorPtr& signal, const ad::TensorPtr& demographics,
                      ad::Mode mode, std::mt19937_64* rng, bool se_bypass = false,
                      ForwardProbe* probe = nullptr);

struct Checkpoint {
  ModelParams params;
  std::vector<std::string> class_names;
  std::size_t normal_index = 0;
};

// Self-describing container: magic "SENET1", version, config, class names
// and named 64-bit little-endian arrays including BN running stats.
void save_checkpoint(const ModelParams& params,
                     const std::vector<std::string>& class_names,
                     std::size_t normal_index, const std::filesystem::path& file);
Checkpoint load_checkpoint(const std::filesystem::path& file);

}  // namespace senet::model

#endif  // SENET_MODEL_HPP
