#include "senet/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "senet/errors.hpp"
#include "senet/rng.hpp"

namespace senet::model {

namespace {

int scale_width(int channels, double width_scale) {
  return std::max(1, static_cast<int>(std::llround(channels * width_scale)));
}

}  // namespace

int ModelConfig::scaled_stem() const { return scale_width(stem_filters, width_scale); }

int ModelConfig::scaled_channels(int block_index) const {
  return scale_width(channel_plan.at(block_index), width_scale);
}

int ModelConfig::feature_dim() const { return scaled_channels(num_blocks - 1); }

bool ModelConfig::downsamples(int block_index) const {
  return std::find(downsample_blocks.begin(), downsample_blocks.end(),
                   block_index + 1) != downsample_blocks.end();
}

void ModelConfig::validate() const {
  if (num_blocks < 1) throw InvalidConfig("num_blocks must be >= 1");
  if (static_cast<int>(channel_plan.size()) != num_blocks)
    throw InvalidConfig("channel_plan length must equal num_blocks");
  if (stem_kernel < 1 || stem_kernel % 2 == 0 || block_kernel < 1 || block_kernel % 2 == 0)
    throw InvalidConfig("kernel sizes must be odd and positive");
  if (stem_filters < 1) throw InvalidConfig("stem_filters must be >= 1");
  if (width_scale <= 0.0) throw InvalidConfig("width_scale must be positive");
  if (se_reduction < 1) throw InvalidConfig("se_reduction must be >= 1");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw InvalidConfig("dropout_rate must be in [0,1)");
  if (demographic_dim < 0) throw InvalidConfig("demographic_dim must be >= 0");
  if (num_classes < 1) throw InvalidConfig("num_classes must be >= 1");

  // filters double every second block
  for (int i = 0; i < num_blocks; ++i) {
    const int expected = channel_plan[0] * (1 << (i / 2));
    if (channel_plan[i] != expected)
      throw InvalidConfig("channel_plan must double every second block (block " +
                          std::to_string(i + 1) + ")");
  }
  for (int b : downsample_blocks)
    if (b < 1 || b > num_blocks)
      throw InvalidConfig("downsample block index " + std::to_string(b) +
                          " outside [1,num_blocks]");
  for (int i = 0; i < num_blocks; ++i)
    if (scaled_channels(i) % se_reduction != 0)
      throw InvalidConfig("se_reduction must divide every scaled channel count; block " +
                          std::to_string(i + 1) + " has " +
                          std::to_string(scaled_channels(i)) + " channels");
}

ModelConfig ModelConfig::tiny(double width_scale, int se_reduction) {
  ModelConfig cfg;
  cfg.num_blocks = 2;
  cfg.channel_plan = {64, 64};
  cfg.downsample_blocks = {2};
  cfg.width_scale = width_scale;
  cfg.se_reduction = se_reduction;
  cfg.validate();
  return cfg;
}

// ---- parameters --------------------------------------------------------

namespace {

ad::TensorPtr make_param(std::vector<std::size_t> shape, double fill = 0.0) {
  auto t = ad::Tensor::create(std::move(shape), true);
  if (fill != 0.0) std::fill(t->data.begin(), t->data.end(), fill);
  return t;
}

ad::TensorPtr make_buffer(std::vector<std::size_t> shape, double fill) {
  auto t = ad::Tensor::create(std::move(shape), false);
  std::fill(t->data.begin(), t->data.end(), fill);
  return t;
}

void he_fill(const ad::TensorPtr& t, std::size_t fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (auto& v : t->data) v = dist(rng);
}

}  // namespace

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  auto rng = make_rng(seed);

  ModelParams p;
  p.config = config;
  const auto stem = static_cast<std::size_t>(config.scaled_stem());
  const auto stem_k = static_cast<std::size_t>(config.stem_kernel);

  p.stem_w = make_param({stem, kNumLeads, stem_k});
  he_fill(p.stem_w, kNumLeads * stem_k, rng);
  p.stem_b = make_param({stem});
  p.stem_gamma = make_param({stem}, 1.0);
  p.stem_beta = make_param({stem});
  p.stem_mean = make_buffer({stem}, 0.0);
  p.stem_var = make_buffer({stem}, 1.0);

  const auto k = static_cast<std::size_t>(config.block_kernel);
  std::size_t c_in = stem;
  for (int i = 0; i < config.num_blocks; ++i) {
    const auto c_out = static_cast<std::size_t>(config.scaled_channels(i));
    const bool stride2 = config.downsamples(i);
    const auto c_mid = c_out / static_cast<std::size_t>(config.se_reduction);

    BlockParams bp;
    bp.conv1_w = make_param({c_out, c_in, k});
    he_fill(bp.conv1_w, c_in * k, rng);
    bp.conv1_b = make_param({c_out});
    bp.bn1_gamma = make_param({c_out}, 1.0);
    bp.bn1_beta = make_param({c_out});
    bp.bn1_mean = make_buffer({c_out}, 0.0);
    bp.bn1_var = make_buffer({c_out}, 1.0);

    bp.conv2_w = make_param({c_out, c_out, k});
    he_fill(bp.conv2_w, c_out * k, rng);
    bp.conv2_b = make_param({c_out});
    bp.bn2_gamma = make_param({c_out}, 1.0);
    bp.bn2_beta = make_param({c_out});
    bp.bn2_mean = make_buffer({c_out}, 0.0);
    bp.bn2_var = make_buffer({c_out}, 1.0);

    bp.se_w1 = make_param({c_mid, c_out});
    he_fill(bp.se_w1, c_out, rng);
    bp.se_w2 = make_param({c_out, c_mid});
    he_fill(bp.se_w2, c_mid, rng);

    if (c_in != c_out || stride2) {
      bp.proj_w = make_param({c_out, c_in, 1});
      he_fill(bp.proj_w, c_in, rng);
      bp.proj_b = make_param({c_out});
      bp.proj_gamma = make_param({c_out}, 1.0);
      bp.proj_beta = make_param({c_out});
      bp.proj_mean = make_buffer({c_out}, 0.0);
      bp.proj_var = make_buffer({c_out}, 1.0);
    }
    p.blocks.push_back(std::move(bp));
    c_in = c_out;
  }

  const auto fused = static_cast<std::size_t>(config.fused_dim());
  const auto classes = static_cast<std::size_t>(config.num_classes);
  p.fc_w = make_param({classes, fused});
  he_fill(p.fc_w, fused, rng);
  p.fc_b = make_param({classes});
  return p;
}

std::vector<std::pair<std::string, ad::TensorPtr>> ModelParams::named_learnable() const {
  std::vector<std::pair<std::string, ad::TensorPtr>> out;
  out.emplace_back("stem.conv.w", stem_w);
  out.emplace_back("stem.conv.b", stem_b);
  out.emplace_back("stem.bn.gamma", stem_gamma);
  out.emplace_back("stem.bn.beta", stem_beta);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string prefix = "block" + std::to_string(i + 1) + ".";
    const auto& b = blocks[i];
    out.emplace_back(prefix + "conv1.w", b.conv1_w);
    out.emplace_back(prefix + "conv1.b", b.conv1_b);
    out.emplace_back(prefix + "bn1.gamma", b.bn1_gamma);
    out.emplace_back(prefix + "bn1.beta", b.bn1_beta);
    out.emplace_back(prefix + "conv2.w", b.conv2_w);
    out.emplace_back(prefix + "conv2.b", b.conv2_b);
    out.emplace_back(prefix + "bn2.gamma", b.bn2_gamma);
    out.emplace_back(prefix + "bn2.beta", b.bn2_beta);
    out.emplace_back(prefix + "se.w1", b.se_w1);
    out.emplace_back(prefix + "se.w2", b.se_w2);
    if (b.has_projection()) {
      out.emplace_back(prefix + "proj.conv.w", b.proj_w);
      out.emplace_back(prefix + "proj.conv.b", b.proj_b);
      out.emplace_back(prefix + "proj.bn.gamma", b.proj_gamma);
      out.emplace_back(prefix + "proj.bn.beta", b.proj_beta);
    }
  }
  out.emplace_back("fc.w", fc_w);
  out.emplace_back("fc.b", fc_b);
  return out;
}

std::vector<std::pair<std::string, ad::TensorPtr>> ModelParams::named_buffers() const {
  std::vector<std::pair<std::string, ad::TensorPtr>> out;
  out.emplace_back("stem.bn.running_mean", stem_mean);
  out.emplace_back("stem.bn.running_var", stem_var);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string prefix = "block" + std::to_string(i + 1) + ".";
    const auto& b = blocks[i];
    out.emplace_back(prefix + "bn1.running_mean", b.bn1_mean);
    out.emplace_back(prefix + "bn1.running_var", b.bn1_var);
    out.emplace_back(prefix + "bn2.running_mean", b.bn2_mean);
    out.emplace_back(prefix + "bn2.running_var", b.bn2_var);
    if (b.has_projection()) {
      out.emplace_back(prefix + "proj.bn.running_mean", b.proj_mean);
      out.emplace_back(prefix + "proj.bn.running_var", b.proj_var);
    }
  }
  return out;
}

std::vector<ad::TensorPtr> ModelParams::learnable() const {
  std::vector<ad::TensorPtr> out;
  for (auto& [name, t] : named_learnable()) out.push_back(t);
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (auto& [name, t] : named_learnable()) n += t->size();
  return n;
}

void ModelParams::set_requires_grad(bool value) {
  for (auto& [name, t] : named_learnable()) t->requires_grad = value;
}

void ModelParams::zero_grad() {
  for (auto& [name, t] : named_learnable()) t->zero_grad();
}

// ---- forward graph -----------------------------------------------------

ad::TensorPtr se_block(ad::Tape* tape, const ad::TensorPtr& x, const ad::TensorPtr& w1,
                       const ad::TensorPtr& w2, ad::TensorPtr* gate_out) {
  if (!x || x->ndim() != 3) throw ShapeMismatch("se_block: input must be (B,C,T)");
  const std::size_t c = x->dim(1);
  if (!w1 || w1->ndim() != 2 || w1->dim(1) != c)
    throw ShapeMismatch("se_block: w1 must be (C/r, C)");
  if (!w2 || w2->ndim() != 2 || w2->dim(0) != c || w2->dim(1) != w1->dim(0))
    throw ShapeMismatch("se_block: w2 must be (C, C/r)");

  auto z = ad::global_avg_pool(tape, x);                       // squeeze
  auto hidden = ad::relu(tape, ad::dense(tape, z, w1, nullptr));
  auto s = ad::sigmoid(tape, ad::dense(tape, hidden, w2, nullptr));  // gate
  if (gate_out) *gate_out = s;
  return ad::scale_channels(tape, x, s);
}

ad::TensorPtr res_block(ad::Tape* tape, const ad::TensorPtr& x, const BlockParams& bp,
                        int stride, ad::Mode mode, double dropout_rate,
                        std::mt19937_64* rng, bool se_bypass, ForwardProbe* probe) {
  if (stride != 1 && stride != 2) throw ShapeMismatch("res_block: stride must be 1 or 2");
  const std::size_t c_in = x->dim(1);
  const std::size_t c_out = bp.conv1_w->dim(0);
  const bool needs_projection = c_in != c_out || stride != 1;
  if (needs_projection != bp.has_projection())
    throw ShapeMismatch("res_block: projection parameters inconsistent with shapes");

  const std::size_t k = bp.conv1_w->dim(2);
  const std::size_t pad = (k - 1) / 2;

  auto h = ad::conv1d(tape, x, bp.conv1_w, bp.conv1_b, static_cast<std::size_t>(stride), pad);
  h = ad::batch_norm1d(tape, h, bp.bn1_gamma, bp.bn1_beta, bp.bn1_mean, bp.bn1_var, mode);
  h = ad::relu(tape, h);
  h = ad::dropout(tape, h, dropout_rate, mode, rng);
  h = ad::conv1d(tape, h, bp.conv2_w, bp.conv2_b, 1, pad);
  h = ad::batch_norm1d(tape, h, bp.bn2_gamma, bp.bn2_beta, bp.bn2_mean, bp.bn2_var, mode);
  if (!se_bypass) {
    ad::TensorPtr gate;
    h = se_block(tape, h, bp.se_w1, bp.se_w2, probe ? &gate : nullptr);
    if (probe) probe->se_gates.push_back(gate);
  }

  ad::TensorPtr shortcut = x;
  if (bp.has_projection()) {
    shortcut = ad::conv1d(tape, x, bp.proj_w, bp.proj_b, static_cast<std::size_t>(stride), 0);
    shortcut = ad::batch_norm1d(tape, shortcut, bp.proj_gamma, bp.proj_beta,
                                bp.proj_mean, bp.proj_var, mode);
  }
  return ad::relu(tape, ad::add(tape, h, shortcut));
}

ad::TensorPtr feature_extractor(ad::Tape* tape, const ModelParams& params,
                                const ad::TensorPtr& signal, ad::Mode mode,
                                std::mt19937_64* rng, bool se_bypass,
                                ForwardProbe* probe) {
  const auto& cfg = params.config;
  if (!signal || signal->ndim() != 3 || signal->dim(1) != kNumLeads)
    throw ShapeMismatch("feature_extractor: input must be (B,12,T)");

  const auto stem_pad = static_cast<std::size_t>((cfg.stem_kernel - 1) / 2);
  auto h = ad::conv1d(tape, signal, params.stem_w, params.stem_b, 1, stem_pad);
  h = ad::batch_norm1d(tape, h, params.stem_gamma, params.stem_beta, params.stem_mean,
                       params.stem_var, mode);
  h = ad::relu(tape, h);
  h = ad::max_pool1d(tape, h, 3, 2, 1);
  for (int i = 0; i < cfg.num_blocks; ++i)
    h = res_block(tape, h, params.blocks[static_cast<std::size_t>(i)],
                  cfg.downsamples(i) ? 2 : 1, mode, cfg.dropout_rate, rng, se_bypass,
                  probe);
  return ad::global_avg_pool(tape, h);
}

ForwardResult forward(ad::Tape* tape, const ModelParams& params,
                      const ad::TensorPtr& signal, const ad::TensorPtr& demographics,
                      ad::Mode mode, std::mt19937_64* rng, bool se_bypass,
                      ForwardProbe* probe) {
  if (!demographics || demographics->ndim() != 2 ||
      demographics->dim(1) != static_cast<std::size_t>(params.config.demographic_dim))
    throw ShapeMismatch("forward: demographics must be (B,demographic_dim)");
  auto features = feature_extractor(tape, params, signal, mode, rng, se_bypass, probe);
  auto fused = ad::concat_features(tape, features, demographics);
  auto logits = ad::dense(tape, fused, params.fc_w, params.fc_b);
  auto probabilities = ad::sigmoid(nullptr, logits);  // inference branch, off-tape
  return {logits, probabilities};
}

// ---- checkpoint io -----------------------------------------------------

namespace {

constexpr char kMagic[6] = {'S', 'E', 'N', 'E', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

void put_str(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw DataError("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw DataError("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

std::string get_str(std::istream& is) {
  const auto n = get_u32(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw DataError("checkpoint: truncated string");
  return s;
}

void put_i32(std::ostream& os, int v) { put_u32(os, static_cast<std::uint32_t>(v)); }
int get_i32(std::istream& is) { return static_cast<int>(get_u32(is)); }

}  // namespace

void save_checkpoint(const ModelParams& params,
                     const std::vector<std::string>& class_names,
                     std::size_t normal_index, const std::filesystem::path& file) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint: " + file.string());
  os.write(kMagic, sizeof(kMagic));
  put_u32(os, kVersion);

  const auto& cfg = params.config;
  put_i32(os, cfg.stem_filters);
  put_i32(os, cfg.stem_kernel);
  put_i32(os, cfg.block_kernel);
  put_i32(os, cfg.num_blocks);
  put_u32(os, static_cast<std::uint32_t>(cfg.channel_plan.size()));
  for (int c : cfg.channel_plan) put_i32(os, c);
  put_u32(os, static_cast<std::uint32_t>(cfg.downsample_blocks.size()));
  for (int b : cfg.downsample_blocks) put_i32(os, b);
  put_i32(os, cfg.se_reduction);
  put_f64(os, cfg.dropout_rate);
  put_i32(os, cfg.demographic_dim);
  put_i32(os, cfg.num_classes);
  put_f64(os, cfg.width_scale);

  put_u32(os, static_cast<std::uint32_t>(class_names.size()));
  for (const auto& n : class_names) put_str(os, n);
  put_u32(os, static_cast<std::uint32_t>(normal_index));

  auto tensors = params.named_learnable();
  for (auto& nb : params.named_buffers()) tensors.push_back(nb);
  put_u32(os, static_cast<std::uint32_t>(tensors.size()));
  for (auto& [name, t] : tensors) {
    put_str(os, name);
    put_u32(os, static_cast<std::uint32_t>(t->ndim()));
    for (auto d : t->shape) put_u64(os, d);
    for (double v : t->data) put_f64(os, v);
  }
  if (!os) throw DataError("checkpoint write failed: " + file.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + file.string());
  char magic[6];
  is.read(magic, 6);
  if (!is || std::memcmp(magic, kMagic, 6) != 0)
    throw DataError("not a model checkpoint (bad magic): " + file.string());
  if (get_u32(is) != kVersion)
    throw DataError("unsupported checkpoint version: " + file.string());

  ModelConfig cfg;
  cfg.stem_filters = get_i32(is);
  cfg.stem_kernel = get_i32(is);
  cfg.block_kernel = get_i32(is);
  cfg.num_blocks = get_i32(is);
  cfg.channel_plan.resize(get_u32(is));
  for (auto& c : cfg.channel_plan) c = get_i32(is);
  cfg.downsample_blocks.resize(get_u32(is));
  for (auto& b : cfg.downsample_blocks) b = get_i32(is);
  cfg.se_reduction = get_i32(is);
  cfg.dropout_rate = get_f64(is);
  cfg.demographic_dim = get_i32(is);
  cfg.num_classes = get_i32(is);
  cfg.width_scale = get_f64(is);

  Checkpoint ck;
  ck.class_names.resize(get_u32(is));
  for (auto& n : ck.class_names) n = get_str(is);
  ck.normal_index = get_u32(is);

  ck.params = init_params(cfg, 0);  // shapes only; contents overwritten below
  std::unordered_map<std::string, ad::TensorPtr> by_name;
  for (auto& [name, t] : ck.params.named_learnable()) by_name.emplace(name, t);
  for (auto& [name, t] : ck.params.named_buffers()) by_name.emplace(name, t);

  const auto count = get_u32(is);
  if (count != by_name.size())
    throw DataError("checkpoint tensor count mismatch: " + file.string());
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = get_str(is);
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw DataError("checkpoint has unexpected tensor '" + name + "'");
    auto& t = it->second;
    const auto ndim = get_u32(is);
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = static_cast<std::size_t>(get_u64(is));
    if (shape != t->shape)
      throw DataError("checkpoint tensor '" + name + "' has unexpected shape");
    for (auto& v : t->data) v = get_f64(is);
  }
  return ck;
}

}  // namespace senet::model
