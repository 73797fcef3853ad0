#include "iplforge/transducer.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "iplforge/error.hpp"
#include "iplforge/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace iplforge {

namespace {

constexpr char kMagic[7] = {'T', 'D', 'C', 'K', 'P', 'T', '1'};

bool is_bias(const std::string& name) {
  const auto dot = name.rfind('.');
  const std::string leaf = name.substr(dot + 1);
  return leaf == "b" || leaf == "bo";
}

std::vector<ParamBlock> make_blocks(const ArchConfig& arch) {
  const auto f = static_cast<std::size_t>(arch.feature_dim);
  const auto e = static_cast<std::size_t>(arch.encoder_dim);
  const auto h = static_cast<std::size_t>(arch.label_dim);
  const auto j = static_cast<std::size_t>(arch.joiner_dim);
  const auto v1 = static_cast<std::size_t>(arch.vocab_size) + 1;
  std::vector<ParamBlock> blocks;
  auto add = [&](const std::string& name, std::size_t rows, std::size_t cols,
                 std::size_t fan_in) {
    blocks.push_back({name, rows, cols, fan_in,
                      std::vector<double>(rows * cols, 0.0)});
  };
  add("enc.conv1.w", f, 3 * f, 3 * f);
  add("enc.conv1.b", f, 1, 3 * f);
  add("enc.conv2.w", f, 3 * f, 3 * f);
  add("enc.conv2.b", f, 1, 3 * f);
  add("enc.attn.wq", f, f, f);
  add("enc.attn.wk", f, f, f);
  add("enc.attn.wv", f, f, f);
  add("enc.proj.w", e, f, f);
  add("enc.proj.b", e, 1, f);
  add("lbl.embed", v1, h, v1);
  add("lbl.rec.wx", h, h, h);
  add("lbl.rec.wh", h, h, h);
  add("lbl.rec.b", h, 1, h);
  add("join.we", j, e, e);
  add("join.wl", j, h, h);
  add("join.b", j, 1, j);
  add("join.wo", v1, j, j);
  add("join.bo", v1, 1, j);
  return blocks;
}

// y = x + tanh(W [x_{t-1}; x_t; x_{t+1}] + b), zero padding at the edges.
Mat conv_block(const Mat& x, const ParamBlock& w, const ParamBlock& b) {
  const std::size_t f = x.cols;
  Mat out(x.rows, f);
  for (std::size_t t = 0; t < x.rows; ++t) {
    for (std::size_t r = 0; r < f; ++r) {
      double acc = b.values[r];
      for (int off = -1; off <= 1; ++off) {
        const auto src = static_cast<long long>(t) + off;
        if (src < 0 || src >= static_cast<long long>(x.rows)) continue;
        const std::size_t base = static_cast<std::size_t>(off + 1) * f;
        for (std::size_t c = 0; c < f; ++c) {
          acc += w.at(r, base + c) * x.at(static_cast<std::size_t>(src), c);
        }
      }
      out.at(t, r) = x.at(t, r) + std::tanh(acc);
    }
  }
  return out;
}

// out[t,:] = M rows applied to x[t,:], i.e. out = x * M^T.
Mat apply_rows(const Mat& x, const ParamBlock& m) {
  Mat out(x.rows, m.rows);
  for (std::size_t t = 0; t < x.rows; ++t) {
    for (std::size_t r = 0; r < m.rows; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < m.cols; ++c) acc += m.at(r, c) * x.at(t, c);
      out.at(t, r) = acc;
    }
  }
  return out;
}

void append_bytes(std::string& buf, const void* src, std::size_t n) {
  buf.append(static_cast<const char*>(src), n);
}

void append_u32(std::string& buf, std::uint32_t v) {
  append_bytes(buf, &v, sizeof v);
}
void append_u64(std::string& buf, std::uint64_t v) {
  append_bytes(buf, &v, sizeof v);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void take(void* dst, std::size_t n) {
    if (pos + n > buf.size()) throw ModelError("truncated checkpoint");
    std::memcpy(dst, buf.data() + pos, n);
    pos += n;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    take(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    take(&v, sizeof v);
    return v;
  }
};

std::uint64_t crc64(const std::string& data) {
  // CRC-64/ECMA-182: polynomial 0x42F0E1EB9A69A4B5, no reflection, init 0.
  static const auto table = [] {
    std::array<std::uint64_t, 256> t{};
    for (std::uint64_t i = 0; i < 256; ++i) {
      std::uint64_t crc = i << 56;
      for (int bit = 0; bit < 8; ++bit) {
        crc = (crc << 1) ^ ((crc >> 63) ? 0x42F0E1EB9A69A4B5ULL : 0);
      }
      t[i] = crc;
    }
    return t;
  }();
  std::uint64_t crc = 0;
  for (unsigned char byte : data) {
    crc = table[(crc >> 56) ^ byte] ^ (crc << 8);
  }
  return crc;
}

}  // namespace

void ArchConfig::validate() const {
  if (feature_dim < 1 || encoder_dim < 1 || label_dim < 1 || joiner_dim < 1) {
    throw ModelError("architecture dims must be at least 1");
  }
  if (vocab_size < 1) throw ModelError("vocab_size must be at least 1");
  if (downsample_factor < 1) {
    throw ModelError("downsample_factor must be at least 1");
  }
}

ParamBlock& Model::block(const std::string& name) {
  for (auto& b : blocks) {
    if (b.name == name) return b;
  }
  throw ModelError("unknown parameter block: " + name);
}

const ParamBlock& Model::block(const std::string& name) const {
  for (const auto& b : blocks) {
    if (b.name == name) return b;
  }
  throw ModelError("unknown parameter block: " + name);
}

std::size_t Model::param_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.count();
  return n;
}

bool Model::finite() const {
  for (const auto& b : blocks) {
    for (double v : b.values) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

Model zeros_like(const Model& model) {
  Model out;
  out.arch = model.arch;
  out.blocks = model.blocks;
  for (auto& b : out.blocks) std::fill(b.values.begin(), b.values.end(), 0.0);
  return out;
}

double global_norm(const Model& grads) {
  double total = 0.0;
  for (const auto& b : grads.blocks) {
    for (double v : b.values) total += v * v;
  }
  return std::sqrt(total);
}

Model init_model(const ArchConfig& arch, std::uint64_t seed) {
  arch.validate();
  Model model;
  model.arch = arch;
  model.blocks = make_blocks(arch);
  for (auto& block : model.blocks) {
    if (is_bias(block.name)) continue;
    Rng rng(derive_seed(seed, "init:" + block.name, 0));
    const double s = 1.0 / std::sqrt(static_cast<double>(block.fan_in));
    for (double& v : block.values) v = rng.uniform(-s, s);
  }
  return model;
}

namespace {

// Runs the encoder half (downsample, conv blocks, attention, projection) and
// fills the corresponding trace fields.
void encoder_forward(const Model& model, const Features& features,
                     ForwardTrace& trace) {
  const ArchConfig& arch = model.arch;
  arch.validate();
  if (features.dim != arch.feature_dim) {
    throw ModelError("feature dim " + std::to_string(features.dim) +
                     " does not match model feature_dim " +
                     std::to_string(arch.feature_dim));
  }
  if (features.frames < arch.downsample_factor) {
    throw ModelError("utterance shorter than one downsample group");
  }

  const std::size_t f = static_cast<std::size_t>(arch.feature_dim);
  const int ds = arch.downsample_factor;
  const int tprime = (features.frames + ds - 1) / ds;
  trace.downsampled = Mat(static_cast<std::size_t>(tprime), f);
  for (int g = 0; g < tprime; ++g) {
    const int begin = g * ds;
    const int end = std::min(features.frames, begin + ds);
    for (std::size_t c = 0; c < f; ++c) {
      double acc = 0.0;
      for (int t = begin; t < end; ++t) acc += features.at(t, static_cast<int>(c));
      trace.downsampled.at(static_cast<std::size_t>(g), c) = acc / (end - begin);
    }
  }

  trace.conv1_out = conv_block(trace.downsampled, model.block("enc.conv1.w"),
                               model.block("enc.conv1.b"));
  trace.conv2_out = conv_block(trace.conv1_out, model.block("enc.conv2.w"),
                               model.block("enc.conv2.b"));

  if (arch.use_attention) {
    const Mat& x = trace.conv2_out;
    trace.attn_q = apply_rows(x, model.block("enc.attn.wq"));
    trace.attn_k = apply_rows(x, model.block("enc.attn.wk"));
    trace.attn_v = apply_rows(x, model.block("enc.attn.wv"));
    const double scale = 1.0 / std::sqrt(static_cast<double>(f));
    trace.attn_weights = Mat(x.rows, x.rows);
    for (std::size_t t = 0; t < x.rows; ++t) {
      double maxe = -std::numeric_limits<double>::infinity();
      for (std::size_t s = 0; s < x.rows; ++s) {
        double e = 0.0;
        for (std::size_t c = 0; c < f; ++c) {
          e += trace.attn_q.at(t, c) * trace.attn_k.at(s, c);
        }
        e *= scale;
        trace.attn_weights.at(t, s) = e;
        maxe = std::max(maxe, e);
      }
      double total = 0.0;
      for (std::size_t s = 0; s < x.rows; ++s) {
        double& w = trace.attn_weights.at(t, s);
        w = std::exp(w - maxe);
        total += w;
      }
      for (std::size_t s = 0; s < x.rows; ++s) {
        trace.attn_weights.at(t, s) /= total;
      }
    }
    trace.attn_out = Mat(x.rows, f);
    for (std::size_t t = 0; t < x.rows; ++t) {
      for (std::size_t c = 0; c < f; ++c) {
        double acc = x.at(t, c);
        for (std::size_t s = 0; s < x.rows; ++s) {
          acc += trace.attn_weights.at(t, s) * trace.attn_v.at(s, c);
        }
        trace.attn_out.at(t, c) = acc;
      }
    }
  } else {
    trace.attn_out = trace.conv2_out;
  }

  const ParamBlock& proj_w = model.block("enc.proj.w");
  const ParamBlock& proj_b = model.block("enc.proj.b");
  trace.encoded = apply_rows(trace.attn_out, proj_w);
  for (std::size_t t = 0; t < trace.encoded.rows; ++t) {
    for (std::size_t e = 0; e < trace.encoded.cols; ++e) {
      trace.encoded.at(t, e) += proj_b.values[e];
    }
  }
}

}  // namespace

ForwardTrace forward_trace(const Model& model, const Features& features,
                           const std::vector<int>& labels) {
  const ArchConfig& arch = model.arch;
  for (int id : labels) {
    if (id < 1 || id > arch.vocab_size) {
      throw ModelError("label id " + std::to_string(id) +
                       " out of range [1, " + std::to_string(arch.vocab_size) +
                       "]");
    }
  }
  ForwardTrace trace;
  encoder_forward(model, features, trace);
  const int tprime = static_cast<int>(trace.encoded.rows);

  // Label encoder: blank row is the start symbol, then one step per label.
  const std::size_t h = static_cast<std::size_t>(arch.label_dim);
  const std::size_t u_len = labels.size() + 1;
  const ParamBlock& embed = model.block("lbl.embed");
  const ParamBlock& wx = model.block("lbl.rec.wx");
  const ParamBlock& wh = model.block("lbl.rec.wh");
  const ParamBlock& rb = model.block("lbl.rec.b");
  trace.emb_ids.assign(1, 0);
  trace.emb_ids.insert(trace.emb_ids.end(), labels.begin(), labels.end());
  trace.emb_rows = Mat(u_len, h);
  trace.rec_state = Mat(u_len, h);
  std::vector<double> prev(h, 0.0);
  for (std::size_t u = 0; u < u_len; ++u) {
    const auto row = static_cast<std::size_t>(trace.emb_ids[u]);
    for (std::size_t c = 0; c < h; ++c) {
      trace.emb_rows.at(u, c) = embed.at(row, c);
    }
    for (std::size_t r = 0; r < h; ++r) {
      double acc = rb.values[r];
      for (std::size_t c = 0; c < h; ++c) {
        acc += wx.at(r, c) * trace.emb_rows.at(u, c) + wh.at(r, c) * prev[c];
      }
      trace.rec_state.at(u, r) = std::tanh(acc);
    }
    for (std::size_t c = 0; c < h; ++c) prev[c] = trace.rec_state.at(u, c);
  }

  const std::size_t jdim = static_cast<std::size_t>(arch.joiner_dim);
  const std::size_t v_len = static_cast<std::size_t>(arch.vocab_size) + 1;
  trace.joiner_enc = apply_rows(trace.encoded, model.block("join.we"));
  trace.joiner_lab = apply_rows(trace.rec_state, model.block("join.wl"));
  const ParamBlock& jb = model.block("join.b");
  const ParamBlock& wo = model.block("join.wo");
  const ParamBlock& bo = model.block("join.bo");

  trace.lattice.t_len = tprime;
  trace.lattice.u_len = static_cast<int>(u_len);
  trace.lattice.v_len = static_cast<int>(v_len);
  trace.lattice.z.assign(static_cast<std::size_t>(tprime) * u_len * v_len, 0.0);
  std::vector<double> act(jdim);
  for (int t = 0; t < tprime; ++t) {
    for (std::size_t u = 0; u < u_len; ++u) {
      for (std::size_t j = 0; j < jdim; ++j) {
        act[j] = std::tanh(trace.joiner_enc.at(static_cast<std::size_t>(t), j) +
                           trace.joiner_lab.at(u, j) + jb.values[j]);
      }
      for (std::size_t v = 0; v < v_len; ++v) {
        double acc = bo.values[v];
        for (std::size_t j = 0; j < jdim; ++j) acc += wo.at(v, j) * act[j];
        trace.lattice.at(t, static_cast<int>(u), static_cast<int>(v)) = acc;
      }
    }
  }
  return trace;
}

LogitLattice forward(const Model& model, const Features& features,
                     const std::vector<int>& labels) {
  return forward_trace(model, features, labels).lattice;
}

Mat encode_features(const Model& model, const Features& features) {
  ForwardTrace trace;
  encoder_forward(model, features, trace);
  return std::move(trace.encoded);
}

namespace {

LabelState recurrent_step(const Model& model, const std::vector<double>& prev,
                          int row_id) {
  const ParamBlock& embed = model.block("lbl.embed");
  const ParamBlock& wx = model.block("lbl.rec.wx");
  const ParamBlock& wh = model.block("lbl.rec.wh");
  const ParamBlock& rb = model.block("lbl.rec.b");
  const std::size_t h = wx.rows;
  const auto row = static_cast<std::size_t>(row_id);
  LabelState next;
  next.state.resize(h);
  for (std::size_t r = 0; r < h; ++r) {
    double acc = rb.values[r];
    for (std::size_t c = 0; c < h; ++c) {
      acc += wx.at(r, c) * embed.at(row, c) + wh.at(r, c) * prev[c];
    }
    next.state[r] = std::tanh(acc);
  }
  return next;
}

}  // namespace

LabelState label_start(const Model& model) {
  const std::vector<double> zero(
      static_cast<std::size_t>(model.arch.label_dim), 0.0);
  return recurrent_step(model, zero, 0);
}

LabelState label_step(const Model& model, const LabelState& prev,
                      int token_id) {
  if (token_id < 1 || token_id > model.arch.vocab_size) {
    throw ModelError("label id " + std::to_string(token_id) + " out of range");
  }
  return recurrent_step(model, prev.state, token_id);
}

std::vector<double> joiner_logits(const Model& model,
                                  std::span<const double> frame,
                                  const LabelState& state) {
  const ParamBlock& we = model.block("join.we");
  const ParamBlock& wl = model.block("join.wl");
  const ParamBlock& jb = model.block("join.b");
  const ParamBlock& wo = model.block("join.wo");
  const ParamBlock& bo = model.block("join.bo");
  const std::size_t jdim = we.rows;
  std::vector<double> act(jdim);
  for (std::size_t j = 0; j < jdim; ++j) {
    double acc = jb.values[j];
    for (std::size_t e = 0; e < we.cols; ++e) acc += we.at(j, e) * frame[e];
    for (std::size_t c = 0; c < wl.cols; ++c) {
      acc += wl.at(j, c) * state.state[c];
    }
    act[j] = std::tanh(acc);
  }
  std::vector<double> logits(wo.rows);
  for (std::size_t v = 0; v < wo.rows; ++v) {
    double acc = bo.values[v];
    for (std::size_t j = 0; j < jdim; ++j) acc += wo.at(v, j) * act[j];
    logits[v] = acc;
  }
  return logits;
}

Model warm_start(const Model& prior, int new_vocab_size, WarmStartMode mode,
                 std::uint64_t reinit_seed) {
  if (mode == WarmStartMode::kFull) {
    if (new_vocab_size != prior.arch.vocab_size) {
      throw ModelError("full warm start requires matching vocab size (have " +
                       std::to_string(prior.arch.vocab_size) + ", got " +
                       std::to_string(new_vocab_size) + ")");
    }
    return prior;
  }
  ArchConfig arch = prior.arch;
  arch.vocab_size = new_vocab_size;
  Model fresh = init_model(arch, reinit_seed);
  for (auto& block : fresh.blocks) {
    if (block.name.rfind("enc.", 0) == 0) {
      block.values = prior.block(block.name).values;
    }
  }
  return fresh;
}

void save_model(const std::filesystem::path& path, const Model& model) {
  model.arch.validate();
  std::string payload;
  append_u32(payload, static_cast<std::uint32_t>(model.arch.feature_dim));
  append_u32(payload, static_cast<std::uint32_t>(model.arch.encoder_dim));
  append_u32(payload, static_cast<std::uint32_t>(model.arch.label_dim));
  append_u32(payload, static_cast<std::uint32_t>(model.arch.joiner_dim));
  append_u32(payload, static_cast<std::uint32_t>(model.arch.vocab_size));
  append_u32(payload,
             static_cast<std::uint32_t>(model.arch.downsample_factor));
  payload.push_back(model.arch.use_attention ? 1 : 0);
  append_u32(payload, static_cast<std::uint32_t>(model.blocks.size()));
  for (const auto& block : model.blocks) {
    append_u32(payload, static_cast<std::uint32_t>(block.name.size()));
    append_bytes(payload, block.name.data(), block.name.size());
    append_u64(payload, block.count());
    append_bytes(payload, block.values.data(),
                 block.values.size() * sizeof(double));
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelError("cannot write checkpoint: " + path.string());
  out.write(kMagic, sizeof kMagic);
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  const std::uint64_t crc = crc64(payload);
  out.write(reinterpret_cast<const char*>(&crc), sizeof crc);
  if (!out.flush()) {
    throw ModelError("cannot write checkpoint: " + path.string());
  }
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open checkpoint: " + path.string());
  std::string raw((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  if (raw.size() < sizeof(kMagic) + sizeof(std::uint64_t) ||
      std::memcmp(raw.data(), kMagic, sizeof kMagic) != 0) {
    throw ModelError("not a checkpoint file: " + path.string());
  }
  const std::string payload =
      raw.substr(sizeof kMagic, raw.size() - sizeof kMagic - sizeof(std::uint64_t));
  std::uint64_t stored = 0;
  std::memcpy(&stored, raw.data() + raw.size() - sizeof stored, sizeof stored);
  if (crc64(payload) != stored) {
    throw ModelError("checkpoint CRC mismatch: " + path.string());
  }

  Reader reader{payload};
  ArchConfig arch;
  arch.feature_dim = static_cast<int>(reader.u32());
  arch.encoder_dim = static_cast<int>(reader.u32());
  arch.label_dim = static_cast<int>(reader.u32());
  arch.joiner_dim = static_cast<int>(reader.u32());
  arch.vocab_size = static_cast<int>(reader.u32());
  arch.downsample_factor = static_cast<int>(reader.u32());
  char flag = 0;
  reader.take(&flag, 1);
  arch.use_attention = flag != 0;
  arch.validate();

  Model model;
  model.arch = arch;
  model.blocks = make_blocks(arch);
  const std::uint32_t block_count = reader.u32();
  if (block_count != model.blocks.size()) {
    throw ModelError("checkpoint block count mismatch in " + path.string());
  }
  std::vector<bool> seen(model.blocks.size(), false);
  for (std::uint32_t i = 0; i < block_count; ++i) {
    const std::uint32_t name_len = reader.u32();
    std::string name(name_len, '\0');
    reader.take(name.data(), name_len);
    const std::uint64_t count = reader.u64();
    ParamBlock& block = model.block(name);
    if (count != block.count()) {
      throw ModelError("checkpoint block '" + name + "' has " +
                       std::to_string(count) + " values, expected " +
                       std::to_string(block.count()));
    }
    for (std::size_t b = 0; b < model.blocks.size(); ++b) {
      if (model.blocks[b].name == name) {
        if (seen[b]) throw ModelError("duplicate block '" + name + "'");
        seen[b] = true;
      }
    }
    reader.take(block.values.data(), count * sizeof(double));
  }
  if (reader.pos != payload.size()) {
    throw ModelError("trailing bytes in checkpoint: " + path.string());
  }
  if (!model.finite()) {
    throw ModelError("checkpoint contains non-finite parameters: " +
                     path.string());
  }
  return model;
}

}  // namespace iplforge
