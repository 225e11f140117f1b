#include "stpgn/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "stpgn/kv.hpp"

namespace stpgn {

// ================================================================== config

namespace {

void check_name(const std::string& name, const char* what) {
  if (name.empty() || name.find_first_of(" \t,;:=#") != std::string::npos)
    throw ConfigError(std::string(what) + " '" + name + "' is empty or contains a reserved character");
}

}  // namespace

void ModelConfig::validate() const {
  if (levels < 1 || levels > 3) throw ConfigError("levels must be 1, 2 or 3");
  if (input_channels == 0 || hidden_size == 0) throw ConfigError("input_channels and hidden_size must be positive");
  for (auto c : gcn_channels)
    if (c == 0) throw ConfigError("gcn channel widths must be positive");
  if (class_count < 2) throw ConfigError("class_count must be at least 2");
  if (!class_names.empty() && class_names.size() != class_count)
    throw ConfigError("class_names lists " + std::to_string(class_names.size()) + " names for " +
                      std::to_string(class_count) + " classes");
  for (const auto& n : class_names) check_name(n, "class name");
  if (fusion && (image_feature_dim == 0 || fusion_dim == 0))
    throw ConfigError("fusion requires image_feature_dim and fusion_dim > 0");
  skeleton.validate();
  for (const auto& n : skeleton.joint_names) check_name(n, "joint name");
  if (levels == 3 && parts.global_names.size() != 3)
    throw ConfigError("a 3-level pyramid needs exactly 3 global groups, got " +
                      std::to_string(parts.global_names.size()));
}

std::string ModelConfig::serialize() const {
  std::ostringstream os;
  os << "input_channels = " << input_channels << '\n';
  os << "gcn_channels = " << gcn_channels[0] << ',' << gcn_channels[1] << ',' << gcn_channels[2] << '\n';
  os << "hidden_size = " << hidden_size << '\n';
  os << "class_count = " << class_count << '\n';
  os << "levels = " << levels << '\n';
  os << "edge_importance = " << edge_importance << '\n';
  os << "input_norm = " << input_norm << '\n';
  os << "multi_loss = " << multi_loss << '\n';
  os << "fusion = " << fusion << '\n';
  os << "image_feature_dim = " << image_feature_dim << '\n';
  os << "fusion_dim = " << fusion_dim << '\n';
  os << "freeze_backbone = " << freeze_backbone << '\n';
  os << "seed = " << seed << '\n';
  os << "class_names = " << join(class_names, ",") << '\n';
  os << "joint_count = " << skeleton.joint_count << '\n';
  os << "joint_names = " << join(skeleton.joint_names, ",") << '\n';
  std::vector<std::string> edges;
  for (const auto& [a, b] : skeleton.edges) edges.push_back(std::to_string(a) + "-" + std::to_string(b));
  os << "edges = " << join(edges, ",") << '\n';
  os << "center_joint = " << skeleton.center_joint << '\n';
  os << "joint_parts = " << join(parts.joint_part, ",") << '\n';
  std::vector<std::string> pg;
  for (std::size_t i = 0; i < parts.part_names.size(); ++i) pg.push_back(parts.part_names[i] + ":" + parts.part_global[i]);
  os << "part_globals = " << join(pg, ",") << '\n';
  return os.str();
}

ModelConfig ModelConfig::parse(const std::string& text) {
  const KeyValues kv = KeyValues::parse(text, "model config");
  ModelConfig c;
  c.input_channels = kv.get_uint("input_channels", c.input_channels);
  if (kv.has("gcn_channels")) {
    auto w = kv.get_list("gcn_channels");
    if (w.size() != 3) throw ConfigError("gcn_channels needs 3 entries");
    for (std::size_t i = 0; i < 3; ++i) c.gcn_channels[i] = std::stoul(w[i]);
  }
  c.hidden_size = kv.get_uint("hidden_size", c.hidden_size);
  c.class_count = kv.get_uint("class_count", c.class_count);
  c.levels = kv.get_uint("levels", c.levels);
  c.edge_importance = kv.get_bool("edge_importance", c.edge_importance);
  c.input_norm = kv.get_bool("input_norm", c.input_norm);
  c.multi_loss = kv.get_bool("multi_loss", c.multi_loss);
  c.fusion = kv.get_bool("fusion", c.fusion);
  c.image_feature_dim = kv.get_uint("image_feature_dim", c.image_feature_dim);
  c.fusion_dim = kv.get_uint("fusion_dim", c.fusion_dim);
  c.freeze_backbone = kv.get_bool("freeze_backbone", c.freeze_backbone);
  c.seed = kv.get_uint("seed", c.seed);
  c.class_names = kv.get_list("class_names");
  if (kv.has("joint_count")) {
    graph::SkeletonTopology s;
    s.joint_count = kv.get_uint("joint_count", 0);
    s.joint_names = kv.get_list("joint_names");
    for (const auto& e : kv.get_list("edges")) {
      const auto ab = split(e, '-');
      if (ab.size() != 2) throw ConfigError("malformed edge '" + e + "'");
      s.edges.emplace_back(std::stoul(ab[0]), std::stoul(ab[1]));
    }
    s.center_joint = kv.get_uint("center_joint", 0);
    c.skeleton = std::move(s);
  }
  if (kv.has("joint_parts")) {
    std::ostringstream spec;
    const auto jp = kv.get_list("joint_parts");
    for (std::size_t j = 0; j < jp.size(); ++j) spec << "joint " << j << ' ' << jp[j] << '\n';
    for (const auto& pg : kv.get_list("part_globals")) {
      const auto ab = split(pg, ':');
      if (ab.size() != 2) throw ConfigError("malformed part_globals entry '" + pg + "'");
      spec << "part " << ab[0] << ' ' << ab[1] << '\n';
    }
    c.parts = graph::parse_part_spec(spec.str(), c.skeleton.joint_count);
  }
  c.validate();
  return c;
}

// ================================================================== model

PgnModel::PgnModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  hierarchy_ = graph::build_hierarchy(config_.skeleton, config_.parts);
  std::mt19937_64 rng(config_.seed);

  const std::size_t levels = config_.levels;
  const std::array<const graph::PartitionedAdjacency*, 3> adjacency{&hierarchy_.level1, &hierarchy_.level2,
                                                                    &hierarchy_.level3};
  const std::array<std::size_t, 3> nodes{hierarchy_.joints(), hierarchy_.part_count(), hierarchy_.global_count()};
  const std::size_t pyramid = config_.pyramid_channels();

  if (config_.input_norm) {
    Tensor norm = Tensor::matrix(2, config_.input_channels * nodes[0]);
    for (std::size_t i = 0; i < norm.cols(); ++i) norm(1, i) = 1.0;
    store_.add("input_norm", std::move(norm), false);
  }

  std::size_t in = config_.input_channels;
  for (std::size_t k = 0; k < levels; ++k) {
    gcn_.push_back(layers::make_gcn(store_, "gcn" + std::to_string(k), *adjacency[k], in, config_.gcn_channels[k],
                                    config_.edge_importance, rng));
    in = config_.gcn_channels[k];
  }
  if (levels > 1) gap_.emplace_back(hierarchy_.joint_to_part);
  if (levels > 2) gap_.emplace_back(hierarchy_.part_to_global);
  for (std::size_t k = 0; k + 1 < levels; ++k)
    lateral_.push_back(layers::make_lateral(store_, "lateral" + std::to_string(k), config_.gcn_channels[k], pyramid, rng));
  if (config_.fusion)
    fusion_ = layers::make_fusion(store_, "fusion", config_.image_feature_dim, nodes[0] * pyramid, config_.fusion_dim,
                                  rng);
  for (std::size_t k = 0; k < levels; ++k) {
    const std::size_t input = (k == 0 && config_.fusion) ? config_.fusion_dim : nodes[k] * pyramid;
    lstm_.push_back(layers::make_lstm(store_, "lstm" + std::to_string(k), input, config_.hidden_size, rng));
    classifier_.push_back(layers::make_linear(store_, "classifier" + std::to_string(k), config_.hidden_size,
                                              config_.class_count, rng));
  }

  if (config_.fusion && config_.freeze_backbone) {
    for (Parameter* p : store_.all()) {
      const bool keep = p->name.rfind("fusion.", 0) == 0 || p->name.rfind("lstm0.", 0) == 0 ||
                        p->name.rfind("classifier0.", 0) == 0;
      p->trainable = keep;
    }
  }
}

ForwardResult PgnModel::forward(Tape& tape, const Sample& sample) const {
  const std::size_t frames = sample.frames();
  const std::size_t joints = hierarchy_.joints();
  const Tensor& in = sample.input;
  if (in.rank() != 3 || in.dim(0) != config_.input_channels || in.dim(1) != joints || in.dim(2) != frames)
    throw ShapeError("forward: expected input " + std::to_string(config_.input_channels) + "x" +
                     std::to_string(joints) + "x" + std::to_string(frames) + ", got " + shape_string(in.shape()));
  if (config_.fusion) {
    if (!sample.image) throw std::invalid_argument("forward: fusion is enabled but the sample carries no image features");
    if (sample.image->rows() != frames || sample.image->cols() != config_.image_feature_dim)
      throw ShapeError("forward: image features " + shape_string(sample.image->shape()) + " do not match " +
                       std::to_string(frames) + " frames x " + std::to_string(config_.image_feature_dim));
  }

  ForwardResult out;
  const std::size_t levels = config_.levels;
  Tensor packed = layers::pack_channels_first(in, config_.input_channels, joints, frames);
  if (config_.input_norm) {
    const Tensor& norm = store_.get("input_norm").value;
    for (std::size_t c = 0; c < config_.input_channels; ++c)
      for (std::size_t j = 0; j < joints; ++j) {
        const std::size_t i = c * joints + j;
        for (std::size_t t = 0; t < frames; ++t) {
          double& v = packed(t * joints + j, c);
          v = (v - norm(0, i)) * norm(1, i);
        }
      }
  }
  layers::Features x{tape.constant(std::move(packed)), joints, frames};
  for (std::size_t k = 0; k < levels; ++k) {
    layers::Features f = layers::gcn_forward(tape, x, gcn_[k]);
    f.data = ops::relu(f.data);
    out.f.push_back(f);
    if (k + 1 < levels) x = layers::gap_forward(tape, f, gap_[k]);
  }

  out.z.resize(levels);
  out.z[levels - 1] = out.f[levels - 1];
  for (std::size_t k = levels - 1; k-- > 0;) {
    layers::Features p = layers::lateral_forward(tape, out.f[k], lateral_[k]);
    out.z[k] = layers::upsample_add(tape, p, out.z[k + 1], gap_[k].membership);
  }

  for (std::size_t k = 0; k < levels; ++k) {
    const layers::Features& z = out.z[k];
    Var seq = ops::reshape(z.data, {frames, z.nodes * z.channels()});
    if (k == 0 && fusion_) {
      out.fusion = layers::fusion_forward(tape, tape.constant(*sample.image), seq, *fusion_);
      seq = out.fusion->output;
    }
    Var hidden = layers::lstm_forward(tape, seq, lstm_[k]);
    out.logits.push_back(layers::linear_forward(tape, hidden, classifier_[k]));
  }
  return out;
}

std::vector<Tensor> PgnModel::infer_logits(const Sample& sample) const {
  Tape tape;
  tape.set_grad_enabled(false);
  ForwardResult r = forward(tape, sample);
  std::vector<Tensor> out;
  for (const auto& l : r.logits) out.push_back(l.value());
  return out;
}

namespace {

std::vector<double> normalised_weights(const std::vector<double>& mask) {
  double total = 0.0;
  for (double m : mask) total += m;
  std::vector<double> w(mask.size(), 0.0);
  if (total > 0.0)
    for (std::size_t i = 0; i < mask.size(); ++i) w[i] = mask[i] / total;
  return w;
}

}  // namespace

Var PgnModel::loss(Tape& tape, const ForwardResult& out, const Sample& sample, LossMode mode) const {
  if (sample.mask.size() != sample.labels.size()) throw ShapeError("loss: mask and label lengths differ");
  const std::vector<double> w = normalised_weights(sample.mask);
  const double inv_levels = 1.0 / static_cast<double>(out.logits.size());
  if (mode == LossMode::multi_loss) {
    Var total;
    for (const auto& logits : out.logits) {
      Var l = ops::softmax_cross_entropy(logits, sample.labels, w);
      total = total.valid() ? ops::add(total, l) : l;
    }
    return ops::scale(total, inv_levels);
  }
  Var probs;
  for (const auto& logits : out.logits) {
    Var p = ops::softmax_rows(logits);
    probs = probs.valid() ? ops::add(probs, p) : p;
  }
  (void)tape;
  return ops::nll_from_probs(ops::scale(probs, inv_levels), sample.labels, w);
}

double PgnModel::batch_gradients(const std::vector<const Sample*>& batch, Gradients& grads) const {
  if (batch.empty()) return 0.0;
  const auto count = static_cast<std::int64_t>(batch.size());
  int threads = 1;
#ifdef _OPENMP
  threads = std::max(1, std::min(omp_get_max_threads(), static_cast<int>(count)));
#endif
  std::vector<Gradients> partial(static_cast<std::size_t>(threads));
  std::vector<double> losses(batch.size(), 0.0);
  std::exception_ptr failure;
  const LossMode mode = loss_mode();

#pragma omp parallel num_threads(threads)
  {
    int tid = 0;
#ifdef _OPENMP
    tid = omp_get_thread_num();
#endif
#pragma omp for schedule(static)
    for (std::int64_t i = 0; i < count; ++i) {
      try {
        Tape tape;
        ForwardResult out = forward(tape, *batch[static_cast<std::size_t>(i)]);
        Var l = loss(tape, out, *batch[static_cast<std::size_t>(i)], mode);
        losses[static_cast<std::size_t>(i)] = l.value()[0];
        tape.backward(l, partial[static_cast<std::size_t>(tid)]);
      } catch (...) {
#pragma omp critical(stpgn_batch_failure)
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);

  Gradients merged;
  for (const auto& g : partial) merged.merge(g);
  const double inv = 1.0 / static_cast<double>(batch.size());
  merged.scale(inv);
  grads.merge(merged);
  double total = 0.0;
  for (double l : losses) total += l;
  return total * inv;
}

void PgnModel::project_constraints() {
  for (Parameter* p : store_.all())
    if (p->name.find(".importance") != std::string::npos)
      for (auto& v : p->value.values()) v = std::max(v, 0.0);
}

void PgnModel::fit_input_norm(const std::vector<const Sample*>& samples) {
  if (!config_.input_norm) return;
  const std::size_t channels = config_.input_channels, joints = hierarchy_.joints();
  std::vector<double> sum(channels * joints, 0.0), sq(channels * joints, 0.0);
  double count = 0.0;
  for (const Sample* s : samples) {
    for (std::size_t t = 0; t < s->frames(); ++t) {
      if (s->mask[t] == 0.0) continue;
      count += 1.0;
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t j = 0; j < joints; ++j) {
          const double v = s->input[(c * joints + j) * s->frames() + t];
          sum[c * joints + j] += v;
          sq[c * joints + j] += v * v;
        }
    }
  }
  Tensor& norm = store_.get("input_norm").value;
  if (count == 0.0) return;
  for (std::size_t i = 0; i < sum.size(); ++i) {
    const double mean = sum[i] / count;
    const double sd = std::sqrt(std::max(sq[i] / count - mean * mean, 0.0));
    norm(0, i) = mean;
    norm(1, i) = sd < 1e-6 ? 1.0 : 1.0 / sd;
  }
}

void PgnModel::copy_parameters_from(const PgnModel& other) {
  auto dst = store_.all();
  auto src = other.store_.all();
  if (dst.size() != src.size()) throw std::invalid_argument("copy_parameters_from: structure mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i]->name != src[i]->name || dst[i]->value.shape() != src[i]->value.shape())
      throw std::invalid_argument("copy_parameters_from: parameter '" + dst[i]->name + "' differs");
    dst[i]->value = src[i]->value;
  }
}

// ================================================================== predict / loss

Prediction predict(const std::vector<Tensor>& level_logits) {
  if (level_logits.empty()) throw std::invalid_argument("predict: no level outputs");
  const std::size_t frames = level_logits.front().rows(), classes = level_logits.front().cols();
  for (const auto& l : level_logits)
    if (l.rows() != frames || l.cols() != classes) throw ShapeError("predict: level outputs differ in shape");
  Prediction p;
  p.probabilities = Tensor::matrix(frames, classes);
  std::vector<double> row(classes);
  for (const auto& l : level_logits) {
    for (std::size_t t = 0; t < frames; ++t) {
      double mx = l(t, 0);
      for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, l(t, c));
      double z = 0.0;
      for (std::size_t c = 0; c < classes; ++c) z += (row[c] = std::exp(l(t, c) - mx));
      for (std::size_t c = 0; c < classes; ++c) p.probabilities(t, c) += row[c] / z;
    }
  }
  const double inv = 1.0 / static_cast<double>(level_logits.size());
  for (auto& v : p.probabilities.values()) v *= inv;
  p.labels.resize(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c)
      if (p.probabilities(t, c) > p.probabilities(t, best)) best = c;
    p.labels[t] = static_cast<int>(best);
  }
  return p;
}

double loss_value(const std::vector<Tensor>& level_logits, const std::vector<int>& labels,
                  const std::vector<double>& mask, LossMode mode) {
  Tape tape;
  ForwardResult r;
  for (const auto& l : level_logits) r.logits.push_back(tape.constant(l));
  const std::vector<double> w = normalised_weights(mask);
  const double inv_levels = 1.0 / static_cast<double>(level_logits.size());
  if (mode == LossMode::multi_loss) {
    double total = 0.0;
    for (const auto& l : r.logits) total += ops::softmax_cross_entropy(l, labels, w).value()[0];
    return total * inv_levels;
  }
  Var probs;
  for (const auto& l : r.logits) {
    Var p = ops::softmax_rows(l);
    probs = probs.valid() ? ops::add(probs, p) : p;
  }
  return ops::nll_from_probs(ops::scale(probs, inv_levels), labels, w).value()[0];
}

// ================================================================== checkpoint

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

constexpr char kMagic[8] = {'S', 'T', 'P', 'G', 'N', 'C', 'K', 'P'};

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out.insert(out.end(), p, p + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    u64(bits);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& data, std::size_t end) : data_(data), end_(end) {}
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw CheckpointError("checkpoint truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }

 private:
  const std::vector<std::uint8_t>& data_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

void compare_flag(const std::string& name, const std::string& stored, const std::string& wanted) {
  if (stored != wanted)
    throw CheckpointError("checkpoint flag '" + name + "' = " + stored + " but configuration requests " + wanted);
}

}  // namespace

std::vector<std::uint8_t> save_checkpoint(const PgnModel& model) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  const std::string config = model.config().serialize();
  w.u64(fnv1a64(config.data(), config.size()));
  w.u64(model.config().seed);
  w.str(config);
  const auto params = model.parameters().all();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    w.str(p->name);
    w.u32(static_cast<std::uint32_t>(p->value.rank()));
    for (auto d : p->value.shape()) w.u64(d);
    for (double v : p->value.values()) w.f64(v);
  }
  w.u64(fnv1a64(w.out.data(), w.out.size()));
  return std::move(w.out);
}

PgnModel load_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof kMagic + 4 + 8) throw CheckpointError("checkpoint truncated");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw CheckpointError("not a checkpoint (bad magic)");
  const std::size_t body = bytes.size() - 8;
  Reader tail(bytes, bytes.size());
  tail.skip(body);
  const std::uint64_t stored_sum = tail.u64();
  if (fnv1a64(bytes.data(), body) != stored_sum) throw CheckpointError("checkpoint checksum mismatch");

  Reader r(bytes, body);
  r.skip(sizeof kMagic);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  const std::uint64_t digest = r.u64();
  const std::uint64_t seed = r.u64();
  const std::string config_text = r.str();
  if (fnv1a64(config_text.data(), config_text.size()) != digest) throw CheckpointError("checkpoint config digest mismatch");
  ModelConfig config = ModelConfig::parse(config_text);
  if (config.seed != seed) throw CheckpointError("checkpoint seed disagrees with stored config");

  PgnModel model(std::move(config));
  auto params = model.parameters().all();
  const std::uint32_t count = r.u32();
  if (count != params.size())
    throw CheckpointError("checkpoint holds " + std::to_string(count) + " parameters, model has " +
                          std::to_string(params.size()));
  for (Parameter* p : params) {
    const std::string name = r.str();
    if (name != p->name) throw CheckpointError("checkpoint parameter '" + name + "' where '" + p->name + "' expected");
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    if (shape != p->value.shape())
      throw CheckpointError("checkpoint parameter '" + name + "' has shape " + shape_string(shape) + ", expected " +
                            shape_string(p->value.shape()));
    for (auto& v : p->value.values()) v = r.f64();
  }
  if (r.pos() != body) throw CheckpointError("trailing bytes in checkpoint");
  return model;
}

PgnModel load_checkpoint(const std::vector<std::uint8_t>& bytes, const ModelConfig& expected) {
  PgnModel model = load_checkpoint(bytes);
  const ModelConfig& s = model.config();
  auto b = [](bool v) { return std::string(v ? "1" : "0"); };
  compare_flag("levels", std::to_string(s.levels), std::to_string(expected.levels));
  compare_flag("edge_importance", b(s.edge_importance), b(expected.edge_importance));
  compare_flag("input_norm", b(s.input_norm), b(expected.input_norm));
  compare_flag("multi_loss", b(s.multi_loss), b(expected.multi_loss));
  compare_flag("fusion", b(s.fusion), b(expected.fusion));
  compare_flag("hidden_size", std::to_string(s.hidden_size), std::to_string(expected.hidden_size));
  compare_flag("class_count", std::to_string(s.class_count), std::to_string(expected.class_count));
  compare_flag("image_feature_dim", std::to_string(s.image_feature_dim), std::to_string(expected.image_feature_dim));
  compare_flag("joint_count", std::to_string(s.skeleton.joint_count), std::to_string(expected.skeleton.joint_count));
  for (std::size_t k = 0; k < 3; ++k)
    compare_flag("gcn_channels[" + std::to_string(k) + "]", std::to_string(s.gcn_channels[k]),
                 std::to_string(expected.gcn_channels[k]));
  return model;
}

void write_checkpoint_file(const std::string& path, const PgnModel& model) {
  const auto bytes = save_checkpoint(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

PgnModel read_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return load_checkpoint(bytes);
}

}  // namespace stpgn
