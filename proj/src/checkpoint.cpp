#include "srl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace srl {

void Checkpoint::put(const std::string& name, const NdArray& value) {
  for (auto& [n, v] : tensors)
    if (n == name) {
      v = value;
      return;
    }
  tensors.emplace_back(name, value);
}

const NdArray* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, v] : tensors)
    if (n == name) return &v;
  return nullptr;
}

const NdArray& Checkpoint::get(const std::string& name) const {
  if (const NdArray* v = find(name)) return *v;
  throw CheckpointError("checkpoint: missing tensor '" + name + "'");
}

namespace {

constexpr unsigned char kMagic[4] = {'S', 'R', 'L', 'F'};

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n)
      throw CheckpointError("checkpoint: truncated " + std::string(what) +
                            " at offset " + std::to_string(pos_));
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  /// A length field that must fit in the remaining bytes times `unit`.
  std::uint32_t length(const char* what, std::size_t unit) {
    const std::size_t at = pos_;
    const std::uint32_t n = u32(what);
    if (static_cast<std::uint64_t>(n) * unit > bytes_.size() - pos_)
      throw CheckpointError("checkpoint: corrupt " + std::string(what) + " " +
                            std::to_string(n) + " at offset " + std::to_string(at));
    return n;
  }

  std::span<const unsigned char> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, value] : ckpt.tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<std::uint32_t>(value.rank()));
    for (auto e : value.shape()) put_u32(out, static_cast<std::uint32_t>(e));
    for (double x : value.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const unsigned char> bytes) {
  Reader r(bytes);
  auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0)
    throw CheckpointError("checkpoint: bad magic, not an SRLF file");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint: version " + std::to_string(version) +
                          " not supported, expected version " +
                          std::to_string(kCheckpointVersion));
  // Each tensor takes at least 8 bytes.
  const std::uint32_t count = r.length("tensor count", 8);
  Checkpoint ckpt;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint32_t name_len = r.length("name length", 1);
    auto name = r.take(name_len, "name");
    const std::uint32_t rank = r.length("rank", 4);
    Shape shape;
    std::uint64_t size = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const std::size_t at = r.offset();
      const std::uint32_t e = r.u32("extent");
      size *= e;
      if (e == 0 || size * 4 > bytes.size())
        throw CheckpointError("checkpoint: corrupt extent " + std::to_string(e) +
                              " at offset " + std::to_string(at));
      shape.push_back(e);
    }
    auto raw = r.take(static_cast<std::size_t>(size) * 4, "tensor data");
    std::vector<double> values(static_cast<std::size_t>(size));
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::uint32_t w = 0;
      for (int b = 0; b < 4; ++b) w |= static_cast<std::uint32_t>(raw[4 * i + b]) << (8 * b);
      values[i] = static_cast<double>(std::bit_cast<float>(w));
    }
    ckpt.tensors.emplace_back(std::string(name.begin(), name.end()),
                              NdArray(std::move(shape), std::move(values)));
  }
  if (!r.done())
    throw CheckpointError("checkpoint: trailing bytes at offset " + std::to_string(r.offset()));
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

namespace {

void store(Checkpoint& ckpt, nn::ParameterRefs refs) {
  for (const auto& [name, p] : refs) ckpt.put(name, *p);
}

void restore(const Checkpoint& ckpt, nn::ParameterRefs refs) {
  for (const auto& [name, p] : refs) {
    const NdArray& v = ckpt.get(name);
    if (!v.same_shape(*p))
      throw CheckpointError("checkpoint: tensor '" + name + "' has shape " +
                            shape_to_string(v.shape()) + ", expected " +
                            shape_to_string(p->shape()));
    *p = v;
  }
}

std::size_t count_convs(const Checkpoint& ckpt, const std::string& prefix) {
  std::size_t n = 0;
  while (ckpt.find(prefix + std::to_string(n + 1) + ".kernel")) ++n;
  if (n == 0) throw CheckpointError("checkpoint: no " + prefix + "* tensors");
  return n;
}

bool flag(const Checkpoint& ckpt, const std::string& name) {
  const NdArray* v = ckpt.find(name);
  return v && v->size() == 1 && (*v)[0] != 0.0;
}

}  // namespace

Checkpoint to_checkpoint(const SeparatorModel& model,
                         const std::optional<TrainingMeta>& meta) {
  Checkpoint ckpt;
  SeparatorModel copy = model;
  store(ckpt, copy.parameters());
  ckpt.put("meta.log_compress", NdArray::scalar(model.config.log_compress ? 1.0 : 0.0));
  if (meta) {
    ckpt.put("meta.epoch", NdArray::scalar(static_cast<double>(meta->epoch)));
    ckpt.put("meta.best_val_mse", NdArray::scalar(meta->best_val_mse));
  }
  return ckpt;
}

Checkpoint to_checkpoint(const EncoderModel& model) {
  Checkpoint ckpt;
  EncoderModel copy = model;
  store(ckpt, copy.parameters());
  std::vector<double> strides(model.config.strides.begin(), model.config.strides.end());
  ckpt.put("meta.strides", NdArray::vector(strides));
  ckpt.put("meta.bins", NdArray::scalar(static_cast<double>(model.config.bins)));
  ckpt.put("meta.log_compress", NdArray::scalar(model.config.log_compress ? 1.0 : 0.0));
  return ckpt;
}

SeparatorModel separator_from_checkpoint(const Checkpoint& ckpt) {
  SeparatorConfig c;
  const std::size_t n = count_convs(ckpt, "sep.conv");
  c.channels.clear();
  for (std::size_t i = 1; i <= n; ++i) {
    const NdArray& k = ckpt.get("sep.conv" + std::to_string(i) + ".kernel");
    if (k.rank() != 4) throw CheckpointError("checkpoint: conv kernel must be rank 4");
    c.channels.push_back(k.dim(0));
    c.kernel = k.dim(2);
  }
  const NdArray& w_ih = ckpt.get("sep.lstm.w_ih");
  const NdArray& fc1 = ckpt.get("sep.fc1.weight");
  const NdArray& fc2 = ckpt.get("sep.fc2.weight");
  if (w_ih.rank() != 2 || fc1.rank() != 2 || fc2.rank() != 2)
    throw CheckpointError("checkpoint: separator weights must be matrices");
  c.bins = fc2.dim(0);
  c.fc_hidden = fc1.dim(0);
  c.lstm_hidden = fc1.dim(1);
  const std::size_t conv_features = c.channels.back() * c.bins;
  if (w_ih.dim(1) <= conv_features)
    throw CheckpointError("checkpoint: lstm input width inconsistent with conv output");
  c.dvector_dim = w_ih.dim(1) - conv_features;
  c.log_compress = flag(ckpt, "meta.log_compress");
  SeparatorModel m = SeparatorModel::create(c, 0);
  restore(ckpt, m.parameters());
  return m;
}

EncoderModel encoder_from_checkpoint(const Checkpoint& ckpt) {
  EncoderConfig c;
  const std::size_t n = count_convs(ckpt, "enc.conv");
  const NdArray& strides = ckpt.get("meta.strides");
  if (strides.size() != n)
    throw CheckpointError("checkpoint: " + std::to_string(strides.size()) +
                          " strides for " + std::to_string(n) + " convolutions");
  c.channels.clear();
  c.strides.clear();
  for (std::size_t i = 1; i <= n; ++i) {
    const NdArray& k = ckpt.get("enc.conv" + std::to_string(i) + ".kernel");
    if (k.rank() != 4) throw CheckpointError("checkpoint: conv kernel must be rank 4");
    c.channels.push_back(k.dim(0));
    c.strides.push_back(static_cast<std::size_t>(strides[i - 1]));
    c.kernel = k.dim(2);
  }
  c.hidden = ckpt.get("enc.fc1.weight").dim(0);
  c.embedding_dim = ckpt.get("enc.embedding.weight").dim(0);
  c.bins = static_cast<std::size_t>(ckpt.get("meta.bins").item());
  c.log_compress = flag(ckpt, "meta.log_compress");
  EncoderModel m = EncoderModel::create(c, 0);
  restore(ckpt, m.parameters());
  m.frozen = true;
  return m;
}

std::optional<TrainingMeta> training_meta(const Checkpoint& ckpt) {
  const NdArray* epoch = ckpt.find("meta.epoch");
  const NdArray* best = ckpt.find("meta.best_val_mse");
  if (!epoch || !best) return std::nullopt;
  return TrainingMeta{static_cast<std::size_t>(epoch->item()), best->item()};
}

}  // namespace srl
